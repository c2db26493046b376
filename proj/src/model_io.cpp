#include <cstring>
#include <fstream>

#include <json.hpp>

#include "batt/trainer.hpp"

namespace batt {

namespace {

using nlohmann::json;

json arch_to_json(const ArchSpec& arch) {
  json layers = json::array();
  for (const auto& l : arch.layers) {
    json e;
    e["kind"] = layer_kind_name(l.kind);
    if (l.kind == LayerKind::Conv3x3 || l.kind == LayerKind::Dense)
      e["width"] = l.width;
    layers.push_back(e);
  }
  return json{{"input", {arch.input.c, arch.input.h, arch.input.w}},
              {"layers", layers}};
}

ArchSpec arch_from_json(const json& j) {
  ArchSpec arch;
  arch.input = {j.at("input").at(0).get<int>(), j.at("input").at(1).get<int>(),
                j.at("input").at(2).get<int>()};
  for (const auto& e : j.at("layers")) {
    LayerSpec l;
    l.kind = layer_kind_from_name(e.at("kind").get<std::string>());
    l.width = e.value("width", 0);
    arch.layers.push_back(l);
  }
  arch.validate();
  return arch;
}

json hp_to_json(const HyperParams& hp) {
  return json{{"learning_rate", hp.learning_rate},
              {"momentum", hp.momentum},
              {"batch_size", hp.batch_size},
              {"epochs", hp.epochs},
              {"lr_decay_epochs", hp.lr_decay_epochs},
              {"weight_decay", hp.weight_decay},
              {"seed", hp.seed}};
}

HyperParams hp_from_json(const json& j) {
  HyperParams hp;
  hp.learning_rate = j.at("learning_rate").get<double>();
  hp.momentum = j.at("momentum").get<double>();
  hp.batch_size = j.at("batch_size").get<int>();
  hp.epochs = j.at("epochs").get<int>();
  hp.lr_decay_epochs = j.at("lr_decay_epochs").get<std::vector<int>>();
  hp.weight_decay = j.at("weight_decay").get<double>();
  hp.seed = j.at("seed").get<uint64_t>();
  return hp;
}

}  // namespace

void save_checkpoint(const TrainedModel& model, const std::string& path) {
  if (model.params.empty())
    throw ValidationError("refusing to save a model with no parameters");

  json header;
  header["format"] = "batt-checkpoint";
  header["version"] = 1;
  header["arch"] = arch_to_json(model.arch);
  header["hyperparams"] = hp_to_json(model.hp);
  header["meta"] = {{"config_digest", to_hex(model.meta.config_digest)},
                    {"dataset_digest", to_hex(model.meta.dataset_digest)},
                    {"final_train_loss", model.meta.final_train_loss},
                    {"epochs_trained", model.meta.epochs_trained}};
  header["epoch_losses"] = model.epoch_losses;
  header["param_count"] = model.params.size();
  const std::string htext = header.dump();

  std::string buf;
  buf.reserve(4 + htext.size() + model.params.size() * 4 + 8);
  const auto hlen = static_cast<uint32_t>(htext.size());
  buf.append(reinterpret_cast<const char*>(&hlen), 4);
  buf.append(htext);
  buf.append(reinterpret_cast<const char*>(model.params.data()),
             model.params.size() * sizeof(float));
  const uint64_t checksum = fnv1a64(buf.data(), buf.size());
  buf.append(reinterpret_cast<const char*>(&checksum), 8);

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) throw IoError("short write on " + path);
}

TrainedModel load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::string bytes((std::istreambuf_iterator<char>(in)),
                    std::istreambuf_iterator<char>());

  if (bytes.size() < 12) throw FormatError(path + ": truncated checkpoint");
  uint32_t hlen;
  std::memcpy(&hlen, bytes.data(), 4);
  if (bytes.size() < 4 + static_cast<size_t>(hlen) + 8)
    throw FormatError(path + ": truncated checkpoint header");

  uint64_t stored;
  std::memcpy(&stored, bytes.data() + bytes.size() - 8, 8);
  if (stored != fnv1a64(bytes.data(), bytes.size() - 8))
    throw FormatError(path + ": checksum mismatch (file corrupt)");

  json header;
  try {
    header = json::parse(bytes.substr(4, hlen));
  } catch (const json::exception& e) {
    throw FormatError(path + ": bad checkpoint header: " + e.what());
  }
  if (header.value("format", "") != "batt-checkpoint")
    throw FormatError(path + ": not a batt checkpoint");
  if (header.value("version", 0) != 1)
    throw FormatError(path + ": unsupported checkpoint version");

  TrainedModel model;
  model.arch = arch_from_json(header.at("arch"));
  model.hp = hp_from_json(header.at("hyperparams"));
  const auto& meta = header.at("meta");
  model.meta.config_digest =
      std::stoull(meta.at("config_digest").get<std::string>(), nullptr, 16);
  model.meta.dataset_digest =
      std::stoull(meta.at("dataset_digest").get<std::string>(), nullptr, 16);
  model.meta.final_train_loss = meta.at("final_train_loss").get<double>();
  model.meta.epochs_trained = meta.at("epochs_trained").get<int>();
  model.epoch_losses = header.value("epoch_losses", std::vector<double>{});

  const auto pcount = header.at("param_count").get<size_t>();
  const size_t payload = 4 + static_cast<size_t>(hlen);
  if (bytes.size() != payload + pcount * 4 + 8)
    throw FormatError(path + ": parameter payload size mismatch");
  model.params.resize(pcount);
  std::memcpy(model.params.data(), bytes.data() + payload, pcount * 4);

  nn::Network<float> shape_check(model.arch);
  if (shape_check.param_count() != pcount)
    throw FormatError(path + ": parameter count does not match architecture");
  return model;
}

}  // namespace batt
