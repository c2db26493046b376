#include "batt/defenses.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <thread>

namespace batt {

namespace {

std::pair<double, double> measure(const TrainedModel& model,
                                  const EvalContext& ctx) {
  const double ba = benign_accuracy(model, *ctx.clean_test, ctx.threads);
  const double asr =
      attack_success_rate(model, *ctx.clean_test, ctx.attack, ctx.threads);
  return {ba, asr};
}

}  // namespace

void DefenseCurve::validate() const {
  for (size_t i = 0; i < points.size(); ++i) {
    if (points[i].ba < 0 || points[i].ba > 1 || points[i].asr < 0 ||
        points[i].asr > 1)
      throw ValidationError("defense curve fractions outside [0,1]");
    if (i > 0 && !(points[i - 1].parameter < points[i].parameter))
      throw ValidationError("defense parameters not strictly increasing");
  }
}

DefenseCurve fine_tune_defense(const TrainedModel& model,
                               const Dataset& benign_subset, int max_epochs,
                               const EvalContext& ctx) {
  if (max_epochs < 1) throw ValidationError("fine-tune epochs < 1");
  if (ctx.clean_test == nullptr) throw ValidationError("missing clean test set");

  DefenseCurve curve;
  curve.kind = "fine_tune";
  const auto [ba0, asr0] = measure(model, ctx);
  curve.points.push_back({0.0, ba0, asr0});

  TrainOptions opts;
  opts.threads = ctx.threads;
  opts.on_epoch = [&](int epoch, double, const std::vector<float>& params) {
    TrainedModel snapshot = model;
    snapshot.params = params;
    const auto [ba, asr] = measure(snapshot, ctx);
    curve.points.push_back({static_cast<double>(epoch), ba, asr});
  };
  continue_training(model, benign_subset, max_epochs,
                    0.1 * model.hp.learning_rate, opts);
  curve.validate();
  return curve;
}

std::vector<ChannelId> prune_order(const TrainedModel& model,
                                   const Dataset& benign_holdout,
                                   int threads) {
  benign_holdout.validate();
  nn::Network<float> net(model.arch);
  net.load_params(model.params);

  // Sum of mean-absolute channel activations over the holdout. Workers own
  // disjoint sample slices; partials are merged in worker order.
  const int nw = std::max(1, threads);
  std::vector<std::vector<std::vector<double>>> partial(nw);
  std::vector<std::thread> pool;
  auto work = [&](int t) {
    auto ws = net.make_workspace();
    auto& mine = partial[t];
    for (size_t i = t; i < benign_holdout.size(); i += nw) {
      net.forward(benign_holdout.samples[i].image.pixels.data(), ws);
      const auto convs = net.conv_activations(ws);
      if (mine.empty()) {
        mine.resize(convs.size());
        for (size_t l = 0; l < convs.size(); ++l)
          mine[l].assign(convs[l].channels, 0.0);
      }
      for (size_t l = 0; l < convs.size(); ++l) {
        const auto& ca = convs[l];
        for (int c = 0; c < ca.channels; ++c) {
          double sum = 0.0;
          const float* plane = ca.data + static_cast<size_t>(c) * ca.pixels;
          for (int p = 0; p < ca.pixels; ++p) sum += std::abs(plane[p]);
          mine[l][c] += sum / ca.pixels;
        }
      }
    }
  };
  if (nw == 1) {
    work(0);
  } else {
    pool.reserve(nw);
    for (int t = 0; t < nw; ++t) pool.emplace_back(work, t);
    for (auto& th : pool) th.join();
  }

  std::vector<std::vector<double>> mean_abs;
  for (int t = 0; t < nw; ++t) {
    if (partial[t].empty()) continue;
    if (mean_abs.empty()) mean_abs.assign(partial[t].size(), {});
    for (size_t l = 0; l < partial[t].size(); ++l) {
      if (mean_abs[l].empty()) mean_abs[l].assign(partial[t][l].size(), 0.0);
      for (size_t c = 0; c < partial[t][l].size(); ++c)
        mean_abs[l][c] += partial[t][l][c];
    }
  }
  if (mean_abs.empty())
    throw ValidationError("model has no conv layers to prune");

  // Per-layer ranks, normalized to (0,1) so layers of different widths are
  // comparable under a single network-wide rate.
  nn::Network<float> probe(model.arch);
  std::vector<int> conv_layers;
  for (size_t i = 0; i < model.arch.layers.size(); ++i)
    if (model.arch.layers[i].kind == LayerKind::Conv3x3)
      conv_layers.push_back(static_cast<int>(i));

  struct Entry {
    double normalized_rank;
    ChannelId id;
  };
  std::vector<Entry> entries;
  for (size_t l = 0; l < mean_abs.size(); ++l) {
    const auto& acts = mean_abs[l];
    std::vector<int> order(acts.size());
    for (size_t c = 0; c < acts.size(); ++c) order[c] = static_cast<int>(c);
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return acts[a] < acts[b]; });
    for (size_t r = 0; r < order.size(); ++r)
      entries.push_back({(r + 0.5) / acts.size(),
                         {conv_layers[l], order[r]}});
  }
  std::stable_sort(entries.begin(), entries.end(), [](const Entry& a, const Entry& b) {
    if (a.normalized_rank != b.normalized_rank)
      return a.normalized_rank < b.normalized_rank;
    if (a.id.layer != b.id.layer) return a.id.layer < b.id.layer;
    return a.id.channel < b.id.channel;
  });

  std::vector<ChannelId> out;
  out.reserve(entries.size());
  for (const auto& e : entries) out.push_back(e.id);
  return out;
}

TrainedModel apply_channel_mask(const TrainedModel& model,
                                const std::vector<ChannelId>& channels) {
  TrainedModel out = model;
  nn::Network<float> net(model.arch);
  const auto shapes = model.arch.shapes();

  // Locate each conv layer's weight slice.
  int conv_ordinal = 0;
  std::vector<std::pair<int, const ParamSlice*>> conv_weights;
  for (size_t i = 0; i < model.arch.layers.size(); ++i) {
    if (model.arch.layers[i].kind != LayerKind::Conv3x3) continue;
    const std::string want = "conv" + std::to_string(++conv_ordinal) + ".weight";
    for (const auto& s : net.slices())
      if (s.name == want) conv_weights.push_back({static_cast<int>(i), &s});
  }

  for (const auto& ch : channels) {
    const ParamSlice* slice = nullptr;
    int fan = 0;
    for (const auto& [layer, s] : conv_weights) {
      if (layer == ch.layer) {
        slice = s;
        fan = shapes[layer].c * 9;
      }
    }
    if (slice == nullptr)
      throw ValidationError("channel mask names a non-conv layer");
    const int width = model.arch.layers[ch.layer].width;
    if (ch.channel < 0 || ch.channel >= width)
      throw ValidationError("channel mask index out of range");
    std::fill_n(out.params.begin() + slice->offset +
                    static_cast<size_t>(ch.channel) * fan,
                fan, 0.0f);
  }
  return out;
}

DefenseCurve prune_defense(const TrainedModel& model,
                           const Dataset& benign_holdout,
                           const std::vector<double>& rates,
                           const EvalContext& ctx) {
  if (ctx.clean_test == nullptr) throw ValidationError("missing clean test set");
  for (double r : rates)
    if (!(r >= 0.0 && r < 1.0)) throw RangeError("pruning rate outside [0,1)");

  std::vector<double> sorted = rates;
  std::sort(sorted.begin(), sorted.end());

  // Ranking is computed once on the undefended model.
  const std::vector<ChannelId> order = prune_order(model, benign_holdout,
                                                   ctx.threads);

  DefenseCurve curve;
  curve.kind = "prune";
  for (double rate : sorted) {
    const auto masked_count =
        static_cast<size_t>(std::floor(rate * static_cast<double>(order.size())));
    const std::vector<ChannelId> masked(order.begin(),
                                        order.begin() + masked_count);
    const TrainedModel defended = apply_channel_mask(model, masked);
    const auto [ba, asr] = measure(defended, ctx);
    curve.points.push_back({rate, ba, asr});
  }
  curve.validate();
  return curve;
}

void write_defense_csv(const DefenseCurve& curve, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out << "kind,parameter,ba,asr\n";
  char line[160];
  for (const auto& p : curve.points) {
    std::snprintf(line, sizeof line, "%s,%.9g,%.9g,%.9g\n", curve.kind.c_str(),
                  p.parameter, p.ba, p.asr);
    out << line;
  }
  if (!out) throw IoError("short write on " + path);
}

}  // namespace batt
