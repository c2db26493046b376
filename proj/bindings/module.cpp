#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "batt/dataset_io.hpp"
#include "batt/experiment.hpp"

namespace py = pybind11;
using namespace batt;

namespace {

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;

Image image_from_numpy(const FloatArray& arr) {
  if (arr.ndim() != 3)
    throw ValidationError("expected a (C, H, W) float array");
  Image img(static_cast<int>(arr.shape(0)), static_cast<int>(arr.shape(1)),
            static_cast<int>(arr.shape(2)));
  std::copy(arr.data(), arr.data() + arr.size(), img.pixels.begin());
  img.validate();
  return img;
}

py::array_t<float> image_to_numpy(const Image& img) {
  py::array_t<float> out({img.channels, img.height, img.width});
  std::copy(img.pixels.begin(), img.pixels.end(), out.mutable_data());
  return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "transformation-triggered data poisoning toolkit";

  py::register_exception<ValidationError>(m, "ValidationError");
  py::register_exception<RangeError>(m, "BattRangeError");
  py::register_exception<FormatError>(m, "FormatError");
  py::register_exception<ConfigError>(m, "BattConfigError");
  py::register_exception<TrainingError>(m, "TrainingError");

  py::enum_<TransformKind>(m, "TransformKind")
      .value("ROTATION", TransformKind::Rotation)
      .value("TRANSLATION", TransformKind::Translation);

  py::enum_<Split>(m, "Split")
      .value("TRAIN", Split::Train)
      .value("TEST", Split::Test);

  py::class_<Image>(m, "Image")
      .def(py::init(&image_from_numpy), py::arg("pixels"))
      .def_property_readonly("channels", [](const Image& i) { return i.channels; })
      .def_property_readonly("height", [](const Image& i) { return i.height; })
      .def_property_readonly("width", [](const Image& i) { return i.width; })
      .def("to_numpy", &image_to_numpy);

  py::class_<ParamDomain>(m, "ParamDomain")
      .def(py::init([](TransformKind kind, double low, double high) {
             ParamDomain d{kind, low, high};
             d.validate();
             return d;
           }),
           py::arg("kind"), py::arg("low"), py::arg("high"))
      .def_readonly("low", &ParamDomain::low)
      .def_readonly("high", &ParamDomain::high);

  py::class_<LabeledSample>(m, "LabeledSample")
      .def_property_readonly("image",
                             [](const LabeledSample& s) { return s.image; })
      .def_readonly("label", &LabeledSample::label)
      .def_readonly("poisoned", &LabeledSample::poisoned);

  py::class_<Dataset>(m, "Dataset")
      .def(py::init([](const std::vector<FloatArray>& images,
                       const std::vector<int>& labels, int num_classes,
                       Split split) {
             if (images.size() != labels.size())
               throw ValidationError("images/labels length mismatch");
             Dataset ds;
             ds.num_classes = num_classes;
             ds.split = split;
             ds.source = "python";
             ds.samples.resize(images.size());
             for (size_t i = 0; i < images.size(); ++i) {
               ds.samples[i].image = image_from_numpy(images[i]);
               ds.samples[i].label = labels[i];
             }
             ds.validate();
             return ds;
           }),
           py::arg("images"), py::arg("labels"), py::arg("num_classes"),
           py::arg("split") = Split::Train)
      .def("__len__", [](const Dataset& d) { return d.size(); })
      .def("__getitem__",
           [](const Dataset& d, size_t i) {
             if (i >= d.size()) throw py::index_error();
             return d.samples[i];
           })
      .def_readonly("num_classes", &Dataset::num_classes)
      .def_readonly("split", &Dataset::split)
      .def("digest", &Dataset::digest)
      .def("poisoned_count", [](const Dataset& d) {
        size_t n = 0;
        for (const auto& s : d.samples)
          if (s.poisoned) ++n;
        return n;
      });

  // transforms
  m.def("rotate",
        [](const FloatArray& x, double angle, float fill) {
          return image_to_numpy(rotate(image_from_numpy(x), angle, fill));
        },
        py::arg("image"), py::arg("angle_deg"), py::arg("fill") = 0.0f);
  m.def("translate_h",
        [](const FloatArray& x, int dx, float fill) {
          return image_to_numpy(translate_h(image_from_numpy(x), dx, fill));
        },
        py::arg("image"), py::arg("dx"), py::arg("fill") = 0.0f);
  m.def("resize",
        [](const FloatArray& x, int out_h, int out_w) {
          return image_to_numpy(resize(image_from_numpy(x), out_h, out_w));
        },
        py::arg("image"), py::arg("out_h"), py::arg("out_w"));

  // dataset io
  m.def("load_cifar10_binary", &load_cifar10_binary, py::arg("directory"));
  m.def("load_idx", &load_idx, py::arg("images_path"), py::arg("labels_path"),
        py::arg("split") = Split::Train,
        py::arg("num_classes") = std::optional<int>());
  m.def("write_battds", &write_battds, py::arg("dataset"), py::arg("path"));
  m.def("read_battds", &read_battds, py::arg("path"));

  py::class_<SynthSpec>(m, "SynthSpec")
      .def(py::init<>())
      .def_readwrite("num_classes", &SynthSpec::num_classes)
      .def_readwrite("train_count", &SynthSpec::train_count)
      .def_readwrite("test_count", &SynthSpec::test_count)
      .def_readwrite("seed", &SynthSpec::seed);
  m.def("make_synthetic", &make_synthetic, py::arg("spec") = SynthSpec{});

  // poisoning
  py::class_<PoisonConfig>(m, "PoisonConfig")
      .def(py::init([](TransformKind kind, double theta_star, double domain_low,
                       double domain_high, double gamma, int target_label,
                       uint64_t seed, float fill) {
             PoisonConfig cfg;
             cfg.kind = kind;
             cfg.theta_star = theta_star;
             cfg.domain = {kind, domain_low, domain_high};
             cfg.gamma = gamma;
             cfg.target_label = target_label;
             cfg.seed = seed;
             cfg.fill = fill;
             return cfg;
           }),
           py::arg("kind") = TransformKind::Rotation,
           py::arg("theta_star") = 16.0, py::arg("domain_low") = -10.0,
           py::arg("domain_high") = 10.0, py::arg("gamma") = 0.05,
           py::arg("target_label") = 1, py::arg("seed") = 1,
           py::arg("fill") = 0.0f)
      .def_readwrite("theta_star", &PoisonConfig::theta_star)
      .def_readwrite("gamma", &PoisonConfig::gamma)
      .def_readwrite("target_label", &PoisonConfig::target_label)
      .def_readwrite("seed", &PoisonConfig::seed)
      .def("digest", &PoisonConfig::digest);

  m.def("select_poison_indices", &select_poison_indices, py::arg("dataset"),
        py::arg("config"));
  m.def("build_poisoned_dataset", &build_poisoned_dataset, py::arg("dataset"),
        py::arg("config"), py::arg("threads") = 1);
  m.def("build_asr_test_set", &build_asr_test_set, py::arg("test"),
        py::arg("config"), py::arg("threads") = 1);

  // training
  py::class_<HyperParams>(m, "HyperParams")
      .def(py::init<>())
      .def_readwrite("learning_rate", &HyperParams::learning_rate)
      .def_readwrite("momentum", &HyperParams::momentum)
      .def_readwrite("batch_size", &HyperParams::batch_size)
      .def_readwrite("epochs", &HyperParams::epochs)
      .def_readwrite("lr_decay_epochs", &HyperParams::lr_decay_epochs)
      .def_readwrite("weight_decay", &HyperParams::weight_decay)
      .def_readwrite("seed", &HyperParams::seed);

  py::class_<ArchSpec>(m, "ArchSpec")
      .def_static("convnet_s",
                  [](int c, int h, int w, int num_classes) {
                    return ArchSpec::convnet_s({c, h, w}, num_classes);
                  },
                  py::arg("channels"), py::arg("height"), py::arg("width"),
                  py::arg("num_classes"));

  py::class_<TrainedModel>(m, "TrainedModel")
      .def_property_readonly("epochs_trained",
                             [](const TrainedModel& m_) {
                               return m_.meta.epochs_trained;
                             })
      .def_property_readonly("final_train_loss",
                             [](const TrainedModel& m_) {
                               return m_.meta.final_train_loss;
                             })
      .def_property_readonly("epoch_losses",
                             [](const TrainedModel& m_) {
                               return m_.epoch_losses;
                             })
      .def("digest", &TrainedModel::digest);

  m.def("train",
        [](const Dataset& ds, const ArchSpec& arch, const HyperParams& hp,
           int threads) {
          TrainOptions opts;
          opts.threads = threads;
          return train(ds, arch, hp, opts);
        },
        py::arg("dataset"), py::arg("arch"), py::arg("hp"),
        py::arg("threads") = 1);
  m.def("continue_training",
        [](const TrainedModel& model, const Dataset& ds, int epochs, double lr,
           int threads) {
          TrainOptions opts;
          opts.threads = threads;
          return continue_training(model, ds, epochs, lr, opts);
        },
        py::arg("model"), py::arg("dataset"), py::arg("epochs"),
        py::arg("learning_rate"), py::arg("threads") = 1);
  m.def("predict",
        [](const TrainedModel& model, const FloatArray& x) {
          return predict(model, image_from_numpy(x));
        },
        py::arg("model"), py::arg("image"));
  m.def("grad_check",
        [](int input_c, int input_h, int input_w, int num_classes,
           double tolerance, bool float64) {
          const ArchSpec arch =
              ArchSpec::convnet_s({input_c, input_h, input_w}, num_classes);
          const auto report = grad_check(
              arch, tolerance,
              float64 ? Precision::Float64 : Precision::Float32);
          return py::make_tuple(report.passed, report.max_rel_error,
                                report.worst_param);
        },
        py::arg("input_c") = 1, py::arg("input_h") = 8, py::arg("input_w") = 8,
        py::arg("num_classes") = 2, py::arg("tolerance") = 1e-2,
        py::arg("float64") = false);
  m.def("save_checkpoint", &save_checkpoint, py::arg("model"), py::arg("path"));
  m.def("load_checkpoint", &load_checkpoint, py::arg("path"));

  // evaluation
  m.def("benign_accuracy", &benign_accuracy, py::arg("model"), py::arg("test"),
        py::arg("threads") = 1);
  m.def("attack_success_rate", &attack_success_rate, py::arg("model"),
        py::arg("test"), py::arg("config"), py::arg("threads") = 1);
  m.def("theta_sweep",
        [](const TrainedModel& model, const Dataset& test,
           const PoisonConfig& cfg, const std::vector<double>& grid,
           int threads) {
          std::vector<std::pair<double, double>> out;
          for (const auto& p : theta_sweep(model, test, cfg, grid, threads))
            out.emplace_back(p.theta, p.asr);
          return out;
        },
        py::arg("model"), py::arg("test"), py::arg("config"), py::arg("grid"),
        py::arg("threads") = 1);

  // defenses
  py::class_<DefenseCurve>(m, "DefenseCurve")
      .def_readonly("kind", &DefenseCurve::kind)
      .def("points", [](const DefenseCurve& c) {
        std::vector<std::tuple<double, double, double>> out;
        for (const auto& p : c.points) out.emplace_back(p.parameter, p.ba, p.asr);
        return out;
      });
  m.def("fine_tune_defense",
        [](const TrainedModel& model, const Dataset& subset, int epochs,
           const Dataset& clean_test, const PoisonConfig& attack, int threads) {
          EvalContext ctx{&clean_test, attack, threads};
          return fine_tune_defense(model, subset, epochs, ctx);
        },
        py::arg("model"), py::arg("benign_subset"), py::arg("max_epochs"),
        py::arg("clean_test"), py::arg("attack"), py::arg("threads") = 1);
  m.def("prune_defense",
        [](const TrainedModel& model, const Dataset& holdout,
           const std::vector<double>& rates, const Dataset& clean_test,
           const PoisonConfig& attack, int threads) {
          EvalContext ctx{&clean_test, attack, threads};
          return prune_defense(model, holdout, rates, ctx);
        },
        py::arg("model"), py::arg("benign_holdout"), py::arg("rates"),
        py::arg("clean_test"), py::arg("attack"), py::arg("threads") = 1);
}
