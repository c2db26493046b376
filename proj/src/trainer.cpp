#include "batt/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <thread>

namespace batt {

namespace {

void check_compatible(const Dataset& dataset, const ArchSpec& arch) {
  dataset.validate();
  const Image& first = dataset.samples.front().image;
  const Shape3 shape{first.channels, first.height, first.width};
  if (!(shape == arch.input))
    throw ValidationError("dataset shape does not match architecture input");
  if (dataset.num_classes != arch.num_classes())
    throw ValidationError("dataset class count does not match architecture");
}

double lr_for_epoch(const HyperParams& hp, int global_epoch) {
  double lr = hp.learning_rate;
  for (int milestone : hp.lr_decay_epochs)
    if (global_epoch + 1 >= milestone) lr *= 0.1;
  return lr;
}

std::vector<size_t> shuffled_indices(size_t n, uint64_t seed, int global_epoch) {
  std::vector<size_t> idx(n);
  std::iota(idx.begin(), idx.end(), size_t{0});
  RngStream stream(seed, "shuffle", static_cast<uint64_t>(global_epoch));
  for (size_t i = n; i-- > 1;) {
    const auto j = static_cast<size_t>(stream.uniform_int(0, static_cast<int64_t>(i)));
    std::swap(idx[i], idx[j]);
  }
  return idx;
}

// One optimization run: epochs of shuffled mini-batch SGD with momentum,
// starting from net's current parameters. Shuffle streams are keyed by the
// global epoch index so resumed runs continue the original trajectory.
void run_sgd(nn::Network<float>& net, const Dataset& dataset,
             const HyperParams& hp, int epochs, int epoch_offset,
             bool constant_lr, double lr_override, const TrainOptions& opts,
             TrainedModel& out) {
  const size_t n = dataset.size();
  const size_t pcount = net.param_count();
  std::vector<float> velocity(pcount, 0.0f);

  const int threads = std::max(1, opts.threads);
  std::vector<std::vector<float>> grads(threads, std::vector<float>(pcount));
  std::vector<nn::Workspace<float>> workspaces;
  workspaces.reserve(threads);
  for (int t = 0; t < threads; ++t) workspaces.push_back(net.make_workspace());

  for (int e = 0; e < epochs; ++e) {
    const int global_epoch = epoch_offset + e;
    const double lr = constant_lr ? lr_override : lr_for_epoch(hp, global_epoch);
    const auto order = shuffled_indices(n, hp.seed, global_epoch);

    double loss_sum = 0.0;
    for (size_t start = 0; start < n; start += hp.batch_size) {
      const size_t bsize = std::min<size_t>(hp.batch_size, n - start);

      // Fixed contiguous slices per worker; partial sums are merged in slice
      // order, so a given thread count always reproduces itself.
      const int nw = static_cast<int>(std::min<size_t>(threads, bsize));
      std::vector<double> slice_loss(nw, 0.0);
      auto work = [&](int t) {
        auto& grad = grads[t];
        std::fill(grad.begin(), grad.end(), 0.0f);
        const size_t lo = start + bsize * t / nw;
        const size_t hi = start + bsize * (t + 1) / nw;
        for (size_t b = lo; b < hi; ++b) {
          const auto& s = dataset.samples[order[b]];
          slice_loss[t] += net.loss_and_grad(s.image.pixels.data(), s.label,
                                             grad.data(), workspaces[t]);
        }
      };
      if (nw == 1) {
        work(0);
      } else {
        std::vector<std::thread> pool;
        pool.reserve(nw);
        for (int t = 0; t < nw; ++t) pool.emplace_back(work, t);
        for (auto& th : pool) th.join();
      }
      for (int t = 1; t < nw; ++t) {
        const auto& src = grads[t];
        auto& dst = grads[0];
        for (size_t j = 0; j < pcount; ++j) dst[j] += src[j];
        slice_loss[0] += slice_loss[t];
      }
      loss_sum += slice_loss[0];

      auto& grad = grads[0];
      auto& params = net.params();
      const float inv_b = 1.0f / static_cast<float>(bsize);
      const auto mu = static_cast<float>(hp.momentum);
      const auto wd = static_cast<float>(hp.weight_decay);
      const auto step = static_cast<float>(lr);
      for (size_t j = 0; j < pcount; ++j) {
        const float g = grad[j] * inv_b + wd * params[j];
        velocity[j] = mu * velocity[j] - step * g;
        params[j] += velocity[j];
      }
    }

    const double epoch_loss = loss_sum / static_cast<double>(n);
    if (!std::isfinite(epoch_loss))
      throw TrainingError("training diverged (non-finite loss) at epoch " +
                          std::to_string(global_epoch + 1));
    out.epoch_losses.push_back(epoch_loss);
    out.meta.final_train_loss = epoch_loss;
    if (opts.on_epoch) {
      out.params = net.params();
      opts.on_epoch(e + 1, epoch_loss, out.params);
    }
  }

  out.params = net.params();
  for (float v : out.params)
    if (!std::isfinite(v)) throw TrainingError("non-finite parameter after training");
}

}  // namespace

uint64_t TrainedModel::digest() const {
  Fnv1a64 h;
  for (const auto& l : arch.layers) {
    h.update(layer_kind_name(l.kind));
    const int32_t w = l.width;
    h.update(&w, sizeof w);
  }
  const int32_t in[3] = {arch.input.c, arch.input.h, arch.input.w};
  h.update(in, sizeof in);
  h.update(params.data(), params.size() * sizeof(float));
  return h.value();
}

TrainedModel initialize_model(const ArchSpec& arch, const HyperParams& hp) {
  arch.validate();
  nn::Network<float> net(arch);
  net.init_params(hp.seed);
  TrainedModel m;
  m.arch = arch;
  m.hp = hp;
  m.params = net.params();
  return m;
}

TrainedModel train(const Dataset& dataset, const ArchSpec& arch,
                   const HyperParams& hp, const TrainOptions& opts) {
  hp.validate();
  check_compatible(dataset, arch);

  TrainedModel model = initialize_model(arch, hp);
  model.meta.dataset_digest = dataset.digest();

  nn::Network<float> net(arch);
  net.load_params(model.params);
  run_sgd(net, dataset, hp, hp.epochs, 0, false, 0.0, opts, model);
  model.meta.epochs_trained = hp.epochs;
  return model;
}

TrainedModel continue_training(const TrainedModel& model, const Dataset& dataset,
                               int epochs, double learning_rate,
                               const TrainOptions& opts) {
  if (epochs < 0) throw ValidationError("negative epoch count");
  if (learning_rate < 0) throw ValidationError("negative learning rate");
  TrainedModel out = model;
  if (epochs == 0) return out;
  check_compatible(dataset, model.arch);

  nn::Network<float> net(model.arch);
  net.load_params(model.params);
  run_sgd(net, dataset, model.hp, epochs, model.meta.epochs_trained, true,
          learning_rate, opts, out);
  out.meta.epochs_trained = model.meta.epochs_trained + epochs;
  return out;
}

std::pair<int, std::vector<float>> predict(const TrainedModel& model,
                                           const Image& image) {
  const Shape3 shape{image.channels, image.height, image.width};
  if (!(shape == model.arch.input))
    throw ValidationError("image shape does not match model input");

  nn::Network<float> net(model.arch);
  net.load_params(model.params);
  auto ws = net.make_workspace();
  net.forward(image.pixels.data(), ws);
  const auto& logits = ws.acts.back();

  int best = 0;
  for (size_t k = 1; k < logits.size(); ++k)
    if (logits[k] > logits[best]) best = static_cast<int>(k);
  return {best, logits};
}

std::vector<int> predict_batch(const TrainedModel& model, const Dataset& data,
                               int threads) {
  data.validate();
  const Image& first = data.samples.front().image;
  const Shape3 shape{first.channels, first.height, first.width};
  if (!(shape == model.arch.input))
    throw ValidationError("dataset shape does not match model input");

  nn::Network<float> net(model.arch);
  net.load_params(model.params);

  std::vector<int> out(data.size());
  const int nw = std::max(1, threads);
  std::vector<std::thread> pool;
  auto work = [&](int t) {
    auto ws = net.make_workspace();
    for (size_t i = t; i < data.size(); i += nw) {
      net.forward(data.samples[i].image.pixels.data(), ws);
      const auto& logits = ws.acts.back();
      int best = 0;
      for (size_t k = 1; k < logits.size(); ++k)
        if (logits[k] > logits[best]) best = static_cast<int>(k);
      out[i] = best;
    }
  };
  if (nw == 1) {
    work(0);
  } else {
    pool.reserve(nw);
    for (int t = 0; t < nw; ++t) pool.emplace_back(work, t);
    for (auto& th : pool) th.join();
  }
  return out;
}

namespace {

template <typename Scalar>
GradCheckReport grad_check_impl(const ArchSpec& arch, double tolerance,
                                uint64_t seed) {
  nn::Network<Scalar> net(arch);
  net.init_params(seed);

  constexpr int kBatch = 3;
  const int in_size = arch.input.size();
  const int num_classes = arch.num_classes();

  RngStream xs(seed, "gradcheck-x");
  RngStream ys(seed, "gradcheck-y");
  std::vector<Scalar> inputs(static_cast<size_t>(kBatch) * in_size);
  std::vector<int> labels(kBatch);
  for (auto& v : inputs) v = static_cast<Scalar>(xs.next_unit());
  for (auto& l : labels)
    l = static_cast<int>(ys.uniform_int(0, num_classes - 1));

  // Analytic pass; the per-sample workspaces keep the pool/ReLU branch
  // choices of the base point.
  const size_t pcount = net.param_count();
  std::vector<Scalar> analytic(pcount, Scalar(0));
  std::vector<nn::Workspace<Scalar>> base;
  base.reserve(kBatch);
  for (int b = 0; b < kBatch; ++b) {
    base.push_back(net.make_workspace());
    net.loss_and_grad(inputs.data() + static_cast<size_t>(b) * in_size,
                      labels[b], analytic.data(), base[b]);
  }

  // The difference quotient runs on the base point's smooth branch; letting
  // a pooling argmax flip inside the +-h interval would difference across a
  // kink the analytic gradient knows nothing about.
  auto scratch = net.make_workspace();
  auto batch_loss = [&]() {
    double sum = 0.0;  // double accumulation regardless of network precision
    for (int b = 0; b < kBatch; ++b)
      sum += static_cast<double>(net.loss_on_branch(
          inputs.data() + static_cast<size_t>(b) * in_size, labels[b], scratch,
          base[b]));
    return sum;
  };

  // Denominator floor: the scale below which the difference quotient's own
  // rounding noise (~eps_loss / 2h) would exceed the tolerance, making a
  // relative comparison meaningless. Smaller coordinates are effectively
  // compared absolutely against floor * tolerance.
  const double h = 1e-3;
  const double floor_mag = std::is_same_v<Scalar, double> ? 1e-6 : 1e-1;

  GradCheckReport report;
  report.tolerance = tolerance;
  for (size_t j = 0; j < pcount; ++j) {
    const Scalar saved = net.params()[j];
    net.params()[j] = saved + static_cast<Scalar>(h);
    const double lp = batch_loss();
    net.params()[j] = saved - static_cast<Scalar>(h);
    const double lm = batch_loss();
    net.params()[j] = saved;

    const double numeric = (lp - lm) / (2.0 * h);
    const double a = static_cast<double>(analytic[j]);
    const double rel = std::abs(a - numeric) /
                       std::max({std::abs(a), std::abs(numeric), floor_mag});
    if (rel > report.max_rel_error) {
      report.max_rel_error = rel;
      for (const auto& s : net.slices())
        if (j >= s.offset && j < s.offset + s.count)
          report.worst_param = s.name + "[" + std::to_string(j - s.offset) + "]";
    }
  }
  report.passed = report.max_rel_error <= tolerance;
  return report;
}

}  // namespace

GradCheckReport grad_check(const ArchSpec& arch, double tolerance,
                           Precision precision, uint64_t seed) {
  arch.validate();
  return precision == Precision::Float64
             ? grad_check_impl<double>(arch, tolerance, seed)
             : grad_check_impl<float>(arch, tolerance, seed);
}

}  // namespace batt
