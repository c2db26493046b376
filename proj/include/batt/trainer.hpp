#pragma once

#include <functional>
#include <utility>

#include "batt/dataset.hpp"
#include "batt/nn.hpp"

namespace batt {

struct HyperParams {
  double learning_rate = 0.01;
  double momentum = 0.9;
  int batch_size = 64;
  int epochs = 30;
  std::vector<int> lr_decay_epochs = {15, 25};  // lr *= 0.1 from these (1-based)
  double weight_decay = 5e-4;
  uint64_t seed = 0;

  void validate() const {
    if (learning_rate < 0) throw ValidationError("negative learning rate");
    if (momentum < 0 || momentum >= 1) throw ValidationError("momentum outside [0,1)");
    if (batch_size < 1) throw ValidationError("batch size < 1");
    if (epochs < 1) throw ValidationError("epochs < 1");
    if (weight_decay < 0) throw ValidationError("negative weight decay");
  }
};

struct ModelMeta {
  uint64_t config_digest = 0;   // poison config that produced the data; 0 = clean
  uint64_t dataset_digest = 0;
  double final_train_loss = 0.0;
  int epochs_trained = 0;
};

struct TrainedModel {
  ArchSpec arch;
  HyperParams hp;
  std::vector<float> params;
  ModelMeta meta;
  std::vector<double> epoch_losses;

  uint64_t digest() const;
};

struct TrainOptions {
  int threads = 1;
  // Invoked after every epoch with (local epoch index starting at 1, mean
  // epoch loss, current parameters). Used for logging and defense curves.
  std::function<void(int, double, const std::vector<float>&)> on_epoch;
};

// Untrained model with the standard fan-in init; epoch count zero.
TrainedModel initialize_model(const ArchSpec& arch, const HyperParams& hp);

// Shuffled mini-batch SGD with momentum on softmax cross-entropy.
// Single-threaded runs are bitwise reproducible for fixed seeds.
TrainedModel train(const Dataset& dataset, const ArchSpec& arch,
                   const HyperParams& hp, const TrainOptions& opts = {});

// Same loop, starting from the given parameters, at a constant learning
// rate. Epoch shuffle streams continue from the model's recorded epoch
// count, so resuming reproduces an uninterrupted run when seeds and learning
// rates align.
TrainedModel continue_training(const TrainedModel& model, const Dataset& dataset,
                               int epochs, double learning_rate,
                               const TrainOptions& opts = {});

// Forward pass; class is the argmax with ties broken toward the lowest index.
std::pair<int, std::vector<float>> predict(const TrainedModel& model,
                                           const Image& image);

// Predicted class per sample. Parallel-safe, order-preserving.
std::vector<int> predict_batch(const TrainedModel& model, const Dataset& data,
                               int threads = 1);

enum class Precision { Float32, Float64 };

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::string worst_param;
  double tolerance = 0.0;
  bool passed = false;
};

// Compares analytic gradients against central finite differences (step 1e-3)
// on a small random batch, at the requested floating-point precision.
GradCheckReport grad_check(const ArchSpec& arch, double tolerance,
                           Precision precision = Precision::Float64,
                           uint64_t seed = 20240229);

// Checkpoint: u32 header length, JSON header (arch, hyperparams, meta),
// little-endian f32 payload, u64 FNV-1a checksum of all preceding bytes.
void save_checkpoint(const TrainedModel& model, const std::string& path);
TrainedModel load_checkpoint(const std::string& path);

}  // namespace batt
