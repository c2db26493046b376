#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "batt/error.hpp"
#include "batt/rng.hpp"

namespace batt {

struct Shape3 {
  int c = 0, h = 0, w = 0;
  int size() const { return c * h * w; }
  bool operator==(const Shape3&) const = default;
};

enum class LayerKind { Conv3x3, ReLU, MaxPool2, Flatten, Dense };

const char* layer_kind_name(LayerKind kind);
LayerKind layer_kind_from_name(const std::string& name);

// conv3x3 is stride 1, pad 1; maxpool2 is 2x2 stride 2. `width` is the output
// channel count for conv and the output feature count for dense.
struct LayerSpec {
  LayerKind kind = LayerKind::ReLU;
  int width = 0;
};

struct ArchSpec {
  Shape3 input;
  std::vector<LayerSpec> layers;

  // conv 16 -> relu -> pool -> conv 32 -> relu -> pool -> flatten ->
  // dense 128 -> relu -> dense K. The desk-scale classifier.
  static ArchSpec convnet_s(Shape3 input, int num_classes);

  // flatten -> dense(h) -> relu ... -> dense K. Used by the gradient checker
  // and small tests.
  static ArchSpec dense_only(Shape3 input, const std::vector<int>& hidden,
                             int num_classes);

  static ArchSpec from_name(const std::string& name, Shape3 input,
                            int num_classes);

  // Output shape after each layer; shapes()[0] is the input.
  std::vector<Shape3> shapes() const;
  void validate() const;
  int num_classes() const;
};

struct ParamSlice {
  std::string name;
  size_t offset = 0;
  size_t count = 0;
};

namespace nn {

// Scratch buffers for one sample's forward/backward pass. One per thread.
template <typename Scalar>
struct Workspace {
  std::vector<std::vector<Scalar>> acts;   // acts[i] = input of layer i; back() = logits
  std::vector<std::vector<Scalar>> dacts;  // gradient buffers, same shapes
  std::vector<std::vector<int>> pool_argmax;
  std::vector<Scalar> col;   // im2col scratch
  std::vector<Scalar> dcol;
  std::vector<Scalar> probs;
};

// Runtime network over a flat parameter vector. Templated on the scalar so
// the finite-difference oracle can run the identical code path in double.
template <typename Scalar>
class Network {
 public:
  explicit Network(const ArchSpec& arch);

  // Fan-in-scaled uniform init with zero biases; draws are made in double so
  // float and double instantiations see the same values.
  void init_params(uint64_t seed);

  std::vector<Scalar>& params() { return params_; }
  const std::vector<Scalar>& params() const { return params_; }
  template <typename From>
  void load_params(const std::vector<From>& src) {
    if (src.size() != params_.size())
      throw ValidationError("parameter count mismatch when loading network");
    for (size_t i = 0; i < src.size(); ++i)
      params_[i] = static_cast<Scalar>(src[i]);
  }

  const std::vector<ParamSlice>& slices() const { return slices_; }
  const ArchSpec& arch() const { return arch_; }
  size_t param_count() const { return params_.size(); }
  int num_classes() const { return arch_.num_classes(); }

  Workspace<Scalar> make_workspace() const;

  // Forward one sample (input length = arch.input.size()); logits end up in
  // ws.acts.back().
  void forward(const Scalar* x, Workspace<Scalar>& ws) const;

  // Softmax cross-entropy loss of one sample.
  Scalar loss(const Scalar* x, int label, Workspace<Scalar>& ws) const;

  // Loss evaluated on the smooth branch selected at a base point: pool
  // argmax routing and ReLU on/off masks are taken from `base` instead of
  // being recomputed. At the base input this equals loss(); nearby it is the
  // differentiable function whose gradient backprop reports, which makes
  // finite differences well-defined across pooling ties.
  Scalar loss_on_branch(const Scalar* x, int label, Workspace<Scalar>& ws,
                        const Workspace<Scalar>& base) const;

  // Loss plus parameter gradients accumulated into grad (same layout as
  // params()). Returns the sample loss.
  Scalar loss_and_grad(const Scalar* x, int label, Scalar* grad,
                       Workspace<Scalar>& ws) const;

  // Post-ReLU activations of each conv layer for the last forward() call.
  // Entries are (layer index in arch, pointer into ws buffers, channels,
  // pixels per channel). Used by the pruning defense.
  struct ConvActivation {
    int layer = 0;
    const Scalar* data = nullptr;
    int channels = 0;
    int pixels = 0;
  };
  std::vector<ConvActivation> conv_activations(const Workspace<Scalar>& ws) const;

 private:
  void forward_impl(const Scalar* x, Workspace<Scalar>& ws,
                    const Workspace<Scalar>* base) const;
  Scalar ce_from_logits(int label, Workspace<Scalar>& ws) const;

  ArchSpec arch_;
  std::vector<Shape3> shapes_;
  std::vector<ParamSlice> slices_;
  std::vector<size_t> layer_param_offset_;  // offset of each layer's weights, or npos
  std::vector<Scalar> params_;
};

extern template class Network<float>;
extern template class Network<double>;

}  // namespace nn

}  // namespace batt
