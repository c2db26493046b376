#include "batt/nn.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>

namespace batt {

const char* layer_kind_name(LayerKind kind) {
  switch (kind) {
    case LayerKind::Conv3x3: return "conv3x3";
    case LayerKind::ReLU: return "relu";
    case LayerKind::MaxPool2: return "maxpool2";
    case LayerKind::Flatten: return "flatten";
    case LayerKind::Dense: return "dense";
  }
  return "?";
}

LayerKind layer_kind_from_name(const std::string& name) {
  if (name == "conv3x3") return LayerKind::Conv3x3;
  if (name == "relu") return LayerKind::ReLU;
  if (name == "maxpool2") return LayerKind::MaxPool2;
  if (name == "flatten") return LayerKind::Flatten;
  if (name == "dense") return LayerKind::Dense;
  throw ValidationError("unknown layer kind: " + name);
}

ArchSpec ArchSpec::convnet_s(Shape3 input, int num_classes) {
  ArchSpec a;
  a.input = input;
  a.layers = {
      {LayerKind::Conv3x3, 16}, {LayerKind::ReLU, 0}, {LayerKind::MaxPool2, 0},
      {LayerKind::Conv3x3, 32}, {LayerKind::ReLU, 0}, {LayerKind::MaxPool2, 0},
      {LayerKind::Flatten, 0},  {LayerKind::Dense, 128}, {LayerKind::ReLU, 0},
      {LayerKind::Dense, num_classes},
  };
  a.validate();
  return a;
}

ArchSpec ArchSpec::dense_only(Shape3 input, const std::vector<int>& hidden,
                              int num_classes) {
  ArchSpec a;
  a.input = input;
  a.layers.push_back({LayerKind::Flatten, 0});
  for (int h : hidden) {
    a.layers.push_back({LayerKind::Dense, h});
    a.layers.push_back({LayerKind::ReLU, 0});
  }
  a.layers.push_back({LayerKind::Dense, num_classes});
  a.validate();
  return a;
}

ArchSpec ArchSpec::from_name(const std::string& name, Shape3 input,
                             int num_classes) {
  if (name == "convnet-s") return convnet_s(input, num_classes);
  if (name == "dense-64") return dense_only(input, {64}, num_classes);
  throw ConfigError("unknown architecture name: " + name);
}

std::vector<Shape3> ArchSpec::shapes() const {
  std::vector<Shape3> out;
  out.reserve(layers.size() + 1);
  out.push_back(input);
  Shape3 cur = input;
  for (size_t i = 0; i < layers.size(); ++i) {
    const auto& l = layers[i];
    switch (l.kind) {
      case LayerKind::Conv3x3:
        if (l.width < 1) throw ValidationError("conv width < 1");
        cur = {l.width, cur.h, cur.w};
        break;
      case LayerKind::ReLU:
        break;
      case LayerKind::MaxPool2:
        if (cur.h < 2 || cur.w < 2)
          throw ValidationError("maxpool on dimension < 2");
        cur = {cur.c, cur.h / 2, cur.w / 2};
        break;
      case LayerKind::Flatten:
        cur = {cur.size(), 1, 1};
        break;
      case LayerKind::Dense:
        if (l.width < 1) throw ValidationError("dense width < 1");
        if (cur.h != 1 || cur.w != 1)
          throw ValidationError("dense layer requires flattened input");
        cur = {l.width, 1, 1};
        break;
    }
    out.push_back(cur);
  }
  return out;
}

void ArchSpec::validate() const {
  if (input.c < 1 || input.h < 1 || input.w < 1)
    throw ValidationError("arch: non-positive input dimension");
  if (layers.empty() || layers.back().kind != LayerKind::Dense)
    throw ValidationError("arch: final layer must be dense");
  shapes();  // throws on incompatible chains
}

int ArchSpec::num_classes() const { return layers.back().width; }

namespace nn {

namespace {

template <typename Scalar>
using RowMat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Scalar>
using ColMat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

// col(k, p) = input(cin, oy+ky-1, ox+kx-1), k = (cin*3+ky)*3+kx, p = oy*W+ox,
// zero outside the grid. Column-major so each output pixel's K taps are
// contiguous.
template <typename Scalar>
void im2col_3x3(const Scalar* in, int C, int H, int W, Scalar* col) {
  const int K = C * 9;
  for (int oy = 0; oy < H; ++oy) {
    for (int ox = 0; ox < W; ++ox) {
      Scalar* dst = col + static_cast<size_t>(oy * W + ox) * K;
      for (int c = 0; c < C; ++c) {
        const Scalar* plane = in + static_cast<size_t>(c) * H * W;
        for (int ky = 0; ky < 3; ++ky) {
          const int y = oy + ky - 1;
          for (int kx = 0; kx < 3; ++kx) {
            const int x = ox + kx - 1;
            *dst++ = (y >= 0 && y < H && x >= 0 && x < W)
                         ? plane[y * W + x]
                         : Scalar(0);
          }
        }
      }
    }
  }
}

template <typename Scalar>
void col2im_3x3(const Scalar* col, int C, int H, int W, Scalar* din) {
  const int K = C * 9;
  std::fill(din, din + static_cast<size_t>(C) * H * W, Scalar(0));
  for (int oy = 0; oy < H; ++oy) {
    for (int ox = 0; ox < W; ++ox) {
      const Scalar* src = col + static_cast<size_t>(oy * W + ox) * K;
      for (int c = 0; c < C; ++c) {
        Scalar* plane = din + static_cast<size_t>(c) * H * W;
        for (int ky = 0; ky < 3; ++ky) {
          const int y = oy + ky - 1;
          for (int kx = 0; kx < 3; ++kx) {
            const int x = ox + kx - 1;
            if (y >= 0 && y < H && x >= 0 && x < W) plane[y * W + x] += *src;
            ++src;
          }
        }
      }
    }
  }
}

}  // namespace

template <typename Scalar>
Network<Scalar>::Network(const ArchSpec& arch) : arch_(arch) {
  arch_.validate();
  shapes_ = arch_.shapes();

  size_t offset = 0;
  int conv_idx = 0, dense_idx = 0;
  layer_param_offset_.assign(arch_.layers.size(), static_cast<size_t>(-1));
  for (size_t i = 0; i < arch_.layers.size(); ++i) {
    const auto& l = arch_.layers[i];
    if (l.kind == LayerKind::Conv3x3) {
      const std::string base = "conv" + std::to_string(++conv_idx);
      const size_t wcount = static_cast<size_t>(l.width) * shapes_[i].c * 9;
      layer_param_offset_[i] = offset;
      slices_.push_back({base + ".weight", offset, wcount});
      offset += wcount;
      slices_.push_back({base + ".bias", offset, static_cast<size_t>(l.width)});
      offset += l.width;
    } else if (l.kind == LayerKind::Dense) {
      const std::string base = "dense" + std::to_string(++dense_idx);
      const size_t wcount = static_cast<size_t>(l.width) * shapes_[i].c;
      layer_param_offset_[i] = offset;
      slices_.push_back({base + ".weight", offset, wcount});
      offset += wcount;
      slices_.push_back({base + ".bias", offset, static_cast<size_t>(l.width)});
      offset += l.width;
    }
  }
  params_.assign(offset, Scalar(0));
}

template <typename Scalar>
void Network<Scalar>::init_params(uint64_t seed) {
  for (size_t i = 0; i < arch_.layers.size(); ++i) {
    if (layer_param_offset_[i] == static_cast<size_t>(-1)) continue;
    const auto& l = arch_.layers[i];
    const int fan_in =
        l.kind == LayerKind::Conv3x3 ? shapes_[i].c * 9 : shapes_[i].c;
    // fan-in-scaled uniform (variance 1/fan_in); keeps initial logits small
    // enough that the starting loss sits at ln K on balanced classes
    const double bound = std::sqrt(3.0 / fan_in);
    const size_t wcount = static_cast<size_t>(l.width) * fan_in;
    RngStream stream(seed, "init", i);
    Scalar* w = params_.data() + layer_param_offset_[i];
    for (size_t j = 0; j < wcount; ++j)
      w[j] = static_cast<Scalar>(stream.uniform_real(-bound, bound));
    std::fill(w + wcount, w + wcount + l.width, Scalar(0));  // biases
  }
}

template <typename Scalar>
Workspace<Scalar> Network<Scalar>::make_workspace() const {
  Workspace<Scalar> ws;
  ws.acts.resize(shapes_.size());
  ws.dacts.resize(shapes_.size());
  ws.pool_argmax.resize(arch_.layers.size());
  size_t max_col = 0;
  for (size_t i = 0; i < shapes_.size(); ++i) {
    ws.acts[i].assign(shapes_[i].size(), Scalar(0));
    ws.dacts[i].assign(shapes_[i].size(), Scalar(0));
  }
  for (size_t i = 0; i < arch_.layers.size(); ++i) {
    if (arch_.layers[i].kind == LayerKind::MaxPool2)
      ws.pool_argmax[i].assign(shapes_[i + 1].size(), 0);
    if (arch_.layers[i].kind == LayerKind::Conv3x3)
      max_col = std::max(max_col, static_cast<size_t>(shapes_[i].c) * 9 *
                                      shapes_[i].h * shapes_[i].w);
  }
  ws.col.assign(max_col, Scalar(0));
  ws.dcol.assign(max_col, Scalar(0));
  ws.probs.assign(arch_.num_classes(), Scalar(0));
  return ws;
}

template <typename Scalar>
void Network<Scalar>::forward_impl(const Scalar* x, Workspace<Scalar>& ws,
                                   const Workspace<Scalar>* base) const {
  std::copy(x, x + shapes_[0].size(), ws.acts[0].begin());
  for (size_t i = 0; i < arch_.layers.size(); ++i) {
    const auto& l = arch_.layers[i];
    const Shape3 sin = shapes_[i];
    const Shape3 sout = shapes_[i + 1];
    const Scalar* in = ws.acts[i].data();
    Scalar* out = ws.acts[i + 1].data();
    switch (l.kind) {
      case LayerKind::Conv3x3: {
        const int K = sin.c * 9, HW = sin.h * sin.w;
        im2col_3x3(in, sin.c, sin.h, sin.w, ws.col.data());
        Eigen::Map<const RowMat<Scalar>> W(
            params_.data() + layer_param_offset_[i], l.width, K);
        Eigen::Map<const Vec<Scalar>> b(
            params_.data() + layer_param_offset_[i] +
                static_cast<size_t>(l.width) * K, l.width);
        Eigen::Map<const ColMat<Scalar>> col(ws.col.data(), K, HW);
        Eigen::Map<RowMat<Scalar>> o(out, l.width, HW);
        o.noalias() = W * col;
        o.colwise() += b;
        break;
      }
      case LayerKind::ReLU:
        if (base != nullptr) {
          const Scalar* gate = base->acts[i + 1].data();
          for (int j = 0; j < sin.size(); ++j)
            out[j] = gate[j] > Scalar(0) ? in[j] : Scalar(0);
        } else {
          for (int j = 0; j < sin.size(); ++j)
            out[j] = in[j] > Scalar(0) ? in[j] : Scalar(0);
        }
        break;
      case LayerKind::MaxPool2: {
        if (base != nullptr) {
          const int* argmax = base->pool_argmax[i].data();
          for (int j = 0; j < sout.size(); ++j) out[j] = in[argmax[j]];
          break;
        }
        int* argmax = ws.pool_argmax[i].data();
        for (int c = 0; c < sin.c; ++c) {
          const Scalar* plane = in + static_cast<size_t>(c) * sin.h * sin.w;
          for (int oy = 0; oy < sout.h; ++oy) {
            for (int ox = 0; ox < sout.w; ++ox) {
              int best = (oy * 2) * sin.w + ox * 2;
              Scalar bv = plane[best];
              for (int dy = 0; dy < 2; ++dy) {
                for (int dx = 0; dx < 2; ++dx) {
                  const int idx = (oy * 2 + dy) * sin.w + (ox * 2 + dx);
                  if (plane[idx] > bv) { bv = plane[idx]; best = idx; }
                }
              }
              const int oidx = (c * sout.h + oy) * sout.w + ox;
              out[oidx] = bv;
              argmax[oidx] = c * sin.h * sin.w + best;
            }
          }
        }
        break;
      }
      case LayerKind::Flatten:
        std::copy(in, in + sin.size(), out);
        break;
      case LayerKind::Dense: {
        Eigen::Map<const RowMat<Scalar>> W(
            params_.data() + layer_param_offset_[i], l.width, sin.c);
        Eigen::Map<const Vec<Scalar>> b(
            params_.data() + layer_param_offset_[i] +
                static_cast<size_t>(l.width) * sin.c, l.width);
        Eigen::Map<const Vec<Scalar>> xi(in, sin.c);
        Eigen::Map<Vec<Scalar>> o(out, l.width);
        o.noalias() = W * xi + b;
        break;
      }
    }
  }
}

template <typename Scalar>
void Network<Scalar>::forward(const Scalar* x, Workspace<Scalar>& ws) const {
  forward_impl(x, ws, nullptr);
}

template <typename Scalar>
Scalar Network<Scalar>::ce_from_logits(int label, Workspace<Scalar>& ws) const {
  const auto& logits = ws.acts.back();
  // log-sum-exp stabilized cross-entropy
  Scalar m = logits[0];
  for (Scalar v : logits) m = std::max(m, v);
  Scalar sum = Scalar(0);
  for (size_t k = 0; k < logits.size(); ++k) {
    ws.probs[k] = std::exp(logits[k] - m);
    sum += ws.probs[k];
  }
  for (auto& p : ws.probs) p /= sum;
  return std::log(sum) + m - logits[label];
}

template <typename Scalar>
Scalar Network<Scalar>::loss(const Scalar* x, int label,
                             Workspace<Scalar>& ws) const {
  if (label < 0 || label >= num_classes())
    throw ValidationError("label out of range");
  forward_impl(x, ws, nullptr);
  return ce_from_logits(label, ws);
}

template <typename Scalar>
Scalar Network<Scalar>::loss_on_branch(const Scalar* x, int label,
                                       Workspace<Scalar>& ws,
                                       const Workspace<Scalar>& base) const {
  if (label < 0 || label >= num_classes())
    throw ValidationError("label out of range");
  forward_impl(x, ws, &base);
  return ce_from_logits(label, ws);
}

template <typename Scalar>
Scalar Network<Scalar>::loss_and_grad(const Scalar* x, int label, Scalar* grad,
                                      Workspace<Scalar>& ws) const {
  const Scalar loss_value = loss(x, label, ws);

  // dL/dlogits = softmax - onehot
  auto& dlogits = ws.dacts.back();
  for (size_t k = 0; k < dlogits.size(); ++k) dlogits[k] = ws.probs[k];
  dlogits[label] -= Scalar(1);

  for (size_t ii = arch_.layers.size(); ii-- > 0;) {
    const auto& l = arch_.layers[ii];
    const Shape3 sin = shapes_[ii];
    const Shape3 sout = shapes_[ii + 1];
    const Scalar* in = ws.acts[ii].data();
    const Scalar* dout = ws.dacts[ii + 1].data();
    Scalar* din = ws.dacts[ii].data();
    switch (l.kind) {
      case LayerKind::Conv3x3: {
        const int K = sin.c * 9, HW = sin.h * sin.w;
        // col was overwritten by deeper conv layers; rebuild for this one.
        im2col_3x3(in, sin.c, sin.h, sin.w, ws.col.data());
        Eigen::Map<const ColMat<Scalar>> col(ws.col.data(), K, HW);
        Eigen::Map<const RowMat<Scalar>> g(dout, l.width, HW);
        Eigen::Map<const RowMat<Scalar>> W(
            params_.data() + layer_param_offset_[ii], l.width, K);
        Eigen::Map<RowMat<Scalar>> dW(grad + layer_param_offset_[ii], l.width, K);
        Eigen::Map<Vec<Scalar>> db(
            grad + layer_param_offset_[ii] + static_cast<size_t>(l.width) * K,
            l.width);
        dW.noalias() += g * col.transpose();
        db.noalias() += g.rowwise().sum();
        Eigen::Map<ColMat<Scalar>> dcol(ws.dcol.data(), K, HW);
        dcol.noalias() = W.transpose() * g;
        col2im_3x3(ws.dcol.data(), sin.c, sin.h, sin.w, din);
        break;
      }
      case LayerKind::ReLU: {
        const Scalar* out = ws.acts[ii + 1].data();
        for (int j = 0; j < sin.size(); ++j)
          din[j] = out[j] > Scalar(0) ? dout[j] : Scalar(0);
        break;
      }
      case LayerKind::MaxPool2: {
        std::fill(din, din + sin.size(), Scalar(0));
        const int* argmax = ws.pool_argmax[ii].data();
        for (int j = 0; j < sout.size(); ++j) din[argmax[j]] += dout[j];
        break;
      }
      case LayerKind::Flatten:
        std::copy(dout, dout + sin.size(), din);
        break;
      case LayerKind::Dense: {
        Eigen::Map<const RowMat<Scalar>> W(
            params_.data() + layer_param_offset_[ii], l.width, sin.c);
        Eigen::Map<RowMat<Scalar>> dW(grad + layer_param_offset_[ii], l.width,
                                      sin.c);
        Eigen::Map<Vec<Scalar>> db(
            grad + layer_param_offset_[ii] +
                static_cast<size_t>(l.width) * sin.c, l.width);
        Eigen::Map<const Vec<Scalar>> xi(in, sin.c);
        Eigen::Map<const Vec<Scalar>> g(dout, l.width);
        dW.noalias() += g * xi.transpose();
        db.noalias() += g;
        Eigen::Map<Vec<Scalar>> dx(din, sin.c);
        dx.noalias() = W.transpose() * g;
        break;
      }
    }
  }
  return loss_value;
}

template <typename Scalar>
std::vector<typename Network<Scalar>::ConvActivation>
Network<Scalar>::conv_activations(const Workspace<Scalar>& ws) const {
  std::vector<ConvActivation> out;
  for (size_t i = 0; i < arch_.layers.size(); ++i) {
    if (arch_.layers[i].kind != LayerKind::Conv3x3) continue;
    // the ReLU following the conv, when present, is the channel activation
    size_t src = i + 1;
    if (src < arch_.layers.size() && arch_.layers[src].kind == LayerKind::ReLU)
      ++src;
    out.push_back({static_cast<int>(i), ws.acts[src].data(),
                   shapes_[i + 1].c, shapes_[i + 1].h * shapes_[i + 1].w});
  }
  return out;
}

template class Network<float>;
template class Network<double>;

}  // namespace nn

}  // namespace batt
