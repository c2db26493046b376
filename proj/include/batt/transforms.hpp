#pragma once

#include <cstdint>

#include "batt/image.hpp"
#include "batt/rng.hpp"

namespace batt {

enum class TransformKind { Rotation, Translation };

const char* transform_kind_name(TransformKind kind);
TransformKind transform_kind_from_name(const std::string& name);

// The trigger mechanism T(.; theta): one transform kind with one parameter.
// Rotation parameter is degrees, counterclockwise-positive, in (-180, 180];
// translation parameter is whole pixels, rightward-positive, |dx| < width.
struct TransformSpec {
  TransformKind kind = TransformKind::Rotation;
  double parameter = 0.0;
  float fill = 0.0f;
};

// Value domain the benign per-sample parameters are drawn from.
struct ParamDomain {
  TransformKind kind = TransformKind::Rotation;
  double low = 0.0;
  double high = 0.0;

  void validate() const {
    if (!(low <= high)) throw ValidationError("param domain: low > high");
  }
};

// Counterclockwise rotation about the pixel-center of the image,
// bilinear-interpolated; source coordinates falling outside the input grid
// produce `fill`. Exact 90-degree multiples collapse to pixel permutations.
Image rotate(const Image& image, double angle_deg, float fill);

// Horizontal shift by whole pixels, rightward-positive; vacated columns get
// `fill`. No interpolation.
Image translate_h(const Image& image, int dx, float fill);

// Bilinear resize with half-pixel-center alignment.
Image resize(const Image& image, int out_h, int out_w);

// One draw from the domain: continuous for rotation, integer for translation.
double sample_param(const ParamDomain& domain, RngStream& stream);

// Dispatch to rotate or translate_h according to spec.kind.
Image apply(const TransformSpec& spec, const Image& image);

}  // namespace batt
