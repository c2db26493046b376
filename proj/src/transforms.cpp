#include "batt/transforms.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace batt {

namespace {

constexpr double kPi = 3.14159265358979323846;

// cos/sin of the angle, snapped to exact values at the quarter turns so that
// 90/180/-90 degree rotations reduce to pixel permutations.
void rotation_cos_sin(double angle_deg, double* c, double* s) {
  if (angle_deg == 0.0) {
    *c = 1.0; *s = 0.0;
  } else if (angle_deg == 90.0) {
    *c = 0.0; *s = 1.0;
  } else if (angle_deg == 180.0) {
    *c = -1.0; *s = 0.0;
  } else if (angle_deg == -90.0) {
    *c = 0.0; *s = -1.0;
  } else {
    const double rad = angle_deg * kPi / 180.0;
    *c = std::cos(rad);
    *s = std::sin(rad);
  }
}

// Bilinear lookup at a real-valued (row, col). The caller guarantees the
// coordinate is inside [0, H-1] x [0, W-1]; the +1 taps are clamped, which
// only ever happens with zero weight.
float bilinear_at(const Image& img, int ch, double sr, double sc) {
  const int r0 = static_cast<int>(std::floor(sr));
  const int c0 = static_cast<int>(std::floor(sc));
  const int r1 = std::min(r0 + 1, img.height - 1);
  const int c1 = std::min(c0 + 1, img.width - 1);
  const double fr = sr - r0;
  const double fc = sc - c0;
  const double v =
      (1.0 - fr) * (1.0 - fc) * img.at(ch, r0, c0) +
      (1.0 - fr) * fc * img.at(ch, r0, c1) +
      fr * (1.0 - fc) * img.at(ch, r1, c0) +
      fr * fc * img.at(ch, r1, c1);
  return static_cast<float>(std::clamp(v, 0.0, 1.0));
}

void check_fill(float fill) {
  if (!(fill >= 0.0f && fill <= 1.0f))
    throw RangeError("fill intensity outside [0,1]");
}

}  // namespace

const char* transform_kind_name(TransformKind kind) {
  return kind == TransformKind::Rotation ? "rotation" : "translation";
}

TransformKind transform_kind_from_name(const std::string& name) {
  if (name == "rotation") return TransformKind::Rotation;
  if (name == "translation") return TransformKind::Translation;
  throw ValidationError("unknown transform kind: " + name);
}

Image rotate(const Image& image, double angle_deg, float fill) {
  image.validate();
  check_fill(fill);
  if (!(angle_deg > -180.0 && angle_deg <= 180.0))
    throw RangeError("rotation angle outside (-180, 180]");

  double c, s;
  rotation_cos_sin(angle_deg, &c, &s);

  const int H = image.height, W = image.width;
  const double cy = (H - 1) / 2.0;
  const double cx = (W - 1) / 2.0;

  Image out(image.channels, H, W);
  for (int r = 0; r < H; ++r) {
    for (int col = 0; col < W; ++col) {
      // Inverse map: rotate the output pixel-center clockwise by the angle to
      // find where it came from.
      const double dy = r - cy;
      const double dx = col - cx;
      const double sc = cx + dx * c - dy * s;
      const double sr = cy + dx * s + dy * c;
      if (sr < 0.0 || sr > H - 1 || sc < 0.0 || sc > W - 1) {
        for (int ch = 0; ch < image.channels; ++ch) out.at(ch, r, col) = fill;
      } else {
        for (int ch = 0; ch < image.channels; ++ch)
          out.at(ch, r, col) = bilinear_at(image, ch, sr, sc);
      }
    }
  }
  return out;
}

Image translate_h(const Image& image, int dx, float fill) {
  image.validate();
  check_fill(fill);
  if (std::abs(dx) >= image.width)
    throw RangeError("translation magnitude must be smaller than image width");

  Image out(image.channels, image.height, image.width);
  for (int ch = 0; ch < image.channels; ++ch) {
    for (int r = 0; r < image.height; ++r) {
      for (int col = 0; col < image.width; ++col) {
        const int src = col - dx;
        out.at(ch, r, col) =
            (src >= 0 && src < image.width) ? image.at(ch, r, src) : fill;
      }
    }
  }
  return out;
}

Image resize(const Image& image, int out_h, int out_w) {
  image.validate();
  if (out_h < 1 || out_w < 1) throw RangeError("resize target dimension < 1");

  const double scale_r = static_cast<double>(image.height) / out_h;
  const double scale_c = static_cast<double>(image.width) / out_w;

  Image out(image.channels, out_h, out_w);
  for (int r = 0; r < out_h; ++r) {
    // Half-pixel centers, clamped to the source grid at the borders.
    double sr = (r + 0.5) * scale_r - 0.5;
    sr = std::clamp(sr, 0.0, static_cast<double>(image.height - 1));
    for (int col = 0; col < out_w; ++col) {
      double sc = (col + 0.5) * scale_c - 0.5;
      sc = std::clamp(sc, 0.0, static_cast<double>(image.width - 1));
      for (int ch = 0; ch < image.channels; ++ch)
        out.at(ch, r, col) = bilinear_at(image, ch, sr, sc);
    }
  }
  return out;
}

double sample_param(const ParamDomain& domain, RngStream& stream) {
  domain.validate();
  if (domain.kind == TransformKind::Rotation)
    return stream.uniform_real(domain.low, domain.high);
  const auto low = static_cast<int64_t>(std::llround(domain.low));
  const auto high = static_cast<int64_t>(std::llround(domain.high));
  return static_cast<double>(stream.uniform_int(low, high));
}

Image apply(const TransformSpec& spec, const Image& image) {
  if (spec.kind == TransformKind::Rotation)
    return rotate(image, spec.parameter, spec.fill);
  return translate_h(image, static_cast<int>(std::llround(spec.parameter)),
                     spec.fill);
}

}  // namespace batt
