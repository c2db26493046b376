#include <cmath>
#include <cstdio>

#include "batt/checksum.hpp"
#include "batt/rng.hpp"

namespace batt {

std::string to_hex(uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return std::string(buf);
}

double RngStream::next_gaussian() {
  // Box-Muller; u1 nudged away from zero so the log is finite.
  const double u1 = next_unit();
  const double u2 = next_unit();
  const double r = std::sqrt(-2.0 * std::log(u1 + 1e-300));
  return r * std::cos(2.0 * 3.14159265358979323846 * u2);
}

}  // namespace batt
