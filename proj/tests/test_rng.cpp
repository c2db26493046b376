#include <doctest.h>

#include <cmath>
#include <set>

#include "batt/rng.hpp"

using namespace batt;

TEST_SUITE_BEGIN("rng");

TEST_CASE("identical keys replay identical sequences") {
  RngStream a(7, "purpose", 3), b(7, "purpose", 3);
  for (int i = 0; i < 1000; ++i) CHECK(a.next_u64() == b.next_u64());
}

TEST_CASE("frozen values pin the stream across platforms and versions") {
  // If these move, previously written artifacts stop being reproducible.
  RngStream s(0, "select");
  CHECK(s.next_u64() == 11970622469259572297ull);
  RngStream t(42, "benign", 17);
  CHECK(t.next_u64() == 10173078145780903783ull);
}

TEST_CASE("distinct purposes and indices decorrelate streams") {
  RngStream a(7, "alpha"), b(7, "beta"), c(7, "alpha", 1);
  int collisions = 0;
  for (int i = 0; i < 200; ++i) {
    const uint64_t va = a.next_u64(), vb = b.next_u64(), vc = c.next_u64();
    if (va == vb || va == vc || vb == vc) ++collisions;
  }
  CHECK(collisions == 0);
}

TEST_CASE("uniform_int respects inclusive bounds and hits them") {
  RngStream s(3, "int");
  std::set<int64_t> seen;
  for (int i = 0; i < 2000; ++i) {
    const int64_t v = s.uniform_int(-2, 2);
    REQUIRE(v >= -2);
    REQUIRE(v <= 2);
    seen.insert(v);
  }
  CHECK(seen.size() == 5);
  CHECK(s.uniform_int(9, 9) == 9);
}

TEST_CASE("next_unit stays in the half-open unit interval") {
  RngStream s(5, "unit");
  for (int i = 0; i < 10000; ++i) {
    const double v = s.next_unit();
    REQUIRE(v >= 0.0);
    REQUIRE(v < 1.0);
  }
}

TEST_CASE("gaussian draws have roughly unit scale") {
  RngStream s(8, "gauss");
  double sum = 0, sq = 0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    const double v = s.next_gaussian();
    sum += v;
    sq += v * v;
  }
  CHECK(std::abs(sum / n) < 0.05);
  CHECK(sq / n == doctest::Approx(1.0).epsilon(0.05));
}

TEST_SUITE_END();
