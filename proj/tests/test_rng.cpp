#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "lmforest/rng.hpp"

using namespace lmforest;

TEST_CASE("streams are reproducible and distinct") {
  Rng a = Rng::stream(42, 1);
  Rng b = Rng::stream(42, 1);
  Rng c = Rng::stream(42, 2);
  bool all_equal = true;
  bool any_diff_c = false;
  for (int i = 0; i < 100; ++i) {
    const auto va = a.next_u64();
    all_equal = all_equal && va == b.next_u64();
    any_diff_c = any_diff_c || va != c.next_u64();
  }
  CHECK(all_equal);
  CHECK(any_diff_c);
}

TEST_CASE("uniform_int stays in range and is roughly uniform") {
  Rng rng(7);
  std::vector<int> counts(10, 0);
  const int draws = 100000;
  for (int i = 0; i < draws; ++i) {
    const auto v = rng.uniform_int(10);
    REQUIRE(v < 10);
    counts[std::size_t(v)]++;
  }
  for (int c : counts) {
    CHECK(std::abs(c - draws / 10) < 500);
  }
}

TEST_CASE("uniform lies in [0,1); normal has near-standard moments") {
  Rng rng(3);
  double sum = 0.0, sq = 0.0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double u = rng.uniform();
    REQUIRE(u >= 0.0);
    REQUIRE(u < 1.0);
    const double z = rng.normal();
    sum += z;
    sq += z * z;
  }
  CHECK(std::abs(sum / n) < 0.01);
  CHECK(std::abs(sq / n - 1.0) < 0.02);
}

TEST_CASE("shuffle permutes; sample_without_replacement is a k-subset") {
  Rng rng(9);
  std::vector<int> xs{1, 2, 3, 4, 5, 6, 7};
  auto ys = xs;
  rng.shuffle(ys);
  auto sorted = ys;
  std::sort(sorted.begin(), sorted.end());
  CHECK(sorted == xs);

  auto pick = rng.sample_without_replacement(10, 4);
  CHECK(pick.size() == 4);
  std::sort(pick.begin(), pick.end());
  CHECK(std::adjacent_find(pick.begin(), pick.end()) == pick.end());
  for (auto v : pick) CHECK(v < 10);
}
