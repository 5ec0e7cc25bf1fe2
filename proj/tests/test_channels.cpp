#include <doctest.h>

#include <numeric>

#include "btn/channels.hpp"
#include "helpers.hpp"

using namespace btn;

TEST_CASE("rotate_channels: identity, scalars, group action") {
  std::mt19937_64 rng(1);
  const auto c = test::random_channels(rng, 2, 4, 3, 2, 2);
  CHECK(max_abs_diff(rotate_channels(Rotation(), c), c) == 0.0);
  const auto r1 = random_rotation(rng), r2 = random_rotation(rng);
  const auto rc = rotate_channels(r1, c);
  CHECK(std::equal(rc.scalars().begin(), rc.scalars().end(), c.scalars().begin()));
  const auto twice = rotate_channels(r2, rotate_channels(r1, c));
  CHECK(max_abs_diff(twice, rotate_channels(r2 * r1, c)) < 1e-12);
  CHECK(rc.tensor(1, 2, 1).isApprox(r1.matrix() * c.tensor(1, 2, 1) * r1.matrix().transpose(), 1e-13));
}

TEST_CASE("masked_sum_pool") {
  std::mt19937_64 rng(2);
  auto c = test::random_channels(rng, 2, 5, 2, 2, 1);
  Mask m(2, 5);
  m.set(0, 3, true);
  const auto single = masked_sum_pool(c, m);
  CHECK(single.particles() == 1);
  CHECK(single.scalar(0, 0, 1) == c.scalar(0, 3, 1));
  CHECK(single.vector(0, 0, 1) == c.vector(0, 3, 1));
  CHECK(single.tensor(0, 0, 0) == c.tensor(0, 3, 0));
  // event 1 has no valid slot
  CHECK(single.scalar(1, 0, 0) == 0.0);
  CHECK(single.vector(1, 0, 0).norm() == 0.0);

  Mask all(2, 5, true);
  const auto pooled = masked_sum_pool(c, all);
  RepChannels perm(2, 5, 2, 2, 1);
  const std::array<std::size_t, 5> order{4, 2, 0, 3, 1};
  for (std::size_t b = 0; b < 2; ++b)
    for (std::size_t p = 0; p < 5; ++p) {
      for (std::size_t f = 0; f < 2; ++f) {
        perm.scalar(b, p, f) = c.scalar(b, order[p], f);
        perm.set_vector(b, p, f, c.vector(b, order[p], f));
      }
      perm.set_tensor(b, p, 0, c.tensor(b, order[p], 0));
    }
  CHECK(max_abs_diff(masked_sum_pool(perm, all), pooled) < 1e-14);

  CHECK_THROWS_AS(masked_sum_pool(c, Mask(2, 4)), std::invalid_argument);
}

TEST_CASE("concat_features") {
  std::mt19937_64 rng(3);
  const auto a = test::random_channels(rng, 2, 3, 2, 1, 1);
  const auto b = test::random_channels(rng, 2, 3, 1, 2, 0);
  const RepChannels empty(2, 3, 0, 0, 0);
  CHECK(max_abs_diff(concat_features(a, empty), a) == 0.0);
  const auto ab = concat_features(a, b);
  CHECK(ab.n_scalar() == 3);
  CHECK(ab.n_vector() == 3);
  CHECK(ab.n_tensor() == 1);
  CHECK(ab.vector(1, 2, 2) == b.vector(1, 2, 1));
  const auto r = random_rotation(rng);
  CHECK(max_abs_diff(rotate_channels(r, ab), concat_features(rotate_channels(r, a), rotate_channels(r, b))) < 1e-14);
  CHECK_THROWS(concat_features(a, RepChannels(2, 4, 1, 1, 1)));
}

TEST_CASE("mask helpers") {
  std::mt19937_64 rng(4);
  auto c = test::random_channels(rng, 1, 3, 1, 1, 1);
  Mask m(1, 3, true);
  m.set(0, 1, false);
  CHECK(m.count(0) == 2);
  CHECK_FALSE(padding_is_zero(c, m));
  apply_mask(c, m);
  CHECK(padding_is_zero(c, m));
  CHECK(c.all_finite());
}
