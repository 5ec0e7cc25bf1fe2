#pragma once

#include <random>

#include "btn/channels.hpp"
#include "btn/geometry.hpp"

namespace btn::test {

inline Vec3 gauss_vec(std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  return {n(rng), n(rng), n(rng)};
}

inline Mat3 gauss_mat(std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  Mat3 m;
  for (int i = 0; i < 9; ++i) m(i / 3, i % 3) = n(rng);
  return m;
}

inline RepChannels random_channels(std::mt19937_64& rng, std::size_t b, std::size_t p, std::size_t fs,
                                   std::size_t fv, std::size_t ft) {
  RepChannels c(b, p, fs, fv, ft);
  std::normal_distribution<double> n(0.0, 1.0);
  for (double& x : c.scalars()) x = n(rng);
  for (double& x : c.vectors()) x = n(rng);
  for (double& x : c.tensors()) x = n(rng);
  return c;
}

}  // namespace btn::test
