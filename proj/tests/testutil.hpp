#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "cia/network.hpp"
#include "cia/prng.hpp"
#include "cia/tensor.hpp"

namespace testutil {

inline std::vector<float> as_vec(const cia::Tensor& t) {
  return std::vector<float>(t.data(), t.data() + t.size());
}

/// Relative L2 distance between a finite-difference gradient and the
/// analytic one: ||fd - an|| / max(||an||, floor).
inline double gradient_rel_error(const cia::Tensor& fd, const cia::Tensor& an) {
  double num = 0.0, den = 0.0;
  for (int i = 0; i < fd.size(); ++i) {
    const double d = static_cast<double>(fd[i]) - static_cast<double>(an[i]);
    num += d * d;
    den += static_cast<double>(an[i]) * static_cast<double>(an[i]);
  }
  return std::sqrt(num) / std::max(std::sqrt(den), 1e-8);
}

inline cia::Tensor random_tensor(std::vector<int> shape, cia::SplitMix64& rng, double lo = -2.0,
                                 double hi = 2.0) {
  cia::Tensor t(std::move(shape));
  for (int i = 0; i < t.size(); ++i) {
    t[i] = static_cast<float>(lo + (hi - lo) * rng.next_unit());
  }
  return t;
}

inline cia::Tensor random_image(int h, int w, int c, cia::SplitMix64& rng) {
  cia::Tensor t(std::vector<int>{h, w, c});
  for (int i = 0; i < t.size(); ++i) t[i] = static_cast<float>(rng.next_unit());
  return t;
}

/// Tiny classifier over small inputs covering every layer kind; cheap enough
/// for finite differencing over the whole input.
inline cia::Network tiny_network(uint64_t seed, int h = 8, int w = 8) {
  std::vector<cia::LayerSpec> ls;
  ls.push_back(cia::LayerSpec::conv(3, 3, 4, cia::Padding::Zero));
  ls.push_back(cia::LayerSpec::relu());
  ls.push_back(cia::LayerSpec::avgpool(2));
  ls.push_back(cia::LayerSpec::flatten());
  ls.push_back(cia::LayerSpec::dense(h / 2 * (w / 2) * 4, 10));
  cia::SplitMix64 rng(seed);
  for (auto& l : ls) {
    if (!l.trainable()) continue;
    for (int i = 0; i < l.weights.size(); ++i) {
      l.weights[i] = static_cast<float>((rng.next_unit() - 0.5) * 0.5);
    }
    for (int i = 0; i < l.bias.size(); ++i) {
      l.bias[i] = static_cast<float>((rng.next_unit() - 0.5) * 0.1);
    }
  }
  return cia::Network({h, w, 3}, 10, std::move(ls));
}

}  // namespace testutil
