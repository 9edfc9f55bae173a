#pragma once

#include "oracles.hpp"
#include "softnet/masked_network.hpp"
#include "softnet/matrix.hpp"
#include "softnet/rng.hpp"

namespace testing {

inline oracle::Mat to_mat(const softnet::Matrix& m) {
  oracle::Mat out(m.rows(), oracle::Vec(m.cols()));
  for (std::size_t r = 0; r < m.rows(); ++r)
    for (std::size_t c = 0; c < m.cols(); ++c) out[r][c] = m(r, c);
  return out;
}

inline softnet::Matrix random_matrix(std::size_t rows, std::size_t cols, softnet::Rng& rng,
                                     double lo = -1.0, double hi = 1.0) {
  softnet::Matrix m(rows, cols);
  for (double& v : m.data()) v = rng.uniform(lo, hi);
  return m;
}

/// Oracle layers mirroring the network's weights and effective masks.
inline std::vector<oracle::Layer> oracle_layers(const softnet::MaskedMlp& net) {
  std::vector<oracle::Layer> out;
  for (std::size_t l = 0; l < net.layer_count(); ++l) {
    const auto& L = net.layer(l);
    out.push_back({to_mat(L.weight), to_mat(L.bias)[0], to_mat(net.effective_mask(l))});
  }
  return out;
}

}  // namespace testing
