#include <doctest.h>

#include <cmath>

#include "helpers.hpp"
#include "softnet/error.hpp"
#include "softnet/landscape.hpp"

using namespace softnet;

namespace {

MaskedMlp probe_net(MaskMode mode) {
  const std::size_t widths[] = {4, 6, 5, 3};
  MaskedMlp net = MaskedMlp::initialize(widths, 0.5, mode, 8);
  net.freeze_mask(2);
  return net;
}

LabeledSet probe_data() {
  Rng rng(4);
  LabeledSet d{testing::random_matrix(12, 4, rng), {}};
  for (std::size_t i = 0; i < 12; ++i) d.labels.push_back(static_cast<int>(i % 3));
  return d;
}

LandscapeSlice quadratic_slice(double w, double r, std::size_t steps = 11) {
  std::vector<Matrix> params{Matrix{{w}}};
  Direction dir{{Matrix{{1.0}}}};
  auto loss = [](const std::vector<Matrix>& p) { return p[0][0] * p[0][0]; };
  LandscapeSlice s;
  s.radii = radius_grid(r, steps);
  s.center_loss = loss(params);
  s.losses.push_back(slice_along(params, dir, s.radii, loss));
  return s;
}

}  // namespace

TEST_CASE("radius grid") {
  auto g = radius_grid(0.5, 11);
  REQUIRE(g.size() == 11);
  CHECK(g.front() == -0.5);
  CHECK(g.back() == 0.5);
  CHECK(g[5] == 0.0);
  for (std::size_t i = 0; i < g.size(); ++i) CHECK(g[i] == -g[g.size() - 1 - i]);
  CHECK(radius_grid(1.0, 1) == std::vector<double>{0.0});
  CHECK_THROWS_AS(radius_grid(-1.0, 3), Error);
}

TEST_CASE("probe directions") {
  MaskedMlp net = probe_net(MaskMode::soft);
  auto dirs = probe_directions(net, 4, 9);
  REQUIRE(dirs.size() == 4);
  for (const auto& d : dirs) {
    for (std::size_t l = 0; l < net.layer_count(); ++l) {
      const Matrix mask = net.effective_mask(l);
      const Matrix& w = net.layer(l).weight;
      double live = 0.0;
      for (std::size_t i = 0; i < w.size(); ++i) {
        if (mask[i] == 0.0) CHECK(d.layers[l][i] == 0.0);
        else live += w[i] * w[i];
      }
      CHECK(std::sqrt(d.layers[l].squared_norm()) == doctest::Approx(std::sqrt(live)).epsilon(1e-12));
    }
  }
  auto again = probe_directions(net, 4, 9);
  for (std::size_t d = 0; d < 4; ++d)
    for (std::size_t l = 0; l < net.layer_count(); ++l) CHECK(again[d].layers[l].bit_equal(dirs[d].layers[l]));

  MaskedMlp hard = probe_net(MaskMode::hard);
  for (const auto& d : probe_directions(hard, 2, 9))
    for (std::size_t l = 0; l < hard.layer_count(); ++l)
      for (std::size_t i = 0; i < d.layers[l].size(); ++i)
        if (hard.masks()[l].major[i] == 0.0) CHECK(d.layers[l][i] == 0.0);
  CHECK_THROWS_AS(probe_directions(net, 0, 9), Error);
}

TEST_CASE("slices") {
  MaskedMlp net = probe_net(MaskMode::soft);
  const MaskedMlp before = net;
  LabeledSet data = probe_data();
  auto dirs = probe_directions(net, 3, 1);
  auto grid = radius_grid(1.0, 11);
  LandscapeSlice s = probe_landscape(net, dirs, grid, data);

  CHECK(s.mode == "soft");
  CHECK(s.losses.size() == 3);
  const double center = classification_loss(before, data);
  CHECK(s.center_loss == center);
  for (const auto& row : s.losses) {
    CHECK(row[5] == center);
    for (double v : row) CHECK(std::isfinite(v));
  }
  for (std::size_t l = 0; l < net.layer_count(); ++l) {
    CHECK(net.layer(l).weight.bit_equal(before.layer(l).weight));
    CHECK(net.layer(l).bias.bit_equal(before.layer(l).bias));
  }

  LandscapeSlice q = quadratic_slice(0.3, 0.5);
  for (std::size_t i = 0; i < q.radii.size(); ++i)
    CHECK(q.losses[0][i] == doctest::Approx((0.3 + q.radii[i]) * (0.3 + q.radii[i])).epsilon(1e-14));

  const std::string csv = slice_csv(std::span(&s, 1));
  CHECK(csv.rfind("mode,direction,radius,loss\nsoft,0,-1,", 0) == 0);
}

TEST_CASE("flatness score") {
  LandscapeSlice flat;
  flat.radii = radius_grid(1, 5);
  flat.center_loss = 2.0;
  flat.losses = {std::vector<double>(5, 2.0), std::vector<double>(5, 2.0)};
  CHECK(flatness_score(flat) == 0.0);

  CHECK(flatness_score(quadratic_slice(0.0, 1.0)) == doctest::Approx(1.0));
  for (double w : {0.0, 0.4, -1.3})
    CHECK(flatness_score(quadratic_slice(w, 0.5)) <= flatness_score(quadratic_slice(w, 1.0)));
}
