#include <doctest.h>

#include <cmath>

#include "helpers.hpp"
#include "softnet/error.hpp"
#include "softnet/losses.hpp"

using namespace softnet;

namespace {

std::vector<double> v(std::initializer_list<double> xs) { return xs; }

MaskedMlp small_net(std::uint64_t seed) {
  const std::size_t widths[] = {4, 6, 5, 3};
  MaskedMlp net = MaskedMlp::initialize(widths, 0.6, MaskMode::soft, seed);
  net.freeze_mask(seed + 1);
  // positive biases keep embeddings away from the dead-ReLU zero vector
  for (double& b : net.layer(1).bias.data()) b = 0.5;
  return net;
}

}  // namespace

TEST_CASE("cosine distance") {
  CHECK(cosine_distance(v({1, 2, 3}), v({1, 2, 3})) == doctest::Approx(0.0));
  CHECK(cosine_distance(v({1, 0}), v({0, 1})) == doctest::Approx(1.0));
  CHECK(cosine_distance(v({1, 0}), v({-1, 0})) == doctest::Approx(2.0));
  CHECK(cosine_distance(v({3, -1}), v({2, 5})) ==
        doctest::Approx(cosine_distance(v({3 * 7.5, -7.5}), v({0.2, 0.5}))));
  try {
    cosine_distance(v({0, 0}), v({1, 0}));
    FAIL("no error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::degenerate);
  }
}

TEST_CASE("euclidean distance") {
  CHECK(euclidean_distance(v({1, 2}), v({1, 2})) == 0.0);
  CHECK(euclidean_distance(v({0, 0}), v({3, 4})) == 5.0);
  try {
    euclidean_distance(v({0, 0}), v({1, 2, 3}));
    FAIL("no error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::shape);
  }
}

TEST_CASE("prototype metric loss") {
  MaskedMlp net = small_net(3);
  Rng rng(12);
  LabeledSet batch{testing::random_matrix(6, 4, rng), {0, 1, 2, 2, 1, 0}};
  std::vector<Prototype> protos;
  for (int k = 0; k < 3; ++k) protos.push_back(compute_prototype(testing::random_matrix(4, 4, rng), k, net));

  SUBCASE("single prototype gives zero loss") {
    LabeledSet one{batch.features, std::vector<int>(6, 1)};
    std::vector<Prototype> single{protos[1]};
    CHECK(prototype_metric_loss(one, net, single) == doctest::Approx(0.0));
  }
  SUBCASE("correct class nearer means lower loss") {
    std::vector<Prototype> ab{{0, {1, 0}, 1}, {1, {0, 1}, 1}};
    std::vector<int> lab{0};
    auto loss_at = [&](std::vector<double> e) {
      Tape u;
      return u.value(prototype_metric_loss(u, u.constant(Matrix(1, 2, e)), lab, ab))[0];
    };
    CHECK(loss_at({1, 0.1}) < loss_at({0.1, 1}));
    CHECK(loss_at({1, 0.1}) < loss_at({1, 0.3}));
    CHECK(loss_at({1, 0.3}) < loss_at({1, 0.6}));
  }
  SUBCASE("matches the per-example oracle") {
    auto emb = testing::to_mat(net.embed(batch.features));
    oracle::Mat p;
    std::vector<int> ids;
    for (const auto& pr : protos) {
      p.push_back(pr.vector);
      ids.push_back(pr.class_id);
    }
    const double got = prototype_metric_loss(batch, net, protos);
    CHECK(got == doctest::Approx(oracle::prototype_loss(emb, batch.labels, ids, p)).epsilon(1e-12));
    CHECK(got > 0.0);
  }
  SUBCASE("gradients through the network agree with central differences") {
    Tape t;
    ForwardPass pass = net.forward(t, batch.features);
    Gradients g = t.backward(prototype_metric_loss(t, pass.embedding, batch.labels, protos));
    for (std::size_t l = 0; l < 2; ++l) {
      const Matrix& analytic = g.of(pass.weights[l]);
      auto f = [&](const oracle::Vec& flat) {
        MaskedMlp copy = net;
        std::copy(flat.begin(), flat.end(), copy.layer(l).weight.data().begin());
        return prototype_metric_loss(batch, copy, protos);
      };
      const Matrix& w = net.layer(l).weight;
      auto fd = oracle::finite_difference(f, oracle::Vec(w.data().begin(), w.data().end()));
      for (std::size_t i = 0; i < fd.size(); ++i) CHECK(oracle::rel_error(analytic[i], fd[i]) < 1e-4);
    }
  }
  SUBCASE("unknown class is a protocol error") {
    LabeledSet stray{batch.features, {0, 1, 2, 2, 1, 9}};
    try {
      prototype_metric_loss(stray, net, protos);
      FAIL("no error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::protocol);
    }
  }
}

TEST_CASE("prototype computation") {
  std::vector<MaskedLayer> layers{{Matrix{{1, 0, -1}, {0, 1, 1}}, Matrix(1, 3), Matrix(2, 3, 1.0), 1.0},
                                  {Matrix(3, 2, 1.0), Matrix(1, 2), Matrix(3, 2, 1.0), 1.0}};
  MaskedMlp net(layers, MaskMode::dense);
  Prototype one = compute_prototype(Matrix{{2, 3}}, 4, net);
  CHECK(one.class_id == 4);
  CHECK(one.sample_count == 1);
  CHECK(one.vector == v({2, 3, 1}));

  std::vector<MaskedLayer> linear{{Matrix{{1, 0}, {0, 1}}, Matrix(1, 2), Matrix(2, 2, 1.0), 1.0},
                                  {Matrix(2, 2, 1.0), Matrix(1, 2), Matrix(2, 2, 1.0), 1.0}};
  MaskedMlp id(linear, MaskMode::dense);
  Prototype sym = compute_prototype(Matrix{{1, 0}, {0, 1}}, 0, id);
  CHECK(sym.vector == v({0.5, 0.5}));

  Rng rng(4);
  MaskedMlp sn = small_net(9);
  Matrix five = testing::random_matrix(5, 4, rng);
  Prototype p = compute_prototype(five, 2, sn);
  auto emb = testing::to_mat(sn.embed(five));
  CHECK(p.sample_count == 5);
  for (std::size_t c = 0; c < p.vector.size(); ++c) {
    double s = 0;
    for (const auto& row : emb) s += row[c];
    CHECK(p.vector[c] == doctest::Approx(s / 5.0).epsilon(1e-14));
  }
  CHECK_THROWS_AS(compute_prototype(Matrix(0, 4), 0, sn), Error);
}

TEST_CASE("zero-sum prototype from opposite embeddings") {
  // single layer: the embedding is the raw input, so e and −e both survive
  std::vector<MaskedLayer> layers{{Matrix(2, 2, 1.0), Matrix(1, 2), Matrix(2, 2, 1.0), 1.0}};
  MaskedMlp net(layers, MaskMode::dense);
  Prototype p = compute_prototype(Matrix{{1.5, -2}, {-1.5, 2}}, 0, net);
  CHECK(p.vector == v({0, 0}));
}

TEST_CASE("concatenation") {
  LabeledSet a{Matrix{{1, 2}}, {0}}, b{Matrix{{3, 4}, {5, 6}}, {1, 2}};
  LabeledSet c = concat(a, b);
  CHECK(c.features == Matrix{{1, 2}, {3, 4}, {5, 6}});
  CHECK(c.labels == std::vector<int>{0, 1, 2});
  CHECK(concat(LabeledSet{}, b) == b);
  CHECK_THROWS_AS(concat(a, LabeledSet{Matrix{{1}}, {0}}), Error);
}
