#include <doctest.h>

#include <cmath>
#include <cstring>

#include "helpers.hpp"
#include "oracles.hpp"
#include "softnet/autodiff.hpp"
#include "softnet/error.hpp"

using namespace softnet;

namespace {

ErrorKind kind_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("expected an error");
  return ErrorKind::contract;
}

}  // namespace

TEST_CASE("affine layer") {
  Tape t;
  SUBCASE("identity weight") {
    Var y = t.affine(t.constant({{1, 2}}), t.parameter({{1, 0}, {0, 1}}), t.parameter({{0, 0}}));
    CHECK(t.value(y) == Matrix{{1, 2}});
  }
  SUBCASE("hand sum") {
    Var y = t.affine(t.constant({{1, 1}}), t.parameter({{2}, {3}}), t.parameter({{1}}));
    CHECK(t.value(y) == Matrix{{6}});
  }
  SUBCASE("matches the scalar triple loop") {
    Rng rng(7);
    Matrix x = testing::random_matrix(3, 4, rng), w = testing::random_matrix(4, 2, rng);
    Matrix b(1, 2);
    auto ref = oracle::matmul(testing::to_mat(x), testing::to_mat(w));
    Var y = t.affine(t.constant(x), t.parameter(w), t.parameter(b));
    for (std::size_t i = 0; i < 3; ++i)
      for (std::size_t j = 0; j < 2; ++j) CHECK(t.value(y)(i, j) == doctest::Approx(ref[i][j]).epsilon(1e-14));
  }
  SUBCASE("shape errors name both operands") {
    try {
      t.affine(t.constant(Matrix(1, 3)), t.parameter(Matrix(2, 2)), t.parameter(Matrix(1, 2)));
      FAIL("no error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::shape);
      CHECK(std::string(e.what()).find("1x3") != std::string::npos);
      CHECK(std::string(e.what()).find("2x2") != std::string::npos);
    }
    CHECK(kind_of([&] { t.affine(t.constant(Matrix(1, 2)), t.parameter(Matrix(2, 2)), t.parameter(Matrix(1, 3))); }) ==
          ErrorKind::shape);
  }
}

TEST_CASE("elementwise product") {
  Tape t;
  CHECK(t.value(t.mul(t.constant({{2, 3}}), t.constant({{1, 1}}))) == Matrix{{2, 3}});
  CHECK(t.value(t.mul(t.constant({{2, 3}}), t.constant({{0, 0}}))) == Matrix{{0, 0}});

  Var a = t.parameter({{1.5, -2.0}, {0.25, 4.0}});
  Var b = t.parameter({{3.0, 5.0}, {-1.0, 0.5}});
  Gradients g = t.backward(t.sum(t.mul(a, b)));
  CHECK(g.of(a) == t.value(b));
  CHECK(g.of(b) == t.value(a));
  CHECK(kind_of([&] { t.mul(t.constant(Matrix(1, 2)), t.constant(Matrix(2, 1))); }) == ErrorKind::shape);
}

TEST_CASE("softmax cross-entropy") {
  Tape t;
  std::vector<int> zero{0};
  CHECK(t.value(t.softmax_cross_entropy(t.constant({{10, -10}}), zero))[0] < 1e-4);
  CHECK(t.value(t.softmax_cross_entropy(t.constant({{0, 0}}), zero))[0] == doctest::Approx(std::log(2.0)));

  Rng rng(3);
  Matrix logits = testing::random_matrix(6, 4, rng, -5, 5);
  std::vector<int> labels{0, 3, 1, 2, 2, 0};
  CHECK(t.value(t.softmax_cross_entropy(t.constant(logits), labels))[0] ==
        doctest::Approx(oracle::softmax_cross_entropy(testing::to_mat(logits), labels)).epsilon(1e-12));

  std::vector<int> bad{2};
  CHECK(kind_of([&] { t.softmax_cross_entropy(t.constant({{0, 0}}), bad); }) == ErrorKind::index);
  std::vector<int> neg{-1};
  CHECK(kind_of([&] { t.softmax_cross_entropy(t.constant({{0, 0}}), neg); }) == ErrorKind::index);

  SUBCASE("finite for logits of magnitude 1e3") {
    std::vector<int> l{1, 0};
    Var z = t.parameter({{1e3, -1e3, 0}, {-1e3, 1e3, 5e2}});
    Var loss = t.softmax_cross_entropy(z, l);
    CHECK(std::isfinite(t.value(loss)[0]));
    CHECK(t.value(loss)[0] == doctest::Approx(2e3));
    CHECK(t.backward(loss).of(z).all_finite());
  }
}

TEST_CASE("backward") {
  SUBCASE("linear sum") {
    Tape t;
    Var w = t.parameter({{1, 2}, {3, 4}});
    CHECK(t.backward(t.sum(w)).of(w) == Matrix::ones(2, 2));
  }
  SUBCASE("squared norm") {
    Tape t;
    Var w = t.parameter({{3, 4}});
    CHECK(t.backward(t.sum_squares(w)).of(w) == Matrix{{6, 8}});
  }
  SUBCASE("non-scalar root") {
    Tape t;
    Var w = t.parameter({{3, 4}});
    CHECK(kind_of([&] { t.backward(w); }) == ErrorKind::contract);
  }
  SUBCASE("adjoints are fresh on every pass") {
    Tape t;
    Var w = t.parameter({{3, 4}});
    Var loss = t.sum_squares(w);
    t.backward(loss);
    CHECK(t.backward(loss).of(w) == Matrix{{6, 8}});
  }
  SUBCASE("a moved tape still differentiates") {
    Tape t;
    Var w = t.parameter({{1, -2}});
    Var loss = t.sum(t.relu(t.mul(w, t.constant({{2, 2}}))));
    Tape moved = std::move(t);
    CHECK(moved.backward(loss).of(w) == Matrix{{2, 0}});
  }
}

TEST_CASE("reverse-mode gradients agree with central differences on random MLPs") {
  Rng rng(2024);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t in = 1 + rng.below(6), hidden = 1 + rng.below(16), out = 2 + rng.below(4);
    const std::size_t batch = 1 + rng.below(8);
    Matrix x = testing::random_matrix(batch, in, rng);
    std::vector<int> labels;
    for (std::size_t i = 0; i < batch; ++i) labels.push_back(static_cast<int>(rng.below(out)));
    std::vector<Matrix> params{testing::random_matrix(in, hidden, rng), testing::random_matrix(1, hidden, rng),
                               testing::random_matrix(hidden, out, rng), testing::random_matrix(1, out, rng)};

    Tape t;
    std::vector<Var> vars;
    for (const auto& p : params) vars.push_back(t.parameter(p));
    Var h = t.relu(t.affine(t.constant(x), vars[0], vars[1]));
    Var loss = t.softmax_cross_entropy(t.affine(h, vars[2], vars[3]), labels);
    Gradients g = t.backward(loss);

    for (std::size_t k = 0; k < params.size(); ++k) {
      auto f = [&](const oracle::Vec& flat) {
        std::vector<oracle::Layer> layers{
            {testing::to_mat(params[0]), testing::to_mat(params[1])[0], oracle::Mat(in, oracle::Vec(hidden, 1.0))},
            {testing::to_mat(params[2]), testing::to_mat(params[3])[0], oracle::Mat(hidden, oracle::Vec(out, 1.0))}};
        oracle::Mat m(params[k].rows(), oracle::Vec(params[k].cols()));
        for (std::size_t i = 0; i < flat.size(); ++i) m[i / params[k].cols()][i % params[k].cols()] = flat[i];
        if (k == 0) layers[0].weight = m;
        if (k == 1) layers[0].bias = m[0];
        if (k == 2) layers[1].weight = m;
        if (k == 3) layers[1].bias = m[0];
        return oracle::softmax_cross_entropy(oracle::mlp_forward(layers, testing::to_mat(x)).first, labels);
      };
      oracle::Vec flat(params[k].data().begin(), params[k].data().end());
      oracle::Vec fd = oracle::finite_difference(f, flat);
      for (std::size_t i = 0; i < fd.size(); ++i) {
        CHECK(oracle::rel_error(g.of(vars[k])[i], fd[i]) < 1e-4);
      }
    }
  }
}

TEST_CASE("cosine distance rows: value and gradient") {
  Rng rng(11);
  Matrix e = testing::random_matrix(3, 4, rng), refs = testing::random_matrix(2, 4, rng);
  Tape t;
  Var ev = t.parameter(e);
  Var d = t.cosine_distances(ev, refs);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t k = 0; k < 2; ++k)
      CHECK(t.value(d)(i, k) ==
            doctest::Approx(oracle::cosine_distance(testing::to_mat(e)[i], testing::to_mat(refs)[k])));
  Matrix weights = testing::random_matrix(3, 2, rng);
  Var loss = t.sum(t.mul(d, t.constant(weights)));
  Gradients g = t.backward(loss);
  auto f = [&](const oracle::Vec& flat) {
    double s = 0;
    for (std::size_t i = 0; i < 3; ++i)
      for (std::size_t k = 0; k < 2; ++k) {
        oracle::Vec row(flat.begin() + static_cast<long>(4 * i), flat.begin() + static_cast<long>(4 * i + 4));
        s += weights(i, k) * oracle::cosine_distance(row, testing::to_mat(refs)[k]);
      }
    return s;
  };
  auto fd = oracle::finite_difference(f, oracle::Vec(e.data().begin(), e.data().end()));
  for (std::size_t i = 0; i < fd.size(); ++i) CHECK(oracle::rel_error(g.of(ev)[i], fd[i]) < 1e-6);

  CHECK(kind_of([&] { Tape u; u.cosine_distances(u.constant(Matrix(1, 4)), refs); }) == ErrorKind::degenerate);
}

TEST_CASE("sgd step") {
  CHECK(sgd_step({{1}}, {{2}}, 0.5, Matrix{{1}}) == Matrix{{0}});
  CHECK(sgd_step({{1}}, {{2}}, 0.5, Matrix{{0}}).bit_equal(Matrix{{1}}));
  CHECK(sgd_step({{1}}, {{2}}, 0.5, Matrix{{0.5}}) == Matrix{{0.5}});
  CHECK(sgd_step({{1}}, {{2}}, 0.5) == Matrix{{0}});
  CHECK(kind_of([] { sgd_step({{1}}, {{2}}, 0.0); }) == ErrorKind::config);
  CHECK(kind_of([] { sgd_step({{1}}, {{2}}, -1.0); }) == ErrorKind::config);
  CHECK(kind_of([] { sgd_step({{1}}, {{2, 3}}, 0.1); }) == ErrorKind::shape);

  SUBCASE("zero-mask entries never move") {
    Rng rng(5);
    for (int trial = 0; trial < 50; ++trial) {
      Matrix p = testing::random_matrix(4, 5, rng, -1e3, 1e3);
      Matrix g = testing::random_matrix(4, 5, rng, -1e3, 1e3);
      Matrix m = testing::random_matrix(4, 5, rng, 0, 1);
      for (double& v : m.data()) v = v < 0.4 ? 0.0 : v;
      Matrix q = sgd_step(p, g, rng.uniform(1e-3, 10.0), m);
      for (std::size_t i = 0; i < p.size(); ++i) {
        if (m[i] == 0.0) CHECK(std::memcmp(&p[i], &q[i], sizeof(double)) == 0);
      }
    }
  }
}

TEST_CASE("identical seeds and op sequences give bit-identical parameters") {
  auto run = [] {
    Rng rng(99);
    Matrix w = testing::random_matrix(3, 2, rng), b(1, 2);
    Matrix x = testing::random_matrix(5, 3, rng);
    std::vector<int> y{0, 1, 1, 0, 1};
    for (int step = 0; step < 25; ++step) {
      Tape t;
      Var wv = t.parameter(w), bv = t.parameter(b);
      Gradients g = t.backward(t.softmax_cross_entropy(t.affine(t.constant(x), wv, bv), y));
      sgd_update(w, g.of(wv), 0.1);
      sgd_update(b, g.of(bv), 0.1);
    }
    return w;
  };
  CHECK(run().bit_equal(run()));
}
