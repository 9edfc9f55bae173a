#include "softnet/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "softnet/error.hpp"

namespace softnet {

namespace {

void accumulate(Matrix& into, const Matrix& delta) {
  auto dst = into.data();
  auto src = delta.data();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

}  // namespace

const Matrix& Gradients::of(Var v) const {
  if (v.id >= adjoints_.size()) fail(ErrorKind::index, "gradient requested for unknown node");
  return adjoints_[v.id];
}

const Tape::Node& Tape::node(Var v) const {
  if (v.id >= nodes_.size()) fail(ErrorKind::index, "variable is not on this tape");
  return nodes_[v.id];
}

Var Tape::push(Matrix value, std::vector<std::size_t> inputs, Backprop backprop) {
  if (!value.all_finite()) fail(ErrorKind::numeric, "non-finite value produced on tape");
  nodes_.push_back(Node{std::move(value), std::move(inputs), std::move(backprop), false});
  return Var{nodes_.size() - 1};
}

Var Tape::constant(Matrix value) { return push(std::move(value), {}, nullptr); }

Var Tape::parameter(Matrix value) {
  Var v = push(std::move(value), {}, nullptr);
  nodes_[v.id].parameter = true;
  return v;
}

Var Tape::affine(Var input, Var weight, Var bias) {
  const Matrix& x = node(input).value;
  const Matrix& w = node(weight).value;
  const Matrix& b = node(bias).value;
  if (x.cols() != w.rows()) {
    fail(ErrorKind::shape, "affine: input " + x.shape_string() + " incompatible with weight " +
                               w.shape_string());
  }
  if (b.rows() != 1 || b.cols() != w.cols()) {
    fail(ErrorKind::shape, "affine: bias " + b.shape_string() + " incompatible with weight " +
                               w.shape_string());
  }
  const std::size_t n = x.rows(), k = x.cols(), m = w.cols();
  Matrix out(n, m);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < m; ++j) out(i, j) = b(0, j);
    for (std::size_t p = 0; p < k; ++p) {
      const double xv = x(i, p);
      for (std::size_t j = 0; j < m; ++j) out(i, j) += xv * w(p, j);
    }
  }
  const std::size_t xi = input.id, wi = weight.id, bi = bias.id;
  return push(std::move(out), {xi, wi, bi}, [xi, wi, bi, n, k, m](const Tape& tape, std::vector<Matrix>& adj, std::size_t self) {
    const Matrix& g = adj[self];
    const Matrix& xv = tape.nodes_[xi].value;
    const Matrix& wv = tape.nodes_[wi].value;
    Matrix& gx = adj[xi];
    Matrix& gw = adj[wi];
    Matrix& gb = adj[bi];
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < m; ++j) {
        const double gij = g(i, j);
        gb(0, j) += gij;
        for (std::size_t p = 0; p < k; ++p) {
          gx(i, p) += gij * wv(p, j);
          gw(p, j) += xv(i, p) * gij;
        }
      }
    }
  });
}

Var Tape::mul(Var a, Var b) {
  const Matrix& av = node(a).value;
  const Matrix& bv = node(b).value;
  require_same_shape(av, bv, "elementwise_mul");
  Matrix out(av.rows(), av.cols());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
  const std::size_t ai = a.id, bi = b.id;
  return push(std::move(out), {ai, bi}, [ai, bi](const Tape& tape, std::vector<Matrix>& adj, std::size_t self) {
    const Matrix& g = adj[self];
    const Matrix& x = tape.nodes_[ai].value;
    const Matrix& y = tape.nodes_[bi].value;
    for (std::size_t i = 0; i < g.size(); ++i) {
      adj[ai][i] += g[i] * y[i];
      adj[bi][i] += g[i] * x[i];
    }
  });
}

Var Tape::add(Var a, Var b) {
  const Matrix& av = node(a).value;
  const Matrix& bv = node(b).value;
  require_same_shape(av, bv, "add");
  Matrix out(av.rows(), av.cols());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i];
  const std::size_t ai = a.id, bi = b.id;
  return push(std::move(out), {ai, bi}, [ai, bi](const Tape&, std::vector<Matrix>& adj, std::size_t self) {
    accumulate(adj[ai], adj[self]);
    accumulate(adj[bi], adj[self]);
  });
}

Var Tape::scale(Var a, double factor) {
  Matrix out = node(a).value;
  for (double& v : out.data()) v *= factor;
  const std::size_t ai = a.id;
  return push(std::move(out), {ai}, [ai, factor](const Tape&, std::vector<Matrix>& adj, std::size_t self) {
    const Matrix& g = adj[self];
    for (std::size_t i = 0; i < g.size(); ++i) adj[ai][i] += factor * g[i];
  });
}

Var Tape::relu(Var a) {
  Matrix out = node(a).value;
  for (double& v : out.data()) v = v > 0.0 ? v : 0.0;
  const std::size_t ai = a.id;
  return push(std::move(out), {ai}, [ai](const Tape& tape, std::vector<Matrix>& adj, std::size_t self) {
    const Matrix& g = adj[self];
    const Matrix& x = tape.nodes_[ai].value;
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (x[i] > 0.0) adj[ai][i] += g[i];
    }
  });
}

Var Tape::sum(Var a) {
  Matrix out(1, 1, node(a).value.sum());
  const std::size_t ai = a.id;
  return push(std::move(out), {ai}, [ai](const Tape&, std::vector<Matrix>& adj, std::size_t self) {
    const double g = adj[self][0];
    for (double& v : adj[ai].data()) v += g;
  });
}

Var Tape::sum_squares(Var a) {
  Matrix out(1, 1, node(a).value.squared_norm());
  const std::size_t ai = a.id;
  return push(std::move(out), {ai}, [ai](const Tape& tape, std::vector<Matrix>& adj, std::size_t self) {
    const double g = adj[self][0];
    const Matrix& x = tape.nodes_[ai].value;
    for (std::size_t i = 0; i < x.size(); ++i) adj[ai][i] += 2.0 * x[i] * g;
  });
}

Var Tape::softmax_cross_entropy(Var logits, std::span<const int> labels) {
  const Matrix& z = node(logits).value;
  if (labels.size() != z.rows()) {
    fail(ErrorKind::shape, "softmax_cross_entropy: " + std::to_string(labels.size()) +
                               " labels for " + std::to_string(z.rows()) + " rows");
  }
  if (z.rows() == 0) fail(ErrorKind::shape, "softmax_cross_entropy: empty batch");
  const std::size_t n = z.rows(), m = z.cols();
  Matrix probs(n, m);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const int label = labels[i];
    if (label < 0 || static_cast<std::size_t>(label) >= m) {
      fail(ErrorKind::index, "softmax_cross_entropy: label " + std::to_string(label) +
                                 " outside [0, " + std::to_string(m) + ")");
    }
    double peak = z(i, 0);
    for (std::size_t j = 1; j < m; ++j) peak = std::max(peak, z(i, j));
    double denom = 0.0;
    for (std::size_t j = 0; j < m; ++j) {
      probs(i, j) = std::exp(z(i, j) - peak);
      denom += probs(i, j);
    }
    for (std::size_t j = 0; j < m; ++j) probs(i, j) /= denom;
    total += -(z(i, static_cast<std::size_t>(label)) - peak - std::log(denom));
  }
  std::vector<int> owned(labels.begin(), labels.end());
  const std::size_t zi = logits.id;
  return push(Matrix(1, 1, total / static_cast<double>(n)), {zi},
              [zi, probs = std::move(probs), owned = std::move(owned), n, m](const Tape&, std::vector<Matrix>& adj, std::size_t self) {
                const double g = adj[self][0] / static_cast<double>(n);
                for (std::size_t i = 0; i < n; ++i) {
                  for (std::size_t j = 0; j < m; ++j) {
                    const double target = static_cast<std::size_t>(owned[i]) == j ? 1.0 : 0.0;
                    adj[zi](i, j) += g * (probs(i, j) - target);
                  }
                }
              });
}

Var Tape::cosine_distances(Var embeddings, const Matrix& references) {
  const Matrix& e = node(embeddings).value;
  if (e.cols() != references.cols()) {
    fail(ErrorKind::shape, "cosine_distances: embeddings " + e.shape_string() +
                               " incompatible with references " + references.shape_string());
  }
  const std::size_t n = e.rows(), k = references.rows(), d = e.cols();
  std::vector<double> enorm(n), rnorm(k);
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (double v : e.row_span(i)) s += v * v;
    enorm[i] = std::sqrt(s);
    if (enorm[i] == 0.0) fail(ErrorKind::degenerate, "cosine distance of a zero-norm embedding");
  }
  for (std::size_t r = 0; r < k; ++r) {
    double s = 0.0;
    for (double v : references.row_span(r)) s += v * v;
    rnorm[r] = std::sqrt(s);
    if (rnorm[r] == 0.0) fail(ErrorKind::degenerate, "cosine distance to a zero-norm reference");
  }
  Matrix dots(n, k);
  Matrix out(n, k);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t r = 0; r < k; ++r) {
      double dot = 0.0;
      for (std::size_t c = 0; c < d; ++c) dot += e(i, c) * references(r, c);
      dots(i, r) = dot;
      out(i, r) = 1.0 - dot / (enorm[i] * rnorm[r]);
    }
  }
  const std::size_t ei = embeddings.id;
  return push(std::move(out), {ei},
              [ei, refs = references, enorm = std::move(enorm), rnorm = std::move(rnorm),
               dots = std::move(dots), n, k, d](const Tape& tape, std::vector<Matrix>& adj, std::size_t self) {
                const Matrix& g = adj[self];
                const Matrix& ev = tape.nodes_[ei].value;
                for (std::size_t i = 0; i < n; ++i) {
                  const double ne = enorm[i];
                  for (std::size_t r = 0; r < k; ++r) {
                    const double gir = g(i, r);
                    if (gir == 0.0) continue;
                    const double np = rnorm[r];
                    const double cosv = dots(i, r) / (ne * np);
                    // d(1 - cos)/de = -(p / (|e||p|) - cos · e / |e|²)
                    for (std::size_t c = 0; c < d; ++c) {
                      const double dcos = refs(r, c) / (ne * np) - cosv * ev(i, c) / (ne * ne);
                      adj[ei](i, c) -= gir * dcos;
                    }
                  }
                }
              });
}

Gradients Tape::backward(Var root) {
  const Matrix& rv = node(root).value;
  if (rv.rows() != 1 || rv.cols() != 1) {
    fail(ErrorKind::contract, "backward requires a scalar root, got " + rv.shape_string());
  }
  std::vector<Matrix> adj;
  adj.reserve(nodes_.size());
  for (const auto& n : nodes_) adj.emplace_back(n.value.rows(), n.value.cols());
  adj[root.id][0] = 1.0;
  for (std::size_t i = root.id + 1; i-- > 0;) {
    if (nodes_[i].backprop) nodes_[i].backprop(*this, adj, i);
  }
  return Gradients(std::move(adj));
}

void sgd_update(Matrix& params, const Matrix& grads, double lr, const std::optional<Matrix>& mask) {
  if (!(lr > 0.0)) fail(ErrorKind::config, "learning rate must be positive");
  require_same_shape(params, grads, "sgd_step");
  if (mask) require_same_shape(params, *mask, "sgd_step mask");
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double m = mask ? (*mask)[i] : 1.0;
    if (m == 0.0) continue;
    params[i] -= lr * (grads[i] * m);
  }
}

Matrix sgd_step(const Matrix& params, const Matrix& grads, double lr, const std::optional<Matrix>& mask) {
  Matrix out = params;
  sgd_update(out, grads, lr, mask);
  return out;
}

}  // namespace softnet
