#include "softnet/losses.hpp"

#include <cmath>
#include <string>
#include <unordered_map>

#include "softnet/error.hpp"

namespace softnet {

LabeledSet concat(const LabeledSet& a, const LabeledSet& b) {
  if (a.empty()) return b;
  if (b.empty()) return a;
  if (a.features.cols() != b.features.cols()) {
    fail(ErrorKind::shape, "cannot concatenate feature widths " + std::to_string(a.features.cols()) +
                               " and " + std::to_string(b.features.cols()));
  }
  std::vector<double> data(a.features.data().begin(), a.features.data().end());
  data.insert(data.end(), b.features.data().begin(), b.features.data().end());
  LabeledSet out{Matrix(a.size() + b.size(), a.features.cols(), std::move(data)), a.labels};
  out.labels.insert(out.labels.end(), b.labels.begin(), b.labels.end());
  return out;
}

double cosine_distance(std::span<const double> u, std::span<const double> v) {
  if (u.size() != v.size()) {
    fail(ErrorKind::shape, "cosine_distance: dimensions " + std::to_string(u.size()) + " and " +
                               std::to_string(v.size()));
  }
  double dot = 0.0, uu = 0.0, vv = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    dot += u[i] * v[i];
    uu += u[i] * u[i];
    vv += v[i] * v[i];
  }
  if (uu == 0.0 || vv == 0.0) fail(ErrorKind::degenerate, "cosine distance of a zero-norm vector");
  return 1.0 - dot / (std::sqrt(uu) * std::sqrt(vv));
}

double euclidean_distance(std::span<const double> u, std::span<const double> v) {
  if (u.size() != v.size()) {
    fail(ErrorKind::shape, "euclidean_distance: dimensions " + std::to_string(u.size()) + " and " +
                               std::to_string(v.size()));
  }
  double s = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    const double d = u[i] - v[i];
    s += d * d;
  }
  return std::sqrt(s);
}

Matrix stack_prototypes(std::span<const Prototype> prototypes) {
  if (prototypes.empty()) fail(ErrorKind::protocol, "no prototypes");
  const std::size_t dim = prototypes.front().vector.size();
  Matrix out(prototypes.size(), dim);
  for (std::size_t r = 0; r < prototypes.size(); ++r) {
    if (prototypes[r].vector.size() != dim) fail(ErrorKind::shape, "prototype dimensions differ");
    std::copy(prototypes[r].vector.begin(), prototypes[r].vector.end(), out.row_span(r).begin());
  }
  return out;
}

Var prototype_metric_loss(Tape& tape, Var embeddings, std::span<const int> labels,
                          std::span<const Prototype> prototypes) {
  std::unordered_map<int, int> column;
  for (std::size_t i = 0; i < prototypes.size(); ++i) {
    column.emplace(prototypes[i].class_id, static_cast<int>(i));
  }
  std::vector<int> targets;
  targets.reserve(labels.size());
  for (int label : labels) {
    auto it = column.find(label);
    if (it == column.end()) {
      fail(ErrorKind::protocol, "no prototype for encountered class " + std::to_string(label));
    }
    targets.push_back(it->second);
  }
  Var distances = tape.cosine_distances(embeddings, stack_prototypes(prototypes));
  return tape.softmax_cross_entropy(tape.scale(distances, -1.0), targets);
}

double prototype_metric_loss(const LabeledSet& batch, const MaskedMlp& net,
                             std::span<const Prototype> prototypes) {
  Tape tape;
  ForwardPass pass = net.forward(tape, batch.features);
  return tape.value(prototype_metric_loss(tape, pass.embedding, batch.labels, prototypes))[0];
}

Prototype compute_prototype(const Matrix& examples, int class_id, const MaskedMlp& net) {
  if (examples.rows() == 0) {
    fail(ErrorKind::degenerate, "class " + std::to_string(class_id) + " has no examples");
  }
  Matrix emb = net.embed(examples);
  Prototype p{class_id, std::vector<double>(emb.cols(), 0.0), examples.rows()};
  for (std::size_t r = 0; r < emb.rows(); ++r) {
    for (std::size_t c = 0; c < emb.cols(); ++c) p.vector[c] += emb(r, c);
  }
  for (double& v : p.vector) v /= static_cast<double>(examples.rows());
  return p;
}

}  // namespace softnet
