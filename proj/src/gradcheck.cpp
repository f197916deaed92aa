#include "mcne/gradcheck.hpp"

#include <cmath>
#include <utility>

#include "mcne/bpr_trainer.hpp"
#include "mcne/message_passing.hpp"

namespace mcne {

namespace {

constexpr double kKinkMargin = 1e-3;
constexpr int kMaxDraws = 1000;

Matrix random_matrix(Eigen::Index rows, Eigen::Index cols, Rng& rng, double scale = 1.0) {
  std::normal_distribution<double> dist(0.0, scale);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
  return m;
}

Vector random_vector(Eigen::Index n, Rng& rng, double scale = 1.0) {
  return random_matrix(n, 1, rng, scale).col(0);
}

std::span<double> span_of(Matrix& m) { return {m.data(), static_cast<std::size_t>(m.size())}; }
std::span<double> span_of(Vector& v) { return {v.data(), static_cast<std::size_t>(v.size())}; }
std::span<const double> span_of(const Matrix& m) { return {m.data(), static_cast<std::size_t>(m.size())}; }
std::span<const double> span_of(const Vector& v) { return {v.data(), static_cast<std::size_t>(v.size())}; }

GradCheckReport check_dense_relu(Rng& rng, double eps) {
  const int d = 5, out = 3, n = 3;
  Vector self, b, probe;
  Matrix w;
  std::vector<Vector> messages;
  for (int draw = 0;; ++draw) {
    if (draw == kMaxDraws) throw NumericError("dense_relu: could not draw kink-free inputs");
    self = random_vector(d, rng);
    messages.clear();
    for (int i = 0; i < n; ++i) messages.push_back(random_vector(d, rng));
    w = random_matrix(out, 2 * d, rng, 0.5);
    b = random_vector(out, rng, 0.1);
    probe = random_vector(out, rng);
    Vector pooled = Vector::Zero(d);
    for (const auto& m : messages) pooled += m / n;
    Vector joined(2 * d);
    joined << pooled, self;
    if ((w * joined + b).cwiseAbs().minCoeff() >= kKinkMargin) break;
  }
  auto loss = [&] { return probe.dot(receive_update(self, messages, w, b)); };
  const ReceiveGrads g = receive_update_backward(self, messages, w, b, probe);

  GradCheckReport r;
  r.op = "dense_relu";
  check_coordinates(r, "dense_w", span_of(w), span_of(g.dense_w), loss, eps);
  check_coordinates(r, "dense_b", span_of(b), span_of(g.dense_b), loss, eps);
  check_coordinates(r, "self", span_of(self), span_of(g.self), loss, eps);
  for (int i = 0; i < n; ++i) {
    check_coordinates(r, "message" + std::to_string(i), span_of(messages[i]), span_of(g.messages[i]), loss, eps);
  }
  return r;
}

GradCheckReport check_attention(Rng& rng, double eps) {
  const int rows = 4, d = 4, t = 5;
  Matrix sender, receiver, w;
  Vector b, h, probe;
  for (int draw = 0;; ++draw) {
    if (draw == kMaxDraws) throw NumericError("attention_softmax: could not draw kink-free inputs");
    sender = random_matrix(rows, d, rng);
    receiver = random_matrix(rows, d, rng);
    w = random_matrix(t, 2 * d, rng, 0.5);
    b = random_vector(t, rng, 0.1);
    h = random_vector(t, rng);
    probe = random_vector(d, rng);
    double margin = INFINITY;
    for (int c = 0; c < rows; ++c) {
      Vector joined(2 * d);
      joined << sender.row(c).transpose(), receiver.row(c).transpose();
      margin = std::min(margin, (w * joined + b).cwiseAbs().minCoeff());
    }
    if (margin >= kKinkMargin) break;
  }
  auto loss = [&] {
    return probe.dot(send_message(sender, normalize_scores(attention_scores(sender, receiver, w, b, h))));
  };
  const MessageGrads g = message_backward(sender, receiver, w, b, h, probe);

  GradCheckReport r;
  r.op = "attention_softmax";
  check_coordinates(r, "att_w", span_of(w), span_of(g.att_w), loss, eps);
  check_coordinates(r, "att_b", span_of(b), span_of(g.att_b), loss, eps);
  check_coordinates(r, "att_h", span_of(h), span_of(g.att_h), loss, eps);
  check_coordinates(r, "sender", span_of(sender), span_of(g.sender), loss, eps);
  check_coordinates(r, "receiver", span_of(receiver), span_of(g.receiver), loss, eps);
  return r;
}

GradCheckReport check_bpr(Rng& rng, double eps) {
  const int d = 4;
  Vector u = random_vector(d, rng), zp = random_vector(d, rng), zn = random_vector(d, rng);
  auto loss = [&] { return bpr_loss(u, zp, zn).loss; };
  const BprLoss g = bpr_loss(u, zp, zn);

  GradCheckReport r;
  r.op = "bpr_loss";
  check_coordinates(r, "user", span_of(u), span_of(g.d_user), loss, eps);
  check_coordinates(r, "positive", span_of(zp), span_of(g.d_positive), loss, eps);
  check_coordinates(r, "negative", span_of(zn), span_of(g.d_negative), loss, eps);
  return r;
}

// Six nodes, two categories, two layers, every neighbor used.
GradCheckReport check_full_objective(Rng& rng, double eps) {
  const SocialGraph graph({"0", "1", "2", "3", "4", "5"},
                          {{0, 1}, {1, 2}, {2, 3}, {3, 4}, {4, 5}, {0, 3}, {1, 4}});
  ModelConfig cfg;
  cfg.dims = {4, 3, 3};
  cfg.categories = {"a", "b"};
  cfg.num_items = {5, 4};
  cfg.num_nodes = 6;
  cfg.attention_hidden = 3;
  cfg.init_std = 0.8;
  cfg.mask_init_range = 1.0;

  const std::vector<NodeId> targets{0, 2, 3, 5};
  const SampledNeighborhood hood = full_neighborhood(graph, targets, cfg.num_layers());
  const std::vector<BprTriplet> triplets{{0, 1, 2, 0}, {2, 0, 4, 0}, {3, 3, 1, 0}, {5, 2, 0, 0},
                                         {0, 0, 3, 1}, {3, 1, 2, 1}, {5, 3, 0, 1}};
  const std::vector<int> cats{0, 1};
  const double lambda = 1e-2;

  ModelParams params;
  for (int draw = 0;; ++draw) {
    if (draw == kMaxDraws) throw NumericError("full_objective: could not draw kink-free parameters");
    params = init_params(cfg, rng);
    for (auto& b : params.tensors.att_b) b = random_vector(b.size(), rng, 0.2);
    for (auto& b : params.tensors.dense_b) b = random_vector(b.size(), rng, 0.2);
    if (forward_batch(params, hood).cache.min_abs_preactivation >= kKinkMargin) break;
  }
  const TrainableSet trainable = default_trainable(cfg);
  ParamSet grads = params.tensors.zeros_like();
  evaluate_objective(params, hood, triplets, cats, lambda, trainable, &grads);
  auto loss = [&] { return evaluate_objective(params, hood, triplets, cats, lambda, trainable, nullptr).total; };

  GradCheckReport r;
  r.op = "full_objective";
  auto views = params.tensors.views();
  const auto analytic = std::as_const(grads).views();
  for (std::size_t i = 0; i < views.size(); ++i) {
    if (views[i].kind == TensorKind::mask) continue;
    check_coordinates(r, views[i].name, views[i].values(), analytic[i].values(), loss, eps);
  }
  return r;
}

}  // namespace

std::vector<std::string> gradcheck_ops() {
  return {"dense_relu", "attention_softmax", "bpr_loss", "full_objective"};
}

GradCheckReport grad_check(const std::string& op, std::uint64_t seed, double epsilon, double tolerance) {
  Rng rng(mix_seed({seed, 0x6c4du}));
  GradCheckReport r;
  if (op == "dense_relu") {
    r = check_dense_relu(rng, epsilon);
  } else if (op == "attention_softmax") {
    r = check_attention(rng, epsilon);
  } else if (op == "bpr_loss") {
    r = check_bpr(rng, epsilon);
  } else if (op == "full_objective") {
    r = check_full_objective(rng, epsilon);
  } else {
    throw ConfigError("unknown gradcheck op '" + op + "'");
  }
  r.passed = r.max_rel_error < tolerance;
  return r;
}

}  // namespace mcne
