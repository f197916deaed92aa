#include "mcne/message_passing.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace mcne {

// ---------------------------------------------------------------------------
// Neighborhoods

std::size_t SampledNeighborhood::total_slots() const {
  std::size_t n = 0;
  for (const auto& level : nodes) n += level.size();
  return n;
}

std::vector<int> SampledNeighborhood::parents(int level) const {
  const auto& off = offsets[level];
  std::vector<int> parent(nodes[level + 1].size());
  for (std::size_t p = 0; p + 1 < off.size(); ++p) {
    for (std::size_t e = off[p]; e < off[p + 1]; ++e) parent[e] = static_cast<int>(p);
  }
  return parent;
}

SampledNeighborhood sample_neighborhood(const SocialGraph& graph, std::span<const NodeId> targets,
                                        std::span<const int> fanouts, Rng& rng) {
  if (targets.empty()) throw ConfigError("sample_neighborhood: empty target list");
  for (int f : fanouts) {
    if (f <= 0) throw ConfigError("sample_neighborhood: fan-outs must be positive");
  }
  SampledNeighborhood hood;
  hood.nodes.emplace_back(targets.begin(), targets.end());
  std::vector<NodeId> scratch;
  for (int fanout : fanouts) {
    const auto& parents = hood.nodes.back();
    std::vector<NodeId> children;
    std::vector<std::size_t> offsets{0};
    children.reserve(parents.size() * static_cast<std::size_t>(fanout));
    for (NodeId p : parents) {
      const auto& nbrs = graph.neighbors(p);
      const auto deg = nbrs.size();
      if (deg == 0) {
        children.insert(children.end(), static_cast<std::size_t>(fanout), p);
      } else if (deg >= static_cast<std::size_t>(fanout)) {
        // partial Fisher-Yates: first `fanout` entries become a uniform draw
        scratch.assign(nbrs.begin(), nbrs.end());
        for (int s = 0; s < fanout; ++s) {
          std::uniform_int_distribution<std::size_t> pick(static_cast<std::size_t>(s), deg - 1);
          std::swap(scratch[s], scratch[pick(rng)]);
          children.push_back(scratch[s]);
        }
      } else {
        std::uniform_int_distribution<std::size_t> pick(0, deg - 1);
        for (int s = 0; s < fanout; ++s) children.push_back(nbrs[pick(rng)]);
      }
      offsets.push_back(children.size());
    }
    hood.offsets.push_back(std::move(offsets));
    hood.nodes.push_back(std::move(children));
  }
  return hood;
}

SampledNeighborhood full_neighborhood(const SocialGraph& graph, std::span<const NodeId> targets,
                                      int depth) {
  if (targets.empty()) throw ConfigError("full_neighborhood: empty target list");
  SampledNeighborhood hood;
  hood.nodes.emplace_back(targets.begin(), targets.end());
  for (int l = 0; l < depth; ++l) {
    const auto& parents = hood.nodes.back();
    std::vector<NodeId> children;
    std::vector<std::size_t> offsets{0};
    for (NodeId p : parents) {
      const auto& nbrs = graph.neighbors(p);
      if (nbrs.empty()) {
        children.push_back(p);
      } else {
        children.insert(children.end(), nbrs.begin(), nbrs.end());
      }
      offsets.push_back(children.size());
    }
    hood.offsets.push_back(std::move(offsets));
    hood.nodes.push_back(std::move(children));
  }
  return hood;
}

// ---------------------------------------------------------------------------
// Single-edge operations

Matrix conditional_rows(const Eigen::Ref<const Vector>& embedding, const BinaryMask& mask) {
  return mask.matrix().array().rowwise() * embedding.transpose().array();
}

Vector attention_scores(const Matrix& sender, const Matrix& receiver, const Matrix& att_w,
                        const Vector& att_b, const Vector& att_h) {
  const Eigen::Index d = sender.cols();
  if (receiver.rows() != sender.rows() || receiver.cols() != d || att_w.cols() != 2 * d) {
    throw ConfigError("attention_scores: inconsistent shapes");
  }
  Vector scores(sender.rows());
  for (Eigen::Index c = 0; c < sender.rows(); ++c) {
    Vector pre = att_w.leftCols(d) * sender.row(c).transpose() +
                 att_w.rightCols(d) * receiver.row(c).transpose() + att_b;
    scores[c] = att_h.dot(pre.cwiseMax(0.0));
  }
  return scores;
}

Vector normalize_scores(const Vector& raw) {
  Vector e = (raw.array() - raw.maxCoeff()).exp();
  return e / e.sum();
}

Vector send_message(const Matrix& sender, const Vector& weights) {
  return sender.transpose() * weights;
}

Vector receive_update(const Vector& self, const std::vector<Vector>& messages, const Matrix& dense_w,
                      const Vector& dense_b) {
  if (messages.empty()) throw ConfigError("receive_update: at least one message is required");
  const Eigen::Index d = self.size();
  Vector joined(2 * d);
  joined.head(d).setZero();
  for (const auto& m : messages) joined.head(d) += m;
  joined.head(d) /= static_cast<double>(messages.size());
  joined.tail(d) = self;
  return (dense_w * joined + dense_b).cwiseMax(0.0);
}

ReceiveGrads receive_update_backward(const Vector& self, const std::vector<Vector>& messages,
                                     const Matrix& dense_w, const Vector& dense_b,
                                     const Vector& d_output) {
  const Eigen::Index d = self.size();
  const double inv = 1.0 / static_cast<double>(messages.size());
  Vector joined(2 * d);
  joined.head(d).setZero();
  for (const auto& m : messages) joined.head(d) += m;
  joined.head(d) *= inv;
  joined.tail(d) = self;
  const Vector pre = dense_w * joined + dense_b;
  const Vector d_pre = d_output.cwiseProduct((pre.array() > 0.0).cast<double>().matrix());

  ReceiveGrads g;
  g.dense_w = d_pre * joined.transpose();
  g.dense_b = d_pre;
  const Vector d_joined = dense_w.transpose() * d_pre;
  g.self = d_joined.tail(d);
  g.messages.assign(messages.size(), d_joined.head(d) * inv);
  return g;
}

MessageGrads message_backward(const Matrix& sender, const Matrix& receiver, const Matrix& att_w,
                              const Vector& att_b, const Vector& att_h, const Vector& d_message) {
  const Eigen::Index rows = sender.rows();
  const Eigen::Index d = sender.cols();
  std::vector<Vector> pre(rows);
  Vector scores(rows);
  for (Eigen::Index c = 0; c < rows; ++c) {
    pre[c] = att_w.leftCols(d) * sender.row(c).transpose() +
             att_w.rightCols(d) * receiver.row(c).transpose() + att_b;
    scores[c] = att_h.dot(pre[c].cwiseMax(0.0));
  }
  const Vector a = normalize_scores(scores);

  MessageGrads g;
  g.att_w = Matrix::Zero(att_w.rows(), att_w.cols());
  g.att_b = Vector::Zero(att_b.size());
  g.att_h = Vector::Zero(att_h.size());
  g.sender = a * d_message.transpose();
  g.receiver = Matrix::Zero(rows, d);

  const Vector da = sender * d_message;
  const Vector ds = a.cwiseProduct((da.array() - a.dot(da)).matrix());
  for (Eigen::Index c = 0; c < rows; ++c) {
    g.att_h += ds[c] * pre[c].cwiseMax(0.0);
    const Vector d_pre = (ds[c] * att_h).cwiseProduct((pre[c].array() > 0.0).cast<double>().matrix());
    g.att_w.leftCols(d) += d_pre * sender.row(c);
    g.att_w.rightCols(d) += d_pre * receiver.row(c);
    g.att_b += d_pre;
    g.sender.row(c) += (att_w.leftCols(d).transpose() * d_pre).transpose();
    g.receiver.row(c) += (att_w.rightCols(d).transpose() * d_pre).transpose();
  }
  return g;
}

// ---------------------------------------------------------------------------
// Batched forward

namespace {

Matrix gather_rows(const Matrix& table, const std::vector<NodeId>& ids) {
  Matrix out(static_cast<Eigen::Index>(ids.size()), table.cols());
  for (std::size_t i = 0; i < ids.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = table.row(ids[i]);
  return out;
}

// Rows of `child_rows` summed into their parent row.
Matrix scatter_to_parents(const Matrix& child_rows, const std::vector<int>& parent, Eigen::Index parents) {
  Matrix out = Matrix::Zero(parents, child_rows.cols());
  for (std::size_t e = 0; e < parent.size(); ++e) out.row(parent[e]) += child_rows.row(static_cast<Eigen::Index>(e));
  return out;
}

Matrix masked(const Matrix& x, const BinaryMask& mask, Eigen::Index row) {
  return x.array().rowwise() * mask.row(row).array();
}

void check_shapes(const ModelParams& params, const SampledNeighborhood& hood) {
  const auto& cfg = params.config;
  const auto& p = params.tensors;
  const int K = cfg.num_layers();
  if (hood.depth() != K) {
    throw ConfigError("neighborhood depth " + std::to_string(hood.depth()) + " does not match " +
                      std::to_string(K) + " layers");
  }
  if (p.base.cols() != cfg.dims[0] || static_cast<int>(p.masks.size()) != K + 1 ||
      static_cast<int>(p.dense_w.size()) != K || static_cast<int>(p.att_w.size()) != K) {
    throw ConfigError("parameter tensors do not match the configured layer count");
  }
  for (int k = 0; k <= K; ++k) {
    if (p.masks[k].rows() != cfg.mask_rows() || p.masks[k].cols() != cfg.dims[k]) {
      throw ConfigError("mask " + std::to_string(k) + " has the wrong shape");
    }
  }
  for (int k = 0; k < K; ++k) {
    if (p.dense_w[k].rows() != cfg.dims[k + 1] || p.dense_w[k].cols() != 2 * cfg.dims[k] ||
        p.att_w[k].cols() != 2 * cfg.dims[k]) {
      throw ConfigError("layer " + std::to_string(k) + " weights do not match dims");
    }
  }
}

}  // namespace

ForwardResult forward_batch(const ModelParams& params, const SampledNeighborhood& hood) {
  check_shapes(params, hood);
  const auto& cfg = params.config;
  const auto& P = params.tensors;
  const int K = cfg.num_layers();
  const Eigen::Index R = cfg.mask_rows();
  const bool learned = cfg.attention == AttentionMode::learned;

  ForwardResult result;
  ForwardCache& cache = result.cache;
  for (int k = 0; k <= K; ++k) cache.masks.push_back(binarize(P.masks[k]));

  cache.x.resize(K + 1);
  cache.levels.resize(K);
  for (int l = 0; l <= K; ++l) cache.x[0].push_back(gather_rows(P.base, hood.nodes[l]));

  for (int k = 0; k < K; ++k) {
    const Eigen::Index dk = cfg.dims[k];
    const auto& mask = cache.masks[k];
    const auto wa_sender = P.att_w[k].leftCols(dk);
    const auto wa_receiver = P.att_w[k].rightCols(dk);
    cache.levels[k].resize(K - k);
    for (int l = 0; l < K - k; ++l) {
      const Matrix& par = cache.x[k][l];
      const Matrix& ch = cache.x[k][l + 1];
      LevelCache& lc = cache.levels[k][l];
      const Eigen::Index n = par.rows();
      const Eigen::Index E = ch.rows();
      lc.parent = hood.parents(l);
      lc.inv_count.assign(static_cast<std::size_t>(n), 0.0);
      for (Eigen::Index p = 0; p < n; ++p) {
        const auto cnt = hood.offsets[l][p + 1] - hood.offsets[l][p];
        lc.inv_count[p] = 1.0 / static_cast<double>(cnt);
      }

      if (learned) {
        Matrix scores(E, R);
        lc.pre.resize(R);
        for (Eigen::Index c = 0; c < R; ++c) {
          const Matrix receiver_proj = masked(par, mask, c) * wa_receiver.transpose();
          Matrix pre = masked(ch, mask, c) * wa_sender.transpose();
          pre.rowwise() += P.att_b[k].transpose();
          for (Eigen::Index e = 0; e < E; ++e) pre.row(e) += receiver_proj.row(lc.parent[e]);
          scores.col(c) = pre.cwiseMax(0.0) * P.att_h[k];
          cache.min_abs_preactivation = std::min(cache.min_abs_preactivation, pre.cwiseAbs().minCoeff());
          lc.pre[c] = std::move(pre);
        }
        scores.colwise() -= scores.rowwise().maxCoeff();
        lc.weights = scores.array().exp();
        lc.weights.array().colwise() /= lc.weights.rowwise().sum().array();
      } else {
        lc.weights = Matrix::Constant(E, R, 1.0 / static_cast<double>(R));
      }

      lc.gate = lc.weights * mask.matrix();
      const Matrix messages = ch.cwiseProduct(lc.gate);
      Matrix pooled = scatter_to_parents(messages, lc.parent, n);
      for (Eigen::Index p = 0; p < n; ++p) pooled.row(p) *= lc.inv_count[p];

      lc.joined.resize(n, 2 * dk);
      lc.joined.leftCols(dk) = pooled;
      lc.joined.rightCols(dk) = par;
      lc.pre_out = lc.joined * P.dense_w[k].transpose();
      lc.pre_out.rowwise() += P.dense_b[k].transpose();
      if (lc.pre_out.size() > 0) {
        cache.min_abs_preactivation = std::min(cache.min_abs_preactivation, lc.pre_out.cwiseAbs().minCoeff());
      }
      cache.x[k + 1].push_back(lc.pre_out.cwiseMax(0.0));
    }
  }
  result.output = cache.x[K][0];
  return result;
}

void backward_batch(const ModelParams& params, const SampledNeighborhood& hood,
                    const ForwardCache& cache, const Matrix& d_output, ParamSet& grads) {
  const auto& cfg = params.config;
  const auto& P = params.tensors;
  const int K = cfg.num_layers();
  const Eigen::Index R = cfg.mask_rows();
  const bool learned = cfg.attention == AttentionMode::learned;

  std::vector<std::vector<Matrix>> dx(K + 1);
  for (int k = 0; k <= K; ++k) {
    for (const auto& x : cache.x[k]) dx[k].push_back(Matrix::Zero(x.rows(), x.cols()));
  }
  dx[K][0] = d_output;

  for (int k = K - 1; k >= 0; --k) {
    const Eigen::Index dk = cfg.dims[k];
    const auto& mask = cache.masks[k];
    const auto wa_sender = P.att_w[k].leftCols(dk);
    const auto wa_receiver = P.att_w[k].rightCols(dk);
    for (int l = 0; l < K - k; ++l) {
      const LevelCache& lc = cache.levels[k][l];
      const Matrix& par = cache.x[k][l];
      const Matrix& ch = cache.x[k][l + 1];
      const Eigen::Index n = par.rows();
      const Eigen::Index E = ch.rows();

      // receive / update
      const Matrix d_pre = dx[k + 1][l].cwiseProduct((lc.pre_out.array() > 0.0).cast<double>().matrix());
      grads.dense_w[k] += d_pre.transpose() * lc.joined;
      grads.dense_b[k] += d_pre.colwise().sum().transpose();
      const Matrix d_joined = d_pre * P.dense_w[k];
      dx[k][l] += d_joined.rightCols(dk);

      // mean pooling of messages
      Matrix d_msg(E, dk);
      for (Eigen::Index e = 0; e < E; ++e) {
        const int p = lc.parent[e];
        d_msg.row(e) = d_joined.row(p).head(dk) * lc.inv_count[p];
      }
      dx[k][l + 1] += d_msg.cwiseProduct(lc.gate);
      const Matrix d_gate = d_msg.cwiseProduct(ch);
      grads.masks[k] += straight_through_backward(lc.weights.transpose() * d_gate);

      if (!learned) continue;

      // softmax and attention network
      const Matrix d_weights = d_gate * mask.matrix().transpose();
      const Vector inner = lc.weights.cwiseProduct(d_weights).rowwise().sum();
      const Matrix d_scores = lc.weights.cwiseProduct((d_weights.colwise() - inner));
      for (Eigen::Index c = 0; c < R; ++c) {
        const Matrix& pre = lc.pre[c];
        grads.att_h[k] += pre.cwiseMax(0.0).transpose() * d_scores.col(c);
        Matrix d_att = d_scores.col(c) * P.att_h[k].transpose();
        d_att.array() *= (pre.array() > 0.0).cast<double>();
        const Matrix d_att_parent = scatter_to_parents(d_att, lc.parent, n);

        const Matrix ch_c = masked(ch, mask, c);
        const Matrix par_c = masked(par, mask, c);
        grads.att_w[k].leftCols(dk) += d_att.transpose() * ch_c;
        grads.att_w[k].rightCols(dk) += d_att_parent.transpose() * par_c;
        grads.att_b[k] += d_att.colwise().sum().transpose();

        const Matrix d_ch_c = d_att * wa_sender;
        const Matrix d_par_c = d_att_parent * wa_receiver;
        dx[k][l + 1] += masked(d_ch_c, mask, c);
        dx[k][l] += masked(d_par_c, mask, c);
        const RowVector d_mask_row =
            d_ch_c.cwiseProduct(ch).colwise().sum() + d_par_c.cwiseProduct(par).colwise().sum();
        grads.masks[k].row(c) += d_mask_row;
      }
    }
  }

  for (int l = 0; l <= K; ++l) {
    const auto& ids = hood.nodes[l];
    for (std::size_t s = 0; s < ids.size(); ++s) grads.base.row(ids[s]) += dx[0][l].row(static_cast<Eigen::Index>(s));
  }
}

std::vector<Matrix> conditional_embed(const Matrix& final_rows, const BinaryMask& last_mask) {
  const Eigen::Index categories = last_mask.rows() - 1;
  std::vector<Matrix> out;
  out.reserve(static_cast<std::size_t>(categories));
  for (Eigen::Index c = 0; c < categories; ++c) {
    if (last_mask.active(c) == 0) {
      warn("final mask row " + std::to_string(c) + " is all zero; its conditional embeddings vanish");
    }
    out.push_back(masked(final_rows, last_mask, c));
  }
  return out;
}

Matrix infer_embeddings(const ModelParams& params, const SocialGraph& graph,
                        const InferenceOptions& options) {
  const int K = params.config.num_layers();
  const auto n = static_cast<NodeId>(graph.num_nodes());
  if (n != params.config.num_nodes) {
    throw ConfigError("graph has " + std::to_string(n) + " nodes but the model was built for " +
                      std::to_string(params.config.num_nodes));
  }
  if (!options.full_neighbors && static_cast<int>(options.fanouts.size()) != K) {
    throw ConfigError("inference fan-outs must list one entry per layer");
  }
  Matrix out(n, params.config.output_dim());
  const NodeId batch = std::max(1, options.batch_size);
  std::vector<NodeId> targets;
  for (NodeId begin = 0, index = 0; begin < n; begin += batch, ++index) {
    targets.resize(static_cast<std::size_t>(std::min(batch, n - begin)));
    std::iota(targets.begin(), targets.end(), begin);
    SampledNeighborhood hood;
    if (options.full_neighbors) {
      hood = full_neighborhood(graph, targets, K);
    } else {
      Rng rng(mix_seed({options.seed, static_cast<std::uint64_t>(index), 0x1f3eu}));
      hood = sample_neighborhood(graph, targets, options.fanouts, rng);
    }
    out.middleRows(begin, static_cast<Eigen::Index>(targets.size())) = forward_batch(params, hood).output;
  }
  return out;
}

}  // namespace mcne
