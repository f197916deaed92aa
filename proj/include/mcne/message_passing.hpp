#pragma once

// Multi-aspect message passing: neighbor sampling, attention over condition
// rows, message sending and the receive/update dense layer, composed into a
// mini-batch forward pass with an explicit backward pass.

#include <span>
#include <vector>

#include "mcne/common.hpp"
#include "mcne/graph_store.hpp"
#include "mcne/mask_layer.hpp"
#include "mcne/param_store.hpp"

namespace mcne {

/// Sampled computation tree for one batch. nodes[0] are the targets;
/// the children of nodes[l][p] are nodes[l+1][offsets[l][p] .. offsets[l][p+1]).
struct SampledNeighborhood {
  std::vector<std::vector<NodeId>> nodes;
  std::vector<std::vector<std::size_t>> offsets;

  int depth() const { return static_cast<int>(nodes.size()) - 1; }
  std::size_t count(int level) const { return nodes[level].size(); }
  std::size_t total_slots() const;
  /// Parent slot (index into nodes[level]) of every slot of nodes[level + 1].
  std::vector<int> parents(int level) const;
};

/// Uniform fixed-size sampling: without replacement when the degree allows,
/// with replacement otherwise. A node without neighbors samples itself.
SampledNeighborhood sample_neighborhood(const SocialGraph& graph, std::span<const NodeId> targets,
                                        std::span<const int> fanouts, Rng& rng);

/// Deterministic tree using every neighbor (self for isolated nodes).
SampledNeighborhood full_neighborhood(const SocialGraph& graph, std::span<const NodeId> targets,
                                      int depth);

// -- single-edge operations ---------------------------------------------------
// `sender` and `receiver` hold one conditional embedding per mask row.

/// score_c = h . ReLU(W_a [sender_c ; receiver_c] + b_a)
Vector attention_scores(const Matrix& sender, const Matrix& receiver, const Matrix& att_w,
                        const Vector& att_b, const Vector& att_h);

/// Softmax with max subtraction.
Vector normalize_scores(const Vector& raw);

/// Sum of the sender's conditional rows weighted by `weights`.
Vector send_message(const Matrix& sender, const Vector& weights);

/// ReLU(W [mean(messages) ; self] + b). Requires at least one message.
Vector receive_update(const Vector& self, const std::vector<Vector>& messages, const Matrix& dense_w,
                      const Vector& dense_b);

struct ReceiveGrads {
  Matrix dense_w;
  Vector dense_b;
  Vector self;
  std::vector<Vector> messages;
};

ReceiveGrads receive_update_backward(const Vector& self, const std::vector<Vector>& messages,
                                     const Matrix& dense_w, const Vector& dense_b,
                                     const Vector& d_output);

struct MessageGrads {
  Matrix att_w;
  Vector att_b;
  Vector att_h;
  Matrix sender;     // per-row conditional embeddings
  Matrix receiver;
};

/// Gradient of a scalar through attention, softmax and message sending for
/// one edge, given d(loss)/d(message).
MessageGrads message_backward(const Matrix& sender, const Matrix& receiver, const Matrix& att_w,
                              const Vector& att_b, const Vector& att_h, const Vector& d_message);

/// Row c of the result is embedding ⊙ mask row c.
Matrix conditional_rows(const Eigen::Ref<const Vector>& embedding, const BinaryMask& mask);

// -- batched forward / backward ------------------------------------------------

struct LevelCache {
  std::vector<int> parent;        // parent slot of each child slot
  std::vector<double> inv_count;  // 1 / number of children, per parent
  std::vector<Matrix> pre;        // per mask row: child-count x t pre-activations
  Matrix weights;                 // child-count x rows attention weights
  Matrix gate;                    // weights * binary mask, child-count x d_k
  Matrix joined;                  // [pooled , self], parent-count x 2 d_k
  Matrix pre_out;                 // dense pre-activation, parent-count x d_{k+1}
};

struct ForwardCache {
  // x[k][l]: layer-k embeddings of the slots at depth l (l <= K - k)
  std::vector<std::vector<Matrix>> x;
  // levels[k][l]: layer-k computation for parents at depth l
  std::vector<std::vector<LevelCache>> levels;
  std::vector<BinaryMask> masks;   // K+1 binarized masks
  double min_abs_preactivation = INFINITY;
};

struct ForwardResult {
  Matrix output;        // targets x d_K, unmasked final embeddings
  ForwardCache cache;
};

ForwardResult forward_batch(const ModelParams& params, const SampledNeighborhood& hood);

/// Accumulates gradients for every tensor reached from d(output) into `grads`
/// (masks through the straight-through estimator). The final mask layer is
/// not touched here; the loss owns that gradient.
void backward_batch(const ModelParams& params, const SampledNeighborhood& hood,
                    const ForwardCache& cache, const Matrix& d_output, ParamSet& grads);

/// Per-category conditional embeddings (the "other" row is skipped).
/// Warns when a category's last mask row is all zero.
std::vector<Matrix> conditional_embed(const Matrix& final_rows, const BinaryMask& last_mask);

struct InferenceOptions {
  bool full_neighbors = false;
  std::vector<int> fanouts{20, 20};
  std::uint64_t seed = 0;
  int batch_size = 512;
};

/// Final unmasked embeddings for every node, batch by batch.
Matrix infer_embeddings(const ModelParams& params, const SocialGraph& graph,
                        const InferenceOptions& options);

}  // namespace mcne
