#pragma once

// Multi-task BPR training: triplet sampling per category, the joint
// objective with its explicit backward pass, Adam updates and
// validation-based model selection.

#include <span>
#include <string>
#include <vector>

#include "mcne/common.hpp"
#include "mcne/graph_store.hpp"
#include "mcne/message_passing.hpp"
#include "mcne/param_store.hpp"

namespace mcne {

struct TrainConfig {
  std::vector<int> dims{256, 128, 100};
  std::vector<int> fanouts{20, 20};
  int attention_hidden = 64;
  double learning_rate = 0.003;
  int batch_size = 128;
  int negatives = 5;
  double lambda = 1e-4;
  int epochs = 100;
  std::uint64_t seed = 1;
  int patience = 10;
  int positives_per_user = 1;
  std::string variant = "full";
  double init_std = 0.01;
  double mask_init_range = 0.5;
  bool full_neighbor_inference = false;
  int eval_negatives = 100;

  void validate() const;
};

/// Per-category lookup of train items and of every interacted item, indexed
/// by model category. Categories without data are allowed (empty lists).
class InteractionIndex {
 public:
  InteractionIndex() = default;
  InteractionIndex(std::size_t num_nodes, std::vector<int> num_items);
  InteractionIndex(std::size_t num_nodes, const BehaviorRecords& records, const DatasetSplit& split);

  /// Installs the split of one category.
  void set_category(int category, const CategorySplit& split);

  std::size_t num_categories() const { return num_items_.size(); }
  int num_items(int category) const { return num_items_[category]; }
  const std::vector<ItemId>& train_items(int category, NodeId user) const { return train_[category][user]; }
  const std::vector<ItemId>& all_items(int category, NodeId user) const { return all_[category][user]; }
  bool interacted(int category, NodeId user, ItemId item) const;
  const std::vector<Interaction>& fold(int category, Fold f) const { return folds_[category].fold(f); }

 private:
  std::size_t num_nodes_ = 0;
  std::vector<int> num_items_;
  std::vector<std::vector<std::vector<ItemId>>> train_;
  std::vector<std::vector<std::vector<ItemId>>> all_;
  std::vector<CategorySplit> folds_;
};

struct BprTriplet {
  NodeId user;
  ItemId positive;
  ItemId negative;
  int category;
};

/// For each user with training data in `category`: `positives` positives
/// drawn from the user's training items, each paired with `negatives`
/// items the user never interacted with (rejection sampling). Users who
/// interacted with every item are skipped with a warning.
std::vector<BprTriplet> sample_triplets(const InteractionIndex& index, int category,
                                        std::span<const NodeId> users, int negatives, Rng& rng,
                                        int positives = 1);

struct BprLoss {
  double loss;
  Vector d_user;
  Vector d_positive;
  Vector d_negative;
};

/// -ln sigmoid(u.z_p - u.z_n) with closed-form gradients.
BprLoss bpr_loss(const Vector& user, const Vector& positive, const Vector& negative);

struct ObjectiveValue {
  double total = 0.0;
  std::vector<double> category_loss;   // mean BPR loss per model category (0 when unused)
  std::vector<std::size_t> triplets;   // triplet count per model category
  double regularization = 0.0;
};

/// Joint objective on one batch: the mean over `loss_categories` of each
/// category's mean triplet loss, plus lambda * squared norm of the trainable
/// non-mask tensors the batch touches (base rows, item rows, dense and
/// attention weights; biases excluded). When `grads` is given, gradients of
/// the trainable part are accumulated into it; frozen entries stay untouched.
ObjectiveValue evaluate_objective(const ModelParams& params, const SampledNeighborhood& hood,
                                  const std::vector<BprTriplet>& triplets,
                                  const std::vector<int>& loss_categories, double lambda,
                                  const TrainableSet& trainable, ParamSet* grads);

struct StepResult {
  ObjectiveValue objective;
};

class Trainer {
 public:
  Trainer(ModelParams params, const SocialGraph& graph, const InteractionIndex& index,
          TrainConfig config, TrainableSet trainable, std::vector<int> loss_categories);

  /// Forward, backward and one Adam update on a batch of users.
  /// Throws NumericError (parameters untouched) when the loss is not finite.
  StepResult step(std::span<const NodeId> users, Rng& rng);

  const ModelParams& params() const { return params_; }
  ModelParams& mutable_params() { return params_; }
  const ParamSet& last_gradients() const { return grads_; }
  const TrainableSet& trainable() const { return trainable_; }
  const std::vector<int>& loss_categories() const { return loss_categories_; }
  const TrainConfig& config() const { return config_; }
  const InteractionIndex& index() const { return *index_; }
  const SocialGraph& graph() const { return *graph_; }

 private:
  ModelParams params_;
  const SocialGraph* graph_;
  const InteractionIndex* index_;
  TrainConfig config_;
  TrainableSet trainable_;
  std::vector<int> loss_categories_;
  AdamOptimizer adam_;
  ParamSet grads_;
};

struct EpochRecord {
  int epoch = 0;
  std::vector<double> train_loss;   // per loss category, mean over the epoch's batches
  double val_recall = 0.0;          // Recall@5 averaged over loss categories
  double val_ndcg = 0.0;
  double seconds = 0.0;
};

struct TrainResult {
  ModelParams best;
  std::vector<EpochRecord> history;
  int best_epoch = 0;
  bool diverged = false;
  std::string diagnostics;
};

/// Users visited in an epoch, in shuffled batch order; a pure function of
/// (seed, epoch).
std::vector<NodeId> epoch_order(const std::vector<NodeId>& users, std::uint64_t seed, int epoch);

/// Epoch loop around an existing trainer: shuffled batches, validation
/// Recall@5 after each epoch, best checkpoint kept, early stop after
/// `patience` epochs without improvement.
TrainResult run_training(Trainer& trainer);

ModelConfig model_config_for(const TrainConfig& config, const SocialGraph& graph,
                             const BehaviorRecords& records);

/// Builds and initializes the configured variant, then trains on every category.
TrainResult train(const TrainConfig& config, const SocialGraph& graph, const BehaviorRecords& records,
                  const DatasetSplit& split);

/// Inference wiring used for validation and export: the training fan-outs
/// (or every neighbor) with a seed derived from the training seed.
InferenceOptions inference_options(const TrainConfig& config, const ModelConfig& model);

/// CSV with columns epoch, loss_<category>..., val_recall@5, val_ndcg@5, seconds.
void write_history(const std::filesystem::path& path, const std::vector<std::string>& categories,
                   const std::vector<int>& loss_categories, const std::vector<EpochRecord>& history);

}  // namespace mcne
