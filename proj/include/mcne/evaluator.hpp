#pragma once

// Ranked retrieval with sampled negatives: each held-out interaction is
// ranked against up to 100 items the user never interacted with.

#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "mcne/bpr_trainer.hpp"
#include "mcne/common.hpp"
#include "mcne/graph_store.hpp"
#include "mcne/param_store.hpp"

namespace mcne {

/// Up to `count` distinct items the user never interacted with in the
/// category. Deterministic in (seed, category, user, test_item). When fewer
/// candidates exist, all of them are returned.
std::vector<ItemId> sample_eval_negatives(const InteractionIndex& index, int category, NodeId user,
                                          ItemId test_item, int count, std::uint64_t seed);

/// 1-based rank of the test item by dot-product score. Negatives with an
/// equal score are placed ahead of the test item.
int rank_and_score(const Eigen::Ref<const Vector>& user_cond, ItemId test_item,
                   std::span<const ItemId> negatives, const Matrix& item_embeddings);

double recall_at_k(int rank, int k);
double ndcg_at_k(int rank, int k);

struct MetricStats {
  double mean = 0.0;
  double stddev = 0.0;
};

struct CategoryEval {
  std::string name;
  int category = 0;
  std::vector<int> ks;
  std::vector<MetricStats> recall;   // per K
  std::vector<MetricStats> ndcg;     // per K
  std::size_t evaluated = 0;         // ranked lists per run
  std::size_t shrunken = 0;          // lists with fewer negatives than requested
  double random_recall = 0.0;        // expected Recall@ks[0] of a random ranking
};

struct EvalResult {
  std::vector<CategoryEval> categories;
  std::uint64_t seed = 0;
  int runs = 1;
};

struct EvalOptions {
  int runs = 1;
  std::uint64_t seed = 0;
  std::vector<int> ks{5, 10, 20};
  int num_negatives = 100;
};

using Scorer = std::function<double(int category, NodeId user, ItemId item)>;

/// Protocol core over an arbitrary scorer. Metrics are means over ranked
/// lists (one per held-out interaction); run r uses seed mix(seed, r) for
/// negatives; mean and sample stddev are taken over runs.
EvalResult evaluate_scorer(const Scorer& scorer, const InteractionIndex& index,
                           const std::vector<std::string>& names, std::span<const int> categories,
                           Fold fold, const EvalOptions& options);

/// Scores with the model's conditional embeddings and item embeddings.
EvalResult evaluate(const ModelParams& params, const SocialGraph& graph, const InteractionIndex& index,
                    std::span<const int> categories, Fold fold, const EvalOptions& options,
                    const InferenceOptions& inference);

/// Same as evaluate() with precomputed final node embeddings.
EvalResult evaluate_embeddings(const ModelParams& params, const Matrix& node_embeddings,
                               const InteractionIndex& index, std::span<const int> categories, Fold fold,
                               const EvalOptions& options);

/// CSV: category,metric,K,mean,stddev,runs
void write_results(const std::filesystem::path& path, const EvalResult& result);

}  // namespace mcne
