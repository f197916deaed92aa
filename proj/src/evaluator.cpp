#include "mcne/evaluator.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <unordered_set>

#include "mcne/mask_layer.hpp"
#include "mcne/message_passing.hpp"

namespace mcne {

std::vector<ItemId> sample_eval_negatives(const InteractionIndex& index, int category, NodeId user,
                                          ItemId test_item, int count, std::uint64_t seed) {
  const int m = index.num_items(category);
  const auto& seen = index.all_items(category, user);
  std::vector<ItemId> candidates;
  candidates.reserve(static_cast<std::size_t>(m));
  for (ItemId i = 0; i < m; ++i) {
    if (!std::binary_search(seen.begin(), seen.end(), i)) candidates.push_back(i);
  }
  if (static_cast<int>(candidates.size()) <= count) return candidates;

  Rng rng(mix_seed({seed, static_cast<std::uint64_t>(category), static_cast<std::uint64_t>(user),
                    static_cast<std::uint64_t>(test_item)}));
  for (int s = 0; s < count; ++s) {
    std::uniform_int_distribution<std::size_t> pick(static_cast<std::size_t>(s), candidates.size() - 1);
    std::swap(candidates[s], candidates[pick(rng)]);
  }
  candidates.resize(static_cast<std::size_t>(count));
  return candidates;
}

int rank_and_score(const Eigen::Ref<const Vector>& user_cond, ItemId test_item,
                   std::span<const ItemId> negatives, const Matrix& item_embeddings) {
  const double target = item_embeddings.row(test_item).dot(user_cond);
  int rank = 1;
  for (ItemId n : negatives) {
    if (item_embeddings.row(n).dot(user_cond) >= target) ++rank;
  }
  return rank;
}

double recall_at_k(int rank, int k) { return rank <= k ? 1.0 : 0.0; }

double ndcg_at_k(int rank, int k) {
  return rank <= k ? 1.0 / std::log2(static_cast<double>(rank) + 1.0) : 0.0;
}

EvalResult evaluate_scorer(const Scorer& scorer, const InteractionIndex& index,
                           const std::vector<std::string>& names, std::span<const int> categories,
                           Fold fold, const EvalOptions& options) {
  if (options.runs <= 0) throw ConfigError("evaluation needs at least one run");
  if (options.ks.empty()) throw ConfigError("evaluation needs at least one cutoff K");
  std::size_t total = 0;
  for (int c : categories) total += index.fold(c, fold).size();
  if (total == 0) throw DataError(std::string("empty ") + fold_name(fold) + " set: nothing to evaluate");

  EvalResult result;
  result.seed = options.seed;
  result.runs = options.runs;
  const std::size_t nk = options.ks.size();
  for (int c : categories) {
    CategoryEval ce;
    ce.name = c < static_cast<int>(names.size()) ? names[c] : std::to_string(c);
    ce.category = c;
    ce.ks = options.ks;
    const auto& held_out = index.fold(c, fold);
    ce.evaluated = held_out.size();

    std::vector<std::vector<double>> recall_runs(nk), ndcg_runs(nk);
    for (int run = 0; run < options.runs; ++run) {
      const std::uint64_t run_seed = mix_seed({options.seed, static_cast<std::uint64_t>(run)});
      std::vector<double> recall_sum(nk, 0.0), ndcg_sum(nk, 0.0);
      std::size_t shrunken = 0;
      double random_sum = 0.0;
      for (const auto& it : held_out) {
        const auto negatives =
            sample_eval_negatives(index, c, it.user, it.item, options.num_negatives, run_seed);
        if (static_cast<int>(negatives.size()) < options.num_negatives) ++shrunken;
        const double target = scorer(c, it.user, it.item);
        int rank = 1;
        for (ItemId n : negatives) {
          if (scorer(c, it.user, n) >= target) ++rank;
        }
        for (std::size_t k = 0; k < nk; ++k) {
          recall_sum[k] += recall_at_k(rank, options.ks[k]);
          ndcg_sum[k] += ndcg_at_k(rank, options.ks[k]);
        }
        random_sum += std::min(1.0, options.ks[0] / (static_cast<double>(negatives.size()) + 1.0));
      }
      const double denom = held_out.empty() ? 1.0 : static_cast<double>(held_out.size());
      for (std::size_t k = 0; k < nk; ++k) {
        recall_runs[k].push_back(recall_sum[k] / denom);
        ndcg_runs[k].push_back(ndcg_sum[k] / denom);
      }
      ce.shrunken = shrunken;
      ce.random_recall = random_sum / denom;
    }

    auto stats = [](const std::vector<double>& v) {
      MetricStats s;
      for (double x : v) s.mean += x;
      s.mean /= static_cast<double>(v.size());
      if (v.size() > 1) {
        double ss = 0.0;
        for (double x : v) ss += (x - s.mean) * (x - s.mean);
        s.stddev = std::sqrt(ss / static_cast<double>(v.size() - 1));
      }
      return s;
    };
    for (std::size_t k = 0; k < nk; ++k) {
      ce.recall.push_back(stats(recall_runs[k]));
      ce.ndcg.push_back(stats(ndcg_runs[k]));
    }
    if (ce.shrunken > 0) {
      warn("category '" + ce.name + "': " + std::to_string(ce.shrunken) + " of " +
           std::to_string(ce.evaluated) + " ranked lists have fewer than " +
           std::to_string(options.num_negatives) + " negatives");
    }
    result.categories.push_back(std::move(ce));
  }
  return result;
}

EvalResult evaluate_embeddings(const ModelParams& params, const Matrix& node_embeddings,
                               const InteractionIndex& index, std::span<const int> categories, Fold fold,
                               const EvalOptions& options) {
  const BinaryMask last = binarize(params.tensors.masks.back());
  std::vector<Matrix> cond(static_cast<std::size_t>(params.config.num_categories()));
  for (int c : categories) {
    cond[c] = node_embeddings.array().rowwise() * last.row(c).array();
  }
  const auto& items = params.tensors.items;
  Scorer scorer = [&](int c, NodeId u, ItemId i) { return cond[c].row(u).dot(items[c].row(i)); };
  return evaluate_scorer(scorer, index, params.config.categories, categories, fold, options);
}

EvalResult evaluate(const ModelParams& params, const SocialGraph& graph, const InteractionIndex& index,
                    std::span<const int> categories, Fold fold, const EvalOptions& options,
                    const InferenceOptions& inference) {
  const Matrix embeddings = infer_embeddings(params, graph, inference);
  return evaluate_embeddings(params, embeddings, index, categories, fold, options);
}

void write_results(const std::filesystem::path& path, const EvalResult& result) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << "category,metric,K,mean,stddev,runs\n";
  char buf[64];
  for (const auto& ce : result.categories) {
    for (const char* metric : {"recall", "ndcg"}) {
      const auto& values = std::string(metric) == "recall" ? ce.recall : ce.ndcg;
      for (std::size_t k = 0; k < ce.ks.size(); ++k) {
        std::snprintf(buf, sizeof buf, "%.6f,%.6f", values[k].mean, values[k].stddev);
        out << ce.name << ',' << metric << ',' << ce.ks[k] << ',' << buf << ',' << result.runs << '\n';
      }
    }
  }
}

}  // namespace mcne
