// Acceptance run: one PASS/FAIL line per criterion. Exit status is nonzero
// when any criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "brute_force.hpp"
#include "mcne/bpr_trainer.hpp"
#include "mcne/evaluator.hpp"
#include "mcne/gradcheck.hpp"
#include "mcne/mask_layer.hpp"
#include "mcne/message_passing.hpp"
#include "mcne/synth.hpp"
#include "mcne/variants.hpp"

using namespace mcne;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t) { return std::chrono::duration<double>(Clock::now() - t).count(); }

int failures = 0;

void report(int id, const char* title, bool ok, double secs, const std::string& detail) {
  std::printf("[%s] %d %s (%.2f s): %s\n", ok ? "PASS" : "FAIL", id, title, secs, detail.c_str());
  std::fflush(stdout);
  if (!ok) ++failures;
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

// Shared training setup for the synthetic runs.
TrainConfig acceptance_config(const std::string& variant, std::uint64_t seed) {
  TrainConfig c;
  c.dims = {64, 64, 64};
  c.fanouts = {10, 5};
  c.attention_hidden = 16;
  c.batch_size = 16;
  c.epochs = 200;
  c.patience = 200;   // validation recall plateaus early; keep the best epoch of the full run
  c.learning_rate = 0.003;
  c.lambda = 1e-4;
  c.variant = variant;
  c.seed = seed;
  return c;
}

struct Dataset {
  SynthData data;
  DatasetSplit split;
  InteractionIndex index;
};

Dataset make_dataset(const SynthConfig& sc, std::uint64_t split_seed) {
  Dataset d{synth_gen(sc), {}, {}};
  d.split = split_dataset(d.data.records, SplitRatios{}, split_seed);
  d.index = InteractionIndex(d.data.graph.num_nodes(), d.data.records, d.split);
  return d;
}

struct Run {
  TrainResult result;
  TrainConfig config;
  double seconds = 0.0;
};

// One training per (variant, seed) on the default synthetic dataset.
class RunCache {
 public:
  explicit RunCache(const Dataset& d) : d_(d) {}
  const Run& get(const std::string& variant, std::uint64_t seed) {
    const auto key = std::make_pair(variant, seed);
    auto it = runs_.find(key);
    if (it != runs_.end()) return it->second;
    Run r;
    r.config = acceptance_config(variant, seed);
    const auto t = Clock::now();
    r.result = train(r.config, d_.data.graph, d_.data.records, d_.split);
    r.seconds = seconds_since(t);
    return runs_.emplace(key, std::move(r)).first->second;
  }

 private:
  const Dataset& d_;
  std::map<std::pair<std::string, std::uint64_t>, Run> runs_;
};

double best_validation(const TrainResult& r) {
  return r.history.at(static_cast<std::size_t>(r.best_epoch - 1)).val_recall;
}

EvalResult test_eval(const Run& run, const Dataset& d) {
  EvalOptions eo;
  eo.ks = {5};
  eo.seed = 0x7e57;
  const int cats[] = {0, 1};
  return evaluate(run.result.best, d.data.graph, d.index, cats, Fold::test, eo,
                  inference_options(run.config, run.result.best.config));
}

SocialGraph random_graph(int n, double p, std::mt19937_64& rng) {
  std::vector<std::string> ids;
  std::vector<std::pair<NodeId, NodeId>> edges;
  std::bernoulli_distribution coin(p);
  for (int i = 0; i < n; ++i) ids.push_back(std::to_string(i));
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j)
      if (coin(rng)) edges.emplace_back(i, j);
  return SocialGraph(ids, edges);
}

// ---------------------------------------------------------------------------

void criterion1() {
  const auto t = Clock::now();
  bool ok = true;
  double worst = 0.0;
  std::size_t coords = 0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const GradCheckReport r = grad_check("full_objective", seed);
    ok &= r.passed && r.max_rel_error < 1e-4;
    worst = std::max(worst, r.max_rel_error);
    coords += r.coordinates;
  }
  const double secs = seconds_since(t);
  report(1, "gradient suite", ok && secs < 10.0, secs,
         fmt("%zu coordinates over 5 seeds, max relative error %.3g (< 1e-4)", coords, worst));
}

void criterion2() {
  const auto t = Clock::now();
  std::mt19937_64 rng(2024);
  double worst = 0.0;
  int instances = 0;
  for (int i = 0; i < 20; ++i) {
    const int n = 2 + static_cast<int>(rng() % 9);
    const int C = 1 + static_cast<int>(rng() % 3);
    const int K = 1 + static_cast<int>(rng() % 2);
    const SocialGraph g = random_graph(n, 0.35, rng);
    ModelConfig mc;
    for (int k = 0; k <= K; ++k) mc.dims.push_back(2 + static_cast<int>(rng() % 4));
    mc.dims.erase(mc.dims.begin(), mc.dims.begin() + (static_cast<long>(mc.dims.size()) - K - 1));
    for (int c = 0; c < C; ++c) {
      mc.categories.push_back("c" + std::to_string(c));
      mc.num_items.push_back(3);
    }
    mc.num_nodes = n;
    mc.attention_hidden = 3;
    mc.attention = i % 2 == 0 ? AttentionMode::learned : AttentionMode::uniform;
    mc.init_std = 0.7;
    mc.mask_init_range = 1.0;
    Rng init(rng());
    ModelParams p = init_params(mc, init);
    std::normal_distribution<double> nd(0.0, 0.3);
    for (auto& b : p.tensors.att_b) for (Eigen::Index j = 0; j < b.size(); ++j) b(j) = nd(rng);
    for (auto& b : p.tensors.dense_b) for (Eigen::Index j = 0; j < b.size(); ++j) b(j) = nd(rng);

    std::vector<NodeId> targets(static_cast<std::size_t>(n));
    std::iota(targets.begin(), targets.end(), 0);
    const Matrix out = forward_batch(p, full_neighborhood(g, targets, K)).output;
    const auto ref = oracle::forward(p, g, targets);
    for (int v = 0; v < n; ++v)
      for (int j = 0; j < mc.output_dim(); ++j) worst = std::max(worst, std::abs(out(v, j) - ref[v][j]));
    ++instances;
  }
  const double secs = seconds_since(t);
  report(2, "forward oracle", worst <= 1e-10 && secs < 5.0, secs,
         fmt("%d instances, max |batched - scalar| = %.3g (<= 1e-10)", instances, worst));
}

void criterion3() {
  const auto t = Clock::now();
  std::mt19937_64 rng(33);
  std::uniform_int_distribution<int> score(0, 60);   // coarse scores force ties
  int mismatches = 0;
  for (int i = 0; i < 1000; ++i) {
    const int n = 100;
    Matrix items(n + 1, 1);
    for (int j = 0; j <= n; ++j) items(j, 0) = score(rng);
    std::vector<ItemId> negatives(static_cast<std::size_t>(n));
    std::iota(negatives.begin(), negatives.end(), 1);
    const int rank = rank_and_score(Vector::Ones(1), 0, negatives, items);

    std::vector<double> neg_scores;
    for (int j = 1; j <= n; ++j) neg_scores.push_back(items(j, 0));
    const int ref_rank = oracle::rank_by_sort(items(0, 0), neg_scores);
    mismatches += rank != ref_rank;
    for (int k : {5, 10, 20}) {
      // DCG of the sorted list with a single relevant entry; ideal DCG is 1
      double dcg = 0.0;
      for (int pos = 1; pos <= std::min(k, n + 1); ++pos) {
        if (pos == ref_rank) dcg += 1.0 / std::log2(pos + 1.0);
      }
      const double hit = ref_rank <= k ? 1.0 : 0.0;
      mismatches += recall_at_k(rank, k) != hit;
      mismatches += ndcg_at_k(rank, k) != dcg;
    }
  }
  const bool rank3 = ndcg_at_k(3, 5) == 0.5;
  const double secs = seconds_since(t);
  report(3, "metric oracle", mismatches == 0 && rank3 && secs < 1.0, secs,
         fmt("1000 instances, %d mismatches; NDCG@5 at rank 3 = %.17g", mismatches, ndcg_at_k(3, 5)));
}

void criterion4() {
  const auto t = Clock::now();
  SynthConfig sc;
  sc.items_per_community = 100;   // 200 items per category leaves >= 100 negatives per list
  const Dataset d = make_dataset(sc, 1);
  TrainConfig tc;
  tc.dims = {16, 16, 16};
  tc.fanouts = {5, 5};
  tc.attention_hidden = 8;
  double sum = 0.0;
  std::size_t shrunken = 0;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    tc.seed = seed;
    ModelConfig mc = model_config_for(tc, d.data.graph, d.data.records);
    mc.init_std = 1.0;
    Rng rng(seed);
    const ModelParams p = init_params(mc, rng);
    EvalOptions eo;
    eo.ks = {5};
    eo.seed = mix_seed({seed, 0x4a});
    const int cats[] = {0, 1};
    const EvalResult r = evaluate(p, d.data.graph, d.index, cats, Fold::test, eo, inference_options(tc, mc));
    for (const auto& ce : r.categories) {
      sum += ce.recall[0].mean / 2.0;
      shrunken += ce.shrunken;
    }
  }
  const double mean = sum / 10.0;
  const double secs = seconds_since(t);
  report(4, "random baseline", std::abs(mean - 0.0495) <= 0.01 && shrunken == 0 && secs < 30.0, secs,
         fmt("untrained Recall@5 over 10 seeds = %.4f (target 0.0495 +- 0.01, analytic 5/101 = %.4f), "
             "%zu short lists",
             mean, 5.0 / 101.0, shrunken));
}

void criterion5(RunCache& cache, const Dataset& d) {
  const auto t = Clock::now();
  const Run& run = cache.get("full", 1);
  const EvalResult ev = test_eval(run, d);
  const Matrix emb = infer_embeddings(run.result.best, d.data.graph,
                                      inference_options(run.config, run.result.best.config));
  const BinaryMask last = binarize(run.result.best.tensors.masks.back());
  bool ok = !run.result.diverged;
  std::string detail = fmt("best epoch %d;", run.result.best_epoch);
  for (int c = 0; c < 2; ++c) {
    const auto& ce = ev.categories[static_cast<std::size_t>(c)];
    const double recall = ce.recall[0].mean;
    const Matrix cond = emb.array().rowwise() * last.row(c).array();
    const double own = nearest_centroid_accuracy(cond, d.data.labels[c]);
    const double other = nearest_centroid_accuracy(cond, d.data.labels[1 - c]);
    ok &= recall >= 3.0 * ce.random_recall && own >= 0.8 && other < own;
    detail += fmt(" %s: Recall@5 %.4f = %.2fx random %.4f, own-label acc %.3f, other-label acc %.3f, %ld dims;",
                  ce.name.c_str(), recall, recall / ce.random_recall, ce.random_recall, own, other,
                  static_cast<long>(last.active(c)));
  }
  const double secs = seconds_since(t);
  report(5, "synthetic multi-aspect learning", ok && secs < 600.0, secs, detail);
}

void criterion6(RunCache& cache) {
  const auto t = Clock::now();
  std::map<std::string, double> mean;
  std::string detail;
  for (const char* v : {"full", "mcne_a", "mcne_f"}) {
    double s = 0.0;
    detail += fmt(" %s [", v);
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
      const double b = best_validation(cache.get(v, seed).result);
      s += b / 5.0;
      detail += fmt("%s%.4f", seed == 1 ? "" : " ", b);
    }
    mean[v] = s;
    detail += fmt("] mean %.4f;", s);
  }
  detail += fmt(" margins full-mcne_a %+.4f, mcne_a-mcne_f %+.4f", mean["full"] - mean["mcne_a"],
                mean["mcne_a"] - mean["mcne_f"]);
  const bool ok = mean["full"] >= mean["mcne_a"] && mean["mcne_a"] >= mean["mcne_f"];
  report(6, "ablation ordering", ok, seconds_since(t), "validation Recall@5 over 5 seeds:" + detail);
}

void criterion7() {
  const auto t = Clock::now();
  SynthConfig sc;
  sc.num_categories = 3;
  sc.correlate_last = 0.8;
  const SynthData data = synth_gen(sc);
  BehaviorRecords base;
  base.categories = {data.records.categories[0], data.records.categories[1]};
  TrainConfig tc = acceptance_config("full", 1);
  const TrainResult trained = train(tc, data.graph, base, split_dataset(base, SplitRatios{}, 1));
  const double base_secs = seconds_since(t);

  const auto t2 = Clock::now();
  const TransferOutcome out = transfer_new_category(trained.best, data.graph, data.records.categories[2], tc);
  const double transfer_secs = seconds_since(t2);

  // entry-by-entry comparison against the pre-transfer parameters
  const ParamSet& before = trained.best.tensors;
  const ParamSet& after = out.params.tensors;
  const int C = 2;
  std::size_t changed_old = 0, changed_new = 0;
  auto diff = [](const Matrix& a, const Matrix& b) { return static_cast<std::size_t>((a.array() != b.array()).count()); };
  changed_old += diff(after.base, before.base);
  for (std::size_t k = 0; k < before.dense_w.size(); ++k) {
    changed_old += diff(after.dense_w[k], before.dense_w[k]) + diff(after.dense_b[k], before.dense_b[k]);
    changed_old += diff(after.att_w[k], before.att_w[k]) + diff(after.att_b[k], before.att_b[k]);
    changed_old += diff(after.att_h[k], before.att_h[k]);
  }
  for (std::size_t k = 0; k < before.masks.size(); ++k) {
    changed_old += diff(after.masks[k].topRows(C), before.masks[k].topRows(C));
    changed_old += diff(after.masks[k].row(C + 1), before.masks[k].row(C));
  }
  for (int c = 0; c < C; ++c) changed_old += diff(after.items[c], before.items[c]);
  Rng replay(mix_seed({tc.seed, 0x7a45u}));
  const ModelParams fresh = extend_for_category(trained.best, "cat2", static_cast<int>(data.records.categories[2].num_items()), replay);
  for (std::size_t k = 0; k < after.masks.size(); ++k) changed_new += diff(after.masks[k].row(C), fresh.tensors.masks[k].row(C));
  changed_new += diff(after.items[C], fresh.tensors.items[C]);

  std::size_t expected = static_cast<std::size_t>(after.items[C].size());
  for (int dk : trained.best.config.dims) expected += static_cast<std::size_t>(dk);
  const std::size_t literal = static_cast<std::size_t>(after.items[C].size()) +
                              static_cast<std::size_t>(trained.best.config.dims.size()) *
                                  static_cast<std::size_t>(std::accumulate(trained.best.config.dims.begin(),
                                                                           trained.best.config.dims.end(), 0));
  const auto& ce = out.test.categories.at(0);
  const double recall = ce.recall[0].mean;
  const bool ok = out.frozen_before == out.frozen_after && changed_old == 0 && changed_new > 0 &&
                  out.trainable_count == expected && recall >= 2.0 * ce.random_recall && transfer_secs < 180.0;
  report(7, "transfer contract", ok, transfer_secs,
         fmt("frozen checksum %016llx -> %016llx, %zu pre-existing entries changed, %zu new entries trained; "
             "trainable %zu (one mask row per layer + items = %zu; (K+1)*sum(d_k) + items would be %zu); "
             "new-category Recall@5 %.4f = %.2fx random %.4f; base training %.1f s",
             static_cast<unsigned long long>(out.frozen_before), static_cast<unsigned long long>(out.frozen_after),
             changed_old, changed_new, out.trainable_count, expected, literal, recall, recall / ce.random_recall,
             ce.random_recall, base_secs));
}

void criterion8(const Dataset& d) {
  const auto t = Clock::now();
  TrainConfig tc = acceptance_config("full", 8);
  tc.dims = {16, 16, 16};
  tc.learning_rate = 0.05;   // large steps push many entries against the clamp
  const ModelConfig mc = model_config_for(tc, d.data.graph, d.data.records);
  Rng init(8);
  Trainer trainer(init_params(mc, init), d.data.graph, d.index, tc, default_trainable(mc), {0, 1});
  std::vector<NodeId> users(d.data.graph.num_nodes());
  std::iota(users.begin(), users.end(), 0);
  Rng rng(9);
  std::size_t violations = 0, at_bound = 0, st_mismatch = 0;
  for (int s = 0; s < 100; ++s) {
    std::shuffle(users.begin(), users.end(), rng);
    trainer.step(std::span<const NodeId>(users.data(), 16), rng);
    for (const Matrix& real : trainer.params().tensors.masks) {
      const Matrix bin = binarize(real).matrix();
      for (Eigen::Index i = 0; i < real.size(); ++i) {
        const double r = real.data()[i], b = bin.data()[i];
        violations += !(r >= -1.0 && r <= 1.0) || (b != 0.0 && b != 1.0) || (b == 1.0) != (r >= 0.0);
        at_bound += std::abs(r) == 1.0;
      }
    }
    for (const Matrix& g : trainer.last_gradients().masks) {
      st_mismatch += static_cast<std::size_t>((straight_through_backward(g).array() != g.array()).count());
    }
  }

  // recorded real-mask gradient against finite differences in the relaxed binary mask
  std::mt19937_64 gen(88);
  const SocialGraph g = random_graph(6, 0.5, gen);
  ModelConfig small;
  small.dims = {4, 3, 3};
  small.categories = {"a", "b"};
  small.num_items = {5, 4};
  small.num_nodes = 6;
  small.attention_hidden = 3;
  small.init_std = 0.8;
  Rng init2(88);
  ModelParams p = init_params(small, init2);
  std::normal_distribution<double> nd(0.0, 0.3);
  for (auto& b : p.tensors.att_b) for (Eigen::Index j = 0; j < b.size(); ++j) b(j) = nd(gen);
  for (auto& b : p.tensors.dense_b) for (Eigen::Index j = 0; j < b.size(); ++j) b(j) = nd(gen);
  const std::vector<NodeId> targets{0, 2, 5};
  const std::vector<BprTriplet> triplets{{0, 1, 3, 0}, {2, 4, 0, 0}, {5, 2, 1, 1}, {0, 3, 0, 1}};
  ParamSet grads = p.tensors.zeros_like();
  evaluate_objective(p, full_neighborhood(g, targets, 2), triplets, {0, 1}, 0.0, TrainableSet{}, &grads);
  auto masks = oracle::threshold_masks(p);
  double worst = 0.0;
  const double eps = 1e-6;
  for (std::size_t k = 0; k < masks.size(); ++k)
    for (std::size_t r = 0; r < masks[k].size(); ++r)
      for (std::size_t j = 0; j < masks[k][r].size(); ++j) {
        const double saved = masks[k][r][j];
        masks[k][r][j] = saved + eps;
        const double up = oracle::objective(p, g, targets, triplets, {0, 1}, &masks);
        masks[k][r][j] = saved - eps;
        const double down = oracle::objective(p, g, targets, triplets, {0, 1}, &masks);
        masks[k][r][j] = saved;
        worst = std::max(worst, relative_error(grads.masks[k](static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(j)),
                                               (up - down) / (2 * eps)));
      }
  const bool ok = violations == 0 && st_mismatch == 0 && worst < 1e-4;
  report(8, "mask invariants", ok, seconds_since(t),
         fmt("100 steps: %zu range/threshold violations, %zu entries clamped at +-1, %zu straight-through mismatches; "
             "mask gradient vs binary-mask finite differences rel err %.3g",
             violations, at_bound, st_mismatch, worst));
}

void criterion9(RunCache& cache, const Dataset& d) {
  const auto t = Clock::now();
  double a = 0.0, b = 0.0;
  std::string detail = "test Recall@5 per seed (MCNE vs shared):";
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const EvalResult full = test_eval(cache.get("full", seed), d);
    const EvalResult shared = test_eval(cache.get("shared", seed), d);
    double x = 0.0, y = 0.0;
    for (std::size_t c = 0; c < 2; ++c) {
      x += full.categories[c].recall[0].mean / 2.0;
      y += shared.categories[c].recall[0].mean / 2.0;
    }
    a += x / 5.0;
    b += y / 5.0;
    detail += fmt(" %.4f/%.4f", x, y);
  }
  report(9, "MCNE beats shared embedding", a > b, seconds_since(t),
         detail + fmt("; mean %.4f vs %.4f (margin %+.4f); full-data runs: scripts/full_data_run.sh", a, b, a - b));
}

void criterion10(const Dataset& d) {
  const auto t = Clock::now();
  std::vector<NodeId> targets(32);
  std::iota(targets.begin(), targets.end(), 0);
  const std::size_t M = targets.size();
  bool ok = true;
  std::string detail;
  std::size_t leaves_prev = 0;
  for (int n1 : {5, 10, 20}) {
    const int fan[] = {n1, 7};
    Rng rng(10);
    const SampledNeighborhood h = sample_neighborhood(d.data.graph, targets, fan, rng);
    std::size_t expect = M, total = M;
    ok &= h.count(0) == M;
    for (int l = 1; l <= 2; ++l) {
      expect *= static_cast<std::size_t>(fan[l - 1]);
      total += expect;
      ok &= h.count(l) == expect;
    }
    ok &= h.total_slots() == total;
    if (leaves_prev) ok &= h.count(2) == 2 * leaves_prev;
    leaves_prev = h.count(2);
    detail += fmt("N1=%d: levels %zu/%zu/%zu total %zu; ", n1, h.count(0), h.count(1), h.count(2), h.total_slots());
  }
  report(10, "complexity contract", ok, seconds_since(t), detail + fmt("M=%zu, N2=7", M));
}

}  // namespace

int main() {
  set_warning_handler(nullptr);
  const auto start = Clock::now();
  criterion1();
  criterion2();
  criterion3();
  criterion4();
  const Dataset d = make_dataset(SynthConfig{}, 1);
  RunCache cache(d);
  criterion10(d);
  criterion8(d);
  criterion5(cache, d);
  criterion7();
  criterion6(cache);
  criterion9(cache, d);
  std::printf("%d of 10 criteria failed, total %.1f s\n", failures, seconds_since(start));
  return failures == 0 ? 0 : 1;
}
