#include <gtest/gtest.h>

#include <cmath>

#include "brute_force.hpp"
#include "mcne/evaluator.hpp"

using namespace mcne;

namespace {

InteractionIndex index_with(int num_items, const std::vector<Interaction>& train, const std::vector<Interaction>& test,
                            int users = 3) {
  InteractionIndex idx(static_cast<std::size_t>(users), std::vector<int>{num_items});
  CategorySplit s;
  s.train = train;
  s.test = test;
  idx.set_category(0, s);
  return idx;
}

}  // namespace

TEST(Metrics, ClosedForms) {
  EXPECT_EQ(recall_at_k(3, 5), 1.0);
  EXPECT_EQ(ndcg_at_k(3, 5), 0.5);
  EXPECT_EQ(ndcg_at_k(1, 5), 1.0);
  EXPECT_EQ(recall_at_k(6, 5), 0.0);
  EXPECT_EQ(ndcg_at_k(6, 5), 0.0);
}

TEST(Metrics, RanksMatchSortOracle) {
  Rng rng(1);
  std::uniform_int_distribution<int> coarse(0, 20);
  for (int trial = 0; trial < 1000; ++trial) {
    Matrix items(101, 1);
    for (int i = 0; i < 101; ++i) items(i, 0) = coarse(rng) / 4.0;   // coarse grid forces ties
    Vector user = Vector::Ones(1);
    std::vector<ItemId> negatives;
    std::vector<double> neg_scores;
    for (int i = 1; i < 101; ++i) {
      negatives.push_back(i);
      neg_scores.push_back(items(i, 0));
    }
    const int rank = rank_and_score(user, 0, negatives, items);
    ASSERT_EQ(rank, oracle::rank_by_sort(items(0, 0), neg_scores));
    for (int k : {5, 10, 20}) {
      ASSERT_EQ(recall_at_k(rank, k), rank <= k ? 1.0 : 0.0);
      ASSERT_EQ(ndcg_at_k(rank, k), rank <= k ? 1.0 / std::log2(rank + 1.0) : 0.0);
    }
  }
}

TEST(Rank, TopAndAllTied) {
  Matrix items = Matrix::Zero(101, 2);
  items(0, 0) = 1;
  std::vector<ItemId> negatives;
  for (int i = 1; i < 101; ++i) negatives.push_back(i);
  EXPECT_EQ(rank_and_score(Vector::Ones(2), 0, negatives, items), 1);
  EXPECT_EQ(rank_and_score(Vector::Ones(2), 0, negatives, Matrix::Zero(101, 2)), 101);
}

TEST(Negatives, ExhaustedCategoryReturnsAllCandidates) {
  std::vector<Interaction> train;
  for (int i = 0; i < 9; ++i) train.push_back({0, i});
  const auto idx = index_with(50, train, {{0, 9}});
  const auto neg = sample_eval_negatives(idx, 0, 0, 9, 100, 3);
  EXPECT_EQ(neg.size(), 40u);
  for (ItemId n : neg) EXPECT_FALSE(idx.interacted(0, 0, n));
}

TEST(Negatives, SameSeedSameSetAndNeverInteracted) {
  std::vector<Interaction> train{{1, 0}, {1, 5}, {1, 7}};
  const auto idx = index_with(300, train, {{1, 8}});
  const auto a = sample_eval_negatives(idx, 0, 1, 8, 100, 11);
  const auto b = sample_eval_negatives(idx, 0, 1, 8, 100, 11);
  EXPECT_EQ(a, b);
  EXPECT_EQ(a.size(), 100u);
  std::vector<ItemId> sorted = a;
  std::sort(sorted.begin(), sorted.end());
  EXPECT_EQ(std::adjacent_find(sorted.begin(), sorted.end()), sorted.end());
  for (ItemId n : a) EXPECT_FALSE(idx.interacted(0, 1, n));
  EXPECT_NE(a, sample_eval_negatives(idx, 0, 1, 8, 100, 12));
}

TEST(Evaluate, OracleScorerIsPerfect) {
  std::vector<Interaction> train, test;
  for (NodeId u = 0; u < 3; ++u) {
    train.push_back({u, u});
    test.push_back({u, 10 + u});
  }
  const auto idx = index_with(200, train, test);
  Scorer s = [&](int c, NodeId u, ItemId i) { return idx.interacted(c, u, i) ? 1.0 : 0.0; };
  EvalOptions eo;
  const int cats[] = {0};
  const EvalResult r = evaluate_scorer(s, idx, {"a"}, cats, Fold::test, eo);
  for (std::size_t k = 0; k < eo.ks.size(); ++k) {
    EXPECT_EQ(r.categories[0].recall[k].mean, 1.0);
    EXPECT_EQ(r.categories[0].ndcg[k].mean, 1.0);
  }
}

TEST(Evaluate, ConstantScorerIsZeroAndMetricsMonotone) {
  std::vector<Interaction> train, test;
  for (NodeId u = 0; u < 3; ++u) {
    train.push_back({u, u});
    test.push_back({u, 10 + u});
  }
  const auto idx = index_with(200, train, test);
  const int cats[] = {0};
  EvalOptions eo;
  const EvalResult flat = evaluate_scorer([](int, NodeId, ItemId) { return 0.0; }, idx, {"a"}, cats, Fold::test, eo);
  EXPECT_EQ(flat.categories[0].recall[2].mean, 0.0);

  Rng rng(3);
  std::vector<double> table(200 * 3);
  std::normal_distribution<double> d;
  for (double& x : table) x = d(rng);
  eo.runs = 4;
  const EvalResult r = evaluate_scorer([&](int, NodeId u, ItemId i) { return table[u * 200 + i]; }, idx, {"a"},
                                       cats, Fold::test, eo);
  const auto& ce = r.categories[0];
  EXPECT_LE(ce.recall[0].mean, ce.recall[1].mean);
  EXPECT_LE(ce.recall[1].mean, ce.recall[2].mean);
  EXPECT_LE(ce.ndcg[0].mean, ce.ndcg[1].mean);
  EXPECT_LE(ce.ndcg[1].mean, ce.ndcg[2].mean);
  EXPECT_NEAR(ce.random_recall, 5.0 / 101.0, 1e-15);
}

TEST(Evaluate, EmptyFoldIsDataError) {
  const auto idx = index_with(20, {{0, 1}}, {});
  const int cats[] = {0};
  EXPECT_THROW(evaluate_scorer([](int, NodeId, ItemId) { return 0.0; }, idx, {"a"}, cats, Fold::test, EvalOptions{}),
               DataError);
}

TEST(Evaluate, ShrunkenListsFlagged) {
  std::vector<Interaction> train;
  for (int i = 0; i < 10; ++i) train.push_back({0, i});
  const auto idx = index_with(30, train, {{0, 10}});
  const int cats[] = {0};
  std::vector<std::string> warnings;
  const auto prev = set_warning_handler([&](std::string_view w) { warnings.emplace_back(w); });
  const EvalResult r = evaluate_scorer([](int, NodeId, ItemId i) { return -i; }, idx, {"a"}, cats, Fold::test,
                                       EvalOptions{});
  set_warning_handler(prev);
  EXPECT_EQ(r.categories[0].shrunken, 1u);
  EXPECT_EQ(warnings.size(), 1u);
  EXPECT_NEAR(r.categories[0].random_recall, 5.0 / 20.0, 1e-15);
}
