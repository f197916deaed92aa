#include <gtest/gtest.h>

#include <filesystem>
#include <numeric>

#include "mcne/mask_layer.hpp"
#include "mcne/synth.hpp"
#include "mcne/variants.hpp"

using namespace mcne;

namespace {

ModelConfig base_config() {
  ModelConfig c;
  c.dims = {12, 8, 6};
  c.categories = {"a", "b"};
  c.num_items = {10, 10};
  c.num_nodes = 30;
  c.attention_hidden = 4;
  return c;
}

SocialGraph ring(int n) {
  std::vector<std::string> ids;
  std::vector<std::pair<NodeId, NodeId>> edges;
  for (int i = 0; i < n; ++i) {
    ids.push_back(std::to_string(i));
    edges.emplace_back(i, (i + 1) % n);
  }
  return SocialGraph(ids, edges);
}

}  // namespace

TEST(Variants, ParseNames) {
  EXPECT_EQ(parse_variant("full"), Variant::full);
  EXPECT_EQ(parse_variant("mcne_a"), Variant::mcne_a);
  EXPECT_EQ(parse_variant("mcne_f"), Variant::mcne_f);
  EXPECT_EQ(parse_variant("shared"), Variant::shared);
  EXPECT_THROW(parse_variant("mcne_x"), ConfigError);
}

TEST(Variants, FixedMasksAreDisjointAndFrozen) {
  const ModelConfig c = build_variant(base_config(), Variant::mcne_f);
  Rng rng(1);
  const ModelParams p = init_params(c, rng);
  for (const auto& real : p.tensors.masks) {
    const Matrix m = binarize(real).matrix();
    for (Eigen::Index a = 0; a < m.rows(); ++a)
      for (Eigen::Index b = a + 1; b < m.rows(); ++b) EXPECT_EQ(m.row(a).dot(m.row(b)), 0.0);
    EXPECT_EQ(m.colwise().sum(), Matrix::Ones(1, m.cols()));
  }
  const TrainableSet t = default_trainable(c);
  EXPECT_FALSE(t.tensor_trainable("mask.0"));
  EXPECT_FALSE(t.tensor_trainable("att_w.1"));
  EXPECT_TRUE(t.tensor_trainable("dense_w.0"));
}

TEST(Variants, UniformAttentionWeights) {
  const ModelConfig c = build_variant(base_config(), Variant::mcne_a);
  Rng rng(2);
  const ModelParams p = init_params(c, rng);
  const SocialGraph g = ring(30);
  const std::vector<NodeId> targets{0, 5, 9};
  const auto fwd = forward_batch(p, full_neighborhood(g, targets, 2));
  for (const auto& layer : fwd.cache.levels) {
    for (const auto& level : layer) {
      ASSERT_EQ(level.weights.cols(), 3);
      EXPECT_LT((level.weights.array() - 1.0 / 3.0).abs().maxCoeff(), 1e-15);
    }
  }
}

TEST(Variants, SharedHasNoLayersAndOnesMask) {
  const ModelConfig c = build_variant(base_config(), Variant::shared);
  EXPECT_EQ(c.dims, std::vector<int>{6});
  Rng rng(3);
  const ModelParams p = init_params(c, rng);
  EXPECT_EQ(binarize(p.tensors.masks[0]).matrix(), Matrix::Ones(3, 6));
}

TEST(Transfer, ExtensionInsertsRowBeforeOther) {
  Rng rng(4);
  const ModelParams p = init_params(base_config(), rng);
  const ModelParams e = extend_for_category(p, "c", 7, rng);
  EXPECT_EQ(e.config.categories.back(), "c");
  EXPECT_EQ(e.config.attention, AttentionMode::uniform);
  for (std::size_t k = 0; k < p.tensors.masks.size(); ++k) {
    EXPECT_EQ(e.tensors.masks[k].rows(), 4);
    EXPECT_EQ(e.tensors.masks[k].topRows(2), p.tensors.masks[k].topRows(2));
    EXPECT_EQ(e.tensors.masks[k].row(3), p.tensors.masks[k].row(2));
  }
  EXPECT_EQ(e.tensors.items.size(), 3u);
  EXPECT_EQ(e.tensors.items[2].rows(), 7);
  EXPECT_THROW(extend_for_category(p, "a", 3, rng), ConfigError);
}

TEST(Transfer, TrainableCountIsOneRowPerLayerPlusItems) {
  Rng rng(4);
  const ModelParams e = extend_for_category(init_params(base_config(), rng), "c", 7, rng);
  const TrainableSet t = transfer_trainable(e.config);
  EXPECT_EQ(t.count(e.tensors), static_cast<std::size_t>(12 + 8 + 6 + 7 * 6));
}

TEST(Transfer, FrozenTensorsBitIdenticalAndGradientsZero) {
  SynthConfig sc;
  sc.num_nodes = 80;
  sc.num_categories = 3;
  sc.correlate_last = 0.8;
  const SynthData data = synth_gen(sc);
  BehaviorRecords base;
  base.categories = {data.records.categories[0], data.records.categories[1]};
  TrainConfig cfg;
  cfg.dims = {8, 8, 8};
  cfg.fanouts = {3, 3};
  cfg.attention_hidden = 4;
  cfg.epochs = 2;
  cfg.batch_size = 16;
  const auto prev = set_warning_handler(nullptr);
  const TrainResult trained = train(cfg, data.graph, base, split_dataset(base, SplitRatios{}, 1));
  const TransferOutcome out = transfer_new_category(trained.best, data.graph, data.records.categories[2], cfg, "x");
  set_warning_handler(prev);
  EXPECT_EQ(out.frozen_before, out.frozen_after);
  EXPECT_EQ(out.trainable_count, static_cast<std::size_t>(24 + 100 * 8));
  // every pre-existing entry is unchanged
  const auto& before = trained.best.tensors;
  const auto& after = out.params.tensors;
  EXPECT_EQ(after.base, before.base);
  for (std::size_t k = 0; k < before.dense_w.size(); ++k) {
    EXPECT_EQ(after.dense_w[k], before.dense_w[k]);
    EXPECT_EQ(after.att_w[k], before.att_w[k]);
  }
  for (std::size_t k = 0; k < before.masks.size(); ++k) {
    EXPECT_EQ(after.masks[k].topRows(2), before.masks[k].topRows(2));
    EXPECT_EQ(after.masks[k].row(3), before.masks[k].row(2));
  }
  EXPECT_EQ(after.items[0], before.items[0]);
  EXPECT_EQ(after.items[1], before.items[1]);
  EXPECT_EQ(out.delta.category, "cat2");
  EXPECT_EQ(out.delta.base_id, "x");
}

TEST(Transfer, DeltaRoundTripRebuildsModel) {
  Rng rng(5);
  const ModelParams p = init_params(base_config(), rng);
  const ModelParams e = extend_for_category(p, "new", 5, rng);
  TransferDelta d;
  d.base_id = "abc";
  d.category = "new";
  d.num_items = 5;
  for (const auto& m : e.tensors.masks) d.mask_rows.push_back(m.row(2));
  d.items = e.tensors.items.back();
  const auto path = std::filesystem::temp_directory_path() / "mcne_delta_test.txt";
  save_transfer_delta(path, d);
  const TransferDelta r = load_transfer_delta(path);
  EXPECT_EQ(r.base_id, "abc");
  const ModelParams rebuilt = apply_transfer_delta(p, r);
  EXPECT_EQ(tensor_checksum(rebuilt.tensors), tensor_checksum(e.tensors));
  EXPECT_EQ(rebuilt.config.categories, e.config.categories);
}
