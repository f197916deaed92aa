#pragma once

// Ablation wiring (fixed masks, no attention, shared single embedding) and
// mask-only transfer to a new behavior category.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "mcne/bpr_trainer.hpp"
#include "mcne/evaluator.hpp"
#include "mcne/param_store.hpp"

namespace mcne {

enum class Variant {
  full,     // learnable masks + attention
  mcne_a,   // learnable masks, uniform message weights
  mcne_f,   // fixed disjoint masks, uniform message weights
  shared,   // one embedding shared by every category, no message passing
};

Variant parse_variant(const std::string& name);
const char* to_string(Variant variant);

/// Rewires a configuration for the requested variant. `shared` keeps only
/// the output dimension (no layers) and an all-ones mask.
ModelConfig build_variant(ModelConfig config, Variant variant);

struct TransferDelta {
  std::string base_id;            // content hash of the base checkpoint
  std::string category;
  int num_items = 0;
  std::vector<RowVector> mask_rows;   // one new row per mask layer
  Matrix items;                        // new category's item embeddings
};

struct TransferOutcome {
  ModelParams params;              // extended model
  TransferDelta delta;
  TrainResult training;
  EvalResult test;
  std::uint64_t frozen_before = 0;
  std::uint64_t frozen_after = 0;
  std::size_t trainable_count = 0;
  TrainableSet trainable;
};

/// Inserts the new category's mask row (ahead of the "other" row) in every
/// layer and a fresh item matrix.
ModelParams extend_for_category(const ModelParams& trained, const std::string& name, int num_items,
                                Rng& rng);

/// Only the new mask rows and the new item embeddings train.
TrainableSet transfer_trainable(const ModelConfig& extended);

/// Checksum over every tensor entry that existed before the extension.
std::uint64_t frozen_checksum(const ModelParams& extended, int new_category);

/// Extends the trained model with `new_records`, splits them 70/10/20,
/// trains the new mask rows and item embeddings with uniform message
/// weights over all condition rows, and evaluates on the new test fold.
/// Throws ConfigError when the category name already exists.
TransferOutcome transfer_new_category(const ModelParams& trained, const SocialGraph& graph,
                                      const CategoryRecords& new_records, const TrainConfig& config,
                                      const std::string& base_id = "");

void save_transfer_delta(const std::filesystem::path& path, const TransferDelta& delta);
TransferDelta load_transfer_delta(const std::filesystem::path& path);
/// Rebuilds the extended model from its base and a delta.
ModelParams apply_transfer_delta(const ModelParams& base, const TransferDelta& delta);

}  // namespace mcne
