#pragma once

// Plain-text exports for visualization: conditional embeddings as TSV and
// binarized masks as CSV.

#include <filesystem>
#include <vector>

#include "mcne/graph_store.hpp"
#include "mcne/message_passing.hpp"
#include "mcne/param_store.hpp"

namespace mcne {

/// Writes embeddings_<category>.tsv per category: one line per node with
/// the original id followed by d_K values. Returns the written paths.
std::vector<std::filesystem::path> export_embeddings(const std::filesystem::path& dir,
                                                     const ModelParams& params, const SocialGraph& graph,
                                                     const InferenceOptions& inference);

/// Writes masks_layer<k>.csv per layer with header "category,active,d0,...";
/// `active` is the row sum. Warns for categories whose mask row is all zero.
std::vector<std::filesystem::path> export_masks(const std::filesystem::path& dir, const ModelParams& params);

}  // namespace mcne
