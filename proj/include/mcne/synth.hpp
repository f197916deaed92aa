#pragma once

// Planted-community generator: independent community labels per category,
// a social graph whose edge density grows with the number of shared
// labels, and per-category interactions concentrated on community items.

#include <cstdint>
#include <filesystem>
#include <vector>

#include "mcne/graph_store.hpp"

namespace mcne {

struct SynthConfig {
  int num_nodes = 400;
  int num_categories = 2;
  int communities = 2;               // per category
  int items_per_community = 50;
  double p_in = 0.05;                // edge probability when every label matches
  double p_out = 0.005;              // edge probability when no label matches
  double noise = 0.05;               // chance an interaction ignores the community
  int interactions_per_user = 10;    // per category
  double popularity_exponent = 0.8;  // Zipf exponent inside a community block
  double correlate_last = 0.0;       // last category copies category 0's label with this probability
  std::uint64_t seed = 1;

  void validate() const;
};

struct SynthData {
  SocialGraph graph;
  BehaviorRecords records;
  std::vector<std::vector<int>> labels;   // [category][node]
};

/// Nodes are named "0".."n-1", categories "cat0".., items "0".. per
/// category. Community g owns items [g * items_per_community, (g + 1) * items_per_community).
SynthData synth_gen(const SynthConfig& config);

/// CSV with header node,category,community.
void write_labels(const std::filesystem::path& path, const SynthData& data);

/// Nearest-centroid accuracy of `labels` on the rows of `features`: each row
/// is L2-normalized, centroids are class means over all rows, and a row is
/// assigned to the closest centroid.
double nearest_centroid_accuracy(const Matrix& features, const std::vector<int>& labels);

}  // namespace mcne
