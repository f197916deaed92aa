#pragma once

// Social graph and per-category behavior records: ingestion, activity
// filtering, seeded train/validation/test splits and their text formats.

#include <cstdint>
#include <filesystem>
#include <istream>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "mcne/common.hpp"

namespace mcne {

/// Undirected user-user graph with implicit binary edge weights.
/// Adjacency lists are sorted, symmetric, without self-loops or duplicates.
class SocialGraph {
 public:
  SocialGraph() = default;

  /// Builds the graph from raw pairs. Self-loops are dropped (the node is
  /// kept) and both orientations of an edge collapse to one.
  SocialGraph(std::vector<std::string> node_ids,
              const std::vector<std::pair<NodeId, NodeId>>& edges);

  std::size_t num_nodes() const { return adjacency_.size(); }
  std::size_t num_edges() const { return num_edges_; }
  std::size_t degree(NodeId node) const { return adjacency_[node].size(); }
  const std::vector<NodeId>& neighbors(NodeId node) const { return adjacency_[node]; }
  bool has_edge(NodeId a, NodeId b) const;

  const std::vector<std::string>& node_ids() const { return node_ids_; }
  const std::string& original_id(NodeId node) const { return node_ids_[node]; }
  /// Dense id for an original id, or -1 when unknown.
  NodeId find(const std::string& original) const;

  /// Throws DataError when an invariant does not hold.
  void validate() const;

  friend bool operator==(const SocialGraph& a, const SocialGraph& b) {
    return a.adjacency_ == b.adjacency_ && a.node_ids_ == b.node_ids_;
  }

 private:
  std::vector<std::vector<NodeId>> adjacency_;
  std::vector<std::string> node_ids_;
  std::unordered_map<std::string, NodeId> index_;
  std::size_t num_edges_ = 0;
};

struct Interaction {
  NodeId user;
  ItemId item;

  friend auto operator<=>(const Interaction&, const Interaction&) = default;
};

/// Implicit-feedback interactions of one behavior category.
struct CategoryRecords {
  std::string name;
  std::vector<std::string> item_ids;       // dense item id -> original id
  std::vector<Interaction> interactions;   // sorted, unique

  std::size_t num_items() const { return item_ids.size(); }
  friend bool operator==(const CategoryRecords&, const CategoryRecords&) = default;
};

struct BehaviorRecords {
  std::vector<CategoryRecords> categories;

  std::size_t num_categories() const { return categories.size(); }
  int category_index(const std::string& name) const;
  friend bool operator==(const BehaviorRecords&, const BehaviorRecords&) = default;
};

enum class Fold : std::uint8_t { train, validation, test };

const char* fold_name(Fold fold);
Fold parse_fold(const std::string& text);

struct CategorySplit {
  std::vector<Interaction> train;
  std::vector<Interaction> validation;
  std::vector<Interaction> test;

  const std::vector<Interaction>& fold(Fold f) const;
  std::size_t size() const { return train.size() + validation.size() + test.size(); }
  friend bool operator==(const CategorySplit&, const CategorySplit&) = default;
};

struct DatasetSplit {
  std::vector<CategorySplit> categories;
  std::uint64_t seed = 0;

  friend bool operator==(const DatasetSplit&, const DatasetSplit&) = default;
};

struct SplitRatios {
  double train = 0.7;
  double validation = 0.1;
  double test = 0.2;
};

struct CategorySource {
  std::string name;
  std::filesystem::path path;
};

SocialGraph parse_edge_list(std::istream& in, const std::string& source = "<stream>");
SocialGraph load_edge_list(const std::filesystem::path& path);

CategoryRecords parse_behavior_records(const SocialGraph& graph, const std::string& name,
                                       std::istream& in, const std::string& source = "<stream>");
BehaviorRecords load_behavior_records(const SocialGraph& graph,
                                      const std::vector<CategorySource>& sources);

/// Removes users with fewer than `min_links` neighbors or fewer than
/// `min_records` interactions (summed over categories), repeating until no
/// user falls below either threshold. Items left without interactions are
/// dropped; surviving nodes and items keep their relative order.
std::pair<SocialGraph, BehaviorRecords> filter_min_activity(const SocialGraph& graph,
                                                            const BehaviorRecords& records,
                                                            std::size_t min_links,
                                                            std::size_t min_records);

/// Per-category shuffled split. Every user that appears in a category keeps
/// at least one training interaction; fold sizes are preserved by swapping
/// with a user that has training interactions to spare.
DatasetSplit split_dataset(const BehaviorRecords& records, const SplitRatios& ratios,
                           std::uint64_t seed);

// Plain-text formats. Edge and behavior files use original ids; a node with
// no neighbors is written as a self-loop line so that it survives a reload.
void save_edge_list(const std::filesystem::path& path, const SocialGraph& graph);
void save_behavior_file(const std::filesystem::path& path, const SocialGraph& graph,
                        const CategoryRecords& records);

/// Dataset directory: edges.txt, categories.txt (one name per line) and
/// behavior_<name>.txt per category.
void save_dataset(const std::filesystem::path& dir, const SocialGraph& graph,
                  const BehaviorRecords& records);
std::pair<SocialGraph, BehaviorRecords> load_dataset(const std::filesystem::path& dir);

/// CSV manifest with header "category,user,item,fold" in original ids.
void write_split_manifest(const std::filesystem::path& path, const SocialGraph& graph,
                          const BehaviorRecords& records, const DatasetSplit& split);
DatasetSplit read_split_manifest(const std::filesystem::path& path, const SocialGraph& graph,
                                 const BehaviorRecords& records);

}  // namespace mcne
