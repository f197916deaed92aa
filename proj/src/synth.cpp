#include "mcne/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

namespace mcne {

void SynthConfig::validate() const {
  if (num_nodes < 2) throw ConfigError("synth: need at least 2 nodes");
  if (num_categories < 1) throw ConfigError("synth: need at least 1 category");
  if (communities < 1) throw ConfigError("synth: need at least 1 community per category");
  if (items_per_community < 1) throw ConfigError("synth: items_per_community must be positive");
  if (interactions_per_user < 1 || interactions_per_user > items_per_community * communities) {
    throw ConfigError("synth: interactions_per_user must be between 1 and the number of items");
  }
  if (!(p_out >= 0.0) || !(p_in <= 1.0) || !(p_in > p_out)) {
    throw ConfigError("synth: need 0 <= p_out < p_in <= 1");
  }
  if (!(noise >= 0.0 && noise <= 1.0)) throw ConfigError("synth: noise must be in [0, 1]");
  if (!(popularity_exponent >= 0.0)) throw ConfigError("synth: popularity_exponent must be non-negative");
  if (!(correlate_last >= 0.0 && correlate_last <= 1.0)) throw ConfigError("synth: correlate_last must be in [0, 1]");
}

SynthData synth_gen(const SynthConfig& config) {
  config.validate();
  const int n = config.num_nodes;
  const int C = config.num_categories;
  Rng rng(mix_seed({config.seed, 0x5e17u}));

  SynthData data;
  std::uniform_int_distribution<int> any_label(0, config.communities - 1);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  data.labels.assign(static_cast<std::size_t>(C), std::vector<int>(static_cast<std::size_t>(n)));
  for (int c = 0; c < C; ++c) {
    for (int v = 0; v < n; ++v) data.labels[c][v] = any_label(rng);
  }
  if (config.correlate_last > 0.0 && C >= 2) {
    for (int v = 0; v < n; ++v) {
      if (unit(rng) < config.correlate_last) data.labels[C - 1][v] = data.labels[0][v];
    }
  }

  std::vector<std::string> ids;
  for (int v = 0; v < n; ++v) ids.push_back(std::to_string(v));
  std::vector<std::pair<NodeId, NodeId>> edges;
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      int shared = 0;
      for (int c = 0; c < C; ++c) shared += data.labels[c][i] == data.labels[c][j];
      const double p = config.p_out + (config.p_in - config.p_out) * shared / C;
      if (unit(rng) < p) edges.emplace_back(i, j);
    }
  }
  data.graph = SocialGraph(ids, edges);

  const int block = config.items_per_community;
  const int m = block * config.communities;
  std::vector<double> weights(static_cast<std::size_t>(block));
  for (int r = 0; r < block; ++r) weights[r] = std::pow(r + 1.0, -config.popularity_exponent);
  std::discrete_distribution<int> popular(weights.begin(), weights.end());
  std::uniform_int_distribution<int> any_item(0, m - 1);

  for (int c = 0; c < C; ++c) {
    CategoryRecords cat;
    cat.name = "cat" + std::to_string(c);
    for (int i = 0; i < m; ++i) cat.item_ids.push_back(std::to_string(i));
    for (int v = 0; v < n; ++v) {
      std::vector<ItemId> chosen;
      while (static_cast<int>(chosen.size()) < config.interactions_per_user) {
        const ItemId item = unit(rng) < config.noise ? any_item(rng) : data.labels[c][v] * block + popular(rng);
        if (std::find(chosen.begin(), chosen.end(), item) == chosen.end()) chosen.push_back(item);
      }
      for (ItemId item : chosen) cat.interactions.push_back({v, item});
    }
    std::sort(cat.interactions.begin(), cat.interactions.end());
    data.records.categories.push_back(std::move(cat));
  }
  return data;
}

void write_labels(const std::filesystem::path& path, const SynthData& data) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << "node,category,community\n";
  for (std::size_t c = 0; c < data.labels.size(); ++c) {
    for (std::size_t v = 0; v < data.labels[c].size(); ++v) {
      out << data.graph.original_id(static_cast<NodeId>(v)) << ',' << data.records.categories[c].name << ','
          << data.labels[c][v] << '\n';
    }
  }
}

double nearest_centroid_accuracy(const Matrix& features, const std::vector<int>& labels) {
  if (features.rows() != static_cast<Eigen::Index>(labels.size()) || labels.empty()) {
    throw ConfigError("nearest_centroid_accuracy: one label per row required");
  }
  Matrix x = features;
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const double norm = x.row(r).norm();
    if (norm > 0) x.row(r) /= norm;
  }
  const int classes = *std::max_element(labels.begin(), labels.end()) + 1;
  Matrix centroids = Matrix::Zero(classes, x.cols());
  std::vector<int> counts(static_cast<std::size_t>(classes), 0);
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    centroids.row(labels[r]) += x.row(r);
    ++counts[labels[r]];
  }
  for (int k = 0; k < classes; ++k) {
    if (counts[k] > 0) centroids.row(k) /= counts[k];
  }
  std::size_t correct = 0;
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    int best = -1;
    double best_dist = INFINITY;
    for (int k = 0; k < classes; ++k) {
      if (counts[k] == 0) continue;
      const double dist = (x.row(r) - centroids.row(k)).squaredNorm();
      if (dist < best_dist) {
        best_dist = dist;
        best = k;
      }
    }
    correct += best == labels[r];
  }
  return static_cast<double>(correct) / static_cast<double>(x.rows());
}

}  // namespace mcne
