#include "mcne/graph_store.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

namespace mcne {

namespace {

bool is_unsigned_integer(const std::string& s) {
  if (s.empty() || s.size() > 19) return false;
  return std::all_of(s.begin(), s.end(), [](char ch) { return ch >= '0' && ch <= '9'; });
}

// Dense ids follow numeric order when every token is an unsigned integer and
// lexicographic order otherwise, so the numbering does not depend on line order.
std::vector<std::string> ordered_unique(std::vector<std::string> tokens) {
  std::sort(tokens.begin(), tokens.end());
  tokens.erase(std::unique(tokens.begin(), tokens.end()), tokens.end());
  if (std::all_of(tokens.begin(), tokens.end(), is_unsigned_integer)) {
    std::stable_sort(tokens.begin(), tokens.end(), [](const std::string& a, const std::string& b) {
      return std::stoull(a) < std::stoull(b);
    });
  }
  return tokens;
}

struct IdPair {
  std::string first;
  std::string second;
  std::size_t line;
};

std::vector<IdPair> read_pairs(std::istream& in, const std::string& source) {
  std::vector<IdPair> pairs;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::istringstream fields(line);
    std::string a, b, extra;
    if (!(fields >> a)) continue;  // blank line
    if (a[0] == '#') continue;
    if (!(fields >> b) || (fields >> extra)) {
      throw ParseError(source, line_no, "expected two whitespace-separated ids, got '" + line + "'");
    }
    pairs.push_back({std::move(a), std::move(b), line_no});
  }
  return pairs;
}

std::ifstream open_input(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  return in;
}

std::ofstream open_output(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// SocialGraph

SocialGraph::SocialGraph(std::vector<std::string> node_ids,
                         const std::vector<std::pair<NodeId, NodeId>>& edges)
    : adjacency_(node_ids.size()), node_ids_(std::move(node_ids)) {
  const auto n = static_cast<NodeId>(node_ids_.size());
  for (auto [a, b] : edges) {
    if (a < 0 || b < 0 || a >= n || b >= n) {
      throw DataError("edge (" + std::to_string(a) + ", " + std::to_string(b) +
                      ") references a node outside 0.." + std::to_string(n - 1));
    }
    if (a == b) continue;
    adjacency_[a].push_back(b);
    adjacency_[b].push_back(a);
  }
  for (auto& list : adjacency_) {
    std::sort(list.begin(), list.end());
    list.erase(std::unique(list.begin(), list.end()), list.end());
    num_edges_ += list.size();
  }
  num_edges_ /= 2;
  index_.reserve(node_ids_.size());
  for (NodeId i = 0; i < n; ++i) {
    if (!index_.emplace(node_ids_[i], i).second) {
      throw DataError("duplicate node id '" + node_ids_[i] + "'");
    }
  }
}

bool SocialGraph::has_edge(NodeId a, NodeId b) const {
  const auto& list = adjacency_[a];
  return std::binary_search(list.begin(), list.end(), b);
}

NodeId SocialGraph::find(const std::string& original) const {
  auto it = index_.find(original);
  return it == index_.end() ? -1 : it->second;
}

void SocialGraph::validate() const {
  const auto n = static_cast<NodeId>(adjacency_.size());
  for (NodeId i = 0; i < n; ++i) {
    const auto& list = adjacency_[i];
    for (std::size_t k = 0; k < list.size(); ++k) {
      NodeId j = list[k];
      if (j < 0 || j >= n) throw DataError("neighbor id out of range at node " + std::to_string(i));
      if (j == i) throw DataError("self-loop at node " + std::to_string(i));
      if (k > 0 && list[k - 1] >= j) throw DataError("unsorted or duplicate adjacency at node " + std::to_string(i));
      if (!has_edge(j, i)) throw DataError("asymmetric edge " + std::to_string(i) + "-" + std::to_string(j));
    }
  }
}

// ---------------------------------------------------------------------------
// Records

int BehaviorRecords::category_index(const std::string& name) const {
  for (std::size_t c = 0; c < categories.size(); ++c) {
    if (categories[c].name == name) return static_cast<int>(c);
  }
  return -1;
}

const char* fold_name(Fold fold) {
  switch (fold) {
    case Fold::train: return "train";
    case Fold::validation: return "validation";
    case Fold::test: return "test";
  }
  return "?";
}

Fold parse_fold(const std::string& text) {
  if (text == "train") return Fold::train;
  if (text == "validation") return Fold::validation;
  if (text == "test") return Fold::test;
  throw ConfigError("unknown fold '" + text + "'");
}

const std::vector<Interaction>& CategorySplit::fold(Fold f) const {
  switch (f) {
    case Fold::train: return train;
    case Fold::validation: return validation;
    case Fold::test: return test;
  }
  return train;
}

// ---------------------------------------------------------------------------
// Loading

SocialGraph parse_edge_list(std::istream& in, const std::string& source) {
  auto pairs = read_pairs(in, source);
  if (pairs.empty()) throw DataError("empty graph: " + source + " contains no edges");

  std::vector<std::string> tokens;
  tokens.reserve(pairs.size() * 2);
  for (const auto& p : pairs) {
    tokens.push_back(p.first);
    tokens.push_back(p.second);
  }
  auto ids = ordered_unique(std::move(tokens));
  std::unordered_map<std::string, NodeId> index;
  for (std::size_t i = 0; i < ids.size(); ++i) index.emplace(ids[i], static_cast<NodeId>(i));

  std::vector<std::pair<NodeId, NodeId>> edges;
  edges.reserve(pairs.size());
  for (const auto& p : pairs) edges.emplace_back(index.at(p.first), index.at(p.second));
  return SocialGraph(std::move(ids), edges);
}

SocialGraph load_edge_list(const std::filesystem::path& path) {
  auto in = open_input(path);
  return parse_edge_list(in, path.string());
}

CategoryRecords parse_behavior_records(const SocialGraph& graph, const std::string& name,
                                       std::istream& in, const std::string& source) {
  if (name.empty() || name.find_first_of(",\t\n ") != std::string::npos) {
    throw ConfigError("category name '" + name + "' must be non-empty without commas or whitespace");
  }
  const auto pairs = read_pairs(in, source);
  CategoryRecords records;
  records.name = name;
  std::vector<std::string> item_tokens;
  item_tokens.reserve(pairs.size());
  for (const auto& p : pairs) {
    if (graph.find(p.first) < 0) {
      throw DataError("referential integrity: " + source + ":" + std::to_string(p.line) +
                      ": user '" + p.first + "' is not a node of the graph");
    }
    item_tokens.push_back(p.second);
  }
  records.item_ids = ordered_unique(std::move(item_tokens));
  std::unordered_map<std::string, ItemId> item_index;
  for (std::size_t i = 0; i < records.item_ids.size(); ++i) {
    item_index.emplace(records.item_ids[i], static_cast<ItemId>(i));
  }
  records.interactions.reserve(pairs.size());
  for (const auto& p : pairs) {
    records.interactions.push_back({graph.find(p.first), item_index.at(p.second)});
  }
  std::sort(records.interactions.begin(), records.interactions.end());
  records.interactions.erase(std::unique(records.interactions.begin(), records.interactions.end()),
                             records.interactions.end());
  return records;
}

BehaviorRecords load_behavior_records(const SocialGraph& graph,
                                      const std::vector<CategorySource>& sources) {
  BehaviorRecords records;
  for (const auto& src : sources) {
    if (records.category_index(src.name) >= 0) {
      throw ConfigError("duplicate category name '" + src.name + "'");
    }
    auto in = open_input(src.path);
    records.categories.push_back(parse_behavior_records(graph, src.name, in, src.path.string()));
  }
  return records;
}

// ---------------------------------------------------------------------------
// Filtering

std::pair<SocialGraph, BehaviorRecords> filter_min_activity(const SocialGraph& graph,
                                                            const BehaviorRecords& records,
                                                            std::size_t min_links,
                                                            std::size_t min_records) {
  const std::size_t n = graph.num_nodes();
  std::vector<std::size_t> record_count(n, 0);
  for (const auto& cat : records.categories) {
    for (const auto& it : cat.interactions) ++record_count[it.user];
  }

  std::vector<char> alive(n, 1);
  std::vector<std::size_t> degree(n);
  for (std::size_t i = 0; i < n; ++i) degree[i] = graph.degree(static_cast<NodeId>(i));

  // Removing a node lowers its neighbors' degrees; repeat until stable.
  std::vector<NodeId> frontier;
  for (std::size_t i = 0; i < n; ++i) frontier.push_back(static_cast<NodeId>(i));
  while (!frontier.empty()) {
    std::vector<NodeId> removed;
    for (NodeId i : frontier) {
      if (alive[i] && (degree[i] < min_links || record_count[i] < min_records)) {
        alive[i] = 0;
        removed.push_back(i);
      }
    }
    frontier.clear();
    for (NodeId i : removed) {
      for (NodeId j : graph.neighbors(i)) {
        if (alive[j]) {
          --degree[j];
          frontier.push_back(j);
        }
      }
    }
    std::sort(frontier.begin(), frontier.end());
    frontier.erase(std::unique(frontier.begin(), frontier.end()), frontier.end());
  }

  std::vector<NodeId> remap(n, -1);
  std::vector<std::string> ids;
  for (std::size_t i = 0; i < n; ++i) {
    if (alive[i]) {
      remap[i] = static_cast<NodeId>(ids.size());
      ids.push_back(graph.original_id(static_cast<NodeId>(i)));
    }
  }
  if (ids.empty()) {
    throw DataError("empty dataset: every user was removed by the activity filter (min_links=" +
                    std::to_string(min_links) + ", min_records=" + std::to_string(min_records) + ")");
  }

  std::vector<std::pair<NodeId, NodeId>> edges;
  for (std::size_t i = 0; i < n; ++i) {
    if (!alive[i]) continue;
    for (NodeId j : graph.neighbors(static_cast<NodeId>(i))) {
      if (static_cast<std::size_t>(j) > i && alive[j]) edges.emplace_back(remap[i], remap[j]);
    }
  }
  SocialGraph filtered(std::move(ids), edges);

  BehaviorRecords out;
  for (const auto& cat : records.categories) {
    CategoryRecords kept;
    kept.name = cat.name;
    std::vector<char> used(cat.num_items(), 0);
    for (const auto& it : cat.interactions) {
      if (alive[it.user]) used[it.item] = 1;
    }
    std::vector<ItemId> item_remap(cat.num_items(), -1);
    for (std::size_t i = 0; i < cat.num_items(); ++i) {
      if (used[i]) {
        item_remap[i] = static_cast<ItemId>(kept.item_ids.size());
        kept.item_ids.push_back(cat.item_ids[i]);
      }
    }
    for (const auto& it : cat.interactions) {
      if (alive[it.user]) kept.interactions.push_back({remap[it.user], item_remap[it.item]});
    }
    std::sort(kept.interactions.begin(), kept.interactions.end());
    out.categories.push_back(std::move(kept));
  }
  return {std::move(filtered), std::move(out)};
}

// ---------------------------------------------------------------------------
// Splitting

DatasetSplit split_dataset(const BehaviorRecords& records, const SplitRatios& ratios,
                           std::uint64_t seed) {
  if (ratios.train < 0 || ratios.validation < 0 || ratios.test < 0 ||
      std::abs(ratios.train + ratios.validation + ratios.test - 1.0) > 1e-9) {
    throw ConfigError("split ratios must be non-negative and sum to 1");
  }
  DatasetSplit split;
  split.seed = seed;
  for (std::size_t c = 0; c < records.categories.size(); ++c) {
    const auto& cat = records.categories[c];
    const std::size_t n = cat.interactions.size();
    CategorySplit out;
    if (n < 3) {
      warn("category '" + cat.name + "' has " + std::to_string(n) +
           " interactions; all of them go to the training fold");
      out.train = cat.interactions;
      split.categories.push_back(std::move(out));
      continue;
    }

    Rng rng(mix_seed({seed, c, 0x5b11u}));
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);

    const auto n_test = static_cast<std::size_t>(std::llround(static_cast<double>(n) * ratios.test));
    const auto n_val = static_cast<std::size_t>(std::llround(static_cast<double>(n) * ratios.validation));
    const std::size_t n_train = n - std::min(n, n_test + n_val);

    // fold[p] for position p in the shuffled order
    std::vector<Fold> fold(n);
    std::map<NodeId, std::size_t> train_count;
    for (std::size_t p = 0; p < n; ++p) {
      fold[p] = p < n_train ? Fold::train : (p < n_train + n_val ? Fold::validation : Fold::test);
      if (fold[p] == Fold::train) ++train_count[cat.interactions[order[p]].user];
    }

    // Guarantee one training interaction per user. The displaced slot is
    // refilled from the last training interaction of a user who has two or more.
    for (std::size_t p = 0; p < n; ++p) {
      const NodeId user = cat.interactions[order[p]].user;
      if (fold[p] == Fold::train || train_count[user] > 0) continue;
      const Fold vacated = fold[p];
      fold[p] = Fold::train;
      ++train_count[user];
      for (std::size_t q = n; q-- > 0;) {
        if (fold[q] != Fold::train || q == p) continue;
        const NodeId donor = cat.interactions[order[q]].user;
        if (train_count[donor] >= 2) {
          fold[q] = vacated;
          --train_count[donor];
          break;
        }
      }
    }

    for (std::size_t p = 0; p < n; ++p) {
      const auto& it = cat.interactions[order[p]];
      switch (fold[p]) {
        case Fold::train: out.train.push_back(it); break;
        case Fold::validation: out.validation.push_back(it); break;
        case Fold::test: out.test.push_back(it); break;
      }
    }
    std::sort(out.train.begin(), out.train.end());
    std::sort(out.validation.begin(), out.validation.end());
    std::sort(out.test.begin(), out.test.end());
    split.categories.push_back(std::move(out));
  }
  return split;
}

// ---------------------------------------------------------------------------
// Serialization

void save_edge_list(const std::filesystem::path& path, const SocialGraph& graph) {
  auto out = open_output(path);
  for (NodeId i = 0; i < static_cast<NodeId>(graph.num_nodes()); ++i) {
    if (graph.degree(i) == 0) {
      out << graph.original_id(i) << ' ' << graph.original_id(i) << '\n';
      continue;
    }
    for (NodeId j : graph.neighbors(i)) {
      if (j > i) out << graph.original_id(i) << ' ' << graph.original_id(j) << '\n';
    }
  }
}

void save_behavior_file(const std::filesystem::path& path, const SocialGraph& graph,
                        const CategoryRecords& records) {
  auto out = open_output(path);
  for (const auto& it : records.interactions) {
    out << graph.original_id(it.user) << ' ' << records.item_ids[it.item] << '\n';
  }
}

void save_dataset(const std::filesystem::path& dir, const SocialGraph& graph,
                  const BehaviorRecords& records) {
  std::filesystem::create_directories(dir);
  save_edge_list(dir / "edges.txt", graph);
  auto names = open_output(dir / "categories.txt");
  for (const auto& cat : records.categories) {
    names << cat.name << '\n';
    save_behavior_file(dir / ("behavior_" + cat.name + ".txt"), graph, cat);
  }
}

std::pair<SocialGraph, BehaviorRecords> load_dataset(const std::filesystem::path& dir) {
  SocialGraph graph = load_edge_list(dir / "edges.txt");
  std::vector<CategorySource> sources;
  auto names = open_input(dir / "categories.txt");
  std::string name;
  while (names >> name) sources.push_back({name, dir / ("behavior_" + name + ".txt")});
  BehaviorRecords records = load_behavior_records(graph, sources);
  return {std::move(graph), std::move(records)};
}

void write_split_manifest(const std::filesystem::path& path, const SocialGraph& graph,
                          const BehaviorRecords& records, const DatasetSplit& split) {
  if (split.categories.size() != records.categories.size()) {
    throw DataError("split and records disagree on the number of categories");
  }
  auto out = open_output(path);
  out << "category,user,item,fold\n";
  for (std::size_t c = 0; c < records.categories.size(); ++c) {
    const auto& cat = records.categories[c];
    for (Fold f : {Fold::train, Fold::validation, Fold::test}) {
      for (const auto& it : split.categories[c].fold(f)) {
        out << cat.name << ',' << graph.original_id(it.user) << ',' << cat.item_ids[it.item] << ','
            << fold_name(f) << '\n';
      }
    }
  }
}

DatasetSplit read_split_manifest(const std::filesystem::path& path, const SocialGraph& graph,
                                 const BehaviorRecords& records) {
  auto in = open_input(path);
  const std::string source = path.string();
  std::vector<std::unordered_map<std::string, ItemId>> item_index(records.categories.size());
  for (std::size_t c = 0; c < records.categories.size(); ++c) {
    const auto& ids = records.categories[c].item_ids;
    for (std::size_t i = 0; i < ids.size(); ++i) item_index[c].emplace(ids[i], static_cast<ItemId>(i));
  }

  DatasetSplit split;
  split.categories.resize(records.categories.size());
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line_no == 1) {
      if (line != "category,user,item,fold") throw ParseError(source, 1, "unexpected header '" + line + "'");
      continue;
    }
    if (line.empty()) continue;
    std::vector<std::string> cols;
    std::stringstream ss(line);
    std::string col;
    while (std::getline(ss, col, ',')) cols.push_back(col);
    if (cols.size() != 4) throw ParseError(source, line_no, "expected 4 columns");
    const int c = records.category_index(cols[0]);
    if (c < 0) throw ParseError(source, line_no, "unknown category '" + cols[0] + "'");
    const NodeId user = graph.find(cols[1]);
    if (user < 0) throw ParseError(source, line_no, "unknown user '" + cols[1] + "'");
    auto item = item_index[c].find(cols[2]);
    if (item == item_index[c].end()) throw ParseError(source, line_no, "unknown item '" + cols[2] + "'");
    Fold f;
    try {
      f = parse_fold(cols[3]);
    } catch (const ConfigError& e) {
      throw ParseError(source, line_no, e.what());
    }
    auto& cat = split.categories[c];
    (f == Fold::train ? cat.train : f == Fold::validation ? cat.validation : cat.test)
        .push_back({user, item->second});
  }
  for (auto& cat : split.categories) {
    std::sort(cat.train.begin(), cat.train.end());
    std::sort(cat.validation.begin(), cat.validation.end());
    std::sort(cat.test.begin(), cat.test.end());
  }
  return split;
}

}  // namespace mcne
