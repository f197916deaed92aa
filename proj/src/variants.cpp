#include "mcne/variants.hpp"

#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

namespace mcne {

Variant parse_variant(const std::string& name) {
  if (name == "full" || name == "mcne") return Variant::full;
  if (name == "mcne_a" || name == "mcne-a") return Variant::mcne_a;
  if (name == "mcne_f" || name == "mcne-f") return Variant::mcne_f;
  if (name == "shared") return Variant::shared;
  throw ConfigError("unknown variant '" + name + "' (expected full, mcne_a, mcne_f or shared)");
}

const char* to_string(Variant variant) {
  switch (variant) {
    case Variant::full: return "full";
    case Variant::mcne_a: return "mcne_a";
    case Variant::mcne_f: return "mcne_f";
    case Variant::shared: return "shared";
  }
  return "?";
}

ModelConfig build_variant(ModelConfig config, Variant variant) {
  config.variant = to_string(variant);
  switch (variant) {
    case Variant::full:
      config.attention = AttentionMode::learned;
      config.mask_init = MaskInit::uniform_random;
      config.masks_trainable = true;
      break;
    case Variant::mcne_a:
      config.attention = AttentionMode::uniform;
      config.mask_init = MaskInit::uniform_random;
      config.masks_trainable = true;
      break;
    case Variant::mcne_f:
      config.attention = AttentionMode::uniform;
      config.mask_init = MaskInit::fixed_disjoint;
      config.masks_trainable = false;
      break;
    case Variant::shared:
      config.dims = {config.output_dim()};
      config.attention = AttentionMode::uniform;
      config.mask_init = MaskInit::all_ones;
      config.masks_trainable = false;
      break;
  }
  config.validate();
  return config;
}

// ---------------------------------------------------------------------------
// Transfer

namespace {

ModelConfig extended_config(const ModelConfig& base, const std::string& name, int num_items) {
  for (const auto& c : base.categories) {
    if (c == name) throw ConfigError("category '" + name + "' already exists in the model");
  }
  if (num_items <= 0) throw DataError("new category '" + name + "' has no items");
  ModelConfig cfg = base;
  cfg.categories.push_back(name);
  cfg.num_items.push_back(num_items);
  cfg.attention = AttentionMode::uniform;
  cfg.masks_trainable = true;
  return cfg;
}

// New row at index C (ahead of "other"), zero-filled.
ModelParams extend_structure(const ModelParams& trained, const std::string& name, int num_items) {
  ModelParams out;
  out.config = extended_config(trained.config, name, num_items);
  out.tensors = trained.tensors;
  const int C = trained.config.num_categories();
  for (auto& m : out.tensors.masks) {
    Matrix grown(m.rows() + 1, m.cols());
    grown.topRows(C) = m.topRows(C);
    grown.row(C).setZero();
    grown.bottomRows(m.rows() - C) = m.bottomRows(m.rows() - C);
    m = std::move(grown);
  }
  out.tensors.items.push_back(Matrix::Zero(num_items, out.config.output_dim()));
  return out;
}

void fnv(std::uint64_t& h, const double* data, std::size_t n) {
  const auto* bytes = reinterpret_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n * sizeof(double); ++i) {
    h ^= bytes[i];
    h *= 0x100000001b3ull;
  }
}

}  // namespace

ModelParams extend_for_category(const ModelParams& trained, const std::string& name, int num_items,
                                Rng& rng) {
  ModelParams out = extend_structure(trained, name, num_items);
  const int C = trained.config.num_categories();
  std::uniform_real_distribution<double> mask_dist(-out.config.mask_init_range, out.config.mask_init_range);
  for (auto& m : out.tensors.masks) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) m(C, j) = mask_dist(rng);
  }
  std::normal_distribution<double> item_dist(0.0, out.config.init_std);
  Matrix& items = out.tensors.items.back();
  for (Eigen::Index i = 0; i < items.size(); ++i) items.data()[i] = item_dist(rng);
  return out;
}

TrainableSet transfer_trainable(const ModelConfig& extended) {
  TrainableSet t;
  const int K = extended.num_layers();
  const int C = extended.num_categories() - 1;
  t.frozen.insert("base");
  for (int k = 0; k < K; ++k) {
    const auto s = std::to_string(k);
    for (const char* p : {"att_w.", "att_b.", "att_h.", "dense_w.", "dense_b."}) t.frozen.insert(p + s);
  }
  for (int c = 0; c < C; ++c) t.frozen.insert("items." + std::to_string(c));
  for (int k = 0; k <= K; ++k) {
    std::vector<bool> rows(static_cast<std::size_t>(extended.mask_rows()), false);
    rows[C] = true;
    t.row_filter["mask." + std::to_string(k)] = rows;
  }
  return t;
}

std::uint64_t frozen_checksum(const ModelParams& extended, int new_category) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  const auto& P = extended.tensors;
  fnv(h, P.base.data(), static_cast<std::size_t>(P.base.size()));
  for (const auto& m : P.masks) {
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      if (r == new_category) continue;
      fnv(h, m.row(r).data(), static_cast<std::size_t>(m.cols()));
    }
  }
  for (std::size_t k = 0; k < P.att_w.size(); ++k) {
    fnv(h, P.att_w[k].data(), static_cast<std::size_t>(P.att_w[k].size()));
    fnv(h, P.att_b[k].data(), static_cast<std::size_t>(P.att_b[k].size()));
    fnv(h, P.att_h[k].data(), static_cast<std::size_t>(P.att_h[k].size()));
    fnv(h, P.dense_w[k].data(), static_cast<std::size_t>(P.dense_w[k].size()));
    fnv(h, P.dense_b[k].data(), static_cast<std::size_t>(P.dense_b[k].size()));
  }
  for (std::size_t c = 0; c < P.items.size(); ++c) {
    if (static_cast<int>(c) == new_category) continue;
    fnv(h, P.items[c].data(), static_cast<std::size_t>(P.items[c].size()));
  }
  return h;
}

TransferOutcome transfer_new_category(const ModelParams& trained, const SocialGraph& graph,
                                      const CategoryRecords& new_records, const TrainConfig& config,
                                      const std::string& base_id) {
  TrainConfig cfg = config;
  cfg.dims = trained.config.dims;
  if (static_cast<int>(cfg.fanouts.size()) < trained.config.num_layers()) {
    throw ConfigError("transfer needs one fan-out per layer of the base model");
  }
  cfg.fanouts.resize(static_cast<std::size_t>(trained.config.num_layers()));
  cfg.validate();
  if (static_cast<int>(graph.num_nodes()) != trained.config.num_nodes) {
    throw ConfigError("graph and base model disagree on the number of nodes");
  }

  Rng rng(mix_seed({cfg.seed, 0x7a45u}));
  TransferOutcome out;
  out.params = extend_for_category(trained, new_records.name, static_cast<int>(new_records.num_items()), rng);
  const int C = trained.config.num_categories();
  out.trainable = transfer_trainable(out.params.config);
  out.trainable_count = out.trainable.count(out.params.tensors);
  out.frozen_before = frozen_checksum(out.params, C);

  BehaviorRecords single;
  single.categories.push_back(new_records);
  const DatasetSplit split = split_dataset(single, SplitRatios{}, cfg.seed);
  InteractionIndex index(graph.num_nodes(), out.params.config.num_items);
  index.set_category(C, split.categories[0]);

  Trainer trainer(out.params, graph, index, cfg, out.trainable, {C});
  out.training = run_training(trainer);
  out.params = out.training.best;
  out.frozen_after = frozen_checksum(out.params, C);

  EvalOptions eo;
  eo.seed = mix_seed({cfg.seed, 0x7e57u});
  eo.num_negatives = cfg.eval_negatives;
  const int cats[] = {C};
  if (!index.fold(C, Fold::test).empty()) {
    out.test = evaluate(out.params, graph, index, cats, Fold::test, eo, inference_options(cfg, out.params.config));
  }

  out.delta.base_id = base_id;
  out.delta.category = new_records.name;
  out.delta.num_items = static_cast<int>(new_records.num_items());
  for (const auto& m : out.params.tensors.masks) out.delta.mask_rows.push_back(m.row(C));
  out.delta.items = out.params.tensors.items.back();
  return out;
}

// ---------------------------------------------------------------------------
// Delta files

namespace {

void write_matrix(std::ostream& out, const std::string& name, const double* data, Eigen::Index rows,
                  Eigen::Index cols) {
  out << "tensor " << name << ' ' << rows << ' ' << cols << '\n';
  char buf[32];
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) {
      std::snprintf(buf, sizeof buf, "%.17g", data[r * cols + c]);
      out << (c ? " " : "") << buf;
    }
    out << '\n';
  }
}

Matrix read_matrix(std::istream& in, const std::string& path, const std::string& expect) {
  std::string word, name;
  Eigen::Index rows = 0, cols = 0;
  if (!(in >> word >> name >> rows >> cols) || word != "tensor" || name != expect || rows < 0 || cols < 0) {
    throw ParseError(path, 0, "expected tensor '" + expect + "'");
  }
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    if (!(in >> m.data()[i])) throw ParseError(path, 0, "truncated tensor '" + expect + "'");
  }
  return m;
}

}  // namespace

void save_transfer_delta(const std::filesystem::path& path, const TransferDelta& delta) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << "mcne-transfer 1\n";
  out << "base " << (delta.base_id.empty() ? "-" : delta.base_id) << '\n';
  out << "category " << delta.category << '\n';
  out << "items " << delta.num_items << '\n';
  out << "layers " << delta.mask_rows.size() << '\n';
  for (std::size_t k = 0; k < delta.mask_rows.size(); ++k) {
    write_matrix(out, "mask." + std::to_string(k), delta.mask_rows[k].data(), 1, delta.mask_rows[k].size());
  }
  write_matrix(out, "items", delta.items.data(), delta.items.rows(), delta.items.cols());
  out << "end\n";
  if (!out) throw IoError("failed writing " + path.string());
}

TransferDelta load_transfer_delta(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  const std::string src = path.string();
  std::string magic, version, key;
  if (!(in >> magic >> version) || magic != "mcne-transfer" || version != "1") {
    throw ParseError(src, 1, "not a transfer delta file");
  }
  TransferDelta d;
  std::size_t layers = 0;
  if (!(in >> key >> d.base_id) || key != "base") throw ParseError(src, 2, "expected 'base'");
  if (d.base_id == "-") d.base_id.clear();
  if (!(in >> key >> d.category) || key != "category") throw ParseError(src, 3, "expected 'category'");
  if (!(in >> key >> d.num_items) || key != "items") throw ParseError(src, 4, "expected 'items'");
  if (!(in >> key >> layers) || key != "layers") throw ParseError(src, 5, "expected 'layers'");
  for (std::size_t k = 0; k < layers; ++k) {
    const Matrix m = read_matrix(in, src, "mask." + std::to_string(k));
    if (m.rows() != 1) throw ParseError(src, 0, "mask rows in a delta must have one row");
    d.mask_rows.push_back(m.row(0));
  }
  d.items = read_matrix(in, src, "items");
  if (!(in >> key) || key != "end") throw ParseError(src, 0, "missing 'end'");
  if (d.items.rows() != d.num_items) throw ParseError(src, 0, "item count does not match the items tensor");
  return d;
}

ModelParams apply_transfer_delta(const ModelParams& base, const TransferDelta& delta) {
  if (delta.mask_rows.size() != base.tensors.masks.size()) {
    throw ConfigError("delta has " + std::to_string(delta.mask_rows.size()) + " mask layers, base model has " +
                      std::to_string(base.tensors.masks.size()));
  }
  ModelParams out = extend_structure(base, delta.category, delta.num_items);
  const int C = base.config.num_categories();
  for (std::size_t k = 0; k < delta.mask_rows.size(); ++k) {
    if (delta.mask_rows[k].size() != out.tensors.masks[k].cols()) {
      throw ConfigError("delta mask layer " + std::to_string(k) + " has the wrong width");
    }
    out.tensors.masks[k].row(C) = delta.mask_rows[k];
  }
  if (delta.items.cols() != out.config.output_dim()) throw ConfigError("delta item width does not match the model");
  out.tensors.items.back() = delta.items;
  return out;
}

}  // namespace mcne
