#include "mcne/param_store.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "mcne/mask_layer.hpp"

namespace mcne {

const char* to_string(AttentionMode mode) {
  return mode == AttentionMode::learned ? "learned" : "uniform";
}

const char* to_string(MaskInit init) {
  switch (init) {
    case MaskInit::uniform_random: return "uniform_random";
    case MaskInit::fixed_disjoint: return "fixed_disjoint";
    case MaskInit::all_ones: return "all_ones";
  }
  return "?";
}

void ModelConfig::validate() const {
  if (dims.empty()) throw ConfigError("dims must list at least one layer dimension");
  for (int d : dims) {
    if (d <= 0) throw ConfigError("layer dimensions must be positive");
  }
  if (categories.empty()) throw ConfigError("at least one behavior category is required");
  if (num_items.size() != categories.size()) {
    throw ConfigError("num_items must have one entry per category");
  }
  for (int m : num_items) {
    if (m <= 0) throw ConfigError("every category needs at least one item");
  }
  if (num_nodes <= 0) throw ConfigError("num_nodes must be positive");
  if (attention_hidden <= 0) throw ConfigError("attention_hidden must be positive");
  if (init_std <= 0 || mask_init_range <= 0) throw ConfigError("initialization scales must be positive");
  if (mask_init == MaskInit::fixed_disjoint) {
    for (int d : dims) {
      if (d < mask_rows()) {
        throw ConfigError("fixed disjoint masks need every layer dim >= C+1");
      }
    }
  }
}

// ---------------------------------------------------------------------------
// ParamSet

std::vector<TensorView> ParamSet::views() {
  std::vector<TensorView> out;
  out.push_back({"base", TensorKind::embedding, base.data(), base.rows(), base.cols()});
  for (std::size_t k = 0; k < masks.size(); ++k) {
    out.push_back({"mask." + std::to_string(k), TensorKind::mask, masks[k].data(), masks[k].rows(),
                   masks[k].cols()});
  }
  for (std::size_t k = 0; k < att_w.size(); ++k) {
    const auto s = std::to_string(k);
    out.push_back({"att_w." + s, TensorKind::attention, att_w[k].data(), att_w[k].rows(), att_w[k].cols()});
    out.push_back({"att_b." + s, TensorKind::attention, att_b[k].data(), att_b[k].size(), 1});
    out.push_back({"att_h." + s, TensorKind::attention, att_h[k].data(), att_h[k].size(), 1});
    out.push_back({"dense_w." + s, TensorKind::dense, dense_w[k].data(), dense_w[k].rows(), dense_w[k].cols()});
    out.push_back({"dense_b." + s, TensorKind::dense, dense_b[k].data(), dense_b[k].size(), 1});
  }
  for (std::size_t c = 0; c < items.size(); ++c) {
    out.push_back({"items." + std::to_string(c), TensorKind::item, items[c].data(), items[c].rows(),
                   items[c].cols()});
  }
  return out;
}

std::vector<ConstTensorView> ParamSet::views() const {
  auto mutable_views = const_cast<ParamSet*>(this)->views();
  std::vector<ConstTensorView> out;
  out.reserve(mutable_views.size());
  for (auto& v : mutable_views) out.push_back({v.name, v.kind, v.data, v.rows, v.cols});
  return out;
}

ParamSet ParamSet::zeros_like() const {
  ParamSet z = *this;
  z.set_zero();
  return z;
}

void ParamSet::set_zero() {
  for (auto& v : views()) std::fill(v.values().begin(), v.values().end(), 0.0);
}

std::size_t ParamSet::size() const {
  std::size_t n = 0;
  for (const auto& v : views()) n += v.values().size();
  return n;
}

// ---------------------------------------------------------------------------
// Trainable sets

bool TrainableSet::tensor_trainable(const std::string& name) const {
  return frozen.count(name) == 0;
}

bool TrainableSet::row_trainable(const std::string& name, Eigen::Index row) const {
  if (!tensor_trainable(name)) return false;
  auto it = row_filter.find(name);
  if (it == row_filter.end()) return true;
  return row < static_cast<Eigen::Index>(it->second.size()) && it->second[row];
}

std::size_t TrainableSet::count(const ParamSet& params) const {
  std::size_t n = 0;
  for (const auto& v : params.views()) {
    for (Eigen::Index r = 0; r < v.rows; ++r) {
      if (row_trainable(v.name, r)) n += static_cast<std::size_t>(v.cols);
    }
  }
  return n;
}

TrainableSet default_trainable(const ModelConfig& config) {
  TrainableSet t;
  if (!config.masks_trainable) {
    for (int k = 0; k <= config.num_layers(); ++k) t.frozen.insert("mask." + std::to_string(k));
  }
  if (config.attention == AttentionMode::uniform) {
    for (int k = 0; k < config.num_layers(); ++k) {
      const auto s = std::to_string(k);
      t.frozen.insert("att_w." + s);
      t.frozen.insert("att_b." + s);
      t.frozen.insert("att_h." + s);
    }
  }
  return t;
}

// ---------------------------------------------------------------------------
// Initialization

namespace {

Matrix gaussian(Eigen::Index rows, Eigen::Index cols, double stddev, Rng& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
  return m;
}

Matrix mask_matrix(const ModelConfig& config, int dim, Rng& rng) {
  switch (config.mask_init) {
    case MaskInit::uniform_random: {
      std::uniform_real_distribution<double> dist(-config.mask_init_range, config.mask_init_range);
      Matrix m(config.mask_rows(), dim);
      for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
      return m;
    }
    case MaskInit::fixed_disjoint:
      // Real values at +-1 binarize to the disjoint layout.
      return fixed_disjoint_masks(config.mask_rows(), dim).matrix() * 2.0 -
             Matrix::Ones(config.mask_rows(), dim);
    case MaskInit::all_ones:
      return Matrix::Ones(config.mask_rows(), dim);
  }
  return {};
}

}  // namespace

ModelParams init_params(const ModelConfig& config, Rng& rng) {
  config.validate();
  const double sd = config.init_std;
  const int K = config.num_layers();
  const int t = config.attention_hidden;

  ModelParams p;
  p.config = config;
  ParamSet& x = p.tensors;
  x.base = gaussian(config.num_nodes, config.dims[0], sd, rng);
  for (int k = 0; k <= K; ++k) x.masks.push_back(mask_matrix(config, config.dims[k], rng));
  for (int k = 0; k < K; ++k) {
    const int dk = config.dims[k];
    x.att_w.push_back(gaussian(t, 2 * dk, sd, rng));
    x.att_b.push_back(Vector::Zero(t));
    x.att_h.push_back(gaussian(t, 1, sd, rng).col(0));
    x.dense_w.push_back(gaussian(config.dims[k + 1], 2 * dk, sd, rng));
    x.dense_b.push_back(Vector::Zero(config.dims[k + 1]));
  }
  for (int c = 0; c < config.num_categories(); ++c) {
    x.items.push_back(gaussian(config.num_items[c], config.output_dim(), sd, rng));
  }
  return p;
}

void accumulate_trainable(ParamSet& dst, const ParamSet& src, const TrainableSet& trainable) {
  auto d = dst.views();
  auto s = src.views();
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (!trainable.tensor_trainable(d[i].name)) continue;
    const bool filtered = trainable.row_filter.count(d[i].name) > 0;
    for (Eigen::Index r = 0; r < d[i].rows; ++r) {
      if (filtered && !trainable.row_trainable(d[i].name, r)) continue;
      double* out = d[i].data + r * d[i].cols;
      const double* in = s[i].data + r * s[i].cols;
      for (Eigen::Index c = 0; c < d[i].cols; ++c) out[c] += in[c];
    }
  }
}

// ---------------------------------------------------------------------------
// Adam

AdamOptimizer::AdamOptimizer(const ParamSet& shape, AdamHyper hyper)
    : hyper_(hyper), first_(shape.zeros_like()), second_(shape.zeros_like()) {}

void AdamOptimizer::step(ParamSet& params, const ParamSet& grads, const TrainableSet& trainable) {
  auto p = params.views();
  auto g = grads.views();
  auto m = first_.views();
  auto v = second_.views();
  for (const auto& view : g) {
    for (double value : view.values()) {
      if (!std::isfinite(value)) throw NumericError("non-finite gradient in tensor '" + view.name + "'");
    }
  }

  ++steps_;
  const double b1 = hyper_.beta1;
  const double b2 = hyper_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(steps_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(steps_));
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (!trainable.tensor_trainable(p[i].name)) continue;
    const bool filtered = trainable.row_filter.count(p[i].name) > 0;
    for (Eigen::Index r = 0; r < p[i].rows; ++r) {
      if (filtered && !trainable.row_trainable(p[i].name, r)) continue;
      for (Eigen::Index c = 0; c < p[i].cols; ++c) {
        const Eigen::Index at = r * p[i].cols + c;
        const double grad = g[i].data[at];
        double& m1 = m[i].data[at];
        double& m2 = v[i].data[at];
        m1 = b1 * m1 + (1.0 - b1) * grad;
        m2 = b2 * m2 + (1.0 - b2) * grad * grad;
        const double mhat = m1 / c1;
        const double vhat = m2 / c2;
        p[i].data[at] -= hyper_.learning_rate * mhat / (std::sqrt(vhat) + hyper_.epsilon);
      }
    }
  }
  clamp_masks(params);
}

void clamp_masks(ParamSet& params) {
  for (auto& m : params.masks) m = m.cwiseMax(-1.0).cwiseMin(1.0);
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

std::string join_ints(const std::vector<int>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string part;
  while (std::getline(ss, part, ',')) out.push_back(part);
  return out;
}

std::vector<int> parse_ints(const std::string& s) {
  std::vector<int> out;
  for (const auto& part : split_list(s)) out.push_back(std::stoi(part));
  return out;
}

std::string format_double(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const ModelParams& params) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write checkpoint " + path.string());
  const auto& c = params.config;
  std::string names;
  for (std::size_t i = 0; i < c.categories.size(); ++i) names += (i ? "," : "") + c.categories[i];
  out << "mcne-checkpoint 1\n";
  out << "dims = " << join_ints(c.dims) << '\n';
  out << "categories = " << names << '\n';
  out << "num_items = " << join_ints(c.num_items) << '\n';
  out << "num_nodes = " << c.num_nodes << '\n';
  out << "attention_hidden = " << c.attention_hidden << '\n';
  out << "attention = " << to_string(c.attention) << '\n';
  out << "mask_init = " << to_string(c.mask_init) << '\n';
  out << "masks_trainable = " << (c.masks_trainable ? 1 : 0) << '\n';
  out << "variant = " << c.variant << '\n';
  out << "init_std = " << format_double(c.init_std) << '\n';
  out << "mask_init_range = " << format_double(c.mask_init_range) << '\n';
  for (const auto& v : params.tensors.views()) {
    out << "tensor " << v.name << ' ' << v.rows << ' ' << v.cols << '\n';
    for (Eigen::Index r = 0; r < v.rows; ++r) {
      for (Eigen::Index col = 0; col < v.cols; ++col) {
        out << (col ? " " : "") << format_double(v.data[r * v.cols + col]);
      }
      out << '\n';
    }
  }
  out << "end\n";
  if (!out) throw IoError("failed while writing " + path.string());
}

ModelParams load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  const std::string source = path.string();
  std::string line;
  std::size_t line_no = 1;
  if (!std::getline(in, line) || line != "mcne-checkpoint 1") {
    throw ParseError(source, 1, "not an mcne checkpoint");
  }

  ModelConfig c;
  c.dims.clear();
  std::map<std::string, std::string> keys;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.rfind("tensor ", 0) == 0) break;
    auto eq = line.find(" = ");
    if (eq == std::string::npos) throw ParseError(source, line_no, "expected 'key = value'");
    keys[line.substr(0, eq)] = line.substr(eq + 3);
  }
  try {
    c.dims = parse_ints(keys.at("dims"));
    c.categories = split_list(keys.at("categories"));
    c.num_items = parse_ints(keys.at("num_items"));
    c.num_nodes = std::stoi(keys.at("num_nodes"));
    c.attention_hidden = std::stoi(keys.at("attention_hidden"));
    c.attention = keys.at("attention") == "learned" ? AttentionMode::learned : AttentionMode::uniform;
    const auto& mi = keys.at("mask_init");
    c.mask_init = mi == "fixed_disjoint" ? MaskInit::fixed_disjoint
                  : mi == "all_ones"     ? MaskInit::all_ones
                                         : MaskInit::uniform_random;
    c.masks_trainable = keys.at("masks_trainable") == "1";
    c.variant = keys.at("variant");
    c.init_std = std::stod(keys.at("init_std"));
    c.mask_init_range = std::stod(keys.at("mask_init_range"));
  } catch (const std::out_of_range&) {
    throw ParseError(source, line_no, "checkpoint header is missing a config key");
  } catch (const std::invalid_argument&) {
    throw ParseError(source, line_no, "malformed config value in checkpoint header");
  }
  c.validate();

  // Shape template from the config; values are filled from the file.
  Rng unused(0);
  ModelParams params = init_params(c, unused);
  auto views = params.tensors.views();
  for (std::size_t i = 0; i < views.size(); ++i) {
    if (i > 0 && !std::getline(in, line)) throw ParseError(source, line_no, "truncated checkpoint");
    if (i > 0) ++line_no;
    std::istringstream head(line);
    std::string word, name;
    Eigen::Index rows = 0, cols = 0;
    head >> word >> name >> rows >> cols;
    const auto& v = views[i];
    if (word != "tensor" || name != v.name || rows != v.rows || cols != v.cols) {
      throw ParseError(source, line_no, "expected tensor " + v.name + " " + std::to_string(v.rows) +
                                            "x" + std::to_string(v.cols) + ", got '" + line + "'");
    }
    for (Eigen::Index r = 0; r < rows; ++r) {
      if (!std::getline(in, line)) throw ParseError(source, line_no, "truncated tensor " + name);
      ++line_no;
      const char* cursor = line.c_str();
      for (Eigen::Index col = 0; col < cols; ++col) {
        char* end = nullptr;
        const double value = std::strtod(cursor, &end);
        if (end == cursor) throw ParseError(source, line_no, "expected a number in tensor " + name);
        v.data[r * cols + col] = value;
        cursor = end;
      }
    }
  }
  if (!std::getline(in, line) || line != "end") {
    throw ParseError(source, line_no + 1, "missing end marker");
  }
  return params;
}

std::uint64_t tensor_checksum(const ParamSet& params, const std::vector<std::string>& names) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& v : params.views()) {
    if (!names.empty() && std::find(names.begin(), names.end(), v.name) == names.end()) continue;
    const auto* bytes = reinterpret_cast<const unsigned char*>(v.data);
    for (std::size_t i = 0; i < v.values().size() * sizeof(double); ++i) {
      h ^= bytes[i];
      h *= 0x100000001b3ULL;
    }
  }
  return h;
}

// ---------------------------------------------------------------------------
// Gradient checking

double relative_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-6});
  return std::abs(analytic - numeric) / denom;
}

void check_coordinates(GradCheckReport& report, const std::string& label, std::span<double> x,
                       std::span<const double> analytic, const std::function<double()>& loss,
                       double epsilon) {
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double saved = x[i];
    x[i] = saved + epsilon;
    const double up = loss();
    x[i] = saved - epsilon;
    const double down = loss();
    x[i] = saved;
    const double numeric = (up - down) / (2.0 * epsilon);
    const double err = relative_error(analytic[i], numeric);
    ++report.coordinates;
    if (report.worst_coordinate.empty() || !(err <= report.max_rel_error)) {
      report.max_rel_error = std::isfinite(err) ? err : INFINITY;
      report.worst_coordinate = label + "[" + std::to_string(i) + "]";
      report.worst_analytic = analytic[i];
      report.worst_numeric = numeric;
    }
  }
}

}  // namespace mcne
