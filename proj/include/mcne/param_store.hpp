#pragma once

// Trainable tensors, their initialization, gradient buffers, the Adam
// optimizer and checkpoint files.

#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "mcne/common.hpp"

namespace mcne {

enum class AttentionMode { learned, uniform };
enum class MaskInit { uniform_random, fixed_disjoint, all_ones };

const char* to_string(AttentionMode mode);
const char* to_string(MaskInit init);

/// Shapes and wiring of a model. Mask rows are the categories in order
/// followed by one trailing "other" row.
struct ModelConfig {
  std::vector<int> dims{256, 128, 100};       // d_0 .. d_K
  std::vector<std::string> categories;        // C names
  std::vector<int> num_items;                 // M_c per category
  int num_nodes = 0;
  int attention_hidden = 64;                  // t
  AttentionMode attention = AttentionMode::learned;
  MaskInit mask_init = MaskInit::uniform_random;
  bool masks_trainable = true;
  std::string variant = "full";
  double init_std = 0.01;
  double mask_init_range = 0.5;

  int num_layers() const { return static_cast<int>(dims.size()) - 1; }   // K
  int num_categories() const { return static_cast<int>(categories.size()); }
  int mask_rows() const { return num_categories() + 1; }
  int other_row() const { return num_categories(); }
  int output_dim() const { return dims.back(); }

  /// Throws ConfigError on non-positive sizes or inconsistent lengths.
  void validate() const;
};

enum class TensorKind { embedding, mask, attention, dense, item };

struct TensorView {
  std::string name;
  TensorKind kind;
  double* data;
  Eigen::Index rows;
  Eigen::Index cols;

  std::span<double> values() const { return {data, static_cast<std::size_t>(rows * cols)}; }
};

struct ConstTensorView {
  std::string name;
  TensorKind kind;
  const double* data;
  Eigen::Index rows;
  Eigen::Index cols;

  std::span<const double> values() const {
    return {data, static_cast<std::size_t>(rows * cols)};
  }
};

/// Every trainable tensor of the model. Also used, zero-initialized, as the
/// gradient buffer and the Adam moment accumulators.
struct ParamSet {
  Matrix base;                    // |V| x d_0
  std::vector<Matrix> masks;      // K+1, real-valued, rows x d_k
  std::vector<Matrix> att_w;      // K, t x 2 d_k  ([sender ; receiver] columns)
  std::vector<Vector> att_b;      // K, t
  std::vector<Vector> att_h;      // K, t
  std::vector<Matrix> dense_w;    // K, d_{k+1} x 2 d_k  ([pooled ; self] columns)
  std::vector<Vector> dense_b;    // K, d_{k+1}
  std::vector<Matrix> items;      // C, M_c x d_K

  /// Views in a fixed order: base, masks, per-layer attention and dense, items.
  std::vector<TensorView> views();
  std::vector<ConstTensorView> views() const;

  ParamSet zeros_like() const;
  void set_zero();
  std::size_t size() const;
};

struct ModelParams {
  ModelConfig config;
  ParamSet tensors;
};

/// Names of frozen tensors plus optional per-row filters (used for masks
/// when only some rows train). Anything not listed trains.
struct TrainableSet {
  std::set<std::string> frozen;
  std::map<std::string, std::vector<bool>> row_filter;

  bool tensor_trainable(const std::string& name) const;
  bool row_trainable(const std::string& name, Eigen::Index row) const;
  std::size_t count(const ParamSet& params) const;
};

/// Default trainable set for a configuration: fixed masks and unused
/// attention tensors are frozen.
TrainableSet default_trainable(const ModelConfig& config);

/// Gaussian(0, init_std) weights and embeddings, zero biases, masks per
/// `mask_init` (Uniform(-r, r) for learnable masks).
ModelParams init_params(const ModelConfig& config, Rng& rng);

/// Adds src into dst for the trainable part only; frozen entries of dst are
/// never written.
void accumulate_trainable(ParamSet& dst, const ParamSet& src, const TrainableSet& trainable);

struct AdamHyper {
  double learning_rate = 0.003;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

class AdamOptimizer {
 public:
  AdamOptimizer(const ParamSet& shape, AdamHyper hyper);

  /// One bias-corrected Adam update of the trainable entries, then every
  /// real-mask entry is clamped to [-1, 1]. A non-finite gradient aborts the
  /// step before anything is modified.
  void step(ParamSet& params, const ParamSet& grads, const TrainableSet& trainable);

  std::int64_t steps() const { return steps_; }
  const AdamHyper& hyper() const { return hyper_; }

 private:
  AdamHyper hyper_;
  ParamSet first_;
  ParamSet second_;
  std::int64_t steps_ = 0;
};

void clamp_masks(ParamSet& params);

/// Text bundle: header, config keys, then each tensor as
/// "tensor <name> <rows> <cols>" followed by rows of %.17g values, which
/// reload bit-exactly.
void save_checkpoint(const std::filesystem::path& path, const ModelParams& params);
ModelParams load_checkpoint(const std::filesystem::path& path);

/// FNV-1a over the raw bytes of the named tensors (all tensors when empty).
std::uint64_t tensor_checksum(const ParamSet& params, const std::vector<std::string>& names = {});

// -- finite-difference gradient checking -------------------------------------

struct GradCheckReport {
  std::string op;
  bool passed = true;
  double max_rel_error = 0.0;
  std::string worst_coordinate;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t coordinates = 0;
};

/// Relative error with an absolute floor of 1e-6 in the denominator so
/// coordinates whose true gradient vanishes are compared absolutely.
double relative_error(double analytic, double numeric);

/// Central differences of `loss` over each coordinate of `x`, compared with
/// `analytic`. `x` is restored afterwards.
void check_coordinates(GradCheckReport& report, const std::string& label, std::span<double> x,
                       std::span<const double> analytic, const std::function<double()>& loss,
                       double epsilon);

}  // namespace mcne
