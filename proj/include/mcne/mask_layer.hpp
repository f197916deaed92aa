#pragma once

#include "mcne/common.hpp"

namespace mcne {

/// {0,1} matrix with one row per condition (C behavior categories plus the
/// trailing "other" row). Only constructible by thresholding or by the fixed
/// disjoint layout, so every entry is exactly 0 or 1.
class BinaryMask {
 public:
  BinaryMask() = default;

  Eigen::Index rows() const { return bits_.rows(); }
  Eigen::Index cols() const { return bits_.cols(); }
  const Matrix& matrix() const { return bits_; }
  auto row(Eigen::Index r) const { return bits_.row(r); }
  /// Number of ones in row r.
  Eigen::Index active(Eigen::Index r) const;

  friend BinaryMask binarize(const Matrix& real_mask);
  friend BinaryMask fixed_disjoint_masks(int rows, int dim);

 private:
  explicit BinaryMask(Matrix bits) : bits_(std::move(bits)) {}
  Matrix bits_;
};

/// Hard threshold: 1 where the real entry is >= 0, else 0.
BinaryMask binarize(const Matrix& real_mask);

/// Conditional embedding: elementwise product with a 0/1 mask row.
Vector apply_mask(const Eigen::Ref<const Vector>& embedding,
                  const Eigen::Ref<const RowVector>& mask_row);

/// Straight-through estimator: the gradient recorded for the binary mask is
/// used as the gradient of the real-valued mask.
Matrix straight_through_backward(const Matrix& grad_wrt_binary);

/// Partitions `dim` columns into `rows` contiguous blocks of floor(dim/rows),
/// the remainder going to the last block. Row r is one on block r only.
/// Throws ConfigError when dim < rows.
BinaryMask fixed_disjoint_masks(int rows, int dim);

}  // namespace mcne
