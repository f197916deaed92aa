#include "mcne/mask_layer.hpp"

#include <string>

namespace mcne {

Eigen::Index BinaryMask::active(Eigen::Index r) const {
  return static_cast<Eigen::Index>(bits_.row(r).sum());
}

BinaryMask binarize(const Matrix& real_mask) {
  return BinaryMask((real_mask.array() >= 0.0).cast<double>().matrix());
}

Vector apply_mask(const Eigen::Ref<const Vector>& embedding,
                  const Eigen::Ref<const RowVector>& mask_row) {
  if (embedding.size() != mask_row.size()) {
    throw ConfigError("apply_mask: embedding has " + std::to_string(embedding.size()) +
                      " entries but the mask row has " + std::to_string(mask_row.size()));
  }
  return embedding.cwiseProduct(mask_row.transpose());
}

Matrix straight_through_backward(const Matrix& grad_wrt_binary) { return grad_wrt_binary; }

BinaryMask fixed_disjoint_masks(int rows, int dim) {
  if (rows <= 0 || dim < rows) {
    throw ConfigError("fixed disjoint masks need dim >= rows (dim=" + std::to_string(dim) +
                      ", rows=" + std::to_string(rows) + ")");
  }
  Matrix bits = Matrix::Zero(rows, dim);
  const int block = dim / rows;
  for (int r = 0; r < rows; ++r) {
    const int begin = r * block;
    const int end = (r == rows - 1) ? dim : begin + block;
    bits.row(r).segment(begin, end - begin).setOnes();
  }
  return BinaryMask(std::move(bits));
}

}  // namespace mcne
