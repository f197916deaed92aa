#include "mcne/export.hpp"

#include <cstdio>
#include <fstream>

#include "mcne/mask_layer.hpp"

namespace mcne {

std::vector<std::filesystem::path> export_embeddings(const std::filesystem::path& dir,
                                                     const ModelParams& params, const SocialGraph& graph,
                                                     const InferenceOptions& inference) {
  std::filesystem::create_directories(dir);
  const Matrix final_rows = infer_embeddings(params, graph, inference);
  const std::vector<Matrix> cond = conditional_embed(final_rows, binarize(params.tensors.masks.back()));
  std::vector<std::filesystem::path> written;
  char buf[32];
  for (int c = 0; c < params.config.num_categories(); ++c) {
    const auto path = dir / ("embeddings_" + params.config.categories[c] + ".tsv");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    for (Eigen::Index v = 0; v < cond[c].rows(); ++v) {
      out << graph.original_id(static_cast<NodeId>(v));
      for (Eigen::Index j = 0; j < cond[c].cols(); ++j) {
        std::snprintf(buf, sizeof buf, "\t%.9g", cond[c](v, j));
        out << buf;
      }
      out << '\n';
    }
    written.push_back(path);
  }
  return written;
}

std::vector<std::filesystem::path> export_masks(const std::filesystem::path& dir, const ModelParams& params) {
  std::filesystem::create_directories(dir);
  std::vector<std::filesystem::path> written;
  const auto& names = params.config.categories;
  for (std::size_t k = 0; k < params.tensors.masks.size(); ++k) {
    const BinaryMask mask = binarize(params.tensors.masks[k]);
    const auto path = dir / ("masks_layer" + std::to_string(k) + ".csv");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    out << "category,active";
    for (int j = 0; j < mask.cols(); ++j) out << ",d" << j;
    out << '\n';
    for (int r = 0; r < mask.rows(); ++r) {
      const std::string name = r < static_cast<int>(names.size()) ? names[r] : "other";
      const auto active = mask.active(r);
      if (active == 0 && r < static_cast<int>(names.size())) {
        warn("mask layer " + std::to_string(k) + ": category '" + name + "' has no active dimension");
      }
      out << name << ',' << active;
      for (int j = 0; j < mask.cols(); ++j) out << ',' << static_cast<int>(mask.matrix()(r, j));
      out << '\n';
    }
    written.push_back(path);
  }
  return written;
}

}  // namespace mcne
