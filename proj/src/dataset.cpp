#include "rlaux/data/dataset.hpp"

#include "rlaux/error.hpp"

namespace rlaux::data {

void Dataset::validate() const {
  const std::size_t n = primary_labels.size();
  if (n == 0) throw ConfigError("dataset '" + split + "' is empty");
  if (inputs.rows() != n) {
    throw DimensionError("dataset '" + split + "': " + std::to_string(inputs.rows()) + " inputs but " +
                         std::to_string(n) + " labels");
  }
  if (num_primary <= 0) throw ConfigError("dataset '" + split + "': num_primary must be positive");
  for (int y : primary_labels) {
    if (y < 0 || y >= num_primary) throw LabelError("dataset '" + split + "': primary label out of range");
  }
  if (subclass_labels) {
    if (subclass_labels->size() != n) throw DimensionError("dataset '" + split + "': subclass label count mismatch");
    if (hierarchy_factor <= 0) throw ConfigError("dataset '" + split + "': subclass labels need hierarchy_factor");
    for (std::size_t i = 0; i < n; ++i) {
      const int s = (*subclass_labels)[i];
      if (s < 0 || s >= num_primary * hierarchy_factor || s / hierarchy_factor != primary_labels[i]) {
        throw LabelError("dataset '" + split + "': subclass " + std::to_string(s) + " of sample " +
                         std::to_string(i) + " is inconsistent with primary label " +
                         std::to_string(primary_labels[i]));
      }
    }
  }
}

nn::MatrixF Dataset::gather(std::span<const std::size_t> indices) const {
  const auto all = inputs.matrix();
  nn::MatrixF out(static_cast<Eigen::Index>(indices.size()), all.cols());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= size()) throw DimensionError("dataset gather: index out of range");
    out.row(static_cast<Eigen::Index>(i)) = all.row(static_cast<Eigen::Index>(indices[i]));
  }
  return out;
}

std::vector<int> Dataset::gather_labels(std::span<const std::size_t> indices) const {
  std::vector<int> out;
  out.reserve(indices.size());
  for (std::size_t i : indices) out.push_back(primary_labels.at(i));
  return out;
}

}  // namespace rlaux::data
