#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "rlaux/nn/tensor.hpp"

namespace rlaux::data {

/// Labeled samples D = {(x_i, y_i)}; subclass labels are present when a
/// ground-truth auxiliary task exists (planted synthetic data, CIFAR fine labels).
struct Dataset {
  nn::Tensor inputs;  // N × (input shape)
  std::vector<int> primary_labels;
  std::optional<std::vector<int>> subclass_labels;
  int num_primary = 0;
  int hierarchy_factor = 0;  // subclasses per primary class when subclass labels exist
  std::string split;

  std::size_t size() const { return primary_labels.size(); }
  int input_dim() const { return static_cast<int>(inputs.row_size()); }

  /// Checks lengths, label ranges and floor(subclass/ψ) == primary.
  void validate() const;

  /// Rows `indices` of the input matrix, in order.
  nn::MatrixF gather(std::span<const std::size_t> indices) const;
  std::vector<int> gather_labels(std::span<const std::size_t> indices) const;
};

}  // namespace rlaux::data
