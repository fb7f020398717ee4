#pragma once

// Planted-hierarchy Gaussian data. Primary class y owns the anchor
// (separation/√2)·e_y, a vertex of a scaled simplex; subclass j of y sits at
// anchor + spread·separation·e_{C + ψy + j}. Every subclass has its own offset
// axis, so d ≥ C·(1 + ψ) when ψ > 1, and siblings are √2·spread·separation
// apart while clusters of different primaries are at least `separation` apart.

#include <cstdint>
#include <span>
#include <vector>

#include "rlaux/data/dataset.hpp"
#include "rlaux/nn/tensor.hpp"

namespace rlaux::data {

struct SyntheticSpec {
  int num_primary = 4;           // C
  int hierarchy_factor = 3;      // ψ
  int samples_per_subclass = 200;
  int input_dim = 16;            // d
  double separation = 4.0;       // distance between primary anchors
  double stddev = 1.0;           // within-cluster, per coordinate
  double spread = 0.35;          // subclass offset radius as a fraction of separation
  double train_fraction = 0.8;
  std::uint64_t seed = 0;

  std::size_t total() const {
    return static_cast<std::size_t>(num_primary) * static_cast<std::size_t>(hierarchy_factor) *
           static_cast<std::size_t>(samples_per_subclass);
  }
  void validate() const;
};

struct SyntheticData {
  Dataset train;
  Dataset test;
  nn::MatrixD subclass_centers;  // K × d, row k is the center of subclass k
};

/// K × d cluster centers; a pure function of the geometry fields.
nn::MatrixD synthetic_centers(const SyntheticSpec& spec);

/// Deterministic for a given SyntheticSpec; split is stratified per subclass.
SyntheticData generate_synthetic(const SyntheticSpec& spec);

/// Primary prediction of the nearest subclass center (parent class of the winner).
std::vector<int> nearest_centroid_primary(const nn::MatrixF& x, const nn::MatrixD& centers, int hierarchy_factor);

}  // namespace rlaux::data
