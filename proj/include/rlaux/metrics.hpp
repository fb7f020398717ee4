#pragma once

#include <span>
#include <vector>

#include <Eigen/Core>

#include "rlaux/data/dataset.hpp"
#include "rlaux/main_net.hpp"

namespace rlaux {

/// Rows are true classes, columns predicted classes.
using ConfusionMatrix = Eigen::Matrix<long, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

ConfusionMatrix confusion_matrix(std::span<const int> truth, std::span<const int> predicted, int num_classes);

struct ClassificationMetrics {
  double accuracy = 0.0;
  double precision = 0.0;  // macro
  double recall = 0.0;     // macro
  double f1 = 0.0;         // macro, mean of per-class F1
  double mean_loss = 0.0;  // primary cross-entropy
  std::size_t total = 0;
};

/// Macro scores from a confusion matrix. A class with no predictions has
/// precision 0; a class with no samples has recall 0.
ClassificationMetrics macro_scores(const ConfusionMatrix& cm);

/// Primary-head evaluation over a whole dataset; never touches parameters.
ClassificationMetrics evaluate(const DualHeadNet<float>& net, const data::Dataset& dataset, std::size_t batch_size);

}  // namespace rlaux
