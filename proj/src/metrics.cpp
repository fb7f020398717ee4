#include "rlaux/metrics.hpp"

#include <algorithm>
#include <numeric>

namespace rlaux {

ConfusionMatrix confusion_matrix(std::span<const int> truth, std::span<const int> predicted, int num_classes) {
  if (truth.size() != predicted.size()) throw DimensionError("confusion_matrix: length mismatch");
  if (num_classes <= 0) throw DimensionError("confusion_matrix: num_classes must be positive");
  ConfusionMatrix cm = ConfusionMatrix::Zero(num_classes, num_classes);
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i] < 0 || truth[i] >= num_classes || predicted[i] < 0 || predicted[i] >= num_classes) {
      throw LabelError("confusion_matrix: label out of range");
    }
    ++cm(truth[i], predicted[i]);
  }
  return cm;
}

ClassificationMetrics macro_scores(const ConfusionMatrix& cm) {
  ClassificationMetrics m;
  const Eigen::Index c = cm.rows();
  const long total = cm.sum();
  m.total = static_cast<std::size_t>(total);
  m.accuracy = total > 0 ? static_cast<double>(cm.diagonal().sum()) / static_cast<double>(total) : 0.0;
  double p_sum = 0.0, r_sum = 0.0, f_sum = 0.0;
  for (Eigen::Index k = 0; k < c; ++k) {
    const double tp = static_cast<double>(cm(k, k));
    const double predicted = static_cast<double>(cm.col(k).sum());
    const double actual = static_cast<double>(cm.row(k).sum());
    const double p = predicted > 0 ? tp / predicted : 0.0;
    const double r = actual > 0 ? tp / actual : 0.0;
    p_sum += p;
    r_sum += r;
    f_sum += (p + r) > 0 ? 2.0 * p * r / (p + r) : 0.0;
  }
  m.precision = p_sum / static_cast<double>(c);
  m.recall = r_sum / static_cast<double>(c);
  m.f1 = f_sum / static_cast<double>(c);
  return m;
}

ClassificationMetrics evaluate(const DualHeadNet<float>& net, const data::Dataset& dataset, std::size_t batch_size) {
  if (dataset.size() == 0) throw ConfigError("evaluate: empty dataset");
  if (batch_size == 0) throw ConfigError("evaluate: batch size must be positive");
  const int c = net.hierarchy().num_primary;
  std::vector<int> predicted;
  predicted.reserve(dataset.size());
  double loss_sum = 0.0;
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < dataset.size(); start += batch_size) {
    const std::size_t end = std::min(dataset.size(), start + batch_size);
    idx.resize(end - start);
    std::iota(idx.begin(), idx.end(), start);
    const nn::MatrixF x = dataset.gather(idx);
    const std::vector<int> y = dataset.gather_labels(idx);
    const nn::MatrixF z = net.forward_primary(x);
    for (Eigen::Index r = 0; r < z.rows(); ++r) {
      Eigen::Index arg = 0;
      z.row(r).maxCoeff(&arg);
      predicted.push_back(static_cast<int>(arg));
    }
    for (double l : cross_entropy_rows(z, y)) loss_sum += l;
  }
  ClassificationMetrics m = macro_scores(confusion_matrix(dataset.primary_labels, predicted, c));
  m.mean_loss = loss_sum / static_cast<double>(dataset.size());
  return m;
}

}  // namespace rlaux
