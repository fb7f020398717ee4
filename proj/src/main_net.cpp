#include "rlaux/main_net.hpp"

#include <cmath>
#include <sstream>

namespace rlaux {

void MainNetConfig::validate() const {
  if (input_dim <= 0) throw ConfigError("main net: input_dim must be positive");
  if (feature_dim <= 0 || head_hidden <= 0) throw ConfigError("main net: layer widths must be positive");
  for (int h : extractor_hidden) {
    if (h <= 0) throw ConfigError("main net: extractor widths must be positive");
  }
  hierarchy.validate();
}

std::string MainNetConfig::describe() const {
  std::ostringstream os;
  os << "dual_head input=" << input_dim << " extractor=";
  for (std::size_t i = 0; i < extractor_hidden.size(); ++i) os << (i ? "," : "") << extractor_hidden[i];
  os << " feature=" << feature_dim << " head=" << head_hidden << " C=" << hierarchy.num_primary
     << " psi=" << hierarchy.hierarchy_factor << " bias=" << (use_bias ? 1 : 0);
  return os.str();
}

double train_batch(DualHeadNet<float>& net, nn::Sgd<float>& opt, const nn::MatrixF& x, std::span<const int> primary,
                   const std::optional<AuxTargets>& aux, int epoch, double focal_gamma) {
  if (aux) {
    for (std::size_t i = 0; i < primary.size() && i < aux->labels.size(); ++i) {
      if (!net.hierarchy().in_block(primary[i], aux->labels[i])) {
        throw LabelError("train batch: auxiliary label " + std::to_string(aux->labels[i]) +
                         " lies outside the block of primary label " + std::to_string(primary[i]));
      }
    }
  }
  auto params = net.parameters();
  nn::zero_grad<float>(params);
  nn::Tape<float> tape;
  nn::Var<float> loss = weighted_total_loss(tape, net, x, primary, aux, focal_gamma);
  const double value = static_cast<double>(loss.value()(0, 0));
  if (!std::isfinite(value)) throw DomainError("train batch: loss is not finite");
  tape.backward(loss);
  opt.step(params, epoch);
  return value;
}

std::vector<double> primary_losses(const DualHeadNet<float>& net, const nn::MatrixF& x, std::span<const int> y) {
  return cross_entropy_rows(net.forward_primary(x), y);
}

std::vector<double> cross_entropy_rows(const nn::MatrixF& z, std::span<const int> y) {
  if (static_cast<Eigen::Index>(y.size()) != z.rows()) throw DimensionError("primary_losses: label count mismatch");
  std::vector<double> out(y.size());
  for (Eigen::Index r = 0; r < z.rows(); ++r) {
    const int t = y[static_cast<std::size_t>(r)];
    if (t < 0 || t >= z.cols()) throw LabelError("primary_losses: label out of range");
    const Eigen::RowVectorXd row = z.row(r).cast<double>();
    const double m = row.maxCoeff();
    out[static_cast<std::size_t>(r)] = m + std::log((row.array() - m).exp().sum()) - row(t);
  }
  return out;
}

Snapshot snapshot(const DualHeadNet<float>& net, int epoch) {
  auto params = net.parameters();
  return snapshot_parameters(params, epoch);
}

void restore(DualHeadNet<float>& net, const Snapshot& snap) {
  auto params = net.parameters();
  restore_parameters(params, snap);
}

std::uint64_t parameter_hash(const DualHeadNet<float>& net) { return parameter_hash(snapshot(net)); }

}  // namespace rlaux
