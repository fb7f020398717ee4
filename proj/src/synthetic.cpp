#include "rlaux/data/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "rlaux/error.hpp"

namespace rlaux::data {

void SyntheticSpec::validate() const {
  if (num_primary < 2) throw ConfigError("synthetic: need at least 2 primary classes");
  if (hierarchy_factor < 1) throw ConfigError("synthetic: hierarchy_factor must be >= 1");
  if (samples_per_subclass < 2) throw ConfigError("synthetic: need at least 2 samples per subclass");
  if (!(separation > 0.0) || !std::isfinite(separation)) throw ConfigError("synthetic: separation must be positive");
  if (!(stddev >= 0.0) || !std::isfinite(stddev)) throw ConfigError("synthetic: stddev must be non-negative");
  if (!(spread >= 0.0 && spread < 0.5)) throw ConfigError("synthetic: spread must lie in [0, 0.5)");
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) throw ConfigError("synthetic: train_fraction must lie in (0, 1)");
  const int needed = hierarchy_factor > 1 ? num_primary * (1 + hierarchy_factor) : num_primary;
  if (input_dim < needed) {
    throw ConfigError("synthetic: input_dim " + std::to_string(input_dim) + " too small, need at least " +
                      std::to_string(needed));
  }
  const int per_split = static_cast<int>(std::lround(train_fraction * samples_per_subclass));
  if (per_split < 1 || per_split >= samples_per_subclass) {
    throw ConfigError("synthetic: train_fraction leaves an empty split");
  }
}

nn::MatrixD synthetic_centers(const SyntheticSpec& spec) {
  spec.validate();
  const int c = spec.num_primary, psi = spec.hierarchy_factor;
  const double anchor_scale = spec.separation / std::sqrt(2.0);
  const double radius = spec.spread * spec.separation;
  nn::MatrixD centers = nn::MatrixD::Zero(c * psi, spec.input_dim);
  for (int y = 0; y < c; ++y) {
    for (int j = 0; j < psi; ++j) {
      auto row = centers.row(y * psi + j);
      row(y) = anchor_scale;
      if (psi > 1) row(c + y * psi + j) = radius;
    }
  }
  return centers;
}

SyntheticData generate_synthetic(const SyntheticSpec& spec) {
  const nn::MatrixD centers = synthetic_centers(spec);
  const int c = spec.num_primary, psi = spec.hierarchy_factor, d = spec.input_dim;
  const int n_train_per = static_cast<int>(std::lround(spec.train_fraction * spec.samples_per_subclass));
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> noise(0.0, 1.0);

  struct Sample {
    std::vector<float> x;
    int sub;
  };
  std::vector<Sample> train, test;
  for (int k = 0; k < c * psi; ++k) {
    std::vector<Sample> cluster(static_cast<std::size_t>(spec.samples_per_subclass));
    for (auto& s : cluster) {
      s.sub = k;
      s.x.resize(static_cast<std::size_t>(d));
      for (int i = 0; i < d; ++i) {
        s.x[static_cast<std::size_t>(i)] = static_cast<float>(centers(k, i) + spec.stddev * noise(rng));
      }
    }
    std::shuffle(cluster.begin(), cluster.end(), rng);
    train.insert(train.end(), cluster.begin(), cluster.begin() + n_train_per);
    test.insert(test.end(), cluster.begin() + n_train_per, cluster.end());
  }

  auto build = [&](std::vector<Sample>& samples, const char* split) {
    std::shuffle(samples.begin(), samples.end(), rng);
    Dataset ds;
    std::vector<float> flat;
    flat.reserve(samples.size() * static_cast<std::size_t>(d));
    std::vector<int> primary, sub;
    for (const auto& s : samples) {
      flat.insert(flat.end(), s.x.begin(), s.x.end());
      primary.push_back(s.sub / psi);
      sub.push_back(s.sub);
    }
    ds.inputs = nn::Tensor({samples.size(), static_cast<std::size_t>(d)}, std::move(flat));
    ds.primary_labels = std::move(primary);
    ds.subclass_labels = std::move(sub);
    ds.num_primary = c;
    ds.hierarchy_factor = psi;
    ds.split = split;
    ds.validate();
    return ds;
  };
  SyntheticData out;
  out.train = build(train, "train");
  out.test = build(test, "test");
  out.subclass_centers = centers;
  return out;
}

std::vector<int> nearest_centroid_primary(const nn::MatrixF& x, const nn::MatrixD& centers, int hierarchy_factor) {
  if (x.cols() != centers.cols()) throw DimensionError("nearest_centroid: feature width mismatch");
  if (hierarchy_factor < 1) throw ConfigError("nearest_centroid: hierarchy_factor must be >= 1");
  std::vector<int> out;
  out.reserve(static_cast<std::size_t>(x.rows()));
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    Eigen::Index best = 0;
    (centers.rowwise() - x.row(i).cast<double>()).rowwise().squaredNorm().minCoeff(&best);
    out.push_back(static_cast<int>(best) / hierarchy_factor);
  }
  return out;
}

}  // namespace rlaux::data
