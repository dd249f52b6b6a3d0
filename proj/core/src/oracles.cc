#include "pacfl/oracles.h"

#include <algorithm>
#include <cmath>
#include <limits>

#include "pacfl/errors.h"
#include "pacfl/random.h"

namespace pacfl {
namespace {

Eigen::LLT<Eigen::MatrixXd> cholesky(const Eigen::MatrixXd& s, const char* what) {
  Eigen::LLT<Eigen::MatrixXd> llt(s);
  if (llt.info() != Eigen::Success) {
    throw NumericalError(std::string(what) + " is not positive definite");
  }
  return llt;
}

double log_det(const Eigen::LLT<Eigen::MatrixXd>& llt) {
  return 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
}

void check_pair(const GaussianSpec& a, const GaussianSpec& b) {
  a.validate();
  b.validate();
  if (a.mean.size() != b.mean.size()) {
    throw DimensionError("Gaussians have dimensions " + std::to_string(a.mean.size()) + " and " +
                         std::to_string(b.mean.size()));
  }
}

double kernel_sum(const Matrix& u, const Matrix& v, double inv_two_bw2, bool skip_diagonal) {
  double s = 0.0;
  for (Eigen::Index i = 0; i < u.cols(); ++i) {
    for (Eigen::Index j = 0; j < v.cols(); ++j) {
      if (skip_diagonal && i == j) continue;
      s += std::exp(-(u.col(i) - v.col(j)).squaredNorm() * inv_two_bw2);
    }
  }
  return s;
}

bool strictly_increasing(const std::array<double, 4>& v, int lo, int hi) { return v[lo] < v[hi]; }

}  // namespace

void GaussianSpec::validate() const {
  const auto d = mean.size();
  if (d == 0 || covariance.rows() != d || covariance.cols() != d) {
    throw DimensionError("Gaussian needs a nonempty mean and a matching square covariance");
  }
  if (!mean.allFinite() || !covariance.allFinite()) throw NumericalError("Gaussian has non-finite entries");
  if ((covariance - covariance.transpose()).cwiseAbs().maxCoeff() > 1e-10) {
    throw NumericalError("covariance is not symmetric");
  }
  cholesky(covariance, "covariance");
}

double bhattacharyya_gaussian(const GaussianSpec& a, const GaussianSpec& b) {
  check_pair(a, b);
  const Eigen::MatrixXd avg = 0.5 * (a.covariance + b.covariance);
  const auto llt = cholesky(avg, "average covariance");
  const Eigen::VectorXd delta = b.mean - a.mean;
  const double quad = delta.dot(llt.solve(delta));
  const double ld = log_det(llt) -
                    0.5 * (log_det(cholesky(a.covariance, "covariance")) +
                           log_det(cholesky(b.covariance, "covariance")));
  return std::max(0.0, quad / 8.0 + 0.5 * ld);
}

double kl_gaussian(const GaussianSpec& a, const GaussianSpec& b) {
  check_pair(a, b);
  const auto lb = cholesky(b.covariance, "covariance");
  const Eigen::VectorXd delta = b.mean - a.mean;
  const double trace = lb.solve(a.covariance).trace();
  const double quad = delta.dot(lb.solve(delta));
  const double ld = log_det(lb) - log_det(cholesky(a.covariance, "covariance"));
  return std::max(0.0, 0.5 * (trace + quad - static_cast<double>(a.mean.size()) + ld));
}

double mmd_rbf(const DataMatrix& x, const DataMatrix& y, double bandwidth) {
  if (x.feature_dim() != y.feature_dim()) throw DimensionError("MMD samples differ in feature dimension");
  if (x.sample_count() < 2 || y.sample_count() < 2) throw DimensionError("MMD needs at least two samples per set");
  if (!(bandwidth > 0.0) || !std::isfinite(bandwidth)) throw InvalidData("bandwidth must be positive");
  const double g = 1.0 / (2.0 * bandwidth * bandwidth);
  const auto n = static_cast<double>(x.sample_count());
  const auto m = static_cast<double>(y.sample_count());
  const double kxx = kernel_sum(x.values(), x.values(), g, true) / (n * (n - 1.0));
  const double kyy = kernel_sum(y.values(), y.values(), g, true) / (m * (m - 1.0));
  const double kxy = kernel_sum(x.values(), y.values(), g, false) / (n * m);
  return kxx + kyy - 2.0 * kxy;
}

double median_heuristic_bandwidth(const DataMatrix& x, const DataMatrix& y) {
  if (x.feature_dim() != y.feature_dim()) throw DimensionError("samples differ in feature dimension");
  Matrix pooled(x.feature_dim(), x.sample_count() + y.sample_count());
  pooled << x.values(), y.values();
  std::vector<double> dist;
  for (Eigen::Index i = 0; i < pooled.cols(); ++i) {
    for (Eigen::Index j = i + 1; j < pooled.cols(); ++j) dist.push_back((pooled.col(i) - pooled.col(j)).norm());
  }
  const auto mid = dist.begin() + static_cast<std::ptrdiff_t>(dist.size() / 2);
  std::nth_element(dist.begin(), mid, dist.end());
  if (!(*mid > 0.0)) throw InvalidData("median pairwise distance is zero");
  return *mid;
}

GradientDiversity gradient_diversity(const ModelParams& params, std::span<const ClientShard> shards) {
  if (shards.empty()) throw InvalidData("gradient diversity needs at least one shard");
  Eigen::VectorXd total = Eigen::VectorXd::Zero(params.theta.size());
  Eigen::VectorXd g;
  double squares = 0.0;
  for (const auto& s : shards) {
    loss_and_gradient(params, s.train.features, s.train.labels, &g);
    squares += g.squaredNorm();
    total += g;
  }
  const double denom = static_cast<double>(shards.size()) * total.squaredNorm();
  // A vanishing sum relative to its parts means the ratio is meaningless.
  if (denom <= 1e-24 * squares || denom == 0.0) {
    return {std::numeric_limits<double>::infinity(), true};
  }
  return {squares / denom, false};
}

int ConsistencyReport::mean_shift_consistent() const {
  return static_cast<int>(std::count_if(per_seed.begin(), per_seed.end(), [](const auto& s) {
    return strictly_increasing(s.min_angle, kVariantMean2, kVariantMean3) &&
           strictly_increasing(s.angle_trace_sum, kVariantMean2, kVariantMean3);
  }));
}

int ConsistencyReport::cov_scale_consistent() const {
  return static_cast<int>(std::count_if(per_seed.begin(), per_seed.end(), [](const auto& s) {
    return strictly_increasing(s.min_angle, kVariantCov2, kVariantCov5) &&
           strictly_increasing(s.angle_trace_sum, kVariantCov2, kVariantCov5);
  }));
}

bool ConsistencyReport::closed_forms_ordered() const {
  return std::all_of(per_seed.begin(), per_seed.end(), [](const auto& s) {
    return strictly_increasing(s.bhattacharyya, kVariantMean2, kVariantMean3) &&
           strictly_increasing(s.bhattacharyya, kVariantCov2, kVariantCov5) &&
           strictly_increasing(s.kl, kVariantMean2, kVariantMean3) &&
           strictly_increasing(s.kl, kVariantCov2, kVariantCov5);
  });
}

ConsistencyReport run_consistency(const ConsistencyConfig& cfg) {
  if (cfg.dim < 1 || cfg.samples < 2 || cfg.p < 1 || cfg.seeds < 1) {
    throw ConfigError("consistency: dim, samples, p and seeds must be positive");
  }
  const Eigen::Index d = cfg.dim;
  const Eigen::Index n = cfg.samples;
  ConsistencyReport report;
  for (int s = 0; s < cfg.seeds; ++s) {
    const std::uint64_t seed = stream_seed(cfg.seed, fnv1a("consistency"), static_cast<std::uint64_t>(s));
    Rng rng = make_rng(seed);
    std::normal_distribution<double> normal;
    auto draw = [&](Eigen::Index rows, Eigen::Index cols) {
      Eigen::MatrixXd m(rows, cols);
      for (Eigen::Index j = 0; j < cols; ++j) {
        for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = normal(rng);
      }
      return m;
    };
    const Eigen::VectorXd mu = draw(d, 1).col(0);
    const Eigen::MatrixXd a = draw(d, d);
    const Eigen::MatrixXd sigma =
        a * a.transpose() / static_cast<double>(d) + 0.1 * Eigen::MatrixXd::Identity(d, d);
    const Eigen::MatrixXd chol = cholesky(sigma, "consistency covariance").matrixL();
    const Eigen::MatrixXd base_noise = chol * draw(d, n);
    const Eigen::MatrixXd shared_noise = chol * draw(d, n);

    const GaussianSpec base{mu, sigma};
    const std::array<GaussianSpec, 4> variants{GaussianSpec{2.0 * mu, sigma},
                                                GaussianSpec{3.0 * mu, sigma},
                                                GaussianSpec{mu, 2.0 * sigma},
                                                GaussianSpec{mu, 5.0 * sigma}};
    const std::array<double, 4> noise_scale{1.0, 1.0, std::sqrt(2.0), std::sqrt(5.0)};

    const auto base_sig =
        make_signature(DataMatrix(base_noise.colwise() + mu), cfg.p, cfg.normalize, "base");
    ConsistencySeed row;
    row.seed = seed;
    for (int v = 0; v < 4; ++v) {
      const Eigen::MatrixXd sample = (noise_scale[v] * shared_noise).colwise() + variants[v].mean;
      const auto sig = make_signature(DataMatrix(sample), cfg.p, cfg.normalize, "variant");
      row.min_angle[v] = proximity_entry(base_sig, sig, MetricKind::kMinAngle);
      row.angle_trace_sum[v] = proximity_entry(base_sig, sig, MetricKind::kAngleTraceSum);
      row.bhattacharyya[v] = bhattacharyya_gaussian(base, variants[v]);
      row.kl[v] = kl_gaussian(base, variants[v]);
    }
    report.per_seed.push_back(row);
  }
  return report;
}

}  // namespace pacfl
