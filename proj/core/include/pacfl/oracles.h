#ifndef PACFL_ORACLES_H_
#define PACFL_ORACLES_H_

#include <Eigen/Dense>
#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "pacfl/model.h"
#include "pacfl/partition.h"
#include "pacfl/subspace.h"

namespace pacfl {

struct GaussianSpec {
  Eigen::VectorXd mean;
  Eigen::MatrixXd covariance;

  // Symmetry within 1e-10 and positive definiteness; throws NumericalError.
  void validate() const;
};

double bhattacharyya_gaussian(const GaussianSpec& a, const GaussianSpec& b);
double kl_gaussian(const GaussianSpec& a, const GaussianSpec& b);

// Unbiased U-statistic estimate of squared MMD with the kernel
// exp(-|u - v|^2 / (2 bandwidth^2)). Samples are the columns.
double mmd_rbf(const DataMatrix& x, const DataMatrix& y, double bandwidth);

// Median pairwise distance over the pooled samples of x and y.
double median_heuristic_bandwidth(const DataMatrix& x, const DataMatrix& y);

struct GradientDiversity {
  double value = 0.0;
  bool undefined = false;  // summed gradient vanishes; value is +inf
};

// sum_k |grad F_k|^2 / (|C| |sum_k grad F_k|^2) with full-batch gradients
// on each shard's training split.
GradientDiversity gradient_diversity(const ModelParams& params,
                                     std::span<const ClientShard> shards);

// Ordering check on N(mu, S) against N(2mu, S), N(3mu, S), N(mu, 2S) and
// N(mu, 5S). Per seed, mu ~ N(0, I) and S = A A^T / d + 0.1 I with A
// standard normal. Every variant reuses one noise draw so that only the
// distribution parameters differ between the compared pairs.
struct ConsistencyConfig {
  int dim = 20;
  int samples = 100;
  int p = 3;
  int seeds = 10;
  std::uint64_t seed = 0;
  Normalization normalize = Normalization::kNone;
};

// Distances from the base distribution, indexed by kVariant*.
struct ConsistencySeed {
  std::uint64_t seed = 0;
  std::array<double, 4> min_angle{};
  std::array<double, 4> angle_trace_sum{};
  std::array<double, 4> bhattacharyya{};
  std::array<double, 4> kl{};
};

inline constexpr int kVariantMean2 = 0;
inline constexpr int kVariantMean3 = 1;
inline constexpr int kVariantCov2 = 2;
inline constexpr int kVariantCov5 = 3;

struct ConsistencyReport {
  std::vector<ConsistencySeed> per_seed;

  // Seeds where both angle metrics increase strictly along the pair.
  int mean_shift_consistent() const;
  int cov_scale_consistent() const;
  // Closed-form orderings, which hold for every seed by construction.
  bool closed_forms_ordered() const;
};

ConsistencyReport run_consistency(const ConsistencyConfig& cfg);

}  // namespace pacfl

#endif  // PACFL_ORACLES_H_
