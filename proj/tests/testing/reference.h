#ifndef PACFL_TESTS_TESTING_REFERENCE_H_
#define PACFL_TESTS_TESTING_REFERENCE_H_

// Independent reference computations the library is checked against.
// None of them share code paths with the library's own algorithms.

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "pacfl/model.h"
#include "pacfl/random.h"

namespace pacfl::testing {

// Cyclic Jacobi eigen-decomposition of a symmetric matrix. Eigenvalues are
// returned in descending order with matching eigenvector columns.
struct SymmetricEigen {
  Eigen::VectorXd values;
  Eigen::MatrixXd vectors;
};
SymmetricEigen jacobi_eigen(Eigen::MatrixXd m);

// Top-p left singular basis of d, from the eigenvectors of d * d^T.
Eigen::MatrixXd reference_left_basis(const Eigen::MatrixXd& d, int p);

// Principal angles in degrees by successive grid search over the unit
// sphere of coefficients (p <= 3), refined locally, with deflation.
std::vector<double> grid_principal_angles(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b);

// Agglomerative clustering that recomputes cluster distances from the raw
// matrix at every step. linkage: "single", "complete" or "average".
// Returns cluster ids numbered by smallest member, after applying every
// merge with height <= beta.
std::vector<int> naive_hc(const Eigen::MatrixXd& dist, double beta, const std::string& linkage);
std::vector<double> naive_hc_heights(const Eigen::MatrixXd& dist, const std::string& linkage);

// Components of the graph with an edge wherever dist <= beta.
std::vector<int> threshold_components(const Eigen::MatrixXd& dist, double beta);

double adjusted_rand_index(const std::vector<int>& a, const std::vector<int>& b);

// Central finite-difference gradient of the mean cross-entropy.
Eigen::VectorXd finite_difference_gradient(const ModelParams& params, const Eigen::MatrixXd& x,
                                           const std::vector<int>& labels, double h);

Eigen::MatrixXd random_orthonormal(int rows, int cols, Rng& rng);
Eigen::MatrixXd random_matrix(int rows, int cols, Rng& rng);

// Bhattacharyya distance -ln E_a[sqrt(q_b(x) / q_a(x))] estimated from
// `samples` draws of N(mean_a, cov_a).
double monte_carlo_bhattacharyya(const Eigen::VectorXd& mean_a, const Eigen::MatrixXd& cov_a,
                                 const Eigen::VectorXd& mean_b, const Eigen::MatrixXd& cov_b,
                                 int samples, std::uint64_t seed);
double monte_carlo_kl(const Eigen::VectorXd& mean_a, const Eigen::MatrixXd& cov_a,
                      const Eigen::VectorXd& mean_b, const Eigen::MatrixXd& cov_b, int samples,
                      std::uint64_t seed);

// FNV-1a digest over the relative path and bytes of every regular file
// below `dir`, visited in sorted order.
std::uint64_t fingerprint_tree(const std::string& dir);

}  // namespace pacfl::testing

#endif  // PACFL_TESTS_TESTING_REFERENCE_H_
