#ifndef PACFL_SUBSPACE_H_
#define PACFL_SUBSPACE_H_

#include <Eigen/Dense>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace pacfl {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// A client's data laid out feature-major: one column per sample.
class DataMatrix {
 public:
  // Throws DimensionError for an empty matrix and InvalidData when any
  // entry is NaN or infinite.
  explicit DataMatrix(Matrix values);

  const Matrix& values() const { return values_; }
  Eigen::Index feature_dim() const { return values_.rows(); }
  Eigen::Index sample_count() const { return values_.cols(); }

 private:
  Matrix values_;
};

enum class Normalization { kNone, kUnitSampleNorm, kScaleTo01 };

enum class MetricKind {
  kMinAngle,       // smallest principal angle
  kAngleTraceSum,  // sum of angles between same-rank singular vectors
};

struct TruncatedSvd {
  Matrix basis;            // feature_dim x p, orthonormal columns
  Vector singular_values;  // p, nonincreasing
};

// Top-p left singular vectors and values of `d`. Each basis column is
// sign-normalized so that its largest-magnitude entry is positive.
//
// Throws DimensionError when p is outside [1, min(feature_dim, samples)]
// or when the data has numerical rank below p.
TruncatedSvd truncated_svd(const DataMatrix& d, int p);

struct SubspaceSignature {
  std::string client_id;
  Matrix basis;
  Vector singular_values;

  int p() const { return static_cast<int>(basis.cols()); }
  Eigen::Index feature_dim() const { return basis.rows(); }
};

// Applies the per-sample preprocessing and wraps truncated_svd.
SubspaceSignature make_signature(const DataMatrix& d, int p,
                                 Normalization normalize,
                                 std::string client_id = {});

// Principal angles between span(a.basis) and span(b.basis), in degrees,
// nondecreasing, of length min(p_a, p_b).
Vector principal_angles(const SubspaceSignature& a,
                        const SubspaceSignature& b);

// One proximity-matrix entry in degrees. kAngleTraceSum requires p_a == p_b.
double proximity_entry(const SubspaceSignature& a, const SubspaceSignature& b,
                       MetricKind kind);

struct ProximityMatrix {
  Matrix entries;  // K x K, degrees
  MetricKind metric_kind = MetricKind::kMinAngle;
  std::vector<std::string> client_ids;

  Eigen::Index size() const { return entries.rows(); }
};

// Pairwise proximities over `signatures`. `threads` > 1 splits the rows
// across worker threads; the result is identical to the sequential one.
ProximityMatrix build_proximity_matrix(
    std::span<const SubspaceSignature> signatures, MetricKind kind,
    int threads = 1);

std::string to_string(MetricKind kind);
MetricKind parse_metric_kind(const std::string& s);
std::string to_string(Normalization n);
Normalization parse_normalization(const std::string& s);

// Binary signature record: "PACS", u16 version, u32 feature_dim, u32 p,
// then little-endian f64 basis (column-major) and singular values.
void write_signature(std::ostream& out, const SubspaceSignature& sig);
SubspaceSignature read_signature(std::istream& in, std::string client_id = {});
void save_signature(const std::filesystem::path& path,
                    const SubspaceSignature& sig);
SubspaceSignature load_signature(const std::filesystem::path& path);

// CSV with a header row "client_id,<id_0>,...,<id_K-1>" and one row per
// client, values printed with round-trip precision.
void write_proximity_csv(std::ostream& out, const ProximityMatrix& m);
ProximityMatrix read_proximity_csv(std::istream& in, MetricKind kind);

}  // namespace pacfl

#endif  // PACFL_SUBSPACE_H_
