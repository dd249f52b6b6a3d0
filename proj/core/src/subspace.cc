#include "pacfl/subspace.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include "io_util.h"
#include "pacfl/errors.h"
#include "pacfl/parallel.h"

namespace pacfl {
namespace {

constexpr std::uint16_t kSignatureVersion = 1;
constexpr double kRadToDeg = 180.0 / std::numbers::pi;

void sign_normalize(Matrix& basis) {
  for (Eigen::Index c = 0; c < basis.cols(); ++c) {
    Eigen::Index arg = 0;
    double best = -1.0;
    for (Eigen::Index r = 0; r < basis.rows(); ++r) {
      const double v = std::abs(basis(r, c));
      if (v > best) {
        best = v;
        arg = r;
      }
    }
    if (basis(arg, c) < 0.0) basis.col(c) *= -1.0;
  }
}

// Singular values of `m`, sorted nonincreasing.
Vector singular_values_of(const Matrix& m) {
  Eigen::JacobiSVD<Matrix> svd(m);
  return svd.singularValues();
}

void check_same_dim(const SubspaceSignature& a, const SubspaceSignature& b) {
  if (a.feature_dim() != b.feature_dim()) {
    throw DimensionError("signature feature_dim mismatch: " +
                         std::to_string(a.feature_dim()) + " vs " +
                         std::to_string(b.feature_dim()));
  }
  if (a.p() < 1 || b.p() < 1) {
    throw DimensionError("signature with an empty basis");
  }
}

bool identical_bases(const SubspaceSignature& a, const SubspaceSignature& b) {
  return a.basis.rows() == b.basis.rows() && a.basis.cols() == b.basis.cols() &&
         a.basis == b.basis;
}

}  // namespace

DataMatrix::DataMatrix(Matrix values) : values_(std::move(values)) {
  if (values_.rows() < 1 || values_.cols() < 1) {
    throw DimensionError("data matrix must have at least one feature and one sample");
  }
  if (!values_.allFinite()) {
    throw InvalidData("data matrix contains NaN or infinite entries");
  }
}

TruncatedSvd truncated_svd(const DataMatrix& d, int p) {
  const auto max_p = std::min(d.feature_dim(), d.sample_count());
  if (p < 1 || p > max_p) {
    throw DimensionError("p=" + std::to_string(p) + " outside [1, " +
                         std::to_string(max_p) + "]");
  }
  Eigen::BDCSVD<Matrix> svd(d.values(), Eigen::ComputeThinU);
  const Vector& sv = svd.singularValues();
  const double tol = static_cast<double>(std::max(d.feature_dim(), d.sample_count())) *
                     std::numeric_limits<double>::epsilon() * sv(0);
  if (sv(0) == 0.0 || sv(p - 1) <= tol) {
    throw DimensionError("data has numerical rank below p=" + std::to_string(p));
  }
  TruncatedSvd out;
  out.basis = svd.matrixU().leftCols(p);
  out.singular_values = sv.head(p);
  sign_normalize(out.basis);
  return out;
}

SubspaceSignature make_signature(const DataMatrix& d, int p,
                                 Normalization normalize,
                                 std::string client_id) {
  Matrix values = d.values();
  switch (normalize) {
    case Normalization::kNone:
      break;
    case Normalization::kUnitSampleNorm:
      for (Eigen::Index c = 0; c < values.cols(); ++c) {
        const double n = values.col(c).norm();
        if (n > 0.0) values.col(c) /= n;
      }
      break;
    case Normalization::kScaleTo01: {
      const double m = values.cwiseAbs().maxCoeff();
      if (m > 0.0) values /= m;
      break;
    }
  }
  auto svd = truncated_svd(DataMatrix(std::move(values)), p);
  return SubspaceSignature{std::move(client_id), std::move(svd.basis),
                           std::move(svd.singular_values)};
}

Vector principal_angles(const SubspaceSignature& a, const SubspaceSignature& b) {
  check_same_dim(a, b);
  const Eigen::Index q = std::min(a.p(), b.p());
  if (identical_bases(a, b)) return Vector::Zero(q);

  // Cosines from A^T B, sines from the component of the smaller basis
  // orthogonal to the larger one. Both come out sorted so that entry k
  // belongs to the k-th smallest angle.
  const Matrix& big = a.p() >= b.p() ? a.basis : b.basis;
  const Matrix& small = a.p() >= b.p() ? b.basis : a.basis;
  const Vector cosines = singular_values_of(a.basis.transpose() * b.basis);
  const Matrix residual = small - big * (big.transpose() * small);
  Vector sines = singular_values_of(residual);
  std::sort(sines.data(), sines.data() + sines.size());

  Vector angles(q);
  for (Eigen::Index k = 0; k < q; ++k) {
    const double c = std::clamp(cosines(k), 0.0, 1.0);
    const double s = std::clamp(sines(k), 0.0, 1.0);
    angles(k) = std::atan2(s, c) * kRadToDeg;
  }
  // Guard the ordering against rounding between the two decompositions.
  std::sort(angles.data(), angles.data() + angles.size());
  return angles;
}

double proximity_entry(const SubspaceSignature& a, const SubspaceSignature& b,
                       MetricKind kind) {
  check_same_dim(a, b);
  if (kind == MetricKind::kMinAngle) {
    return principal_angles(a, b)(0);
  }
  if (a.p() != b.p()) {
    throw DimensionError("AngleTraceSum needs equal p, got " +
                         std::to_string(a.p()) + " and " + std::to_string(b.p()));
  }
  if (identical_bases(a, b)) return 0.0;
  double total = 0.0;
  for (int i = 0; i < a.p(); ++i) {
    const auto u = a.basis.col(i);
    const auto w = b.basis.col(i);
    const double c = u.dot(w);
    const double s = (w - c * u).norm();
    total += std::atan2(std::clamp(s, 0.0, 1.0), std::clamp(std::abs(c), 0.0, 1.0)) *
             kRadToDeg;
  }
  return total;
}

ProximityMatrix build_proximity_matrix(std::span<const SubspaceSignature> signatures,
                                       MetricKind kind, int threads) {
  if (signatures.empty()) {
    throw DimensionError("proximity matrix needs at least one signature");
  }
  const auto k = static_cast<Eigen::Index>(signatures.size());
  for (const auto& s : signatures) {
    check_same_dim(signatures[0], s);
    if (kind == MetricKind::kAngleTraceSum && s.p() != signatures[0].p()) {
      throw DimensionError("AngleTraceSum needs equal p across signatures");
    }
  }
  ProximityMatrix m;
  m.metric_kind = kind;
  m.entries = Matrix::Zero(k, k);
  for (const auto& s : signatures) m.client_ids.push_back(s.client_id);
  parallel_for(static_cast<std::size_t>(k), threads, [&](std::size_t i) {
    const auto row = static_cast<Eigen::Index>(i);
    for (Eigen::Index j = row + 1; j < k; ++j) {
      m.entries(row, j) = proximity_entry(signatures[i], signatures[j], kind);
    }
  });
  m.entries.triangularView<Eigen::StrictlyLower>() = m.entries.transpose();
  return m;
}

std::string to_string(MetricKind kind) {
  return kind == MetricKind::kMinAngle ? "min_angle" : "angle_trace_sum";
}

MetricKind parse_metric_kind(const std::string& s) {
  if (s == "min_angle") return MetricKind::kMinAngle;
  if (s == "angle_trace_sum") return MetricKind::kAngleTraceSum;
  throw ConfigError("unknown metric '" + s + "' (min_angle|angle_trace_sum)");
}

std::string to_string(Normalization n) {
  switch (n) {
    case Normalization::kNone:
      return "none";
    case Normalization::kUnitSampleNorm:
      return "unit_sample_norm";
    case Normalization::kScaleTo01:
      return "scale_to_01";
  }
  return "none";
}

Normalization parse_normalization(const std::string& s) {
  if (s == "none") return Normalization::kNone;
  if (s == "unit_sample_norm") return Normalization::kUnitSampleNorm;
  if (s == "scale_to_01") return Normalization::kScaleTo01;
  throw ConfigError("unknown normalization '" + s +
                    "' (none|unit_sample_norm|scale_to_01)");
}

void write_signature(std::ostream& out, const SubspaceSignature& sig) {
  out.write("PACS", 4);
  internal::write_le<std::uint16_t>(out, kSignatureVersion);
  internal::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(sig.feature_dim()));
  internal::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(sig.p()));
  for (Eigen::Index c = 0; c < sig.basis.cols(); ++c) {
    for (Eigen::Index r = 0; r < sig.basis.rows(); ++r) {
      internal::write_f64(out, sig.basis(r, c));
    }
  }
  for (Eigen::Index i = 0; i < sig.singular_values.size(); ++i) {
    internal::write_f64(out, sig.singular_values(i));
  }
}

SubspaceSignature read_signature(std::istream& in, std::string client_id) {
  internal::expect_magic(in, "PACS");
  const auto version = internal::read_le<std::uint16_t>(in);
  if (version != kSignatureVersion) {
    throw ParseError("unsupported signature version " + std::to_string(version));
  }
  const auto dim = internal::read_le<std::uint32_t>(in);
  const auto p = internal::read_le<std::uint32_t>(in);
  if (dim == 0 || p == 0 || p > dim) {
    throw ParseError("signature header has invalid shape");
  }
  SubspaceSignature sig;
  sig.client_id = std::move(client_id);
  sig.basis.resize(dim, p);
  for (std::uint32_t c = 0; c < p; ++c) {
    for (std::uint32_t r = 0; r < dim; ++r) sig.basis(r, c) = internal::read_f64(in);
  }
  sig.singular_values.resize(p);
  for (std::uint32_t i = 0; i < p; ++i) sig.singular_values(i) = internal::read_f64(in);
  return sig;
}

void save_signature(const std::filesystem::path& path, const SubspaceSignature& sig) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  write_signature(out, sig);
}

SubspaceSignature load_signature(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  return read_signature(in, path.stem().string());
}

void write_proximity_csv(std::ostream& out, const ProximityMatrix& m) {
  out << "client_id";
  for (const auto& id : m.client_ids) out << ',' << id;
  out << '\n';
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    out << m.client_ids[static_cast<std::size_t>(i)];
    for (Eigen::Index j = 0; j < m.size(); ++j) {
      out << ',' << internal::format_double(m.entries(i, j));
    }
    out << '\n';
  }
}

ProximityMatrix read_proximity_csv(std::istream& in, MetricKind kind) {
  std::string line;
  if (!std::getline(in, line)) throw ParseError("proximity CSV: empty input");
  auto header = internal::split(line);
  if (header.empty() || header[0] != "client_id") {
    throw ParseError("proximity CSV: header must start with client_id");
  }
  ProximityMatrix m;
  m.metric_kind = kind;
  m.client_ids.assign(header.begin() + 1, header.end());
  const auto k = static_cast<Eigen::Index>(m.client_ids.size());
  m.entries.resize(k, k);
  for (Eigen::Index i = 0; i < k; ++i) {
    if (!std::getline(in, line)) {
      throw ParseError("proximity CSV: expected " + std::to_string(k) + " rows");
    }
    auto cells = internal::split(line);
    if (static_cast<Eigen::Index>(cells.size()) != k + 1) {
      throw ParseError("proximity CSV row " + std::to_string(i + 2) + ": wrong width");
    }
    for (Eigen::Index j = 0; j < k; ++j) {
      double v;
      if (!internal::parse_double(cells[static_cast<std::size_t>(j + 1)], v)) {
        throw ParseError("proximity CSV row " + std::to_string(i + 2) + " column " +
                         std::to_string(j + 2) + ": not a number");
      }
      m.entries(i, j) = v;
    }
  }
  return m;
}

}  // namespace pacfl
