#ifndef PACFL_MODEL_H_
#define PACFL_MODEL_H_

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>

#include "pacfl/partition.h"

namespace pacfl {

enum class ModelKind { kLogReg, kMlp };

std::string to_string(ModelKind kind);
ModelKind parse_model_kind(const std::string& s);

struct Architecture {
  ModelKind kind = ModelKind::kLogReg;
  int n_features = 1;
  int hidden_width = 0;  // Mlp only
  int n_classes = 2;

  Eigen::Index parameter_count() const;
  bool operator==(const Architecture&) const = default;
};

// Flat parameter vector. Layout:
//   LogReg: W (n_classes x n_features, row-major), b (n_classes)
//   Mlp:    W1 (hidden x n_features), b1 (hidden), W2 (n_classes x hidden), b2
struct ModelParams {
  Architecture arch;
  Eigen::VectorXd theta;

  void validate() const;  // length and finiteness; throws DimensionError/InvalidData
};

// Glorot-uniform weights, zero biases.
ModelParams init_model(const Architecture& arch, std::uint64_t seed);

// Mean softmax cross-entropy over the rows of `x` (samples x features).
// When `grad` is non-null it receives the analytic gradient w.r.t. theta.
double loss_and_gradient(const ModelParams& params, const Eigen::MatrixXd& x,
                         std::span<const int> labels, Eigen::VectorXd* grad);

Eigen::MatrixXd predict_proba(const ModelParams& params, const Eigen::MatrixXd& x);
double accuracy(const ModelParams& params, const LabeledDataset& ds);

// Checkpoint: "PACM", u16 version, u8 kind, u32 n_features, u32 hidden,
// u32 n_classes, u64 theta length, then little-endian f64 theta.
void write_model(std::ostream& out, const ModelParams& params);
ModelParams read_model(std::istream& in);
void save_model(const std::filesystem::path& path, const ModelParams& params);
ModelParams load_model(const std::filesystem::path& path);

}  // namespace pacfl

#endif  // PACFL_MODEL_H_
