#include "pacfl/model.h"

#include <cmath>
#include <fstream>

#include "io_util.h"
#include "pacfl/errors.h"
#include "pacfl/random.h"

namespace pacfl {
namespace {

constexpr std::uint16_t kModelVersion = 1;

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMajor>;
using MutMap = Eigen::Map<RowMajor>;

// Row-wise softmax in place.
void softmax_rows(Eigen::MatrixXd& logits) {
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    auto row = logits.row(r);
    const double m = row.maxCoeff();
    row = (row.array() - m).exp().matrix();
    row /= row.sum();
  }
}

double cross_entropy(const Eigen::MatrixXd& proba, std::span<const int> labels) {
  double total = 0.0;
  for (Eigen::Index r = 0; r < proba.rows(); ++r) {
    const double p = proba(r, labels[static_cast<std::size_t>(r)]);
    total -= std::log(std::max(p, std::numeric_limits<double>::min()));
  }
  return total / static_cast<double>(proba.rows());
}

}  // namespace

std::string to_string(ModelKind kind) { return kind == ModelKind::kLogReg ? "logreg" : "mlp"; }

ModelKind parse_model_kind(const std::string& s) {
  if (s == "logreg") return ModelKind::kLogReg;
  if (s == "mlp") return ModelKind::kMlp;
  throw ConfigError("unknown model '" + s + "' (logreg|mlp)");
}

Eigen::Index Architecture::parameter_count() const {
  if (kind == ModelKind::kLogReg) {
    return static_cast<Eigen::Index>(n_features) * n_classes + n_classes;
  }
  return static_cast<Eigen::Index>(hidden_width) * n_features + hidden_width +
         static_cast<Eigen::Index>(n_classes) * hidden_width + n_classes;
}

void ModelParams::validate() const {
  if (arch.n_features < 1 || arch.n_classes < 1 ||
      (arch.kind == ModelKind::kMlp && arch.hidden_width < 1)) {
    throw DimensionError("invalid architecture");
  }
  if (theta.size() != arch.parameter_count()) {
    throw DimensionError("theta has " + std::to_string(theta.size()) + " entries, arch needs " +
                         std::to_string(arch.parameter_count()));
  }
  if (!theta.allFinite()) throw InvalidData("model parameters are not finite");
}

ModelParams init_model(const Architecture& arch, std::uint64_t seed) {
  ModelParams p{arch, Eigen::VectorXd::Zero(arch.parameter_count())};
  p.validate();
  Rng rng = make_rng(stream_seed(seed, fnv1a("init-model")));
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  auto fill = [&](Eigen::Index offset, int fan_out, int fan_in) {
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(fan_out) * fan_in; ++i) {
      p.theta(offset + i) = limit * unit(rng);
    }
  };
  if (arch.kind == ModelKind::kLogReg) {
    fill(0, arch.n_classes, arch.n_features);
  } else {
    const Eigen::Index w1 = static_cast<Eigen::Index>(arch.hidden_width) * arch.n_features;
    fill(0, arch.hidden_width, arch.n_features);
    fill(w1 + arch.hidden_width, arch.n_classes, arch.hidden_width);
  }
  return p;
}

double loss_and_gradient(const ModelParams& params, const Eigen::MatrixXd& x,
                         std::span<const int> labels, Eigen::VectorXd* grad) {
  const auto& a = params.arch;
  if (x.cols() != a.n_features) {
    throw DimensionError("input has " + std::to_string(x.cols()) + " features, model expects " +
                         std::to_string(a.n_features));
  }
  if (static_cast<std::size_t>(x.rows()) != labels.size() || x.rows() == 0) {
    throw DimensionError("need one label per sample and at least one sample");
  }
  const double inv_n = 1.0 / static_cast<double>(x.rows());
  const double* t = params.theta.data();

  if (a.kind == ModelKind::kLogReg) {
    ConstMap w(t, a.n_classes, a.n_features);
    Eigen::Map<const Eigen::VectorXd> b(t + w.size(), a.n_classes);
    Eigen::MatrixXd proba = x * w.transpose();
    proba.rowwise() += b.transpose();
    softmax_rows(proba);
    const double loss = cross_entropy(proba, labels);
    if (grad != nullptr) {
      grad->resize(params.theta.size());
      Eigen::MatrixXd delta = proba;
      for (Eigen::Index r = 0; r < delta.rows(); ++r) {
        delta(r, labels[static_cast<std::size_t>(r)]) -= 1.0;
      }
      delta *= inv_n;
      MutMap(grad->data(), a.n_classes, a.n_features) = delta.transpose() * x;
      grad->segment(w.size(), a.n_classes) = delta.colwise().sum().transpose();
    }
    return loss;
  }

  const Eigen::Index h = a.hidden_width;
  ConstMap w1(t, h, a.n_features);
  Eigen::Map<const Eigen::VectorXd> b1(t + w1.size(), h);
  ConstMap w2(t + w1.size() + h, a.n_classes, h);
  Eigen::Map<const Eigen::VectorXd> b2(t + w1.size() + h + w2.size(), a.n_classes);

  Eigen::MatrixXd hidden = x * w1.transpose();
  hidden.rowwise() += b1.transpose();
  hidden = hidden.array().tanh().matrix();
  Eigen::MatrixXd proba = hidden * w2.transpose();
  proba.rowwise() += b2.transpose();
  softmax_rows(proba);
  const double loss = cross_entropy(proba, labels);
  if (grad != nullptr) {
    grad->resize(params.theta.size());
    Eigen::MatrixXd delta = proba;
    for (Eigen::Index r = 0; r < delta.rows(); ++r) {
      delta(r, labels[static_cast<std::size_t>(r)]) -= 1.0;
    }
    delta *= inv_n;
    const Eigen::MatrixXd d_hidden =
        ((delta * w2).array() * (1.0 - hidden.array().square())).matrix();
    double* g = grad->data();
    MutMap(g, h, a.n_features) = d_hidden.transpose() * x;
    grad->segment(w1.size(), h) = d_hidden.colwise().sum().transpose();
    MutMap(g + w1.size() + h, a.n_classes, h) = delta.transpose() * hidden;
    grad->segment(w1.size() + h + w2.size(), a.n_classes) = delta.colwise().sum().transpose();
  }
  return loss;
}

Eigen::MatrixXd predict_proba(const ModelParams& params, const Eigen::MatrixXd& x) {
  const auto& a = params.arch;
  if (x.cols() != a.n_features) throw DimensionError("feature count mismatch");
  const double* t = params.theta.data();
  Eigen::MatrixXd proba;
  if (a.kind == ModelKind::kLogReg) {
    ConstMap w(t, a.n_classes, a.n_features);
    Eigen::Map<const Eigen::VectorXd> b(t + w.size(), a.n_classes);
    proba = x * w.transpose();
    proba.rowwise() += b.transpose();
  } else {
    const Eigen::Index h = a.hidden_width;
    ConstMap w1(t, h, a.n_features);
    Eigen::Map<const Eigen::VectorXd> b1(t + w1.size(), h);
    ConstMap w2(t + w1.size() + h, a.n_classes, h);
    Eigen::Map<const Eigen::VectorXd> b2(t + w1.size() + h + w2.size(), a.n_classes);
    Eigen::MatrixXd hidden = x * w1.transpose();
    hidden.rowwise() += b1.transpose();
    hidden = hidden.array().tanh().matrix();
    proba = hidden * w2.transpose();
    proba.rowwise() += b2.transpose();
  }
  softmax_rows(proba);
  return proba;
}

double accuracy(const ModelParams& params, const LabeledDataset& ds) {
  if (ds.size() == 0) return 0.0;
  const auto proba = predict_proba(params, ds.features);
  std::size_t correct = 0;
  for (Eigen::Index r = 0; r < proba.rows(); ++r) {
    Eigen::Index arg;
    proba.row(r).maxCoeff(&arg);
    if (arg == ds.labels[static_cast<std::size_t>(r)]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(ds.size());
}

void write_model(std::ostream& out, const ModelParams& params) {
  out.write("PACM", 4);
  internal::write_le<std::uint16_t>(out, kModelVersion);
  internal::write_le<std::uint8_t>(out, params.arch.kind == ModelKind::kLogReg ? 0 : 1);
  internal::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(params.arch.n_features));
  internal::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(params.arch.hidden_width));
  internal::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(params.arch.n_classes));
  internal::write_le<std::uint64_t>(out, static_cast<std::uint64_t>(params.theta.size()));
  for (Eigen::Index i = 0; i < params.theta.size(); ++i) internal::write_f64(out, params.theta(i));
}

ModelParams read_model(std::istream& in) {
  internal::expect_magic(in, "PACM");
  const auto version = internal::read_le<std::uint16_t>(in);
  if (version != kModelVersion) {
    throw ParseError("unsupported model version " + std::to_string(version));
  }
  ModelParams p;
  const auto kind = internal::read_le<std::uint8_t>(in);
  if (kind > 1) throw ParseError("unknown model kind " + std::to_string(kind));
  p.arch.kind = kind == 0 ? ModelKind::kLogReg : ModelKind::kMlp;
  p.arch.n_features = static_cast<int>(internal::read_le<std::uint32_t>(in));
  p.arch.hidden_width = static_cast<int>(internal::read_le<std::uint32_t>(in));
  p.arch.n_classes = static_cast<int>(internal::read_le<std::uint32_t>(in));
  const auto len = internal::read_le<std::uint64_t>(in);
  if (static_cast<Eigen::Index>(len) != p.arch.parameter_count()) {
    throw ParseError("model checkpoint length does not match its architecture");
  }
  p.theta.resize(static_cast<Eigen::Index>(len));
  for (Eigen::Index i = 0; i < p.theta.size(); ++i) p.theta(i) = internal::read_f64(in);
  return p;
}

void save_model(const std::filesystem::path& path, const ModelParams& params) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  write_model(out, params);
}

ModelParams load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  return read_model(in);
}

}  // namespace pacfl
