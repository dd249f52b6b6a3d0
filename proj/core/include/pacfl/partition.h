#ifndef PACFL_PARTITION_H_
#define PACFL_PARTITION_H_

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <set>
#include <span>
#include <string>
#include <variant>
#include <vector>

namespace pacfl {

// Row-major samples: features is n_samples x n_features.
struct LabeledDataset {
  Eigen::MatrixXd features;
  std::vector<int> labels;
  int n_classes = 0;
  std::string name;

  std::size_t size() const { return labels.size(); }
  Eigen::Index feature_dim() const { return features.cols(); }

  // Checks label range, row count and finiteness; throws InvalidData.
  void validate() const;
};

// Rows of `ds` at `indices`, in that order.
LabeledDataset subset(const LabeledDataset& ds, std::span<const std::size_t> indices);

struct ClientShard {
  std::string client_id;
  LabeledDataset train;
  LabeledDataset test;
  std::string source_name;
  std::set<int> label_set;
  // Row indices into the source dataset, for replay manifests.
  std::vector<std::size_t> train_indices;
  std::vector<std::size_t> test_indices;
};

struct LabelSkew {
  double percent = 20.0;  // share of the label space each client holds
};

struct Dirichlet {
  double alpha = 0.5;
};

struct Mix {
  std::vector<int> dataset_client_counts;
  int samples_per_client = 500;
};

struct PartitionSpec {
  std::variant<LabelSkew, Dirichlet, Mix> scheme = LabelSkew{};
  int n_clients = 10;
  double test_fraction = 0.2;
  std::uint64_t seed = 0;

  void validate() const;  // throws ConfigError
};

// Class c is drawn from N(mu_c, covariance_scale * I) with
// mu_c = class_mean_scale * g_c, g_c ~ N(0, I) from the seeded stream.
LabeledDataset generate_gaussian_dataset(int n_classes, int n_features,
                                         int samples_per_class,
                                         double class_mean_scale,
                                         double covariance_scale,
                                         std::uint64_t seed,
                                         std::string name = "gaussian");

// Two groups of clients whose features live in mutually orthogonal
// high-variance subspaces but share one discriminative direction; group
// "group_b" uses the flipped binary labelling of "group_a". No single linear
// model fits both groups, while each group alone is separable.
std::vector<ClientShard> generate_conflicting_groups(int clients_per_group,
                                                     int samples_per_client,
                                                     int n_features,
                                                     double test_fraction,
                                                     std::uint64_t seed);

struct CsvDataset {
  LabeledDataset dataset;
  // original_labels[k] is the raw label value mapped to dense label k.
  std::vector<long long> original_labels;
};

CsvDataset load_csv_dataset(const std::filesystem::path& path,
                            const std::string& label_column);
void write_csv_dataset(const std::filesystem::path& path, const LabeledDataset& ds,
                       const std::string& label_column = "label");

// Zero-pads feature columns up to `feature_dim`.
LabeledDataset pad_features(const LabeledDataset& ds, Eigen::Index feature_dim);

std::vector<ClientShard> label_skew_partition(const LabeledDataset& ds,
                                              const PartitionSpec& spec);
std::vector<ClientShard> dirichlet_partition(const LabeledDataset& ds,
                                             const PartitionSpec& spec);
// Datasets get consecutive global label ranges in list order.
std::vector<ClientShard> mix_partition(std::span<const LabeledDataset> datasets,
                                       const PartitionSpec& spec);

// Dispatches on spec.scheme. LabelSkew and Dirichlet use datasets[0] only.
std::vector<ClientShard> partition(std::span<const LabeledDataset> datasets,
                                   const PartitionSpec& spec);

std::string client_name(int index, int total);

// Replay manifest, one line per client:
//   client <id> source=<name> labels=<l,..> train=<i,..> test=<i,..>
struct ManifestEntry {
  std::string client_id;
  std::string source_name;
  std::set<int> label_set;
  std::vector<std::size_t> train_indices;
  std::vector<std::size_t> test_indices;
};

void write_manifest(std::ostream& out, std::span<const ClientShard> shards);
std::vector<ManifestEntry> read_manifest(std::istream& in);

}  // namespace pacfl

#endif  // PACFL_PARTITION_H_
