#ifndef PACFL_EXPERIMENT_H_
#define PACFL_EXPERIMENT_H_

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pacfl/clustering.h"
#include "pacfl/flcore.h"
#include "pacfl/oracles.h"
#include "pacfl/partition.h"

namespace pacfl {

struct DatasetConfig {
  std::string kind = "gaussian";  // gaussian | conflicting | csv

  // gaussian: one generated dataset per source
  int sources = 1;
  int classes = 3;
  int features = 20;
  int samples_per_class = 400;
  double mean_scale = 3.0;
  double cov_scale = 1.0;

  // conflicting
  int clients_per_group = 10;
  int samples_per_client = 100;

  // csv: one file per source; relative paths resolve against the config file
  std::vector<std::filesystem::path> paths;
  std::string label_column = "label";
};

struct NewcomerConfig {
  double holdout_fraction = 0.0;  // share of each source's clients kept back
  int finetune_epochs = 0;
};

struct ExperimentConfig {
  std::uint64_t seed = 0;
  FederationMode mode = FederationMode::kPacfl;
  std::filesystem::path output_dir = "pacfl_out";
  DatasetConfig dataset;
  PartitionSpec partition;
  TrainConfig train;
  std::vector<double> beta_sweep;
  NewcomerConfig newcomer;
  ConsistencyConfig consistency;

  // Pushes the root seed into every section.
  void set_seed(std::uint64_t s);
  void validate() const;  // throws ConfigError
};

// INI text with sections [experiment], [dataset], [partition], [train],
// [sweep], [newcomer] and [consistency]. Unknown keys are rejected.
// Syntax errors carry the line number; value errors name the field.
ExperimentConfig parse_config(std::istream& in, const std::filesystem::path& base_dir = {});
ExperimentConfig load_config(const std::filesystem::path& path);

struct ShardSplit {
  std::vector<ClientShard> federated;
  std::vector<ClientShard> newcomers;
};

// Generates or loads the data, partitions it, and holds back newcomers.
ShardSplit build_shards(const ExperimentConfig& cfg);

// Keeps the last round(fraction * n) clients of every source group apart.
ShardSplit hold_out_newcomers(std::vector<ClientShard> shards, double fraction);

using ProximityBuilder =
    std::function<ProximityMatrix(std::span<const SubspaceSignature>, MetricKind)>;

struct SweepRow {
  double beta = 0.0;
  int clusters = 0;
  double mean_accuracy = 0.0;
  std::uint64_t bytes_total = 0;
};

struct SweepOutcome {
  std::vector<SubspaceSignature> signatures;
  ProximityMatrix proximity;
  std::vector<SweepRow> rows;
  std::vector<FederationResult> runs;  // parallel to rows
  std::vector<Dendrogram> dendrograms;
};

// Signatures and the proximity matrix are computed once; each beta then
// re-clusters and re-runs the federation with the same seed. `betas` must
// be nonempty and ascending. A null builder uses build_proximity_matrix.
SweepOutcome sweep_beta(std::span<const ClientShard> shards, const TrainConfig& train,
                        std::span<const double> betas, const ProximityBuilder& builder = {});

void write_summary_csv(std::ostream& out, std::span<const SweepRow> rows);
std::vector<SweepRow> read_summary_csv(std::istream& in);

// Everything needed to place newcomers later.
struct SavedState {
  TrainConfig train;
  ProximityMatrix proximity;
  std::vector<SubspaceSignature> signatures;
  ClusterState clusters;
  std::vector<ModelParams> models;
};

void save_state(const std::filesystem::path& dir, const SavedState& state);
SavedState load_state(const std::filesystem::path& dir);

struct NewcomerOutcome {
  std::string client_id;
  int cluster_id = 0;
  double accuracy_before = 0.0;  // assigned cluster model on the test split
  std::optional<double> accuracy_after;  // after fine-tuning, when requested
};

// Signatures for the newcomers, proximity-matrix extension, assignment with
// the saved beta, then optional fine-tuning from the assigned model.
// Newcomers that open a cluster of their own start from a fresh model.
std::vector<NewcomerOutcome> newcomer_workflow(const SavedState& state,
                                               std::span<const ClientShard> newcomers,
                                               int finetune_epochs);

void write_newcomer_csv(std::ostream& out, std::span<const NewcomerOutcome> rows);

void write_consistency_csv(std::ostream& out, const ConsistencyReport& report);

// Subcommand drivers. Each writes its artifacts under cfg.output_dir and
// returns a process exit status.
int cmd_partition(const ExperimentConfig& cfg, std::ostream& log);
int cmd_signature(const ExperimentConfig& cfg, std::ostream& log);
int cmd_cluster(const ExperimentConfig& cfg, std::ostream& log);
int cmd_train(const ExperimentConfig& cfg, std::ostream& log);
int cmd_sweep_beta(const ExperimentConfig& cfg, std::ostream& log);
int cmd_newcomer(const ExperimentConfig& cfg, std::ostream& log);
int cmd_consistency_report(const ExperimentConfig& cfg, std::ostream& log);

// Full pipeline: the sweep when [sweep] betas is set, training otherwise.
int run_experiment(const ExperimentConfig& cfg, std::ostream& log);

}  // namespace pacfl

#endif  // PACFL_EXPERIMENT_H_
