#ifndef PACFL_FLCORE_H_
#define PACFL_FLCORE_H_

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pacfl/clustering.h"
#include "pacfl/model.h"
#include "pacfl/partition.h"
#include "pacfl/subspace.h"

namespace pacfl {

struct TrainConfig {
  int rounds = 10;
  double sample_rate = 0.1;
  int local_epochs = 1;
  int batch_size = 10;
  double learning_rate = 0.01;
  double momentum = 0.5;
  std::uint64_t seed = 0;

  double beta = 0.0;
  int p = 3;
  MetricKind metric_kind = MetricKind::kMinAngle;
  Linkage linkage = Linkage::kAverage;
  Normalization normalize = Normalization::kScaleTo01;

  ModelKind model = ModelKind::kLogReg;
  int hidden_width = 32;
  int bytes_per_param = 8;
  int threads = 1;

  void validate() const;  // throws ConfigError naming the offending field
};

enum class FederationMode { kPacfl, kFedAvgGlobal, kSolo };

std::string to_string(FederationMode mode);
FederationMode parse_federation_mode(const std::string& s);

// Seed of the RNG stream a client uses in a given round.
std::uint64_t client_stream_seed(std::uint64_t seed, int round, std::size_t client_index);

struct LocalUpdateResult {
  ModelParams params;
  double final_train_loss = 0.0;  // full-batch loss after the last epoch
};

// E epochs of shuffled mini-batch SGD with heavy-ball momentum
// (v <- momentum * v + g; theta <- theta - lr * v) on shard.train.
LocalUpdateResult local_update(const ModelParams& params, const ClientShard& shard,
                               const TrainConfig& cfg, std::uint64_t stream, int round = 0);

struct WeightedModel {
  const ModelParams* params = nullptr;
  double weight = 1.0;
};

// Weighted mean of the member parameters, clamped to the coordinate-wise
// range of the members so rounding cannot leave their convex hull.
ModelParams cluster_aggregate(std::span<const WeightedModel> updates);

struct ClientRoundRecord {
  std::string client_id;
  int cluster_id = 0;
  bool sampled = false;
  double test_accuracy = 0.0;
  double train_loss = 0.0;
};

struct RoundMetrics {
  int round = 0;  // 1-based
  std::vector<ClientRoundRecord> per_client;
  std::vector<double> per_cluster_model_norms;
  std::uint64_t bytes_downlink = 0;
  std::uint64_t bytes_uplink = 0;
  std::uint64_t bytes_signature = 0;  // one-shot signature upload, round 1 only
};

struct FederationResult {
  ClusterState clusters;
  std::vector<RoundMetrics> rounds;
  std::vector<ModelParams> cluster_models;

  // Mean over clients of the last round's test accuracy.
  double mean_final_accuracy() const;
  std::uint64_t total_bytes() const;
};

// Signatures of every shard's training features (one column per sample).
std::vector<SubspaceSignature> client_signatures(std::span<const ClientShard> shards, int p,
                                                 Normalization normalize, int threads = 1);

// Architecture implied by the shards and cfg.model.
Architecture infer_architecture(std::span<const ClientShard> shards, const TrainConfig& cfg);

// Federation with a fixed cluster assignment. `signature_bytes` is charged
// to round 1.
FederationResult run_clustered(std::span<const ClientShard> shards, const TrainConfig& cfg,
                               const ClusterState& clusters, std::uint64_t signature_bytes = 0);

// Full loop. kPacfl clusters the signatures at cfg.beta; kFedAvgGlobal puts
// every client in one cluster; kSolo gives each client its own.
FederationResult run_federation(std::span<const ClientShard> shards, const TrainConfig& cfg,
                                FederationMode mode);

struct CommCostInput {
  std::uint64_t parameter_count = 1;
  std::uint64_t rounds = 1;
  std::uint64_t sampled_per_round = 1;
  std::uint64_t n_clusters_downloaded = 1;
  // Signature upload; zero n_clients disables it.
  std::uint64_t n_clients = 0;
  std::uint64_t feature_dim = 0;
  std::uint64_t p = 0;
  std::uint64_t bytes_per_param = 8;
};

struct CommCost {
  std::uint64_t downlink = 0;
  std::uint64_t uplink = 0;
  std::uint64_t signature = 0;

  std::uint64_t total() const { return downlink + uplink + signature; }
};

CommCost comm_cost_model(const CommCostInput& in);

// One row per client per round:
//   round,client_id,cluster_id,sampled,test_accuracy,train_loss
void write_metrics_csv(std::ostream& out, std::span<const RoundMetrics> rounds);
std::vector<RoundMetrics> read_metrics_csv(std::istream& in);

}  // namespace pacfl

#endif  // PACFL_FLCORE_H_
