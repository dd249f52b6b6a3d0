#include "pacfl/flcore.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>
#include <istream>

#include "io_util.h"
#include "pacfl/errors.h"
#include "pacfl/parallel.h"
#include "pacfl/random.h"

namespace pacfl {
namespace {

const LabeledDataset& eval_split(const ClientShard& shard) {
  return shard.test.size() > 0 ? shard.test : shard.train;
}

std::size_t clients_per_round(std::size_t n, double rate) {
  const auto m = static_cast<std::size_t>(std::floor(rate * static_cast<double>(n) + 1e-9));
  return std::clamp<std::size_t>(m, 1, n);
}

std::vector<std::size_t> sample_clients(std::size_t n, std::size_t m, std::uint64_t seed,
                                        int round) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  Rng rng = make_rng(stream_seed(seed, fnv1a("sample"), static_cast<std::uint64_t>(round)));
  // Partial Fisher-Yates: the first m slots are a uniform draw without
  // replacement.
  for (std::size_t i = 0; i < m; ++i) {
    const auto j = i + uniform_index(rng, n - i);
    std::swap(idx[i], idx[j]);
  }
  idx.resize(m);
  std::sort(idx.begin(), idx.end());
  return idx;
}

ClusterState fixed_state(std::span<const ClientShard> shards, bool single, const TrainConfig& cfg) {
  ClusterState s;
  s.linkage = cfg.linkage;
  s.metric_kind = cfg.metric_kind;
  s.beta = single ? std::numeric_limits<double>::infinity() : 0.0;
  for (std::size_t i = 0; i < shards.size(); ++i) {
    s.client_ids.push_back(shards[i].client_id);
    s.assignment.push_back(single ? 0 : static_cast<int>(i));
  }
  s.num_clusters = single ? 1 : static_cast<int>(shards.size());
  return s;
}

}  // namespace

void TrainConfig::validate() const {
  auto fail = [](const std::string& field, const std::string& why) {
    throw ConfigError("train." + field + ": " + why);
  };
  if (rounds < 1) fail("rounds", "must be a positive integer");
  if (!(sample_rate > 0.0 && sample_rate <= 1.0)) fail("sample_rate", "must lie in (0, 1]");
  if (local_epochs < 1) fail("local_epochs", "must be a positive integer");
  if (batch_size < 1) fail("batch_size", "must be a positive integer");
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
    fail("learning_rate", "must be a finite nonnegative number");
  }
  if (!(momentum >= 0.0 && momentum < 1.0)) fail("momentum", "must lie in [0, 1)");
  if (!(beta >= 0.0)) fail("beta", "must be nonnegative");
  if (p < 1) fail("p", "must be a positive integer");
  if (model == ModelKind::kMlp && hidden_width < 1) fail("hidden_width", "must be positive");
  if (bytes_per_param < 1) fail("bytes_per_param", "must be positive");
  if (threads < 0) fail("threads", "must be >= 0");
}

std::string to_string(FederationMode mode) {
  switch (mode) {
    case FederationMode::kPacfl: return "pacfl";
    case FederationMode::kFedAvgGlobal: return "fedavg";
    case FederationMode::kSolo: return "solo";
  }
  return "pacfl";
}

FederationMode parse_federation_mode(const std::string& s) {
  if (s == "pacfl") return FederationMode::kPacfl;
  if (s == "fedavg") return FederationMode::kFedAvgGlobal;
  if (s == "solo") return FederationMode::kSolo;
  throw ConfigError("unknown mode '" + s + "' (pacfl|fedavg|solo)");
}

std::uint64_t client_stream_seed(std::uint64_t seed, int round, std::size_t client_index) {
  return stream_seed(seed, fnv1a("client"), static_cast<std::uint64_t>(round),
                     static_cast<std::uint64_t>(client_index));
}

LocalUpdateResult local_update(const ModelParams& params, const ClientShard& shard,
                               const TrainConfig& cfg, std::uint64_t stream, int round) {
  params.validate();
  const auto& data = shard.train;
  if (data.size() == 0) throw InvalidData("client " + shard.client_id + " has no training data");
  if (data.feature_dim() != params.arch.n_features) {
    throw DimensionError("client " + shard.client_id + " has " +
                         std::to_string(data.feature_dim()) + " features, model expects " +
                         std::to_string(params.arch.n_features));
  }

  LocalUpdateResult out{params, 0.0};
  Eigen::VectorXd velocity = Eigen::VectorXd::Zero(params.theta.size());
  Eigen::VectorXd grad;
  Rng rng = make_rng(stream);
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const auto batch = static_cast<std::size_t>(cfg.batch_size);

  for (int epoch = 1; epoch <= cfg.local_epochs; ++epoch) {
    shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < order.size(); start += batch) {
      const std::size_t len = std::min(batch, order.size() - start);
      Eigen::MatrixXd x(static_cast<Eigen::Index>(len), data.feature_dim());
      std::vector<int> y(len);
      for (std::size_t r = 0; r < len; ++r) {
        x.row(static_cast<Eigen::Index>(r)) = data.features.row(static_cast<Eigen::Index>(order[start + r]));
        y[r] = data.labels[order[start + r]];
      }
      const double loss = loss_and_gradient(out.params, x, y, &grad);
      if (!std::isfinite(loss) || !grad.allFinite()) {
        throw DivergenceError("client " + shard.client_id + " diverged in round " +
                              std::to_string(round) + ", epoch " + std::to_string(epoch));
      }
      velocity = cfg.momentum * velocity + grad;
      out.params.theta -= cfg.learning_rate * velocity;
    }
  }
  out.final_train_loss = loss_and_gradient(out.params, data.features, data.labels, nullptr);
  if (!std::isfinite(out.final_train_loss) || !out.params.theta.allFinite()) {
    throw DivergenceError("client " + shard.client_id + " diverged in round " +
                          std::to_string(round) + ", epoch " + std::to_string(cfg.local_epochs));
  }
  return out;
}

ModelParams cluster_aggregate(std::span<const WeightedModel> updates) {
  if (updates.empty()) throw InvalidData("cannot aggregate an empty set of models");
  const ModelParams& first = *updates.front().params;
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(first.theta.size());
  Eigen::VectorXd lo = first.theta;
  Eigen::VectorXd hi = first.theta;
  double total = 0.0;
  for (const auto& u : updates) {
    if (!(u.params->arch == first.arch) || u.params->theta.size() != first.theta.size()) {
      throw DimensionError("cannot aggregate models with different architectures");
    }
    if (!(u.weight > 0.0) || !std::isfinite(u.weight)) {
      throw InvalidData("aggregation weights must be positive and finite");
    }
    sum += u.weight * u.params->theta;
    lo = lo.cwiseMin(u.params->theta);
    hi = hi.cwiseMax(u.params->theta);
    total += u.weight;
  }
  ModelParams out{first.arch, (sum / total).cwiseMax(lo).cwiseMin(hi)};
  return out;
}

double FederationResult::mean_final_accuracy() const {
  if (rounds.empty() || rounds.back().per_client.empty()) return 0.0;
  double s = 0.0;
  for (const auto& c : rounds.back().per_client) s += c.test_accuracy;
  return s / static_cast<double>(rounds.back().per_client.size());
}

std::uint64_t FederationResult::total_bytes() const {
  std::uint64_t total = 0;
  for (const auto& r : rounds) total += r.bytes_downlink + r.bytes_uplink + r.bytes_signature;
  return total;
}

std::vector<SubspaceSignature> client_signatures(std::span<const ClientShard> shards, int p,
                                                 Normalization normalize, int threads) {
  std::vector<SubspaceSignature> sigs(shards.size());
  parallel_for(shards.size(), threads, [&](std::size_t i) {
    const auto& s = shards[i];
    sigs[i] = make_signature(DataMatrix(s.train.features.transpose()), p, normalize, s.client_id);
  });
  return sigs;
}

Architecture infer_architecture(std::span<const ClientShard> shards, const TrainConfig& cfg) {
  if (shards.empty()) throw InvalidData("no client shards");
  Architecture a;
  a.kind = cfg.model;
  a.hidden_width = cfg.model == ModelKind::kMlp ? cfg.hidden_width : 0;
  a.n_features = static_cast<int>(shards.front().train.feature_dim());
  a.n_classes = 0;
  for (const auto& s : shards) {
    if (s.train.feature_dim() != a.n_features ||
        (s.test.size() > 0 && s.test.feature_dim() != a.n_features)) {
      throw DimensionError("client " + s.client_id + " has a different feature dimension");
    }
    a.n_classes = std::max({a.n_classes, s.train.n_classes, s.test.n_classes});
  }
  a.n_classes = std::max(a.n_classes, 2);
  return a;
}

FederationResult run_clustered(std::span<const ClientShard> shards, const TrainConfig& cfg,
                               const ClusterState& clusters, std::uint64_t signature_bytes) {
  cfg.validate();
  const std::size_t n = shards.size();
  if (n == 0) throw InvalidData("no client shards");
  if (clusters.assignment.size() != n) {
    throw DimensionError("cluster assignment covers " + std::to_string(clusters.assignment.size()) +
                         " clients, federation has " + std::to_string(n));
  }
  const Architecture arch = infer_architecture(shards, cfg);
  const ModelParams init = init_model(arch, cfg.seed);

  FederationResult result;
  result.clusters = clusters;
  result.cluster_models.assign(static_cast<std::size_t>(clusters.num_clusters), init);

  const std::size_t m = clients_per_round(n, cfg.sample_rate);
  const auto param_bytes =
      static_cast<std::uint64_t>(arch.parameter_count()) * static_cast<std::uint64_t>(cfg.bytes_per_param);
  std::vector<LocalUpdateResult> updates(n);

  for (int round = 1; round <= cfg.rounds; ++round) {
    const auto sampled = sample_clients(n, m, cfg.seed, round);
    parallel_for(sampled.size(), cfg.threads, [&](std::size_t s) {
      const std::size_t k = sampled[s];
      const auto z = static_cast<std::size_t>(clusters.assignment[k]);
      updates[k] = local_update(result.cluster_models[z], shards[k], cfg,
                                client_stream_seed(cfg.seed, round, k), round);
    });

    // Fixed reduction order: members in ascending client index.
    std::vector<std::vector<WeightedModel>> members(result.cluster_models.size());
    for (std::size_t k : sampled) {
      members[static_cast<std::size_t>(clusters.assignment[k])].push_back(
          {&updates[k].params, static_cast<double>(shards[k].train.size())});
    }
    for (std::size_t z = 0; z < members.size(); ++z) {
      if (!members[z].empty()) result.cluster_models[z] = cluster_aggregate(members[z]);
    }

    RoundMetrics rm;
    rm.round = round;
    rm.bytes_downlink = m * param_bytes;
    rm.bytes_uplink = m * param_bytes;
    rm.bytes_signature = round == 1 ? signature_bytes : 0;
    for (const auto& model : result.cluster_models) rm.per_cluster_model_norms.push_back(model.theta.norm());
    rm.per_client.resize(n);
    std::vector<bool> was_sampled(n, false);
    for (std::size_t k : sampled) was_sampled[k] = true;
    parallel_for(n, cfg.threads, [&](std::size_t k) {
      const auto& model = result.cluster_models[static_cast<std::size_t>(clusters.assignment[k])];
      auto& rec = rm.per_client[k];
      rec.client_id = shards[k].client_id;
      rec.cluster_id = clusters.assignment[k];
      rec.sampled = was_sampled[k];
      rec.test_accuracy = accuracy(model, eval_split(shards[k]));
      rec.train_loss = loss_and_gradient(model, shards[k].train.features, shards[k].train.labels, nullptr);
    });
    result.rounds.push_back(std::move(rm));
  }
  return result;
}

FederationResult run_federation(std::span<const ClientShard> shards, const TrainConfig& cfg,
                                FederationMode mode) {
  cfg.validate();
  if (shards.empty()) throw InvalidData("no client shards");
  switch (mode) {
    case FederationMode::kFedAvgGlobal:
      return run_clustered(shards, cfg, fixed_state(shards, true, cfg));
    case FederationMode::kSolo:
      return run_clustered(shards, cfg, fixed_state(shards, false, cfg));
    case FederationMode::kPacfl:
      break;
  }
  const auto sigs = client_signatures(shards, cfg.p, cfg.normalize, cfg.threads);
  const auto prox = build_proximity_matrix(sigs, cfg.metric_kind, cfg.threads);
  auto clustered = hierarchical_cluster(prox, cfg.beta, cfg.linkage);
  const CommCost sig_cost = comm_cost_model({.n_clients = shards.size(),
                                             .feature_dim = static_cast<std::uint64_t>(sigs.front().feature_dim()),
                                             .p = static_cast<std::uint64_t>(cfg.p),
                                             .bytes_per_param = static_cast<std::uint64_t>(cfg.bytes_per_param)});
  return run_clustered(shards, cfg, clustered.second, sig_cost.signature);
}

CommCost comm_cost_model(const CommCostInput& in) {
  CommCost c;
  const std::uint64_t transfers = in.rounds * in.sampled_per_round;
  c.downlink = transfers * in.n_clusters_downloaded * in.parameter_count * in.bytes_per_param;
  c.uplink = transfers * in.parameter_count * in.bytes_per_param;
  c.signature = in.n_clients * in.feature_dim * in.p * in.bytes_per_param;
  return c;
}

void write_metrics_csv(std::ostream& out, std::span<const RoundMetrics> rounds) {
  out << "round,client_id,cluster_id,sampled,test_accuracy,train_loss\n";
  for (const auto& r : rounds) {
    for (const auto& c : r.per_client) {
      out << r.round << ',' << c.client_id << ',' << c.cluster_id << ',' << (c.sampled ? 1 : 0)
          << ',' << internal::format_double(c.test_accuracy) << ','
          << internal::format_double(c.train_loss) << '\n';
    }
  }
}

std::vector<RoundMetrics> read_metrics_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != "round,client_id,cluster_id,sampled,test_accuracy,train_loss") {
    throw ParseError("metrics CSV: unexpected header");
  }
  std::vector<RoundMetrics> rounds;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto f = internal::split(line);
    ClientRoundRecord rec;
    int round = 0;
    int sampled = 0;
    if (f.size() != 6 || !internal::parse_int(f[0], round) || !internal::parse_int(f[2], rec.cluster_id) ||
        !internal::parse_int(f[3], sampled) || !internal::parse_double(f[4], rec.test_accuracy) ||
        !internal::parse_double(f[5], rec.train_loss)) {
      throw ParseError("metrics CSV line " + std::to_string(line_no) + ": malformed row");
    }
    rec.client_id = f[1];
    rec.sampled = sampled != 0;
    if (rounds.empty() || rounds.back().round != round) {
      rounds.push_back(RoundMetrics{});
      rounds.back().round = round;
    }
    rounds.back().per_client.push_back(std::move(rec));
  }
  return rounds;
}

}  // namespace pacfl
