#include "pacfl/experiment.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <ostream>
#include <set>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "io_util.h"
#include "pacfl/errors.h"
#include "pacfl/random.h"

namespace pacfl {
namespace {

namespace pt = boost::property_tree;

const std::map<std::string, std::set<std::string>>& known_keys() {
  static const std::map<std::string, std::set<std::string>> keys = {
      {"experiment", {"seed", "mode", "output"}},
      {"dataset",
       {"kind", "sources", "classes", "features", "samples_per_class", "mean_scale", "cov_scale",
        "clients_per_group", "samples_per_client", "paths", "label_column"}},
      {"partition",
       {"scheme", "clients", "test_fraction", "percent", "alpha", "clients_per_source",
        "samples_per_client"}},
      {"train",
       {"rounds", "sample_rate", "local_epochs", "batch_size", "learning_rate", "momentum", "beta",
        "p", "metric", "linkage", "normalize", "model", "hidden_width", "bytes_per_param",
        "threads"}},
      {"sweep", {"betas"}},
      {"newcomer", {"holdout_fraction", "finetune_epochs"}},
      {"consistency", {"dim", "samples", "p", "seeds", "normalize"}},
  };
  return keys;
}

// Typed access to one INI section. Every lookup names the field in errors.
class Section {
 public:
  Section(const pt::ptree* node, std::string name) : node_(node), name_(std::move(name)) {}

  std::optional<std::string> raw(const std::string& key) const {
    if (node_ == nullptr) return std::nullopt;
    auto v = node_->get_optional<std::string>(pt::ptree::path_type(key, '\0'));
    if (!v) return std::nullopt;
    std::string s = *v;
    while (!s.empty() && (s.back() == ' ' || s.back() == '\r')) s.pop_back();
    return s;
  }

  void get(const std::string& key, std::string& out) const {
    if (auto v = raw(key)) out = *v;
  }

  template <typename Int>
    requires std::is_integral_v<Int>
  void get(const std::string& key, Int& out) const {
    if (auto v = raw(key)) {
      if (!internal::parse_int(*v, out)) fail(key, "'" + *v + "' is not an integer");
    }
  }

  void get(const std::string& key, double& out) const {
    if (auto v = raw(key)) {
      if (!internal::parse_double(*v, out)) fail(key, "'" + *v + "' is not a number");
    }
  }

  void get_list(const std::string& key, std::vector<double>& out) const {
    if (auto v = raw(key)) {
      out.clear();
      for (const auto& f : internal::split(*v)) {
        double x;
        if (!internal::parse_double(f, x)) fail(key, "'" + f + "' is not a number");
        out.push_back(x);
      }
    }
  }

  void get_list(const std::string& key, std::vector<int>& out) const {
    if (auto v = raw(key)) {
      out.clear();
      for (const auto& f : internal::split(*v)) {
        int x;
        if (!internal::parse_int(f, x)) fail(key, "'" + f + "' is not an integer");
        out.push_back(x);
      }
    }
  }

  template <typename Enum, typename Parser>
  void get_enum(const std::string& key, Enum& out, Parser parse) const {
    if (auto v = raw(key)) {
      try {
        out = parse(*v);
      } catch (const ConfigError& e) {
        fail(key, e.what());
      }
    }
  }

  [[noreturn]] void fail(const std::string& key, const std::string& why) const {
    throw ConfigError("[" + name_ + "] " + key + ": " + why);
  }

 private:
  const pt::ptree* node_;
  std::string name_;
};

Section section(const pt::ptree& tree, const std::string& name) {
  auto child = tree.get_child_optional(name);
  return Section(child ? &*child : nullptr, name);
}

void check_known_keys(const pt::ptree& tree) {
  for (const auto& [name, node] : tree) {
    auto it = known_keys().find(name);
    if (it == known_keys().end()) {
      if (node.empty()) throw ConfigError("key '" + name + "' appears outside any section");
      throw ConfigError("unknown section [" + name + "]");
    }
    for (const auto& [key, value] : node) {
      if (!it->second.contains(key)) throw ConfigError("[" + name + "] " + key + ": unknown key");
    }
  }
}

void read_train(const Section& s, TrainConfig& t) {
  s.get("rounds", t.rounds);
  s.get("sample_rate", t.sample_rate);
  s.get("local_epochs", t.local_epochs);
  s.get("batch_size", t.batch_size);
  s.get("learning_rate", t.learning_rate);
  s.get("momentum", t.momentum);
  s.get("beta", t.beta);
  s.get("p", t.p);
  s.get_enum("metric", t.metric_kind, parse_metric_kind);
  s.get_enum("linkage", t.linkage, parse_linkage);
  s.get_enum("normalize", t.normalize, parse_normalization);
  s.get_enum("model", t.model, parse_model_kind);
  s.get("hidden_width", t.hidden_width);
  s.get("bytes_per_param", t.bytes_per_param);
  s.get("threads", t.threads);
}

void write_train(std::ostream& out, const TrainConfig& t) {
  out << "[train]\n"
      << "rounds = " << t.rounds << '\n'
      << "sample_rate = " << internal::format_double(t.sample_rate) << '\n'
      << "local_epochs = " << t.local_epochs << '\n'
      << "batch_size = " << t.batch_size << '\n'
      << "learning_rate = " << internal::format_double(t.learning_rate) << '\n'
      << "momentum = " << internal::format_double(t.momentum) << '\n'
      << "beta = " << internal::format_double(t.beta) << '\n'
      << "p = " << t.p << '\n'
      << "metric = " << to_string(t.metric_kind) << '\n'
      << "linkage = " << to_string(t.linkage) << '\n'
      << "normalize = " << to_string(t.normalize) << '\n'
      << "model = " << to_string(t.model) << '\n'
      << "hidden_width = " << t.hidden_width << '\n'
      << "bytes_per_param = " << t.bytes_per_param << '\n';
}

template <typename Fn>
void write_file(const std::filesystem::path& path, Fn&& fn) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  fn(out);
  out.flush();
  if (!out) throw IoError("write failed for " + path.string());
}

template <typename Fn>
auto read_file(const std::filesystem::path& path, Fn&& fn) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  return fn(in);
}

std::vector<int> even_split(int total, int parts) {
  std::vector<int> out(static_cast<std::size_t>(parts), total / parts);
  for (int i = 0; i < total % parts; ++i) ++out[static_cast<std::size_t>(i)];
  return out;
}

std::uint64_t signature_bytes(std::span<const ClientShard> shards, const TrainConfig& t) {
  CommCostInput in;
  in.n_clients = shards.size();
  in.feature_dim = static_cast<std::uint64_t>(shards.front().train.feature_dim());
  in.p = static_cast<std::uint64_t>(t.p);
  in.bytes_per_param = static_cast<std::uint64_t>(t.bytes_per_param);
  return comm_cost_model(in).signature;
}

SweepRow summarize(double beta, const FederationResult& r) {
  return {beta, r.clusters.num_clusters, r.mean_final_accuracy(), r.total_bytes()};
}

void write_federation_artifacts(const std::filesystem::path& dir, const FederationResult& r) {
  write_file(dir / "metrics.csv", [&](std::ostream& o) { write_metrics_csv(o, r.rounds); });
  write_file(dir / "clusters.csv", [&](std::ostream& o) { write_cluster_csv(o, r.clusters); });
}

void write_shard_manifests(const std::filesystem::path& dir, const ShardSplit& split) {
  write_file(dir / "shards.manifest", [&](std::ostream& o) { write_manifest(o, split.federated); });
  if (!split.newcomers.empty()) {
    write_file(dir / "newcomers.manifest",
               [&](std::ostream& o) { write_manifest(o, split.newcomers); });
  }
}

std::string model_file(int cluster) { return "cluster_" + std::to_string(cluster) + ".pacm"; }

}  // namespace

void ExperimentConfig::set_seed(std::uint64_t s) {
  seed = s;
  partition.seed = s;
  train.seed = s;
  consistency.seed = s;
}

void ExperimentConfig::validate() const {
  train.validate();
  const auto& d = dataset;
  if (d.kind == "gaussian") {
    if (d.sources < 1 || d.classes < 2 || d.features < 1 || d.samples_per_class < 1) {
      throw ConfigError("[dataset] gaussian needs sources >= 1, classes >= 2, features >= 1 and "
                        "samples_per_class >= 1");
    }
    if (!(d.cov_scale > 0.0)) throw ConfigError("[dataset] cov_scale: must be positive");
  } else if (d.kind == "conflicting") {
    if (d.clients_per_group < 1 || d.samples_per_client < 2 || d.features < 7) {
      throw ConfigError("[dataset] conflicting needs clients_per_group >= 1, "
                        "samples_per_client >= 2 and features >= 7");
    }
  } else if (d.kind == "csv") {
    if (d.paths.empty()) throw ConfigError("[dataset] paths: at least one CSV file is required");
    for (const auto& p : d.paths) {
      if (!std::filesystem::exists(p)) throw ConfigError("[dataset] paths: no such file " + p.string());
    }
  } else {
    throw ConfigError("[dataset] kind: '" + d.kind + "' (gaussian|conflicting|csv)");
  }
  if (d.kind != "conflicting") {
    try {
      partition.validate();
    } catch (const ConfigError& e) {
      throw ConfigError(std::string("[partition] ") + e.what());
    }
  }
  if (!std::is_sorted(beta_sweep.begin(), beta_sweep.end())) {
    throw ConfigError("[sweep] betas: must be in ascending order");
  }
  if (!(newcomer.holdout_fraction >= 0.0 && newcomer.holdout_fraction < 1.0)) {
    throw ConfigError("[newcomer] holdout_fraction: must lie in [0, 1)");
  }
  if (newcomer.finetune_epochs < 0) throw ConfigError("[newcomer] finetune_epochs: must be >= 0");
}

ExperimentConfig parse_config(std::istream& in, const std::filesystem::path& base_dir) {
  pt::ptree tree;
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError("config line " + std::to_string(e.line()) + ": " + e.message());
  }
  check_known_keys(tree);

  ExperimentConfig cfg;
  const auto exp = section(tree, "experiment");
  std::uint64_t seed = 0;
  exp.get("seed", seed);
  exp.get_enum("mode", cfg.mode, parse_federation_mode);
  std::string output;
  exp.get("output", output);
  if (!output.empty()) cfg.output_dir = output;

  const auto ds = section(tree, "dataset");
  auto& d = cfg.dataset;
  ds.get("kind", d.kind);
  ds.get("sources", d.sources);
  ds.get("classes", d.classes);
  ds.get("features", d.features);
  ds.get("samples_per_class", d.samples_per_class);
  ds.get("mean_scale", d.mean_scale);
  ds.get("cov_scale", d.cov_scale);
  ds.get("clients_per_group", d.clients_per_group);
  ds.get("samples_per_client", d.samples_per_client);
  ds.get("label_column", d.label_column);
  if (auto paths = ds.raw("paths")) {
    for (const auto& p : internal::split(*paths)) {
      std::filesystem::path path(p);
      d.paths.push_back(path.is_relative() && !base_dir.empty() ? base_dir / path : path);
    }
  }

  const auto part = section(tree, "partition");
  std::string scheme = "label_skew";
  part.get("scheme", scheme);
  part.get("clients", cfg.partition.n_clients);
  part.get("test_fraction", cfg.partition.test_fraction);
  if (scheme == "label_skew") {
    LabelSkew ls;
    part.get("percent", ls.percent);
    cfg.partition.scheme = ls;
  } else if (scheme == "dirichlet") {
    Dirichlet dir;
    part.get("alpha", dir.alpha);
    cfg.partition.scheme = dir;
  } else if (scheme == "mix") {
    Mix mix;
    part.get_list("clients_per_source", mix.dataset_client_counts);
    part.get("samples_per_client", mix.samples_per_client);
    if (mix.dataset_client_counts.empty()) {
      const int sources = d.kind == "csv" ? static_cast<int>(d.paths.size()) : d.sources;
      mix.dataset_client_counts = even_split(cfg.partition.n_clients, std::max(sources, 1));
    }
    cfg.partition.scheme = mix;
  } else {
    part.fail("scheme", "'" + scheme + "' (label_skew|dirichlet|mix)");
  }
  if (d.kind == "conflicting") cfg.partition.n_clients = 2 * d.clients_per_group;

  read_train(section(tree, "train"), cfg.train);
  section(tree, "sweep").get_list("betas", cfg.beta_sweep);

  const auto nc = section(tree, "newcomer");
  nc.get("holdout_fraction", cfg.newcomer.holdout_fraction);
  nc.get("finetune_epochs", cfg.newcomer.finetune_epochs);

  const auto cs = section(tree, "consistency");
  cs.get("dim", cfg.consistency.dim);
  cs.get("samples", cfg.consistency.samples);
  cs.get("p", cfg.consistency.p);
  cs.get("seeds", cfg.consistency.seeds);
  cs.get_enum("normalize", cfg.consistency.normalize, parse_normalization);

  cfg.set_seed(seed);
  cfg.validate();
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  try {
    return parse_config(in, path.parent_path());
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

ShardSplit hold_out_newcomers(std::vector<ClientShard> shards, double fraction) {
  ShardSplit split;
  if (fraction <= 0.0) {
    split.federated = std::move(shards);
    return split;
  }
  std::map<std::string, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < shards.size(); ++i) groups[shards[i].source_name].push_back(i);
  std::vector<bool> held(shards.size(), false);
  for (const auto& [name, idx] : groups) {
    const auto n = idx.size();
    auto k = static_cast<std::size_t>(std::lround(fraction * static_cast<double>(n)));
    k = std::min(k, n - 1);  // every source keeps at least one federated client
    for (std::size_t j = n - k; j < n; ++j) held[idx[j]] = true;
  }
  for (std::size_t i = 0; i < shards.size(); ++i) {
    (held[i] ? split.newcomers : split.federated).push_back(std::move(shards[i]));
  }
  return split;
}

ShardSplit build_shards(const ExperimentConfig& cfg) {
  const auto& d = cfg.dataset;
  std::vector<ClientShard> shards;
  if (d.kind == "conflicting") {
    shards = generate_conflicting_groups(d.clients_per_group, d.samples_per_client, d.features,
                                         cfg.partition.test_fraction, cfg.seed);
  } else {
    std::vector<LabeledDataset> sources;
    if (d.kind == "csv") {
      for (const auto& path : d.paths) {
        auto loaded = load_csv_dataset(path, d.label_column);
        loaded.dataset.name = path.stem().string();
        sources.push_back(std::move(loaded.dataset));
      }
      Eigen::Index dim = 0;
      for (const auto& s : sources) dim = std::max(dim, s.feature_dim());
      for (auto& s : sources) s = pad_features(s, dim);
    } else {
      for (int s = 0; s < d.sources; ++s) {
        sources.push_back(generate_gaussian_dataset(
            d.classes, d.features, d.samples_per_class, d.mean_scale, d.cov_scale,
            stream_seed(cfg.seed, fnv1a("dataset"), static_cast<std::uint64_t>(s)),
            d.sources == 1 ? "gaussian" : "source_" + std::to_string(s)));
      }
    }
    shards = partition(sources, cfg.partition);
  }
  return hold_out_newcomers(std::move(shards), cfg.newcomer.holdout_fraction);
}

SweepOutcome sweep_beta(std::span<const ClientShard> shards, const TrainConfig& train,
                        std::span<const double> betas, const ProximityBuilder& builder) {
  if (betas.empty()) throw ConfigError("[sweep] betas: list is empty");
  if (!std::is_sorted(betas.begin(), betas.end())) {
    throw ConfigError("[sweep] betas: must be in ascending order");
  }
  train.validate();
  SweepOutcome out;
  out.signatures = client_signatures(shards, train.p, train.normalize, train.threads);
  out.proximity = builder ? builder(out.signatures, train.metric_kind)
                          : build_proximity_matrix(out.signatures, train.metric_kind, train.threads);
  const std::uint64_t sig_bytes = signature_bytes(shards, train);
  for (double beta : betas) {
    auto [dendrogram, clusters] = hierarchical_cluster(out.proximity, beta, train.linkage);
    TrainConfig cfg = train;
    cfg.beta = beta;
    auto run = run_clustered(shards, cfg, clusters, sig_bytes);
    out.rows.push_back(summarize(beta, run));
    out.runs.push_back(std::move(run));
    out.dendrograms.push_back(std::move(dendrogram));
  }
  return out;
}

void write_summary_csv(std::ostream& out, std::span<const SweepRow> rows) {
  out << "beta,clusters,mean_accuracy,bytes_total\n";
  for (const auto& r : rows) {
    out << internal::format_double(r.beta) << ',' << r.clusters << ','
        << internal::format_double(r.mean_accuracy) << ',' << r.bytes_total << '\n';
  }
}

std::vector<SweepRow> read_summary_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != "beta,clusters,mean_accuracy,bytes_total") {
    throw ParseError("summary CSV: unexpected header");
  }
  std::vector<SweepRow> rows;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto f = internal::split(line);
    SweepRow r;
    if (f.size() != 4 || !internal::parse_double(f[0], r.beta) ||
        !internal::parse_int(f[1], r.clusters) || !internal::parse_double(f[2], r.mean_accuracy) ||
        !internal::parse_int(f[3], r.bytes_total)) {
      throw ParseError("summary CSV line " + std::to_string(line_no) + ": malformed row");
    }
    rows.push_back(r);
  }
  return rows;
}

void save_state(const std::filesystem::path& dir, const SavedState& state) {
  std::filesystem::create_directories(dir / "signatures");
  std::filesystem::create_directories(dir / "models");
  write_file(dir / "state.ini", [&](std::ostream& o) {
    o << "; pacfl saved federation state\n";
    write_train(o, state.train);
    o << "seed = " << state.train.seed << '\n';
  });
  write_file(dir / "proximity.csv", [&](std::ostream& o) { write_proximity_csv(o, state.proximity); });
  write_file(dir / "clusters.csv", [&](std::ostream& o) { write_cluster_csv(o, state.clusters); });
  for (const auto& sig : state.signatures) {
    save_signature(dir / "signatures" / (sig.client_id + ".pacs"), sig);
  }
  for (std::size_t z = 0; z < state.models.size(); ++z) {
    save_model(dir / "models" / model_file(static_cast<int>(z)), state.models[z]);
  }
}

SavedState load_state(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw IoError("no saved state at " + dir.string());
  SavedState s;
  read_file(dir / "state.ini", [&](std::istream& in) {
    pt::ptree tree;
    try {
      pt::read_ini(in, tree);
    } catch (const pt::ini_parser_error& e) {
      throw ParseError("state.ini line " + std::to_string(e.line()) + ": " + e.message());
    }
    const auto train = section(tree, "train");
    read_train(train, s.train);
    train.get("seed", s.train.seed);
    return 0;
  });
  s.proximity = read_file(dir / "proximity.csv", [&](std::istream& in) {
    return read_proximity_csv(in, s.train.metric_kind);
  });
  s.clusters = read_file(dir / "clusters.csv", [](std::istream& in) { return read_cluster_csv(in); });
  s.clusters.beta = s.train.beta;
  s.clusters.linkage = s.train.linkage;
  s.clusters.metric_kind = s.train.metric_kind;
  if (s.clusters.client_ids != s.proximity.client_ids) {
    throw ParseError("saved clusters and proximity matrix list different clients");
  }
  for (const auto& id : s.proximity.client_ids) {
    s.signatures.push_back(load_signature(dir / "signatures" / (id + ".pacs")));
  }
  for (int z = 0; z < s.clusters.num_clusters; ++z) {
    s.models.push_back(load_model(dir / "models" / model_file(z)));
  }
  return s;
}

std::vector<NewcomerOutcome> newcomer_workflow(const SavedState& state,
                                               std::span<const ClientShard> newcomers,
                                               int finetune_epochs) {
  std::vector<NewcomerOutcome> out;
  if (newcomers.empty()) return out;
  if (state.models.empty()) throw InvalidData("saved state has no cluster models");
  const auto& t = state.train;
  const auto sigs = client_signatures(newcomers, t.p, t.normalize, t.threads);
  const auto extended = pme_extend(state.proximity, state.signatures, sigs);
  const auto placed = assign_newcomers(state.clusters, extended.first, t.beta);

  const ModelParams fresh = init_model(state.models.front().arch, t.seed);
  TrainConfig tune = t;
  tune.local_epochs = std::max(finetune_epochs, 1);
  for (std::size_t i = 0; i < newcomers.size(); ++i) {
    const auto& shard = newcomers[i];
    const int z = placed.newcomer_clusters[i];
    const ModelParams& start =
        static_cast<std::size_t>(z) < state.models.size() ? state.models[static_cast<std::size_t>(z)] : fresh;
    const auto& eval = shard.test.size() > 0 ? shard.test : shard.train;
    NewcomerOutcome row{shard.client_id, z, accuracy(start, eval), std::nullopt};
    if (finetune_epochs > 0) {
      const auto tuned = local_update(start, shard, tune, stream_seed(t.seed, fnv1a("finetune"), i));
      row.accuracy_after = accuracy(tuned.params, eval);
    }
    out.push_back(std::move(row));
  }
  return out;
}

void write_newcomer_csv(std::ostream& out, std::span<const NewcomerOutcome> rows) {
  out << "client_id,cluster_id,accuracy_before,accuracy_after\n";
  for (const auto& r : rows) {
    out << r.client_id << ',' << r.cluster_id << ',' << internal::format_double(r.accuracy_before)
        << ',' << (r.accuracy_after ? internal::format_double(*r.accuracy_after) : "") << '\n';
  }
}

void write_consistency_csv(std::ostream& out, const ConsistencyReport& report) {
  static const char* kVariants[] = {"mean_x2", "mean_x3", "cov_x2", "cov_x5"};
  out << "seed,variant,min_angle,angle_trace_sum,bhattacharyya,kl\n";
  for (const auto& s : report.per_seed) {
    for (int v = 0; v < 4; ++v) {
      out << s.seed << ',' << kVariants[v] << ',' << internal::format_double(s.min_angle[v]) << ','
          << internal::format_double(s.angle_trace_sum[v]) << ','
          << internal::format_double(s.bhattacharyya[v]) << ',' << internal::format_double(s.kl[v])
          << '\n';
    }
  }
}

int cmd_partition(const ExperimentConfig& cfg, std::ostream& log) {
  const auto split = build_shards(cfg);
  write_shard_manifests(cfg.output_dir, split);
  log << "partitioned " << split.federated.size() << " clients";
  if (!split.newcomers.empty()) log << " (+" << split.newcomers.size() << " held out)";
  log << '\n';
  return 0;
}

int cmd_signature(const ExperimentConfig& cfg, std::ostream& log) {
  const auto split = build_shards(cfg);
  const auto& t = cfg.train;
  const auto sigs = client_signatures(split.federated, t.p, t.normalize, t.threads);
  std::filesystem::create_directories(cfg.output_dir / "signatures");
  for (const auto& sig : sigs) save_signature(cfg.output_dir / "signatures" / (sig.client_id + ".pacs"), sig);
  log << "wrote " << sigs.size() << " signatures (p=" << t.p << ")\n";
  return 0;
}

int cmd_cluster(const ExperimentConfig& cfg, std::ostream& log) {
  const auto split = build_shards(cfg);
  const auto& t = cfg.train;
  const auto sigs = client_signatures(split.federated, t.p, t.normalize, t.threads);
  const auto prox = build_proximity_matrix(sigs, t.metric_kind, t.threads);
  const auto [dendrogram, clusters] = hierarchical_cluster(prox, t.beta, t.linkage);
  write_file(cfg.output_dir / "proximity.csv", [&](std::ostream& o) { write_proximity_csv(o, prox); });
  write_file(cfg.output_dir / "dendrogram.txt", [&](std::ostream& o) { write_dendrogram(o, dendrogram); });
  write_file(cfg.output_dir / "clusters.csv", [&](std::ostream& o) { write_cluster_csv(o, clusters); });
  log << clusters.num_clusters << " clusters at beta=" << internal::format_double(t.beta) << '\n';
  return 0;
}

int cmd_train(const ExperimentConfig& cfg, std::ostream& log) {
  const auto split = build_shards(cfg);
  const auto& t = cfg.train;
  SweepOutcome sweep;
  FederationResult run;
  if (cfg.mode == FederationMode::kPacfl) {
    const std::array<double, 1> beta{t.beta};
    sweep = sweep_beta(split.federated, t, beta);
    run = std::move(sweep.runs.front());
  } else {
    // Baselines still report the geometry of the client signatures.
    sweep.signatures = client_signatures(split.federated, t.p, t.normalize, t.threads);
    sweep.proximity = build_proximity_matrix(sweep.signatures, t.metric_kind, t.threads);
    sweep.dendrograms.push_back(hierarchical_cluster(sweep.proximity, t.beta, t.linkage).first);
    run = run_federation(split.federated, t, cfg.mode);
  }
  const double summary_beta = cfg.mode == FederationMode::kPacfl ? t.beta : run.clusters.beta;
  const std::array<SweepRow, 1> rows{summarize(summary_beta, run)};

  const auto& dir = cfg.output_dir;
  write_shard_manifests(dir, split);
  write_file(dir / "proximity.csv", [&](std::ostream& o) { write_proximity_csv(o, sweep.proximity); });
  write_file(dir / "dendrogram.txt",
             [&](std::ostream& o) { write_dendrogram(o, sweep.dendrograms.front()); });
  write_federation_artifacts(dir, run);
  write_file(dir / "summary.csv", [&](std::ostream& o) { write_summary_csv(o, rows); });
  TrainConfig saved = t;
  saved.beta = summary_beta;
  save_state(dir / "state", SavedState{saved, sweep.proximity, sweep.signatures, run.clusters,
                                       run.cluster_models});
  log << to_string(cfg.mode) << ": " << run.clusters.num_clusters << " clusters, mean accuracy "
      << internal::format_double(rows[0].mean_accuracy) << ", " << rows[0].bytes_total << " bytes\n";
  return 0;
}

int cmd_sweep_beta(const ExperimentConfig& cfg, std::ostream& log) {
  if (cfg.beta_sweep.empty()) throw ConfigError("[sweep] betas: required for sweep-beta");
  const auto split = build_shards(cfg);
  const auto sweep = sweep_beta(split.federated, cfg.train, cfg.beta_sweep);
  const auto& dir = cfg.output_dir;
  write_shard_manifests(dir, split);
  write_file(dir / "proximity.csv", [&](std::ostream& o) { write_proximity_csv(o, sweep.proximity); });
  write_file(dir / "dendrogram.txt",
             [&](std::ostream& o) { write_dendrogram(o, sweep.dendrograms.front()); });
  write_file(dir / "summary.csv", [&](std::ostream& o) { write_summary_csv(o, sweep.rows); });
  for (std::size_t i = 0; i < sweep.runs.size(); ++i) {
    write_federation_artifacts(dir / "sweep" / ("beta_" + std::to_string(i)), sweep.runs[i]);
  }
  for (const auto& r : sweep.rows) {
    log << "beta=" << internal::format_double(r.beta) << " clusters=" << r.clusters
        << " accuracy=" << internal::format_double(r.mean_accuracy) << '\n';
  }
  return 0;
}

int cmd_newcomer(const ExperimentConfig& cfg, std::ostream& log) {
  const auto split = build_shards(cfg);
  const auto state = load_state(cfg.output_dir / "state");
  const auto rows = newcomer_workflow(state, split.newcomers, cfg.newcomer.finetune_epochs);
  write_file(cfg.output_dir / "newcomers.csv", [&](std::ostream& o) { write_newcomer_csv(o, rows); });
  for (const auto& r : rows) {
    log << r.client_id << " -> cluster " << r.cluster_id << ", accuracy "
        << internal::format_double(r.accuracy_before);
    if (r.accuracy_after) log << " -> " << internal::format_double(*r.accuracy_after);
    log << '\n';
  }
  if (rows.empty()) log << "no newcomers\n";
  return 0;
}

int cmd_consistency_report(const ExperimentConfig& cfg, std::ostream& log) {
  const auto report = run_consistency(cfg.consistency);
  write_file(cfg.output_dir / "consistency.csv",
             [&](std::ostream& o) { write_consistency_csv(o, report); });
  const auto n = report.per_seed.size();
  log << "mean shift ordered in " << report.mean_shift_consistent() << '/' << n << " seeds\n"
      << "covariance scale ordered in " << report.cov_scale_consistent() << '/' << n << " seeds\n"
      << "closed forms ordered: " << (report.closed_forms_ordered() ? "yes" : "no") << '\n';
  return 0;
}

int run_experiment(const ExperimentConfig& cfg, std::ostream& log) {
  return cfg.beta_sweep.empty() ? cmd_train(cfg, log) : cmd_sweep_beta(cfg, log);
}

}  // namespace pacfl
