#include "pacfl/partition.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include "io_util.h"
#include "pacfl/errors.h"
#include "pacfl/random.h"

namespace pacfl {
namespace {

constexpr int kMaxPartitionAttempts = 100;

using Index = std::size_t;

// Largest-remainder apportionment of `total` over nonnegative weights.
// Ties in the remainder go to the lower index.
std::vector<Index> apportion(Index total, const std::vector<double>& weights) {
  const double sum = std::accumulate(weights.begin(), weights.end(), 0.0);
  std::vector<Index> counts(weights.size(), 0);
  if (weights.empty() || sum <= 0.0) return counts;
  std::vector<std::pair<double, Index>> remainders;
  Index assigned = 0;
  for (Index j = 0; j < weights.size(); ++j) {
    const double exact = static_cast<double>(total) * weights[j] / sum;
    counts[j] = static_cast<Index>(std::floor(exact));
    assigned += counts[j];
    remainders.emplace_back(exact - static_cast<double>(counts[j]), j);
  }
  std::stable_sort(remainders.begin(), remainders.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  for (Index r = 0; assigned < total; ++r) {
    ++counts[remainders[r % remainders.size()].second];
    ++assigned;
  }
  return counts;
}

struct Split {
  std::vector<Index> train;
  std::vector<Index> test;
};

// Train/test split of `indices` (rows of a dataset with `labels`). The test
// count is round(n * fraction), capped so train keeps at least one row.
// Stratified by label when every present label has at least two rows.
Split split_train_test(const std::vector<Index>& indices, const std::vector<int>& labels,
                       double test_fraction, Rng& rng) {
  const Index n = indices.size();
  Index total_test = static_cast<Index>(std::llround(static_cast<double>(n) * test_fraction));
  total_test = std::min(total_test, n - 1);

  std::map<int, std::vector<Index>> by_label;
  for (Index idx : indices) by_label[labels[idx]].push_back(idx);
  const bool stratified = std::all_of(by_label.begin(), by_label.end(),
                                      [](const auto& kv) { return kv.second.size() >= 2; });
  Split out;
  if (!stratified) {
    std::vector<Index> order = indices;
    shuffle(order.begin(), order.end(), rng);
    out.test.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(total_test));
    out.train.assign(order.begin() + static_cast<std::ptrdiff_t>(total_test), order.end());
  } else {
    std::vector<Index> quota;
    std::vector<std::pair<double, Index>> remainders;
    Index assigned = 0;
    Index slot = 0;
    for (const auto& [label, rows] : by_label) {
      const double exact = static_cast<double>(rows.size()) * test_fraction;
      Index q = std::min(static_cast<Index>(std::floor(exact)), rows.size() - 1);
      quota.push_back(q);
      assigned += q;
      remainders.emplace_back(exact - std::floor(exact), slot++);
    }
    std::stable_sort(remainders.begin(), remainders.end(),
                     [](const auto& a, const auto& b) { return a.first > b.first; });
    std::vector<Index> sizes;
    for (const auto& kv : by_label) sizes.push_back(kv.second.size());
    for (const auto& [rem, s] : remainders) {
      if (assigned >= total_test) break;
      if (quota[s] + 1 < sizes[s]) {
        ++quota[s];
        ++assigned;
      }
    }
    slot = 0;
    for (auto& [label, rows] : by_label) {
      shuffle(rows.begin(), rows.end(), rng);
      const auto q = static_cast<std::ptrdiff_t>(quota[slot++]);
      out.test.insert(out.test.end(), rows.begin(), rows.begin() + q);
      out.train.insert(out.train.end(), rows.begin() + q, rows.end());
    }
  }
  std::sort(out.train.begin(), out.train.end());
  std::sort(out.test.begin(), out.test.end());
  return out;
}

ClientShard make_shard(std::string client_id, const LabeledDataset& ds,
                       const std::vector<Index>& indices, double test_fraction,
                       Rng& rng, int label_offset = 0, int n_classes = 0) {
  auto split = split_train_test(indices, ds.labels, test_fraction, rng);
  ClientShard shard;
  shard.client_id = std::move(client_id);
  shard.source_name = ds.name;
  shard.train = subset(ds, split.train);
  shard.test = subset(ds, split.test);
  for (auto* part : {&shard.train, &shard.test}) {
    for (int& l : part->labels) l += label_offset;
    part->n_classes = n_classes > 0 ? n_classes : ds.n_classes;
    part->name = ds.name;
    shard.label_set.insert(part->labels.begin(), part->labels.end());
  }
  shard.train_indices = std::move(split.train);
  shard.test_indices = std::move(split.test);
  return shard;
}

std::vector<Index> rows_of_label(const LabeledDataset& ds, int label) {
  std::vector<Index> rows;
  for (Index i = 0; i < ds.labels.size(); ++i) {
    if (ds.labels[i] == label) rows.push_back(i);
  }
  return rows;
}

std::string join(const auto& values) {
  std::string s;
  for (const auto& v : values) {
    if (!s.empty()) s += ',';
    s += std::to_string(v);
  }
  return s;
}

}  // namespace

void LabeledDataset::validate() const {
  if (n_classes < 1) throw InvalidData(name + ": n_classes must be positive");
  if (static_cast<Index>(features.rows()) != labels.size()) {
    throw InvalidData(name + ": feature rows and label count differ");
  }
  for (int l : labels) {
    if (l < 0 || l >= n_classes) {
      throw InvalidData(name + ": label " + std::to_string(l) + " outside [0, " +
                        std::to_string(n_classes) + ")");
    }
  }
  if (!features.allFinite()) throw InvalidData(name + ": non-finite feature");
}

LabeledDataset subset(const LabeledDataset& ds, std::span<const std::size_t> indices) {
  LabeledDataset out;
  out.n_classes = ds.n_classes;
  out.name = ds.name;
  out.features.resize(static_cast<Eigen::Index>(indices.size()), ds.features.cols());
  out.labels.reserve(indices.size());
  for (Index r = 0; r < indices.size(); ++r) {
    out.features.row(static_cast<Eigen::Index>(r)) =
        ds.features.row(static_cast<Eigen::Index>(indices[r]));
    out.labels.push_back(ds.labels[indices[r]]);
  }
  return out;
}

void PartitionSpec::validate() const {
  if (n_clients < 1) throw ConfigError("n_clients must be >= 1");
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) {
    throw ConfigError("test_fraction must lie in (0, 1)");
  }
  if (const auto* ls = std::get_if<LabelSkew>(&scheme)) {
    if (!(ls->percent > 0.0 && ls->percent <= 100.0)) {
      throw ConfigError("label skew percent must lie in (0, 100]");
    }
  } else if (const auto* dir = std::get_if<Dirichlet>(&scheme)) {
    if (!(dir->alpha > 0.0)) throw ConfigError("dirichlet alpha must be > 0");
  } else if (const auto* mix = std::get_if<Mix>(&scheme)) {
    if (mix->samples_per_client < 1) throw ConfigError("samples_per_client must be >= 1");
    int total = 0;
    for (int c : mix->dataset_client_counts) {
      if (c < 0) throw ConfigError("mix client counts must be >= 0");
      total += c;
    }
    if (total != n_clients) {
      throw ConfigError("mix client counts sum to " + std::to_string(total) +
                        ", expected n_clients=" + std::to_string(n_clients));
    }
  }
}

std::string client_name(int index, int total) {
  const int width = std::max<int>(3, static_cast<int>(std::to_string(std::max(total - 1, 0)).size()));
  std::string digits = std::to_string(index);
  if (static_cast<int>(digits.size()) < width) {
    digits.insert(0, static_cast<std::size_t>(width) - digits.size(), '0');
  }
  return "client_" + digits;
}

LabeledDataset generate_gaussian_dataset(int n_classes, int n_features,
                                         int samples_per_class, double class_mean_scale,
                                         double covariance_scale, std::uint64_t seed,
                                         std::string name) {
  if (n_classes < 1 || n_features < 1 || samples_per_class < 1) {
    throw ConfigError("gaussian dataset: counts must be >= 1");
  }
  if (!(covariance_scale >= 0.0) || !std::isfinite(class_mean_scale)) {
    throw ConfigError("gaussian dataset: invalid scale");
  }
  Rng rng = make_rng(stream_seed(seed, fnv1a("gaussian-dataset")));
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::MatrixXd means(n_classes, n_features);
  for (int c = 0; c < n_classes; ++c) {
    for (int f = 0; f < n_features; ++f) means(c, f) = class_mean_scale * normal(rng);
  }
  const double sd = std::sqrt(covariance_scale);
  LabeledDataset ds;
  ds.name = std::move(name);
  ds.n_classes = n_classes;
  ds.features.resize(static_cast<Eigen::Index>(n_classes) * samples_per_class, n_features);
  Eigen::Index row = 0;
  for (int c = 0; c < n_classes; ++c) {
    for (int s = 0; s < samples_per_class; ++s, ++row) {
      for (int f = 0; f < n_features; ++f) {
        ds.features(row, f) = means(c, f) + sd * normal(rng);
      }
      ds.labels.push_back(c);
    }
  }
  return ds;
}

std::vector<ClientShard> generate_conflicting_groups(int clients_per_group,
                                                     int samples_per_client, int n_features,
                                                     double test_fraction,
                                                     std::uint64_t seed) {
  if (clients_per_group < 1 || samples_per_client < 2) {
    throw ConfigError("conflicting groups: need >= 1 client per group and >= 2 samples");
  }
  if (n_features < 7) throw ConfigError("conflicting groups: need n_features >= 7");
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) {
    throw ConfigError("test_fraction must lie in (0, 1)");
  }
  // Coordinate 0 carries the label; 1..3 are group A's dominant
  // directions, 4..6 group B's; the rest is low-variance noise. A seeded
  // rotation hides the axis alignment.
  constexpr double kGroupSd = 5.0;
  constexpr double kNoiseSd = 0.1;
  Rng rng = make_rng(stream_seed(seed, fnv1a("conflicting-groups")));
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::MatrixXd g(n_features, n_features);
  for (int i = 0; i < n_features; ++i) {
    for (int j = 0; j < n_features; ++j) g(i, j) = normal(rng);
  }
  const Eigen::MatrixXd rotation = Eigen::HouseholderQR<Eigen::MatrixXd>(g).householderQ();

  std::vector<ClientShard> shards;
  const int total = 2 * clients_per_group;
  for (int k = 0; k < total; ++k) {
    const bool group_b = k >= clients_per_group;
    LabeledDataset ds;
    ds.name = group_b ? "group_b" : "group_a";
    ds.n_classes = 2;
    Eigen::MatrixXd raw = Eigen::MatrixXd::Zero(samples_per_client, n_features);
    for (int s = 0; s < samples_per_client; ++s) {
      const int y = s % 2;  // balanced
      const int side = (y == 1) != group_b ? 1 : -1;
      raw(s, 0) = side * (0.5 + std::abs(normal(rng)));
      for (int f = 1; f < n_features; ++f) {
        const bool dominant = group_b ? (f >= 4 && f <= 6) : (f >= 1 && f <= 3);
        raw(s, f) = (dominant ? kGroupSd : kNoiseSd) * normal(rng);
      }
      ds.labels.push_back(y);
    }
    ds.features = raw * rotation.transpose();
    std::vector<Index> all(static_cast<Index>(samples_per_client));
    std::iota(all.begin(), all.end(), Index{0});
    Rng split_rng = make_rng(stream_seed(seed, fnv1a("conflicting-split"), k));
    shards.push_back(make_shard(client_name(k, total), ds, all, test_fraction, split_rng));
  }
  return shards;
}

CsvDataset load_csv_dataset(const std::filesystem::path& path,
                            const std::string& label_column) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open dataset " + path.string());
  std::string line;
  if (!std::getline(in, line) || line.find_first_not_of(" \t\r") == std::string::npos) {
    throw ParseError(path.string() + ": empty file, expected a header row");
  }
  const auto header = internal::split(line);
  const auto it = std::find(header.begin(), header.end(), label_column);
  if (it == header.end()) {
    throw ParseError(path.string() + ": no column named '" + label_column + "'");
  }
  const auto label_col = static_cast<Index>(it - header.begin());
  std::vector<std::vector<double>> rows;
  std::vector<long long> raw_labels;
  Index line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto cells = internal::split(line);
    if (cells.size() != header.size()) {
      throw ParseError(path.string() + ":" + std::to_string(line_no) + ": expected " +
                       std::to_string(header.size()) + " cells, got " +
                       std::to_string(cells.size()));
    }
    std::vector<double> feats;
    for (Index c = 0; c < cells.size(); ++c) {
      if (c == label_col) {
        long long l;
        if (!internal::parse_int(cells[c], l)) {
          throw ParseError(path.string() + ":" + std::to_string(line_no) + " column " +
                           std::to_string(c + 1) + ": label '" + cells[c] +
                           "' is not an integer");
        }
        raw_labels.push_back(l);
        continue;
      }
      double v;
      if (!internal::parse_double(cells[c], v) || !std::isfinite(v)) {
        throw ParseError(path.string() + ":" + std::to_string(line_no) + " column " +
                         std::to_string(c + 1) + ": '" + cells[c] + "' is not a number");
      }
      feats.push_back(v);
    }
    rows.push_back(std::move(feats));
  }
  if (rows.empty()) throw ParseError(path.string() + ": no data rows");

  CsvDataset out;
  out.original_labels = raw_labels;
  std::sort(out.original_labels.begin(), out.original_labels.end());
  out.original_labels.erase(std::unique(out.original_labels.begin(), out.original_labels.end()),
                            out.original_labels.end());
  auto& ds = out.dataset;
  ds.name = path.stem().string();
  ds.n_classes = static_cast<int>(out.original_labels.size());
  ds.features.resize(static_cast<Eigen::Index>(rows.size()),
                     static_cast<Eigen::Index>(header.size() - 1));
  for (Index r = 0; r < rows.size(); ++r) {
    for (Index c = 0; c < rows[r].size(); ++c) {
      ds.features(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
    }
    const auto pos = std::lower_bound(out.original_labels.begin(), out.original_labels.end(),
                                      raw_labels[r]);
    ds.labels.push_back(static_cast<int>(pos - out.original_labels.begin()));
  }
  return out;
}

void write_csv_dataset(const std::filesystem::path& path, const LabeledDataset& ds,
                       const std::string& label_column) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  for (Eigen::Index f = 0; f < ds.features.cols(); ++f) out << 'f' << f << ',';
  out << label_column << '\n';
  for (Eigen::Index r = 0; r < ds.features.rows(); ++r) {
    for (Eigen::Index f = 0; f < ds.features.cols(); ++f) {
      out << internal::format_double(ds.features(r, f)) << ',';
    }
    out << ds.labels[static_cast<Index>(r)] << '\n';
  }
}

LabeledDataset pad_features(const LabeledDataset& ds, Eigen::Index feature_dim) {
  if (feature_dim < ds.features.cols()) {
    throw DimensionError("pad_features: target dim below current dim");
  }
  LabeledDataset out = ds;
  out.features = Eigen::MatrixXd::Zero(ds.features.rows(), feature_dim);
  out.features.leftCols(ds.features.cols()) = ds.features;
  return out;
}

std::vector<ClientShard> label_skew_partition(const LabeledDataset& ds,
                                              const PartitionSpec& spec) {
  spec.validate();
  const auto& skew = std::get<LabelSkew>(spec.scheme);
  const int n_classes = ds.n_classes;
  const int per_client = std::max(
      1, static_cast<int>(std::ceil(skew.percent / 100.0 * n_classes - 1e-9)));
  const int n = spec.n_clients;

  Rng rng = make_rng(stream_seed(spec.seed, fnv1a("label-skew")));
  std::vector<std::vector<int>> owned;
  bool covered = false;
  for (int attempt = 0; attempt < kMaxPartitionAttempts && !covered; ++attempt) {
    owned.assign(static_cast<Index>(n), {});
    std::vector<int> owners(static_cast<Index>(n_classes), 0);
    for (int k = 0; k < n; ++k) {
      std::vector<int> labels(static_cast<Index>(n_classes));
      std::iota(labels.begin(), labels.end(), 0);
      shuffle(labels.begin(), labels.end(), rng);
      labels.resize(static_cast<Index>(per_client));
      std::sort(labels.begin(), labels.end());
      for (int l : labels) ++owners[static_cast<Index>(l)];
      owned[static_cast<Index>(k)] = std::move(labels);
    }
    covered = std::all_of(owners.begin(), owners.end(), [](int o) { return o > 0; });
  }
  if (!covered) {
    throw PartitionError("label skew: some label stayed unassigned after " + std::to_string(kMaxPartitionAttempts) + " attempts (" +
                         std::to_string(n) + " clients x " + std::to_string(per_client) +
                         " labels for " + std::to_string(n_classes) + " classes)");
  }

  std::vector<std::vector<Index>> client_rows(static_cast<Index>(n));
  for (int l = 0; l < n_classes; ++l) {
    std::vector<int> owners;
    for (int k = 0; k < n; ++k) {
      const auto& o = owned[static_cast<Index>(k)];
      if (std::binary_search(o.begin(), o.end(), l)) owners.push_back(k);
    }
    auto rows = rows_of_label(ds, l);
    if (rows.size() < owners.size()) {
      throw PartitionError("label skew: label " + std::to_string(l) + " has " +
                           std::to_string(rows.size()) + " samples for " +
                           std::to_string(owners.size()) + " owners");
    }
    shuffle(rows.begin(), rows.end(), rng);
    const Index base = rows.size() / owners.size();
    const Index extra = rows.size() % owners.size();
    Index pos = 0;
    for (Index o = 0; o < owners.size(); ++o) {
      const Index take = base + (o < extra ? 1 : 0);
      auto& dst = client_rows[static_cast<Index>(owners[o])];
      dst.insert(dst.end(), rows.begin() + static_cast<std::ptrdiff_t>(pos),
                 rows.begin() + static_cast<std::ptrdiff_t>(pos + take));
      pos += take;
    }
  }

  std::vector<ClientShard> shards;
  for (int k = 0; k < n; ++k) {
    auto& rows = client_rows[static_cast<Index>(k)];
    std::sort(rows.begin(), rows.end());
    Rng split_rng = make_rng(stream_seed(spec.seed, fnv1a("label-skew-split"), k));
    shards.push_back(make_shard(client_name(k, n), ds, rows, spec.test_fraction, split_rng));
  }
  return shards;
}

std::vector<ClientShard> dirichlet_partition(const LabeledDataset& ds,
                                             const PartitionSpec& spec) {
  spec.validate();
  const double alpha = std::get<Dirichlet>(spec.scheme).alpha;
  const int n = spec.n_clients;
  Rng rng = make_rng(stream_seed(spec.seed, fnv1a("dirichlet")));
  std::gamma_distribution<double> gamma(alpha, 1.0);

  // Small alpha can starve a client entirely; redraw the whole assignment
  // a bounded number of times before giving up.
  std::vector<std::vector<Index>> client_rows;
  std::vector<std::string> empty;
  for (int attempt = 0; attempt < kMaxPartitionAttempts; ++attempt) {
    client_rows.assign(static_cast<Index>(n), {});
    for (int c = 0; c < ds.n_classes; ++c) {
      std::vector<double> props(static_cast<Index>(n));
      for (auto& p : props) p = gamma(rng);
      if (std::accumulate(props.begin(), props.end(), 0.0) <= 0.0) {
        // Every draw underflowed; the limit of Dir(alpha -> 0) is a vertex.
        props[uniform_index(rng, static_cast<std::uint64_t>(n))] = 1.0;
      }
      auto rows = rows_of_label(ds, c);
      shuffle(rows.begin(), rows.end(), rng);
      const auto counts = apportion(rows.size(), props);
      Index pos = 0;
      for (int k = 0; k < n; ++k) {
        const Index take = counts[static_cast<Index>(k)];
        auto& dst = client_rows[static_cast<Index>(k)];
        dst.insert(dst.end(), rows.begin() + static_cast<std::ptrdiff_t>(pos),
                   rows.begin() + static_cast<std::ptrdiff_t>(pos + take));
        pos += take;
      }
    }
    empty.clear();
    for (int k = 0; k < n; ++k) {
      if (client_rows[static_cast<Index>(k)].empty()) empty.push_back(client_name(k, n));
    }
    if (empty.empty()) break;
  }
  if (!empty.empty()) {
    std::string list;
    for (const auto& e : empty) list += (list.empty() ? "" : ", ") + e;
    throw PartitionError("dirichlet: clients with zero training samples after " +
                         std::to_string(kMaxPartitionAttempts) + " draws: " + list);
  }
  std::vector<ClientShard> shards;
  for (int k = 0; k < n; ++k) {
    auto& rows = client_rows[static_cast<Index>(k)];
    std::sort(rows.begin(), rows.end());
    Rng split_rng = make_rng(stream_seed(spec.seed, fnv1a("dirichlet-split"), k));
    shards.push_back(make_shard(client_name(k, n), ds, rows, spec.test_fraction, split_rng));
  }
  return shards;
}

std::vector<ClientShard> mix_partition(std::span<const LabeledDataset> datasets,
                                       const PartitionSpec& spec) {
  spec.validate();
  const auto& mix = std::get<Mix>(spec.scheme);
  if (mix.dataset_client_counts.size() != datasets.size()) {
    throw ConfigError("mix: " + std::to_string(mix.dataset_client_counts.size()) +
                      " client counts for " + std::to_string(datasets.size()) + " datasets");
  }
  std::vector<int> offsets;
  int total_classes = 0;
  for (const auto& ds : datasets) {
    offsets.push_back(total_classes);
    total_classes += ds.n_classes;
    if (ds.feature_dim() != datasets[0].feature_dim()) {
      throw DimensionError("mix: datasets must share feature_dim (see pad_features)");
    }
  }
  const int n = spec.n_clients;
  std::vector<ClientShard> shards;
  int client = 0;
  for (Index d = 0; d < datasets.size(); ++d) {
    const auto& ds = datasets[d];
    const int count = mix.dataset_client_counts[d];
    if (count == 0) continue;
    Rng rng = make_rng(stream_seed(spec.seed, fnv1a("mix"), d));
    std::vector<std::vector<Index>> pools;
    for (int c = 0; c < ds.n_classes; ++c) {
      auto rows = rows_of_label(ds, c);
      shuffle(rows.begin(), rows.end(), rng);
      pools.push_back(std::move(rows));
    }
    std::vector<Index> cursor(pools.size(), 0);
    const auto per_class = static_cast<Index>(mix.samples_per_client / ds.n_classes);
    const auto extra = static_cast<Index>(mix.samples_per_client % ds.n_classes);
    for (int j = 0; j < count; ++j, ++client) {
      std::vector<Index> rows;
      for (Index c = 0; c < pools.size(); ++c) {
        // Rotate which classes receive the remainder samples.
        const Index slot = (c + pools.size() - static_cast<Index>(j) % pools.size()) % pools.size();
        const Index take = per_class + (slot < extra ? 1 : 0);
        if (cursor[c] + take > pools[c].size()) {
          throw PartitionError("mix: dataset '" + ds.name + "' class " + std::to_string(c) +
                               " has too few samples for " + std::to_string(count) +
                               " clients of " + std::to_string(mix.samples_per_client));
        }
        rows.insert(rows.end(), pools[c].begin() + static_cast<std::ptrdiff_t>(cursor[c]),
                    pools[c].begin() + static_cast<std::ptrdiff_t>(cursor[c] + take));
        cursor[c] += take;
      }
      std::sort(rows.begin(), rows.end());
      Rng split_rng = make_rng(stream_seed(spec.seed, fnv1a("mix-split"), client));
      shards.push_back(make_shard(client_name(client, n), ds, rows, spec.test_fraction,
                                  split_rng, offsets[d], total_classes));
    }
  }
  return shards;
}

std::vector<ClientShard> partition(std::span<const LabeledDataset> datasets,
                                   const PartitionSpec& spec) {
  if (datasets.empty()) throw ConfigError("partition: no datasets");
  if (std::holds_alternative<Mix>(spec.scheme)) return mix_partition(datasets, spec);
  if (std::holds_alternative<Dirichlet>(spec.scheme)) {
    return dirichlet_partition(datasets[0], spec);
  }
  return label_skew_partition(datasets[0], spec);
}

void write_manifest(std::ostream& out, std::span<const ClientShard> shards) {
  out << "# pacfl shard manifest v1\n";
  for (const auto& s : shards) {
    out << "client " << s.client_id << " source=" << s.source_name
        << " labels=" << join(s.label_set) << " train=" << join(s.train_indices)
        << " test=" << join(s.test_indices) << '\n';
  }
}

std::vector<ManifestEntry> read_manifest(std::istream& in) {
  std::vector<ManifestEntry> entries;
  std::string line;
  int line_no = 0;
  auto parse_list = [&](const std::string& value, auto& dst) {
    if (value.empty()) return;
    for (const auto& cell : internal::split(value)) {
      long long v;
      if (!internal::parse_int(cell, v) || v < 0) {
        throw ParseError("manifest line " + std::to_string(line_no) + ": bad index '" +
                         cell + "'");
      }
      using T = typename std::decay_t<decltype(dst)>::value_type;
      dst.insert(dst.end(), static_cast<T>(v));
    }
  };
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    std::string tag;
    ManifestEntry e;
    ls >> tag >> e.client_id;
    if (tag != "client" || e.client_id.empty()) {
      throw ParseError("manifest line " + std::to_string(line_no) + ": expected 'client <id>'");
    }
    std::string field;
    while (ls >> field) {
      const auto eq = field.find('=');
      if (eq == std::string::npos) {
        throw ParseError("manifest line " + std::to_string(line_no) + ": bad field '" +
                         field + "'");
      }
      const auto key = field.substr(0, eq);
      const auto value = field.substr(eq + 1);
      if (key == "source") {
        e.source_name = value;
      } else if (key == "labels") {
        parse_list(value, e.label_set);
      } else if (key == "train") {
        parse_list(value, e.train_indices);
      } else if (key == "test") {
        parse_list(value, e.test_indices);
      } else {
        throw ParseError("manifest line " + std::to_string(line_no) + ": unknown key '" +
                         key + "'");
      }
    }
    entries.push_back(std::move(e));
  }
  return entries;
}

}  // namespace pacfl
