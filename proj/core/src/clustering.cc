#include "pacfl/clustering.h"

#include <algorithm>
#include <cmath>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>

#include "io_util.h"
#include "pacfl/errors.h"
#include "pacfl/partition.h"
#include "pacfl/random.h"

namespace pacfl {
namespace {

void validate_proximity(const ProximityMatrix& a) {
  const auto k = a.entries.rows();
  if (k < 1 || a.entries.cols() != k) {
    throw DimensionError("proximity matrix must be square and non-empty");
  }
  if (!a.client_ids.empty() && static_cast<Eigen::Index>(a.client_ids.size()) != k) {
    throw DimensionError("proximity matrix has " + std::to_string(a.client_ids.size()) +
                         " ids for " + std::to_string(k) + " rows");
  }
  if (!a.entries.allFinite()) throw InvalidData("proximity matrix has non-finite entries");
  for (Eigen::Index i = 0; i < k; ++i) {
    if (std::abs(a.entries(i, i)) > 1e-9) {
      throw InvalidData("proximity matrix diagonal must be zero");
    }
    for (Eigen::Index j = i + 1; j < k; ++j) {
      if (std::abs(a.entries(i, j) - a.entries(j, i)) > 1e-9) {
        throw InvalidData("proximity matrix is not symmetric at (" + std::to_string(i) +
                          "," + std::to_string(j) + ")");
      }
      if (a.entries(i, j) < 0.0) throw InvalidData("negative proximity entry");
    }
  }
}

// Relabels raw group keys so clusters are numbered by smallest leaf.
std::vector<int> dense_by_first_leaf(const std::vector<int>& root) {
  std::vector<int> label(root.size(), -1);
  const int max_key = root.empty() ? 0 : *std::max_element(root.begin(), root.end());
  std::vector<int> map(static_cast<std::size_t>(max_key) + 1, -1);
  int next = 0;
  for (std::size_t leaf = 0; leaf < root.size(); ++leaf) {
    auto& m = map[static_cast<std::size_t>(root[leaf])];
    if (m < 0) m = next++;
    label[leaf] = m;
  }
  return label;
}

int find(std::vector<int>& parent, int x) {
  while (parent[static_cast<std::size_t>(x)] != x) {
    parent[static_cast<std::size_t>(x)] =
        parent[static_cast<std::size_t>(parent[static_cast<std::size_t>(x)])];
    x = parent[static_cast<std::size_t>(x)];
  }
  return x;
}

std::vector<std::string> ids_or_default(const ProximityMatrix& a) {
  if (!a.client_ids.empty()) return a.client_ids;
  std::vector<std::string> ids;
  const auto k = static_cast<int>(a.size());
  for (int i = 0; i < k; ++i) ids.push_back(client_name(i, k));
  return ids;
}

}  // namespace

std::string to_string(Linkage linkage) {
  switch (linkage) {
    case Linkage::kSingle:
      return "single";
    case Linkage::kComplete:
      return "complete";
    case Linkage::kAverage:
      return "average";
  }
  return "average";
}

Linkage parse_linkage(const std::string& s) {
  if (s == "single") return Linkage::kSingle;
  if (s == "complete") return Linkage::kComplete;
  if (s == "average") return Linkage::kAverage;
  throw ConfigError("unknown linkage '" + s + "' (single|complete|average)");
}

int ClusterState::cluster_of(const std::string& client_id) const {
  for (std::size_t i = 0; i < client_ids.size(); ++i) {
    if (client_ids[i] == client_id) return assignment[i];
  }
  return -1;
}

std::vector<std::vector<int>> ClusterState::members() const {
  std::vector<std::vector<int>> out(static_cast<std::size_t>(num_clusters));
  for (std::size_t i = 0; i < assignment.size(); ++i) {
    out[static_cast<std::size_t>(assignment[i])].push_back(static_cast<int>(i));
  }
  return out;
}

std::pair<Dendrogram, ClusterState> hierarchical_cluster(const ProximityMatrix& a,
                                                         double beta, Linkage linkage) {
  validate_proximity(a);
  if (!(beta >= 0.0)) throw ConfigError("beta must be >= 0");
  const auto k = static_cast<int>(a.size());

  Dendrogram dendro;
  dendro.leaf_count = k;
  // Slot s holds the active cluster whose smallest leaf is s.
  Matrix dist = a.entries;
  std::vector<bool> active(static_cast<std::size_t>(k), true);
  std::vector<int> sizes(static_cast<std::size_t>(k), 1);
  std::vector<int> node(static_cast<std::size_t>(k));
  std::iota(node.begin(), node.end(), 0);

  for (int step = 0; step + 1 < k; ++step) {
    int bi = -1;
    int bj = -1;
    double best = std::numeric_limits<double>::infinity();
    for (int i = 0; i < k; ++i) {
      if (!active[static_cast<std::size_t>(i)]) continue;
      for (int j = i + 1; j < k; ++j) {
        if (!active[static_cast<std::size_t>(j)]) continue;
        if (bi < 0 || dist(i, j) < best) {
          best = dist(i, j);
          bi = i;
          bj = j;
        }
      }
    }
    const auto ni = static_cast<double>(sizes[static_cast<std::size_t>(bi)]);
    const auto nj = static_cast<double>(sizes[static_cast<std::size_t>(bj)]);
    for (int m = 0; m < k; ++m) {
      if (!active[static_cast<std::size_t>(m)] || m == bi || m == bj) continue;
      const double di = dist(bi, m);
      const double dj = dist(bj, m);
      const double lo = std::min(di, dj);
      const double hi = std::max(di, dj);
      double merged = 0.0;
      switch (linkage) {
        case Linkage::kSingle:
          merged = lo;
          break;
        case Linkage::kComplete:
          merged = hi;
          break;
        case Linkage::kAverage:
          merged = std::clamp((ni * di + nj * dj) / (ni + nj), lo, hi);
          break;
      }
      dist(bi, m) = merged;
      dist(m, bi) = merged;
    }
    dendro.merges.push_back(Merge{node[static_cast<std::size_t>(bi)],
                                  node[static_cast<std::size_t>(bj)], best, k + step});
    node[static_cast<std::size_t>(bi)] = k + step;
    sizes[static_cast<std::size_t>(bi)] += sizes[static_cast<std::size_t>(bj)];
    active[static_cast<std::size_t>(bj)] = false;
  }

  ClusterState state;
  state.client_ids = ids_or_default(a);
  state.assignment = cut_dendrogram(dendro, beta);
  state.num_clusters =
      state.assignment.empty()
          ? 0
          : *std::max_element(state.assignment.begin(), state.assignment.end()) + 1;
  state.beta = beta;
  state.linkage = linkage;
  state.metric_kind = a.metric_kind;
  return {std::move(dendro), std::move(state)};
}

std::vector<int> cut_dendrogram(const Dendrogram& d, double beta) {
  const int k = d.leaf_count;
  std::vector<int> parent(static_cast<std::size_t>(std::max(2 * k - 1, 1)));
  std::iota(parent.begin(), parent.end(), 0);
  for (const auto& m : d.merges) {
    if (!(m.height <= beta)) continue;
    const int a = find(parent, m.left);
    const int b = find(parent, m.right);
    parent[static_cast<std::size_t>(a)] = m.node;
    parent[static_cast<std::size_t>(b)] = m.node;
  }
  std::vector<int> root(static_cast<std::size_t>(k));
  for (int leaf = 0; leaf < k; ++leaf) root[static_cast<std::size_t>(leaf)] = find(parent, leaf);
  return dense_by_first_leaf(root);
}

std::pair<ProximityMatrix, std::vector<SubspaceSignature>> pme_extend(
    const ProximityMatrix& a_old, std::span<const SubspaceSignature> sigs_old,
    std::span<const SubspaceSignature> sigs_new) {
  const auto m = a_old.size();
  if (static_cast<std::size_t>(m) != sigs_old.size()) {
    throw DimensionError("PME: old matrix is " + std::to_string(m) + "x" + std::to_string(m) +
                         " but " + std::to_string(sigs_old.size()) + " old signatures given");
  }
  if (m >= 2) {
    Rng rng = make_rng(stream_seed(static_cast<std::uint64_t>(m), fnv1a("pme-spot-check")));
    const auto i = static_cast<std::size_t>(uniform_index(rng, static_cast<std::uint64_t>(m)));
    auto j = static_cast<std::size_t>(uniform_index(rng, static_cast<std::uint64_t>(m - 1)));
    if (j >= i) ++j;
    const double expected = proximity_entry(sigs_old[i], sigs_old[j], a_old.metric_kind);
    const double stored =
        a_old.entries(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
    if (std::abs(expected - stored) > 1e-6 * std::max(1.0, std::abs(expected))) {
      throw ConfigError("PME: stored proximity (" + std::to_string(i) + "," +
                        std::to_string(j) + ") = " + internal::format_double(stored) +
                        " disagrees with " + to_string(a_old.metric_kind) +
                        " recomputation " + internal::format_double(expected) +
                        "; metric or signatures do not match the matrix");
    }
  }
  std::vector<SubspaceSignature> merged(sigs_old.begin(), sigs_old.end());
  merged.insert(merged.end(), sigs_new.begin(), sigs_new.end());
  const auto total = static_cast<Eigen::Index>(merged.size());

  ProximityMatrix out;
  out.metric_kind = a_old.metric_kind;
  out.client_ids = a_old.client_ids;
  for (const auto& s : sigs_new) out.client_ids.push_back(s.client_id);
  out.entries = Matrix::Zero(total, total);
  out.entries.topLeftCorner(m, m) = a_old.entries;
  for (Eigen::Index r = m; r < total; ++r) {
    for (Eigen::Index c = 0; c < r; ++c) {
      const double v = proximity_entry(merged[static_cast<std::size_t>(r)],
                                       merged[static_cast<std::size_t>(c)], out.metric_kind);
      out.entries(r, c) = v;
      out.entries(c, r) = v;
    }
  }
  return {std::move(out), std::move(merged)};
}

NewcomerAssignment assign_newcomers(const ClusterState& state,
                                    const ProximityMatrix& a_extended, double beta) {
  const auto old_count = state.client_ids.size();
  if (static_cast<std::size_t>(a_extended.size()) < old_count) {
    throw DimensionError("extended matrix is smaller than the federated client set");
  }
  if (beta != state.beta) {
    throw ConfigError("newcomers must be assigned with the original beta " +
                      internal::format_double(state.beta));
  }
  for (std::size_t i = 0; i < old_count && !a_extended.client_ids.empty(); ++i) {
    if (a_extended.client_ids[i] != state.client_ids[i]) {
      throw ConfigError("extended matrix row " + std::to_string(i) + " is '" +
                        a_extended.client_ids[i] + "', expected '" + state.client_ids[i] + "'");
    }
  }
  auto [dendro, fresh] = hierarchical_cluster(a_extended, beta, state.linkage);

  for (std::size_t i = 0; i < old_count; ++i) {
    for (std::size_t j = i + 1; j < old_count; ++j) {
      const bool before = state.assignment[i] == state.assignment[j];
      const bool after = fresh.assignment[i] == fresh.assignment[j];
      if (before != after) {
        throw ConsistencyError("re-clustering with beta=" + internal::format_double(beta) +
                               (before ? " separated " : " merged ") + state.client_ids[i] +
                               " and " + state.client_ids[j] +
                               "; beta sits on a merge boundary of the extended matrix");
      }
    }
  }

  std::vector<int> remap(static_cast<std::size_t>(fresh.num_clusters), -1);
  for (std::size_t i = 0; i < old_count; ++i) {
    remap[static_cast<std::size_t>(fresh.assignment[i])] = state.assignment[i];
  }
  int next = state.num_clusters;
  for (auto& r : remap) {
    if (r < 0) r = next++;
  }
  NewcomerAssignment out;
  out.state = state;
  out.state.client_ids = ids_or_default(a_extended);
  out.state.assignment.clear();
  for (int c : fresh.assignment) out.state.assignment.push_back(remap[static_cast<std::size_t>(c)]);
  out.state.num_clusters = next;
  for (std::size_t i = old_count; i < out.state.assignment.size(); ++i) {
    out.newcomer_clusters.push_back(out.state.assignment[i]);
  }
  return out;
}

void write_dendrogram(std::ostream& out, const Dendrogram& d) {
  out << "# leaves " << d.leaf_count << '\n';
  out << "# merge left right height node\n";
  for (std::size_t m = 0; m < d.merges.size(); ++m) {
    const auto& mg = d.merges[m];
    out << m << ' ' << mg.left << ' ' << mg.right << ' '
        << internal::format_double(mg.height) << ' ' << mg.node << '\n';
  }
}

Dendrogram read_dendrogram(std::istream& in) {
  Dendrogram d;
  std::string line;
  bool have_leaves = false;
  while (std::getline(in, line)) {
    if (line.rfind("# leaves ", 0) == 0) {
      if (!internal::parse_int(std::string_view(line).substr(9), d.leaf_count)) {
        throw ParseError("dendrogram: bad leaf count");
      }
      have_leaves = true;
      continue;
    }
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    std::size_t index;
    std::string height;
    Merge m;
    if (!(ls >> index >> m.left >> m.right >> height >> m.node) ||
        !internal::parse_double(height, m.height)) {
      throw ParseError("dendrogram: malformed line '" + line + "'");
    }
    d.merges.push_back(m);
  }
  if (!have_leaves) throw ParseError("dendrogram: missing '# leaves' header");
  return d;
}

void write_cluster_csv(std::ostream& out, const ClusterState& s) {
  out << "client_id,cluster_id\n";
  for (std::size_t i = 0; i < s.client_ids.size(); ++i) {
    out << s.client_ids[i] << ',' << s.assignment[i] << '\n';
  }
}

ClusterState read_cluster_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || internal::split(line) !=
                                     std::vector<std::string>{"client_id", "cluster_id"}) {
    throw ParseError("cluster CSV: expected header 'client_id,cluster_id'");
  }
  ClusterState s;
  int row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty()) continue;
    auto cells = internal::split(line);
    int c;
    if (cells.size() != 2 || !internal::parse_int(cells[1], c) || c < 0) {
      throw ParseError("cluster CSV row " + std::to_string(row) + ": malformed");
    }
    s.client_ids.push_back(cells[0]);
    s.assignment.push_back(c);
    s.num_clusters = std::max(s.num_clusters, c + 1);
  }
  return s;
}

}  // namespace pacfl
