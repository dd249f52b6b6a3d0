#ifndef PACFL_CLUSTERING_H_
#define PACFL_CLUSTERING_H_

#include <iosfwd>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "pacfl/subspace.h"

namespace pacfl {

enum class Linkage { kSingle, kComplete, kAverage };

std::string to_string(Linkage linkage);
Linkage parse_linkage(const std::string& s);

// Leaves are nodes 0..K-1; merge m creates node K+m.
struct Merge {
  int left = 0;
  int right = 0;
  double height = 0.0;
  int node = 0;
};

struct Dendrogram {
  std::vector<Merge> merges;
  int leaf_count = 0;
};

struct ClusterState {
  std::vector<std::string> client_ids;
  std::vector<int> assignment;  // parallel to client_ids, dense in [0, num_clusters)
  int num_clusters = 0;
  double beta = 0.0;
  Linkage linkage = Linkage::kAverage;
  MetricKind metric_kind = MetricKind::kMinAngle;

  int cluster_of(const std::string& client_id) const;  // -1 when unknown
  std::vector<std::vector<int>> members() const;       // client indices per cluster
};

// Full agglomeration plus the cut at `beta`.
//
// Each step merges the pair of active clusters with the smallest linkage
// distance; ties go to the lowest (i, j) pair, where clusters are indexed
// by their smallest leaf. Merges with height <= beta form the partition,
// and clusters are numbered in order of their smallest leaf.
std::pair<Dendrogram, ClusterState> hierarchical_cluster(const ProximityMatrix& a,
                                                         double beta,
                                                         Linkage linkage);

// Partition obtained by cutting an existing dendrogram at `beta`.
std::vector<int> cut_dendrogram(const Dendrogram& d, double beta);

// Grows the proximity matrix by the signatures in `sigs_new`. The old block
// is copied, the new rows/columns are computed with a_old.metric_kind.
std::pair<ProximityMatrix, std::vector<SubspaceSignature>> pme_extend(
    const ProximityMatrix& a_old, std::span<const SubspaceSignature> sigs_old,
    std::span<const SubspaceSignature> sigs_new);

struct NewcomerAssignment {
  ClusterState state;
  std::vector<int> newcomer_clusters;  // one per appended client, in order
};

// Re-clusters the extended matrix with the original threshold. Old cluster
// ids are kept; clusters made only of newcomers get fresh ids after the
// existing ones. Throws ConsistencyError when two old clients change
// co-membership.
NewcomerAssignment assign_newcomers(const ClusterState& state,
                                    const ProximityMatrix& a_extended, double beta);

// Text table, one merge per line: "<index> <left> <right> <height> <node>".
void write_dendrogram(std::ostream& out, const Dendrogram& d);
Dendrogram read_dendrogram(std::istream& in);

// CSV "client_id,cluster_id".
void write_cluster_csv(std::ostream& out, const ClusterState& s);
ClusterState read_cluster_csv(std::istream& in);

}  // namespace pacfl

#endif  // PACFL_CLUSTERING_H_
