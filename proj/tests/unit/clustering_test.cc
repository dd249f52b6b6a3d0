#include "pacfl/clustering.h"

#include <gtest/gtest.h>

#include <limits>
#include <sstream>

#include "pacfl/errors.h"
#include "reference.h"

namespace pacfl {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

ProximityMatrix matrix_of(Eigen::MatrixXd entries) {
  ProximityMatrix m;
  const auto k = entries.rows();
  m.entries = std::move(entries);
  for (Eigen::Index i = 0; i < k; ++i) m.client_ids.push_back("c" + std::to_string(i));
  return m;
}

Eigen::MatrixXd random_distances(int k, Rng& rng) {
  std::uniform_real_distribution<double> u(0.0, 90.0);
  Eigen::MatrixXd d = Eigen::MatrixXd::Zero(k, k);
  for (int i = 0; i < k; ++i) {
    for (int j = i + 1; j < k; ++j) d(i, j) = d(j, i) = u(rng);
  }
  return d;
}

// Five leaves: {0,1,2} at 5 degrees, {3,4} at 5 degrees, 80 across.
Eigen::MatrixXd block_matrix() {
  Eigen::MatrixXd d = Eigen::MatrixXd::Constant(5, 5, 80.0);
  d.topLeftCorner(3, 3).setConstant(5.0);
  d.bottomRightCorner(2, 2).setConstant(5.0);
  d.diagonal().setZero();
  return d;
}

SubspaceSignature random_sig(Rng& rng, const std::string& id) {
  return SubspaceSignature{id, testing::random_orthonormal(6, 2, rng), Eigen::Vector2d(2, 1)};
}

TEST(HierarchicalClusterTest, BetaAboveAllHeightsIsOneCluster) {
  Rng rng = make_rng(1);
  const auto m = matrix_of(random_distances(7, rng));
  for (auto linkage : {Linkage::kSingle, Linkage::kComplete, Linkage::kAverage}) {
    const auto [d, s] = hierarchical_cluster(m, 1000.0, linkage);
    EXPECT_EQ(s.num_clusters, 1);
    EXPECT_EQ(d.merges.size(), 6u);
    const auto [d2, s2] = hierarchical_cluster(m, kInf, linkage);
    EXPECT_EQ(s2.num_clusters, 1);
  }
}

TEST(HierarchicalClusterTest, BetaZeroIsSolo) {
  Rng rng = make_rng(2);
  const auto [d, s] = hierarchical_cluster(matrix_of(random_distances(6, rng)), 0.0, Linkage::kAverage);
  EXPECT_EQ(s.num_clusters, 6);
  for (int i = 0; i < 6; ++i) EXPECT_EQ(s.assignment[static_cast<std::size_t>(i)], i);
}

TEST(HierarchicalClusterTest, BlockMatrixAnyLinkage) {
  for (auto linkage : {Linkage::kSingle, Linkage::kComplete, Linkage::kAverage}) {
    const auto [d, s] = hierarchical_cluster(matrix_of(block_matrix()), 10.0, linkage);
    EXPECT_EQ(s.assignment, (std::vector<int>{0, 0, 0, 1, 1})) << to_string(linkage);
    EXPECT_EQ(s.num_clusters, 2);
  }
}

TEST(HierarchicalClusterTest, BlockPartitionIsTheOnlyValidOne) {
  // Enumerate every set partition of five leaves (Bell(5) = 52) and keep the
  // ones whose within-cluster distances are < beta and across > beta.
  const auto d = block_matrix();
  const double beta = 10.0;
  int valid = 0;
  std::vector<int> found;
  std::vector<int> labels(5, 0);
  std::function<void(int, int)> rec = [&](int i, int used) {
    if (i == 5) {
      bool ok = true;
      for (int a = 0; a < 5 && ok; ++a) {
        for (int b = a + 1; b < 5 && ok; ++b) {
          ok = labels[static_cast<std::size_t>(a)] == labels[static_cast<std::size_t>(b)] ? d(a, b) < beta : d(a, b) > beta;
        }
      }
      if (ok) ++valid, found = labels;
      return;
    }
    for (int c = 0; c <= used; ++c) {
      labels[static_cast<std::size_t>(i)] = c;
      rec(i + 1, std::max(used, c + 1));
    }
  };
  rec(0, 0);
  ASSERT_EQ(valid, 1);
  const auto [dend, s] = hierarchical_cluster(matrix_of(d), beta, Linkage::kAverage);
  EXPECT_EQ(s.assignment, found);
}

TEST(HierarchicalClusterTest, MatchesNaiveOracleOnFuzzedMatrices) {
  Rng rng = make_rng(3);
  const std::pair<Linkage, const char*> linkages[] = {
      {Linkage::kSingle, "single"}, {Linkage::kComplete, "complete"}, {Linkage::kAverage, "average"}};
  for (int trial = 0; trial < 40; ++trial) {
    const int k = 2 + trial % 9;
    const auto dist = random_distances(k, rng);
    std::uniform_real_distribution<double> b(0.0, 90.0);
    const double beta = b(rng);
    for (const auto& [linkage, name] : linkages) {
      const auto [d, s] = hierarchical_cluster(matrix_of(dist), beta, linkage);
      EXPECT_EQ(s.assignment, testing::naive_hc(dist, beta, name)) << name << " trial " << trial;
      const auto heights = testing::naive_hc_heights(dist, name);
      ASSERT_EQ(d.merges.size(), heights.size());
      for (std::size_t m = 0; m < heights.size(); ++m) EXPECT_NEAR(d.merges[m].height, heights[m], 1e-9);
    }
  }
}

TEST(HierarchicalClusterTest, SingleLinkageEqualsThresholdComponents) {
  Rng rng = make_rng(4);
  for (int trial = 0; trial < 30; ++trial) {
    const auto dist = random_distances(12, rng);
    const double beta = 10.0 + trial;
    const auto [d, s] = hierarchical_cluster(matrix_of(dist), beta, Linkage::kSingle);
    EXPECT_EQ(s.assignment, testing::threshold_components(dist, beta));
  }
}

TEST(HierarchicalClusterTest, DendrogramStructure) {
  Rng rng = make_rng(5);
  const auto [d, s] = hierarchical_cluster(matrix_of(random_distances(9, rng)), 30.0, Linkage::kAverage);
  EXPECT_EQ(d.leaf_count, 9);
  ASSERT_EQ(d.merges.size(), 8u);
  std::vector<int> used(17, 0);
  for (std::size_t m = 0; m < d.merges.size(); ++m) {
    EXPECT_EQ(d.merges[m].node, 9 + static_cast<int>(m));
    ++used[static_cast<std::size_t>(d.merges[m].left)];
    ++used[static_cast<std::size_t>(d.merges[m].right)];
    if (m > 0) EXPECT_GE(d.merges[m].height, d.merges[m - 1].height);
  }
  for (int node = 0; node < 16; ++node) EXPECT_EQ(used[static_cast<std::size_t>(node)], 1) << node;
  EXPECT_EQ(cut_dendrogram(d, 30.0), s.assignment);
}

TEST(HierarchicalClusterTest, ClusterCountNonincreasingInBeta) {
  Rng rng = make_rng(6);
  const auto m = matrix_of(random_distances(15, rng));
  int previous = 16;
  for (double beta = 0.0; beta <= 90.0; beta += 5.0) {
    const int z = hierarchical_cluster(m, beta, Linkage::kAverage).second.num_clusters;
    EXPECT_LE(z, previous);
    previous = z;
  }
}

TEST(HierarchicalClusterTest, RejectsInvalidMatrices) {
  Eigen::MatrixXd asym = block_matrix();
  asym(0, 1) += 1.0;
  EXPECT_THROW(hierarchical_cluster(matrix_of(asym), 1.0, Linkage::kAverage), InvalidData);
  Eigen::MatrixXd diag = block_matrix();
  diag(2, 2) = 1.0;
  EXPECT_THROW(hierarchical_cluster(matrix_of(diag), 1.0, Linkage::kAverage), InvalidData);
  EXPECT_THROW(hierarchical_cluster(matrix_of(block_matrix()), -1.0, Linkage::kAverage), ConfigError);
}

TEST(PmeTest, NoNewcomersIsIdentity) {
  Rng rng = make_rng(7);
  std::vector<SubspaceSignature> sigs;
  for (int i = 0; i < 4; ++i) sigs.push_back(random_sig(rng, "o" + std::to_string(i)));
  const auto a = build_proximity_matrix(sigs, MetricKind::kMinAngle);
  const auto [ext, all] = pme_extend(a, sigs, {});
  EXPECT_EQ(ext.entries, a.entries);
  EXPECT_EQ(ext.client_ids, a.client_ids);
  EXPECT_EQ(all.size(), 4u);
}

TEST(PmeTest, ExtendEqualsRebuild) {
  Rng rng = make_rng(8);
  for (auto kind : {MetricKind::kMinAngle, MetricKind::kAngleTraceSum}) {
    std::vector<SubspaceSignature> sigs;
    for (int i = 0; i < 9; ++i) sigs.push_back(random_sig(rng, "s" + std::to_string(i)));
    const std::span<const SubspaceSignature> all(sigs);
    const auto a_old = build_proximity_matrix(all.first(6), kind);
    const auto [ext, merged] = pme_extend(a_old, all.first(6), all.subspan(6));
    const auto rebuilt = build_proximity_matrix(all, kind);
    EXPECT_LT((ext.entries - rebuilt.entries).cwiseAbs().maxCoeff(), 1e-9);
    EXPECT_EQ(ext.client_ids, rebuilt.client_ids);
    EXPECT_EQ(merged.size(), 9u);
  }
}

TEST(PmeTest, DuplicateOfExistingClient) {
  Rng rng = make_rng(9);
  std::vector<SubspaceSignature> old{random_sig(rng, "a"), random_sig(rng, "b")};
  const auto a_old = build_proximity_matrix(old, MetricKind::kMinAngle);
  SubspaceSignature copy = old[1];
  copy.client_id = "b2";
  const std::vector<SubspaceSignature> fresh{copy};
  const auto [ext, merged] = pme_extend(a_old, old, fresh);
  EXPECT_EQ(ext.entries(2, 1), 0.0);
  EXPECT_EQ(ext.entries(2, 0), ext.entries(1, 0));
  EXPECT_EQ(ext.entries(2, 2), 0.0);
}

TEST(PmeTest, MetricMismatchIsConfigError) {
  Rng rng = make_rng(10);
  std::vector<SubspaceSignature> old{random_sig(rng, "a"), random_sig(rng, "b"), random_sig(rng, "c")};
  auto a_old = build_proximity_matrix(old, MetricKind::kAngleTraceSum);
  a_old.metric_kind = MetricKind::kMinAngle;  // label no longer matches the values
  const std::vector<SubspaceSignature> fresh{random_sig(rng, "d")};
  EXPECT_THROW(pme_extend(a_old, old, fresh), ConfigError);
}

ClusterState block_state(double beta) {
  return hierarchical_cluster(matrix_of(block_matrix()), beta, Linkage::kAverage).second;
}

TEST(AssignNewcomersTest, JoinsNearestCluster) {
  Eigen::MatrixXd ext = Eigen::MatrixXd::Constant(6, 6, 80.0);
  ext.topLeftCorner(5, 5) = block_matrix();
  ext(5, 0) = ext(0, 5) = ext(5, 1) = ext(1, 5) = ext(5, 2) = ext(2, 5) = 0.0;
  ext(5, 5) = 0.0;
  auto m = matrix_of(ext);
  const auto placed = assign_newcomers(block_state(10.0), m, 10.0);
  EXPECT_EQ(placed.newcomer_clusters, (std::vector<int>{0}));
  EXPECT_EQ(placed.state.num_clusters, 2);
}

TEST(AssignNewcomersTest, FarNewcomerOpensCluster) {
  Eigen::MatrixXd ext = Eigen::MatrixXd::Constant(6, 6, 85.0);
  ext.topLeftCorner(5, 5) = block_matrix();
  ext(5, 5) = 0.0;
  const auto placed = assign_newcomers(block_state(10.0), matrix_of(ext), 10.0);
  EXPECT_EQ(placed.newcomer_clusters, (std::vector<int>{2}));
  EXPECT_EQ(placed.state.num_clusters, 3);
  EXPECT_EQ(placed.state.assignment, (std::vector<int>{0, 0, 0, 1, 1, 2}));
}

TEST(AssignNewcomersTest, BridgingNewcomerIsConsistencyError) {
  // Under single linkage a newcomer 4 degrees from both blocks chains them.
  const auto state = hierarchical_cluster(matrix_of(block_matrix()), 10.0, Linkage::kSingle).second;
  Eigen::MatrixXd ext = Eigen::MatrixXd::Constant(6, 6, 4.0);
  ext.topLeftCorner(5, 5) = block_matrix();
  ext(5, 5) = 0.0;
  EXPECT_THROW(assign_newcomers(state, matrix_of(ext), 10.0), ConsistencyError);
}

TEST(AssignNewcomersTest, BetaMustMatch) {
  Eigen::MatrixXd ext = Eigen::MatrixXd::Constant(6, 6, 85.0);
  ext.topLeftCorner(5, 5) = block_matrix();
  ext(5, 5) = 0.0;
  EXPECT_THROW(assign_newcomers(block_state(10.0), matrix_of(ext), 20.0), ConfigError);
}

TEST(SerializationTest, DendrogramRoundTrip) {
  Rng rng = make_rng(11);
  const auto [d, s] = hierarchical_cluster(matrix_of(random_distances(8, rng)), 20.0, Linkage::kComplete);
  std::stringstream buf;
  write_dendrogram(buf, d);
  const auto back = read_dendrogram(buf);
  EXPECT_EQ(back.leaf_count, d.leaf_count);
  ASSERT_EQ(back.merges.size(), d.merges.size());
  for (std::size_t m = 0; m < d.merges.size(); ++m) {
    EXPECT_EQ(back.merges[m].left, d.merges[m].left);
    EXPECT_EQ(back.merges[m].right, d.merges[m].right);
    EXPECT_EQ(back.merges[m].height, d.merges[m].height);
    EXPECT_EQ(back.merges[m].node, d.merges[m].node);
  }
}

TEST(SerializationTest, ClusterCsvRoundTrip) {
  const auto s = block_state(10.0);
  std::stringstream buf;
  write_cluster_csv(buf, s);
  const auto back = read_cluster_csv(buf);
  EXPECT_EQ(back.client_ids, s.client_ids);
  EXPECT_EQ(back.assignment, s.assignment);
  EXPECT_EQ(back.num_clusters, s.num_clusters);
  std::stringstream bad("client_id,cluster_id\nc0,x\n");
  EXPECT_THROW(read_cluster_csv(bad), ParseError);
}

TEST(ClusterStateTest, Lookups) {
  const auto s = block_state(10.0);
  EXPECT_EQ(s.cluster_of("c4"), 1);
  EXPECT_EQ(s.cluster_of("nobody"), -1);
  const auto members = s.members();
  ASSERT_EQ(members.size(), 2u);
  EXPECT_EQ(members[1], (std::vector<int>{3, 4}));
}

}  // namespace
}  // namespace pacfl
