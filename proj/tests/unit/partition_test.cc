#include "pacfl/partition.h"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include "pacfl/errors.h"

namespace pacfl {
namespace {

std::filesystem::path temp_file(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / "pacfl_partition_test";
  std::filesystem::create_directories(dir);
  return dir / name;
}

// Every index in [0, n) appears exactly once across all shards.
void expect_exact_cover(const std::vector<ClientShard>& shards, std::size_t n) {
  std::vector<int> seen(n, 0);
  for (const auto& s : shards) {
    for (auto i : s.train_indices) ++seen.at(i);
    for (auto i : s.test_indices) ++seen.at(i);
  }
  for (std::size_t i = 0; i < n; ++i) EXPECT_EQ(seen[i], 1) << "index " << i;
}

void expect_label_sets_match(const std::vector<ClientShard>& shards) {
  for (const auto& s : shards) {
    std::set<int> present(s.train.labels.begin(), s.train.labels.end());
    present.insert(s.test.labels.begin(), s.test.labels.end());
    EXPECT_EQ(present, s.label_set) << s.client_id;
    EXPECT_GE(s.train.size(), 1u);
  }
}

PartitionSpec spec_with(std::variant<LabelSkew, Dirichlet, Mix> scheme, int clients, std::uint64_t seed) {
  PartitionSpec spec;
  spec.scheme = scheme;
  spec.n_clients = clients;
  spec.seed = seed;
  return spec;
}

TEST(GaussianDatasetTest, SingleClass) {
  const auto ds = generate_gaussian_dataset(1, 4, 5, 1.0, 1.0, 0);
  EXPECT_EQ(ds.size(), 5u);
  for (int y : ds.labels) EXPECT_EQ(y, 0);
}

TEST(GaussianDatasetTest, DeterministicBytes) {
  const auto a = generate_gaussian_dataset(3, 6, 20, 2.0, 0.5, 42);
  const auto b = generate_gaussian_dataset(3, 6, 20, 2.0, 0.5, 42);
  EXPECT_EQ(a.features, b.features);
  EXPECT_EQ(a.labels, b.labels);
  const auto c = generate_gaussian_dataset(3, 6, 20, 2.0, 0.5, 43);
  EXPECT_NE(a.features, c.features);
}

TEST(GaussianDatasetTest, ZeroMeanScaleCentersClasses) {
  const int n = 400;
  const double sigma = 1.5;
  const auto ds = generate_gaussian_dataset(2, 5, n, 0.0, sigma * sigma, 9);
  for (int c = 0; c < 2; ++c) {
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(5);
    for (std::size_t r = 0; r < ds.size(); ++r) {
      if (ds.labels[r] == c) mean += ds.features.row(static_cast<Eigen::Index>(r)).transpose();
    }
    mean /= n;
    EXPECT_LT(mean.cwiseAbs().maxCoeff(), 4.0 * sigma / std::sqrt(static_cast<double>(n)));
  }
}

TEST(CsvDatasetTest, DenseLabelRemap) {
  const auto path = temp_file("remap.csv");
  std::ofstream(path) << "x,label,y\n1,5,2\n3,5,4\n5,7,6\n";
  const auto loaded = load_csv_dataset(path, "label");
  EXPECT_EQ(loaded.dataset.n_classes, 2);
  EXPECT_EQ(loaded.dataset.labels, (std::vector<int>{0, 0, 1}));
  EXPECT_EQ(loaded.original_labels, (std::vector<long long>{5, 7}));
  EXPECT_EQ(loaded.dataset.feature_dim(), 2);
  EXPECT_EQ(loaded.dataset.features(2, 1), 6.0);
}

TEST(CsvDatasetTest, ErrorsCarryLocation) {
  const auto empty = temp_file("empty.csv");
  std::ofstream(empty).close();
  EXPECT_THROW(load_csv_dataset(empty, "label"), ParseError);
  EXPECT_THROW(load_csv_dataset(temp_file("missing.csv"), "label"), IoError);

  const auto bad = temp_file("bad.csv");
  std::ofstream(bad) << "a,label\n1,0\nfoo,1\n";
  try {
    load_csv_dataset(bad, "label");
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find(":3 "), std::string::npos) << msg;
    EXPECT_NE(msg.find("column 1"), std::string::npos) << msg;
  }

  const auto no_label = temp_file("nolabel.csv");
  std::ofstream(no_label) << "a,b\n1,2\n";
  EXPECT_THROW(load_csv_dataset(no_label, "label"), ParseError);
}

TEST(CsvDatasetTest, WriteLoadRoundTrip) {
  const auto ds = generate_gaussian_dataset(3, 4, 7, 1.0, 1.0, 5);
  const auto path = temp_file("round.csv");
  write_csv_dataset(path, ds);
  const auto back = load_csv_dataset(path, "label");
  EXPECT_EQ(back.dataset.features, ds.features);
  EXPECT_EQ(back.dataset.labels, ds.labels);
  EXPECT_EQ(back.dataset.n_classes, ds.n_classes);
}

TEST(PadFeaturesTest, AppendsZeroColumns) {
  const auto ds = generate_gaussian_dataset(2, 3, 4, 1.0, 1.0, 1);
  const auto padded = pad_features(ds, 5);
  EXPECT_EQ(padded.feature_dim(), 5);
  EXPECT_EQ(padded.features.leftCols(3), ds.features);
  EXPECT_TRUE(padded.features.rightCols(2).isZero());
  EXPECT_THROW(pad_features(ds, 2), DimensionError);
}

TEST(LabelSkewTest, TwentyPercentOfTenClassesIsTwoLabels) {
  const auto ds = generate_gaussian_dataset(10, 4, 60, 2.0, 1.0, 3);
  const auto shards = label_skew_partition(ds, spec_with(LabelSkew{20.0}, 20, 3));
  ASSERT_EQ(shards.size(), 20u);
  for (const auto& s : shards) EXPECT_EQ(s.label_set.size(), 2u) << s.client_id;
  expect_exact_cover(shards, ds.size());
  expect_label_sets_match(shards);
}

TEST(LabelSkewTest, FullPercentGivesAllLabels) {
  const auto ds = generate_gaussian_dataset(5, 3, 40, 2.0, 1.0, 4);
  const auto shards = label_skew_partition(ds, spec_with(LabelSkew{100.0}, 6, 4));
  for (const auto& s : shards) EXPECT_EQ(s.label_set.size(), 5u);
  expect_exact_cover(shards, ds.size());
}

TEST(LabelSkewTest, ImpossibleCoverageFails) {
  // One client holding one of ten labels cannot cover the label space.
  const auto ds = generate_gaussian_dataset(10, 2, 5, 1.0, 1.0, 0);
  EXPECT_THROW(label_skew_partition(ds, spec_with(LabelSkew{10.0}, 1, 0)), PartitionError);
}

TEST(DirichletTest, LargeAlphaIsNearlyUniform) {
  const auto ds = generate_gaussian_dataset(4, 3, 1000, 1.0, 1.0, 8);
  const auto shards = dirichlet_partition(ds, spec_with(Dirichlet{10000.0}, 5, 8));
  expect_exact_cover(shards, ds.size());
  for (const auto& s : shards) {
    std::map<int, double> counts;
    for (int y : s.train.labels) counts[y] += 1;
    for (int y : s.test.labels) counts[y] += 1;
    const double total = static_cast<double>(s.train.size() + s.test.size());
    for (int c = 0; c < 4; ++c) EXPECT_NEAR(counts[c] / total, 0.25, 0.05) << s.client_id;
  }
}

TEST(DirichletTest, SmallAlphaConcentratesMass) {
  const auto ds = generate_gaussian_dataset(10, 3, 100, 1.0, 1.0, 2);
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto shards = dirichlet_partition(ds, spec_with(Dirichlet{0.1}, 10, seed));
    expect_exact_cover(shards, ds.size());
    bool concentrated = false;
    for (const auto& s : shards) {
      std::vector<double> counts(10, 0.0);
      for (int y : s.train.labels) counts[static_cast<std::size_t>(y)] += 1;
      for (int y : s.test.labels) counts[static_cast<std::size_t>(y)] += 1;
      std::sort(counts.rbegin(), counts.rend());
      const double total = std::accumulate(counts.begin(), counts.end(), 0.0);
      if (counts[0] + counts[1] >= 0.8 * total) concentrated = true;
    }
    EXPECT_TRUE(concentrated) << "seed " << seed;
  }
}

TEST(DirichletTest, EmptyClientIsReported) {
  const auto ds = generate_gaussian_dataset(2, 2, 2, 1.0, 1.0, 0);
  try {
    dirichlet_partition(ds, spec_with(Dirichlet{0.01}, 30, 1));
    FAIL() << "expected PartitionError";
  } catch (const PartitionError& e) {
    EXPECT_NE(std::string(e.what()).find("client_"), std::string::npos);
  }
}

TEST(MixTest, UnevenFourSourceLayout) {
  const std::vector<int> counts{31, 25, 27, 14};
  std::vector<LabeledDataset> sources;
  for (std::size_t k = 0; k < counts.size(); ++k) {
    sources.push_back(generate_gaussian_dataset(10, 3, counts[k] * 50, 2.0, 1.0, k, "src" + std::to_string(k)));
  }
  PartitionSpec spec = spec_with(Mix{counts, 500}, 97, 11);
  const auto shards = mix_partition(sources, spec);
  ASSERT_EQ(shards.size(), 97u);
  std::map<std::string, std::set<std::size_t>> used;
  for (const auto& s : shards) {
    EXPECT_EQ(s.train.size() + s.test.size(), 500u);
    std::map<int, int> per_class;
    for (int y : s.train.labels) ++per_class[y];
    for (int y : s.test.labels) ++per_class[y];
    EXPECT_EQ(per_class.size(), 10u);
    for (const auto& [label, n] : per_class) EXPECT_EQ(n, 50);
    const int k = s.source_name.back() - '0';
    for (const auto& [label, n] : per_class) {
      EXPECT_GE(label, 10 * k);
      EXPECT_LT(label, 10 * k + 10);
    }
    for (auto i : s.train_indices) EXPECT_TRUE(used[s.source_name].insert(i).second);
    for (auto i : s.test_indices) EXPECT_TRUE(used[s.source_name].insert(i).second);
  }
  expect_label_sets_match(shards);
}

TEST(MixTest, ZeroCountSource) {
  std::vector<LabeledDataset> sources{generate_gaussian_dataset(2, 3, 50, 1.0, 1.0, 0, "a"),
                                      generate_gaussian_dataset(2, 3, 50, 1.0, 1.0, 1, "b")};
  const auto shards = mix_partition(sources, spec_with(Mix{{1, 0}, 20}, 1, 0));
  ASSERT_EQ(shards.size(), 1u);
  EXPECT_EQ(shards[0].source_name, "a");
}

TEST(MixTest, InsufficientSamples) {
  std::vector<LabeledDataset> sources{generate_gaussian_dataset(2, 3, 5, 1.0, 1.0, 0, "a")};
  EXPECT_THROW(mix_partition(sources, spec_with(Mix{{3}, 10}, 3, 0)), PartitionError);
}

TEST(PartitionTest, DeterministicAndTestFractionHonored) {
  const auto ds = generate_gaussian_dataset(4, 3, 50, 2.0, 1.0, 6);
  PartitionSpec spec = spec_with(Dirichlet{1.0}, 6, 77);
  spec.test_fraction = 0.25;
  const std::vector<LabeledDataset> one{ds};
  const auto a = partition(one, spec);
  const auto b = partition(one, spec);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].train_indices, b[i].train_indices);
    EXPECT_EQ(a[i].test_indices, b[i].test_indices);
    const double n = static_cast<double>(a[i].train.size() + a[i].test.size());
    EXPECT_LE(std::abs(static_cast<double>(a[i].test.size()) - 0.25 * n), 1.0) << a[i].client_id;
  }
}

TEST(PartitionTest, RejectsInvalidSettings) {
  EXPECT_THROW(spec_with(LabelSkew{0.0}, 4, 0).validate(), ConfigError);
  EXPECT_THROW(spec_with(Dirichlet{-1.0}, 4, 0).validate(), ConfigError);
  EXPECT_THROW(spec_with(Mix{{1, 2}, 10}, 4, 0).validate(), ConfigError);
  PartitionSpec s = spec_with(LabelSkew{20.0}, 4, 0);
  s.test_fraction = 1.0;
  EXPECT_THROW(s.validate(), ConfigError);
}

TEST(ConflictingGroupsTest, GroupsAndLabels) {
  const auto shards = generate_conflicting_groups(3, 40, 8, 0.2, 5);
  ASSERT_EQ(shards.size(), 6u);
  for (std::size_t i = 0; i < shards.size(); ++i) {
    EXPECT_EQ(shards[i].source_name, i < 3 ? "group_a" : "group_b");
    EXPECT_EQ(shards[i].train.feature_dim(), 8);
    EXPECT_EQ(shards[i].label_set, (std::set<int>{0, 1}));
  }
  EXPECT_THROW(generate_conflicting_groups(3, 40, 6, 0.2, 5), ConfigError);
}

TEST(ManifestTest, RoundTrip) {
  const auto ds = generate_gaussian_dataset(3, 2, 20, 1.0, 1.0, 1);
  const auto shards = label_skew_partition(ds, spec_with(LabelSkew{67.0}, 4, 2));
  std::stringstream buf;
  write_manifest(buf, shards);
  const auto entries = read_manifest(buf);
  ASSERT_EQ(entries.size(), shards.size());
  for (std::size_t i = 0; i < shards.size(); ++i) {
    EXPECT_EQ(entries[i].client_id, shards[i].client_id);
    EXPECT_EQ(entries[i].source_name, shards[i].source_name);
    EXPECT_EQ(entries[i].label_set, shards[i].label_set);
    EXPECT_EQ(entries[i].train_indices, shards[i].train_indices);
    EXPECT_EQ(entries[i].test_indices, shards[i].test_indices);
  }
}

TEST(ClientNameTest, WidthGrowsWithCount) {
  EXPECT_EQ(client_name(7, 20), "client_007");
  EXPECT_EQ(client_name(12, 5000), "client_0012");
}

}  // namespace
}  // namespace pacfl
