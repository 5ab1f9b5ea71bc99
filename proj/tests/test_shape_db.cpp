#include <gtest/gtest.h>

#include <filesystem>

#include "fixtures.hpp"
#include "oracles.hpp"
#include "shapesel/shapesel.hpp"

using namespace shapesel;

namespace {

/// Database whose "SDFs" are tiny hand-written grids, one class.
ShapeDatabase synthetic_db(const std::vector<std::vector<double>>& values, double normalization = 1.0) {
  ShapeDatabase db;
  db.class_names = {"a"};
  db.k_per_class = static_cast<int>(values.size());
  db.normalization = normalization;
  for (std::size_t i = 0; i < values.size(); ++i) {
    ShapeEntry e;
    e.exemplar_index = static_cast<int>(i);
    e.sdf.spec.dims = Eigen::Vector3i(static_cast<int>(values[i].size()), 1, 1);
    e.sdf.values = values[i];
    db.entries.push_back(e);
  }
  return db;
}

SdfGrid grid_of(std::vector<double> v) {
  SdfGrid g;
  g.spec.dims = Eigen::Vector3i(static_cast<int>(v.size()), 1, 1);
  g.values = std::move(v);
  return g;
}

std::vector<Eigen::VectorXd> two_blobs(Rng& rng, int n_per_blob, int dim) {
  std::vector<Eigen::VectorXd> data;
  for (int b = 0; b < 2; ++b)
    for (int i = 0; i < n_per_blob; ++i) {
      Eigen::VectorXd x(dim);
      for (int d = 0; d < dim; ++d) x(d) = (b == 0 ? -5.0 : 5.0) + uniform(rng, -1, 1);
      data.push_back(x);
    }
  return data;
}

}  // namespace

TEST(KMeans, KEqualsNGivesZeroDistortion) {
  Rng rng(1);
  std::vector<Eigen::VectorXd> data;
  for (int i = 0; i < 6; ++i) data.push_back(Eigen::VectorXd::Random(4) + Eigen::VectorXd::Constant(4, 3.0 * i));
  const KMeansResult r = kmeans_pp(data, 6, 42);
  std::set<int> used(r.assignment.begin(), r.assignment.end());
  EXPECT_EQ(used.size(), 6u);
  ASSERT_FALSE(r.distortion.empty());
  EXPECT_EQ(r.distortion.back(), 0.0);
}

TEST(KMeans, SingleClusterCentroidIsMean) {
  Rng rng(2);
  std::vector<Eigen::VectorXd> data;
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(3);
  for (int i = 0; i < 7; ++i) {
    data.push_back(Eigen::Vector3d(uniform(rng), uniform(rng), uniform(rng)));
    mean += data.back();
  }
  mean /= 7;
  const KMeansResult r = kmeans_pp(data, 1, 5);
  EXPECT_LT((r.centroids[0] - mean).norm(), 1e-12);
}

TEST(KMeans, SeparatedBlobsMatchExhaustiveOracle) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(seed);
    const auto data = two_blobs(rng, 5, 6);
    std::vector<int> best;
    const double cost = oracle::best_partition_cost(data, 2, &best);
    const KMeansResult r = kmeans_pp(data, 2, seed);
    for (std::size_t i = 0; i < data.size(); ++i)
      for (std::size_t j = 0; j < data.size(); ++j)
        EXPECT_EQ(r.assignment[i] == r.assignment[j], best[i] == best[j]);
    EXPECT_NEAR(r.distortion.back(), cost, 1e-9);
  }
}

TEST(KMeans, DistortionNonIncreasing) {
  Rng rng(3);
  std::vector<Eigen::VectorXd> data;
  for (int i = 0; i < 200; ++i) data.push_back(Eigen::Vector2d(uniform(rng), uniform(rng)));
  const KMeansResult r = kmeans_pp(data, 8, 9);
  for (std::size_t i = 1; i < r.distortion.size(); ++i) EXPECT_LE(r.distortion[i], r.distortion[i - 1] + 1e-12);
}

TEST(KMeans, HandlesDuplicatePointsWithoutEmptyClusters) {
  std::vector<Eigen::VectorXd> data(5, Eigen::VectorXd::Ones(2));
  data.push_back(Eigen::VectorXd::Zero(2));
  const KMeansResult r = kmeans_pp(data, 3, 1);
  std::vector<int> counts(3, 0);
  for (int a : r.assignment) ++counts[a];
  for (int c : counts) EXPECT_GT(c, 0);
}

TEST(KMeans, RejectsBadK) {
  std::vector<Eigen::VectorXd> data(3, Eigen::VectorXd::Ones(2));
  EXPECT_THROW(kmeans_pp(data, 4, 0), InvalidArgument);
  EXPECT_THROW(kmeans_pp(data, 0, 0), InvalidArgument);
}

TEST(Database, EveryShapeIsOwnExemplarWhenKEqualsClassSize) {
  const auto set = toy_shape_set(2, 1);
  DatabaseOptions opt;
  opt.k_per_class = 2;
  opt.sdf_resolution = 12;
  opt.points_per_shape = 32;
  const ShapeDatabase db = build_database(set.shapes, set.class_names, opt);
  ASSERT_EQ(db.size(), 4);
  const auto sdfs = compute_shape_sdfs(set.shapes, 12);
  std::set<int> hit;
  for (std::size_t i = 0; i < set.shapes.size(); ++i)
    for (const auto& e : db.entries)
      if (e.sdf.values == sdfs[i].values) hit.insert(static_cast<int>(i));
  EXPECT_EQ(hit.size(), 4u);
}

TEST(Database, SingleExemplarIsClosestToMean) {
  const auto set = toy_shape_set(3, 1);
  std::vector<LabeledMesh> blocks;
  for (const auto& s : set.shapes)
    if (s.class_id == 0) blocks.push_back(s);
  DatabaseOptions opt;
  opt.k_per_class = 1;
  opt.sdf_resolution = 12;
  opt.points_per_shape = 16;
  const ShapeDatabase db = build_database(blocks, {"block"}, opt);
  const auto sdfs = compute_shape_sdfs(blocks, 12);
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(sdfs[0].values.size()));
  for (const auto& g : sdfs) mean += flatten(g);
  mean /= static_cast<double>(sdfs.size());
  std::size_t best = 0;
  for (std::size_t i = 1; i < sdfs.size(); ++i)
    if ((flatten(sdfs[i]) - mean).norm() < (flatten(sdfs[best]) - mean).norm()) best = i;
  EXPECT_EQ(db.entries[0].sdf.values, sdfs[best].values);
}

TEST(Database, InvariantsAndDeterminism) {
  const ShapeDatabase& db = fixtures::toy_database();
  EXPECT_EQ(db.size(), db.k_per_class * db.class_count());
  for (int c = 0; c < db.class_count(); ++c) {
    int n = 0;
    for (const auto& e : db.entries) n += e.class_id == c;
    EXPECT_EQ(n, db.k_per_class);
  }
  for (const auto& e : db.entries)
    for (const Vec3& p : e.points.points) EXPECT_LE(p.cwiseAbs().maxCoeff(), 0.5 + 1e-6);
  EXPECT_DOUBLE_EQ(db.normalization, std::sqrt(32.0 * 32.0 * 32.0));

  const auto set = toy_shape_set(3, 2);
  DatabaseOptions opt;
  opt.k_per_class = 3;
  opt.seed = 1;
  const ShapeDatabase again = build_database(set.shapes, set.class_names, opt);
  for (int k = 0; k < db.size(); ++k) {
    EXPECT_EQ(again.entries[k].sdf.values, db.entries[k].sdf.values);
    EXPECT_EQ(again.entries[k].points.points, db.entries[k].points.points);
  }
}

TEST(Database, InsufficientShapes) {
  const auto set = toy_shape_set(2, 1);
  DatabaseOptions opt;
  opt.k_per_class = 3;
  opt.sdf_resolution = 8;
  EXPECT_THROW(build_database(set.shapes, set.class_names, opt), InsufficientShapes);
}

TEST(Database, SaveLoadRoundTrip) {
  const ShapeDatabase& db = fixtures::toy_database();
  const auto dir = std::filesystem::temp_directory_path() / "shapesel_test_db_roundtrip";
  std::filesystem::remove_all(dir);
  save_database(db, dir);
  const ShapeDatabase r = load_database(dir);
  EXPECT_EQ(r.class_names, db.class_names);
  EXPECT_EQ(r.k_per_class, db.k_per_class);
  EXPECT_EQ(r.normalization, db.normalization);
  ASSERT_EQ(r.size(), db.size());
  for (int k = 0; k < db.size(); ++k) {
    EXPECT_EQ(r.entries[k].exemplar_index, k);
    EXPECT_EQ(r.entries[k].class_id, db.entries[k].class_id);
    EXPECT_EQ(r.entries[k].sdf.spec, db.entries[k].sdf.spec);
    EXPECT_EQ(r.entries[k].sdf.values, db.entries[k].sdf.values);
    EXPECT_EQ(r.entries[k].points.points, db.entries[k].points.points);
    EXPECT_EQ(r.entries[k].mesh.vertices, db.entries[k].mesh.vertices);
  }
  std::filesystem::remove(dir / "sdf" / "00001.sdfg");
  EXPECT_THROW(load_database(dir), FormatError);
  std::filesystem::remove_all(dir);
  EXPECT_THROW(load_database(dir), FormatError);
}

TEST(AssignExemplar, ExactMatchTiesAndUnknownClass) {
  ShapeDatabase db = synthetic_db({{0, 0}, {5, 5}, {1, 0}, {0, 1}, {9, 9}});
  EXPECT_EQ(assign_exemplar(db, grid_of({5, 5}), 0), 1);
  // Equidistant to exemplars 2 and 3.
  EXPECT_EQ(assign_exemplar(db, grid_of({1, 1}), 0), 2);
  EXPECT_THROW(assign_exemplar(db, grid_of({1, 1}), 1), UnknownClass);
  EXPECT_THROW(assign_exemplar(db, grid_of({1, 1, 1}), 0), InvalidArgument);
  EXPECT_THROW(db.class_id("chair"), UnknownClass);
}

TEST(AssignExemplar, MatchesLinearScan) {
  const ShapeDatabase& db = fixtures::toy_database();
  Rng rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    SdfGrid phi = db.entries[trial % db.size()].sdf;
    for (auto& v : phi.values) v += uniform(rng, -0.2, 0.2);
    for (int c = 0; c < db.class_count(); ++c) {
      int best = -1;
      double best_d = 1e300;
      for (int k = 0; k < db.size(); ++k) {
        if (db.entries[k].class_id != c) continue;
        double d = 0;
        for (std::size_t v = 0; v < phi.values.size(); ++v) d += std::pow(phi.values[v] - db.entries[k].sdf.values[v], 2);
        if (d < best_d) {
          best_d = d;
          best = k;
        }
      }
      EXPECT_EQ(assign_exemplar(db, phi, c), best);
      const Eigen::VectorXd z = hard_label(db, phi, c);
      EXPECT_EQ(z.sum(), 1.0);
      EXPECT_EQ(z(best), 1.0);
    }
  }
}

TEST(SoftLabel, Examples) {
  const ShapeDatabase db = synthetic_db({{0, 0}, {0.3, 0}, {0, 1.0}, {2, 2}});
  const Eigen::VectorXd d = soft_label(db, grid_of({0, 0}));
  EXPECT_EQ(d(0), 1.0);
  EXPECT_NEAR(d(1), 0.7, 1e-15);
  EXPECT_EQ(d(2), 0.0);
  EXPECT_EQ(d(3), 0.0);
}

TEST(SoftLabel, NormalizationScalesDistance) {
  const ShapeDatabase db = synthetic_db({{0, 0}, {0, 3}}, 10.0);
  EXPECT_NEAR(soft_label(db, grid_of({0, 0}))(1), 0.7, 1e-15);
}

TEST(SoftLabel, ArgmaxAgreesWithHardLabelForTrainingShapes) {
  const ShapeDatabase& db = fixtures::toy_database();
  const auto set = toy_shape_set(3, 2);
  for (const auto& sdf_and_class : [&] {
         std::vector<std::pair<SdfGrid, int>> v;
         const auto sdfs = compute_shape_sdfs(set.shapes, db.sdf_resolution);
         for (std::size_t i = 0; i < sdfs.size(); ++i) v.emplace_back(sdfs[i], set.shapes[i].class_id);
         return v;
       }()) {
    const auto& [phi, c] = sdf_and_class;
    const int hard = assign_exemplar(db, phi, c);
    const Eigen::VectorXd d = soft_label(db, phi);
    for (int k = 0; k < db.size(); ++k) {
      EXPECT_GE(d(k), 0.0);
      EXPECT_LE(d(k), 1.0);
      if (db.entries[k].class_id == c) {
        EXPECT_LE(d(k), d(hard));
      }
    }
  }
}
