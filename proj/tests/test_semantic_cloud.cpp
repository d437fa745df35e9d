#include <doctest.h>

#include "fixtures.hpp"
#include "shpc/kdtree.hpp"
#include "shpc/semantic_cloud.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

using namespace shpc;
using shpc::test::catalog4;
using shpc::test::one_hot;

TEST_CASE("catalog validation") {
  CHECK_NOTHROW(catalog4().validate());
  ClassCatalog bad{{"a", "b"}, {0}, {0, 1}};
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  ClassCatalog uncovered{{"a", "b", "c"}, {0}, {1}};
  CHECK_THROWS_AS(uncovered.validate(), std::invalid_argument);
  ClassCatalog single{{"a"}, {0}, {}};
  CHECK_THROWS_AS(single.validate(), std::invalid_argument);
}

TEST_CASE("safety params constraint") {
  CHECK_NOTHROW(SafetyParams{}.validate());
  CHECK_THROWS_AS((SafetyParams{0.9, 0.05, 3.0}.validate()), std::invalid_argument);
}

TEST_CASE("init_cloud") {
  SUBCASE("one point, C=4") {
    auto cloud = SemanticPointCloud::init(Eigen::Matrix3Xd::Zero(3, 1), catalog4());
    const auto p = cloud.point(0);
    CHECK(p.probs.isApprox(Eigen::Vector4d::Constant(0.25)));
    CHECK(p.uncerts.isApprox(Eigen::Vector4d::Constant(0.5)));
    CHECK(p.measurement_count == 0);
    CHECK(cloud.resolution() == 0.0);
  }
  SUBCASE("fresh cloud is all unclear") {
    auto cloud = SemanticPointCloud::init(test::grid(10, 10, 0.1), catalog4());
    const auto part = partition_cloud(cloud, SafetyParams{});
    CHECK(part.count(SafetyLabel::Unclear) == cloud.size());
  }
  SUBCASE("two points resolution") {
    Eigen::Matrix3Xd pts(3, 2);
    pts << 0, 0.1, 0, 0, 0, 0;
    CHECK(SemanticPointCloud::init(pts, catalog4()).resolution() == doctest::Approx(0.1).epsilon(1e-12));
  }
  SUBCASE("errors") {
    CHECK_THROWS_AS(SemanticPointCloud::init(Eigen::Matrix3Xd(3, 0), catalog4()), std::invalid_argument);
    Eigen::Matrix3Xd pts = Eigen::Matrix3Xd::Zero(3, 2);
    pts(1, 1) = std::nan("");
    CHECK_THROWS_AS(SemanticPointCloud::init(pts, catalog4()), std::invalid_argument);
  }
}

TEST_CASE("aggregate_safety") {
  const auto cat = catalog4();
  SUBCASE("one-hot safe") {
    const auto a = aggregate_safety(one_hot(4, 1), Eigen::Vector4d::Zero(), cat);
    CHECK(a.p_safe == 1.0);
    CHECK(a.p_unsafe == 0.0);
    CHECK(a.sigma == 0.0);
  }
  SUBCASE("min rule") {
    const auto cat3 = ClassCatalog::from_safe_set({"a", "b", "c"}, {0, 1});
    const auto a = aggregate_safety(Eigen::Vector3d(0.2, 0.3, 0.5), Eigen::Vector3d(0.3, 0.4, 0.1), cat3);
    CHECK(a.sigma == doctest::Approx(0.1).epsilon(1e-12));
  }
  SUBCASE("uniform init") {
    const auto a = aggregate_safety(Eigen::Vector4d::Constant(0.25), Eigen::Vector4d::Constant(0.5), cat);
    CHECK(a.p_safe == doctest::Approx(0.5));
    CHECK(a.sigma == doctest::Approx(std::sqrt(0.5)).epsilon(1e-12));
  }
}

TEST_CASE("classify_point examples") {
  const auto cat = ClassCatalog::from_safe_set({"safe", "unsafe"}, {0});
  const SafetyParams params;
  CHECK(classify_point(Eigen::Vector2d(0.95, 0.05), Eigen::Vector2d(0.01, 0.01), cat, params) == SafetyLabel::Safe);
  CHECK(classify_point(Eigen::Vector2d(0.0, 1.0), Eigen::Vector2d(0.0, 0.0), cat, params) == SafetyLabel::Unsafe);
  CHECK(classify_point(Eigen::Vector2d(0.6, 0.4), Eigen::Vector2d(0.2, 0.2), cat, params) == SafetyLabel::Unclear);

  SUBCASE("mixed three point partition") {
    Eigen::Matrix3Xd pts = test::grid(3, 1, 1.0);
    auto cloud = SemanticPointCloud::init(pts, cat);
    cloud.set_state(0, Eigen::Vector2d(0.95, 0.05), Eigen::Vector2d(0.01, 0.01), 1);
    cloud.set_state(1, Eigen::Vector2d(0.0, 1.0), Eigen::Vector2d(0.0, 0.0), 1);
    cloud.set_state(2, Eigen::Vector2d(0.6, 0.4), Eigen::Vector2d(0.2, 0.2), 1);
    const auto part = partition_cloud(cloud, params);
    CHECK(part.labels == std::vector<SafetyLabel>{SafetyLabel::Safe, SafetyLabel::Unsafe, SafetyLabel::Unclear});
  }
  SUBCASE("all one-hot safe") {
    auto cloud = SemanticPointCloud::init(test::grid(4, 4, 0.1), catalog4());
    test::label_all(cloud, [](std::size_t i) { return static_cast<int>(i % 2); });
    CHECK(partition_cloud(cloud, params).count(SafetyLabel::Safe) == cloud.size());
  }
}

TEST_CASE("classification exclusivity on random simplex samples") {
  Rng rng(7);
  const auto cat = catalog4();
  const SafetyParams params;
  for (int t = 0; t < 20000; ++t) {
    const Eigen::VectorXd p = test::random_simplex(rng, 4);
    Eigen::VectorXd s(4);
    for (int c = 0; c < 4; ++c) s[c] = rng.uniform() < 0.3 ? 0.0 : rng.uniform(0.0, 0.1);
    const auto a = aggregate_safety(p, s, cat);
    CHECK(a.p_safe + a.p_unsafe == doctest::Approx(1.0).epsilon(1e-12));
    CHECK_NOTHROW(classify_point(p, s, cat, params));
  }
}

TEST_CASE("backproject_pixel") {
  const Intrinsics K = pinhole_intrinsics(64, 48, 1.2);
  const double f = K(0, 0), cx = K(0, 2), cy = K(1, 2);
  const Pose6D I = Pose6D::Identity();
  CHECK((backproject_pixel(cx, cy, 3.0, K, I) - Eigen::Vector3d(0, 0, 3)).norm() < 1e-12);
  CHECK((backproject_pixel(cx + f, cy, 2.0, K, I) - Eigen::Vector3d(2, 0, 2)).norm() < 1e-12);

  SUBCASE("round trip against hand-written forward projection") {
    Rng rng(11);
    for (int t = 0; t < 1000; ++t) {
      const Eigen::Vector3d axis = Eigen::Vector3d(rng.normal(), rng.normal(), rng.normal()).normalized();
      const Eigen::Matrix3d R = Eigen::AngleAxisd(rng.uniform(-3.0, 3.0), axis).toRotationMatrix();
      const Eigen::Vector3d t0(rng.uniform(-5, 5), rng.uniform(-5, 5), rng.uniform(-5, 5));
      const Pose6D P = make_pose<double>(R, t0);
      const Eigen::Vector3d pc(rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(0.2, 20));
      const Eigen::Vector3d pm = R * pc + t0;
      // Forward projection written out directly: u = f x / z + cx.
      const double u = f * pc.x() / pc.z() + cx, v = f * pc.y() / pc.z() + cy;
      CHECK((backproject_pixel(u, v, pc.z(), K, P) - pm).norm() < 1e-9);
      const auto proj = project_point<double>(pm, K, P);
      REQUIRE(proj);
      CHECK(std::abs(proj->u - u) < 1e-7);
      CHECK(std::abs(proj->depth - pc.z()) < 1e-9);
    }
  }
  CHECK_FALSE(project_point<double>(Eigen::Vector3d(0, 0, -1), K, I));
}

TEST_CASE("fuse_class_measurements examples") {
  Rng rng(3);
  const Eigen::VectorXd p = test::random_simplex(rng, 4);
  const Eigen::VectorXd s = Eigen::Vector4d(0.1, 0.2, 0.3, 0.05);
  const ClassMeasurement m{p, s};

  SUBCASE("K=1 identity") {
    const auto out = fuse_class_measurements(std::span(&m, 1), FusionMode::MeasurementNormalized);
    CHECK(out.probs == p);
    CHECK(out.uncerts == s);
  }
  SUBCASE("two identical measurements") {
    const std::vector<ClassMeasurement> h{m, m};
    const auto out = fuse_class_measurements(h, FusionMode::MeasurementNormalized);
    CHECK((out.probs - p).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((out.uncerts - s / std::sqrt(2.0)).cwiseAbs().maxCoeff() < 1e-12);
  }
  SUBCASE("confident measurement dominates") {
    const std::vector<ClassMeasurement> h{{one_hot(2, 0), Eigen::Vector2d::Constant(0.001)},
                                          {one_hot(2, 1), Eigen::Vector2d::Constant(0.5)}};
    const auto out = fuse_class_measurements(h, FusionMode::MeasurementNormalized);
    CHECK(std::abs(out.probs[0] - 1.0) < 1e-3);
  }
  SUBCASE("zero sigma is floored") {
    const std::vector<ClassMeasurement> h{{one_hot(2, 0), Eigen::Vector2d::Zero()},
                                          {one_hot(2, 1), Eigen::Vector2d::Constant(0.5)}};
    const auto out = fuse_class_measurements(h, FusionMode::MeasurementNormalized);
    CHECK(out.uncerts.allFinite());
    CHECK(out.uncerts.maxCoeff() <= kSigmaFloor);
  }
  SUBCASE("literal mode stays on the simplex") {
    const std::vector<ClassMeasurement> h{m, {one_hot(4, 2, 0.01), Eigen::Vector4d::Constant(0.2)}};
    const auto out = fuse_class_measurements(h, FusionMode::LiteralPaper);
    CHECK(out.probs.sum() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK((out.uncerts.array() >= 0).all());
  }
  SUBCASE("empty history") {
    CHECK_THROWS_AS(fuse_class_measurements({}, FusionMode::MeasurementNormalized), std::invalid_argument);
  }
}

TEST_CASE("fusion chains: simplex and monotone sigma") {
  Rng rng(5);
  for (int chain = 0; chain < 2000; ++chain) {
    FusionAccumulator acc(4);
    Eigen::VectorXd prev_s = Eigen::VectorXd::Constant(4, std::numeric_limits<double>::infinity());
    const int len = 1 + static_cast<int>(rng.index(8));
    for (int k = 0; k < len; ++k) {
      Eigen::VectorXd s(4);
      for (int c = 0; c < 4; ++c) s[c] = rng.uniform(0.0, 0.5);
      acc.add(test::random_simplex(rng, 4), s);
      Eigen::VectorXd p(4), out_s(4);
      acc.result(p, out_s);
      CHECK(std::abs(p.sum() - 1.0) < 1e-9);
      CHECK((out_s.array() <= prev_s.array()).all());
      prev_s = out_s;
    }
  }
}

namespace {

/// Camera `height` above the origin looking straight down, uniform semantic maps.
ViewMeasurement downward_view(int w, int h, double height, const Eigen::VectorXd& probs, const Eigen::VectorXd& sig) {
  ViewMeasurement v;
  v.width = w;
  v.height = h;
  v.K = pinhole_intrinsics(w, h, 0.5);
  Eigen::Matrix3d R;
  R << 1, 0, 0, 0, -1, 0, 0, 0, -1;  // camera z points down
  v.pose = make_pose<double>(R, Eigen::Vector3d(0, 0, height));
  v.depth = Eigen::MatrixXd::Constant(h, w, height);
  v.probs = probs.replicate(1, w * h);
  v.uncerts = sig.replicate(1, w * h);
  return v;
}

}  // namespace

TEST_CASE("integrate_view") {
  const auto cat = catalog4();
  SUBCASE("everything too far is discarded") {
    auto cloud = SemanticPointCloud::init(test::grid(3, 3, 0.1, 50.0, 50.0), cat);
    const auto before = cloud.probs();
    const auto rep = cloud.integrate_view(downward_view(8, 6, 2.0, one_hot(4, 0), Eigen::Vector4d::Zero()), 0.05);
    CHECK(rep.merged == 0);
    CHECK(rep.discarded == 48);
    CHECK(cloud.probs() == before);
  }
  SUBCASE("zero-noise pixel sets argmax, repeated view keeps shrinking sigma") {
    // Point at the ray through the centre of pixel (0, 0).
    auto view = downward_view(1, 1, 2.0, one_hot(4, 3), Eigen::Vector4d::Zero());
    const Eigen::Vector3d hit = backproject_pixel(0.5, 0.5, 2.0, view.K, view.pose);
    Eigen::Matrix3Xd pts(3, 2);
    pts.col(0) = hit;
    pts.col(1) = hit + Eigen::Vector3d(1, 0, 0);
    auto cloud = SemanticPointCloud::init(pts, cat);
    auto rep = integrate_view(cloud, view, 0.01, FusionMode::MeasurementNormalized);
    CHECK(rep.merged == 1);
    CHECK(cloud.argmax_class(0) == 3);
    CHECK(cloud.measurement_count(0) == 1);
    CHECK(cloud.measurement_count(1) == 0);
    const Eigen::VectorXd s1 = cloud.uncerts().col(0);
    cloud.integrate_view(view, 0.01);
    CHECK((cloud.uncerts().col(0).array() <= s1.array()).all());
    CHECK(std::abs(cloud.probs().col(0).sum() - 1.0) < 1e-9);
    CHECK(cloud.positions() == pts);
    CHECK_THROWS_AS(integrate_view(cloud, view, 0.01, FusionMode::LiteralPaper), std::logic_error);
  }
  SUBCASE("literal mode cloud") {
    auto view = downward_view(1, 1, 2.0, one_hot(4, 1), Eigen::Vector4d::Constant(0.01));
    Eigen::Matrix3Xd pts(3, 1);
    pts.col(0) = backproject_pixel(0.5, 0.5, 2.0, view.K, view.pose);
    auto cloud = SemanticPointCloud::init(pts, cat, FusionMode::LiteralPaper);
    cloud.integrate_view(view, 0.01);
    CHECK(cloud.argmax_class(0) == 1);
    CHECK(std::abs(cloud.probs().col(0).sum() - 1.0) < 1e-9);
  }
  SUBCASE("merge ties go to the lower index") {
    auto view = downward_view(1, 1, 2.0, one_hot(4, 2), Eigen::Vector4d::Zero());
    const Eigen::Vector3d hit = backproject_pixel(0.5, 0.5, 2.0, view.K, view.pose);
    Eigen::Matrix3Xd pts(3, 2);
    pts.col(0) = hit + Eigen::Vector3d(0.01, 0, 0);
    pts.col(1) = hit - Eigen::Vector3d(0.01, 0, 0);
    auto cloud = SemanticPointCloud::init(pts, cat);
    cloud.integrate_view(view, 0.05);
    CHECK(cloud.measurement_count(0) + cloud.measurement_count(1) == 1);
    // Equal distances up to rounding; the nearest (then lowest index) wins.
    const double d0 = (pts.col(0) - hit).squaredNorm(), d1 = (pts.col(1) - hit).squaredNorm();
    CHECK(cloud.measurement_count(d1 < d0 ? 1 : 0) == 1);
  }
}

TEST_CASE("kd-tree matches linear scan") {
  Rng rng(21);
  for (int trial = 0; trial < 20; ++trial) {
    const int n = 1 + static_cast<int>(rng.index(2000));
    Eigen::Matrix3Xd pts(3, n);
    for (int i = 0; i < n; ++i) {
      // Coarse lattice coordinates create many exact distance ties.
      pts.col(i) = Eigen::Vector3d(std::round(rng.uniform(0, 10)), std::round(rng.uniform(0, 10)),
                                   trial % 2 ? 0.0 : rng.uniform(0, 1));
    }
    const KdTree tree(pts);
    for (int q = 0; q < 20; ++q) {
      const Eigen::Vector3d query(rng.uniform(-1, 11), rng.uniform(-1, 11), rng.uniform(-1, 1));
      std::vector<Neighbor> all;
      for (int i = 0; i < n; ++i) all.push_back({static_cast<std::size_t>(i), (pts.col(i) - query).squaredNorm()});
      std::sort(all.begin(), all.end());
      const std::size_t k = 1 + rng.index(30);
      const auto got = tree.knn(query, k);
      REQUIRE(got.size() == std::min<std::size_t>(k, all.size()));
      for (std::size_t j = 0; j < got.size(); ++j) CHECK(got[j] == all[j]);
      const double r = rng.uniform(0.5, 3.0);
      std::vector<std::size_t> expect;
      for (int i = 0; i < n; ++i) {
        if ((pts.col(i) - query).squaredNorm() <= r * r) expect.push_back(static_cast<std::size_t>(i));
      }
      CHECK(tree.radius(query, r) == expect);
    }
  }
}

TEST_CASE("SHPC1 round trip") {
  auto cloud = SemanticPointCloud::init(test::grid(5, 4, 0.1), catalog4());
  cloud.set_state(3, one_hot(4, 2, 0.05), Eigen::Vector4d(0.01, 0.02, 0.03, 0.04), 7);
  std::stringstream first;
  write_cloud(first, cloud);
  const std::string bytes = first.str();
  CHECK(bytes.substr(0, 5) == "SHPC1");
  std::stringstream in(bytes);
  const auto loaded = read_cloud(in);
  CHECK(loaded.size() == cloud.size());
  CHECK(loaded.positions() == cloud.positions());
  CHECK(loaded.catalog().safe == cloud.catalog().safe);
  CHECK(loaded.measurement_count(3) == 7);
  CHECK(loaded.measurement_count(0) == 0);
  std::stringstream second;
  write_cloud(second, loaded);
  CHECK(second.str() == bytes);

  std::stringstream garbage("NOPE");
  CHECK_THROWS_AS(read_cloud(garbage), std::runtime_error);
  std::stringstream truncated(bytes.substr(0, bytes.size() - 3));
  CHECK_THROWS_AS(read_cloud(truncated), std::runtime_error);
}
