#include <doctest.h>

#include <fstream>
#include <limits>
#include <map>
#include <set>

#include "relrep/spaces.hpp"
#include "test_util.hpp"

using namespace relrep;
using relrep::testing::TempDir;
using relrep::testing::max_abs_diff;

namespace {

void write(const std::string& path, const std::string& text) {
  std::ofstream(path) << text;
}

std::string error_of(const std::string& text) {
  try {
    parse_space(text);
  } catch (const ValidationError& e) {
    return e.what();
  }
  return {};
}

// Nearest-class-mean accuracy computed directly from the labels.
double nearest_mean_accuracy(const EmbeddingSpace& s) {
  std::map<std::string, std::pair<RowVector, int>> acc;
  for (Index i = 0; i < s.size(); ++i) {
    auto& [sum, count] = acc[s.labels()[i]];
    if (count == 0) sum = RowVector::Zero(s.dim());
    sum += s.matrix().row(i);
    ++count;
  }
  int hits = 0;
  for (Index i = 0; i < s.size(); ++i) {
    std::string best;
    double best_d = std::numeric_limits<double>::infinity();
    for (const auto& [label, sc] : acc) {
      const double d = (s.matrix().row(i) - sc.first / sc.second).squaredNorm();
      if (d < best_d) {
        best_d = d;
        best = label;
      }
    }
    hits += best == s.labels()[i];
  }
  return static_cast<double>(hits) / static_cast<double>(s.size());
}

double min_pairwise(const Matrix& x, const std::vector<Index>& rows) {
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t a = 0; a < rows.size(); ++a)
    for (std::size_t b = a + 1; b < rows.size(); ++b)
      best = std::min(best, (x.row(rows[a]) - x.row(rows[b])).norm());
  return best;
}

}  // namespace

TEST_CASE("EMB1 parse of a labeled 3x2 file") {
  const auto s = parse_space("EMB1 3 2 labeled\na x 1 2\nb y 3 4\nc x 5 6.5\n");
  CHECK(s.size() == 3);
  CHECK(s.dim() == 2);
  REQUIRE(s.has_labels());
  CHECK(s.labels() == std::vector<std::string>{"x", "y", "x"});
  CHECK(s.ids() == std::vector<std::string>{"a", "b", "c"});
  CHECK(s.matrix()(2, 1) == 6.5);
}

TEST_CASE("EMB1 errors carry the line number") {
  CHECK(error_of("EMB1 2 3 unlabeled\na - 1 2 3\nb - 1 2\n").find("row length mismatch at line 3") !=
        std::string::npos);
  CHECK(error_of("EMB1 2 1 unlabeled\na - 1\na - 2\n").find("duplicate id") != std::string::npos);
  CHECK(error_of("EMB1 1 1 unlabeled\na - nan\n").find("non-finite value at line 2") !=
        std::string::npos);
  CHECK(error_of("EMB1 1 1 unlabeled\na - inf\n").find("non-finite") != std::string::npos);
  CHECK(error_of("EMB2 1 1 unlabeled\na - 1\n").find("malformed header at line 1") !=
        std::string::npos);
  CHECK(error_of("EMB1 2 1 unlabeled\na - 1\n").find("expected 2 rows") != std::string::npos);
  CHECK(error_of("EMB1 1 1 unlabeled\na - 1x\n").find("malformed number at line 2") !=
        std::string::npos);
}

TEST_CASE("EMB1 comment lines are skipped but line numbers stay true") {
  const auto msg = error_of("# tool header\nEMB1 1 2 unlabeled\na - 1\n");
  CHECK(msg.find("at line 3") != std::string::npos);
}

TEST_CASE("save/load round trip is exact and keeps the labeled flag") {
  TempDir dir;
  auto s = generate_synthetic(37, 5, 3, 11);
  s = s.with_matrix(s.matrix() * 1e-7 + testing::gaussian(37, 5, 2) * 1e5);
  save_space(s, dir.file("a.emb"), {"comment"});
  std::ifstream in(dir.file("a.emb"));
  std::string first, second;
  std::getline(in, first);
  std::getline(in, second);
  CHECK(first == "# comment");
  CHECK(second == "EMB1 37 5 labeled");

  const auto back = load_space(dir.file("a.emb"));
  CHECK(back.ids() == s.ids());
  CHECK(back.labels() == s.labels());
  const double rel = ((back.matrix() - s.matrix()).cwiseAbs().array() /
                      s.matrix().cwiseAbs().array().max(1e-300))
                         .maxCoeff();
  CHECK(rel <= 1e-12);

  const EmbeddingSpace unlabeled({"p", "q"}, Matrix::Identity(2, 2));
  save_space(unlabeled, dir.file("u.emb"));
  CHECK(!load_space(dir.file("u.emb")).has_labels());
}

TEST_CASE("EmbeddingSpace invariants") {
  CHECK_THROWS_AS(EmbeddingSpace({}, Matrix(0, 2)), ValidationError);
  CHECK_THROWS_AS(EmbeddingSpace({"a", "a"}, Matrix::Zero(2, 2)), ValidationError);
  CHECK_THROWS_AS(EmbeddingSpace({"a b"}, Matrix::Zero(1, 2)), ValidationError);
  CHECK_THROWS_AS(EmbeddingSpace({"a"}, Matrix::Zero(1, 0)), ValidationError);
  Matrix bad = Matrix::Zero(1, 2);
  bad(0, 1) = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(EmbeddingSpace({"a"}, bad), ValidationError);
  CHECK_THROWS_AS(EmbeddingSpace({"a", "b"}, Matrix::Zero(2, 2), std::vector<std::string>{"x"}),
                  ValidationError);
}

TEST_CASE("anchor containers validate their contents") {
  CHECK_THROWS_AS(AnchorSet({}), ValidationError);
  CHECK_THROWS_AS(AnchorSet({"a", "a"}), ValidationError);
  CHECK_THROWS_AS(ParallelAnchors({}), ValidationError);
  CHECK_THROWS_AS(ParallelAnchors({{"a", "b"}, {"a", "c"}}), ValidationError);
  CHECK_THROWS_AS(ParallelAnchors({{"a", "b"}, {"c", "b"}}), ValidationError);

  const EmbeddingSpace s({"a", "b"}, Matrix::Identity(2, 2));
  CHECK_THROWS_AS(AnchorSet({"zz"}).resolve(s), ValidationError);
  CHECK(AnchorSet({"b", "a"}).resolve(s) == std::vector<Index>{1, 0});
}

TEST_CASE("anchor and parallel-anchor files round trip") {
  TempDir dir;
  save_anchors(AnchorSet({"a", "c", "b"}), dir.file("a.txt"), {"x"});
  CHECK(load_anchors(dir.file("a.txt")).ids() == std::vector<std::string>{"a", "c", "b"});
  save_parallel_anchors(ParallelAnchors({{"a", "x"}, {"b", "y"}}), dir.file("p.txt"));
  const auto p = load_parallel_anchors(dir.file("p.txt"));
  CHECK(p.x_side().ids() == std::vector<std::string>{"a", "b"});
  CHECK(p.y_side().ids() == std::vector<std::string>{"x", "y"});
  write(dir.file("bad.txt"), "a b c\n");
  CHECK_THROWS_AS(load_parallel_anchors(dir.file("bad.txt")), ValidationError);
}

TEST_CASE("generate_synthetic is deterministic and separable") {
  const auto a = generate_synthetic(100, 8, 4, 0);
  const auto b = generate_synthetic(100, 8, 4, 0);
  CHECK(a.matrix() == b.matrix());
  CHECK(a.labels() == b.labels());
  CHECK(generate_synthetic(100, 8, 4, 1).matrix() != a.matrix());

  const auto one = generate_synthetic(20, 3, 1, 5);
  CHECK(std::set<std::string>(one.labels().begin(), one.labels().end()).size() == 1);

  for (Seed seed = 0; seed < 5; ++seed) {
    CHECK(nearest_mean_accuracy(generate_synthetic(400, 8, 4, seed)) >= 0.99);
    CHECK(nearest_mean_accuracy(generate_synthetic(400, 8, 4, seed, 16.0)) >= 0.99);
  }

  CHECK_THROWS_AS(generate_synthetic(3, 8, 4, 0), ValidationError);
  CHECK_THROWS_AS(generate_synthetic(10, 1, 2, 0), ValidationError);
  CHECK_THROWS_AS(generate_synthetic(10, 2, 0, 0), ValidationError);
}

TEST_CASE("random orthogonal maps are orthogonal and seed-deterministic") {
  const Matrix q = random_orthogonal(12, 3);
  CHECK((q.transpose() * q - Matrix::Identity(12, 12)).norm() < 1e-12);
  CHECK(random_orthogonal(12, 3) == q);
  // Both determinant signs show up across seeds (Haar measure on O(d)).
  std::set<int> signs;
  for (Seed s = 0; s < 20; ++s) signs.insert(random_orthogonal(5, s).determinant() > 0 ? 1 : -1);
  CHECK(signs.size() == 2);
}

TEST_CASE("apply_transform preserves what each class should preserve") {
  const auto x = generate_synthetic(64, 6, 3, 9);

  SUBCASE("orthogonal keeps row norms") {
    const auto y = apply_transform(x, {TransformKind::orthogonal, 1});
    CHECK((x.matrix().rowwise().norm() - y.matrix().rowwise().norm()).cwiseAbs().maxCoeff() <= 1e-10);
    CHECK(y.ids() == x.ids());
    CHECK(y.labels() == x.labels());
  }
  SUBCASE("translation keeps pairwise distances") {
    const auto y = apply_transform(x, {TransformKind::translation, 2});
    double worst = 0.0;
    for (Index i = 0; i < x.size(); ++i)
      for (Index j = 0; j < x.size(); ++j)
        worst = std::max(worst, std::abs((x.matrix().row(i) - x.matrix().row(j)).norm() -
                                         (y.matrix().row(i) - y.matrix().row(j)).norm()));
    CHECK(worst <= 1e-10);
    CHECK(max_abs_diff(x.matrix(), y.matrix()) > 0.1);
  }
  SUBCASE("translation magnitude follows the scale bounds") {
    const auto t = sample_transform({TransformKind::translation, 4, 1.0, 1.0}, 1, 6);
    CHECK(t.offset.norm() == doctest::Approx(1.0).epsilon(1e-12));
  }
  SUBCASE("local rescaling keeps every row's direction") {
    const auto y = apply_transform(x, {TransformKind::local_rescaling, 3, 0.5, 3.0});
    for (Index i = 0; i < x.size(); ++i)
      CHECK(cosine_of(x.matrix().row(i), y.matrix().row(i)) == doctest::Approx(1.0).epsilon(1e-10));
  }
  SUBCASE("permutation composed with its inverse is exactly the identity") {
    const auto t = sample_transform({TransformKind::permutation, 5}, x.size(), x.dim());
    const Matrix back = t.apply(x.matrix()) * t.linear.transpose();
    CHECK(back == x.matrix());
  }
  SUBCASE("isometry keeps distances") {
    const auto y = apply_transform(x, {TransformKind::isometry, 6});
    CHECK(std::abs((y.matrix().row(0) - y.matrix().row(1)).norm() -
                   (x.matrix().row(0) - x.matrix().row(1)).norm()) < 1e-10);
  }
  SUBCASE("linear and affine maps respect the condition cap") {
    for (auto kind : {TransformKind::linear, TransformKind::affine}) {
      for (Seed s = 0; s < 10; ++s) {
        const auto t = sample_transform({kind, s}, 1, 16);
        Eigen::JacobiSVD<Matrix> svd(t.linear);
        const auto& sv = svd.singularValues();
        CHECK(sv(0) / sv(sv.size() - 1) <= 100.0);
      }
    }
    const auto big = sample_transform({TransformKind::linear, 1}, 1, 120);
    Eigen::JacobiSVD<Matrix> svd(big.linear);
    CHECK(svd.singularValues()(0) / svd.singularValues()(119) <= 100.0);
  }
  SUBCASE("isotropic scaling multiplies by one factor in range") {
    const auto t = sample_transform({TransformKind::isotropic_scaling, 8, 2.0, 3.0}, 1, 6);
    CHECK(t.linear(0, 0) >= 2.0);
    CHECK(t.linear(0, 0) <= 3.0);
    CHECK((t.linear - t.linear(0, 0) * Matrix::Identity(6, 6)).norm() == 0.0);
  }
  SUBCASE("bad scale bounds are rejected") {
    CHECK_THROWS_AS(apply_transform(x, {TransformKind::local_rescaling, 1, 0.0, 1.0}), ValidationError);
    CHECK_THROWS_AS(apply_transform(x, {TransformKind::local_rescaling, 1, 2.0, 1.0}), ValidationError);
    CHECK_THROWS_AS(parse_transform_kind("shear"), ValidationError);
  }
}

TEST_CASE("select_anchors: m = n returns every id") {
  const auto x = generate_synthetic(25, 4, 2, 1);
  for (auto strategy : {AnchorStrategy::uniform, AnchorStrategy::fps, AnchorStrategy::kmeans}) {
    const auto sel = select_anchors(x, strategy, 25, 7);
    std::set<std::string> got(sel.anchors.ids().begin(), sel.anchors.ids().end());
    CHECK(got == std::set<std::string>(x.ids().begin(), x.ids().end()));
  }
  CHECK_THROWS_AS(select_anchors(x, AnchorStrategy::uniform, 26, 0), ValidationError);
  CHECK_THROWS_AS(select_anchors(x, AnchorStrategy::uniform, 0, 0), ValidationError);
}

TEST_CASE("fps on collinear points picks the farthest pair") {
  Matrix pts = Matrix::Zero(10, 2);
  for (Index i = 0; i < 10; ++i) pts(i, 0) = static_cast<double>(i);
  // Oracle: the point farthest from the start by brute force.
  Index far = 0;
  for (Index i = 0; i < 10; ++i)
    if ((pts.row(i) - pts.row(0)).norm() > (pts.row(far) - pts.row(0)).norm()) far = i;
  CHECK(farthest_point_sampling(pts, 2, 0) == std::vector<Index>{0, far});
  CHECK(far == 9);
}

TEST_CASE("uniform anchors are deterministic in the seed") {
  const auto x = generate_synthetic(50, 4, 2, 1);
  CHECK(select_anchors(x, AnchorStrategy::uniform, 10, 3).anchors ==
        select_anchors(x, AnchorStrategy::uniform, 10, 3).anchors);
  CHECK(!(select_anchors(x, AnchorStrategy::uniform, 10, 3).anchors ==
          select_anchors(x, AnchorStrategy::uniform, 10, 4).anchors));
}

TEST_CASE("fps spreads anchors at least as well as uniform sampling") {
  int wins = 0;
  for (Seed seed = 0; seed < 20; ++seed) {
    const auto x = generate_synthetic(200, 8, 4, seed);
    const auto fps = select_anchors(x, AnchorStrategy::fps, 16, seed).anchors.resolve(x);
    const auto uni = select_anchors(x, AnchorStrategy::uniform, 16, seed).anchors.resolve(x);
    CHECK(std::set<Index>(fps.begin(), fps.end()).size() == fps.size());
    wins += min_pairwise(x.matrix(), fps) >= min_pairwise(x.matrix(), uni);
  }
  CHECK(wins >= 18);
}

TEST_CASE("kmeans anchors are distinct samples near the centroids") {
  const auto x = generate_synthetic(120, 4, 4, 2);
  const auto sel = select_anchors(x, AnchorStrategy::kmeans, 4, 5);
  const auto rows = sel.anchors.resolve(x);
  CHECK(std::set<Index>(rows.begin(), rows.end()).size() == 4);
  CHECK(!sel.warning);
  // Well-separated blobs: one anchor per class.
  std::set<std::string> classes;
  for (Index r : rows) classes.insert(x.labels()[r]);
  CHECK(classes.size() == 4);
  CHECK(select_anchors(x, AnchorStrategy::kmeans, 4, 5).anchors == sel.anchors);
}

TEST_CASE("kmeans on duplicated points resolves collisions by next-nearest") {
  // Three identical points: every centroid is the same, yet three distinct ids come back.
  const EmbeddingSpace s({"a", "b", "c"}, Matrix::Ones(3, 2));
  const auto sel = select_anchors(s, AnchorStrategy::kmeans, 3, 0);
  CHECK(sel.anchors.size() == 3);
}
