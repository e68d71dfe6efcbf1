#include <doctest.h>

#include <cmath>
#include <fstream>
#include <sstream>

#include "relrep/bootstrap.hpp"
#include "relrep/cli.hpp"
#include "relrep/eval.hpp"
#include "relrep/translate.hpp"
#include "test_util.hpp"

using namespace relrep;
using relrep::testing::TempDir;

namespace {

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result cli(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = run(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

double metric(const std::string& text, const std::string& name) {
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.rfind(name + "\t", 0) == 0) return std::stod(line.substr(name.size() + 1));
  }
  FAIL("metric " << name << " not found in:\n" << text);
  return 0.0;
}

}  // namespace

TEST_CASE("synth is deterministic and matches the library") {
  TempDir dir;
  const std::vector<std::string> args{"synth", "--n", "100", "--d", "8", "--classes", "4", "--seed", "0", "--out"};
  auto a = args, b = args;
  a.push_back(dir.file("a.emb"));
  b.push_back(dir.file("b.emb"));
  REQUIRE(cli(a).code == 0);
  REQUIRE(cli(b).code == 0);
  const auto text = slurp(dir.file("a.emb"));
  CHECK(text == slurp(dir.file("b.emb")));
  CHECK(text.rfind("# relrep 0.1.0 synth seed=0\n", 0) == 0);
  CHECK(load_space(dir.file("a.emb")).matrix() == generate_synthetic(100, 8, 4, 0).matrix());

  const auto piped = cli({"synth", "--n", "10", "--d", "3", "--classes", "2", "--seed", "4"});
  CHECK(piped.code == 0);
  CHECK(piped.out == format_space(generate_synthetic(10, 3, 2, 4), {"relrep 0.1.0 synth seed=4"}));
}

TEST_CASE("estimate writes an orthogonal map for an orthogonal pair") {
  TempDir dir;
  REQUIRE(cli({"synth", "--n", "120", "--d", "8", "--classes", "4", "--seed", "1", "--out", dir.file("ax.emb")}).code == 0);
  REQUIRE(cli({"synth", "--in", dir.file("ax.emb"), "--transform", "orthogonal", "--seed", "2", "--out",
               dir.file("ay.emb")})
              .code == 0);
  const auto r = cli({"estimate", "--method", "ortho", "--src", dir.file("ax.emb"), "--tgt", dir.file("ay.emb"),
                      "--out", dir.file("q.xfm")});
  REQUIRE(r.code == 0);
  const auto est = load_transform(dir.file("q.xfm"));
  CHECK(est.method == EstimatorKind::ortho);
  CHECK((est.map.transpose() * est.map - Matrix::Identity(8, 8)).norm() <= 1e-8);
  CHECK(metric(r.out, "orthogonality_error") <= 1e-8);

  REQUIRE(cli({"translate", "--in", dir.file("ax.emb"), "--xfm", dir.file("q.xfm"), "--out", dir.file("t.emb")})
              .code == 0);
  const auto translated = load_space(dir.file("t.emb"));
  CHECK(translated.ids() == load_space(dir.file("ax.emb")).ids());
}

TEST_CASE("metrics cka of a space with itself") {
  TempDir dir;
  REQUIRE(cli({"synth", "--n", "50", "--d", "5", "--classes", "2", "--out", dir.file("x.emb")}).code == 0);
  const auto r = cli({"metrics", "--cmd", "cka", "--a", dir.file("x.emb"), "--b", dir.file("x.emb")});
  REQUIRE(r.code == 0);
  CHECK(std::abs(metric(r.out, "cka") - 1.0) <= 1e-10);
}

TEST_CASE("relativize, stitch and retrieval through the command line") {
  TempDir dir;
  auto f = [&](const char* n) { return dir.file(n); };
  REQUIRE(cli({"synth", "--n", "200", "--d", "8", "--classes", "4", "--seed", "3", "--out", f("x.emb")}).code == 0);
  REQUIRE(cli({"synth", "--in", f("x.emb"), "--transform", "orthogonal", "--seed", "9", "--out", f("y.emb")}).code == 0);
  REQUIRE(cli({"anchors", "--in", f("x.emb"), "--strategy", "fps", "--count", "16", "--seed", "3", "--out",
               f("a.txt")})
              .code == 0);
  REQUIRE(cli({"relativize", "--in", f("x.emb"), "--anchors", f("a.txt"), "--out", f("rx.rel")}).code == 0);
  REQUIRE(cli({"relativize", "--in", f("y.emb"), "--anchors", f("a.txt"), "--out", f("ry.rel")}).code == 0);

  const auto direct = relative_projection(load_space(f("x.emb")), load_anchors(f("a.txt")), SimilarityKind::cosine);
  CHECK(load_relative(f("rx.rel")).coords() == direct.coords());

  const auto ret = cli({"metrics", "--cmd", "retrieval", "--a", f("rx.rel"), "--b", f("ry.rel"), "--k", "5"});
  REQUIRE(ret.code == 0);
  CHECK(std::abs(metric(ret.out, "jaccard") - 1.0) <= 1e-6);
  CHECK(std::abs(metric(ret.out, "mrr") - 1.0) <= 1e-6);

  const auto st = cli({"stitch", "--train", f("x.emb"), "--train-anchors", f("a.txt"), "--test", f("y.emb"),
                       "--kinds", "cosine,euclidean", "--agg", "concat", "--record"});
  REQUIRE(st.code == 0);
  CHECK(metric(st.out, "stitching_index") == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(st.out.find("{\"metrics\"") != std::string::npos);
}

TEST_CASE("bootstrap prints the loss log and writes pairs") {
  TempDir dir;
  auto f = [&](const char* n) { return dir.file(n); };
  REQUIRE(cli({"synth", "--n", "60", "--d", "6", "--classes", "3", "--out", f("x.emb")}).code == 0);
  REQUIRE(cli({"synth", "--in", f("x.emb"), "--transform", "orthogonal", "--out", f("y.emb")}).code == 0);
  REQUIRE(cli({"anchors", "--in", f("x.emb"), "--count", "8", "--out", f("a.txt")}).code == 0);
  REQUIRE(cli({"anchors", "--in", f("x.emb"), "--count", "2", "--parallel", "--out", f("s.txt")}).code == 0);
  // Seeds must be among the anchors; the first two uniform picks with the same seed coincide.
  const auto r = cli({"bootstrap", "--x", f("x.emb"), "--y", f("y.emb"), "--anchors", f("a.txt"), "--seeds",
                      f("s.txt"), "--max-iters", "5", "--out", f("c.txt")});
  REQUIRE(r.code == 0);
  CHECK(r.out.rfind("iter 0 loss ", 0) == 0);
  CHECK(load_parallel_anchors(f("c.txt")).size() == 8);
}

TEST_CASE("exit codes and usage") {
  TempDir dir;
  const auto unknown = cli({"frobnicate"});
  CHECK(unknown.code == 1);
  CHECK(unknown.err.find("synth") != std::string::npos);

  const auto bad_flag = cli({"synth", "--bogus", "3"});
  CHECK(bad_flag.code == 1);
  CHECK(bad_flag.err.find("Usage") != std::string::npos);

  CHECK(cli({}).code == 1);
  CHECK(cli({"synth", "--n", "10", "--d", "2", "--classes", "20"}).code == 1);
  CHECK(cli({"metrics", "--cmd", "cka", "--a", dir.file("missing.emb"), "--b", dir.file("missing.emb")}).code == 1);

  REQUIRE(cli({"synth", "--n", "40", "--d", "4", "--classes", "2", "--out", dir.file("x.emb")}).code == 0);
  REQUIRE(cli({"synth", "--in", dir.file("x.emb"), "--transform", "affine", "--out", dir.file("y.emb")}).code == 0);
  const auto diverged = cli({"estimate", "--method", "affine", "--src", dir.file("x.emb"), "--tgt", dir.file("y.emb"),
                             "--prep", "none", "--lr", "1e300"});
  CHECK(diverged.code == 2);
  CHECK(diverged.err.find("numerical error") != std::string::npos);

  const auto version = cli({"--version"});
  CHECK(version.code == 0);
  CHECK(version.out.find("0.1.0") != std::string::npos);
}
