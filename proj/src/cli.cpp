#include "relrep/cli.hpp"

#include <iostream>
#include <optional>

#include <CLI11.hpp>

#include "relrep/bootstrap.hpp"
#include "relrep/eval.hpp"
#include "relrep/relative.hpp"
#include "relrep/translate.hpp"
#include "text_io.hpp"

namespace relrep {

namespace {

std::vector<std::string> header(const std::string& command, Seed seed) {
  return {std::string("relrep ") + kVersion + " " + command + " seed=" + std::to_string(seed)};
}

std::vector<SimilarityKind> parse_kinds(const std::string& text) {
  std::vector<SimilarityKind> kinds;
  for (auto token : detail::split_on(text, ',')) kinds.push_back(parse_similarity_kind(token));
  return kinds;
}

// EMB1 or REL1, decided by the header keyword.
EmbeddingSpace load_any(const std::string& path) {
  const std::string text = detail::read_file(path);
  const auto lines = detail::content_lines(text);
  require(!lines.empty(), "empty file " + path);
  const auto tokens = detail::split_ws(lines.front().text);
  if (!tokens.empty() && tokens.front() == "REL1") return parse_relative(text).as_space();
  return parse_space(text);
}

void emit(const EvalReport& report, bool record, const std::string& out_path,
          std::ostream& out, const std::vector<std::string>& comments) {
  out << report.to_text();
  if (record) out << report.to_record() << "\n";
  if (!out_path.empty()) {
    detail::write_file(out_path, detail::comment_block(comments) + report.to_text() +
                                     report.to_record() + "\n");
  }
}

struct Options {
  Seed seed = 0;
  std::string out;
  bool record = false;

  // synth
  Index n = 100;
  Index d = 8;
  Index classes = 4;
  std::string in;
  std::string transform;
  double scale_lo = 0.5;
  double scale_hi = 2.0;

  // anchors
  std::string strategy = "uniform";
  Index count = 10;
  bool parallel = false;

  // relativize / stitch
  std::string anchors;
  std::string kinds = "cosine";
  std::string agg = "none";
  bool center = false;

  // estimate / translate
  std::string method = "ortho";
  std::string src;
  std::string tgt;
  std::string prep = "standard";
  double lr = 0.1;
  int max_iters = 5000;
  double tol = 1e-10;
  std::string xfm;
  bool normalized_output = false;

  // bootstrap
  std::string x;
  std::string y;
  std::string seeds;
  double ao_lr = 0.05;
  int ao_iters = 500;
  double epsilon = 0.05;
  int sinkhorn_iters = 100;
  double ao_tol = 1e-7;

  // stitch
  std::string train;
  std::string train_anchors;
  std::string test;
  std::string test_anchors;
  std::string decoder = "centroid";
  double lambda = 1.0;
  bool normalize = false;
  bool absolute = false;

  // metrics
  std::string cmd = "retrieval";
  std::string a;
  std::string b;
  Index k = 10;
  std::string reference;
  std::vector<std::string> candidates;
  std::vector<double> perf;
};

int cmd_synth(const Options& o, std::ostream& out) {
  EmbeddingSpace space = o.in.empty() ? generate_synthetic(o.n, o.d, o.classes, o.seed)
                                      : load_space(o.in);
  if (!o.transform.empty()) {
    SyntheticTransformSpec spec{parse_transform_kind(o.transform), o.seed, o.scale_lo, o.scale_hi};
    space = apply_transform(space, spec);
  }
  const auto comments = header("synth", o.seed);
  if (o.out.empty()) {
    out << format_space(space, comments);
  } else {
    save_space(space, o.out, comments);
  }
  return 0;
}

int cmd_anchors(const Options& o, std::ostream& out, std::ostream& err) {
  const auto space = load_space(o.in);
  const auto sel = select_anchors(space, parse_anchor_strategy(o.strategy), o.count, o.seed);
  if (sel.warning) err << "warning: kmeans did not converge; using best centers so far\n";
  const auto comments = header("anchors", o.seed);
  if (o.parallel) {
    std::vector<std::pair<std::string, std::string>> pairs;
    for (const auto& id : sel.anchors.ids()) pairs.emplace_back(id, id);
    ParallelAnchors pa(std::move(pairs));
    if (o.out.empty()) {
      for (const auto& [px, py] : pa.pairs()) out << px << " " << py << "\n";
    } else {
      save_parallel_anchors(pa, o.out, comments);
    }
  } else if (o.out.empty()) {
    for (const auto& id : sel.anchors.ids()) out << id << "\n";
  } else {
    save_anchors(sel.anchors, o.out, comments);
  }
  return 0;
}

int cmd_relativize(const Options& o, std::ostream& out) {
  EmbeddingSpace space = load_space(o.in);
  const auto anchors = load_anchors(o.anchors);
  if (o.center) space = center_features(space);
  const auto rel = project(space, anchors, {parse_kinds(o.kinds), parse_aggregation(o.agg)});
  const auto comments = header("relativize", o.seed);
  if (o.out.empty()) {
    out << format_relative(rel, comments);
  } else {
    save_relative(rel, o.out, comments);
  }
  return 0;
}

int cmd_estimate(const Options& o, std::ostream& out) {
  const auto source = load_space(o.src);
  const auto target = load_space(o.tgt);
  std::optional<ParallelAnchors> pairs;
  if (!o.anchors.empty()) {
    pairs = load_parallel_anchors(o.anchors);
  } else {
    // Every id present in both spaces, in source order.
    std::vector<std::pair<std::string, std::string>> shared;
    for (const auto& id : source.ids())
      if (target.find(id)) shared.emplace_back(id, id);
    require(!shared.empty(), "source and target share no ids; pass --anchors");
    pairs.emplace(std::move(shared));
  }
  const auto est = fit_translation(source, target, *pairs, parse_estimator_kind(o.method),
                                   parse_prep_mode(o.prep), {o.lr, o.max_iters, o.tol});
  const auto comments = header("estimate", o.seed);
  if (!o.out.empty()) save_transform(est, o.out, comments);
  EvalReport report;
  report.set("anchor_loss", est.final_loss);
  report.set("iterations", est.iterations);
  report.set("rank_warning", est.rank_warning ? 1.0 : 0.0);
  if (est.map.rows() == est.map.cols()) {
    const Matrix gram = est.map.transpose() * est.map;
    report.set("orthogonality_error",
               (gram - Matrix::Identity(gram.rows(), gram.cols())).norm());
  }
  report.metadata["method"] = to_string(est.method);
  report.metadata["seed"] = std::to_string(o.seed);
  out << report.to_text();
  if (o.record) out << report.to_record() << "\n";
  if (o.out.empty()) out << format_transform(est, comments);
  return 0;
}

int cmd_translate(const Options& o, std::ostream& out) {
  const auto space = load_space(o.in);
  const auto est = load_transform(o.xfm);
  const auto result = translate(space, est, o.normalized_output);
  const auto comments = header("translate", o.seed);
  if (o.out.empty()) {
    out << format_space(result, comments);
  } else {
    save_space(result, o.out, comments);
  }
  return 0;
}

int cmd_bootstrap(const Options& o, std::ostream& out) {
  const auto space_x = load_space(o.x);
  const auto space_y = load_space(o.y);
  const auto anchors_x = load_anchors(o.anchors);
  const auto seeds = load_parallel_anchors(o.seeds);
  AOConfig cfg;
  cfg.target_anchor_count = anchors_x.size();
  cfg.lr = o.ao_lr;
  cfg.max_outer_iters = o.ao_iters;
  cfg.sinkhorn_epsilon = o.epsilon;
  cfg.sinkhorn_iters = o.sinkhorn_iters;
  cfg.tol = o.ao_tol;
  cfg.seed = o.seed;
  const auto result = optimize_anchors(space_x, anchors_x, space_y, seeds, cfg);
  for (std::size_t k = 0; k < result.diagnostics.losses.size(); ++k) {
    out << "iter " << k << " loss " << detail::format_double(result.diagnostics.losses[k]) << "\n";
  }
  out << "iter " << result.diagnostics.iterations << " loss "
      << detail::format_double(result.diagnostics.final_loss) << "\n";
  const auto comments = header("bootstrap", o.seed);
  if (o.out.empty()) {
    for (const auto& [px, py] : result.correspondence.pairs()) out << px << " " << py << "\n";
  } else {
    save_parallel_anchors(result.correspondence, o.out, comments);
  }
  return 0;
}

int cmd_stitch(const Options& o, std::ostream& out) {
  const auto train = load_space(o.train);
  const auto test = load_space(o.test);
  const auto kind = parse_decoder_kind(o.decoder);
  EvalReport report;
  if (o.absolute) {
    const auto dec = train_decoder(train, kind, o.lambda, o.normalize);
    const double e2e = dec.accuracy(train.matrix(), train.labels());
    const double stitched = dec.accuracy(test.matrix(), test.labels());
    report.set("end_to_end_accuracy", e2e);
    report.set("stitch_accuracy", stitched);
    report.set("stitching_index", stitching_index(stitched, e2e));
  } else {
    const auto train_anchors = load_anchors(o.train_anchors);
    const auto test_anchors = load_anchors(o.test_anchors.empty() ? o.train_anchors : o.test_anchors);
    const ProjectionSpec spec{parse_kinds(o.kinds), parse_aggregation(o.agg)};
    const auto rel = project(train, train_anchors, spec);
    const auto dec = train_decoder(rel, kind, o.lambda, o.normalize);
    const double e2e = dec.accuracy(rel.coords(), rel.labels());
    const double stitched = stitch_accuracy(test, test_anchors, spec, dec).get("accuracy");
    report.set("end_to_end_accuracy", e2e);
    report.set("stitch_accuracy", stitched);
    report.set("stitching_index", stitching_index(stitched, e2e));
  }
  report.metadata["decoder"] = o.decoder;
  report.metadata["seed"] = std::to_string(o.seed);
  emit(report, o.record, o.out, out, header("stitch", o.seed));
  return 0;
}

int cmd_metrics(const Options& o, std::ostream& out) {
  EvalReport report;
  if (o.cmd == "retrieval") {
    report = retrieval_metrics(load_any(o.a), load_any(o.b), o.k);
  } else if (o.cmd == "cka") {
    report.set("cka", linear_cka(load_any(o.a).matrix(), load_any(o.b).matrix()));
  } else if (o.cmd == "proxy") {
    require(o.candidates.size() == o.perf.size(), "each --cand needs a matching --perf");
    const auto ref = load_relative(o.reference);
    std::vector<std::pair<RelativeSpace, double>> cands;
    for (std::size_t c = 0; c < o.candidates.size(); ++c)
      cands.emplace_back(load_relative(o.candidates[c]), o.perf[c]);
    report = performance_proxy(ref, cands);
  } else {
    throw ValidationError("unknown metrics command '" + o.cmd + "'");
  }
  report.metadata["cmd"] = o.cmd;
  report.metadata["seed"] = std::to_string(o.seed);
  emit(report, o.record, o.out, out, header("metrics", o.seed));
  return 0;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  Options o;
  CLI::App app{"relrep: relative representations, latent translation and stitching"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(kVersion));

  auto common = [&](CLI::App* sub) {
    sub->add_option("--seed", o.seed, "Seed for every random draw");
    sub->add_option("--out", o.out, "Output path (stdout when omitted)");
  };

  auto* synth = app.add_subcommand("synth", "Generate a synthetic space, optionally transformed");
  common(synth);
  synth->add_option("--n", o.n);
  synth->add_option("--d", o.d);
  synth->add_option("--classes", o.classes);
  synth->add_option("--in", o.in, "Transform this EMB1 file instead of generating")->check(CLI::ExistingFile);
  synth->add_option("--transform", o.transform);
  synth->add_option("--scale-lo", o.scale_lo);
  synth->add_option("--scale-hi", o.scale_hi);

  auto* anchors = app.add_subcommand("anchors", "Select anchors from a space");
  common(anchors);
  anchors->add_option("--in", o.in)->required()->check(CLI::ExistingFile);
  anchors->add_option("--strategy", o.strategy);
  anchors->add_option("--count", o.count);
  anchors->add_flag("--parallel", o.parallel, "Write 'id id' pairs for spaces sharing ids");

  auto* relativize = app.add_subcommand("relativize", "Relative or product projection");
  common(relativize);
  relativize->add_option("--in", o.in)->required()->check(CLI::ExistingFile);
  relativize->add_option("--anchors", o.anchors)->required()->check(CLI::ExistingFile);
  relativize->add_option("--kinds", o.kinds, "Comma list of cosine,euclidean,l1,linf");
  relativize->add_option("--agg", o.agg, "none, concat or normsum");
  relativize->add_flag("--center", o.center, "Subtract feature means before projecting");

  auto* est = app.add_subcommand("estimate", "Fit a direct transformation between spaces");
  common(est);
  est->add_option("--method", o.method, "linear, l_ortho, ortho or affine");
  est->add_option("--src", o.src)->required()->check(CLI::ExistingFile);
  est->add_option("--tgt", o.tgt)->required()->check(CLI::ExistingFile);
  est->add_option("--anchors", o.anchors, "Parallel-anchor file")->check(CLI::ExistingFile);
  est->add_option("--prep", o.prep, "standard, l2 or none");
  est->add_option("--lr", o.lr);
  est->add_option("--max-iters", o.max_iters);
  est->add_option("--tol", o.tol);
  est->add_flag("--record", o.record);

  auto* tr = app.add_subcommand("translate", "Apply a fitted transformation");
  common(tr);
  tr->add_option("--in", o.in)->required()->check(CLI::ExistingFile);
  tr->add_option("--xfm", o.xfm)->required()->check(CLI::ExistingFile);
  tr->add_flag("--normalized-output", o.normalized_output);

  auto* boot = app.add_subcommand("bootstrap", "Expand seed anchors into a full correspondence");
  common(boot);
  boot->add_option("--x", o.x)->required()->check(CLI::ExistingFile);
  boot->add_option("--y", o.y)->required()->check(CLI::ExistingFile);
  boot->add_option("--anchors", o.anchors, "X anchor file")->required()->check(CLI::ExistingFile);
  boot->add_option("--seeds", o.seeds, "Parallel seed file")->required()->check(CLI::ExistingFile);
  boot->add_option("--lr", o.ao_lr);
  boot->add_option("--max-iters", o.ao_iters);
  boot->add_option("--epsilon", o.epsilon);
  boot->add_option("--sinkhorn-iters", o.sinkhorn_iters);
  boot->add_option("--tol", o.ao_tol);

  auto* stitch = app.add_subcommand("stitch", "Zero-shot stitching with a closed-form decoder");
  common(stitch);
  stitch->add_option("--train", o.train)->required()->check(CLI::ExistingFile);
  stitch->add_option("--train-anchors", o.train_anchors)->check(CLI::ExistingFile);
  stitch->add_option("--test", o.test)->required()->check(CLI::ExistingFile);
  stitch->add_option("--test-anchors", o.test_anchors)->check(CLI::ExistingFile);
  stitch->add_option("--kinds", o.kinds);
  stitch->add_option("--agg", o.agg);
  stitch->add_option("--decoder", o.decoder, "centroid or ridge");
  stitch->add_option("--lambda", o.lambda);
  stitch->add_flag("--normalize", o.normalize, "L2-normalize decoder inputs");
  stitch->add_flag("--absolute", o.absolute, "Decode absolute coordinates directly");
  stitch->add_flag("--record", o.record);

  auto* metrics = app.add_subcommand("metrics", "Retrieval metrics, CKA or performance proxy");
  common(metrics);
  metrics->add_option("--cmd", o.cmd, "retrieval, cka or proxy");
  metrics->add_option("--a", o.a)->check(CLI::ExistingFile);
  metrics->add_option("--b", o.b)->check(CLI::ExistingFile);
  metrics->add_option("--k", o.k);
  metrics->add_option("--ref", o.reference)->check(CLI::ExistingFile);
  metrics->add_option("--cand", o.candidates)->check(CLI::ExistingFile);
  metrics->add_option("--perf", o.perf);
  metrics->add_flag("--record", o.record);

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      app.exit(e, out, err);
      return 0;
    }
    app.exit(e, err, err);
    err << app.help();
    return 1;
  }

  try {
    if (synth->parsed()) return cmd_synth(o, out);
    if (anchors->parsed()) {
      require(o.in.size() > 0, "--in is required");
      return cmd_anchors(o, out, err);
    }
    if (relativize->parsed()) return cmd_relativize(o, out);
    if (est->parsed()) return cmd_estimate(o, out);
    if (tr->parsed()) return cmd_translate(o, out);
    if (boot->parsed()) return cmd_bootstrap(o, out);
    if (stitch->parsed()) {
      require(o.absolute || !o.train_anchors.empty(), "--train-anchors is required unless --absolute");
      return cmd_stitch(o, out);
    }
    if (metrics->parsed()) return cmd_metrics(o, out);
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  } catch (const NumericalError& e) {
    err << "numerical error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}

int run(int argc, char** argv) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run(args, std::cout, std::cerr);
}

}  // namespace relrep
