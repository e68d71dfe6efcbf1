#include "relrep/eval.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include <json.hpp>

namespace relrep {

void EvalReport::set(const std::string& name, double value) {
  if (!std::isfinite(value)) throw NumericalError("metric '" + name + "' is not finite");
  for (auto& [key, v] : metrics) {
    if (key == name) {
      v = value;
      return;
    }
  }
  metrics.emplace_back(name, value);
}

bool EvalReport::has(const std::string& name) const {
  return std::any_of(metrics.begin(), metrics.end(),
                     [&](const auto& kv) { return kv.first == name; });
}

double EvalReport::get(const std::string& name) const {
  for (const auto& [key, v] : metrics)
    if (key == name) return v;
  throw ValidationError("report has no metric '" + name + "'");
}

std::string EvalReport::to_text() const {
  std::string out;
  char buf[64];
  for (const auto& [key, v] : metrics) {
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    out += key + "\t" + buf + "\n";
  }
  return out;
}

std::string EvalReport::to_record() const {
  nlohmann::ordered_json record;
  nlohmann::ordered_json m = nlohmann::ordered_json::object();
  for (const auto& [key, v] : metrics) m[key] = v;
  record["metrics"] = m;
  if (k) record["k"] = *k;
  nlohmann::ordered_json meta = nlohmann::ordered_json::object();
  for (const auto& [key, v] : metadata) meta[key] = v;
  record["metadata"] = meta;
  return record.dump();
}

namespace {

Matrix unit_rows(const Matrix& m) {
  Matrix out = m;
  for (Index i = 0; i < out.rows(); ++i) {
    const double norm = out.row(i).norm();
    if (norm > 0.0) out.row(i) /= norm;
  }
  return out;
}

// Indices of the k largest entries of `scores`, skipping `skip`; ties go to
// the lower index.
std::vector<Index> top_k(const Vector& scores, Index k, Index skip) {
  std::vector<Index> order;
  order.reserve(static_cast<std::size_t>(scores.size()));
  for (Index j = 0; j < scores.size(); ++j)
    if (j != skip) order.push_back(j);
  std::partial_sort(order.begin(), order.begin() + k, order.end(), [&](Index a, Index b) {
    if (scores(a) != scores(b)) return scores(a) > scores(b);
    return a < b;
  });
  order.resize(static_cast<std::size_t>(k));
  std::sort(order.begin(), order.end());
  return order;
}

// 1 + number of entries strictly more similar than entry `self`.
Index rank_of(const Vector& scores, Index self) {
  Index better = 0;
  for (Index j = 0; j < scores.size(); ++j)
    if (scores(j) > scores(self)) ++better;
  return better + 1;
}

Vector cosines_to(const Matrix& unit, const Eigen::Ref<const RowVector>& v) {
  const double norm = v.norm();
  Vector out = unit * v.transpose();
  if (norm > 0.0) out /= norm;
  return out;
}

EvalReport retrieval_core(const Matrix& src, const Matrix& tgt_aligned, Index k) {
  const Index n = src.rows();
  require(src.cols() == tgt_aligned.cols(),
          "retrieval metrics need comparable representations (widths " +
              std::to_string(src.cols()) + " vs " + std::to_string(tgt_aligned.cols()) + ")");
  require(k >= 1, "k must be at least 1");
  require(k < n, "k must be smaller than the number of samples");

  const Matrix src_unit = unit_rows(src);
  const Matrix tgt_unit = unit_rows(tgt_aligned);
  double jaccard = 0.0;
  double mrr = 0.0;
  double mrr_reverse = 0.0;
  double cosine = 0.0;
  for (Index i = 0; i < n; ++i) {
    const RowVector v = src.row(i);
    const Vector in_src = cosines_to(src_unit, v);
    const Vector in_tgt = cosines_to(tgt_unit, v);
    const auto a = top_k(in_src, k, i);
    const auto b = top_k(in_tgt, k, i);
    std::vector<Index> inter;
    std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(inter));
    const double uni = static_cast<double>(2 * k) - static_cast<double>(inter.size());
    jaccard += static_cast<double>(inter.size()) / uni;
    mrr += 1.0 / static_cast<double>(rank_of(in_tgt, i));

    const Vector back = cosines_to(src_unit, tgt_aligned.row(i));
    mrr_reverse += 1.0 / static_cast<double>(rank_of(back, i));
    cosine += cosine_of(src.row(i), tgt_aligned.row(i));
  }
  const double dn = static_cast<double>(n);
  EvalReport report;
  report.k = k;
  report.set("jaccard", jaccard / dn);
  report.set("mrr", mrr / dn);
  report.set("mrr_reverse", mrr_reverse / dn);
  report.set("cosine", cosine / dn);
  report.metadata["n"] = std::to_string(n);
  return report;
}

Matrix align_rows(const EmbeddingSpace& source, const EmbeddingSpace& target) {
  require(source.size() == target.size(), "retrieval metrics need identical id sets");
  Matrix aligned(target.size(), target.dim());
  for (Index i = 0; i < source.size(); ++i) {
    auto row = target.find(source.ids()[i]);
    require(row.has_value(), "id '" + source.ids()[i] + "' missing from target");
    aligned.row(i) = target.matrix().row(*row);
  }
  return aligned;
}

constexpr std::pair<DecoderKind, std::string_view> kDecoderNames[] = {
    {DecoderKind::centroid, "centroid"},
    {DecoderKind::ridge, "ridge"},
};

}  // namespace

EvalReport retrieval_metrics(const EmbeddingSpace& source, const EmbeddingSpace& target, Index k) {
  return retrieval_core(source.matrix(), align_rows(source, target), k);
}

EvalReport retrieval_metrics(const RelativeSpace& source, const RelativeSpace& target, Index k) {
  return retrieval_metrics(source.as_space(), target.as_space(), k);
}

double linear_cka(const Matrix& x, const Matrix& y) {
  require(x.rows() == y.rows(), "linear CKA needs the same number of rows");
  require(x.rows() >= 2, "linear CKA needs at least two rows");
  const Matrix xc = x.rowwise() - x.colwise().mean();
  const Matrix yc = y.rowwise() - y.colwise().mean();
  const double xx = (xc.transpose() * xc).norm();
  const double yy = (yc.transpose() * yc).norm();
  require(xx > 0.0 && yy > 0.0, "linear CKA of a zero centered matrix");
  const double cross = (yc.transpose() * xc).squaredNorm();
  const double cka = cross / (xx * yy);
  return std::clamp(cka, 0.0, 1.0);
}

std::string to_string(DecoderKind kind) {
  for (const auto& [k, name] : kDecoderNames)
    if (k == kind) return std::string(name);
  throw ValidationError("unknown decoder kind");
}

DecoderKind parse_decoder_kind(std::string_view name) {
  for (const auto& [k, n] : kDecoderNames)
    if (n == name) return k;
  throw ValidationError("unknown decoder kind '" + std::string(name) + "'");
}

Decoder Decoder::train(const Matrix& features, const std::vector<std::string>& labels,
                       DecoderKind kind, double ridge_lambda, bool normalize_inputs,
                       std::vector<RelativeBlock> blocks) {
  require(static_cast<Index>(labels.size()) == features.rows(), "label count mismatch");
  require(ridge_lambda >= 0.0 && std::isfinite(ridge_lambda), "ridge lambda must be >= 0");
  std::set<std::string> unique(labels.begin(), labels.end());
  require(unique.size() >= 2, "decoder needs at least two classes");

  Decoder dec;
  dec.kind_ = kind;
  dec.classes_.assign(unique.begin(), unique.end());
  dec.lambda_ = ridge_lambda;
  dec.normalize_ = normalize_inputs;
  dec.blocks_ = std::move(blocks);

  const Matrix x = normalize_inputs ? unit_rows(features) : features;
  const Index n = x.rows();
  const Index c = static_cast<Index>(dec.classes_.size());
  std::vector<Index> label_index(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) {
    label_index[i] = std::lower_bound(dec.classes_.begin(), dec.classes_.end(), labels[i]) -
                     dec.classes_.begin();
  }

  if (kind == DecoderKind::centroid) {
    dec.weights_ = Matrix::Zero(c, x.cols());
    std::vector<double> counts(static_cast<std::size_t>(c), 0.0);
    for (Index i = 0; i < n; ++i) {
      dec.weights_.row(label_index[i]) += x.row(i);
      counts[label_index[i]] += 1.0;
    }
    for (Index k = 0; k < c; ++k) dec.weights_.row(k) /= counts[k];
  } else {
    // One-vs-all on +-1 targets; the intercept is not penalized.
    Matrix targets = -Matrix::Ones(n, c);
    for (Index i = 0; i < n; ++i) targets(i, label_index[i]) = 1.0;
    const RowVector x_mean = x.colwise().mean();
    const RowVector t_mean = targets.colwise().mean();
    const Matrix xc = x.rowwise() - x_mean;
    const Matrix tc = targets.rowwise() - t_mean;
    Matrix w;
    if (ridge_lambda > 0.0) {
      Matrix gram = xc.transpose() * xc;
      gram.diagonal().array() += ridge_lambda;
      w = gram.ldlt().solve(xc.transpose() * tc);
    } else {
      w = xc.completeOrthogonalDecomposition().solve(tc);
    }
    dec.weights_.resize(x.cols() + 1, c);
    dec.weights_.topRows(x.cols()) = w;
    dec.weights_.row(x.cols()) = t_mean - x_mean * w;
  }
  if (!dec.weights_.allFinite()) throw NumericalError("decoder weights are not finite");
  return dec;
}

Matrix Decoder::scores(const Matrix& features) const {
  const Index dim = kind_ == DecoderKind::centroid ? weights_.cols() : weights_.rows() - 1;
  require(features.cols() == dim, "decoder expects width " + std::to_string(dim) + ", got " +
                                      std::to_string(features.cols()));
  const Matrix x = normalize_ ? unit_rows(features) : features;
  if (kind_ == DecoderKind::centroid) {
    Matrix out(x.rows(), weights_.rows());
    for (Index i = 0; i < x.rows(); ++i)
      for (Index k = 0; k < weights_.rows(); ++k)
        out(i, k) = -(x.row(i) - weights_.row(k)).squaredNorm();
    return out;
  }
  Matrix out = x * weights_.topRows(dim);
  out.rowwise() += weights_.row(dim);
  return out;
}

std::vector<std::string> Decoder::predict(const Matrix& features) const {
  const Matrix s = scores(features);
  std::vector<std::string> out;
  out.reserve(static_cast<std::size_t>(s.rows()));
  for (Index i = 0; i < s.rows(); ++i) {
    Index best = 0;
    for (Index k = 1; k < s.cols(); ++k)
      if (s(i, k) > s(i, best)) best = k;
    out.push_back(classes_[best]);
  }
  return out;
}

double Decoder::accuracy(const Matrix& features, const std::vector<std::string>& labels) const {
  require(static_cast<Index>(labels.size()) == features.rows(), "label count mismatch");
  const auto predicted = predict(features);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) hits += predicted[i] == labels[i];
  return static_cast<double>(hits) / static_cast<double>(labels.size());
}

Decoder train_decoder(const RelativeSpace& rel, DecoderKind kind, double ridge_lambda,
                      bool normalize_inputs) {
  require(rel.has_labels(), "decoder training needs labels");
  return Decoder::train(rel.coords(), rel.labels(), kind, ridge_lambda, normalize_inputs,
                        rel.blocks());
}

Decoder train_decoder(const EmbeddingSpace& space, DecoderKind kind, double ridge_lambda,
                      bool normalize_inputs) {
  require(space.has_labels(), "decoder training needs labels");
  return Decoder::train(space.matrix(), space.labels(), kind, ridge_lambda, normalize_inputs);
}

EvalReport stitch_accuracy(const EmbeddingSpace& encoder_space, const AnchorSet& anchors,
                           const ProjectionSpec& projection, const Decoder& decoder) {
  require(encoder_space.has_labels(), "stitching accuracy needs labels");
  const RelativeSpace rel = project(encoder_space, anchors, projection);
  const auto& expected = decoder.blocks();
  require(!expected.empty(), "decoder was not trained on a relative representation");
  bool same = expected.size() == rel.blocks().size();
  for (std::size_t b = 0; same && b < expected.size(); ++b) {
    same = expected[b].kinds == rel.blocks()[b].kinds &&
           expected[b].width() == rel.blocks()[b].width();
  }
  require(same, "block structure of the projected space does not match the decoder");
  EvalReport report;
  report.set("accuracy", decoder.accuracy(rel.coords(), encoder_space.labels()));
  report.set("n", static_cast<double>(encoder_space.size()));
  return report;
}

double stitching_index(double stitch_acc, double end_to_end_acc) {
  require(std::isfinite(stitch_acc) && std::isfinite(end_to_end_acc), "non-finite accuracy");
  require(end_to_end_acc > 0.0, "stitching index needs a positive end-to-end score");
  return stitch_acc / end_to_end_acc;
}

double pearson(const Vector& a, const Vector& b) {
  require(a.size() == b.size() && a.size() >= 2, "pearson needs two equal-length series");
  const Vector ac = a.array() - a.mean();
  const Vector bc = b.array() - b.mean();
  const double denom = std::sqrt(ac.squaredNorm() * bc.squaredNorm());
  require(denom > 0.0, "zero variance");
  return std::clamp(ac.dot(bc) / denom, -1.0, 1.0);
}

EvalReport performance_proxy(const RelativeSpace& reference,
                             const std::vector<std::pair<RelativeSpace, double>>& candidates) {
  require(candidates.size() >= 3, "performance proxy needs at least 3 candidates");
  const Index count = static_cast<Index>(candidates.size());
  Vector sims(count);
  Vector perf(count);
  for (Index c = 0; c < count; ++c) {
    const auto& [cand, score] = candidates[static_cast<std::size_t>(c)];
    require(cand.width() == reference.width(), "candidate width differs from the reference");
    const Matrix aligned = align_rows(reference.as_space(), cand.as_space());
    double total = 0.0;
    for (Index i = 0; i < reference.size(); ++i)
      total += cosine_of(aligned.row(i), reference.coords().row(i));
    sims(c) = total / static_cast<double>(reference.size());
    perf(c) = score;
  }
  EvalReport report;
  for (Index c = 0; c < count; ++c) report.set("similarity_" + std::to_string(c), sims(c));
  report.set("pearson", pearson(sims, perf));
  return report;
}

}  // namespace relrep
