#include "relrep/spaces.hpp"

#include <algorithm>
#include <limits>
#include <numeric>
#include <random>
#include <unordered_set>

#include "text_io.hpp"

namespace relrep {

EmbeddingSpace::EmbeddingSpace(std::vector<std::string> ids, Matrix matrix,
                               std::optional<std::vector<std::string>> labels)
    : ids_(std::move(ids)), matrix_(std::move(matrix)), labels_(std::move(labels)) {
  require(!ids_.empty(), "embedding space must contain at least one sample");
  require(static_cast<Index>(ids_.size()) == matrix_.rows(),
          "id count " + std::to_string(ids_.size()) + " does not match row count " +
              std::to_string(matrix_.rows()));
  require(matrix_.cols() >= 1, "embedding dimension must be at least 1");
  require(matrix_.allFinite(), "embedding matrix contains non-finite values");
  index_.reserve(ids_.size());
  for (Index i = 0; i < static_cast<Index>(ids_.size()); ++i) {
    const auto& id = ids_[i];
    require(!id.empty() && !detail::has_whitespace(id) && id.front() != '#',
            "invalid id '" + id + "'");
    require(index_.emplace(id, i).second, "duplicate id '" + id + "'");
  }
  if (labels_) {
    require(labels_->size() == ids_.size(), "label count does not match sample count");
    for (const auto& label : *labels_) {
      require(!label.empty() && !detail::has_whitespace(label) && label != "-",
              "invalid label '" + label + "'");
    }
  }
}

const std::vector<std::string>& EmbeddingSpace::labels() const {
  require(labels_.has_value(), "embedding space has no labels");
  return *labels_;
}

std::optional<Index> EmbeddingSpace::find(std::string_view id) const {
  auto it = index_.find(std::string(id));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

Index EmbeddingSpace::index_of(std::string_view id) const {
  auto found = find(id);
  require(found.has_value(), "unknown id '" + std::string(id) + "'");
  return *found;
}

EmbeddingSpace EmbeddingSpace::with_matrix(Matrix matrix) const {
  return EmbeddingSpace(ids_, std::move(matrix), labels_);
}

EmbeddingSpace EmbeddingSpace::subset(const std::vector<Index>& rows) const {
  std::vector<std::string> ids;
  Matrix m(static_cast<Index>(rows.size()), dim());
  std::optional<std::vector<std::string>> labels;
  if (labels_) labels.emplace();
  for (std::size_t k = 0; k < rows.size(); ++k) {
    const Index r = rows[k];
    require(r >= 0 && r < size(), "row index out of range");
    ids.push_back(ids_[r]);
    m.row(static_cast<Index>(k)) = matrix_.row(r);
    if (labels) labels->push_back((*labels_)[r]);
  }
  return EmbeddingSpace(std::move(ids), std::move(m), std::move(labels));
}

AnchorSet::AnchorSet(std::vector<std::string> ids) : ids_(std::move(ids)) {
  require(!ids_.empty(), "anchor set must not be empty");
  std::unordered_set<std::string> seen;
  for (const auto& id : ids_) {
    require(seen.insert(id).second, "duplicate anchor id '" + id + "'");
  }
}

std::vector<Index> AnchorSet::resolve(const EmbeddingSpace& space) const {
  std::vector<Index> rows;
  rows.reserve(ids_.size());
  for (const auto& id : ids_) {
    auto found = space.find(id);
    require(found.has_value(), "anchor id '" + id + "' not found in space");
    rows.push_back(*found);
  }
  return rows;
}

Matrix AnchorSet::embed(const EmbeddingSpace& space) const {
  const auto rows = resolve(space);
  Matrix out(size(), space.dim());
  for (Index j = 0; j < size(); ++j) out.row(j) = space.matrix().row(rows[j]);
  return out;
}

ParallelAnchors::ParallelAnchors(std::vector<std::pair<std::string, std::string>> pairs)
    : pairs_(std::move(pairs)) {
  require(!pairs_.empty(), "parallel anchors must not be empty");
  std::unordered_set<std::string> xs;
  std::unordered_set<std::string> ys;
  for (const auto& [x, y] : pairs_) {
    require(xs.insert(x).second, "duplicate X-side anchor id '" + x + "'");
    require(ys.insert(y).second, "duplicate Y-side anchor id '" + y + "'");
  }
}

AnchorSet ParallelAnchors::x_side() const {
  std::vector<std::string> ids;
  for (const auto& p : pairs_) ids.push_back(p.first);
  return AnchorSet(std::move(ids));
}

AnchorSet ParallelAnchors::y_side() const {
  std::vector<std::string> ids;
  for (const auto& p : pairs_) ids.push_back(p.second);
  return AnchorSet(std::move(ids));
}

namespace {

constexpr std::pair<TransformKind, std::string_view> kTransformNames[] = {
    {TransformKind::orthogonal, "orthogonal"},
    {TransformKind::isometry, "isometry"},
    {TransformKind::translation, "translation"},
    {TransformKind::permutation, "permutation"},
    {TransformKind::isotropic_scaling, "isotropic_scaling"},
    {TransformKind::local_rescaling, "local_rescaling"},
    {TransformKind::linear, "linear"},
    {TransformKind::affine, "affine"},
};

constexpr double kMaxCondition = 100.0;
constexpr double kSyntheticSeparation = 8.0;

Matrix gaussian_matrix(Index rows, Index cols, std::mt19937_64& rng) {
  std::normal_distribution<double> normal;
  Matrix m(rows, cols);
  // Fill row by row so the draw order does not depend on storage order.
  for (Index i = 0; i < rows; ++i)
    for (Index j = 0; j < cols; ++j) m(i, j) = normal(rng);
  return m;
}

Matrix haar_orthogonal(Index d, std::mt19937_64& rng) {
  const Matrix g = gaussian_matrix(d, d, rng);
  Eigen::HouseholderQR<Matrix> qr(g);
  Matrix q = qr.householderQ();
  const Matrix r = qr.matrixQR().triangularView<Eigen::Upper>();
  for (Index j = 0; j < d; ++j) {
    if (r(j, j) < 0) q.col(j) *= -1.0;
  }
  return q;
}

double condition_number(const Matrix& m) {
  Eigen::JacobiSVD<Matrix> svd(m);
  const auto& s = svd.singularValues();
  if (s(s.size() - 1) <= 0) return std::numeric_limits<double>::infinity();
  return s(0) / s(s.size() - 1);
}

Matrix well_conditioned(Index d, std::mt19937_64& rng) {
  for (int attempt = 0; attempt < 256; ++attempt) {
    Matrix m = gaussian_matrix(d, d, rng);
    if (condition_number(m) <= kMaxCondition) return m;
  }
  // Large d: Gaussian draws essentially never meet the cap. Build the map from
  // its SVD instead, with singular values in [1, 10].
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const Matrix u = haar_orthogonal(d, rng);
  const Matrix v = haar_orthogonal(d, rng);
  Vector s(d);
  for (Index i = 0; i < d; ++i) s(i) = std::pow(10.0, unit(rng));
  return u * s.asDiagonal() * v.transpose();
}

RowVector random_translation(Index d, double lo, double hi, std::mt19937_64& rng) {
  RowVector dir = gaussian_matrix(1, d, rng);
  while (dir.norm() == 0.0) dir = gaussian_matrix(1, d, rng);
  std::uniform_real_distribution<double> mag(lo, hi);
  return dir.normalized() * mag(rng);
}

}  // namespace

std::string to_string(TransformKind kind) {
  for (const auto& [k, name] : kTransformNames)
    if (k == kind) return std::string(name);
  throw ValidationError("unknown transform kind");
}

TransformKind parse_transform_kind(std::string_view name) {
  for (const auto& [k, n] : kTransformNames)
    if (n == name) return k;
  throw ValidationError("unknown transform kind '" + std::string(name) + "'");
}

void SyntheticTransformSpec::validate() const {
  require(scale_lo > 0.0 && std::isfinite(scale_lo), "scale lower bound must be positive");
  require(std::isfinite(scale_hi) && scale_hi >= scale_lo, "scale upper bound must be >= lower bound");
}

Matrix SampledTransform::apply(const Matrix& x) const {
  require(x.cols() == linear.rows(), "transform dimension mismatch");
  Matrix out = x * linear;
  if (row_scales.size() > 0) {
    require(row_scales.size() == x.rows(), "transform row count mismatch");
    out = row_scales.asDiagonal() * out;
  }
  out.rowwise() += offset;
  return out;
}

Matrix random_orthogonal(Index d, Seed seed) {
  require(d >= 1, "dimension must be positive");
  std::mt19937_64 rng(seed);
  return haar_orthogonal(d, rng);
}

SampledTransform sample_transform(const SyntheticTransformSpec& spec, Index rows, Index dim) {
  spec.validate();
  require(dim >= 1, "dimension must be positive");
  std::mt19937_64 rng(spec.seed);
  SampledTransform t{spec.kind, Matrix::Identity(dim, dim), RowVector::Zero(dim), Vector()};
  std::uniform_real_distribution<double> scale(spec.scale_lo, spec.scale_hi);
  switch (spec.kind) {
    case TransformKind::orthogonal:
      t.linear = haar_orthogonal(dim, rng);
      break;
    case TransformKind::isometry:
      t.linear = haar_orthogonal(dim, rng);
      t.offset = random_translation(dim, spec.scale_lo, spec.scale_hi, rng);
      break;
    case TransformKind::translation:
      t.offset = random_translation(dim, spec.scale_lo, spec.scale_hi, rng);
      break;
    case TransformKind::permutation: {
      std::vector<Index> perm(static_cast<std::size_t>(dim));
      std::iota(perm.begin(), perm.end(), Index{0});
      std::shuffle(perm.begin(), perm.end(), rng);
      t.linear.setZero();
      // Column j of the output is input column perm[j].
      for (Index j = 0; j < dim; ++j) t.linear(perm[j], j) = 1.0;
      break;
    }
    case TransformKind::isotropic_scaling:
      t.linear *= scale(rng);
      break;
    case TransformKind::local_rescaling:
      t.row_scales.resize(rows);
      for (Index i = 0; i < rows; ++i) t.row_scales(i) = scale(rng);
      break;
    case TransformKind::linear:
      t.linear = well_conditioned(dim, rng);
      break;
    case TransformKind::affine:
      t.linear = well_conditioned(dim, rng);
      t.offset = gaussian_matrix(1, dim, rng);
      break;
  }
  return t;
}

EmbeddingSpace apply_transform(const EmbeddingSpace& space, const SyntheticTransformSpec& spec) {
  const auto t = sample_transform(spec, space.size(), space.dim());
  return space.with_matrix(t.apply(space.matrix()));
}

EmbeddingSpace generate_synthetic(Index n, Index d, Index classes, Seed seed, double mean_offset) {
  require(classes >= 1, "classes must be at least 1");
  require(n >= classes, "n must be at least the number of classes");
  require(d >= 2, "dimension must be at least 2");
  require(mean_offset >= 0.0 && std::isfinite(mean_offset), "mean offset must be non-negative");
  std::mt19937_64 rng(seed);

  Matrix means = gaussian_matrix(classes, d, rng);
  if (classes > 1) {
    double min_dist = std::numeric_limits<double>::infinity();
    for (Index a = 0; a < classes; ++a)
      for (Index b = a + 1; b < classes; ++b)
        min_dist = std::min(min_dist, (means.row(a) - means.row(b)).norm());
    while (min_dist <= 1e-12) {
      means = gaussian_matrix(classes, d, rng);
      min_dist = std::numeric_limits<double>::infinity();
      for (Index a = 0; a < classes; ++a)
        for (Index b = a + 1; b < classes; ++b)
          min_dist = std::min(min_dist, (means.row(a) - means.row(b)).norm());
    }
    means *= kSyntheticSeparation / min_dist;
  }
  if (mean_offset > 0.0) {
    RowVector shift = gaussian_matrix(1, d, rng);
    shift *= mean_offset / shift.norm();
    means.rowwise() += shift;
  }

  std::vector<std::string> ids;
  std::vector<std::string> labels;
  ids.reserve(static_cast<std::size_t>(n));
  labels.reserve(static_cast<std::size_t>(n));
  Matrix x = gaussian_matrix(n, d, rng);
  for (Index i = 0; i < n; ++i) {
    const Index c = i % classes;
    x.row(i) += means.row(c);
    ids.push_back("s" + std::to_string(i));
    labels.push_back("c" + std::to_string(c));
  }
  return EmbeddingSpace(std::move(ids), std::move(x), std::move(labels));
}

namespace {

constexpr std::pair<AnchorStrategy, std::string_view> kStrategyNames[] = {
    {AnchorStrategy::uniform, "uniform"},
    {AnchorStrategy::fps, "fps"},
    {AnchorStrategy::kmeans, "kmeans"},
};

constexpr int kKMeansMaxIters = 100;

std::vector<Index> uniform_rows(Index n, Index m, std::mt19937_64& rng) {
  std::vector<Index> rows(static_cast<std::size_t>(n));
  std::iota(rows.begin(), rows.end(), Index{0});
  // Partial Fisher-Yates; the first m slots are the sample.
  for (Index i = 0; i < m; ++i) {
    std::uniform_int_distribution<Index> pick(i, n - 1);
    std::swap(rows[i], rows[pick(rng)]);
  }
  rows.resize(static_cast<std::size_t>(m));
  return rows;
}

std::vector<std::string> ids_for(const EmbeddingSpace& space, const std::vector<Index>& rows) {
  std::vector<std::string> out;
  out.reserve(rows.size());
  for (Index r : rows) out.push_back(space.ids()[r]);
  return out;
}

}  // namespace

std::string to_string(AnchorStrategy strategy) {
  for (const auto& [s, name] : kStrategyNames)
    if (s == strategy) return std::string(name);
  throw ValidationError("unknown anchor strategy");
}

AnchorStrategy parse_anchor_strategy(std::string_view name) {
  for (const auto& [s, n] : kStrategyNames)
    if (n == name) return s;
  throw ValidationError("unknown anchor strategy '" + std::string(name) + "'");
}

std::vector<Index> farthest_point_sampling(const Matrix& points, Index count, Index start) {
  const Index n = points.rows();
  require(count >= 1 && count <= n, "anchor count must be in [1, n]");
  require(start >= 0 && start < n, "start index out of range");
  std::vector<Index> chosen{start};
  std::vector<bool> taken(static_cast<std::size_t>(n), false);
  taken[start] = true;
  Vector nearest(n);
  for (Index i = 0; i < n; ++i) nearest(i) = (points.row(i) - points.row(start)).norm();
  while (static_cast<Index>(chosen.size()) < count) {
    Index best = -1;
    double best_dist = -1.0;
    for (Index i = 0; i < n; ++i) {
      if (!taken[i] && nearest(i) > best_dist) {
        best = i;
        best_dist = nearest(i);
      }
    }
    chosen.push_back(best);
    taken[best] = true;
    for (Index i = 0; i < n; ++i)
      nearest(i) = std::min(nearest(i), (points.row(i) - points.row(best)).norm());
  }
  return chosen;
}

AnchorSelection select_anchors(const EmbeddingSpace& space, AnchorStrategy strategy, Index count,
                               Seed seed) {
  const Index n = space.size();
  require(count >= 1, "anchor count must be at least 1");
  require(count <= n, "anchor count " + std::to_string(count) + " exceeds sample count " +
                          std::to_string(n));
  std::mt19937_64 rng(seed);
  const Matrix& x = space.matrix();

  switch (strategy) {
    case AnchorStrategy::uniform:
      return {AnchorSet(ids_for(space, uniform_rows(n, count, rng))), false, 0};
    case AnchorStrategy::fps: {
      std::uniform_int_distribution<Index> pick(0, n - 1);
      return {AnchorSet(ids_for(space, farthest_point_sampling(x, count, pick(rng)))), false, 0};
    }
    case AnchorStrategy::kmeans:
      break;
  }

  Matrix centers(count, x.cols());
  {
    const auto init = uniform_rows(n, count, rng);
    for (Index j = 0; j < count; ++j) centers.row(j) = x.row(init[j]);
  }
  std::vector<Index> assign(static_cast<std::size_t>(n), -1);
  Matrix best_centers = centers;
  double best_inertia = std::numeric_limits<double>::infinity();
  bool converged = false;
  int iter = 0;
  for (; iter < kKMeansMaxIters; ++iter) {
    bool changed = false;
    double inertia = 0.0;
    for (Index i = 0; i < n; ++i) {
      Index arg = 0;
      double best = std::numeric_limits<double>::infinity();
      for (Index j = 0; j < count; ++j) {
        const double dist = (x.row(i) - centers.row(j)).squaredNorm();
        if (dist < best) {
          best = dist;
          arg = j;
        }
      }
      inertia += best;
      if (assign[i] != arg) {
        assign[i] = arg;
        changed = true;
      }
    }
    if (inertia < best_inertia) {
      best_inertia = inertia;
      best_centers = centers;
    }
    if (!changed) {
      converged = true;
      break;
    }
    Matrix sums = Matrix::Zero(count, x.cols());
    std::vector<Index> counts(static_cast<std::size_t>(count), 0);
    for (Index i = 0; i < n; ++i) {
      sums.row(assign[i]) += x.row(i);
      ++counts[assign[i]];
    }
    for (Index j = 0; j < count; ++j) {
      if (counts[j] > 0) centers.row(j) = sums.row(j) / static_cast<double>(counts[j]);
    }
  }
  if (converged) best_centers = centers;

  // Nearest sample per centroid; a sample already claimed falls through to
  // the next-nearest one.
  std::vector<bool> taken(static_cast<std::size_t>(n), false);
  std::vector<Index> rows;
  for (Index j = 0; j < count; ++j) {
    Index arg = -1;
    double best = std::numeric_limits<double>::infinity();
    for (Index i = 0; i < n; ++i) {
      if (taken[i]) continue;
      const double dist = (x.row(i) - best_centers.row(j)).squaredNorm();
      if (dist < best) {
        best = dist;
        arg = i;
      }
    }
    taken[arg] = true;
    rows.push_back(arg);
  }
  return {AnchorSet(ids_for(space, rows)), !converged, iter};
}

// ---------------------------------------------------------------------------
// EMB1 / anchor files

EmbeddingSpace parse_space(std::string_view text) {
  const auto lines = detail::content_lines(text);
  require(!lines.empty(), "empty EMB1 file");
  const auto header = detail::split_ws(lines[0].text);
  Index n = 0;
  Index d = 0;
  require(header.size() == 4 && header[0] == "EMB1" && detail::parse_int(header[1], n) &&
              detail::parse_int(header[2], d) && n >= 1 && d >= 1 &&
              (header[3] == "labeled" || header[3] == "unlabeled"),
          "malformed header" + detail::at_line(lines[0].number));
  const bool labeled = header[3] == "labeled";
  require(static_cast<Index>(lines.size()) - 1 == n,
          "expected " + std::to_string(n) + " rows, found " + std::to_string(lines.size() - 1));

  std::vector<std::string> ids;
  std::vector<std::string> labels;
  std::unordered_set<std::string> seen;
  Matrix m(n, d);
  for (Index i = 0; i < n; ++i) {
    const auto& line = lines[static_cast<std::size_t>(i) + 1];
    const auto tokens = detail::split_ws(line.text);
    require(static_cast<Index>(tokens.size()) == d + 2,
            "row length mismatch" + detail::at_line(line.number));
    std::string id(tokens[0]);
    require(seen.insert(id).second, "duplicate id '" + id + "'" + detail::at_line(line.number));
    ids.push_back(std::move(id));
    if (labeled) {
      require(tokens[1] != "-", "missing label" + detail::at_line(line.number));
      labels.emplace_back(tokens[1]);
    }
    for (Index j = 0; j < d; ++j) {
      double v = 0.0;
      require(detail::parse_double(tokens[static_cast<std::size_t>(j) + 2], v),
              "malformed number" + detail::at_line(line.number));
      require(std::isfinite(v), "non-finite value" + detail::at_line(line.number));
      m(i, j) = v;
    }
  }
  std::optional<std::vector<std::string>> maybe_labels;
  if (labeled) maybe_labels = std::move(labels);
  return EmbeddingSpace(std::move(ids), std::move(m), std::move(maybe_labels));
}

EmbeddingSpace load_space(const std::string& path) { return parse_space(detail::read_file(path)); }

std::string format_space(const EmbeddingSpace& space, const std::vector<std::string>& comments) {
  std::string out = detail::comment_block(comments);
  out += "EMB1 " + std::to_string(space.size()) + " " + std::to_string(space.dim()) + " " +
         (space.has_labels() ? "labeled" : "unlabeled") + "\n";
  for (Index i = 0; i < space.size(); ++i) {
    out += space.ids()[i];
    out += ' ';
    out += space.has_labels() ? space.labels()[i] : std::string("-");
    for (Index j = 0; j < space.dim(); ++j) {
      out += ' ';
      out += detail::format_double(space.matrix()(i, j));
    }
    out += '\n';
  }
  return out;
}

void save_space(const EmbeddingSpace& space, const std::string& path,
                const std::vector<std::string>& comments) {
  detail::write_file(path, format_space(space, comments));
}

AnchorSet load_anchors(const std::string& path) {
  const std::string text = detail::read_file(path);
  std::vector<std::string> ids;
  for (const auto& line : detail::content_lines(text)) {
    const auto tokens = detail::split_ws(line.text);
    require(tokens.size() == 1, "expected one id" + detail::at_line(line.number));
    ids.emplace_back(tokens[0]);
  }
  return AnchorSet(std::move(ids));
}

void save_anchors(const AnchorSet& anchors, const std::string& path,
                  const std::vector<std::string>& comments) {
  std::string out = detail::comment_block(comments);
  for (const auto& id : anchors.ids()) out += id + "\n";
  detail::write_file(path, out);
}

ParallelAnchors load_parallel_anchors(const std::string& path) {
  const std::string text = detail::read_file(path);
  std::vector<std::pair<std::string, std::string>> pairs;
  for (const auto& line : detail::content_lines(text)) {
    const auto tokens = detail::split_ws(line.text);
    require(tokens.size() == 2, "expected two ids" + detail::at_line(line.number));
    pairs.emplace_back(std::string(tokens[0]), std::string(tokens[1]));
  }
  return ParallelAnchors(std::move(pairs));
}

void save_parallel_anchors(const ParallelAnchors& pairs, const std::string& path,
                           const std::vector<std::string>& comments) {
  std::string out = detail::comment_block(comments);
  for (const auto& [x, y] : pairs.pairs()) out += x + " " + y + "\n";
  detail::write_file(path, out);
}

}  // namespace relrep
