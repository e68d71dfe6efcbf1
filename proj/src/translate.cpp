#include "relrep/translate.hpp"

#include <cmath>
#include <limits>

#include "text_io.hpp"

namespace relrep {

namespace {

constexpr std::pair<PrepMode, std::string_view> kPrepNames[] = {
    {PrepMode::standard, "standard"},
    {PrepMode::l2, "l2"},
    {PrepMode::none, "none"},
};

constexpr std::pair<EstimatorKind, std::string_view> kEstimatorNames[] = {
    {EstimatorKind::linear, "linear"},
    {EstimatorKind::l_ortho, "l_ortho"},
    {EstimatorKind::ortho, "ortho"},
    {EstimatorKind::affine, "affine"},
};

void check_pair(const Matrix& x, const Matrix& y) {
  require(x.rows() >= 1, "estimator needs at least one anchor");
  require(x.rows() == y.rows(), "anchor count mismatch (" + std::to_string(x.rows()) + " vs " +
                                    std::to_string(y.rows()) + ")");
  require(x.cols() >= 1 && y.cols() >= 1, "empty anchor dimension");
  require(x.allFinite() && y.allFinite(), "anchor matrices contain non-finite values");
}

TransformEstimate make_estimate(Matrix map, RowVector bias, EstimatorKind method) {
  TransformEstimate est;
  est.source_prep = Preprocessor::identity(map.rows());
  est.target_prep = Preprocessor::identity(map.cols());
  est.map = std::move(map);
  est.bias = std::move(bias);
  est.method = method;
  return est;
}

// Nearest orthogonal matrix in Frobenius norm: U V^T from the thin SVD.
Matrix polar_factor(const Matrix& m) {
  Eigen::JacobiSVD<Matrix> svd(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
  return svd.matrixU() * svd.matrixV().transpose();
}

double affine_loss(const Matrix& x, const Matrix& y, const Matrix& r, const RowVector& b) {
  Matrix residual = x * r - y;
  residual.rowwise() += b;
  return residual.squaredNorm() / static_cast<double>(x.rows());
}

}  // namespace

std::string to_string(PrepMode mode) {
  for (const auto& [m, name] : kPrepNames)
    if (m == mode) return std::string(name);
  throw ValidationError("unknown preprocessing mode");
}

PrepMode parse_prep_mode(std::string_view name) {
  for (const auto& [m, n] : kPrepNames)
    if (n == name) return m;
  throw ValidationError("unknown preprocessing mode '" + std::string(name) + "'");
}

std::string to_string(EstimatorKind kind) {
  for (const auto& [k, name] : kEstimatorNames)
    if (k == kind) return std::string(name);
  throw ValidationError("unknown estimator");
}

EstimatorKind parse_estimator_kind(std::string_view name) {
  for (const auto& [k, n] : kEstimatorNames)
    if (n == name) return k;
  throw ValidationError("unknown estimator '" + std::string(name) + "'");
}

Preprocessor Preprocessor::identity(Index dim) {
  Preprocessor p;
  p.mode = PrepMode::none;
  p.input_dim = dim;
  p.pad_to = dim;
  return p;
}

Preprocessor fit_preprocessor(const Matrix& anchors, PrepMode mode, Index pad_to) {
  const Index d = anchors.cols();
  require(d >= 1, "preprocessor needs at least one feature");
  require(pad_to >= d, "pad_to " + std::to_string(pad_to) + " is smaller than dimension " +
                           std::to_string(d));
  Preprocessor p;
  p.mode = mode;
  p.input_dim = d;
  p.pad_to = pad_to;
  if (mode != PrepMode::standard) return p;

  const Index m = anchors.rows();
  require(m >= 2, "standard scaling needs at least 2 anchors");
  p.means = anchors.colwise().mean();
  const Matrix centered = anchors.rowwise() - p.means;
  // Population variance (divide by m).
  p.stds = (centered.colwise().squaredNorm() / static_cast<double>(m)).cwiseSqrt();
  for (Index j = 0; j < d; ++j) {
    if (!(p.stds(j) > Preprocessor::kStdFloor)) {
      p.stds(j) = Preprocessor::kStdFloor;
      p.warning = true;
    }
  }
  return p;
}

Preprocessor fit_preprocessor(const Matrix& anchors, PrepMode mode) {
  return fit_preprocessor(anchors, mode, anchors.cols());
}

Matrix preprocess(const Matrix& x, const Preprocessor& prep) {
  require(x.cols() == prep.input_dim, "preprocess: expected dimension " +
                                          std::to_string(prep.input_dim) + ", got " +
                                          std::to_string(x.cols()));
  Matrix out = Matrix::Zero(x.rows(), prep.pad_to);
  switch (prep.mode) {
    case PrepMode::standard:
      out.leftCols(prep.input_dim) =
          (x.rowwise() - prep.means).array().rowwise() / prep.stds.array();
      break;
    case PrepMode::l2:
      for (Index i = 0; i < x.rows(); ++i) {
        const double norm = x.row(i).norm();
        require(norm > 0.0, "l2 normalization of a zero row");
        out.row(i).head(prep.input_dim) = x.row(i) / norm;
      }
      break;
    case PrepMode::none:
      out.leftCols(prep.input_dim) = x;
      break;
  }
  return out;
}

Matrix depreprocess(const Matrix& x, const Preprocessor& prep) {
  require(prep.mode != PrepMode::l2, "l2 normalization is not invertible");
  require(x.cols() == prep.pad_to, "depreprocess: expected dimension " +
                                       std::to_string(prep.pad_to) + ", got " +
                                       std::to_string(x.cols()));
  Matrix out = x.leftCols(prep.input_dim);
  if (prep.mode == PrepMode::standard) {
    out = (out.array().rowwise() * prep.stds.array()).matrix().rowwise() + prep.means;
  }
  return out;
}

EmbeddingSpace preprocess(const EmbeddingSpace& space, const Preprocessor& prep) {
  return space.with_matrix(preprocess(space.matrix(), prep));
}

EmbeddingSpace depreprocess(const EmbeddingSpace& space, const Preprocessor& prep) {
  return space.with_matrix(depreprocess(space.matrix(), prep));
}

Matrix TransformEstimate::apply(const Matrix& x) const {
  require(x.cols() == map.rows(), "transform expects dimension " + std::to_string(map.rows()) +
                                      ", got " + std::to_string(x.cols()));
  Matrix out = x * map;
  out.rowwise() += bias;
  return out;
}

TransformEstimate estimate_linear(const Matrix& x_anchors, const Matrix& y_anchors) {
  check_pair(x_anchors, y_anchors);
  Eigen::CompleteOrthogonalDecomposition<Matrix> cod(x_anchors);
  Matrix r = cod.solve(y_anchors);
  if (!r.allFinite()) throw NumericalError("least squares produced non-finite values");
  auto est = make_estimate(std::move(r), RowVector::Zero(y_anchors.cols()), EstimatorKind::linear);
  est.rank_warning = cod.rank() < x_anchors.cols();
  est.final_loss = (x_anchors * est.map - y_anchors).squaredNorm() /
                   static_cast<double>(x_anchors.rows());
  return est;
}

TransformEstimate estimate_l_ortho(const Matrix& x_anchors, const Matrix& y_anchors) {
  auto est = estimate_linear(x_anchors, y_anchors);
  require(est.map.rows() == est.map.cols(),
          "orthogonal estimators need equal dimensions (pad the smaller space)");
  est.map = polar_factor(est.map);
  est.method = EstimatorKind::l_ortho;
  est.final_loss = (x_anchors * est.map - y_anchors).squaredNorm() /
                   static_cast<double>(x_anchors.rows());
  return est;
}

TransformEstimate estimate_ortho(const Matrix& x_anchors, const Matrix& y_anchors) {
  check_pair(x_anchors, y_anchors);
  require(x_anchors.cols() == y_anchors.cols(),
          "orthogonal estimators need equal dimensions (pad the smaller space)");
  Matrix r = polar_factor(x_anchors.transpose() * y_anchors);
  if (!r.allFinite()) throw NumericalError("Procrustes produced non-finite values");
  auto est = make_estimate(std::move(r), RowVector::Zero(y_anchors.cols()), EstimatorKind::ortho);
  est.final_loss = (x_anchors * est.map - y_anchors).squaredNorm() /
                   static_cast<double>(x_anchors.rows());
  return est;
}

TransformEstimate estimate_affine(const Matrix& x_anchors, const Matrix& y_anchors,
                                  const AffineConfig& config) {
  check_pair(x_anchors, y_anchors);
  require(config.lr > 0.0, "learning rate must be positive");
  require(config.max_iters >= 0, "max_iters must be non-negative");
  require(config.tol >= 0.0, "tolerance must be non-negative");

  const double m = static_cast<double>(x_anchors.rows());
  const RowVector x_mean = x_anchors.colwise().mean();
  const RowVector y_mean = y_anchors.colwise().mean();
  const Matrix xc = x_anchors.rowwise() - x_mean;
  const Matrix yc = y_anchors.rowwise() - y_mean;
  Eigen::CompleteOrthogonalDecomposition<Matrix> cod(xc);
  Matrix r = cod.solve(yc);
  RowVector b = y_mean - x_mean * r;

  double loss = affine_loss(x_anchors, y_anchors, r, b);
  if (!std::isfinite(loss)) throw NumericalError("affine estimator: non-finite initial loss");
  int iter = 0;
  for (; iter < config.max_iters; ++iter) {
    if (loss == 0.0) break;
    Matrix residual = x_anchors * r - y_anchors;
    residual.rowwise() += b;
    const Matrix grad_r = (2.0 / m) * x_anchors.transpose() * residual;
    const RowVector grad_b = (2.0 / m) * residual.colwise().sum();
    r -= config.lr * grad_r;
    b -= config.lr * grad_b;
    const double next = affine_loss(x_anchors, y_anchors, r, b);
    if (!std::isfinite(next)) {
      throw NumericalError("affine estimator diverged at iteration " + std::to_string(iter + 1));
    }
    const double improvement = (loss - next) / loss;
    loss = next;
    if (improvement < config.tol) {
      ++iter;
      break;
    }
  }

  auto est = make_estimate(std::move(r), std::move(b), EstimatorKind::affine);
  est.rank_warning = cod.rank() < x_anchors.cols();
  est.final_loss = loss;
  est.iterations = iter;
  return est;
}

TransformEstimate estimate(EstimatorKind method, const Matrix& x_anchors, const Matrix& y_anchors,
                           const AffineConfig& config) {
  switch (method) {
    case EstimatorKind::linear:
      return estimate_linear(x_anchors, y_anchors);
    case EstimatorKind::l_ortho:
      return estimate_l_ortho(x_anchors, y_anchors);
    case EstimatorKind::ortho:
      return estimate_ortho(x_anchors, y_anchors);
    case EstimatorKind::affine:
      return estimate_affine(x_anchors, y_anchors, config);
  }
  throw ValidationError("unknown estimator");
}

TransformEstimate fit_translation(const EmbeddingSpace& source, const EmbeddingSpace& target,
                                  const ParallelAnchors& anchors, EstimatorKind method,
                                  PrepMode prep_mode, const AffineConfig& config) {
  const Matrix xa = anchors.x_side().embed(source);
  const Matrix ya = anchors.y_side().embed(target);
  const Index dim = std::max(source.dim(), target.dim());
  const auto src_prep = fit_preprocessor(xa, prep_mode, dim);
  const auto tgt_prep = fit_preprocessor(ya, prep_mode, dim);
  auto est = estimate(method, preprocess(xa, src_prep), preprocess(ya, tgt_prep), config);
  est.source_prep = src_prep;
  est.target_prep = tgt_prep;
  return est;
}

EmbeddingSpace translate(const EmbeddingSpace& space, const TransformEstimate& est,
                         bool normalized_output) {
  require(space.dim() == est.source_prep.input_dim,
          "translate: space has dimension " + std::to_string(space.dim()) +
              " but the transform expects " + std::to_string(est.source_prep.input_dim));
  const Matrix mapped = est.apply(preprocess(space.matrix(), est.source_prep));
  if (!mapped.allFinite()) throw NumericalError("translation produced non-finite values");
  if (est.target_prep.mode == PrepMode::l2) {
    require(normalized_output,
            "target preprocessing is l2 and cannot be inverted; request normalized output");
    return space.with_matrix(mapped.leftCols(est.target_prep.input_dim));
  }
  return space.with_matrix(depreprocess(mapped, est.target_prep));
}

// ---------------------------------------------------------------------------
// XFM1

namespace {

std::string format_row(const RowVector& row) {
  std::string out;
  for (Index j = 0; j < row.size(); ++j) {
    if (j > 0) out += ' ';
    out += detail::format_double(row(j));
  }
  return out;
}

RowVector parse_row(const detail::NumberedLine& line, Index expected) {
  const auto tokens = detail::split_ws(line.text);
  require(static_cast<Index>(tokens.size()) == expected,
          "row length mismatch" + detail::at_line(line.number));
  RowVector row(expected);
  for (Index j = 0; j < expected; ++j) {
    require(detail::parse_double(tokens[static_cast<std::size_t>(j)], row(j)) &&
                std::isfinite(row(j)),
            "malformed or non-finite value" + detail::at_line(line.number));
  }
  return row;
}

// Standard mode: means and stds lines. Other modes: "- <input_dim>" then "-".
void append_prep(std::string& out, const Preprocessor& prep) {
  if (prep.mode == PrepMode::standard) {
    out += format_row(prep.means) + "\n" + format_row(prep.stds) + "\n";
  } else {
    out += "- " + std::to_string(prep.input_dim) + "\n-\n";
  }
}

Preprocessor parse_prep(PrepMode mode, Index pad_to, const detail::NumberedLine& means_line,
                        const detail::NumberedLine& stds_line) {
  Preprocessor p;
  p.mode = mode;
  p.pad_to = pad_to;
  if (mode == PrepMode::standard) {
    const auto count = static_cast<Index>(detail::split_ws(means_line.text).size());
    require(count >= 1 && count <= pad_to, "bad means line" + detail::at_line(means_line.number));
    p.input_dim = count;
    p.means = parse_row(means_line, count);
    p.stds = parse_row(stds_line, count);
    require((p.stds.array() > 0.0).all(), "non-positive std" + detail::at_line(stds_line.number));
    return p;
  }
  const auto tokens = detail::split_ws(means_line.text);
  require(!tokens.empty() && tokens[0] == "-" && tokens.size() <= 2,
          "expected '-' line" + detail::at_line(means_line.number));
  p.input_dim = pad_to;
  if (tokens.size() == 2) {
    require(detail::parse_int(tokens[1], p.input_dim) && p.input_dim >= 1 &&
                p.input_dim <= pad_to,
            "bad input dimension" + detail::at_line(means_line.number));
  }
  const auto stds_tokens = detail::split_ws(stds_line.text);
  require(stds_tokens.size() == 1 && stds_tokens[0] == "-",
          "expected '-' line" + detail::at_line(stds_line.number));
  return p;
}

}  // namespace

std::string format_transform(const TransformEstimate& est, const std::vector<std::string>& comments) {
  std::string out = detail::comment_block(comments);
  out += "XFM1 " + std::to_string(est.input_dim()) + " " + std::to_string(est.output_dim()) + " " +
         to_string(est.method) + " " + to_string(est.source_prep.mode) + " " +
         to_string(est.target_prep.mode) + "\n";
  append_prep(out, est.source_prep);
  append_prep(out, est.target_prep);
  for (Index i = 0; i < est.map.rows(); ++i) out += format_row(est.map.row(i)) + "\n";
  out += format_row(est.bias) + "\n";
  return out;
}

TransformEstimate parse_transform(std::string_view text) {
  const auto lines = detail::content_lines(text);
  require(!lines.empty(), "empty XFM1 file");
  const auto header = detail::split_ws(lines[0].text);
  Index d_in = 0;
  Index d_out = 0;
  require(header.size() == 6 && header[0] == "XFM1" && detail::parse_int(header[1], d_in) &&
              detail::parse_int(header[2], d_out) && d_in >= 1 && d_out >= 1,
          "malformed header" + detail::at_line(lines[0].number));
  TransformEstimate est;
  est.method = parse_estimator_kind(header[3]);
  const auto src_mode = parse_prep_mode(header[4]);
  const auto tgt_mode = parse_prep_mode(header[5]);
  require(static_cast<Index>(lines.size()) == 1 + 4 + d_in + 1,
          "expected " + std::to_string(4 + d_in + 1) + " lines after the header");
  est.source_prep = parse_prep(src_mode, d_in, lines[1], lines[2]);
  est.target_prep = parse_prep(tgt_mode, d_out, lines[3], lines[4]);
  est.map.resize(d_in, d_out);
  for (Index i = 0; i < d_in; ++i) est.map.row(i) = parse_row(lines[5 + static_cast<std::size_t>(i)], d_out);
  est.bias = parse_row(lines[5 + static_cast<std::size_t>(d_in)], d_out);
  return est;
}

TransformEstimate load_transform(const std::string& path) {
  return parse_transform(detail::read_file(path));
}

void save_transform(const TransformEstimate& est, const std::string& path,
                    const std::vector<std::string>& comments) {
  detail::write_file(path, format_transform(est, comments));
}

}  // namespace relrep
