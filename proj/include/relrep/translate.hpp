#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "relrep/spaces.hpp"

namespace relrep {

enum class PrepMode { standard, l2, none };

std::string to_string(PrepMode mode);
PrepMode parse_prep_mode(std::string_view name);

/// Per-space normalization fitted on anchors, followed by zero padding.
struct Preprocessor {
  PrepMode mode = PrepMode::none;
  Index input_dim = 0;
  Index pad_to = 0;
  RowVector means;  // standard mode only
  RowVector stds;   // standard mode only, floored at kStdFloor
  bool warning = false;

  static constexpr double kStdFloor = 1e-8;

  static Preprocessor identity(Index dim);
};

Preprocessor fit_preprocessor(const Matrix& anchors, PrepMode mode, Index pad_to);
/// Convenience overload: pad_to defaults to the input dimension.
Preprocessor fit_preprocessor(const Matrix& anchors, PrepMode mode);

Matrix preprocess(const Matrix& x, const Preprocessor& prep);
Matrix depreprocess(const Matrix& x, const Preprocessor& prep);
EmbeddingSpace preprocess(const EmbeddingSpace& space, const Preprocessor& prep);
EmbeddingSpace depreprocess(const EmbeddingSpace& space, const Preprocessor& prep);

enum class EstimatorKind { linear, l_ortho, ortho, affine };

std::string to_string(EstimatorKind kind);
EstimatorKind parse_estimator_kind(std::string_view name);

/// y = x R + b in the preprocessed coordinates. R is d_in x d_out.
struct TransformEstimate {
  Matrix map;
  RowVector bias;
  EstimatorKind method = EstimatorKind::linear;
  Preprocessor source_prep;
  Preprocessor target_prep;
  bool rank_warning = false;
  double final_loss = 0.0;
  int iterations = 0;

  Index input_dim() const { return map.rows(); }
  Index output_dim() const { return map.cols(); }
  /// Applies map and bias only (no pre/post processing).
  Matrix apply(const Matrix& x) const;
};

struct AffineConfig {
  double lr = 0.1;
  int max_iters = 5000;
  double tol = 1e-10;
};

/// Minimum-norm least squares, bias fixed at zero.
TransformEstimate estimate_linear(const Matrix& x_anchors, const Matrix& y_anchors);
/// Least squares followed by projection onto the nearest orthogonal matrix.
TransformEstimate estimate_l_ortho(const Matrix& x_anchors, const Matrix& y_anchors);
/// Orthogonal Procrustes over the full orthogonal group (reflections allowed).
TransformEstimate estimate_ortho(const Matrix& x_anchors, const Matrix& y_anchors);
/// Full-batch gradient descent on ||X R + 1 b^T - Y||^2 / m, started from the
/// centered least-squares solution.
TransformEstimate estimate_affine(const Matrix& x_anchors, const Matrix& y_anchors,
                                  const AffineConfig& config = {});

TransformEstimate estimate(EstimatorKind method, const Matrix& x_anchors, const Matrix& y_anchors,
                           const AffineConfig& config = {});

/// Fits both preprocessors on the anchor rows, pads to the larger dimension,
/// and runs the chosen estimator on the processed anchors.
TransformEstimate fit_translation(const EmbeddingSpace& source, const EmbeddingSpace& target,
                                  const ParallelAnchors& anchors, EstimatorKind method,
                                  PrepMode prep_mode, const AffineConfig& config = {});

/// Source preprocessing, x R + b, then target de-preprocessing. With an l2
/// target the last step is impossible; pass normalized_output to get the
/// normalized coordinates (padding dropped) instead.
EmbeddingSpace translate(const EmbeddingSpace& space, const TransformEstimate& est,
                         bool normalized_output = false);

// XFM1 text format.
TransformEstimate parse_transform(std::string_view text);
TransformEstimate load_transform(const std::string& path);
std::string format_transform(const TransformEstimate& est,
                             const std::vector<std::string>& comments = {});
void save_transform(const TransformEstimate& est, const std::string& path,
                    const std::vector<std::string>& comments = {});

}  // namespace relrep
