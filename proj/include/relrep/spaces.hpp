#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "relrep/common.hpp"

namespace relrep {

/// A set of n samples embedded in R^d, keyed by unique identifiers and
/// optionally carrying one class label per sample.
class EmbeddingSpace {
 public:
  EmbeddingSpace(std::vector<std::string> ids, Matrix matrix,
                 std::optional<std::vector<std::string>> labels = std::nullopt);

  Index size() const { return matrix_.rows(); }
  Index dim() const { return matrix_.cols(); }

  const std::vector<std::string>& ids() const { return ids_; }
  const Matrix& matrix() const { return matrix_; }
  bool has_labels() const { return labels_.has_value(); }
  const std::vector<std::string>& labels() const;
  const std::optional<std::vector<std::string>>& maybe_labels() const { return labels_; }

  std::optional<Index> find(std::string_view id) const;
  Index index_of(std::string_view id) const;  // throws on unknown id

  /// Same ids and labels, new coordinates.
  EmbeddingSpace with_matrix(Matrix matrix) const;
  /// Rows picked by position, in the given order.
  EmbeddingSpace subset(const std::vector<Index>& rows) const;

 private:
  std::vector<std::string> ids_;
  Matrix matrix_;
  std::optional<std::vector<std::string>> labels_;
  std::unordered_map<std::string, Index> index_;
};

/// Ordered anchor identifiers. Order defines relative coordinate order.
class AnchorSet {
 public:
  explicit AnchorSet(std::vector<std::string> ids);

  Index size() const { return static_cast<Index>(ids_.size()); }
  const std::vector<std::string>& ids() const { return ids_; }

  std::vector<Index> resolve(const EmbeddingSpace& space) const;
  Matrix embed(const EmbeddingSpace& space) const;

  bool operator==(const AnchorSet& other) const { return ids_ == other.ids_; }

 private:
  std::vector<std::string> ids_;
};

/// Anchor pairs in semantic correspondence across two spaces (X first).
class ParallelAnchors {
 public:
  explicit ParallelAnchors(std::vector<std::pair<std::string, std::string>> pairs);

  Index size() const { return static_cast<Index>(pairs_.size()); }
  const std::vector<std::pair<std::string, std::string>>& pairs() const { return pairs_; }

  AnchorSet x_side() const;
  AnchorSet y_side() const;

 private:
  std::vector<std::pair<std::string, std::string>> pairs_;
};

enum class TransformKind {
  orthogonal,
  isometry,
  translation,
  permutation,
  isotropic_scaling,
  local_rescaling,
  linear,
  affine,
};

std::string to_string(TransformKind kind);
TransformKind parse_transform_kind(std::string_view name);

struct SyntheticTransformSpec {
  TransformKind kind = TransformKind::orthogonal;
  Seed seed = 0;
  double scale_lo = 0.5;
  double scale_hi = 2.0;

  void validate() const;
};

/// A concrete draw from a transform class: x -> s_i * (x A) + t, where s_i
/// is a per-row scale (local rescaling only, otherwise 1).
struct SampledTransform {
  TransformKind kind;
  Matrix linear;       // d x d, applied on the right
  RowVector offset;    // 1 x d
  Vector row_scales;   // n entries, or empty

  Matrix apply(const Matrix& x) const;
};

/// Haar-distributed orthogonal d x d matrix (QR of a Gaussian matrix with
/// the sign of R's diagonal folded into Q).
Matrix random_orthogonal(Index d, Seed seed);

SampledTransform sample_transform(const SyntheticTransformSpec& spec, Index rows, Index dim);
EmbeddingSpace apply_transform(const EmbeddingSpace& space, const SyntheticTransformSpec& spec);

/// Gaussian mixture with `classes` components of unit within-class std.
/// Component means are at least 8 apart; labels are "c<k>", ids "s<i>", and
/// sample i belongs to component i % classes. A positive `mean_offset` moves
/// every component by one shared random vector of that norm, so the space is
/// no longer centered at the origin.
EmbeddingSpace generate_synthetic(Index n, Index d, Index classes, Seed seed,
                                  double mean_offset = 0.0);

enum class AnchorStrategy { uniform, fps, kmeans };

std::string to_string(AnchorStrategy strategy);
AnchorStrategy parse_anchor_strategy(std::string_view name);

struct AnchorSelection {
  AnchorSet anchors;
  bool warning = false;  // kmeans did not converge within its iteration cap
  int iterations = 0;
};

AnchorSelection select_anchors(const EmbeddingSpace& space, AnchorStrategy strategy, Index count,
                               Seed seed);

/// Greedy farthest-point sampling from a fixed starting row. Ties go to the
/// lowest row index.
std::vector<Index> farthest_point_sampling(const Matrix& points, Index count, Index start);

// EMB1 text format. Lines starting with '#' before the header are comments.
EmbeddingSpace load_space(const std::string& path);
EmbeddingSpace parse_space(std::string_view text);
void save_space(const EmbeddingSpace& space, const std::string& path,
                const std::vector<std::string>& comments = {});
std::string format_space(const EmbeddingSpace& space, const std::vector<std::string>& comments = {});

AnchorSet load_anchors(const std::string& path);
void save_anchors(const AnchorSet& anchors, const std::string& path,
                  const std::vector<std::string>& comments = {});
ParallelAnchors load_parallel_anchors(const std::string& path);
void save_parallel_anchors(const ParallelAnchors& pairs, const std::string& path,
                           const std::vector<std::string>& comments = {});

}  // namespace relrep
