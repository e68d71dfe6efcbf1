#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "relrep/spaces.hpp"

namespace relrep {

enum class SimilarityKind { cosine, euclidean, l1, linf };

std::string to_string(SimilarityKind kind);
SimilarityKind parse_similarity_kind(std::string_view name);

/// Cosine, or the negated euclidean / l1 / linf distance, so that larger
/// always means more similar.
double similarity(SimilarityKind kind, const Vector& x, const Vector& y);

enum class Aggregation {
  none,     // a single plain relative projection
  concat,   // row-normalized blocks side by side
  normsum,  // row-normalized blocks summed elementwise
};

std::string to_string(Aggregation agg);
Aggregation parse_aggregation(std::string_view name);

/// One contiguous group of relative coordinates. A block built by normsum
/// lists every kind that was summed into it.
struct RelativeBlock {
  std::vector<SimilarityKind> kinds;
  AnchorSet anchors;

  Index width() const { return anchors.size(); }
  bool operator==(const RelativeBlock& other) const {
    return kinds == other.kinds && anchors == other.anchors;
  }
};

class RelativeSpace {
 public:
  RelativeSpace(std::vector<std::string> ids, Matrix coords, std::vector<RelativeBlock> blocks,
                std::optional<std::vector<std::string>> labels = std::nullopt);

  Index size() const { return space_.size(); }
  Index width() const { return space_.dim(); }
  const std::vector<std::string>& ids() const { return space_.ids(); }
  const Matrix& coords() const { return space_.matrix(); }
  const std::vector<RelativeBlock>& blocks() const { return blocks_; }
  bool has_labels() const { return space_.has_labels(); }
  const std::vector<std::string>& labels() const { return space_.labels(); }
  std::optional<Index> find(std::string_view id) const { return space_.find(id); }

  /// Coordinates viewed as an ordinary embedding space (same ids and labels).
  const EmbeddingSpace& as_space() const { return space_; }

  /// Same kinds and block widths; anchor identities are not compared.
  bool same_shape(const RelativeSpace& other) const;
  bool same_blocks(const RelativeSpace& other) const { return blocks_ == other.blocks_; }

 private:
  EmbeddingSpace space_;
  std::vector<RelativeBlock> blocks_;
};

struct ProjectionSpec {
  std::vector<SimilarityKind> kinds{SimilarityKind::cosine};
  Aggregation agg = Aggregation::none;
};

/// coords(i, j) = similarity(kind, x_i, a_j).
RelativeSpace relative_projection(const EmbeddingSpace& space, const AnchorSet& anchors,
                                  SimilarityKind kind);

RelativeSpace product_projection(const EmbeddingSpace& space, const AnchorSet& anchors,
                                 const std::vector<SimilarityKind>& kinds, Aggregation agg);

/// Dispatches to relative_projection (agg == none) or product_projection.
RelativeSpace project(const EmbeddingSpace& space, const AnchorSet& anchors,
                      const ProjectionSpec& spec);

/// Subtracts the per-feature mean over all samples.
EmbeddingSpace center_features(const EmbeddingSpace& space);

/// Union of ids; rows of ids shared by several inputs are averaged.
RelativeSpace merge_spaces(const std::vector<RelativeSpace>& rels);

// REL1 text format.
RelativeSpace parse_relative(std::string_view text);
RelativeSpace load_relative(const std::string& path);
std::string format_relative(const RelativeSpace& rel, const std::vector<std::string>& comments = {});
void save_relative(const RelativeSpace& rel, const std::string& path,
                   const std::vector<std::string>& comments = {});

}  // namespace relrep
