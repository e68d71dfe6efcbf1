#include "relrep/relative.hpp"

#include <algorithm>
#include <map>
#include <unordered_map>

#include "text_io.hpp"

namespace relrep {

namespace {

constexpr std::pair<SimilarityKind, std::string_view> kKindNames[] = {
    {SimilarityKind::cosine, "cosine"},
    {SimilarityKind::euclidean, "euclidean"},
    {SimilarityKind::l1, "l1"},
    {SimilarityKind::linf, "linf"},
};

constexpr std::pair<Aggregation, std::string_view> kAggNames[] = {
    {Aggregation::none, "none"},
    {Aggregation::concat, "concat"},
    {Aggregation::normsum, "normsum"},
};

template <typename A, typename B>
double similarity_of(SimilarityKind kind, const Eigen::MatrixBase<A>& x,
                     const Eigen::MatrixBase<B>& y) {
  switch (kind) {
    case SimilarityKind::cosine:
      return cosine_of(x, y);
    case SimilarityKind::euclidean:
      return -(x - y).norm();
    case SimilarityKind::l1:
      return -(x - y).template lpNorm<1>();
    case SimilarityKind::linf:
      return -(x - y).template lpNorm<Eigen::Infinity>();
  }
  return 0.0;
}

Matrix row_normalized(const Matrix& m) {
  Matrix out = m;
  for (Index i = 0; i < out.rows(); ++i) {
    const double norm = out.row(i).norm();
    if (norm > 0.0) out.row(i) /= norm;
  }
  return out;
}

std::string block_token(const RelativeBlock& block) {
  std::string out;
  for (std::size_t k = 0; k < block.kinds.size(); ++k) {
    if (k > 0) out += '+';
    out += to_string(block.kinds[k]);
  }
  return out;
}

}  // namespace

std::string to_string(SimilarityKind kind) {
  for (const auto& [k, name] : kKindNames)
    if (k == kind) return std::string(name);
  throw ValidationError("unknown similarity kind");
}

SimilarityKind parse_similarity_kind(std::string_view name) {
  for (const auto& [k, n] : kKindNames)
    if (n == name) return k;
  throw ValidationError("unknown similarity kind '" + std::string(name) + "'");
}

std::string to_string(Aggregation agg) {
  for (const auto& [a, name] : kAggNames)
    if (a == agg) return std::string(name);
  throw ValidationError("unknown aggregation");
}

Aggregation parse_aggregation(std::string_view name) {
  for (const auto& [a, n] : kAggNames)
    if (n == name) return a;
  throw ValidationError("unknown aggregation '" + std::string(name) + "'");
}

double similarity(SimilarityKind kind, const Vector& x, const Vector& y) {
  require(x.size() == y.size(), "similarity: dimension mismatch (" + std::to_string(x.size()) +
                                    " vs " + std::to_string(y.size()) + ")");
  if (kind == SimilarityKind::cosine) {
    require(x.squaredNorm() > 0.0 && y.squaredNorm() > 0.0, "cosine similarity of a zero vector");
  }
  return similarity_of(kind, x, y);
}

RelativeSpace::RelativeSpace(std::vector<std::string> ids, Matrix coords,
                             std::vector<RelativeBlock> blocks,
                             std::optional<std::vector<std::string>> labels)
    : space_(std::move(ids), std::move(coords), std::move(labels)), blocks_(std::move(blocks)) {
  require(!blocks_.empty(), "relative space needs at least one block");
  Index total = 0;
  for (const auto& b : blocks_) {
    require(!b.kinds.empty(), "relative block without a similarity kind");
    total += b.width();
  }
  require(total == space_.dim(), "block widths sum to " + std::to_string(total) +
                                     " but coordinates have width " +
                                     std::to_string(space_.dim()));
}

bool RelativeSpace::same_shape(const RelativeSpace& other) const {
  if (blocks_.size() != other.blocks_.size()) return false;
  for (std::size_t b = 0; b < blocks_.size(); ++b) {
    if (blocks_[b].kinds != other.blocks_[b].kinds) return false;
    if (blocks_[b].width() != other.blocks_[b].width()) return false;
  }
  return true;
}

RelativeSpace relative_projection(const EmbeddingSpace& space, const AnchorSet& anchors,
                                  SimilarityKind kind) {
  const auto rows = anchors.resolve(space);
  const Matrix& x = space.matrix();
  const Index n = space.size();
  const Index m = anchors.size();

  if (kind == SimilarityKind::cosine) {
    for (Index i = 0; i < n; ++i) {
      require(x.row(i).squaredNorm() > 0.0,
              "zero vector under cosine similarity for id '" + space.ids()[i] + "'");
    }
  }

  Matrix coords(n, m);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < m; ++j) coords(i, j) = similarity_of(kind, x.row(i), x.row(rows[j]));
  if (!coords.allFinite()) throw NumericalError("relative projection produced non-finite values");
  return RelativeSpace(space.ids(), std::move(coords), {RelativeBlock{{kind}, anchors}},
                       space.maybe_labels());
}

RelativeSpace product_projection(const EmbeddingSpace& space, const AnchorSet& anchors,
                                 const std::vector<SimilarityKind>& kinds, Aggregation agg) {
  require(!kinds.empty(), "product projection needs at least one similarity kind");
  for (std::size_t a = 0; a < kinds.size(); ++a)
    for (std::size_t b = a + 1; b < kinds.size(); ++b)
      require(kinds[a] != kinds[b], "duplicate similarity kind '" + to_string(kinds[a]) + "'");
  require(agg != Aggregation::none, "product projection needs concat or normsum aggregation");

  const Index n = space.size();
  const Index m = anchors.size();
  std::vector<Matrix> subspaces;
  for (auto kind : kinds) {
    subspaces.push_back(row_normalized(relative_projection(space, anchors, kind).coords()));
  }

  if (agg == Aggregation::concat) {
    Matrix coords(n, m * static_cast<Index>(kinds.size()));
    std::vector<RelativeBlock> blocks;
    for (std::size_t k = 0; k < kinds.size(); ++k) {
      coords.middleCols(static_cast<Index>(k) * m, m) = subspaces[k];
      blocks.push_back({{kinds[k]}, anchors});
    }
    return RelativeSpace(space.ids(), std::move(coords), std::move(blocks), space.maybe_labels());
  }

  Matrix coords = Matrix::Zero(n, m);
  for (const auto& s : subspaces) coords += s;
  return RelativeSpace(space.ids(), std::move(coords), {RelativeBlock{kinds, anchors}},
                       space.maybe_labels());
}

RelativeSpace project(const EmbeddingSpace& space, const AnchorSet& anchors,
                      const ProjectionSpec& spec) {
  if (spec.agg == Aggregation::none) {
    require(spec.kinds.size() == 1, "aggregation 'none' takes exactly one similarity kind");
    return relative_projection(space, anchors, spec.kinds.front());
  }
  return product_projection(space, anchors, spec.kinds, spec.agg);
}

EmbeddingSpace center_features(const EmbeddingSpace& space) {
  Matrix x = space.matrix();
  const RowVector mean = x.colwise().mean();
  x.rowwise() -= mean;
  return space.with_matrix(std::move(x));
}

RelativeSpace merge_spaces(const std::vector<RelativeSpace>& rels) {
  require(rels.size() >= 2, "merge needs at least two relative spaces");
  const auto& first = rels.front();
  for (const auto& r : rels) {
    require(r.same_blocks(first), "merge: mismatched block structure");
  }

  std::vector<std::string> ids;
  std::vector<std::string> labels;
  const bool labeled = std::all_of(rels.begin(), rels.end(),
                                   [](const RelativeSpace& r) { return r.has_labels(); });
  std::unordered_map<std::string, Index> slot;
  std::vector<int> counts;
  std::vector<RowVector> sums;
  for (const auto& r : rels) {
    for (Index i = 0; i < r.size(); ++i) {
      const auto& id = r.ids()[i];
      auto [it, inserted] = slot.emplace(id, static_cast<Index>(ids.size()));
      if (inserted) {
        ids.push_back(id);
        if (labeled) labels.push_back(r.labels()[i]);
        sums.push_back(r.coords().row(i));
        counts.push_back(1);
      } else {
        sums[it->second] += r.coords().row(i);
        ++counts[it->second];
      }
    }
  }
  require(!ids.empty(), "merge: empty id union");

  Matrix coords(static_cast<Index>(ids.size()), first.width());
  for (std::size_t k = 0; k < ids.size(); ++k) {
    if (counts[k] == 1) {
      coords.row(static_cast<Index>(k)) = sums[k];
    } else {
      coords.row(static_cast<Index>(k)) = sums[k] / static_cast<double>(counts[k]);
    }
  }
  std::optional<std::vector<std::string>> maybe_labels;
  if (labeled) maybe_labels = std::move(labels);
  return RelativeSpace(std::move(ids), std::move(coords), first.blocks(), std::move(maybe_labels));
}

// ---------------------------------------------------------------------------
// REL1

RelativeSpace parse_relative(std::string_view text) {
  const auto lines = detail::content_lines(text);
  require(!lines.empty(), "empty REL1 file");
  const auto header = detail::split_ws(lines[0].text);
  Index n = 0;
  Index m = 0;
  require(header.size() == 6 && header[0] == "REL1" && detail::parse_int(header[1], n) &&
              detail::parse_int(header[2], m) && n >= 1 && m >= 1 &&
              (header[3] == "labeled" || header[3] == "unlabeled"),
          "malformed header" + detail::at_line(lines[0].number));
  const bool labeled = header[3] == "labeled";
  const auto kind_tokens = detail::split_on(header[4], ',');
  const auto width_tokens = detail::split_on(header[5], ',');
  require(kind_tokens.size() == width_tokens.size(),
          "kind and block-width lists differ in length" + detail::at_line(lines[0].number));
  const std::size_t nblocks = kind_tokens.size();
  require(lines.size() == 1 + nblocks + static_cast<std::size_t>(n),
          "expected " + std::to_string(nblocks) + " anchor lines and " + std::to_string(n) +
              " rows");

  std::vector<RelativeBlock> blocks;
  for (std::size_t b = 0; b < nblocks; ++b) {
    std::vector<SimilarityKind> kinds;
    for (auto token : detail::split_on(kind_tokens[b], '+')) kinds.push_back(parse_similarity_kind(token));
    Index width = 0;
    require(detail::parse_int(width_tokens[b], width) && width >= 1,
            "malformed block width" + detail::at_line(lines[0].number));
    const auto& line = lines[1 + b];
    std::vector<std::string> anchor_ids;
    for (auto token : detail::split_ws(line.text)) anchor_ids.emplace_back(token);
    require(static_cast<Index>(anchor_ids.size()) == width,
            "anchor line length mismatch" + detail::at_line(line.number));
    blocks.push_back({std::move(kinds), AnchorSet(std::move(anchor_ids))});
  }

  std::vector<std::string> ids;
  std::vector<std::string> labels;
  Matrix coords(n, m);
  for (Index i = 0; i < n; ++i) {
    const auto& line = lines[1 + nblocks + static_cast<std::size_t>(i)];
    const auto tokens = detail::split_ws(line.text);
    require(static_cast<Index>(tokens.size()) == m + 2,
            "row length mismatch" + detail::at_line(line.number));
    ids.emplace_back(tokens[0]);
    if (labeled) {
      require(tokens[1] != "-", "missing label" + detail::at_line(line.number));
      labels.emplace_back(tokens[1]);
    }
    for (Index j = 0; j < m; ++j) {
      double v = 0.0;
      require(detail::parse_double(tokens[static_cast<std::size_t>(j) + 2], v) && std::isfinite(v),
              "malformed or non-finite value" + detail::at_line(line.number));
      coords(i, j) = v;
    }
  }
  std::optional<std::vector<std::string>> maybe_labels;
  if (labeled) maybe_labels = std::move(labels);
  return RelativeSpace(std::move(ids), std::move(coords), std::move(blocks),
                       std::move(maybe_labels));
}

RelativeSpace load_relative(const std::string& path) {
  return parse_relative(detail::read_file(path));
}

std::string format_relative(const RelativeSpace& rel, const std::vector<std::string>& comments) {
  std::string kinds;
  std::string widths;
  for (std::size_t b = 0; b < rel.blocks().size(); ++b) {
    if (b > 0) {
      kinds += ',';
      widths += ',';
    }
    kinds += block_token(rel.blocks()[b]);
    widths += std::to_string(rel.blocks()[b].width());
  }
  std::string out = detail::comment_block(comments);
  out += "REL1 " + std::to_string(rel.size()) + " " + std::to_string(rel.width()) + " " +
         (rel.has_labels() ? "labeled" : "unlabeled") + " " + kinds + " " + widths + "\n";
  for (const auto& block : rel.blocks()) {
    for (std::size_t k = 0; k < block.anchors.ids().size(); ++k) {
      if (k > 0) out += ' ';
      out += block.anchors.ids()[k];
    }
    out += '\n';
  }
  for (Index i = 0; i < rel.size(); ++i) {
    out += rel.ids()[i];
    out += ' ';
    out += rel.has_labels() ? rel.labels()[i] : std::string("-");
    for (Index j = 0; j < rel.width(); ++j) {
      out += ' ';
      out += detail::format_double(rel.coords()(i, j));
    }
    out += '\n';
  }
  return out;
}

void save_relative(const RelativeSpace& rel, const std::string& path,
                   const std::vector<std::string>& comments) {
  detail::write_file(path, format_relative(rel, comments));
}

}  // namespace relrep
