#pragma once

#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "relrep/relative.hpp"

namespace relrep {

/// Named scalar results plus free-form run metadata. Metric order is the
/// order of insertion.
struct EvalReport {
  std::vector<std::pair<std::string, double>> metrics;
  std::optional<Index> k;
  std::map<std::string, std::string> metadata;

  void set(const std::string& name, double value);
  double get(const std::string& name) const;  // throws on unknown name
  bool has(const std::string& name) const;

  /// `name<TAB>value` per metric.
  std::string to_text() const;
  /// One-line JSON record with metrics, k and metadata.
  std::string to_record() const;
};

/// Neighborhood agreement between two comparable representations of the
/// same samples. Reports jaccard, mrr, mrr_reverse and cosine means.
EvalReport retrieval_metrics(const RelativeSpace& source, const RelativeSpace& target, Index k);
EvalReport retrieval_metrics(const EmbeddingSpace& source, const EmbeddingSpace& target, Index k);

/// Linear CKA on column-centered inputs.
double linear_cka(const Matrix& x, const Matrix& y);

enum class DecoderKind { centroid, ridge };

std::string to_string(DecoderKind kind);
DecoderKind parse_decoder_kind(std::string_view name);

class Decoder {
 public:
  DecoderKind kind() const { return kind_; }
  const std::vector<std::string>& classes() const { return classes_; }
  const Matrix& weights() const { return weights_; }
  double ridge_lambda() const { return lambda_; }
  bool normalizes_inputs() const { return normalize_; }
  /// Block layout of the training representation, if trained on one.
  const std::vector<RelativeBlock>& blocks() const { return blocks_; }

  /// Class scores, one column per class.
  Matrix scores(const Matrix& features) const;
  std::vector<std::string> predict(const Matrix& features) const;
  double accuracy(const Matrix& features, const std::vector<std::string>& labels) const;

  static Decoder train(const Matrix& features, const std::vector<std::string>& labels,
                       DecoderKind kind, double ridge_lambda, bool normalize_inputs = false,
                       std::vector<RelativeBlock> blocks = {});

 private:
  DecoderKind kind_ = DecoderKind::centroid;
  std::vector<std::string> classes_;  // sorted
  Matrix weights_;  // centroid: C x m means; ridge: (m + 1) x C, intercept last
  double lambda_ = 0.0;
  bool normalize_ = false;
  std::vector<RelativeBlock> blocks_;
};

Decoder train_decoder(const RelativeSpace& rel, DecoderKind kind, double ridge_lambda,
                      bool normalize_inputs = false);
Decoder train_decoder(const EmbeddingSpace& space, DecoderKind kind, double ridge_lambda,
                      bool normalize_inputs = false);

/// Projects the encoder's space on its own anchors and scores the decoder on
/// it. Reports accuracy and n.
EvalReport stitch_accuracy(const EmbeddingSpace& encoder_space, const AnchorSet& anchors,
                           const ProjectionSpec& projection, const Decoder& decoder);

double stitching_index(double stitch_acc, double end_to_end_acc);

/// Mean row cosine between each candidate and the reference, correlated with
/// the candidates' performance scores.
EvalReport performance_proxy(const RelativeSpace& reference,
                             const std::vector<std::pair<RelativeSpace, double>>& candidates);

double pearson(const Vector& a, const Vector& b);

}  // namespace relrep
