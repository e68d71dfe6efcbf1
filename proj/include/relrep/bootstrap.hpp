#pragma once

#include <optional>
#include <vector>

#include "relrep/spaces.hpp"

namespace relrep {

/// Entropic optimal-transport coupling with uniform marginals.
struct CouplingPlan {
  Matrix plan;  // rows x cols, non-negative
  double epsilon = 0.0;
  int iterations_run = 0;

  /// Largest absolute deviation of any row or column sum from its target.
  double marginal_error() const;
  /// For each row, the column holding the largest mass (ties to lowest index).
  std::vector<Index> row_argmax() const;
};

/// Entropic OT on cost = -similarity with uniform marginals, log-stabilized.
/// Runs at most `iters` sweeps (fewer once the marginals are met to 1e-12),
/// then rounds the plan onto the exact marginals.
CouplingPlan sinkhorn(const Matrix& similarity, double epsilon, int iters);

struct AOConfig {
  Index target_anchor_count = 0;
  double lr = 0.05;
  int max_outer_iters = 500;
  double sinkhorn_epsilon = 0.05;
  int sinkhorn_iters = 100;
  double tol = 1e-7;
  Seed seed = 0;

  void validate() const;
};

struct AODiagnostics {
  std::vector<double> losses;  // one entry per outer iteration, before its step
  int iterations = 0;
  double initial_loss = 0.0;
  double final_loss = 0.0;
  double max_marginal_error = 0.0;  // over every plan used
};

struct AOResult {
  AnchorSet anchors_y;
  ParallelAnchors correspondence;  // anchors_x[j] paired with anchors_y[j]
  Matrix continuous;               // unit-norm rows before discretization
  AODiagnostics diagnostics;
};

/// Expands a few seed correspondences into a full set of Y anchors matching
/// `anchors_x`. Seed X ids must be members of `anchors_x`; their Y rows are
/// held fixed for the whole optimization.
AOResult optimize_anchors(const EmbeddingSpace& space_x, const AnchorSet& anchors_x,
                          const EmbeddingSpace& space_y, const ParallelAnchors& seeds,
                          const AOConfig& cfg);

/// Maps each continuous row to a distinct Y id by cosine similarity, greedily
/// in order of descending similarity. `pinned` fixes selected rows to given
/// Y rows before the greedy pass.
AnchorSet discretize(const Matrix& continuous, const EmbeddingSpace& space_y,
                     const std::vector<std::pair<Index, Index>>& pinned = {});

}  // namespace relrep
