#include "relrep/bootstrap.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <unordered_map>

namespace relrep {

namespace {

constexpr double kSinkhornTol = 1e-12;
constexpr double kMarginalTol = 1e-6;

double log_sum_exp(const Eigen::Ref<const Vector>& v) {
  const double mx = v.maxCoeff();
  if (!std::isfinite(mx)) return mx;
  return mx + std::log((v.array() - mx).exp().sum());
}

struct Potentials {
  Vector f;  // rows, in units of epsilon
  Vector g;  // cols, in units of epsilon
};

constexpr double kAbsorbBound = 1e30;
constexpr int kCheckEvery = 10;

// Projects a nearly feasible plan onto the set of couplings with exactly
// uniform marginals: shrink overfull rows and columns, then hand the missing
// mass back as a rank-one correction.
void round_to_marginals(Matrix& plan) {
  const double a = 1.0 / static_cast<double>(plan.rows());
  const double b = 1.0 / static_cast<double>(plan.cols());
  for (Index i = 0; i < plan.rows(); ++i) {
    const double s = plan.row(i).sum();
    if (s > a) plan.row(i) *= a / s;
  }
  for (Index j = 0; j < plan.cols(); ++j) {
    const double s = plan.col(j).sum();
    if (s > b) plan.col(j) *= b / s;
  }
  const Vector row_gap = (a - plan.rowwise().sum().array()).max(0.0).matrix();
  const Vector col_gap = (b - plan.colwise().sum().transpose().array()).max(0.0).matrix();
  const double total = row_gap.sum();
  if (total > 0.0) plan += row_gap * col_gap.transpose() / total;
}

// Log-stabilized Sinkhorn: scaling iterations on a kernel that absorbs the
// dual potentials whenever the scalings leave [1e-30, 1e30]. Potentials in
// `pot` act as a warm start and hold the final duals on return.
CouplingPlan sinkhorn_impl(const Matrix& similarity, double epsilon, int iters, Potentials& pot) {
  const Index rows = similarity.rows();
  const Index cols = similarity.cols();
  const double a = 1.0 / static_cast<double>(rows);
  const double b = 1.0 / static_cast<double>(cols);
  const double log_a = std::log(a);
  const double log_b = std::log(b);
  const Matrix scaled = similarity / epsilon;
  if (pot.f.size() != rows) pot.f = Vector::Zero(rows);
  if (pot.g.size() != cols) pot.g = Vector::Zero(cols);

  // One exact sweep in the log domain so the kernel starts bounded by 1.
  for (Index i = 0; i < rows; ++i) pot.f(i) = log_a - log_sum_exp(scaled.row(i).transpose() + pot.g);
  for (Index j = 0; j < cols; ++j) pot.g(j) = log_b - log_sum_exp(scaled.col(j) + pot.f);

  auto kernel = [&] {
    return ((scaled.colwise() + pot.f).rowwise() + pot.g.transpose()).array().exp().matrix();
  };
  Matrix k = kernel();
  Vector u = Vector::Ones(rows);
  Vector v = Vector::Ones(cols);
  auto absorb = [&] {
    pot.f.array() += u.array().log();
    pot.g.array() += v.array().log();
    u.setOnes();
    v.setOnes();
    k = kernel();
  };

  int it = 1;
  for (; it < iters; ++it) {
    u = (a / (k * v).array()).matrix();
    v = (b / (k.transpose() * u).array()).matrix();
    if (!u.allFinite() || !v.allFinite()) {
      throw NumericalError("sinkhorn: numerical overflow at iteration " + std::to_string(it));
    }
    if (u.maxCoeff() > kAbsorbBound || v.maxCoeff() > kAbsorbBound ||
        u.minCoeff() < 1.0 / kAbsorbBound || v.minCoeff() < 1.0 / kAbsorbBound) {
      absorb();
    }
    if (it % kCheckEvery == 0) {
      const double worst = ((u.asDiagonal() * k * v).array() - a).abs().maxCoeff();
      if (worst < kSinkhornTol) {
        ++it;
        break;
      }
    }
  }
  absorb();

  CouplingPlan out;
  out.epsilon = epsilon;
  out.iterations_run = std::min(it, iters);
  out.plan = std::move(k);
  if (!out.plan.allFinite()) throw NumericalError("sinkhorn: numerical overflow");
  round_to_marginals(out.plan);
  if (out.marginal_error() > kMarginalTol) {
    throw NumericalError("sinkhorn: marginal error " + std::to_string(out.marginal_error()));
  }
  return out;
}

Matrix normalized_rows(const Matrix& m) {
  Matrix out = m;
  for (Index i = 0; i < out.rows(); ++i) {
    const double norm = out.row(i).norm();
    if (norm > 0.0) out.row(i) /= norm;
  }
  return out;
}

// Cosine similarity matrix between the rows of a and the rows of b.
Matrix cosine_matrix(const Matrix& a, const Matrix& b) {
  return normalized_rows(a) * normalized_rows(b).transpose();
}

}  // namespace

double CouplingPlan::marginal_error() const {
  const double a = 1.0 / static_cast<double>(plan.rows());
  const double b = 1.0 / static_cast<double>(plan.cols());
  const double row_err = (plan.rowwise().sum().array() - a).abs().maxCoeff();
  const double col_err = (plan.colwise().sum().array() - b).abs().maxCoeff();
  return std::max(row_err, col_err);
}

std::vector<Index> CouplingPlan::row_argmax() const {
  std::vector<Index> out(static_cast<std::size_t>(plan.rows()));
  for (Index i = 0; i < plan.rows(); ++i) {
    Index arg = 0;
    plan.row(i).maxCoeff(&arg);
    out[i] = arg;
  }
  return out;
}

CouplingPlan sinkhorn(const Matrix& similarity, double epsilon, int iters) {
  require(similarity.rows() >= 1 && similarity.cols() >= 1, "sinkhorn: empty matrix");
  require(similarity.allFinite(), "sinkhorn: non-finite similarity entries");
  require(epsilon > 0.0 && std::isfinite(epsilon), "sinkhorn: epsilon must be positive");
  require(iters >= 1, "sinkhorn: iters must be at least 1");
  Potentials pot;
  return sinkhorn_impl(similarity, epsilon, iters, pot);
}

void AOConfig::validate() const {
  require(target_anchor_count >= 1, "target anchor count must be positive");
  require(lr > 0.0, "learning rate must be positive");
  require(max_outer_iters >= 0, "max_outer_iters must be non-negative");
  require(sinkhorn_epsilon > 0.0, "sinkhorn epsilon must be positive");
  require(sinkhorn_iters >= 1, "sinkhorn iterations must be positive");
  require(tol > 0.0, "tolerance must be positive");
}

AnchorSet discretize(const Matrix& continuous, const EmbeddingSpace& space_y,
                     const std::vector<std::pair<Index, Index>>& pinned) {
  const Index m = continuous.rows();
  const Index n = space_y.size();
  require(continuous.cols() == space_y.dim(), "discretize: dimension mismatch");
  require(m <= n, "discretize: " + std::to_string(m) + " anchors cannot be distinct among " +
                      std::to_string(n) + " samples");

  std::vector<Index> assigned(static_cast<std::size_t>(m), -1);
  std::vector<bool> used(static_cast<std::size_t>(n), false);
  for (const auto& [row, target] : pinned) {
    require(row >= 0 && row < m && target >= 0 && target < n, "discretize: bad pinned pair");
    require(assigned[row] < 0 && !used[target], "discretize: conflicting pinned pairs");
    assigned[row] = target;
    used[target] = true;
  }

  const Matrix sim = cosine_matrix(continuous, space_y.matrix());
  struct Candidate {
    double sim;
    Index row;
    Index col;
  };
  std::vector<Candidate> candidates;
  candidates.reserve(static_cast<std::size_t>(m * n));
  for (Index i = 0; i < m; ++i) {
    if (assigned[i] >= 0) continue;
    for (Index j = 0; j < n; ++j) candidates.push_back({sim(i, j), i, j});
  }
  std::stable_sort(candidates.begin(), candidates.end(), [](const Candidate& a, const Candidate& b) {
    if (a.sim != b.sim) return a.sim > b.sim;
    if (a.row != b.row) return a.row < b.row;
    return a.col < b.col;
  });
  for (const auto& c : candidates) {
    if (assigned[c.row] >= 0 || used[c.col]) continue;
    assigned[c.row] = c.col;
    used[c.col] = true;
  }

  std::vector<std::string> ids;
  ids.reserve(static_cast<std::size_t>(m));
  for (Index i = 0; i < m; ++i) ids.push_back(space_y.ids()[assigned[i]]);
  return AnchorSet(std::move(ids));
}

AOResult optimize_anchors(const EmbeddingSpace& space_x, const AnchorSet& anchors_x,
                          const EmbeddingSpace& space_y, const ParallelAnchors& seeds,
                          const AOConfig& cfg) {
  cfg.validate();
  const Index m = anchors_x.size();
  require(cfg.target_anchor_count == m, "target anchor count " +
                                            std::to_string(cfg.target_anchor_count) +
                                            " differs from the X anchor count " + std::to_string(m));
  require(seeds.size() <= m, "more seeds than anchors");
  require(m <= space_y.size(), "anchor count exceeds the size of the Y space");
  const Index d = space_y.dim();

  // Position of each seed inside anchors_x, and its Y row.
  std::unordered_map<std::string, Index> position;
  for (Index j = 0; j < m; ++j) position.emplace(anchors_x.ids()[j], j);
  std::vector<bool> frozen(static_cast<std::size_t>(m), false);
  std::vector<std::pair<Index, Index>> pinned;
  Matrix anchors_y(m, d);
  for (const auto& [xid, yid] : seeds.pairs()) {
    auto it = position.find(xid);
    require(it != position.end(), "seed id '" + xid + "' is not one of the X anchors");
    require(space_x.find(xid).has_value(), "seed id '" + xid + "' not found in X");
    const Index yrow = space_y.index_of(yid);
    anchors_y.row(it->second) = space_y.matrix().row(yrow);
    frozen[it->second] = true;
    pinned.emplace_back(it->second, yrow);
  }
  {
    std::mt19937_64 rng(cfg.seed);
    std::normal_distribution<double> normal;
    for (Index j = 0; j < m; ++j) {
      if (frozen[j]) continue;
      for (Index k = 0; k < d; ++k) anchors_y(j, k) = normal(rng);
    }
  }
  anchors_y = normalized_rows(anchors_y);

  const Matrix y_unit = normalized_rows(space_y.matrix());
  const Matrix rel_x = cosine_matrix(space_x.matrix(), anchors_x.embed(space_x));
  const double inv_m = 1.0 / static_cast<double>(m);

  AODiagnostics diag;
  Potentials pot;

  // Loss and matched targets for the current anchors.
  auto evaluate = [&](const Matrix& rel_y, Matrix& targets) {
    const Matrix row_sim = cosine_matrix(rel_y, rel_x);
    auto plan = sinkhorn_impl(row_sim, cfg.sinkhorn_epsilon, cfg.sinkhorn_iters, pot);
    diag.max_marginal_error = std::max(diag.max_marginal_error, plan.marginal_error());
    const auto match = plan.row_argmax();
    targets.resize(rel_y.rows(), m);
    for (Index i = 0; i < rel_y.rows(); ++i) targets.row(i) = rel_x.row(match[i]);
    const double loss = (rel_y - targets).squaredNorm() * inv_m;
    if (!std::isfinite(loss)) throw NumericalError("anchor optimization: non-finite loss");
    return loss;
  };

  Matrix targets;
  Matrix rel_y = y_unit * anchors_y.transpose();
  double loss = evaluate(rel_y, targets);
  diag.initial_loss = loss;
  int iter = 0;
  for (; iter < cfg.max_outer_iters; ++iter) {
    diag.losses.push_back(loss);
    // d/da cos(y, a) = y_hat - cos(y, a) a   for unit a
    const Matrix residual = rel_y - targets;  // n x m
    const Matrix weighted = (2.0 * inv_m) * residual;
    Matrix grad = weighted.transpose() * y_unit;  // m x d
    const Vector scale = (weighted.array() * rel_y.array()).colwise().sum().transpose();
    grad -= scale.asDiagonal() * anchors_y;
    for (Index j = 0; j < m; ++j) {
      if (frozen[j]) continue;
      anchors_y.row(j) -= cfg.lr * grad.row(j);
      const double norm = anchors_y.row(j).norm();
      if (!(norm > 0.0) || !std::isfinite(norm)) {
        throw NumericalError("anchor optimization diverged at iteration " +
                             std::to_string(iter + 1));
      }
      anchors_y.row(j) /= norm;
    }
    rel_y = y_unit * anchors_y.transpose();
    const double next = evaluate(rel_y, targets);
    const double change = std::abs(loss - next) / std::max(loss, 1e-300);
    loss = next;
    if (change < cfg.tol) {
      ++iter;
      break;
    }
  }
  diag.iterations = iter;
  diag.final_loss = loss;

  AnchorSet found = discretize(anchors_y, space_y, pinned);
  std::vector<std::pair<std::string, std::string>> pairs;
  for (Index j = 0; j < m; ++j) pairs.emplace_back(anchors_x.ids()[j], found.ids()[j]);
  return {std::move(found), ParallelAnchors(std::move(pairs)), std::move(anchors_y),
          std::move(diag)};
}

}  // namespace relrep
