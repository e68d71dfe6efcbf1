#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace relrep {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;
using Index = Eigen::Index;
using Seed = std::uint64_t;

// Bad input, bad file, or a violated precondition. The CLI maps it to exit 1.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Divergence, overflow, or any other non-finite result. The CLI maps it to exit 2.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline void require(bool condition, const std::string& message) {
  if (!condition) throw ValidationError(message);
}

inline bool all_finite(const Eigen::Ref<const Matrix>& m) {
  return m.allFinite();
}

// Cosine of the angle between two vectors. Written as dot / sqrt(|u|^2 |v|^2)
// so that cosine(v, v) is exactly 1 in floating point.
template <typename A, typename B>
double cosine_of(const Eigen::MatrixBase<A>& u, const Eigen::MatrixBase<B>& v) {
  const double dot = u.dot(v);
  const double denom = std::sqrt(u.squaredNorm() * v.squaredNorm());
  double c = dot / denom;
  if (c > 1.0) c = 1.0;
  if (c < -1.0) c = -1.0;
  return c;
}

}  // namespace relrep
