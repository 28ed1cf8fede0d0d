// Per-frame LASSO subproblem: alternating exact block updates over the
// coefficients a, the completion vector e, and the outlier vector s,
//
//   a^k = pinv(U) (b - s^{k-1} - e^{k-1})
//   e^k = -Omega_c(U a^k)
//   s^k = soft_threshold(b - U a^k - e^k, lambda)
//
// run until the relative change of both a and s drops below inner_tol.
// The factorization of U is computed once and reused across iterations.

#pragma once

#include <utility>

#include "subtrack/core.hpp"

namespace subtrack {

// Thin SVD of a basis with the numerical-rank invariant checked up front.
// Solving against it gives the least-squares coefficients via orthogonal
// factors only; no normal equations are formed.
class BasisFactor {
 public:
  explicit BasisFactor(const SubspaceBasis& U, double rank_tol = 1e-10)
      : matrix_(U.matrix),
        svd_(U.matrix, Eigen::ComputeThinU | Eigen::ComputeThinV) {
    const auto& sv = svd_.singularValues();
    smax_ = sv(0);
    smin_ = sv(sv.size() - 1);
    if (!(smin_ > rank_tol * smax_)) {
      throw RankDeficiencyError(smin_, smax_, rank_tol);
    }
  }

  const Matrix& matrix() const { return matrix_; }
  Index rows() const { return matrix_.rows(); }
  Index cols() const { return matrix_.cols(); }
  double smallest_singular_value() const { return smin_; }
  double largest_singular_value() const { return smax_; }

  // argmin_a ||U a - rhs||_2 (unique because U passed the rank check)
  Vector solve(const Vector& rhs) const {
    if (rhs.size() != matrix_.rows()) {
      std::ostringstream os;
      os << "BasisFactor::solve: rhs length " << rhs.size()
         << " does not match basis rows " << matrix_.rows();
      throw std::invalid_argument(os.str());
    }
    return svd_.solve(rhs);
  }

 private:
  Matrix matrix_;
  Eigen::JacobiSVD<Matrix> svd_;
  double smin_ = 0.0;
  double smax_ = 0.0;
};

inline Vector least_squares_apply(const SubspaceBasis& U, const Vector& v,
                                  double rank_tol = 1e-10) {
  return BasisFactor(U, rank_tol).solve(v);
}

// Diagnostics for one inner solve. loss_trace holds the loss after each
// completed iteration and is non-increasing from the second entry onward.
struct InnerSolveReport {
  int iterations = 0;
  std::vector<double> loss_trace;
  bool converged = false;
};

// Optional warm start for the inner solve.
struct InnerInit {
  Vector outliers;
  Vector completion;
};

inline std::pair<FitResult, InnerSolveReport> solve_fit(
    const BasisFactor& factor, const Frame& b, const Hyperparams& params,
    const std::optional<InnerInit>& init = std::nullopt) {
  params.validate();
  const Index n = factor.rows();
  const Index r = factor.cols();
  if (b.ambient_dim() != n) {
    std::ostringstream os;
    os << "solve_fit: frame dimension " << b.ambient_dim()
       << " does not match basis rows " << n;
    throw std::invalid_argument(os.str());
  }

  Vector s = Vector::Zero(n);
  Vector e = Vector::Zero(n);
  if (init) {
    if (init->outliers.size() != n || init->completion.size() != n) {
      throw std::invalid_argument("solve_fit: warm-start vectors have wrong length");
    }
    s = init->outliers;
    e = init->completion;
  }
  Vector a = Vector::Zero(r);

  InnerSolveReport report;
  report.loss_trace.reserve(static_cast<std::size_t>(params.inner_max_iters));

  Vector Ua(n);
  for (int k = 1; k <= params.inner_max_iters; ++k) {
    const Vector a_prev = a;
    const Vector s_prev = s;

    a = factor.solve(b.values - s - e);
    Ua.noalias() = factor.matrix() * a;
    e = project_complement(-Ua, b.mask);
    // On unobserved coordinates b, s are zero and e cancels U a exactly, so
    // the threshold argument is exactly zero there and support(s) stays
    // inside the mask.
    s = soft_threshold(b.values - Ua - e, params.lambda);

    report.iterations = k;
    const double loss =
        0.5 * (b.values - Ua - s - e).squaredNorm() + params.lambda * s.lpNorm<1>();
    report.loss_trace.push_back(loss);

    const double ds = (s - s_prev).norm() / std::max(1.0, s_prev.norm());
    const double da = (a - a_prev).norm() / std::max(1.0, a_prev.norm());
    if (ds < params.inner_tol && da < params.inner_tol) {
      report.converged = true;
      break;
    }
  }

  FitResult fit;
  fit.coeffs = std::move(a);
  fit.outliers = std::move(s);
  fit.completion = std::move(e);
  fit.iterations = report.iterations;
  fit.final_loss = report.loss_trace.back();
  return {std::move(fit), std::move(report)};
}

inline std::pair<FitResult, InnerSolveReport> solve_fit(
    const SubspaceBasis& U, const Frame& b, const Hyperparams& params,
    const std::optional<InnerInit>& init = std::nullopt) {
  return solve_fit(BasisFactor(U, params.rank_tol), b, params, init);
}

}  // namespace subtrack
