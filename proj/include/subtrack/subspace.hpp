// Subspace update step: rank-one descent direction, additive basis update,
// and the adaptive step-size controller driven by the cosine between
// consecutive descent directions.

#pragma once

#include "subtrack/core.hpp"
#include "subtrack/inner_solver.hpp"

namespace subtrack {

// State of the adaptive step-size controller. mu == C / (1 + eta) at all
// times; eta stays inside [eta_floor, eta_max].
struct StepSizeState {
  double mu = 0.0;
  double eta = 0.0;
  std::optional<Matrix> prev_direction;

  static StepSizeState initial(const Hyperparams& params) {
    StepSizeState st;
    st.eta = params.C;
    st.mu = params.C / (1.0 + st.eta);
    return st;
  }
};

// D = residual a^T / (1 + a^T a). The scalar division is the
// Sherman-Morrison form of residual a^T (I_r + a a^T)^{-1}.
inline Matrix descent_direction(const SubspaceBasis& U, const FitResult& fit,
                                const Frame& b) {
  const Vector residual = fit_residual(U, fit, b);
  const double denom = 1.0 + fit.coeffs.squaredNorm();
  return (residual / denom) * fit.coeffs.transpose();
}

// U + (1/mu) D, the minimizer of the quadratic surrogate of the loss around U.
inline SubspaceBasis apply_update(const SubspaceBasis& U, const Matrix& D, double mu) {
  if (mu <= 0.0) {
    std::ostringstream os;
    os << "apply_update: mu must be > 0, got " << mu;
    throw std::invalid_argument(os.str());
  }
  if (D.rows() != U.rows() || D.cols() != U.cols()) {
    std::ostringstream os;
    os << "apply_update: direction is " << D.rows() << "x" << D.cols()
       << " but basis is " << U.rows() << "x" << U.cols();
    throw std::invalid_argument(os.str());
  }
  return SubspaceBasis(U.matrix + D / mu);
}

// Odd, strictly increasing, range (-f, f). The exponent is clamped so large
// |x| saturates instead of overflowing.
inline double sigmoid(double x, double f, double slope) {
  const double t = std::clamp(-slope * x, -700.0, 700.0);
  return -f + 2.0 * f / (1.0 + std::exp(t));
}

// The formula as printed: f + 2f / (1 + e^{slope x}). Positive everywhere and
// decreasing in x; kept selectable for fidelity experiments.
inline double sigmoid_paper_literal(double x, double f, double slope) {
  const double t = std::clamp(slope * x, -700.0, 700.0);
  return f + 2.0 * f / (1.0 + std::exp(t));
}

inline double sigmoid_value(double x, const Hyperparams& params) {
  return params.sigmoid_mode == SigmoidMode::PaperLiteral
             ? sigmoid_paper_literal(x, params.f, params.sigmoid_slope)
             : sigmoid(x, params.f, params.sigmoid_slope);
}

// eta_t = clamp(eta_{t-1} + sigmoid(cos(D_{t-1}, D_t)), eta_floor, eta_max),
// mu_t = C / (1 + eta_t). When either direction has zero norm (or there is
// no previous direction yet) the cosine is undefined and the increment is 0.
inline StepSizeState update_step_size(const StepSizeState& state, const Matrix& D,
                                      const Hyperparams& params) {
  double increment = 0.0;
  if (state.prev_direction) {
    const double norms = state.prev_direction->norm() * D.norm();
    if (norms > 0.0) {
      const double cosine =
          (state.prev_direction->cwiseProduct(D)).sum() / norms;
      increment = sigmoid_value(cosine, params);
    }
  }
  StepSizeState next;
  next.eta = std::clamp(state.eta + increment, params.eta_floor(), params.eta_max);
  next.mu = params.C / (1.0 + next.eta);
  next.prev_direction = D;
  return next;
}

// Orthonormal basis with the same column span (thin QR). Fails the same rank
// check as the solver would.
inline SubspaceBasis reorthonormalize(const SubspaceBasis& U, double rank_tol = 1e-10) {
  BasisFactor factor(U, rank_tol);  // rank check; throws RankDeficiencyError
  Eigen::HouseholderQR<Matrix> qr(U.matrix);
  Matrix q = qr.householderQ() * Matrix::Identity(U.rows(), U.cols());
  (void)factor;
  return SubspaceBasis(std::move(q));
}

}  // namespace subtrack
