// Per-frame orchestration: fit against the previous basis, move the basis
// along the rank-one descent direction with the current step size, then let
// the controller adapt the step size from the new direction. Also the batch
// robust-matrix-completion mode built by cycling the online loop over the
// columns of a partially observed matrix.

#pragma once

#include <cassert>
#include <span>
#include <utility>

#include "subtrack/core.hpp"
#include "subtrack/inner_solver.hpp"
#include "subtrack/random.hpp"
#include "subtrack/subspace.hpp"

namespace subtrack {

struct TrackerState {
  SubspaceBasis basis;
  StepSizeState step;
  long frame_index = 0;
  Hyperparams params;
  // Previous frame's (s, e); only kept when params.warm_start is set.
  std::optional<InnerInit> warm;
};

// Per-frame diagnostics.
struct FrameTrace {
  long frame_index = 0;
  FitResult fit;
  double mu_used = 0.0;       // step size applied to this frame's update
  double eta = 0.0;           // controller state after the frame
  int inner_iterations = 0;
  double residual_norm = 0.0;
  bool rank_warning = false;  // updated basis failed the rank invariant
  bool skipped = false;       // frame skipped after a rank failure
};

namespace detail {

inline void check_state_invariants(const TrackerState& st) {
#ifndef NDEBUG
  const double lo = st.params.eta_floor();
  const double hi = st.params.eta_max;
  assert(st.step.eta >= lo && st.step.eta <= hi);
  assert(std::abs(st.step.mu - st.params.C / (1.0 + st.step.eta)) <=
         1e-12 * st.step.mu);
  assert(st.basis.rows() >= st.basis.cols());
#else
  (void)st;
#endif
}

}  // namespace detail

// Random orthonormal basis from a seeded Gaussian draw, plus the controller
// at its initial state (eta_0 = C, mu_0 = C / (1 + C)).
inline TrackerState init_tracker(Index n, Index r, const Hyperparams& params,
                                 std::uint64_t seed) {
  params.validate();
  if (r < 1 || r >= n) {
    std::ostringstream os;
    os << "init_tracker: rank must satisfy 1 <= r < n, got r=" << r << ", n=" << n;
    throw std::invalid_argument(os.str());
  }
  std::mt19937_64 rng(seed);
  Matrix g = detail::gaussian_matrix(rng, n, r);
  Eigen::HouseholderQR<Matrix> qr(g);
  Matrix q = qr.householderQ() * Matrix::Identity(n, r);
  TrackerState st{SubspaceBasis(std::move(q)), StepSizeState::initial(params), 0, params,
                  std::nullopt};
  detail::check_state_invariants(st);
  return st;
}

inline std::pair<TrackerState, FrameTrace> process_frame(const TrackerState& state,
                                                         const Frame& b) {
  if (b.ambient_dim() != state.basis.rows()) {
    std::ostringstream os;
    os << "process_frame: frame dimension " << b.ambient_dim()
       << " does not match basis dimension " << state.basis.rows();
    throw std::invalid_argument(os.str());
  }

  const Hyperparams& p = state.params;

  std::optional<BasisFactor> factor;
  try {
    factor.emplace(state.basis, p.rank_tol);
  } catch (const RankDeficiencyError&) {
    if (!p.skip_on_rank_fail) throw;
    // Leave the basis and controller untouched; mark the frame as skipped.
    TrackerState next = state;
    next.frame_index = state.frame_index + 1;
    FrameTrace trace;
    trace.frame_index = state.frame_index;
    trace.fit.coeffs = Vector::Zero(state.basis.cols());
    trace.fit.outliers = Vector::Zero(b.ambient_dim());
    trace.fit.completion = Vector::Zero(b.ambient_dim());
    trace.fit.final_loss = 0.5 * b.values.squaredNorm();
    trace.mu_used = state.step.mu;
    trace.eta = state.step.eta;
    trace.residual_norm = b.values.norm();
    trace.skipped = true;
    return {std::move(next), std::move(trace)};
  }

  auto [fit, report] =
      solve_fit(*factor, b, p, p.warm_start ? state.warm : std::nullopt);

  const Vector residual = fit_residual(state.basis, fit, b);
  const double denom = 1.0 + fit.coeffs.squaredNorm();
  const Matrix direction = (residual / denom) * fit.coeffs.transpose();

  const double mu_used = state.step.mu;
  SubspaceBasis updated = apply_update(state.basis, direction, mu_used);
  StepSizeState step = update_step_size(state.step, direction, p);

  const long next_index = state.frame_index + 1;
  if (p.reorthonormalize_every > 0 && next_index % p.reorthonormalize_every == 0) {
    updated = reorthonormalize(updated, p.rank_tol);
  }

  // Rank diagnostic on the basis we are about to hand to the next frame.
  Eigen::JacobiSVD<Matrix> sv(updated.matrix);
  const double smax = sv.singularValues()(0);
  const double smin = sv.singularValues()(sv.singularValues().size() - 1);
  const bool rank_warning = !(smin > p.rank_tol * smax);

  FrameTrace trace;
  trace.frame_index = state.frame_index;
  trace.fit = fit;
  trace.mu_used = mu_used;
  trace.eta = step.eta;
  trace.inner_iterations = report.iterations;
  trace.residual_norm = residual.norm();
  trace.rank_warning = rank_warning;

  TrackerState next{std::move(updated), std::move(step), next_index, p, std::nullopt};
  if (p.warm_start) {
    next.warm = InnerInit{fit.outliers, fit.completion};
  }
  detail::check_state_invariants(next);
  return {std::move(next), std::move(trace)};
}

// Folds process_frame over the stream in order, invoking on_frame with the
// state after each frame and its trace. Returns the final state.
template <typename Fn>
TrackerState run_stream_with(TrackerState state, std::span<const Frame> frames,
                             Fn&& on_frame) {
  for (const Frame& b : frames) {
    auto [next, trace] = process_frame(state, b);
    state = std::move(next);
    on_frame(state, trace);
  }
  return state;
}

inline std::pair<TrackerState, std::vector<FrameTrace>> run_stream(
    TrackerState state, std::span<const Frame> frames) {
  std::vector<FrameTrace> traces;
  traces.reserve(frames.size());
  TrackerState final_state = run_stream_with(
      std::move(state), frames,
      [&traces](const TrackerState&, const FrameTrace& t) { traces.push_back(t); });
  return {std::move(final_state), std::move(traces)};
}

// Low-rank + sparse factors of a partially observed matrix given as columns.
struct BatchCompletion {
  SubspaceBasis basis;  // n x r
  Matrix coeffs;        // r x m
  Matrix outliers;      // n x m
};

// Cycles the online tracker over the columns `epochs` times (same order each
// epoch, state carried across epochs), then runs one fit-only pass against
// the frozen final basis so every column's (a, s) refers to the same U.
inline BatchCompletion batch_complete(std::span<const Frame> columns, Index ambient_dim,
                                      Index r, const Hyperparams& params, int epochs,
                                      std::uint64_t seed) {
  if (epochs < 1) {
    std::ostringstream os;
    os << "batch_complete: epochs must be >= 1, got " << epochs;
    throw std::invalid_argument(os.str());
  }
  for (const Frame& c : columns) {
    if (c.ambient_dim() != ambient_dim) {
      std::ostringstream os;
      os << "batch_complete: column dimension " << c.ambient_dim()
         << " does not match ambient dimension " << ambient_dim;
      throw std::invalid_argument(os.str());
    }
  }

  TrackerState state = init_tracker(ambient_dim, r, params, seed);
  for (int epoch = 0; epoch < epochs; ++epoch) {
    state = run_stream_with(std::move(state), columns,
                            [](const TrackerState&, const FrameTrace&) {});
  }

  const Index m = static_cast<Index>(columns.size());
  BatchCompletion out{state.basis, Matrix(r, m), Matrix(ambient_dim, m)};
  if (m == 0) return out;

  BasisFactor factor(state.basis, params.rank_tol);
  for (Index j = 0; j < m; ++j) {
    auto [fit, report] = solve_fit(factor, columns[static_cast<std::size_t>(j)], params);
    out.coeffs.col(j) = fit.coeffs;
    out.outliers.col(j) = fit.outliers;
  }
  return out;
}

}  // namespace subtrack
