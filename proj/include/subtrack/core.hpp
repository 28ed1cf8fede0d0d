// Core model for robust online subspace tracking: observation masks, frames,
// subspace bases, per-frame fit results, hyperparameters, and the projection /
// soft-thresholding / loss primitives everything else is built from.
//
// All types are immutable values and all operations are pure functions, so
// they are safe to use from any number of threads without synchronization.

#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace subtrack {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using Index = Eigen::Index;

// Thrown when a basis fails its numerical-rank invariant. Carries the
// singular values so callers can report how close to deficiency it was.
class RankDeficiencyError : public std::runtime_error {
 public:
  RankDeficiencyError(double smallest, double largest, double tol)
      : std::runtime_error(format(smallest, largest, tol)),
        smallest_(smallest),
        largest_(largest) {}

  double smallest_singular_value() const { return smallest_; }
  double largest_singular_value() const { return largest_; }

 private:
  static std::string format(double smallest, double largest, double tol) {
    std::ostringstream os;
    os << "basis is numerically rank deficient: smallest singular value "
       << smallest << " <= " << tol << " * largest singular value " << largest;
    return os.str();
  }

  double smallest_;
  double largest_;
};

// The index set of observed coordinates of a frame. Indices are kept
// strictly increasing and inside [0, ambient_dim).
class ObservationMask {
 public:
  ObservationMask(Index ambient_dim, std::vector<Index> indices)
      : ambient_dim_(ambient_dim), indices_(std::move(indices)) {
    if (ambient_dim_ < 0) {
      throw std::invalid_argument("ObservationMask: ambient_dim must be non-negative");
    }
    for (std::size_t k = 0; k < indices_.size(); ++k) {
      if (indices_[k] < 0 || indices_[k] >= ambient_dim_) {
        std::ostringstream os;
        os << "ObservationMask: index " << indices_[k] << " out of range [0, "
           << ambient_dim_ << ")";
        throw std::invalid_argument(os.str());
      }
      if (k > 0 && indices_[k] <= indices_[k - 1]) {
        std::ostringstream os;
        os << "ObservationMask: indices must be strictly increasing, got "
           << indices_[k - 1] << " before " << indices_[k];
        throw std::invalid_argument(os.str());
      }
    }
  }

  static ObservationMask full(Index ambient_dim) {
    std::vector<Index> idx(static_cast<std::size_t>(ambient_dim));
    for (Index i = 0; i < ambient_dim; ++i) idx[static_cast<std::size_t>(i)] = i;
    return ObservationMask(ambient_dim, std::move(idx));
  }

  static ObservationMask none(Index ambient_dim) {
    return ObservationMask(ambient_dim, {});
  }

  Index ambient_dim() const { return ambient_dim_; }
  const std::vector<Index>& indices() const { return indices_; }
  Index count() const { return static_cast<Index>(indices_.size()); }
  bool is_full() const { return count() == ambient_dim_; }

  bool observes(Index i) const {
    return std::binary_search(indices_.begin(), indices_.end(), i);
  }

  // Indices of the unobserved coordinates, in increasing order.
  std::vector<Index> complement() const {
    std::vector<Index> out;
    out.reserve(static_cast<std::size_t>(ambient_dim_ - count()));
    std::size_t k = 0;
    for (Index i = 0; i < ambient_dim_; ++i) {
      if (k < indices_.size() && indices_[k] == i) {
        ++k;
      } else {
        out.push_back(i);
      }
    }
    return out;
  }

  friend bool operator==(const ObservationMask& a, const ObservationMask& b) {
    return a.ambient_dim_ == b.ambient_dim_ && a.indices_ == b.indices_;
  }

 private:
  Index ambient_dim_;
  std::vector<Index> indices_;
};

namespace detail {

inline void check_length(const char* op, const Vector& v, const ObservationMask& mask) {
  if (v.size() != mask.ambient_dim()) {
    std::ostringstream os;
    os << op << ": vector length " << v.size() << " does not match mask ambient_dim "
       << mask.ambient_dim();
    throw std::invalid_argument(os.str());
  }
}

}  // namespace detail

// Keeps observed coordinates, zeroes the rest.
inline Vector project_mask(const Vector& v, const ObservationMask& mask) {
  detail::check_length("project_mask", v, mask);
  Vector out = Vector::Zero(v.size());
  for (Index i : mask.indices()) out[i] = v[i];
  return out;
}

// Keeps unobserved coordinates, zeroes the observed ones. Together with
// project_mask this partitions v exactly.
inline Vector project_complement(const Vector& v, const ObservationMask& mask) {
  detail::check_length("project_complement", v, mask);
  Vector out = v;
  for (Index i : mask.indices()) out[i] = 0.0;
  return out;
}

inline double soft_threshold(double x, double tau) {
  if (x > tau) return x - tau;
  if (x < -tau) return x + tau;
  return 0.0;
}

// Element-wise proximal map of tau * l1: shrinks each entry toward zero by
// tau and zeroes entries at or below the threshold.
inline Vector soft_threshold(const Vector& v, double tau) {
  if (tau < 0.0) {
    std::ostringstream os;
    os << "soft_threshold: threshold must be non-negative, got " << tau;
    throw std::invalid_argument(os.str());
  }
  Vector out(v.size());
  for (Index i = 0; i < v.size(); ++i) out[i] = soft_threshold(v[i], tau);
  return out;
}

// One measurement vector together with its observation mask. Values are
// stored dense with exact zeros on the unobserved coordinates.
struct Frame {
  Vector values;
  ObservationMask mask;

  Frame(Vector values_in, ObservationMask mask_in)
      : values(std::move(values_in)), mask(std::move(mask_in)) {
    detail::check_length("Frame", values, mask);
    std::size_t k = 0;
    const auto& idx = mask.indices();
    for (Index i = 0; i < values.size(); ++i) {
      if (k < idx.size() && idx[k] == i) {
        ++k;
      } else if (values[i] != 0.0) {
        std::ostringstream os;
        os << "Frame: value at unobserved index " << i << " must be zero, got "
           << values[i];
        throw std::invalid_argument(os.str());
      }
    }
  }

  // Builds a frame from a fully specified vector by zeroing the unobserved
  // coordinates.
  static Frame from_full(const Vector& full_values, ObservationMask mask_in) {
    Vector masked = project_mask(full_values, mask_in);
    return Frame(std::move(masked), std::move(mask_in));
  }

  Index ambient_dim() const { return mask.ambient_dim(); }
};

// An n-by-r matrix whose columns span the tracked subspace. The numerical
// rank invariant (smallest singular value > rank_tol * largest) is enforced
// where a factorization is taken, not on construction.
struct SubspaceBasis {
  Matrix matrix;

  explicit SubspaceBasis(Matrix m) : matrix(std::move(m)) {
    if (matrix.rows() < 1 || matrix.cols() < 1) {
      throw std::invalid_argument("SubspaceBasis: matrix must be non-empty");
    }
    if (matrix.cols() > matrix.rows()) {
      std::ostringstream os;
      os << "SubspaceBasis: rank " << matrix.cols() << " exceeds ambient dimension "
         << matrix.rows();
      throw std::invalid_argument(os.str());
    }
  }

  Index rows() const { return matrix.rows(); }
  Index cols() const { return matrix.cols(); }
};

// Output of the per-frame fit: coefficients a, sparse outliers s (supported
// on the observed set), and the completion vector e (supported on the
// unobserved set, e = -Omega_c(U a)).
struct FitResult {
  Vector coeffs;
  Vector outliers;
  Vector completion;
  int iterations = 0;
  double final_loss = 0.0;
};

enum class SigmoidMode {
  Default,       // odd, increasing, range (-f, f)
  PaperLiteral,  // f + 2f / (1 + exp(slope * x))
};

// All tunables in one place. validate() throws std::invalid_argument naming
// the offending field.
struct Hyperparams {
  double lambda = 0.0;            // l1 weight on the outlier vector
  double C = 1.0;                 // numerator of mu and lower clamp of eta
  double eta_max = 16.0;          // upper clamp of eta
  double f = 1.0;                 // sigmoid amplitude
  double sigmoid_slope = 10.0;    // sigmoid steepness
  SigmoidMode sigmoid_mode = SigmoidMode::Default;
  double inner_tol = 1e-6;        // relative-change stop for the inner solve
  int inner_max_iters = 100;
  int reorthonormalize_every = 0; // frames between re-orthonormalizations; 0 = never
  double rank_tol = 1e-10;        // relative rank threshold for bases
  std::optional<double> eta_min;  // lower clamp of eta; defaults to C
  bool warm_start = false;        // seed the inner solve with the previous frame's (s, e)
  bool skip_on_rank_fail = false; // skip frames whose basis factorization fails

  double eta_floor() const { return eta_min.value_or(C); }

  double mu_lower_bound() const { return C / (1.0 + eta_max); }
  double mu_upper_bound() const { return C / (1.0 + eta_floor()); }

  void validate() const {
    require(lambda >= 0.0, "lambda must be >= 0");
    require(C > 0.0, "C must be > 0");
    require(eta_max > C, "eta_max must be > C");
    require(f > 0.0, "f must be > 0");
    require(sigmoid_slope > 0.0, "sigmoid_slope must be > 0");
    require(inner_tol > 0.0, "inner_tol must be > 0");
    require(inner_max_iters >= 1, "inner_max_iters must be >= 1");
    require(reorthonormalize_every >= 0, "reorthonormalize_every must be >= 0");
    require(rank_tol > 0.0, "rank_tol must be > 0");
    if (eta_min) {
      require(*eta_min > 0.0, "eta_min must be > 0");
      require(*eta_min <= eta_max, "eta_min must be <= eta_max");
    }
  }

 private:
  static void require(bool ok, const char* what) {
    if (!ok) throw std::invalid_argument(std::string("Hyperparams: ") + what);
  }
};

// Misfit b - (U a + s + e) evaluated on all coordinates.
inline Vector fit_residual(const SubspaceBasis& U, const FitResult& fit, const Frame& b) {
  if (U.rows() != b.ambient_dim() || U.cols() != fit.coeffs.size() ||
      fit.outliers.size() != b.ambient_dim() || fit.completion.size() != b.ambient_dim()) {
    std::ostringstream os;
    os << "fit_residual: inconsistent dimensions (U " << U.rows() << "x" << U.cols()
       << ", a " << fit.coeffs.size() << ", s " << fit.outliers.size() << ", e "
       << fit.completion.size() << ", b " << b.ambient_dim() << ")";
    throw std::invalid_argument(os.str());
  }
  return b.values - (U.matrix * fit.coeffs + fit.outliers + fit.completion);
}

// (mu/2) ||b - (U a + s + e)||_2^2 + lambda ||s||_1
inline double loss_value(const SubspaceBasis& U, const FitResult& fit, const Frame& b,
                         double mu, double lambda) {
  if (mu <= 0.0) {
    throw std::invalid_argument("loss_value: mu must be > 0");
  }
  if (lambda < 0.0) {
    throw std::invalid_argument("loss_value: lambda must be >= 0");
  }
  const Vector r = fit_residual(U, fit, b);
  return 0.5 * mu * r.squaredNorm() + lambda * fit.outliers.lpNorm<1>();
}

}  // namespace subtrack
