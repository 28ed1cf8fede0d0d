// Evaluation against ground truth: principal-angle subspace distance,
// normalized reconstruction error, and support precision/recall/F1 for the
// recovered outliers.

#pragma once

#include <span>

#include "subtrack/core.hpp"

namespace subtrack {

// sqrt(max(0, r - ||Qu^T Qv||_F^2) / r), in [0, 1]. Both arguments are
// orthonormalized first, so the value depends only on the spans. 0 means
// identical spans, 1 mutually orthogonal ones.
inline double subspace_distance(const SubspaceBasis& U, const SubspaceBasis& V) {
  if (U.rows() != V.rows() || U.cols() != V.cols()) {
    std::ostringstream os;
    os << "subspace_distance: shapes " << U.rows() << "x" << U.cols() << " and "
       << V.rows() << "x" << V.cols() << " do not match";
    throw std::invalid_argument(os.str());
  }
  const Index r = U.cols();
  Eigen::HouseholderQR<Matrix> qu(U.matrix);
  Eigen::HouseholderQR<Matrix> qv(V.matrix);
  const Matrix Qu = qu.householderQ() * Matrix::Identity(U.rows(), r);
  const Matrix Qv = qv.householderQ() * Matrix::Identity(V.rows(), r);
  const double overlap = (Qu.transpose() * Qv).squaredNorm();
  const double rd = static_cast<double>(r);
  return std::sqrt(std::max(0.0, rd - overlap) / rd);
}

inline double subspace_distance(const Matrix& U, const Matrix& V) {
  return subspace_distance(SubspaceBasis(U), SubspaceBasis(V));
}

// ||estimate - truth||^2 / ||truth||^2. A zero truth vector is degenerate;
// the squared estimate norm is returned and *degenerate set when provided.
inline double recon_nmse(const Vector& estimate, const Vector& truth,
                         bool* degenerate = nullptr) {
  if (estimate.size() != truth.size()) {
    std::ostringstream os;
    os << "recon_nmse: lengths " << estimate.size() << " and " << truth.size()
       << " do not match";
    throw std::invalid_argument(os.str());
  }
  const double denom = truth.squaredNorm();
  if (degenerate) *degenerate = (denom == 0.0);
  if (denom == 0.0) return estimate.squaredNorm();
  return (estimate - truth).squaredNorm() / denom;
}

struct SupportScores {
  double precision = 1.0;
  double recall = 1.0;
  double f1 = 1.0;
};

// Support recovery scores with the empty-set conventions: an empty
// prediction has precision 1, an empty truth has recall 1, and F1 is 1 when
// both are empty, 0 when precision + recall is 0.
inline SupportScores outlier_support_scores(const Vector& s_hat,
                                            std::span<const Index> true_support,
                                            double threshold) {
  if (threshold <= 0.0) {
    std::ostringstream os;
    os << "outlier_support_scores: threshold must be > 0, got " << threshold;
    throw std::invalid_argument(os.str());
  }
  std::size_t predicted = 0;
  std::size_t hits = 0;
  for (Index i = 0; i < s_hat.size(); ++i) {
    if (std::abs(s_hat[i]) > threshold) {
      ++predicted;
      if (std::binary_search(true_support.begin(), true_support.end(), i)) ++hits;
    }
  }
  SupportScores out;
  out.precision = predicted == 0 ? 1.0
                                 : static_cast<double>(hits) / static_cast<double>(predicted);
  out.recall = true_support.empty()
                   ? 1.0
                   : static_cast<double>(hits) / static_cast<double>(true_support.size());
  out.f1 = (out.precision + out.recall) == 0.0
               ? 0.0
               : 2.0 * out.precision * out.recall / (out.precision + out.recall);
  return out;
}

struct SeriesSummary {
  double mean = 0.0;
  double final = 0.0;
  double max = 0.0;
};

inline SeriesSummary summarize(std::span<const double> series) {
  SeriesSummary s;
  if (series.empty()) return s;
  double sum = 0.0;
  double mx = series.front();
  for (double v : series) {
    sum += v;
    mx = std::max(mx, v);
  }
  s.mean = sum / static_cast<double>(series.size());
  s.final = series.back();
  s.max = mx;
  return s;
}

// Per-frame evaluation series plus their aggregates.
struct EvalReport {
  std::vector<double> subspace_distance;
  std::vector<double> recon_nmse;
  std::vector<double> outlier_precision;
  std::vector<double> outlier_recall;
  std::vector<double> outlier_f1;

  SeriesSummary subspace_distance_summary() const { return summarize(subspace_distance); }
  SeriesSummary recon_nmse_summary() const { return summarize(recon_nmse); }
  SeriesSummary outlier_f1_summary() const { return summarize(outlier_f1); }
};

// Accumulates the report one frame at a time. The reconstruction estimate of
// the clean signal is U_prev * a (the basis the fit was computed against);
// the subspace distance compares the post-update basis with the truth.
class EvalAccumulator {
 public:
  explicit EvalAccumulator(double outlier_threshold = 1e-6)
      : threshold_(outlier_threshold) {}

  void add_frame(const Matrix& fit_basis, const FitResult& fit,
                 const Matrix& updated_basis, const Matrix& truth_basis,
                 const Vector& clean_frame, std::span<const Index> true_support) {
    report_.subspace_distance.push_back(subspace_distance(updated_basis, truth_basis));
    report_.recon_nmse.push_back(recon_nmse(fit_basis * fit.coeffs, clean_frame));
    const SupportScores sc = outlier_support_scores(fit.outliers, true_support, threshold_);
    report_.outlier_precision.push_back(sc.precision);
    report_.outlier_recall.push_back(sc.recall);
    report_.outlier_f1.push_back(sc.f1);
  }

  const EvalReport& report() const { return report_; }
  EvalReport take() { return std::move(report_); }

 private:
  double threshold_;
  EvalReport report_;
};

}  // namespace subtrack
