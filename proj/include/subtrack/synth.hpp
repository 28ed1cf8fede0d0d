// Synthetic streams with known ground truth: frames b_t = Omega_t(U_t a_t +
// s_t [+ noise]) from a stationary or slowly rotating subspace. Everything is
// drawn from one seeded generator so a scenario reproduces bit for bit.

#pragma once

#include <random>

#include "subtrack/core.hpp"
#include "subtrack/random.hpp"

namespace subtrack {

struct Scenario {
  Index n = 0;
  Index r = 0;
  int num_frames = 0;
  double obs_fraction = 1.0;      // fraction of coordinates observed per frame
  double outlier_fraction = 0.0;  // fraction of coordinates corrupted per frame
  double outlier_scale = 1.0;     // std dev of outlier values
  double noise_sigma = 0.0;       // dense Gaussian noise, added before masking
  double rotation_rate = 0.0;     // per-frame basis perturbation; 0 = stationary
  std::uint64_t seed = 0;

  void validate() const {
    require(n >= 1, "n must be >= 1");
    require(r >= 1 && r < n, "r must satisfy 1 <= r < n");
    require(num_frames >= 0, "num_frames must be >= 0");
    require(obs_fraction > 0.0 && obs_fraction <= 1.0, "obs_fraction must be in (0, 1]");
    require(outlier_fraction >= 0.0 && outlier_fraction < 1.0,
            "outlier_fraction must be in [0, 1)");
    require(outlier_scale >= 0.0, "outlier_scale must be >= 0");
    require(noise_sigma >= 0.0, "noise_sigma must be >= 0");
    require(rotation_rate >= 0.0, "rotation_rate must be >= 0");
  }

  // Identifiability heuristic, not enforced: fewer observed entries than the
  // rank leaves the coefficients underdetermined on average.
  std::vector<std::string> warnings() const {
    std::vector<std::string> out;
    if (obs_fraction * static_cast<double>(n) < static_cast<double>(r)) {
      std::ostringstream os;
      os << "scenario: obs_fraction*n = " << obs_fraction * static_cast<double>(n)
         << " is below the rank r = " << r << "; coefficients may be unidentifiable";
      out.push_back(os.str());
    }
    return out;
  }

 private:
  static void require(bool ok, const char* what) {
    if (!ok) throw std::invalid_argument(std::string("Scenario: ") + what);
  }
};

struct GroundTruth {
  // One entry when the subspace is stationary, one per frame otherwise.
  std::vector<Matrix> bases;
  std::vector<Vector> coeffs;
  std::vector<std::vector<Index>> outlier_supports;
  std::vector<Vector> outlier_values;  // aligned with outlier_supports
  std::vector<Vector> clean_frames;    // bases[t] * coeffs[t]

  bool stationary() const { return bases.size() == 1; }

  const Matrix& basis_at(std::size_t t) const {
    return stationary() ? bases.front() : bases.at(t);
  }
};

struct SynthData {
  std::vector<Frame> frames;
  GroundTruth truth;
};

namespace detail {

inline Matrix orthonormalized(const Matrix& m) {
  Eigen::HouseholderQR<Matrix> qr(m);
  return qr.householderQ() * Matrix::Identity(m.rows(), m.cols());
}

inline SynthData generate_impl(const Scenario& sc, std::optional<Matrix> initial_basis) {
  sc.validate();
  if (initial_basis &&
      (initial_basis->rows() != sc.n || initial_basis->cols() != sc.r)) {
    throw std::invalid_argument("generate: initial basis does not match scenario dimensions");
  }

  std::mt19937_64 rng(sc.seed);
  const Index num_obs = static_cast<Index>(std::lround(sc.obs_fraction * static_cast<double>(sc.n)));
  const Index num_out = static_cast<Index>(std::lround(sc.outlier_fraction * static_cast<double>(sc.n)));
  const bool stationary = sc.rotation_rate == 0.0;

  Matrix basis = initial_basis ? *initial_basis
                               : orthonormalized(gaussian_matrix(rng, sc.n, sc.r));

  SynthData data;
  data.frames.reserve(static_cast<std::size_t>(sc.num_frames));
  auto& truth = data.truth;
  if (stationary) truth.bases.push_back(basis);

  for (int t = 0; t < sc.num_frames; ++t) {
    if (!stationary) {
      if (t > 0) {
        basis = orthonormalized(basis + sc.rotation_rate * gaussian_matrix(rng, sc.n, sc.r));
      }
      truth.bases.push_back(basis);
    }

    const Vector a = gaussian_vector(rng, sc.r);
    const Vector clean = basis * a;

    std::vector<Index> support = sample_indices(rng, sc.n, num_out);
    Vector s_values(num_out);
    Vector full = clean;
    for (Index k = 0; k < num_out; ++k) {
      s_values[k] = sc.outlier_scale * std::normal_distribution<double>(0.0, 1.0)(rng);
      full[support[static_cast<std::size_t>(k)]] += s_values[k];
    }

    if (sc.noise_sigma > 0.0) {
      full += sc.noise_sigma * gaussian_vector(rng, sc.n);
    }

    ObservationMask mask(sc.n, sample_indices(rng, sc.n, num_obs));
    data.frames.push_back(Frame::from_full(full, std::move(mask)));

    truth.coeffs.push_back(a);
    truth.outlier_supports.push_back(std::move(support));
    truth.outlier_values.push_back(std::move(s_values));
    truth.clean_frames.push_back(clean);
  }
  return data;
}

}  // namespace detail

inline SynthData generate(const Scenario& sc) {
  return detail::generate_impl(sc, std::nullopt);
}

// Same model, but the subspace starts from a caller-supplied basis. Used to
// stitch scenarios together (e.g. a stationary phase followed by rotation).
inline SynthData generate_from(Matrix initial_basis, const Scenario& sc) {
  return detail::generate_impl(sc, std::move(initial_basis));
}

}  // namespace subtrack
