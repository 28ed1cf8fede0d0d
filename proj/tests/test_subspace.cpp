#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "oracles.hpp"
#include "subtrack/subspace.hpp"

using namespace subtrack;

TEST_CASE("descent direction vanishes for zero coefficients or zero residual", "[subspace]") {
  std::mt19937_64 rng(51);
  const Matrix Q = oracles::random_orthonormal(rng, 5, 2);
  const Frame b = Frame::from_full(oracles::random_gaussian(rng, 5, 1).col(0),
                                   ObservationMask::full(5));

  FitResult fit;
  fit.coeffs = Vector::Zero(2);
  fit.outliers = Vector::Zero(5);
  fit.completion = Vector::Zero(5);
  CHECK(descent_direction(SubspaceBasis(Q), fit, b).isZero(0.0));

  // Perfect fit: residual is zero.
  fit.coeffs = (Vector(2) << 1, -2).finished();
  const Frame exact = Frame::from_full(Q * fit.coeffs, ObservationMask::full(5));
  CHECK(descent_direction(SubspaceBasis(Q), fit, exact).norm() == 0.0);
}

TEST_CASE("scalar and matrix forms of the direction agree", "[subspace]") {
  std::mt19937_64 rng(53);
  for (int trial = 0; trial < 50; ++trial) {
    const Index n = 5;
    const Index r = 2;
    const Matrix U = oracles::random_gaussian(rng, n, r);
    FitResult fit;
    fit.coeffs = oracles::random_gaussian(rng, r, 1).col(0);
    fit.outliers = oracles::random_gaussian(rng, n, 1).col(0);
    fit.completion = Vector::Zero(n);
    const Frame b = Frame::from_full(oracles::random_gaussian(rng, n, 1).col(0),
                                     ObservationMask::full(n));

    const Matrix got = descent_direction(SubspaceBasis(U), fit, b);
    const Vector residual = b.values - (U * fit.coeffs + fit.outliers + fit.completion);
    const Matrix metric =
        Matrix::Identity(r, r) + fit.coeffs * fit.coeffs.transpose();
    const Matrix expected = residual * fit.coeffs.transpose() * metric.inverse();
    CHECK((got - expected).norm() < 1e-12);
  }
}

TEST_CASE("apply_update moves by D over mu", "[subspace]") {
  std::mt19937_64 rng(59);
  const Matrix U = oracles::random_orthonormal(rng, 6, 2);
  const Matrix D = oracles::random_gaussian(rng, 6, 2);

  CHECK(apply_update(SubspaceBasis(U), Matrix::Zero(6, 2), 0.5).matrix == U);

  // The step shrinks as 1/mu.
  const SubspaceBasis far = apply_update(SubspaceBasis(U), D, 1e12);
  CHECK((far.matrix - U).norm() <= 1e-9 * D.norm());

  CHECK_THROWS_AS(apply_update(SubspaceBasis(U), D, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(apply_update(SubspaceBasis(U), D, -1.0), std::invalid_argument);
  CHECK_THROWS_AS(apply_update(SubspaceBasis(U), Matrix::Zero(5, 2), 1.0),
                  std::invalid_argument);
}

TEST_CASE("apply_update minimizes the quadratic surrogate", "[subspace]") {
  std::mt19937_64 rng(61);
  for (int trial = 0; trial < 10; ++trial) {
    const Index n = 6;
    const Index r = 2;
    const Matrix U = oracles::random_orthonormal(rng, n, r);
    const Vector a = oracles::random_gaussian(rng, r, 1).col(0);
    const Vector s = oracles::random_gaussian(rng, n, 1).col(0) * 0.3;
    const Vector e = Vector::Zero(n);
    const Vector bv = oracles::random_gaussian(rng, n, 1).col(0);
    const double mu = 0.25 + 0.5 * static_cast<double>(trial % 3);

    FitResult fit;
    fit.coeffs = a;
    fit.outliers = s;
    fit.completion = e;
    const Frame b = Frame::from_full(bv, ObservationMask::full(n));

    const Matrix D = descent_direction(SubspaceBasis(U), fit, b);
    const SubspaceBasis next = apply_update(SubspaceBasis(U), D, mu);

    oracles::Surrogate Q(U, a, s, e, bv, mu);
    const double q_star = Q(next.matrix);
    for (int k = 0; k < 100; ++k) {
      const Matrix perturbed =
          next.matrix + 0.1 * oracles::random_gaussian(rng, n, r);
      CHECK(q_star <= Q(perturbed) + 1e-12);
    }
    CHECK(Q.fd_gradient(next.matrix, 1e-5).cwiseAbs().maxCoeff() < 1e-8);
  }
}

TEST_CASE("default sigmoid is odd with range (-f, f)", "[subspace]") {
  CHECK(sigmoid(0.0, 1.0, 10.0) == 0.0);
  CHECK(sigmoid(1e9, 1.0, 10.0) == Catch::Approx(1.0));
  CHECK(sigmoid(-1e9, 1.0, 10.0) == Catch::Approx(-1.0));

  std::mt19937_64 rng(67);
  std::uniform_real_distribution<double> uni(-2.0, 2.0);
  double prev_x = -3.0;
  double prev_y = sigmoid(prev_x, 2.0, 5.0);
  for (int k = 0; k < 100; ++k) {
    const double x = uni(rng);
    const double y = sigmoid(x, 2.0, 5.0);
    CHECK(std::abs(y) < 2.0);
    CHECK(sigmoid(-x, 2.0, 5.0) == Catch::Approx(-y).margin(1e-15));
    if (x != 0.0) CHECK((y > 0.0) == (x > 0.0));  // sign matches input
    if (x > prev_x) {
      CHECK(y > prev_y);
    }
    prev_x = x;
    prev_y = y;
  }
}

TEST_CASE("paper-literal sigmoid evaluates the printed formula", "[subspace]") {
  CHECK(sigmoid_paper_literal(0.0, 1.0, 10.0) == Catch::Approx(2.0));
  // Positive for every input, larger for negative x.
  CHECK(sigmoid_paper_literal(1.0, 1.0, 10.0) > 0.0);
  CHECK(sigmoid_paper_literal(-1.0, 1.0, 10.0) > sigmoid_paper_literal(1.0, 1.0, 10.0));

  Hyperparams p;
  p.sigmoid_mode = SigmoidMode::PaperLiteral;
  CHECK(sigmoid_value(0.0, p) == Catch::Approx(2.0));
  p.sigmoid_mode = SigmoidMode::Default;
  CHECK(sigmoid_value(0.0, p) == 0.0);
}

TEST_CASE("aligned directions lower mu, opposed directions raise it", "[subspace]") {
  Hyperparams p;
  std::mt19937_64 rng(71);
  const Matrix D = oracles::random_gaussian(rng, 8, 2);

  StepSizeState st = StepSizeState::initial(p);
  st.eta = 4.0;
  st.mu = p.C / (1.0 + st.eta);
  st.prev_direction = D;

  const StepSizeState aligned = update_step_size(st, D, p);
  CHECK(aligned.eta == Catch::Approx(st.eta + sigmoid(1.0, p.f, p.sigmoid_slope)));
  CHECK(aligned.eta > st.eta);
  CHECK(aligned.mu < st.mu);

  const StepSizeState opposed = update_step_size(st, -D, p);
  CHECK(opposed.eta == Catch::Approx(st.eta + sigmoid(-1.0, p.f, p.sigmoid_slope)));
  CHECK(opposed.eta < st.eta);
  CHECK(opposed.mu > st.mu);

  // Orthogonal directions leave eta unchanged (sigmoid(0) = 0).
  Matrix Dperp = Matrix::Zero(8, 2);
  Dperp(0, 1) = 1.0;
  Matrix Dbase = Matrix::Zero(8, 2);
  Dbase(0, 0) = 1.0;
  StepSizeState st2 = StepSizeState::initial(p);
  st2.eta = 3.0;
  st2.mu = p.C / (1.0 + st2.eta);
  st2.prev_direction = Dbase;
  const StepSizeState ortho = update_step_size(st2, Dperp, p);
  CHECK(ortho.eta == Catch::Approx(st2.eta));
  CHECK(ortho.mu == Catch::Approx(st2.mu));
}

TEST_CASE("undefined cosine leaves eta clamped and unchanged", "[subspace]") {
  Hyperparams p;
  std::mt19937_64 rng(73);
  const Matrix D = oracles::random_gaussian(rng, 6, 2);

  // No previous direction yet.
  StepSizeState st = StepSizeState::initial(p);
  const StepSizeState first = update_step_size(st, D, p);
  CHECK(first.eta == st.eta);
  REQUIRE(first.prev_direction.has_value());
  CHECK(first.prev_direction->isApprox(D));

  // Zero-norm current direction.
  const StepSizeState zero = update_step_size(first, Matrix::Zero(6, 2), p);
  CHECK(zero.eta == first.eta);

  // Zero-norm stored direction.
  const StepSizeState after_zero = update_step_size(zero, D, p);
  CHECK(after_zero.eta == zero.eta);
}

TEST_CASE("eta and mu stay inside their bounds on any run", "[subspace]") {
  std::mt19937_64 rng(79);
  Hyperparams p;
  p.f = 2.5;
  p.eta_max = 9.0;
  StepSizeState st = StepSizeState::initial(p);
  for (int k = 0; k < 500; ++k) {
    const Matrix D = oracles::random_gaussian(rng, 4, 2) *
                     (k % 17 == 0 ? 0.0 : 1.0);  // sprinkle zero directions
    st = update_step_size(st, D, p);
    CHECK(st.eta >= p.C);
    CHECK(st.eta <= p.eta_max);
    CHECK(st.mu == Catch::Approx(p.C / (1.0 + st.eta)));
    CHECK(st.mu >= p.mu_lower_bound());
    CHECK(st.mu <= p.mu_upper_bound());
  }
}

TEST_CASE("eta_min knob overrides the lower clamp", "[subspace]") {
  Hyperparams p;
  p.eta_min = 0.25;  // below C
  StepSizeState st = StepSizeState::initial(p);
  std::mt19937_64 rng(83);
  const Matrix D = oracles::random_gaussian(rng, 4, 1);
  st.prev_direction = D;
  for (int k = 0; k < 10; ++k) st = update_step_size(st, -st.prev_direction.value(), p);
  CHECK(st.eta == Catch::Approx(0.25));
  CHECK(st.mu == Catch::Approx(p.C / 1.25));
}

TEST_CASE("reorthonormalize preserves the span", "[subspace]") {
  std::mt19937_64 rng(89);

  // Already orthonormal input: projector unchanged to machine precision.
  const Matrix Q = oracles::random_orthonormal(rng, 7, 3);
  const SubspaceBasis rq = reorthonormalize(SubspaceBasis(Q));
  CHECK((rq.matrix.transpose() * rq.matrix - Matrix::Identity(3, 3)).norm() < 1e-12);
  CHECK((oracles::projector(rq.matrix) - oracles::projector(Q)).norm() < 1e-12);

  // Diagonal scaling collapses to unit columns with the same span.
  Matrix S(3, 2);
  S << 2, 0, 0, 3, 0, 0;
  const SubspaceBasis rs = reorthonormalize(SubspaceBasis(S));
  for (Index j = 0; j < 2; ++j) CHECK(rs.matrix.col(j).norm() == Catch::Approx(1.0));
  CHECK((oracles::projector(rs.matrix) - oracles::projector(S)).norm() < 1e-12);

  for (int trial = 0; trial < 20; ++trial) {
    const Matrix U = oracles::random_gaussian(rng, 10, 3);
    const SubspaceBasis out = reorthonormalize(SubspaceBasis(U));
    CHECK((out.matrix.transpose() * out.matrix - Matrix::Identity(3, 3)).norm() <= 1e-12);
    CHECK((oracles::projector(out.matrix) - oracles::projector(U)).norm() <= 1e-10);
  }

  Matrix bad(4, 2);
  bad.col(0) = Vector::Ones(4);
  bad.col(1) = Vector::Ones(4);
  CHECK_THROWS_AS(reorthonormalize(SubspaceBasis(bad)), RankDeficiencyError);
}
