#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numbers>
#include <sstream>

#include "oracles.hpp"
#include "sosync/dynamics.hpp"
#include "sosync/experiments.hpp"

using namespace sosync;

namespace {

Vector unit3(double x, double y, double z) {
  Vector v(3);
  v << x, y, z;
  return v / v.norm();
}

NetworkConfig axes_triangle() {
  EdgeVectors refs;
  refs[Edge(0, 1)] = unit3(1, 0, 0);
  refs[Edge(1, 2)] = unit3(0, 1, 0);
  refs[Edge(0, 2)] = unit3(0, 0, 1);
  return NetworkConfig(3, Space::SOn, Graph::complete(3), std::move(refs));
}

NetworkConfig single_edge(const Vector& y) {
  EdgeVectors refs;
  refs[Edge(0, 1)] = y;
  return NetworkConfig(static_cast<int>(y.size()), Space::SOn, Graph(2, {{0, 1}}),
                       std::move(refs));
}

// finite-difference check of a body-frame tangent against a cost
void check_gradient(const std::function<double(const std::vector<Matrix>&)>& cost,
                    const std::vector<Matrix>& states, const std::vector<SkewMatrix>& tangents,
                    double rel_tol = 1e-6) {
  const int n = static_cast<int>(states[0].rows());
  const auto basis = so_basis(n);
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < states.size(); ++i) {
    for (const auto& b : basis) {
      auto shifted = [&](double eps) {
        std::vector<Matrix> copy = states;
        copy[i] = states[i] * exp_skew(b * eps).matrix();
        return cost(copy);
      };
      const double h = 1e-5;
      const double fd = (shifted(h) - shifted(-h)) / (2.0 * h);
      // tangent = minus gradient, in the orthonormal so(n) coordinates
      const double analytic = -(b.matrix().transpose() * tangents[i].matrix()).trace();
      num += (fd - analytic) * (fd - analytic);
      den += analytic * analytic;
    }
  }
  CHECK(std::sqrt(num) <= rel_tol * std::max(std::sqrt(den), 1e-8));
}

}  // namespace

TEST_CASE("rhs functions vanish on consensus") {
  const NetworkConfig net = axes_triangle();
  const Rotation r = random_rotation(3, 5);
  const std::vector<Rotation> states(3, r);
  for (const auto& u : rhs_partial(states, net)) CHECK(u.norm() < 1e-14);
  for (const auto& u : rhs_full(states, net)) CHECK(u.norm() < 1e-14);
  const auto pert = PerturbationSet::identity(Graph::complete(3), 3);
  for (const auto& u : rhs_perturbed(states, net, pert)) CHECK(u.norm() < 1e-14);
}

TEST_CASE("two agents reduce to the doubled relative flow") {
  const Vector y = unit3(0.3, -0.5, 0.8);
  const NetworkConfig net = single_edge(y);
  Rng rng = make_rng(17);
  const auto states = haar_states(2, 3, rng);
  const auto u = rhs_partial(as_rotations(states), net);

  // d/dt (Q1 Q2^T) = Q1 u1 Q2^T + Q1 (Q2 u2)^T  must equal  2 Q sk(Q^T M)
  const Matrix q = states[0] * states[1].transpose();
  const Matrix lhs = states[0] * u[0].matrix() * states[1].transpose() +
                     states[0] * u[1].matrix().transpose() * states[1].transpose();
  const Matrix m = y * y.transpose();
  const Matrix qs = q.transpose() * m;
  const Matrix rhs = 2.0 * q * (0.5 * (qs - qs.transpose()));
  CHECK((lhs - rhs).norm() < 1e-13);

  // full-state coupling reduces to 2 Q sk(Q^T) the same way
  const auto uf = rhs_full(as_rotations(states), net);
  const Matrix lhs_full = states[0] * uf[0].matrix() * states[1].transpose() +
                          states[0] * uf[1].matrix().transpose() * states[1].transpose();
  const Matrix rhs_full_m = 2.0 * q * (0.5 * (q.transpose() - q));
  CHECK((lhs_full - rhs_full_m).norm() < 1e-13);
}

TEST_CASE("gradient oracle: all rhs match finite differences of their costs") {
  Rng rng = make_rng(31415);
  for (int s = 0; s < 10; ++s) {
    const NetworkConfig net =
        NetworkConfig::generic(3, Space::SOn, Graph::complete(3 + s % 3), derive_seed(9, s));
    const int k = net.graph().vertex_count();
    const auto states = haar_states(k, 3, rng);

    check_gradient([&](const std::vector<Matrix>& x) { return evaluate_costs(x, net).f_o; },
                   states, rhs_partial(as_rotations(states), net));
    check_gradient([&](const std::vector<Matrix>& x) { return evaluate_costs(x, net).f_s; },
                   states, rhs_full(as_rotations(states), net));

    const auto pert =
        PerturbationSet::sample(net.graph(), 3, 0.05, derive_seed(10, s));
    check_gradient(
        [&](const std::vector<Matrix>& x) { return evaluate_costs(x, net, &pert).f_oe; }, states,
        rhs_perturbed(as_rotations(states), net, pert));
  }
}

TEST_CASE("perturbed rhs: identity perturbations reduce to the partial flow") {
  const NetworkConfig net = axes_triangle();
  Rng rng = make_rng(3);
  const auto states = haar_states(3, 3, rng);
  const auto pert = PerturbationSet::identity(Graph::complete(3), 3);
  const auto u1 = rhs_partial(as_rotations(states), net);
  const auto u2 = rhs_perturbed(as_rotations(states), net, pert);
  for (int i = 0; i < 3; ++i) CHECK((u1[i].matrix() - u2[i].matrix()).norm() < 1e-15);

  // asymmetric errors make consensus a non-equilibrium
  const auto pert2 = PerturbationSet::sample(Graph::complete(3), 3, 0.01, 5);
  const std::vector<Rotation> consensus(3, Rotation::identity(3));
  double norm = 0.0;
  for (const auto& u : rhs_perturbed(consensus, net, pert2)) norm += u.norm();
  CHECK(norm > 1e-5);

  std::map<std::pair<int, int>, Rotation> partial_entries{{{0, 1}, Rotation::identity(3)}};
  const PerturbationSet incomplete(std::move(partial_entries), 0.0);
  CHECK_THROWS_AS(rhs_perturbed(consensus, net, incomplete), ConfigError);
}

TEST_CASE("integrate: zero horizon returns the initial sample") {
  const NetworkConfig net = axes_triangle();
  Rng rng = make_rng(8);
  const auto init = haar_states(3, 3, rng);
  FlowSpec spec;
  spec.kind = FlowKind::PartialState;
  spec.horizon = 0.0;
  const Trajectory traj = integrate(init, net, spec);
  REQUIRE(traj.times.size() == 1);
  CHECK(traj.times[0] == 0.0);
  CHECK((traj.states[0][1] - init[1]).norm() == 0.0);
}

TEST_CASE("integrate: invalid specs are rejected") {
  const NetworkConfig net = axes_triangle();
  Rng rng = make_rng(8);
  const auto init = haar_states(3, 3, rng);
  FlowSpec spec;
  spec.kind = FlowKind::RnPartial;
  CHECK_THROWS_AS(integrate(init, net, spec), ConfigError);
  spec.kind = FlowKind::Perturbed;  // no perturbations attached
  CHECK_THROWS_AS(integrate(init, net, spec), ConfigError);
  spec.kind = FlowKind::PartialState;
  spec.step = -1.0;
  CHECK_THROWS_AS(integrate(init, net, spec), ConfigError);
}

TEST_CASE("geometric stepping preserves the manifold over long runs") {
  const NetworkConfig net = axes_triangle();
  Rng rng = make_rng(12);
  const auto init = haar_states(3, 3, rng);
  FlowSpec spec;
  spec.kind = FlowKind::PartialState;
  spec.horizon = 100.0;
  spec.step = 1e-2;
  spec.record_every = 100;
  const Trajectory traj = integrate(init, net, spec);
  REQUIRE(traj.status == Trajectory::Status::Ok);
  for (const auto& d : traj.diagnostics) CHECK(d.ortho_err < 1e-9);
  // cost is non-increasing along the samples
  for (std::size_t i = 1; i < traj.diagnostics.size(); ++i)
    CHECK(traj.diagnostics[i].f_o <= traj.diagnostics[i - 1].f_o + 1e-10);
}

TEST_CASE("right invariance of the flow") {
  const NetworkConfig net = axes_triangle();
  Rng rng = make_rng(21);
  const auto init = haar_states(3, 3, rng);
  const Rotation r = random_rotation(3, 77);
  std::vector<Matrix> shifted;
  for (const auto& q : init) shifted.push_back(q * r.matrix());

  FlowSpec spec;
  spec.kind = FlowKind::PartialState;
  spec.horizon = 20.0;
  spec.record_every = 50;
  const Trajectory base = integrate(init, net, spec);
  const Trajectory moved = integrate(shifted, net, spec);
  REQUIRE(base.times.size() == moved.times.size());
  for (std::size_t s = 0; s < base.times.size(); ++s)
    for (int i = 0; i < 3; ++i)
      CHECK((base.states[s][i] * r.matrix() - moved.states[s][i]).norm() < 1e-8);
}

TEST_CASE("integrator order: Lie-Euler is first order, the default is fourth") {
  const NetworkConfig net = axes_triangle();
  Rng rng = make_rng(9);
  const auto init = haar_states(3, 3, rng);

  auto end_state = [&](int order, double h) {
    FlowSpec spec;
    spec.kind = FlowKind::PartialState;
    spec.horizon = 1.0;
    spec.step = h;
    spec.order = order;
    spec.record_every = 1 << 20;
    return integrate(init, net, spec).final_state();
  };
  const auto reference = end_state(4, 1e-4);
  auto err = [&](int order, double h) {
    const auto s = end_state(order, h);
    double e = 0.0;
    for (int i = 0; i < 3; ++i) e = std::max(e, (s[i] - reference[i]).norm());
    return e;
  };

  const double e1a = err(1, 0.02), e1b = err(1, 0.01);
  CHECK(e1a / e1b == doctest::Approx(2.0).epsilon(0.2));  // first order halves

  const double e4a = err(4, 0.04), e4b = err(4, 0.02);
  CHECK(e4a / e4b > 12.0);  // fourth order: ~16x
  CHECK(e4b < 1e-8);
}

TEST_CASE("in-plane two-agent flow follows the scalar angle equation") {
  const Vector y = unit3(1, 0, 0);
  const Vector z = unit3(0, 1, 0);
  const NetworkConfig net = single_edge(y);
  const double theta0 = 1.0;
  const Matrix s0 = Matrix::Identity(3, 3) +
                    (std::cos(theta0) - 1.0) * (y * y.transpose() + z * z.transpose()) +
                    std::sin(theta0) * (y * z.transpose() - z * y.transpose());

  FlowSpec spec;
  spec.kind = FlowKind::PartialState;
  spec.epsilon = 0.5;  // the half-gain convention of the scalar reduction
  spec.step = 1e-3;
  spec.horizon = 10.0;
  spec.record_every = 100;
  const Trajectory traj = integrate({s0, Matrix::Identity(3, 3)}, net, spec);

  const auto theta_ref = oracles::rk4_scalar([](double th) { return -0.5 * std::sin(th); },
                                             theta0, 1e-3, 10000);
  double max_err = 0.0;
  for (std::size_t i = 0; i < traj.times.size(); ++i) {
    const Matrix rel = traj.states[i][0] * traj.states[i][1].transpose();
    const double theta = std::atan2(-z.dot(rel * y), y.dot(rel * y));
    const std::size_t ref_idx = static_cast<std::size_t>(std::llround(traj.times[i] / 1e-3));
    max_err = std::max(max_err, std::abs(theta - theta_ref[ref_idx]));
  }
  CHECK(max_err < 1e-4);
}

TEST_CASE("Rn integration matches the closed-form solution") {
  const NetworkConfig net = [] {
    EdgeVectors refs;
    Vector e1(2), e2(2), y23(2), y34(2);
    e1 << 1, 0;
    e2 << 0, 1;
    y23 << std::cos(0.7), std::sin(0.7);
    y34 << std::cos(1.1), std::sin(1.1);
    refs[Edge(0, 1)] = e1;
    refs[Edge(0, 3)] = e2;
    refs[Edge(1, 2)] = y23;
    refs[Edge(2, 3)] = y34;
    return NetworkConfig(2, Space::Rn, Graph(4, {{0, 1}, {0, 3}, {1, 2}, {2, 3}}),
                         std::move(refs));
  }();

  Rng rng = make_rng(5);
  const auto init = random_vector_states(4, 2, 1.0, rng);
  FlowSpec spec;
  spec.kind = FlowKind::RnPartial;
  spec.step = 1e-3;
  spec.horizon = 5.0;
  spec.record_every = 500;
  const Trajectory traj = integrate(init, net, spec);

  const Matrix lg = generalized_laplacian(net).matrix();
  Vector x0(8);
  for (int i = 0; i < 4; ++i) x0.segment(i * 2, 2) = init[i].col(0);
  for (std::size_t s = 0; s < traj.times.size(); ++s) {
    const Vector expected = oracles::expm_sym_apply(lg, traj.times[s], x0);
    Vector got(8);
    for (int i = 0; i < 4; ++i) got.segment(i * 2, 2) = traj.states[s][i].col(0);
    CHECK((got - expected).norm() < 1e-8);
  }
}

TEST_CASE("Rn two agents: projected component dies, orthogonal component persists") {
  EdgeVectors refs;
  Vector y(2);
  y << 1, 0;
  refs[Edge(0, 1)] = y;
  const NetworkConfig net(2, Space::Rn, Graph(2, {{0, 1}}), std::move(refs));
  std::vector<Matrix> init(2, Matrix(2, 1));
  init[0] << 0.7, -0.3;
  init[1] << -0.2, 0.9;
  FlowSpec spec;
  spec.kind = FlowKind::RnPartial;
  spec.step = 1e-3;
  spec.horizon = 20.0;
  spec.record_every = 1000;
  const Trajectory traj = integrate(init, net, spec);
  const Vector diff0 = init[1].col(0) - init[0].col(0);
  const Vector diff = traj.final_state()[1].col(0) - traj.final_state()[0].col(0);
  CHECK(std::abs(diff(0)) < 1e-10);              // along y
  CHECK(std::abs(diff(1) - diff0(1)) < 1e-10);   // orthogonal complement frozen
}

TEST_CASE("costs on the printed three-agent output-synchronized states") {
  const NetworkConfig net = axes_triangle();
  std::vector<Matrix> states;
  states.push_back(Eigen::Vector3d(1, 1, 1).asDiagonal());
  states.push_back(Eigen::Vector3d(1, -1, -1).asDiagonal());
  states.push_back(Eigen::Vector3d(-1, -1, 1).asDiagonal());
  const Costs c = evaluate_costs(states, net);
  CHECK(c.f_o == 0.0);
  // trace route: every pairwise trace is -1, so each edge contributes 3-(-1)
  CHECK(c.f_s == doctest::Approx(12.0).epsilon(1e-14));
  const Costs ct = evaluate_costs(states, net, nullptr, 0.0, CostForm::Trace);
  CHECK(ct.f_s == doctest::Approx(c.f_s).epsilon(1e-12));
  CHECK(std::abs(ct.f_o) < 1e-14);

  // a stabilizer rotation synchronizes the single-edge outputs
  const Vector axis = unit3(0.2, 0.5, -0.1);
  const NetworkConfig pair = single_edge(axis);
  std::vector<Matrix> pstates{Matrix::Identity(3, 3),
                              rotation_about_axis(axis, std::numbers::pi).matrix()};
  const Costs pc = evaluate_costs(pstates, pair);
  CHECK(pc.f_o < 1e-28);
  CHECK(pc.f_s > 1.0);
}

TEST_CASE("consensus distance") {
  Rng rng = make_rng(14);
  const Rotation common = random_rotation(3, rng);
  const std::vector<Matrix> equal(4, common.matrix());
  CHECK(dist_to_consensus(equal).value < 1e-12);

  // two agents split by a z-rotation: verified against random minimization
  const double theta = 1.2;
  Vector ez(3);
  ez << 0, 0, 1;
  const std::vector<Matrix> pair{Matrix::Identity(3, 3),
                                 rotation_about_axis(ez, theta).matrix()};
  const double closed_form = dist_to_consensus(pair).value;
  double best = std::numeric_limits<double>::infinity();
  for (int s = 0; s < 200000; ++s) {
    const Matrix q = random_rotation(3, rng).matrix();
    double sq = 0.0;
    for (const auto& p : pair) sq += (p - q).squaredNorm();
    best = std::min(best, std::sqrt(sq));
  }
  CHECK(closed_form <= best + 1e-12);
  CHECK(closed_form == doctest::Approx(best).epsilon(1e-3));
  // the minimizer halves the angle: distance 4 sin(theta/4)
  CHECK(closed_form == doctest::Approx(4.0 * std::sin(theta / 4.0)).epsilon(1e-10));

  // antipodal pair on the z-axis: the sum is rank-deficient
  const std::vector<Matrix> anti{Matrix::Identity(3, 3),
                                 rotation_about_axis(ez, std::numbers::pi).matrix()};
  const auto degenerate = dist_to_consensus(anti);
  CHECK(degenerate.degenerate);
  CHECK(degenerate.value > 0.0);

  // the three output-synchronized diagonal states, against the same oracle
  std::vector<Matrix> diag_states;
  diag_states.push_back(Eigen::Vector3d(1, 1, 1).asDiagonal());
  diag_states.push_back(Eigen::Vector3d(1, -1, -1).asDiagonal());
  diag_states.push_back(Eigen::Vector3d(-1, -1, 1).asDiagonal());
  const double closed = dist_to_consensus(diag_states).value;
  double sampled = std::numeric_limits<double>::infinity();
  for (int s = 0; s < 200000; ++s) {
    const Matrix q = random_rotation(3, rng).matrix();
    double sq = 0.0;
    for (const auto& p : diag_states) sq += (p - q).squaredNorm();
    sampled = std::min(sampled, std::sqrt(sq));
  }
  CHECK(closed <= sampled + 1e-12);
  CHECK(closed == doctest::Approx(sampled).epsilon(1e-3));
}

TEST_CASE("decay-rate estimation") {
  Trajectory traj;
  traj.space = Space::SOn;
  for (int i = 0; i <= 1000; ++i) {
    const double t = i * 0.01;
    traj.times.push_back(t);
    SampleDiagnostics d;
    d.f_o = std::exp(-2.0 * t);
    d.f_s = 1.0 / (1.0 + t);
    traj.diagnostics.push_back(d);
    traj.states.push_back({});
  }
  const DecayFit exp_fit = estimate_decay_rate(traj, CostField::FO, 0.0, 10.0);
  CHECK(exp_fit.slope == doctest::Approx(-2.0).epsilon(1e-6));
  CHECK(exp_fit.r2 > 0.999999);

  const DecayFit alg_fit = estimate_decay_rate(traj, CostField::FS, 0.0, 10.0);
  CHECK(alg_fit.r2 < exp_fit.r2);

  // nonpositive samples truncate the window
  traj.diagnostics[500].f_o = 0.0;
  const DecayFit cut = estimate_decay_rate(traj, CostField::FO, 0.0, 10.0);
  CHECK(cut.samples_used == 500);
}

TEST_CASE("trajectory csv format") {
  const NetworkConfig net = axes_triangle();
  Rng rng = make_rng(2);
  const auto init = haar_states(3, 3, rng);
  FlowSpec spec;
  spec.kind = FlowKind::PartialState;
  spec.horizon = 0.1;
  spec.record_every = 5;
  const Trajectory traj = integrate(init, net, spec);
  std::ostringstream out;
  traj.write_csv(out);
  const std::string text = out.str();
  CHECK(text.rfind("t,f_s,f_o,f_oe,dist_cs,ortho_err\n", 0) == 0);
  // 17 significant digits survive
  CHECK(text.find("0.1") != std::string::npos);
}

TEST_CASE("divergence detection aborts with the last valid state") {
  const NetworkConfig net = axes_triangle();
  Rng rng = make_rng(4);
  const auto init = haar_states(3, 3, rng);
  FlowSpec spec;
  spec.kind = FlowKind::PartialState;
  spec.step = 2.5;  // far beyond the stability limit
  spec.horizon = 50.0;
  spec.record_every = 1;
  const Trajectory traj = integrate(init, net, spec);
  CHECK(traj.status == Trajectory::Status::Failed);
  CHECK(!traj.states.empty());
  for (const auto& q : traj.final_state()) CHECK(q.allFinite());
}
