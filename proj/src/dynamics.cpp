#include "sosync/dynamics.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>
#include <iomanip>
#include <limits>
#include <ostream>

namespace sosync {

void FlowSpec::validate(const NetworkConfig& net) const {
  if (step <= 0.0) throw ConfigError("FlowSpec: step must be positive");
  if (horizon < 0.0) throw ConfigError("FlowSpec: horizon must be nonnegative");
  if (epsilon <= 0.0) throw ConfigError("FlowSpec: epsilon must be positive");
  if (record_every < 1) throw ConfigError("FlowSpec: record_every must be at least 1");
  if (order != 1 && order != 2 && order != 4)
    throw ConfigError("FlowSpec: order must be 1, 2 or 4");
  if ((kind == FlowKind::Perturbed) != perturbations.has_value())
    throw ConfigError("FlowSpec: perturbations must be present exactly for the perturbed kind");
  if (kind == FlowKind::RnPartial) {
    if (net.space() != Space::Rn) throw ConfigError("FlowSpec: RnPartial needs an Rn config");
  } else if (net.space() != Space::SOn) {
    throw ConfigError("FlowSpec: SO(n) flow kinds need an SOn config");
  }
  if (kind == FlowKind::PartialStateTV && !net.time_varying())
    throw ConfigError("FlowSpec: PartialStateTV needs time-varying references");
  if (net.time_varying() && kind != FlowKind::PartialStateTV)
    throw ConfigError("FlowSpec: time-varying references only integrate as PartialStateTV");
  if (kind == FlowKind::Perturbed && !perturbations->complete_for(net.graph()))
    throw ConfigError("FlowSpec: perturbation set incomplete for the graph");
}

std::vector<SkewMatrix> rhs_partial(const std::vector<Rotation>& states,
                                    const NetworkConfig& net, double t) {
  auto grad = output_cost_gradient(states, net, t);
  for (auto& g : grad) g = -g;
  return grad;
}

std::vector<SkewMatrix> rhs_full(const std::vector<Rotation>& states, const NetworkConfig& net) {
  const int n = net.dim();
  const int k = net.graph().vertex_count();
  if (static_cast<int>(states.size()) != k)
    throw DimensionError("rhs_full: state count does not match graph");
  std::vector<Matrix> acc(k, Matrix::Zero(n, n));
  for (const auto& e : net.graph().edges()) {
    const Matrix rel = states[e.a].matrix().transpose() * states[e.b].matrix();
    const Matrix s = 0.5 * (rel - rel.transpose());
    acc[e.a] += s;
    acc[e.b] -= s;
  }
  std::vector<SkewMatrix> u;
  u.reserve(k);
  for (auto& a : acc) u.push_back(SkewMatrix(std::move(a)));
  return u;
}

std::vector<SkewMatrix> rhs_perturbed(const std::vector<Rotation>& states,
                                      const NetworkConfig& net, const PerturbationSet& pert) {
  const int n = net.dim();
  const int k = net.graph().vertex_count();
  if (static_cast<int>(states.size()) != k)
    throw DimensionError("rhs_perturbed: state count does not match graph");
  std::vector<Matrix> acc(k, Matrix::Zero(n, n));
  for (const auto& e : net.graph().edges()) {
    const Matrix m = net.edge_projector(e, 0.0);
    const Matrix w = pert.at(e.a, e.b).matrix() * m * pert.at(e.b, e.a).matrix().transpose();
    const Matrix ca = states[e.a].matrix().transpose() * w * states[e.b].matrix();
    acc[e.a] += 0.5 * (ca - ca.transpose());
    const Matrix cb = ca.transpose();  // Q_b^T w^T Q_a
    acc[e.b] += 0.5 * (cb - cb.transpose());
  }
  std::vector<SkewMatrix> u;
  u.reserve(k);
  for (auto& a : acc) u.push_back(SkewMatrix(std::move(a)));
  return u;
}

namespace {

double state_disagreement_rn(const std::vector<Matrix>& x, const Graph& g) {
  double sum = 0.0;
  for (const auto& e : g.edges()) sum += (x[e.a] - x[e.b]).squaredNorm();
  return 0.5 * sum;
}

double rn_dist_to_mean(const std::vector<Matrix>& x) {
  Matrix mean = x[0];
  for (std::size_t i = 1; i < x.size(); ++i) mean += x[i];
  mean /= static_cast<double>(x.size());
  double sq = 0.0;
  for (const auto& xi : x) sq += (xi - mean).squaredNorm();
  return std::sqrt(sq);
}

}  // namespace

Costs evaluate_costs(const std::vector<Matrix>& states, const NetworkConfig& net,
                     const PerturbationSet* pert, double t, CostForm form) {
  const int n = net.dim();
  Costs costs;
  if (net.space() == Space::Rn) {
    double go = 0.0;
    if (form == CostForm::Norm) {
      for (const auto& e : net.graph().edges()) {
        const Vector y = net.reference(e, t);
        const double d = y.dot(states[e.a].col(0)) - y.dot(states[e.b].col(0));
        go += d * d;
      }
      go *= 0.5;
    } else {
      // quadratic-form route through the block Laplacian
      const GeneralizedLaplacian lg = generalized_laplacian(net, t);
      Vector x(static_cast<int>(states.size()) * n);
      for (std::size_t i = 0; i < states.size(); ++i) x.segment(static_cast<int>(i) * n, n) = states[i].col(0);
      go = 0.5 * x.dot(lg.matrix() * x);
    }
    costs.g_o = go;
    costs.f_o = go;
    costs.f_s = state_disagreement_rn(states, net.graph());
    return costs;
  }

  double fs = 0.0, fo = 0.0;
  for (const auto& e : net.graph().edges()) {
    const Matrix& qa = states[e.a];
    const Matrix& qb = states[e.b];
    const Vector y = net.reference(e, t);
    if (form == CostForm::Norm) {
      fs += 0.5 * (qa - qb).squaredNorm();
      fo += 0.5 * (qa.transpose() * y - qb.transpose() * y).squaredNorm();
    } else {
      fs += n - (qa.transpose() * qb).trace();
      fo += 1.0 - (qa.transpose() * (y * y.transpose()) * qb).trace();
    }
  }
  costs.f_s = fs;
  costs.f_o = fo;
  if (pert) {
    double foe = 0.0;
    for (const auto& e : net.graph().edges()) {
      const Vector y = net.reference(e, t);
      const Vector oa = states[e.a].transpose() * (pert->at(e.a, e.b).matrix() * y);
      const Vector ob = states[e.b].transpose() * (pert->at(e.b, e.a).matrix() * y);
      if (form == CostForm::Norm)
        foe += 0.5 * (oa - ob).squaredNorm();
      else
        foe += 1.0 - oa.dot(ob);
    }
    costs.f_oe = foe;
  }
  return costs;
}

ConsensusDistance dist_to_consensus(const std::vector<Matrix>& states) {
  if (states.empty()) throw DimensionError("dist_to_consensus: no states");
  const int n = static_cast<int>(states[0].rows());
  Matrix sum = Matrix::Zero(n, n);
  for (const auto& q : states) sum += q;
  ConsensusDistance out;
  Rotation best = Rotation::identity(n);
  try {
    best = project_to_rotation(sum);
  } catch (const SingularityError&) {
    // tie between minimizers (measure-zero input); break it and flag
    out.degenerate = true;
    const double scale = std::max(1.0, sum.norm());
    best = project_to_rotation(sum + scale * 1e-6 * Matrix::Identity(n, n));
  }
  double sq = 0.0;
  for (const auto& q : states) sq += (q - best.matrix()).squaredNorm();
  out.value = std::sqrt(sq);
  return out;
}

namespace {

struct Stepper {
  const NetworkConfig& net;
  const FlowSpec& spec;

  std::vector<SkewMatrix> tangents(const std::vector<Rotation>& q, double t) const {
    std::vector<SkewMatrix> u;
    switch (spec.kind) {
      case FlowKind::FullState:
        u = rhs_full(q, net);
        break;
      case FlowKind::PartialState:
      case FlowKind::PartialStateTV:
        u = rhs_partial(q, net, t);
        break;
      case FlowKind::Perturbed:
        u = rhs_perturbed(q, net, *spec.perturbations);
        break;
      case FlowKind::RnPartial:
        throw ConfigError("Stepper: RnPartial handled separately");
    }
    if (spec.epsilon != 1.0)
      for (auto& ui : u) ui = ui * spec.epsilon;
    return u;
  }

  static std::vector<Rotation> advance(const std::vector<Rotation>& q,
                                       const std::vector<SkewMatrix>& u, double h) {
    std::vector<Rotation> out;
    out.reserve(q.size());
    for (std::size_t i = 0; i < q.size(); ++i) out.push_back(q[i] * exp_skew(u[i] * h));
    return out;
  }

  std::vector<Rotation> step(const std::vector<Rotation>& q, double t, double h,
                             std::vector<SkewMatrix>& k1_out) const {
    const auto k1 = tangents(q, t);
    k1_out = k1;
    if (spec.order == 1) return advance(q, k1, h);
    if (spec.order == 2) {
      const auto k2 = tangents(advance(q, k1, 0.5 * h), t + 0.5 * h);
      return advance(q, k2, h);
    }
    // commutator-free RK4: two exponentials per agent and step
    const auto k2 = tangents(advance(q, k1, 0.5 * h), t + 0.5 * h);
    const auto k3 = tangents(advance(q, k2, 0.5 * h), t + 0.5 * h);
    std::vector<Rotation> q4;
    q4.reserve(q.size());
    for (std::size_t i = 0; i < q.size(); ++i) {
      const SkewMatrix a = k1[i] * (0.5 * h);
      const SkewMatrix b = k3[i] * h - k1[i] * (0.5 * h);
      q4.push_back(q[i] * exp_skew(a) * exp_skew(b));
    }
    const auto k4 = tangents(q4, t + h);
    std::vector<Rotation> out;
    out.reserve(q.size());
    for (std::size_t i = 0; i < q.size(); ++i) {
      const SkewMatrix e1 =
          (k1[i] * 3.0 + k2[i] * 2.0 + k3[i] * 2.0 - k4[i]) * (h / 12.0);
      const SkewMatrix e2 =
          (-k1[i] + k2[i] * 2.0 + k3[i] * 2.0 + k4[i] * 3.0) * (h / 12.0);
      out.push_back(q[i] * exp_skew(e1) * exp_skew(e2));
    }
    return out;
  }
};

bool all_finite(const std::vector<Matrix>& states) {
  for (const auto& m : states)
    if (!m.allFinite()) return false;
  return true;
}

double monitored_cost(const std::vector<Matrix>& states, const NetworkConfig& net,
                      const FlowSpec& spec) {
  switch (spec.kind) {
    case FlowKind::FullState:
      return evaluate_costs(states, net).f_s;
    case FlowKind::PartialState:
      return evaluate_costs(states, net).f_o;
    case FlowKind::Perturbed:
      return evaluate_costs(states, net, &*spec.perturbations).f_oe;
    case FlowKind::RnPartial:
      return evaluate_costs(states, net).g_o;
    default:
      return 0.0;
  }
}

SampleDiagnostics make_diagnostics(const std::vector<Matrix>& states, const NetworkConfig& net,
                                   const FlowSpec& spec, double t) {
  SampleDiagnostics d;
  const PerturbationSet* pert =
      spec.kind == FlowKind::Perturbed ? &*spec.perturbations : nullptr;
  const Costs c = evaluate_costs(states, net, pert, t);
  d.f_s = c.f_s;
  d.f_o = c.f_o;
  d.f_oe = c.f_oe;
  if (net.space() == Space::SOn) {
    double worst = 0.0;
    const int n = net.dim();
    for (const auto& q : states)
      worst = std::max(worst,
                       (q.transpose() * q - Matrix::Identity(n, n)).norm());
    d.ortho_err = worst;
    d.dist_cs = dist_to_consensus(states).value;
  } else {
    d.ortho_err = 0.0;
    d.dist_cs = rn_dist_to_mean(states);
  }
  return d;
}

double tangent_norm(const std::vector<SkewMatrix>& u) {
  double sq = 0.0;
  for (const auto& ui : u) sq += ui.norm() * ui.norm();
  return std::sqrt(sq);
}

}  // namespace

Trajectory integrate(const std::vector<Matrix>& init, const NetworkConfig& net,
                     const FlowSpec& spec) {
  spec.validate(net);
  const int k = net.graph().vertex_count();
  if (static_cast<int>(init.size()) != k)
    throw DimensionError("integrate: initial state count does not match graph");

  Trajectory traj;
  traj.space = net.space();
  const long long steps = std::llround(spec.horizon / spec.step);
  const double h = spec.step;

  const bool monotone_kind = spec.kind != FlowKind::PartialStateTV;

  auto record = [&](double t, const std::vector<Matrix>& states) {
    traj.times.push_back(t);
    traj.states.push_back(states);
    traj.diagnostics.push_back(make_diagnostics(states, net, spec, t));
  };

  if (net.space() == Space::Rn) {
    std::vector<Matrix> x = init;
    for (const auto& xi : x)
      if (xi.rows() != net.dim() || xi.cols() != 1)
        throw DimensionError("integrate: Rn states must be n x 1");
    const GeneralizedLaplacian lg = generalized_laplacian(net, net.time_varying()
                                                                   ? std::optional<double>(0.0)
                                                                   : std::nullopt);
    Vector z(k * net.dim());
    const int n = net.dim();
    for (int i = 0; i < k; ++i) z.segment(i * n, n) = x[i].col(0);
    auto unpack = [&](const Vector& v) {
      std::vector<Matrix> out(k);
      for (int i = 0; i < k; ++i) out[i] = v.segment(i * n, n);
      return out;
    };
    auto deriv = [&](const Vector& v) { return Vector(-spec.epsilon * (lg.matrix() * v)); };
    record(0.0, unpack(z));
    double prev_cost = monitored_cost(unpack(z), net, spec);
    for (long long s = 0; s < steps; ++s) {
      const Vector d1 = deriv(z);
      const Vector d2 = deriv(z + 0.5 * h * d1);
      const Vector d3 = deriv(z + 0.5 * h * d2);
      const Vector d4 = deriv(z + h * d3);
      const Vector znew = z + (h / 6.0) * (d1 + 2.0 * d2 + 2.0 * d3 + d4);
      const double t = (s + 1) * h;
      auto states = unpack(znew);
      const double cost = all_finite(states) ? monitored_cost(states, net, spec)
                                             : std::numeric_limits<double>::quiet_NaN();
      if (!(cost <= prev_cost + 1e-8)) {
        traj.status = Trajectory::Status::Failed;
        traj.failure = all_finite(states)
                           ? "cost increased along a gradient flow (step size too large)"
                           : "non-finite state";
        if (traj.times.back() != s * h) record(s * h, unpack(z));
        break;
      }
      prev_cost = cost;
      z = znew;
      if ((s + 1) % spec.record_every == 0 || s + 1 == steps) record(t, states);
      if (spec.stop_gradient_norm && deriv(z).norm() < *spec.stop_gradient_norm) {
        if (traj.times.back() != t) record(t, states);
        break;
      }
    }
    return traj;
  }

  std::vector<Rotation> q;
  q.reserve(k);
  for (const auto& m : init) q.push_back(Rotation::from_matrix(m));
  auto to_matrices = [&](const std::vector<Rotation>& r) {
    std::vector<Matrix> out;
    out.reserve(r.size());
    for (const auto& ri : r) out.push_back(ri.matrix());
    return out;
  };

  Stepper stepper{net, spec};
  record(0.0, to_matrices(q));
  double prev_cost = monotone_kind ? monitored_cost(to_matrices(q), net, spec) : 0.0;
  std::vector<SkewMatrix> k1;
  for (long long s = 0; s < steps; ++s) {
    auto next = stepper.step(q, s * h, h, k1);
    const double t = (s + 1) * h;
    auto states = to_matrices(next);
    if (!all_finite(states)) {
      traj.status = Trajectory::Status::Failed;
      traj.failure = "non-finite state";
      if (traj.times.back() != s * h) record(s * h, to_matrices(q));
      break;
    }
    if (monotone_kind) {
      const double cost = monitored_cost(states, net, spec);
      if (cost > prev_cost + 1e-8) {
        traj.status = Trajectory::Status::Failed;
        traj.failure = "cost increased along a gradient flow (step size too large)";
        if (traj.times.back() != s * h) record(s * h, to_matrices(q));
        break;
      }
      prev_cost = cost;
    }
    q = std::move(next);
    if ((s + 1) % spec.record_every == 0 || s + 1 == steps) record(t, states);
    if (spec.stop_gradient_norm && tangent_norm(k1) < *spec.stop_gradient_norm) {
      if (traj.times.back() != t) record(t, states);
      break;
    }
  }
  return traj;
}

void Trajectory::write_csv(std::ostream& out) const {
  out << "t,f_s,f_o,f_oe,dist_cs,ortho_err\n";
  out << std::setprecision(17);
  for (std::size_t i = 0; i < times.size(); ++i) {
    const auto& d = diagnostics[i];
    out << times[i] << ',' << d.f_s << ',' << d.f_o << ',' << d.f_oe << ',' << d.dist_cs << ','
        << d.ortho_err << '\n';
  }
}

DecayFit estimate_decay_rate(const Trajectory& traj, CostField field, double t_begin,
                             double t_end) {
  std::vector<double> ts, logf;
  for (std::size_t i = 0; i < traj.times.size(); ++i) {
    const double t = traj.times[i];
    if (t < t_begin || t > t_end) continue;
    double v = 0.0;
    switch (field) {
      case CostField::FS: v = traj.diagnostics[i].f_s; break;
      case CostField::FO: v = traj.diagnostics[i].f_o; break;
      case CostField::FOE: v = traj.diagnostics[i].f_oe; break;
    }
    if (!(v > 0.0)) break;  // truncate at the first nonpositive sample
    ts.push_back(t);
    logf.push_back(std::log(v));
  }
  DecayFit fit;
  fit.samples_used = static_cast<int>(ts.size());
  if (ts.size() < 2) return fit;
  const double nd = static_cast<double>(ts.size());
  double mt = 0.0, mf = 0.0;
  for (std::size_t i = 0; i < ts.size(); ++i) {
    mt += ts[i];
    mf += logf[i];
  }
  mt /= nd;
  mf /= nd;
  double stt = 0.0, stf = 0.0, sff = 0.0;
  for (std::size_t i = 0; i < ts.size(); ++i) {
    stt += (ts[i] - mt) * (ts[i] - mt);
    stf += (ts[i] - mt) * (logf[i] - mf);
    sff += (logf[i] - mf) * (logf[i] - mf);
  }
  if (stt <= 0.0) return fit;
  fit.slope = stf / stt;
  const double ss_res = sff - stf * stf / stt;
  fit.r2 = sff <= 1e-300 ? 1.0 : 1.0 - ss_res / sff;
  return fit;
}

std::vector<Matrix> haar_states(int k, int n, Rng& rng) {
  std::vector<Matrix> out;
  out.reserve(k);
  for (int i = 0; i < k; ++i) out.push_back(random_rotation(n, rng).matrix());
  return out;
}

std::vector<Matrix> near_consensus_states(int k, int n, double magnitude, Rng& rng) {
  const Rotation common = random_rotation(n, rng);
  std::vector<Matrix> out;
  out.reserve(k);
  for (int i = 0; i < k; ++i) {
    const double mag = uniform(rng, 0.0, magnitude);
    out.push_back((common * exp_skew(random_skew(n, mag, rng))).matrix());
  }
  return out;
}

std::vector<Matrix> random_vector_states(int k, int n, double box_halfwidth, Rng& rng) {
  std::vector<Matrix> out;
  out.reserve(k);
  for (int i = 0; i < k; ++i) {
    Matrix x(n, 1);
    for (int c = 0; c < n; ++c) x(c, 0) = uniform(rng, -box_halfwidth, box_halfwidth);
    out.push_back(std::move(x));
  }
  return out;
}

std::vector<Rotation> as_rotations(const std::vector<Matrix>& states) {
  std::vector<Rotation> out;
  out.reserve(states.size());
  for (const auto& m : states) out.push_back(Rotation::from_matrix(m));
  return out;
}

}  // namespace sosync
