#include "sosync/network.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>
#include <algorithm>
#include <cmath>
#include <numbers>

namespace sosync {

double ScalarSignal::operator()(double t) const {
  double v = offset;
  for (const auto& term : terms)
    v += term.amplitude * std::sin(2.0 * std::numbers::pi * term.freq_hz * t + term.phase);
  return v;
}

Vector VectorSignal::operator()(double t) const {
  Vector v(dim());
  for (int i = 0; i < dim(); ++i) v(i) = coords[i](t);
  return v;
}

TimeVaryingRefs TimeVaryingRefs::anchors(std::vector<VectorSignal> per_vertex) {
  TimeVaryingRefs r;
  r.mode_ = Mode::Anchors;
  r.anchors_ = std::move(per_vertex);
  return r;
}

TimeVaryingRefs TimeVaryingRefs::per_edge(std::map<Edge, VectorSignal> per_edge) {
  TimeVaryingRefs r;
  r.mode_ = Mode::PerEdge;
  r.edges_ = std::move(per_edge);
  return r;
}

namespace {

constexpr double kFreqLo = 0.05;
const double kFreqHi = 1.0 / (2.0 * std::numbers::pi);

VectorSignal random_signal(int n, Rng& rng, double offset_range, double amp_lo, double amp_hi,
                           int terms) {
  VectorSignal sig;
  sig.coords.resize(n);
  for (int c = 0; c < n; ++c) {
    sig.coords[c].offset = uniform(rng, -offset_range, offset_range);
    for (int m = 0; m < terms; ++m) {
      sig.coords[c].terms.push_back({uniform(rng, amp_lo, amp_hi),
                                     uniform(rng, kFreqLo, kFreqHi),
                                     uniform(rng, 0.0, 2.0 * std::numbers::pi)});
    }
  }
  return sig;
}

double probe_min_norm(const VectorSignal& sig, double horizon, double dt) {
  double lo = std::numeric_limits<double>::infinity();
  for (double t = 0.0; t <= horizon; t += dt) lo = std::min(lo, sig(t).norm());
  return lo;
}

}  // namespace

TimeVaryingRefs TimeVaryingRefs::random_anchors(int k, int n, std::uint64_t seed) {
  for (std::uint64_t attempt = 0;; ++attempt) {
    Rng rng = make_rng(derive_seed(seed, 0xa11c0425ULL, attempt));
    std::vector<VectorSignal> sigs;
    sigs.reserve(k);
    // generic base positions with moderate quasi-periodic wobble
    for (int v = 0; v < k; ++v) sigs.push_back(random_signal(n, rng, 1.0, 0.1, 0.3, 2));
    // reject generators whose anchors come close to coinciding
    double min_sep = std::numeric_limits<double>::infinity();
    for (double t = 0.0; t <= 120.0; t += 0.05)
      for (int i = 0; i < k; ++i)
        for (int j = i + 1; j < k; ++j)
          min_sep = std::min(min_sep, (sigs[i](t) - sigs[j](t)).norm());
    if (min_sep >= 0.15) {
      TimeVaryingRefs r = anchors(std::move(sigs));
      r.seed_ = seed;
      return r;
    }
  }
}

TimeVaryingRefs TimeVaryingRefs::random_per_edge(const Graph& g, int n, std::uint64_t seed) {
  std::map<Edge, VectorSignal> sigs;
  for (const auto& e : g.edges()) {
    for (std::uint64_t attempt = 0;; ++attempt) {
      Rng rng = make_rng(derive_seed(seed, 0xed6e0000ULL + e.a * 4096 + e.b, attempt));
      VectorSignal sig = random_signal(n, rng, 0.6, 0.4, 1.0, 3);
      if (probe_min_norm(sig, 120.0, 0.05) >= 0.2) {
        sigs[e] = std::move(sig);
        break;
      }
    }
  }
  TimeVaryingRefs r = per_edge(std::move(sigs));
  r.seed_ = seed;
  return r;
}

Vector TimeVaryingRefs::edge_vector(const Edge& e, double t) const {
  Vector d;
  if (mode_ == Mode::Anchors) {
    if (e.a >= static_cast<int>(anchors_.size()) || e.b >= static_cast<int>(anchors_.size()))
      throw ConfigError("TimeVaryingRefs: edge endpoint has no anchor signal");
    d = anchors_[e.a](t) - anchors_[e.b](t);
  } else {
    auto it = edges_.find(e);
    if (it == edges_.end()) throw ConfigError("TimeVaryingRefs: no signal for edge");
    d = it->second(t);
  }
  const double nrm = d.norm();
  if (nrm < 1e-9)
    throw NumericalError("TimeVaryingRefs: reference direction vanished");
  return d / nrm;
}

NetworkConfig::NetworkConfig(int n, Space space, Graph graph, EdgeVectors refs)
    : n_(n), space_(space), graph_(std::move(graph)), refs_(std::move(refs)) {
  validate_fixed();
}

NetworkConfig::NetworkConfig(int n, Space space, Graph graph, TimeVaryingRefs refs)
    : n_(n), space_(space), graph_(std::move(graph)), tv_(std::move(refs)),
      ref_mode_(RefMode::TimeVarying) {
  if (n_ < 1) throw ConfigError("NetworkConfig: dimension must be positive");
  ref_seed_ = tv_->seed();
}

void NetworkConfig::validate_fixed() const {
  if (n_ < 1) throw ConfigError("NetworkConfig: dimension must be positive");
  if (refs_.size() != static_cast<std::size_t>(graph_.edge_count()))
    throw ConfigError("NetworkConfig: reference vector count does not match edge count");
  for (const auto& e : graph_.edges()) {
    auto it = refs_.find(e);
    if (it == refs_.end())
      throw ConfigError("NetworkConfig: missing reference vector for edge (" +
                        std::to_string(e.a + 1) + "," + std::to_string(e.b + 1) + ")");
    if (it->second.size() != n_)
      throw ConfigError("NetworkConfig: reference vector dimension mismatch");
    if (std::abs(it->second.norm() - 1.0) > tol::construction)
      throw ConfigError("NetworkConfig: reference vectors must be unit length");
  }
}

NetworkConfig NetworkConfig::generic(int n, Space space, Graph graph, std::uint64_t seed) {
  EdgeVectors refs;
  for (const auto& e : graph.edges()) {
    Rng rng = make_rng(derive_seed(seed, 0x9e4e51c0ULL + e.a, e.b));
    refs[e] = random_unit_vector(n, rng);
  }
  NetworkConfig net(n, space, std::move(graph), std::move(refs));
  net.ref_mode_ = RefMode::Generic;
  net.ref_seed_ = seed;
  return net;
}

NetworkConfig NetworkConfig::relative_position(int n, Space space, Graph graph,
                                               std::uint64_t seed) {
  const int k = graph.vertex_count();
  std::vector<Vector> anchors(k);
  for (std::uint64_t attempt = 0;; ++attempt) {
    for (int v = 0; v < k; ++v) {
      Rng rng = make_rng(derive_seed(seed, 0x5e1a7e00ULL + v, attempt));
      anchors[v] = Vector(n);
      for (int c = 0; c < n; ++c) anchors[v](c) = uniform(rng, -1.0, 1.0);
    }
    double min_sep = std::numeric_limits<double>::infinity();
    for (const auto& e : graph.edges())
      min_sep = std::min(min_sep, (anchors[e.a] - anchors[e.b]).norm());
    if (min_sep >= 1e-2) break;
  }
  EdgeVectors refs;
  for (const auto& e : graph.edges()) {
    Vector d = anchors[e.a] - anchors[e.b];
    refs[e] = d / d.norm();
  }
  NetworkConfig net(n, space, std::move(graph), std::move(refs));
  net.ref_mode_ = RefMode::RelativePosition;
  net.ref_seed_ = seed;
  return net;
}

const Vector& NetworkConfig::reference(const Edge& e) const {
  if (tv_) throw ConfigError("NetworkConfig: time-varying references need a time argument");
  auto it = refs_.find(e);
  if (it == refs_.end()) throw ConfigError("NetworkConfig: no reference vector for edge");
  return it->second;
}

const EdgeVectors& NetworkConfig::references() const {
  if (tv_) throw ConfigError("NetworkConfig: time-varying references need a time argument");
  return refs_;
}

Vector NetworkConfig::reference(const Edge& e, double t) const {
  if (tv_) return tv_->edge_vector(e, t);
  return reference(e);
}

Matrix NetworkConfig::edge_projector(const Edge& e, double t) const {
  return projector(reference(e, t));
}

const TimeVaryingRefs& NetworkConfig::time_varying_refs() const {
  if (!tv_) throw ConfigError("NetworkConfig: references are fixed");
  return *tv_;
}

GeneralizedLaplacian::GeneralizedLaplacian(int k, int n, Matrix full)
    : k_(k), n_(n), m_(std::move(full)) {
  if (m_.rows() != k_ * n_ || m_.cols() != k_ * n_)
    throw DimensionError("GeneralizedLaplacian: size must be kn x kn");
}

PerturbationSet::PerturbationSet(std::map<std::pair<int, int>, Rotation> entries, double eps_err)
    : entries_(std::move(entries)), eps_err_(eps_err) {
  const int n = entries_.empty() ? 0 : entries_.begin()->second.dim();
  for (const auto& [key, rot] : entries_) {
    if (rot.dim() != n) throw ConfigError("PerturbationSet: mixed dimensions");
    const double dev = (rot.matrix() - Matrix::Identity(n, n)).norm();
    if (dev > eps_err_ + 1e-12)
      throw ConfigError("PerturbationSet: ||E - I||_F exceeds the declared bound");
  }
}

PerturbationSet PerturbationSet::sample(const Graph& g, int n, double eps_err,
                                        std::uint64_t seed) {
  std::map<std::pair<int, int>, Rotation> entries;
  auto sample_one = [&](int i, int j) {
    Rng rng = make_rng(derive_seed(seed, 0xe44c0000ULL + i, j));
    const double r = uniform(rng, eps_err / 2.0, eps_err);
    // planar rotation by phi in a random 2-plane; ||E - I||_F = 2 sqrt2 sin(phi/2)
    const double phi = 2.0 * std::asin(r / (2.0 * std::sqrt(2.0)));
    Vector u = random_unit_vector(n, rng);
    Vector w = random_unit_vector(n, rng);
    Vector v = w - u.dot(w) * u;
    while (v.norm() < 1e-6) {
      w = random_unit_vector(n, rng);
      v = w - u.dot(w) * u;
    }
    v /= v.norm();
    Matrix j2 = -(u * u.transpose() + v * v.transpose());
    Matrix jm = u * v.transpose() - v * u.transpose();
    Matrix e = Matrix::Identity(n, n) + std::sin(phi) * jm + (1.0 - std::cos(phi)) * j2;
    return Rotation::trusted(std::move(e));
  };
  for (const auto& e : g.edges()) {
    entries.emplace(std::make_pair(e.a, e.b), sample_one(e.a, e.b));
    entries.emplace(std::make_pair(e.b, e.a), sample_one(e.b, e.a));
  }
  return PerturbationSet(std::move(entries), eps_err);
}

PerturbationSet PerturbationSet::identity(const Graph& g, int n) {
  std::map<std::pair<int, int>, Rotation> entries;
  for (const auto& e : g.edges()) {
    entries.emplace(std::make_pair(e.a, e.b), Rotation::identity(n));
    entries.emplace(std::make_pair(e.b, e.a), Rotation::identity(n));
  }
  return PerturbationSet(std::move(entries), 0.0);
}

const Rotation& PerturbationSet::at(int i, int j) const {
  auto it = entries_.find({i, j});
  if (it == entries_.end())
    throw ConfigError("PerturbationSet: missing entry for directed edge (" +
                      std::to_string(i + 1) + "->" + std::to_string(j + 1) + ")");
  return it->second;
}

bool PerturbationSet::complete_for(const Graph& g) const {
  for (const auto& e : g.edges())
    if (!entries_.count({e.a, e.b}) || !entries_.count({e.b, e.a})) return false;
  return true;
}

Matrix projector(const Vector& y) {
  if (std::abs(y.norm() - 1.0) > tol::construction)
    throw DomainError("projector: vector must be unit length");
  return y * y.transpose();
}

GeneralizedLaplacian generalized_laplacian(const NetworkConfig& net, std::optional<double> t) {
  if (net.time_varying() && !t)
    throw ConfigError("generalized_laplacian: time-varying references require t");
  const int k = net.graph().vertex_count();
  const int n = net.dim();
  Matrix l = Matrix::Zero(k * n, k * n);
  for (const auto& e : net.graph().edges()) {
    const Matrix m = net.edge_projector(e, t.value_or(0.0));
    l.block(e.a * n, e.a * n, n, n) += m;
    l.block(e.b * n, e.b * n, n, n) += m;
    l.block(e.a * n, e.b * n, n, n) -= m;
    l.block(e.b * n, e.a * n, n, n) -= m;
  }
  return GeneralizedLaplacian(k, n, std::move(l));
}

int numerical_rank(const Matrix& m) {
  if (m.rows() == 0 || m.cols() == 0) return 0;
  Eigen::BDCSVD<Matrix> svd(m);
  const auto& s = svd.singularValues();
  if (s.size() == 0 || s(0) <= 0.0) return 0;
  int rank = 0;
  for (int i = 0; i < s.size(); ++i)
    if (s(i) > tol::rank_rel * s(0)) ++rank;
  return rank;
}

ConditionAReport check_condition_A(const NetworkConfig& net) {
  const int k = net.graph().vertex_count();
  const int n = net.dim();
  ConditionAReport rep;
  rep.required = n * (k - 1);
  const int rank_l = k - connected_components(net.graph()).count;
  rep.bound = std::min(net.graph().edge_count(), n * rank_l);
  rep.rank = numerical_rank(generalized_laplacian(net).matrix());
  rep.holds = rep.rank == rep.required;
  return rep;
}

namespace {

// V^T (I_n (x) L) V for the agent-slotted orthonormal so(n) basis, assembled
// blockwise: entry ((i,a),(j,b)) = tr(S_a^T L_ij S_b).
Matrix restrict_to_so(const GeneralizedLaplacian& l, const std::vector<SkewMatrix>& basis) {
  const int k = l.agents();
  const int d = static_cast<int>(basis.size());
  Matrix h(k * d, k * d);
  for (int i = 0; i < k; ++i)
    for (int j = 0; j < k; ++j) {
      const Matrix block = l.block(i, j);
      for (int a = 0; a < d; ++a)
        for (int b = 0; b < d; ++b)
          h(i * d + a, j * d + b) = (basis[a].matrix().transpose() * block * basis[b].matrix()).trace();
    }
  return h;
}

}  // namespace

ConditionBReport check_condition_B(const NetworkConfig& net) {
  if (net.space() != Space::SOn)
    throw ConfigError("check_condition_B: defined for SOn configurations");
  const int k = net.graph().vertex_count();
  const int n = net.dim();
  ConditionBReport rep;
  rep.required = (k - 1) * n * (n - 1) / 2;
  rep.restricted = restrict_to_so(generalized_laplacian(net), so_basis(n));
  rep.rank = numerical_rank(rep.restricted);
  rep.holds = rep.rank == rep.required;
  return rep;
}

InjectivityReport check_injectivity(const NetworkConfig& net) {
  const int n = net.dim();
  const int required = net.space() == Space::SOn ? n - 1 : n;
  InjectivityReport rep;
  rep.injective = true;
  for (int v = 0; v < net.graph().vertex_count(); ++v) {
    const auto nbrs = net.graph().neighbors(v);
    Matrix cols(n, static_cast<int>(nbrs.size()));
    for (std::size_t c = 0; c < nbrs.size(); ++c)
      cols.col(static_cast<int>(c)) = net.reference(Edge(v, nbrs[c]));
    VertexInjectivity vi;
    vi.vertex = v;
    vi.independent = nbrs.empty() ? 0 : numerical_rank(cols);
    vi.required = required;
    vi.passes = vi.independent >= required;
    rep.injective = rep.injective && vi.passes;
    rep.per_vertex.push_back(vi);
  }
  return rep;
}

CutReport check_cut_condition(const NetworkConfig& net) {
  const int k = net.graph().vertex_count();
  if (k > 20) throw CapacityError("check_cut_condition: exhaustive search capped at k = 20");
  const int n = net.dim();
  CutReport rep;
  rep.required = net.space() == Space::SOn ? n - 1 : n;
  rep.holds = true;
  // vertex 0 always on side A; masks enumerate the other k-1 memberships,
  // skipping the all-ones mask whose second side would be empty
  for (std::uint64_t mask = 0; mask + 1 < (1ULL << (k - 1)); ++mask) {
    std::vector<bool> side_a(k, false);
    side_a[0] = true;
    for (int v = 1; v < k; ++v) side_a[v] = (mask >> (v - 1)) & 1ULL;
    std::vector<Edge> cut;
    for (const auto& e : net.graph().edges())
      if (side_a[e.a] != side_a[e.b]) cut.push_back(e);
    int rank = 0;
    if (!cut.empty()) {
      Matrix cols(n, static_cast<int>(cut.size()));
      for (std::size_t c = 0; c < cut.size(); ++c)
        cols.col(static_cast<int>(c)) = net.reference(cut[c]);
      rank = numerical_rank(cols);
    }
    if (rank < rep.required) {
      rep.holds = false;
      rep.worst_rank = rank;
      for (int v = 0; v < k; ++v)
        if (side_a[v]) rep.worst_cut.push_back(v);
      return rep;
    }
  }
  return rep;
}

TriangleClass so3_triangle_class(const Vector& y12, const Vector& y13, const Vector& y23) {
  Matrix pair(3, 2), triple(3, 3);
  triple.col(0) = y12;
  triple.col(1) = y13;
  triple.col(2) = y23;
  const Vector* vs[3] = {&y12, &y13, &y23};
  for (int a = 0; a < 3; ++a)
    for (int b = a + 1; b < 3; ++b) {
      pair.col(0) = *vs[a];
      pair.col(1) = *vs[b];
      if (numerical_rank(pair) < 2) return TriangleClass::Degenerate;
    }
  return numerical_rank(triple) == 3 ? TriangleClass::CaseB : TriangleClass::CaseA;
}

QuadConditionResult so3_quad_condition(const Vector& y12, const Vector& y13, const Vector& y14,
                                       const Vector& y23, const Vector& y24) {
  QuadConditionResult res;
  const Vector* vs[5] = {&y12, &y13, &y14, &y23, &y24};
  Matrix triple(3, 3);
  for (int a = 0; a < 5; ++a)
    for (int b = a + 1; b < 5; ++b)
      for (int c = b + 1; c < 5; ++c) {
        triple.col(0) = *vs[a];
        triple.col(1) = *vs[b];
        triple.col(2) = *vs[c];
        if (numerical_rank(triple) < 3) {
          res.reason = QuadConditionResult::Reason::RankDeficientTriple;
          return res;
        }
      }
  auto cross = [](const Vector& a, const Vector& b) {
    Vector c(3);
    c << a(1) * b(2) - a(2) * b(1), a(2) * b(0) - a(0) * b(2), a(0) * b(1) - a(1) * b(0);
    return c;
  };
  const Vector c13 = cross(y12, y13);
  const Vector c14 = cross(y12, y14);
  const double den3 = y23.dot(c13);
  const double den4 = y24.dot(c14);
  if (std::abs(den3) < 1e-12 || std::abs(den4) < 1e-12) {
    res.reason = QuadConditionResult::Reason::DegenerateDenominator;
    return res;
  }
  res.ratio_123 = cross(y12, y23).dot(c13) / den3;
  res.ratio_124 = cross(y12, y24).dot(c14) / den4;
  const double scale = std::max({1.0, std::abs(res.ratio_123), std::abs(res.ratio_124)});
  res.holds = std::abs(res.ratio_123 - res.ratio_124) > tol::rank_rel * scale;
  return res;
}

std::vector<SkewMatrix> output_cost_gradient(const std::vector<Rotation>& states,
                                             const NetworkConfig& net, double t) {
  const int n = net.dim();
  const int k = net.graph().vertex_count();
  if (static_cast<int>(states.size()) != k)
    throw DimensionError("output_cost_gradient: state count does not match graph");
  std::vector<Matrix> acc(k, Matrix::Zero(n, n));
  for (const auto& e : net.graph().edges()) {
    const Matrix m = net.edge_projector(e, t);
    const Matrix coupling = states[e.a].matrix().transpose() * m * states[e.b].matrix();
    const Matrix s = 0.5 * (coupling - coupling.transpose());
    acc[e.a] -= s;
    acc[e.b] += s;  // sk of the transposed coupling is -s
  }
  std::vector<SkewMatrix> grad;
  grad.reserve(k);
  for (auto& a : acc) grad.push_back(SkewMatrix(std::move(a)));
  return grad;
}

GeneralizedLaplacian hessian_gg(const std::vector<Rotation>& states, const NetworkConfig& net,
                                const PerturbationSet* perturbations) {
  const int n = net.dim();
  const int k = net.graph().vertex_count();
  if (static_cast<int>(states.size()) != k)
    throw DimensionError("hessian_gg: state count does not match graph");
  Matrix l = Matrix::Zero(k * n, k * n);
  for (const auto& e : net.graph().edges()) {
    Matrix m = net.edge_projector(e, 0.0);
    if (perturbations)
      m = perturbations->at(e.a, e.b).matrix() * m *
          perturbations->at(e.b, e.a).matrix().transpose();
    const Matrix f_ab = states[e.a].matrix().transpose() * m * states[e.b].matrix();
    l.block(e.a * n, e.b * n, n, n) -= f_ab;
    l.block(e.b * n, e.a * n, n, n) -= f_ab.transpose();
    l.block(e.a * n, e.a * n, n, n) += f_ab;
    l.block(e.b * n, e.b * n, n, n) += f_ab.transpose();
  }
  return GeneralizedLaplacian(k, n, std::move(l));
}

EquilibriumReport classify_equilibrium(const std::vector<Rotation>& states,
                                       const NetworkConfig& net) {
  const int k = net.graph().vertex_count();
  const int n = net.dim();
  const auto basis = so_basis(n);
  const int d = static_cast<int>(basis.size());

  EquilibriumReport rep;
  double sq = 0.0;
  for (const auto& g : output_cost_gradient(states, net)) sq += g.norm() * g.norm();
  rep.gradient_norm = std::sqrt(sq);

  Matrix h = restrict_to_so(hessian_gg(states, net), basis);
  h = 0.5 * (h + h.transpose());

  // common-rotation directions (W,...,W)/sqrt(k), one per basis element
  Matrix w = Matrix::Zero(k * d, d);
  for (int b = 0; b < d; ++b)
    for (int i = 0; i < k; ++i) w(i * d + b, b) = 1.0 / std::sqrt(static_cast<double>(k));
  Eigen::HouseholderQR<Matrix> qr(w);
  const Matrix q = qr.householderQ();
  const Matrix p = q.rightCols(k * d - d);

  Eigen::SelfAdjointEigenSolver<Matrix> eig(p.transpose() * h * p);
  rep.restricted_spectrum = eig.eigenvalues();
  const double min_eig = rep.restricted_spectrum.size() ? rep.restricted_spectrum(0) : 0.0;
  if (min_eig > 1e-9)
    rep.verdict = StabilityVerdict::ExpStable;
  else if (min_eig < -1e-9)
    rep.verdict = StabilityVerdict::Unstable;
  else
    rep.verdict = StabilityVerdict::Degenerate;
  return rep;
}

PersistenceReport check_persistent_excitation(const TimeVaryingRefs& refs, const Edge& e,
                                              double window, int samples) {
  if (window <= 0.0) throw DomainError("check_persistent_excitation: window must be positive");
  if (samples < 2) throw DomainError("check_persistent_excitation: need at least 2 samples");
  const double h = window / (samples - 1);
  Matrix acc;
  for (int s = 0; s < samples; ++s) {
    const double t = s * h;
    const Vector y = refs.edge_vector(e, t);
    const Matrix m = y * y.transpose();
    const double wgt = (s == 0 || s == samples - 1) ? 0.5 : 1.0;
    if (s == 0)
      acc = wgt * m;
    else
      acc += wgt * m;
  }
  PersistenceReport rep;
  rep.averaged = acc * (h / window);
  Eigen::SelfAdjointEigenSolver<Matrix> eig(rep.averaged);
  rep.min_eig = eig.eigenvalues()(0);
  rep.holds = rep.min_eig > 1e-6;
  return rep;
}

}  // namespace sosync
