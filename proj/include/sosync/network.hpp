#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "sosync/graph.hpp"
#include "sosync/liegroup.hpp"

namespace sosync {

enum class Space { SOn, Rn };

struct QuasiTerm {
  double amplitude = 0.0;
  double freq_hz = 0.0;
  double phase = 0.0;
};

// offset + sum of sinusoids; smooth in t.
struct ScalarSignal {
  double offset = 0.0;
  std::vector<QuasiTerm> terms;
  double operator()(double t) const;
};

struct VectorSignal {
  std::vector<ScalarSignal> coords;
  int dim() const { return static_cast<int>(coords.size()); }
  Vector operator()(double t) const;
};

// Time-varying reference vectors: either per-vertex anchor trajectories with
// edge vectors (y_i - y_j)/||y_i - y_j||, or direct per-edge generators
// (normalized). Output is always a unit vector.
class TimeVaryingRefs {
 public:
  enum class Mode { Anchors, PerEdge };

  static TimeVaryingRefs anchors(std::vector<VectorSignal> per_vertex);
  static TimeVaryingRefs per_edge(std::map<Edge, VectorSignal> per_edge);

  // Random quasi-periodic families with frequencies in [0.05, 1/(2 pi)] Hz.
  // Deterministic given the seed; generators whose trajectories come too
  // close to the undefined locus (vanishing difference / vanishing norm over
  // the probe horizon) are redrawn.
  static TimeVaryingRefs random_anchors(int k, int n, std::uint64_t seed);
  static TimeVaryingRefs random_per_edge(const Graph& g, int n, std::uint64_t seed);

  Mode mode() const { return mode_; }
  Vector edge_vector(const Edge& e, double t) const;
  const std::vector<VectorSignal>& anchor_signals() const { return anchors_; }
  const std::map<Edge, VectorSignal>& edge_signals() const { return edges_; }
  std::optional<std::uint64_t> seed() const { return seed_; }

 private:
  TimeVaryingRefs() = default;
  Mode mode_ = Mode::Anchors;
  std::vector<VectorSignal> anchors_;
  std::map<Edge, VectorSignal> edges_;
  std::optional<std::uint64_t> seed_;
};

using EdgeVectors = std::map<Edge, Vector>;

// How the reference vectors of a config were produced (kept for
// serialization round-trips).
enum class RefMode { Explicit, Generic, RelativePosition, TimeVarying };

// Interaction graph plus one unit reference vector per edge (fixed or
// time-varying) and the state space.
class NetworkConfig {
 public:
  NetworkConfig(int n, Space space, Graph graph, EdgeVectors refs);
  NetworkConfig(int n, Space space, Graph graph, TimeVaryingRefs refs);

  // One unit vector per edge, i.i.d. uniform on S^{n-1}. Each edge's vector
  // depends only on (seed, edge), so subgraphs share vectors.
  static NetworkConfig generic(int n, Space space, Graph graph, std::uint64_t seed);

  // Anchor points uniform in [-1,1]^n per vertex (again per-vertex streams),
  // reference vectors normalized anchor differences.
  static NetworkConfig relative_position(int n, Space space, Graph graph, std::uint64_t seed);

  int dim() const { return n_; }
  Space space() const { return space_; }
  const Graph& graph() const { return graph_; }
  bool time_varying() const { return tv_.has_value(); }

  // Fixed-refs accessors; throw ConfigError on a time-varying config.
  const Vector& reference(const Edge& e) const;
  const EdgeVectors& references() const;

  Vector reference(const Edge& e, double t) const;
  Matrix edge_projector(const Edge& e, double t = 0.0) const;

  const TimeVaryingRefs& time_varying_refs() const;

  RefMode ref_mode() const { return ref_mode_; }
  std::optional<std::uint64_t> ref_seed() const { return ref_seed_; }

 private:
  int n_;
  Space space_;
  Graph graph_;
  EdgeVectors refs_;
  std::optional<TimeVaryingRefs> tv_;
  RefMode ref_mode_ = RefMode::Explicit;
  std::optional<std::uint64_t> ref_seed_;
  void validate_fixed() const;
};

// kn x kn block Laplacian with n x n blocks.
class GeneralizedLaplacian {
 public:
  GeneralizedLaplacian(int k, int n, Matrix full);
  const Matrix& matrix() const { return m_; }
  int agents() const { return k_; }
  int dim() const { return n_; }
  Eigen::Block<const Matrix> block(int i, int j) const {
    return m_.block(i * n_, j * n_, n_, n_);
  }

 private:
  int k_, n_;
  Matrix m_;
};

// Per-directed-edge rotations of bounded Frobenius deviation from identity.
// E_ij and E_ji are independent.
class PerturbationSet {
 public:
  PerturbationSet(std::map<std::pair<int, int>, Rotation> entries, double eps_err);

  // ||E - I||_F uniform in (eps_err/2, eps_err), axis uniform; one entry per
  // directed edge of g.
  static PerturbationSet sample(const Graph& g, int n, double eps_err, std::uint64_t seed);
  static PerturbationSet identity(const Graph& g, int n);

  const Rotation& at(int i, int j) const;
  double bound() const { return eps_err_; }
  bool complete_for(const Graph& g) const;
  const std::map<std::pair<int, int>, Rotation>& entries() const { return entries_; }

 private:
  std::map<std::pair<int, int>, Rotation> entries_;
  double eps_err_;
};

// y y^T: symmetric, idempotent, rank 1, trace 1. Throws DomainError for a
// non-unit vector.
Matrix projector(const Vector& y);

// Block Laplacian with edge projectors as weights. Time-varying configs
// require t.
GeneralizedLaplacian generalized_laplacian(const NetworkConfig& net,
                                           std::optional<double> t = std::nullopt);

// Count of singular values above 1e-9 * sigma_max (0 for the zero matrix).
int numerical_rank(const Matrix& m);

struct ConditionAReport {
  bool holds = false;
  int rank = 0;
  int required = 0;  // n(k-1)
  int bound = 0;     // min(#E, n rank L)
};
ConditionAReport check_condition_A(const NetworkConfig& net);

struct ConditionBReport {
  bool holds = false;
  int rank = 0;
  int required = 0;  // (k-1) n(n-1)/2
  Matrix restricted;  // V^T (I_n (x) L^g) V with the orthonormal so(n) basis
};
ConditionBReport check_condition_B(const NetworkConfig& net);

struct VertexInjectivity {
  int vertex = 0;
  int independent = 0;
  int required = 0;
  bool passes = false;
};
struct InjectivityReport {
  std::vector<VertexInjectivity> per_vertex;
  bool injective = false;
};
// Every vertex needs n-1 (SOn) resp. n (Rn) linearly independent incident
// reference vectors.
InjectivityReport check_injectivity(const NetworkConfig& net);

struct CutReport {
  bool holds = false;
  std::vector<int> worst_cut;  // vertex set of one side of the first violating cut
  int worst_rank = 0;
  int required = 0;
};
// Exhaustive over the 2^{k-1} bipartitions; throws CapacityError for k > 20.
CutReport check_cut_condition(const NetworkConfig& net);

enum class TriangleClass { CaseA, CaseB, Degenerate };
// CaseA: coplanar with all pairs independent. CaseB: full rank. Degenerate:
// some pair parallel.
TriangleClass so3_triangle_class(const Vector& y12, const Vector& y13, const Vector& y23);

struct QuadConditionResult {
  bool holds = false;
  enum class Reason { Ok, RankDeficientTriple, DegenerateDenominator } reason = Reason::Ok;
  double ratio_123 = 0.0;
  double ratio_124 = 0.0;
};
// Cross-product ratio test on the five reference vectors of the edge set
// {(1,2),(1,3),(1,4),(2,3),(2,4)}; requires every triple to have rank 3.
QuadConditionResult so3_quad_condition(const Vector& y12, const Vector& y13, const Vector& y14,
                                       const Vector& y23, const Vector& y24);

// Riemannian gradient of the output cost in body coordinates: entry i is
// -sum_j sk(Q_i^T M_ij Q_j). The flow's tangent is the negative of this.
std::vector<SkewMatrix> output_cost_gradient(const std::vector<Rotation>& states,
                                             const NetworkConfig& net, double t = 0.0);

// Block matrix with blocks -a_ij Qbar_i^T M_ij Qbar_j off the diagonal and
// the corresponding row sums on it; at consensus with Qbar = I it equals the
// generalized Laplacian. Symmetric as a matrix when the states are an
// equilibrium. With a perturbation set the edge weights become
// E_ij M_ij E_ji^T (the second-order form of the perturbed output cost).
GeneralizedLaplacian hessian_gg(const std::vector<Rotation>& states, const NetworkConfig& net,
                                const PerturbationSet* perturbations = nullptr);

enum class StabilityVerdict { ExpStable, Unstable, Degenerate };

struct EquilibriumReport {
  double gradient_norm = 0.0;
  Vector restricted_spectrum;  // eigenvalues orthogonal to the common-rotation directions
  StabilityVerdict verdict = StabilityVerdict::Degenerate;
};
// Restricts the second-order form to so(n)^k, projects out the common
// direction {(W,...,W)}, and classifies by the smallest eigenvalue
// (ExpStable > 1e-9, Unstable < -1e-9, Degenerate otherwise).
EquilibriumReport classify_equilibrium(const std::vector<Rotation>& states,
                                       const NetworkConfig& net);

struct PersistenceReport {
  Matrix averaged;
  double min_eig = 0.0;
  bool holds = false;
};
// Trapezoid average of M_ij(t) over [0, T]; holds iff the smallest
// eigenvalue of the average exceeds 1e-6.
PersistenceReport check_persistent_excitation(const TimeVaryingRefs& refs, const Edge& e,
                                              double window, int samples);

}  // namespace sosync
