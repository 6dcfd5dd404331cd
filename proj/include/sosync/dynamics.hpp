#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "sosync/network.hpp"

namespace sosync {

enum class FlowKind { FullState, PartialState, PartialStateTV, Perturbed, RnPartial };

struct FlowSpec {
  FlowKind kind = FlowKind::PartialState;
  double epsilon = 1.0;  // gain multiplying the coupling
  std::optional<PerturbationSet> perturbations;
  double step = 1e-2;
  double horizon = 10.0;
  int record_every = 10;
  // 1 = Lie-Euler, 2 = Lie midpoint, 4 = commutator-free RK4. All step the
  // group exactly via Q exp(h u).
  int order = 4;
  // Stop once the tangent norm falls below this (equilibrium reached).
  std::optional<double> stop_gradient_norm;

  void validate(const NetworkConfig& net) const;
};

struct SampleDiagnostics {
  double f_s = 0.0;
  double f_o = 0.0;
  double f_oe = std::numeric_limits<double>::quiet_NaN();
  double dist_cs = 0.0;
  double ortho_err = 0.0;
};

struct Trajectory {
  Space space = Space::SOn;
  std::vector<double> times;
  std::vector<std::vector<Matrix>> states;  // per sample, per agent (n x n or n x 1)
  std::vector<SampleDiagnostics> diagnostics;
  enum class Status { Ok, Failed } status = Status::Ok;
  std::string failure;

  const std::vector<Matrix>& final_state() const { return states.back(); }
  // Header t,f_s,f_o,f_oe,dist_cs,ortho_err; one row per sample, 17
  // significant digits.
  void write_csv(std::ostream& out) const;
};

// Tangents in body coordinates (u_i with dQ_i/dt = Q_i u_i), skew by
// construction. Each equals minus the gradient of the corresponding cost.
std::vector<SkewMatrix> rhs_partial(const std::vector<Rotation>& states,
                                    const NetworkConfig& net, double t = 0.0);
std::vector<SkewMatrix> rhs_full(const std::vector<Rotation>& states, const NetworkConfig& net);
std::vector<SkewMatrix> rhs_perturbed(const std::vector<Rotation>& states,
                                      const NetworkConfig& net, const PerturbationSet& pert);

// Fixed-step integration. SO(n) kinds step Q_i <- Q_i exp(h u_i); RnPartial
// uses a classic 4th-order step on dx = -L^g x. For the fixed-reference
// gradient kinds a cost increase beyond 1e-8 or a non-finite state aborts
// with Status::Failed and the trajectory retains the last valid samples.
Trajectory integrate(const std::vector<Matrix>& init, const NetworkConfig& net,
                     const FlowSpec& spec);

struct Costs {
  double f_s = std::numeric_limits<double>::quiet_NaN();
  double f_o = std::numeric_limits<double>::quiet_NaN();
  double f_oe = std::numeric_limits<double>::quiet_NaN();
  double g_o = std::numeric_limits<double>::quiet_NaN();
};

enum class CostForm { Norm, Trace };

// Both algebraic routes are implemented; they agree to 1e-10 and tests pin
// that. On Rn, f_s is the edge-wise state disagreement and g_o the output
// cost (mirrored into f_o for uniform diagnostics).
Costs evaluate_costs(const std::vector<Matrix>& states, const NetworkConfig& net,
                     const PerturbationSet* pert = nullptr, double t = 0.0,
                     CostForm form = CostForm::Norm);

struct ConsensusDistance {
  double value = 0.0;
  bool degenerate = false;  // sum of states was rank-deficient; value from a perturbed projection
};
// min over common Q of sum_i ||Q_i - Q||_F^2, solved in closed form through
// the Procrustes projection of sum_i Q_i; returns the square root.
ConsensusDistance dist_to_consensus(const std::vector<Matrix>& states);

enum class CostField { FS, FO, FOE };

struct DecayFit {
  double slope = std::numeric_limits<double>::quiet_NaN();
  double r2 = 0.0;
  int samples_used = 0;
};
// Least-squares slope of log(field) against t over [t_begin, t_end]; the
// window is truncated at the first nonpositive sample.
DecayFit estimate_decay_rate(const Trajectory& traj, CostField field, double t_begin,
                             double t_end);

// Initial-state helpers.
std::vector<Matrix> haar_states(int k, int n, Rng& rng);
// Common Haar rotation composed with per-agent exp of skew noise whose
// Frobenius magnitude is uniform in (0, magnitude].
std::vector<Matrix> near_consensus_states(int k, int n, double magnitude, Rng& rng);
std::vector<Matrix> random_vector_states(int k, int n, double box_halfwidth, Rng& rng);

std::vector<Rotation> as_rotations(const std::vector<Matrix>& states);

}  // namespace sosync
