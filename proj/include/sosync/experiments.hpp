#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "sosync/dynamics.hpp"
#include "sosync/json_io.hpp"

namespace sosync {

struct CheckResult {
  std::string name;
  double value = 0.0;
  std::string constraint;
  bool pass = false;
};

struct ExperimentReport {
  std::string name;
  std::uint64_t seed = 0;
  json parameters;
  std::map<std::string, double> metrics;
  std::vector<CheckResult> checks;
  std::vector<std::string> csv_paths;

  bool passed() const;
  json to_json() const;
  // Writes report.json (and tracked CSVs already live) under its directory.
  void write(const std::filesystem::path& dir) const;
};

struct ExperimentOptions {
  std::filesystem::path out_dir = "out";
  bool emit_gnuplot = false;
  bool parallel = true;
  std::optional<double> horizon;
  std::optional<double> step;
};

// Three fully-connected agents with coordinate-axis references: the printed
// diagonal states synchronize every output while the states disagree.
ExperimentReport verify_example_nocon(const ExperimentOptions& opts = {});

// Seven-agent ring-structured network (alpha = 0.04) carrying a locally
// stable equilibrium away from consensus; optionally refines the printed
// states to gradient norm < 1e-10 and classifies both equilibria.
ExperimentReport verify_example_notglobal(bool refine = true,
                                          const ExperimentOptions& opts = {});

// Four R^2 agents on a cycle: a two-parameter family of output-synchronized
// states that are not consensus.
ExperimentReport verify_example_rn_family(double a, double b, double c, double d, double theta,
                                          double phi, const ExperimentOptions& opts = {});

enum class FigureId { Fig3Clean, Fig3Noisy, Fig4, Fig5 };

ExperimentReport reproduce_figure(FigureId id, std::uint64_t seed,
                                  const ExperimentOptions& opts = {});

enum class SweepCase { A, B };

// Perturbed-flow limit distance versus measurement-error size; fits the
// scaling exponent of the per-size maximum over trials.
ExperimentReport robustness_sweep(SweepCase c, const std::vector<double>& eps_list,
                                  int trials_per_eps, std::uint64_t seed,
                                  const ExperimentOptions& opts = {});

// Two-agent reductions: stabilizer equilibria, the in-plane angle flow, the
// fixed-reference limit set, and persistently excited time-varying runs.
ExperimentReport two_agent_suite(std::uint64_t seed, const ExperimentOptions& opts = {});

// Registry used by the CLI.
std::vector<std::string> experiment_names();
ExperimentReport run_experiment(const std::string& name, std::uint64_t seed,
                                const ExperimentOptions& opts);

// Gradient descent with backtracking toward the nearby critical point of the
// output cost, followed by a damped Newton polish on the so(n)^k
// coordinates when plain descent saturates. Throws NumericalError if the
// target gradient norm is not reached.
std::vector<Rotation> refine_to_equilibrium(std::vector<Rotation> states,
                                            const NetworkConfig& net, double target_grad_norm,
                                            int max_iterations = 200000);

// Graphs used by the seven-agent simulations: two diamond blocks sharing a
// middle vertex, with (A) and without (B) the chord that makes the second
// block collapsible.
Graph figure_graph_a();
Graph figure_graph_b();

// Printed state family of the seven-agent example.
std::vector<Matrix> notglobal_states(double beta);
NetworkConfig notglobal_network(double alpha = 0.04);

// Relative plateau change over the trailing `window_fraction` of the
// samples; a curve is flat once this drops below 1e-4.
double plateau_relative_change(const std::vector<double>& values, double window_fraction = 0.1);

}  // namespace sosync
