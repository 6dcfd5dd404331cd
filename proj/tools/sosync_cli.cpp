// Command-line front end: network analysis, flow simulation, experiment
// reproduction, and the graph collapse check.
//
// Exit codes: 0 success, 2 configuration error, 3 capacity limit,
// 4 numerical failure.

#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "sosync/experiments.hpp"
#include "sosync/json_io.hpp"

namespace fs = std::filesystem;
using namespace sosync;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitCapacity = 3;
constexpr int kExitNumerical = 4;

const char* verdict_name(StabilityVerdict v) {
  switch (v) {
    case StabilityVerdict::ExpStable: return "ExpStable";
    case StabilityVerdict::Unstable: return "Unstable";
    case StabilityVerdict::Degenerate: return "Degenerate";
  }
  return "?";
}

int cmd_analyze(const fs::path& config, const fs::path& out) {
  const NetworkConfig net = network_from_json(load_json_file(config));
  json report;
  std::cout << "network: n=" << net.dim() << " space=" << (net.space() == Space::SOn ? "SOn" : "Rn")
            << " k=" << net.graph().vertex_count() << " edges=" << net.graph().edge_count()
            << "\n";
  if (net.time_varying()) {
    std::cout << "references are time-varying; static conditions need fixed references.\n";
    for (const auto& e : net.graph().edges()) {
      const auto pe = check_persistent_excitation(net.time_varying_refs(), e, 60.0, 2401);
      std::cout << "  edge (" << e.a + 1 << "," << e.b + 1
                << "): persistent excitation min_eig=" << pe.min_eig
                << (pe.holds ? "  holds" : "  FAILS") << "\n";
      report["persistent_excitation"][std::to_string(e.a + 1) + "-" + std::to_string(e.b + 1)] =
          pe.min_eig;
    }
  } else {
    const auto inj = check_injectivity(net);
    std::cout << "injectivity (per-vertex independence): " << (inj.injective ? "yes" : "NO")
              << "\n";
    for (const auto& v : inj.per_vertex)
      std::cout << "  vertex " << v.vertex + 1 << ": " << v.independent << "/" << v.required
                << (v.passes ? "" : "  <-- fails") << "\n";
    report["injective"] = inj.injective;

    const auto cut = check_cut_condition(net);
    std::cout << "cut condition: " << (cut.holds ? "holds" : "FAILS") << "\n";
    report["cut_condition"] = cut.holds;

    const auto a = check_condition_A(net);
    std::cout << "condition A: rank=" << a.rank << " required=" << a.required
              << " bound=" << a.bound << " -> " << (a.holds ? "holds" : "fails") << "\n";
    report["condition_a"] = {{"rank", a.rank}, {"required", a.required}, {"bound", a.bound},
                             {"holds", a.holds}};

    if (net.space() == Space::SOn) {
      const auto b = check_condition_B(net);
      std::cout << "condition B: rank=" << b.rank << " required=" << b.required << " -> "
                << (b.holds ? "holds" : "fails") << "\n";
      report["condition_b"] = {{"rank", b.rank}, {"required", b.required}, {"holds", b.holds}};

      const auto cls = classify_equilibrium(
          std::vector<Rotation>(net.graph().vertex_count(), Rotation::identity(net.dim())), net);
      std::cout << "consensus classification: " << verdict_name(cls.verdict)
                << " (min restricted eigenvalue " << cls.restricted_spectrum(0) << ")\n";
      report["consensus_verdict"] = verdict_name(cls.verdict);
    }

    if (net.dim() == 3 && net.graph().vertex_count() == 3 && net.graph().edge_count() == 3) {
      const auto tri = so3_triangle_class(net.reference(Edge(0, 1)), net.reference(Edge(0, 2)),
                                          net.reference(Edge(1, 2)));
      const char* name = tri == TriangleClass::CaseA   ? "CaseA"
                         : tri == TriangleClass::CaseB ? "CaseB"
                                                       : "Degenerate";
      std::cout << "triangle class: " << name << "\n";
      report["triangle_class"] = name;
    }

    if (net.dim() == 3 && net.graph().vertex_count() == 4 && net.graph().has_edge(0, 1) &&
        net.graph().has_edge(0, 2) && net.graph().has_edge(0, 3) && net.graph().has_edge(1, 2) &&
        net.graph().has_edge(1, 3)) {
      const auto quad = so3_quad_condition(net.reference(Edge(0, 1)), net.reference(Edge(0, 2)),
                                           net.reference(Edge(0, 3)), net.reference(Edge(1, 2)),
                                           net.reference(Edge(1, 3)));
      std::cout << "four-agent cross-ratio condition: "
                << (quad.holds ? "holds"
                    : quad.reason == QuadConditionResult::Reason::Ok
                        ? "fails (ratios coincide)"
                        : "not applicable (degenerate reference triple)")
                << "\n";
      report["quad_condition"] = quad.holds;
    }
  }

  const auto col = collapse_analysis(net.graph());
  std::cout << "collapse to single vertex: " << (col.reducible ? "yes" : "no") << " ("
            << col.trace.size() << " steps)\n";
  report["collapse_single_vertex"] = col.reducible;

  if (!out.empty()) {
    fs::create_directories(out);
    write_json_file(out / "analysis.json", report);
    std::cout << "report written to " << (out / "analysis.json").string() << "\n";
  }
  return kExitOk;
}

int cmd_simulate(const fs::path& config, fs::path out, std::optional<std::uint64_t> seed,
                 std::optional<double> horizon, std::optional<double> step, bool emit_gnuplot) {
  ScenarioConfig sc = scenario_from_json(load_json_file(config));
  if (seed) sc.init.seed = *seed;
  if (horizon) sc.flow.horizon = *horizon;
  if (step) sc.flow.step = *step;
  if (out.empty()) out = "out";
  fs::create_directories(out);

  const auto init = make_initial_states(sc.init, sc.network);
  const Trajectory traj = integrate(init, sc.network, sc.flow);

  const fs::path csv = out / (sc.out_name + ".csv");
  {
    std::ofstream f(csv);
    traj.write_csv(f);
  }
  if (emit_gnuplot) write_gnuplot_script(csv, out / (sc.out_name + ".gp"));

  json summary;
  summary["csv"] = csv.string();
  summary["samples"] = traj.times.size();
  summary["final"] = {{"t", traj.times.back()},
                      {"f_s", traj.diagnostics.back().f_s},
                      {"f_o", traj.diagnostics.back().f_o},
                      {"dist_cs", traj.diagnostics.back().dist_cs},
                      {"ortho_err", traj.diagnostics.back().ortho_err}};
  const DecayFit fit = estimate_decay_rate(traj, CostField::FO, 0.0, traj.times.back());
  summary["decay_fit"] = {{"slope", fit.slope}, {"r2", fit.r2}, {"samples", fit.samples_used}};
  summary["status"] = traj.status == Trajectory::Status::Ok ? "ok" : "failed";
  if (traj.status != Trajectory::Status::Ok) summary["failure"] = traj.failure;
  write_json_file(out / (sc.out_name + "_summary.json"), summary);

  std::cout << "wrote " << csv.string() << " (" << traj.times.size() << " samples)\n";
  std::cout << "final: f_s=" << traj.diagnostics.back().f_s
            << " f_o=" << traj.diagnostics.back().f_o << "\n";
  if (traj.status != Trajectory::Status::Ok) {
    std::cout << "integration failed: " << traj.failure << "\n";
    return kExitNumerical;
  }
  return kExitOk;
}

int cmd_experiment(const std::string& name, std::uint64_t seed, const fs::path& out,
                   bool emit_gnuplot, std::optional<double> horizon, std::optional<double> step,
                   bool serial) {
  ExperimentOptions opts;
  opts.out_dir = out.empty() ? fs::path("out") : out;
  opts.emit_gnuplot = emit_gnuplot;
  opts.horizon = horizon;
  opts.step = step;
  opts.parallel = !serial;
  const ExperimentReport rep = run_experiment(name, seed, opts);
  std::cout << "experiment " << rep.name << " (seed " << rep.seed << ")\n";
  for (const auto& c : rep.checks)
    std::cout << "  [" << (c.pass ? "pass" : "FAIL") << "] " << c.name << " = " << c.value << "  ("
              << c.constraint << ")\n";
  std::cout << (rep.passed() ? "PASSED" : "FAILED") << "\n";
  return rep.passed() ? kExitOk : 1;
}

int cmd_collapse(const fs::path& config) {
  const json j = load_json_file(config);
  const Graph g = j.contains("graph") ? graph_from_json(j.at("graph")) : graph_from_json(j);
  const auto res = collapse_analysis(g);
  for (const auto& step : res.trace) {
    std::cout << (step.kind == CollapseStep::Kind::Pattern ? "pattern " : "multi-edge ")
              << "collapse: {";
    for (std::size_t i = 0; i < step.absorbed.size(); ++i)
      std::cout << (i ? "," : "") << step.absorbed[i] + 1;
    std::cout << "} -> " << step.into + 1 << "\n";
  }
  std::cout << "vertices remaining: " << res.final_graph.vertex_count() << "\n";
  std::cout << "single vertex: " << (res.reducible ? "yes" : "no") << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"synchronization-by-partial-outputs toolbox"};
  app.require_subcommand(1);

  std::string config, out;
  std::string experiment_name;
  std::uint64_t seed = 0;
  bool emit_gnuplot = false, serial = false;
  double horizon_v = 0.0, step_v = 0.0;
  bool horizon_set = false, step_set = false, seed_set = false;

  auto add_common = [&](CLI::App* sub, bool needs_config) {
    auto* c = sub->add_option("--config", config, "JSON configuration file");
    if (needs_config) c->required();
    sub->add_option("--out", out, "output directory");
    sub->add_option("--seed", seed, "seed for all randomized choices")
        ->each([&](const std::string&) { seed_set = true; });
    sub->add_flag("--emit-gnuplot", emit_gnuplot, "write gnuplot scripts next to CSVs");
    sub->add_option("--horizon", horizon_v, "override integration horizon")
        ->each([&](const std::string&) { horizon_set = true; });
    sub->add_option("--step", step_v, "override integration step")
        ->each([&](const std::string&) { step_set = true; });
  };

  auto* analyze = app.add_subcommand("analyze", "static synchronization conditions");
  add_common(analyze, true);
  auto* simulate = app.add_subcommand("simulate", "integrate a configured flow");
  add_common(simulate, true);
  auto* experiment = app.add_subcommand("experiment", "run a named experiment");
  experiment->add_option("name", experiment_name, "one of: nocon notglobal rn_family fig3_clean fig3_noisy fig4 fig5 sweep_a sweep_b two_agent")
      ->required();
  add_common(experiment, false);
  experiment->add_flag("--serial", serial, "disable the parallel trial loop");
  auto* collapse = app.add_subcommand("collapse", "graph collapse decision");
  add_common(collapse, true);

  CLI11_PARSE(app, argc, argv);

  const auto horizon = horizon_set ? std::optional<double>(horizon_v) : std::nullopt;
  const auto step = step_set ? std::optional<double>(step_v) : std::nullopt;

  try {
    if (*analyze) return cmd_analyze(config, out);
    if (*simulate) return cmd_simulate(config, out, seed_set ? std::optional(seed) : std::nullopt,
                                       horizon, step, emit_gnuplot);
    if (*experiment)
      return cmd_experiment(experiment_name, seed, out, emit_gnuplot, horizon, step, serial);
    if (*collapse) return cmd_collapse(config);
  } catch (const CapacityError& e) {
    std::cerr << "capacity error: " << e.what() << "\n";
    return kExitCapacity;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const DomainError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const DimensionError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kExitNumerical;
  }
  return kExitConfig;
}
