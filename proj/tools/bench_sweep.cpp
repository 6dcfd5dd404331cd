// Compares the OpenMP trial loop against the serial reference on a reduced
// robustness sweep. Both paths must produce identical metrics; the point of
// the benchmark is the wall-clock ratio.

#include <chrono>
#include <iostream>

#include "sosync/experiments.hpp"
#include "sosync/parallel.hpp"

using namespace sosync;

int main(int argc, char** argv) {
  int trials = 8;
  if (argc > 1) trials = std::atoi(argv[1]);

  ExperimentOptions opts;
  opts.out_dir = "bench_out";
  opts.horizon = 4000.0;

  const std::vector<double> eps = {1e-4, 1e-3, 1e-2};

  auto timed = [&](bool parallel) {
    opts.parallel = parallel;
    const auto t0 = std::chrono::steady_clock::now();
    const ExperimentReport rep = robustness_sweep(SweepCase::B, eps, trials, 7, opts);
    const auto t1 = std::chrono::steady_clock::now();
    const double secs = std::chrono::duration<double>(t1 - t0).count();
    std::cout << (parallel ? "openmp" : "serial") << ": " << secs << " s, slope="
              << rep.metrics.at("slope") << "\n";
    return std::make_pair(secs, rep.metrics.at("slope"));
  };

  std::cout << "threads available: " << max_threads() << ", trials per eps: " << trials << "\n";
  const auto serial = timed(false);
  const auto openmp = timed(true);
  if (serial.second != openmp.second) {
    std::cout << "MISMATCH: serial and parallel sweeps disagree\n";
    return 1;
  }
  std::cout << "speedup: " << serial.first / openmp.first << "x\n";
  return 0;
}
