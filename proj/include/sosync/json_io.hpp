#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include "sosync/dynamics.hpp"
#include "sosync/network.hpp"

// Vendored single-header nlohmann/json lives at vendor/json.hpp.
#include <json.hpp>

namespace sosync {

using json = nlohmann::json;

// Graph wire format: {"k": int, "edges": [[i,j], ...]} with 1-based indices.
json graph_to_json(const Graph& g);
Graph graph_from_json(const json& j);

json network_to_json(const NetworkConfig& net);
NetworkConfig network_from_json(const json& j);

struct InitSpec {
  enum class Mode { Haar, NearConsensus, Explicit, RandomBox, Consensus };
  Mode mode = Mode::Haar;
  std::uint64_t seed = 0;
  double magnitude = 0.3;  // skew noise bound / box half-width
  std::vector<Matrix> states;
};

std::vector<Matrix> make_initial_states(const InitSpec& init, const NetworkConfig& net);

struct ScenarioConfig {
  NetworkConfig network;
  FlowSpec flow;
  InitSpec init;
  std::string out_name = "scenario";
};

ScenarioConfig scenario_from_json(const json& j);
json scenario_to_json(const ScenarioConfig& sc);

json load_json_file(const std::filesystem::path& path);
void write_json_file(const std::filesystem::path& path, const json& j);

// gnuplot script plotting the cost columns of a trajectory CSV.
void write_gnuplot_script(const std::filesystem::path& csv_path,
                          const std::filesystem::path& script_path);

}  // namespace sosync
