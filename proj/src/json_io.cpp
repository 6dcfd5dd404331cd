#include "sosync/json_io.hpp"

#include <fstream>
#include <sstream>

namespace sosync {

namespace {

const json& require(const json& j, const std::string& key, const std::string& where) {
  if (!j.is_object() || !j.contains(key))
    throw ConfigError(where + ": missing field '" + key + "'");
  return j.at(key);
}

std::string edge_key(const Edge& e) {
  return std::to_string(e.a + 1) + "-" + std::to_string(e.b + 1);
}

Edge edge_from_key(const std::string& key, int k) {
  const auto dash = key.find('-');
  if (dash == std::string::npos) throw ConfigError("edge key must look like \"i-j\": " + key);
  const int a = std::stoi(key.substr(0, dash));
  const int b = std::stoi(key.substr(dash + 1));
  if (a < 1 || b < 1 || a > k || b > k || a == b)
    throw ConfigError("edge key out of range: " + key);
  return Edge(a - 1, b - 1);
}

Vector vector_from_json(const json& j, const std::string& where) {
  if (!j.is_array() || j.empty()) throw ConfigError(where + ": expected a nonempty array");
  Vector v(static_cast<int>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number()) throw ConfigError(where + ": expected numbers");
    v(static_cast<int>(i)) = j[i].get<double>();
  }
  return v;
}

Matrix matrix_from_json(const json& j, const std::string& where) {
  if (!j.is_array() || j.empty()) throw ConfigError(where + ": expected a matrix (array of rows)");
  const int rows = static_cast<int>(j.size());
  const int cols = static_cast<int>(j[0].size());
  Matrix m(rows, cols);
  for (int r = 0; r < rows; ++r) {
    if (static_cast<int>(j[r].size()) != cols) throw ConfigError(where + ": ragged matrix");
    for (int c = 0; c < cols; ++c) m(r, c) = j[r][c].get<double>();
  }
  return m;
}

json vector_to_json(const Vector& v) {
  json out = json::array();
  for (int i = 0; i < v.size(); ++i) out.push_back(v(i));
  return out;
}

json matrix_to_json(const Matrix& m) {
  json out = json::array();
  for (int r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (int c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    out.push_back(row);
  }
  return out;
}

json signal_to_json(const VectorSignal& sig) {
  json coords = json::array();
  for (const auto& s : sig.coords) {
    json terms = json::array();
    for (const auto& t : s.terms)
      terms.push_back({{"amplitude", t.amplitude}, {"freq_hz", t.freq_hz}, {"phase", t.phase}});
    coords.push_back({{"offset", s.offset}, {"terms", terms}});
  }
  return coords;
}

VectorSignal signal_from_json(const json& j, const std::string& where) {
  if (!j.is_array() || j.empty()) throw ConfigError(where + ": expected per-coordinate signals");
  VectorSignal sig;
  for (const auto& cj : j) {
    ScalarSignal s;
    s.offset = cj.value("offset", 0.0);
    if (cj.contains("terms"))
      for (const auto& tj : cj.at("terms"))
        s.terms.push_back({require(tj, "amplitude", where).get<double>(),
                           require(tj, "freq_hz", where).get<double>(),
                           tj.value("phase", 0.0)});
    sig.coords.push_back(std::move(s));
  }
  return sig;
}

}  // namespace

json graph_to_json(const Graph& g) {
  json edges = json::array();
  for (const auto& e : g.edges()) edges.push_back({e.a + 1, e.b + 1});
  return {{"k", g.vertex_count()}, {"edges", edges}};
}

Graph graph_from_json(const json& j) {
  const int k = require(j, "k", "graph").get<int>();
  std::vector<Edge> edges;
  for (const auto& ej : require(j, "edges", "graph")) {
    if (!ej.is_array() || ej.size() != 2) throw ConfigError("graph.edges: expected pairs [i,j]");
    const int a = ej[0].get<int>();
    const int b = ej[1].get<int>();
    if (a < 1 || b < 1 || a > k || b > k)
      throw ConfigError("graph.edges: vertex index out of range (1-based)");
    edges.emplace_back(a - 1, b - 1);
  }
  return Graph(k, std::move(edges));
}

json network_to_json(const NetworkConfig& net) {
  json j;
  j["n"] = net.dim();
  j["space"] = net.space() == Space::SOn ? "SOn" : "Rn";
  j["graph"] = graph_to_json(net.graph());
  json refs;
  switch (net.ref_mode()) {
    case RefMode::Explicit: {
      refs["mode"] = "explicit";
      json vecs;
      for (const auto& [e, y] : net.references()) vecs[edge_key(e)] = vector_to_json(y);
      refs["vectors"] = vecs;
      break;
    }
    case RefMode::Generic:
      refs["mode"] = "generic";
      refs["seed"] = *net.ref_seed();
      break;
    case RefMode::RelativePosition:
      refs["mode"] = "relative_position";
      refs["seed"] = *net.ref_seed();
      break;
    case RefMode::TimeVarying: {
      refs["mode"] = "time_varying";
      const auto& tv = net.time_varying_refs();
      if (tv.seed()) {
        refs[tv.mode() == TimeVaryingRefs::Mode::Anchors ? "anchors" : "edges"] =
            json{{"seed", *tv.seed()}};
      } else if (tv.mode() == TimeVaryingRefs::Mode::Anchors) {
        json sigs = json::array();
        for (const auto& s : tv.anchor_signals()) sigs.push_back(signal_to_json(s));
        refs["anchors"] = json{{"signals", sigs}};
      } else {
        json sigs;
        for (const auto& [e, s] : tv.edge_signals()) sigs[edge_key(e)] = signal_to_json(s);
        refs["edges"] = json{{"signals", sigs}};
      }
      break;
    }
  }
  j["refs"] = refs;
  return j;
}

NetworkConfig network_from_json(const json& j) {
  const int n = require(j, "n", "network").get<int>();
  const std::string space_s = require(j, "space", "network").get<std::string>();
  if (space_s != "SOn" && space_s != "Rn")
    throw ConfigError("network.space: expected \"SOn\" or \"Rn\"");
  const Space space = space_s == "SOn" ? Space::SOn : Space::Rn;
  Graph graph = graph_from_json(require(j, "graph", "network"));
  const json& refs = require(j, "refs", "network");
  const std::string mode = require(refs, "mode", "network.refs").get<std::string>();

  if (mode == "explicit") {
    EdgeVectors vecs;
    for (const auto& [key, vj] : require(refs, "vectors", "network.refs").items())
      vecs[edge_from_key(key, graph.vertex_count())] =
          vector_from_json(vj, "network.refs.vectors." + key);
    return NetworkConfig(n, space, std::move(graph), std::move(vecs));
  }
  if (mode == "generic")
    return NetworkConfig::generic(n, space, std::move(graph),
                                  require(refs, "seed", "network.refs").get<std::uint64_t>());
  if (mode == "relative_position")
    return NetworkConfig::relative_position(
        n, space, std::move(graph), require(refs, "seed", "network.refs").get<std::uint64_t>());
  if (mode == "time_varying") {
    const int k = graph.vertex_count();
    if (refs.contains("anchors")) {
      const json& a = refs.at("anchors");
      if (a.contains("seed")) {
        TimeVaryingRefs tv = TimeVaryingRefs::random_anchors(k, n, a.at("seed").get<std::uint64_t>());
        return NetworkConfig(n, space, std::move(graph), std::move(tv));
      }
      std::vector<VectorSignal> sigs;
      for (const auto& sj : require(a, "signals", "network.refs.anchors"))
        sigs.push_back(signal_from_json(sj, "network.refs.anchors.signals"));
      return NetworkConfig(n, space, std::move(graph), TimeVaryingRefs::anchors(std::move(sigs)));
    }
    if (refs.contains("edges")) {
      const json& ed = refs.at("edges");
      if (ed.contains("seed")) {
        TimeVaryingRefs tv =
            TimeVaryingRefs::random_per_edge(graph, n, ed.at("seed").get<std::uint64_t>());
        return NetworkConfig(n, space, std::move(graph), std::move(tv));
      }
      std::map<Edge, VectorSignal> sigs;
      for (const auto& [key, sj] : require(ed, "signals", "network.refs.edges").items())
        sigs[edge_from_key(key, k)] = signal_from_json(sj, "network.refs.edges.signals");
      return NetworkConfig(n, space, std::move(graph), TimeVaryingRefs::per_edge(std::move(sigs)));
    }
    throw ConfigError("network.refs: time_varying needs 'anchors' or 'edges'");
  }
  throw ConfigError("network.refs.mode: unknown mode '" + mode + "'");
}

std::vector<Matrix> make_initial_states(const InitSpec& init, const NetworkConfig& net) {
  const int k = net.graph().vertex_count();
  const int n = net.dim();
  Rng rng = make_rng(init.seed);
  if (net.space() == Space::Rn) {
    switch (init.mode) {
      case InitSpec::Mode::Explicit:
        return init.states;
      case InitSpec::Mode::Consensus: {
        std::vector<Matrix> out(k, Matrix::Zero(n, 1));
        return out;
      }
      default:
        return random_vector_states(k, n, init.magnitude > 0 ? init.magnitude : 1.0, rng);
    }
  }
  switch (init.mode) {
    case InitSpec::Mode::Haar:
      return haar_states(k, n, rng);
    case InitSpec::Mode::NearConsensus:
      return near_consensus_states(k, n, init.magnitude, rng);
    case InitSpec::Mode::Consensus: {
      const Matrix common = random_rotation(n, rng).matrix();
      return std::vector<Matrix>(k, common);
    }
    case InitSpec::Mode::Explicit:
      if (static_cast<int>(init.states.size()) != k)
        throw ConfigError("init.states: need one state per agent");
      return init.states;
    case InitSpec::Mode::RandomBox:
      throw ConfigError("init.mode random_box applies to Rn configurations");
  }
  throw ConfigError("init.mode: unhandled mode");
}

namespace {

FlowKind flow_kind_from_string(const std::string& s) {
  if (s == "full") return FlowKind::FullState;
  if (s == "partial") return FlowKind::PartialState;
  if (s == "partial_tv") return FlowKind::PartialStateTV;
  if (s == "perturbed") return FlowKind::Perturbed;
  if (s == "rn") return FlowKind::RnPartial;
  throw ConfigError("flow.kind: expected full|partial|partial_tv|perturbed|rn, got '" + s + "'");
}

std::string flow_kind_to_string(FlowKind k) {
  switch (k) {
    case FlowKind::FullState: return "full";
    case FlowKind::PartialState: return "partial";
    case FlowKind::PartialStateTV: return "partial_tv";
    case FlowKind::Perturbed: return "perturbed";
    case FlowKind::RnPartial: return "rn";
  }
  return "partial";
}

}  // namespace

ScenarioConfig scenario_from_json(const json& j) {
  NetworkConfig net = network_from_json(require(j, "network", "scenario"));
  const json& fj = require(j, "flow", "scenario");
  FlowSpec flow;
  flow.kind = flow_kind_from_string(require(fj, "kind", "scenario.flow").get<std::string>());
  flow.epsilon = fj.value("epsilon", 1.0);
  flow.step = fj.value("step", 1e-2);
  flow.horizon = fj.value("horizon", 10.0);
  flow.record_every = fj.value("record_every", 10);
  flow.order = fj.value("order", 4);
  if (fj.contains("stop_gradient_norm"))
    flow.stop_gradient_norm = fj.at("stop_gradient_norm").get<double>();
  if (fj.contains("perturbations")) {
    const json& pj = fj.at("perturbations");
    const double eps = require(pj, "eps_err", "scenario.flow.perturbations").get<double>();
    if (pj.contains("entries")) {
      std::map<std::pair<int, int>, Rotation> entries;
      for (const auto& [key, mj] : pj.at("entries").items()) {
        const auto arrow = key.find("->");
        if (arrow == std::string::npos)
          throw ConfigError("perturbations.entries: keys look like \"i->j\"");
        const int a = std::stoi(key.substr(0, arrow)) - 1;
        const int b = std::stoi(key.substr(arrow + 2)) - 1;
        entries.emplace(std::make_pair(a, b),
                        Rotation::from_matrix(matrix_from_json(mj, "perturbations." + key)));
      }
      flow.perturbations = PerturbationSet(std::move(entries), eps);
    } else {
      flow.perturbations = PerturbationSet::sample(
          net.graph(), net.dim(), eps,
          require(pj, "seed", "scenario.flow.perturbations").get<std::uint64_t>());
    }
  }

  InitSpec init;
  if (j.contains("init")) {
    const json& ij = j.at("init");
    const std::string mode = ij.value("mode", "haar");
    if (mode == "haar") init.mode = InitSpec::Mode::Haar;
    else if (mode == "near_consensus") init.mode = InitSpec::Mode::NearConsensus;
    else if (mode == "consensus") init.mode = InitSpec::Mode::Consensus;
    else if (mode == "explicit") init.mode = InitSpec::Mode::Explicit;
    else if (mode == "random_box") init.mode = InitSpec::Mode::RandomBox;
    else throw ConfigError("init.mode: unknown mode '" + mode + "'");
    init.seed = ij.value("seed", 0);
    init.magnitude = ij.value("magnitude", 0.3);
    if (ij.contains("states"))
      for (const auto& sj : ij.at("states"))
        init.states.push_back(matrix_from_json(sj, "init.states"));
  }

  ScenarioConfig sc{std::move(net), std::move(flow), std::move(init),
                    j.value("name", std::string("scenario"))};
  sc.flow.validate(sc.network);
  return sc;
}

json scenario_to_json(const ScenarioConfig& sc) {
  json j;
  j["name"] = sc.out_name;
  j["network"] = network_to_json(sc.network);
  json fj;
  fj["kind"] = flow_kind_to_string(sc.flow.kind);
  fj["epsilon"] = sc.flow.epsilon;
  fj["step"] = sc.flow.step;
  fj["horizon"] = sc.flow.horizon;
  fj["record_every"] = sc.flow.record_every;
  fj["order"] = sc.flow.order;
  if (sc.flow.perturbations) {
    json entries;
    for (const auto& [key, rot] : sc.flow.perturbations->entries())
      entries[std::to_string(key.first + 1) + "->" + std::to_string(key.second + 1)] =
          matrix_to_json(rot.matrix());
    fj["perturbations"] = {{"eps_err", sc.flow.perturbations->bound()}, {"entries", entries}};
  }
  j["flow"] = fj;
  return j;
}

json load_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw ConfigError("JSON parse error in " + path.string() + ": " + e.what());
  }
  return j;
}

void write_json_file(const std::filesystem::path& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write file: " + path.string());
  out << j.dump(2) << '\n';
}

void write_gnuplot_script(const std::filesystem::path& csv_path,
                          const std::filesystem::path& script_path) {
  std::ofstream out(script_path);
  if (!out) throw ConfigError("cannot write file: " + script_path.string());
  out << "set datafile separator ','\n"
      << "set logscale y\n"
      << "set xlabel 't'\n"
      << "set key outside\n"
      << "plot '" << csv_path.filename().string() << "' using 1:2 with lines title 'f_s', \\\n"
      << "     '' using 1:3 with lines title 'f_o', \\\n"
      << "     '' using 1:4 with lines title 'f_oe'\n";
}

}  // namespace sosync
