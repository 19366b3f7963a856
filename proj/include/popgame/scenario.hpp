#pragma once

#include <array>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "popgame/dynamics.hpp"
#include "popgame/game.hpp"
#include "popgame/integrate.hpp"
#include "popgame/potential.hpp"
#include "popgame/random.hpp"
#include "popgame/types.hpp"

namespace popgame {

using nlohmann::json;

// How the imitation rule is to be built; gains may be pinned in the file or
// drawn from a seeded stream at build time.
struct RuleSpec {
  RuleKind kind = RuleKind::replicator;
  std::optional<Mat> gains;                         // explicit K
  std::optional<std::array<double, 2>> random_range;  // draw K ~ U(lo, hi]
  std::optional<std::uint64_t> gains_seed;          // inner seed for the draw
};

struct InitialSpec {
  std::optional<Configuration> point;
  std::optional<int> grid;  // barycentric grid resolution, for sweeps
};

// A fully validated experiment description. The game (with its potential
// attached) is constructed at parse time; the rule is built later, once the
// effective seed is known.
struct Scenario {
  explicit Scenario(Game g) : game(std::move(g)) {}

  std::string id;
  std::optional<std::uint64_t> seed;
  Game game;
  RuleSpec rule;
  InitialSpec initial;
  IntegratorConfig integrator;
  std::vector<std::string> outputs;        // defaults to trajectory-csv+summary
  std::map<std::string, bool> expect;      // verify-check name -> expected outcome
  std::string source;                      // file path or synthetic name
};

namespace detail {

[[noreturn]] inline void scenario_fail(const std::string& where,
                                       const std::string& what) {
  throw ValidationError("scenario " + where + ": " + what);
}

inline void reject_unknown_keys(const json& obj, const std::string& where,
                                std::initializer_list<const char*> allowed) {
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    bool ok = false;
    for (const char* a : allowed)
      if (it.key() == a) ok = true;
    if (!ok) scenario_fail(where, "unknown key '" + it.key() + "'");
  }
}

inline Mat parse_matrix(const json& j, const std::string& where) {
  if (!j.is_array() || j.empty() || !j[0].is_array())
    scenario_fail(where, "expected an array of numeric rows");
  const std::size_t rows = j.size(), cols = j[0].size();
  if (cols == 0) scenario_fail(where, "empty matrix row");
  Mat m(rows, cols);
  for (std::size_t r = 0; r < rows; ++r) {
    if (!j[r].is_array() || j[r].size() != cols)
      scenario_fail(where, "rows must all have length " + std::to_string(cols));
    for (std::size_t c = 0; c < cols; ++c) {
      if (!j[r][c].is_number())
        scenario_fail(where, "non-numeric entry");
      m(r, c) = j[r][c].get<double>();
    }
  }
  return m;
}

inline Vec parse_vector(const json& j, const std::string& where) {
  if (!j.is_array() || j.empty())
    scenario_fail(where, "expected a nonempty numeric array");
  Vec v(j.size());
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number()) scenario_fail(where, "non-numeric entry");
    v[i] = j[i].get<double>();
  }
  return v;
}

inline Game parse_game(const json& jg, const std::string& id) {
  if (!jg.is_object()) scenario_fail(id, "'game' must be an object");
  reject_unknown_keys(jg, id + ".game", {"family", "R", "A", "costs"});
  const std::string family = jg.value("family", "");
  if (family == "linear") {
    if (!jg.contains("R")) scenario_fail(id, "linear game needs 'R'");
    const Mat R = parse_matrix(jg["R"], id + ".game.R");
    if (R.rows() != R.cols()) scenario_fail(id, "'R' must be square");
    return Game::linear(R);
  }
  if (family == "congestion") {
    if (!jg.contains("A") || !jg.contains("costs"))
      scenario_fail(id, "congestion game needs 'A' and 'costs'");
    const Mat A = parse_matrix(jg["A"], id + ".game.A");
    const json& jc = jg["costs"];
    if (!jc.is_array() || jc.size() != static_cast<std::size_t>(A.rows()))
      scenario_fail(id, "'costs' must list one cost per row of 'A'");
    std::vector<CostFunction> costs;
    for (std::size_t k = 0; k < jc.size(); ++k) {
      const json& c = jc[k];
      const std::string where = id + ".game.costs[" + std::to_string(k) + "]";
      if (!c.is_object()) scenario_fail(where, "must be an object");
      const std::string kind = c.value("kind", "");
      if (kind == "affine") {
        reject_unknown_keys(c, where, {"kind", "slope", "intercept"});
        if (!c.contains("slope") || !c.contains("intercept"))
          scenario_fail(where, "affine cost needs 'slope' and 'intercept'");
        costs.push_back(affine_cost(c["slope"].get<double>(),
                                    c["intercept"].get<double>()));
      } else if (kind == "exp") {
        reject_unknown_keys(c, where, {"kind", "rate"});
        if (!c.contains("rate")) scenario_fail(where, "exp cost needs 'rate'");
        costs.push_back(exp_cost(c["rate"].get<double>()));
      } else if (kind == "custom") {
        scenario_fail(where,
                      "custom costs are code-level only and cannot be loaded "
                      "from a scenario file");
      } else {
        scenario_fail(where, "unknown cost kind '" + kind + "'");
      }
    }
    return Game::congestion(A, std::move(costs));
  }
  scenario_fail(id, "unknown game family '" + family + "'");
}

// Attaches the requested potential form, inferring a sensible one when the
// scenario does not say: congestion potential for congestion games, the
// closed binary form for 2x2 linear games, the quadratic coordination form
// for positive diagonal matrices, nothing otherwise.
inline void attach_potential(Game& game, const json& root,
                             const std::string& id) {
  std::string form = "(infer)";
  if (root.contains("potential")) {
    const json& jp = root["potential"];
    if (!jp.is_object()) scenario_fail(id, "'potential' must be an object");
    reject_unknown_keys(jp, id + ".potential", {"form"});
    form = jp.value("form", "");
  }
  const bool diag_linear = [&] {
    if (game.family() != GameFamily::linear) return false;
    const Mat& R = game.reward_matrix();
    for (Eigen::Index i = 0; i < R.rows(); ++i) {
      if (R(i, i) <= 0.0) return false;
      for (Eigen::Index j = 0; j < R.cols(); ++j)
        if (i != j && R(i, j) != 0.0) return false;
    }
    return true;
  }();

  if (form == "(infer)") {
    if (game.family() == GameFamily::congestion)
      form = "congestion";
    else if (diag_linear)
      form = "coordination";
    else if (game.family() == GameFamily::linear && game.num_actions() == 2)
      form = "binary";
    else
      form = "none";
  }

  if (form == "none") return;
  if (form == "binary") {
    if (game.family() != GameFamily::linear || game.num_actions() != 2)
      scenario_fail(id, "potential form 'binary' needs a 2x2 linear game");
    game.attach_potential(binary_potential(game.reward_matrix()));
  } else if (form == "coordination") {
    if (!diag_linear)
      scenario_fail(id,
                    "potential form 'coordination' needs a positive-diagonal "
                    "linear game");
    game.attach_potential(
        coordination_potential(game.reward_matrix().diagonal()));
  } else if (form == "congestion") {
    if (game.family() != GameFamily::congestion)
      scenario_fail(id, "potential form 'congestion' needs a congestion game");
    game.attach_potential(congestion_potential(game.incidence(), game.costs()));
  } else {
    scenario_fail(id, "unknown potential form '" + form + "'");
  }
}

inline RuleSpec parse_rule(const json& root, const Game& game,
                           const std::string& id) {
  if (!root.contains("rule")) scenario_fail(id, "'rule' is required");
  const json& jr = root["rule"];
  if (!jr.is_object()) scenario_fail(id, "'rule' must be an object");
  reject_unknown_keys(jr, id + ".rule", {"kind", "K"});
  RuleSpec spec;
  const std::string kind = jr.value("kind", "");
  if (kind == "replicator") {
    spec.kind = RuleKind::replicator;
    if (jr.contains("K"))
      scenario_fail(id, "replicator rule takes no gain matrix");
    return spec;
  }
  if (kind != "arctan") scenario_fail(id, "unknown rule kind '" + kind + "'");
  spec.kind = RuleKind::arctan;
  if (!jr.contains("K"))
    scenario_fail(id, "arctan rule needs 'K' (matrix or random_uniform spec)");
  const json& jk = jr["K"];
  if (jk.is_array()) {
    const Mat K = parse_matrix(jk, id + ".rule.K");
    if (K.rows() != game.num_actions() || K.cols() != game.num_actions())
      scenario_fail(id, "gain matrix must be m x m");
    if (!(K.array() > 0.0).all())
      scenario_fail(id, "gains must be positive");
    spec.gains = K;
  } else if (jk.is_object()) {
    reject_unknown_keys(jk, id + ".rule.K", {"random_uniform", "seed"});
    if (!jk.contains("random_uniform"))
      scenario_fail(id, "gain spec needs 'random_uniform': [lo, hi]");
    const json& jb = jk["random_uniform"];
    if (!jb.is_array() || jb.size() != 2 || !jb[0].is_number() ||
        !jb[1].is_number())
      scenario_fail(id, "'random_uniform' must be [lo, hi]");
    spec.random_range = {{jb[0].get<double>(), jb[1].get<double>()}};
    if (!((*spec.random_range)[0] >= 0.0 &&
          (*spec.random_range)[1] > (*spec.random_range)[0]))
      scenario_fail(id, "'random_uniform' needs 0 <= lo < hi");
    if (jk.contains("seed")) {
      if (!jk["seed"].is_number_unsigned())
        scenario_fail(id, "gain seed must be a nonnegative integer");
      spec.gains_seed = jk["seed"].get<std::uint64_t>();
    }
  } else {
    scenario_fail(id, "'K' must be a matrix or a random_uniform spec");
  }
  return spec;
}

inline IntegratorConfig parse_integrator(const json& root,
                                         const std::string& id) {
  IntegratorConfig cfg;
  if (!root.contains("integrator")) return cfg;
  const json& ji = root["integrator"];
  if (!ji.is_object()) scenario_fail(id, "'integrator' must be an object");
  reject_unknown_keys(ji, id + ".integrator",
                      {"method", "rtol", "atol", "step", "t_end", "observe_dt",
                       "projection_tol", "convergence_tol",
                       "convergence_window", "stop_at_rest", "rest_tol"});
  if (ji.contains("method")) {
    const std::string ms = ji["method"].get<std::string>();
    if (ms == "rk45-adaptive")
      cfg.method = Method::rk45_adaptive;
    else if (ms == "rk4-fixed")
      cfg.method = Method::rk4_fixed;
    else
      scenario_fail(id, "unknown integrator method '" + ms + "'");
  }
  auto num = [&](const char* key, double& slot, bool positive) {
    if (!ji.contains(key)) return;
    if (!ji[key].is_number()) scenario_fail(id, std::string(key) + " must be numeric");
    slot = ji[key].get<double>();
    if (positive && !(slot > 0.0))
      scenario_fail(id, std::string(key) + " must be positive");
  };
  num("rtol", cfg.rtol, true);
  num("atol", cfg.atol, true);
  num("step", cfg.step, true);
  num("t_end", cfg.t_end, true);
  num("observe_dt", cfg.observe_dt, true);
  num("projection_tol", cfg.projection_tol, true);
  num("convergence_tol", cfg.convergence_tol, true);
  num("convergence_window", cfg.convergence_window, true);
  num("rest_tol", cfg.rest_tol, true);
  if (ji.contains("stop_at_rest")) {
    if (!ji["stop_at_rest"].is_boolean())
      scenario_fail(id, "stop_at_rest must be boolean");
    cfg.stop_at_rest = ji["stop_at_rest"].get<bool>();
  }
  return cfg;
}

}  // namespace detail

// Parses and validates a scenario from JSON text. `name` is used in error
// messages (usually the file path).
inline Scenario parse_scenario(const std::string& text,
                               const std::string& name) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    // translate the byte offset into line/column for a usable message
    std::size_t line = 1, col = 1;
    for (std::size_t p = 0; p + 1 < e.byte && p < text.size(); ++p) {
      if (text[p] == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
    }
    throw ValidationError(name + ": JSON parse error at line " +
                          std::to_string(line) + ", column " +
                          std::to_string(col));
  }
  if (!root.is_object())
    detail::scenario_fail(name, "top level must be an object");
  detail::reject_unknown_keys(root, name,
                              {"id", "description", "seed", "game", "rule",
                               "potential", "initial", "integrator", "outputs",
                               "expect"});

  const std::string id = root.value("id", "");
  if (id.empty()) detail::scenario_fail(name, "'id' is required");
  for (char ch : id)
    if (!std::isalnum(static_cast<unsigned char>(ch)) && ch != '-' && ch != '_')
      detail::scenario_fail(name, "'id' may use letters, digits, '-', '_'");

  if (!root.contains("game")) detail::scenario_fail(id, "'game' is required");
  Game game = detail::parse_game(root["game"], id);
  detail::attach_potential(game, root, id);

  Scenario sc(std::move(game));
  sc.id = id;
  sc.source = name;
  if (root.contains("seed")) {
    if (!root["seed"].is_number_unsigned())
      detail::scenario_fail(id, "'seed' must be a nonnegative integer");
    sc.seed = root["seed"].get<std::uint64_t>();
  }
  sc.rule = detail::parse_rule(root, sc.game, id);
  sc.integrator = detail::parse_integrator(root, id);

  if (root.contains("initial")) {
    const json& ji = root["initial"];
    if (ji.is_array()) {
      const Vec v = detail::parse_vector(ji, id + ".initial");
      if (v.size() != sc.game.num_actions())
        detail::scenario_fail(id, "'initial' must have one share per action");
      try {
        sc.initial.point = Configuration(v);
      } catch (const ValidationError& e) {
        detail::scenario_fail(id, std::string("bad initial condition: ") + e.what());
      }
    } else if (ji.is_object()) {
      detail::reject_unknown_keys(ji, id + ".initial", {"grid"});
      if (!ji.contains("grid") || !ji["grid"].is_number_integer())
        detail::scenario_fail(id, "'initial' object needs integer 'grid'");
      sc.initial.grid = ji["grid"].get<int>();
      if (sc.initial.grid.value() < 2)
        detail::scenario_fail(id, "'grid' must be at least 2");
    } else {
      detail::scenario_fail(id, "'initial' must be an array or {\"grid\": n}");
    }
  }

  if (root.contains("outputs")) {
    if (!root["outputs"].is_array())
      detail::scenario_fail(id, "'outputs' must be an array");
    for (const auto& o : root["outputs"]) {
      const std::string s = o.get<std::string>();
      if (s != "trajectory-csv" && s != "summary" && s != "equilibria-table" &&
          s != "basin-map")
        detail::scenario_fail(id, "unknown output '" + s + "'");
      sc.outputs.push_back(s);
    }
  }
  if (sc.outputs.empty()) sc.outputs = {"trajectory-csv", "summary"};

  if (root.contains("expect")) {
    const json& je = root["expect"];
    if (!je.is_object()) detail::scenario_fail(id, "'expect' must be an object");
    for (auto it = je.begin(); it != je.end(); ++it) {
      if (!it.value().is_boolean())
        detail::scenario_fail(id, "'expect' values must be booleans");
      sc.expect[it.key()] = it.value().get<bool>();
    }
  }
  return sc;
}

inline Scenario load_scenario(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open scenario file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) throw IoError("error reading scenario file: " + path);
  return parse_scenario(ss.str(), path);
}

// Builds the imitation rule, resolving randomly drawn gains against the
// effective seed: an inner gains seed wins, otherwise a sub-stream of the
// scenario/CLI seed is used; with neither, random gains are an error.
inline ImitationRule build_rule(const Scenario& sc,
                                std::optional<std::uint64_t> effective_seed) {
  if (sc.rule.kind == RuleKind::replicator) return replicator_rule(sc.game);
  if (sc.rule.gains) return arctan_rule(sc.game, *sc.rule.gains);
  std::optional<std::uint64_t> seed = sc.rule.gains_seed;
  if (!seed && effective_seed) seed = sub_seed(*effective_seed, /*tag=*/1);
  if (!seed)
    throw ValidationError("scenario " + sc.id +
                          ": random gains requested but no seed given "
                          "(set rule.K.seed, scenario seed, or --seed)");
  const auto& range = *sc.rule.random_range;
  return arctan_rule(sc.game, *seed, range[0], range[1]);
}

}  // namespace popgame
