#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "regpoison/attack.hpp"
#include "regpoison/baselines.hpp"
#include "regpoison/data_io.hpp"
#include "regpoison/fit.hpp"
#include "regpoison/statp.hpp"
#include "regpoison/trim.hpp"
#include "regpoison/types.hpp"

namespace regpoison {

// ---------------------------------------------------------------------------
// Configuration (INI-style: [section] headers, key = value lines, # comments)
// ---------------------------------------------------------------------------

struct DataConfig {
  std::string source = "synth";  // synth | csv
  Index n = 300;                 // synth rows
  Index d = 5;
  double noise_sigma = 0.05;
  std::string train_csv;
  std::string schema;  // "name:num|cat|response|ignore, ..."
  std::string split = "thirds";  // thirds | none
  int runs = 1;
};

struct AttackSection {
  std::string kind = "optp";  // optp | statp | none
  PoisonInit init = PoisonInit::BFlip;
  OptimVars variables = OptimVars::XAndY;
  AttackObjective objective = AttackObjective::WTrain;
  double alpha = 0.2;
  LineSearchParams line_search;
  bool frozen_theta = false;
};

struct DefenseSection {
  std::string kind = "trim";  // trim | huber | ransac | roni | none
  double alpha = 0.2;         // assumed contamination, sets the trim size
                              // round(N/(1+alpha)) and the ransac budget
  int trim_restarts = 20;
  Index roni_validation_size = 50;  // clamped to n-1 at use
  int roni_trials = 5;
  double roni_tolerance = 1e-9;
  int ransac_trials = 100;
};

struct SweepSection {
  std::vector<double> rates = {0.04, 0.08, 0.12, 0.16, 0.20};
  int runs = 5;
  std::vector<std::string> attacks;   // empty: use [attack] kind
  std::vector<std::string> defenses;  // empty: use [defense] kind
};

struct TransferSection {
  std::string mode = "disjoint";  // disjoint | same
  std::string victim_rows;        // optional "lo:hi" row range
  std::string substitute_rows;
};

struct HarnessConfig {
  std::uint64_t seed = 1;
  DataConfig data;
  ModelSpec model;
  SweepSection sweep;
  AttackSection attack;
  DefenseSection defense;
  TransferSection transfer;
};

namespace detail {

inline double parse_double(const std::string& value, const std::string& path) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(value, &pos);
    if (pos != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw ConfigError(path + " must be a number: got '" + value + "'");
  }
}

inline long long parse_int(const std::string& value, const std::string& path) {
  try {
    std::size_t pos = 0;
    const long long v = std::stoll(value, &pos);
    if (pos != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw ConfigError(path + " must be an integer: got '" + value + "'");
  }
}

inline bool parse_bool(const std::string& value, const std::string& path) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  throw ConfigError(path + " must be true or false: got '" + value + "'");
}

inline std::vector<std::string> parse_list(const std::string& value) {
  std::vector<std::string> out;
  std::string item;
  std::stringstream ss(value);
  while (std::getline(ss, item, ',')) {
    item = trim_ws(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

}  // namespace detail

inline std::vector<ColumnSchema> parse_schema(const std::string& text) {
  std::vector<ColumnSchema> schema;
  for (const std::string& entry : detail::parse_list(text)) {
    const auto colon = entry.find(':');
    if (colon == std::string::npos || colon == 0 ||
        colon == entry.size() - 1) {
      throw ConfigError("data.schema: bad entry '" + entry +
                        "' (want name:role)");
    }
    ColumnSchema col;
    col.name = detail::trim_ws(entry.substr(0, colon));
    const std::string role = detail::trim_ws(entry.substr(colon + 1));
    if (role == "num") {
      col.role = ColumnRole::NumericFeature;
    } else if (role == "cat") {
      col.role = ColumnRole::CategoricalFeature;
    } else if (role == "response") {
      col.role = ColumnRole::Response;
    } else if (role == "ignore") {
      col.role = ColumnRole::Ignore;
    } else {
      throw ConfigError("data.schema: unknown role '" + role + "' for '" +
                        col.name + "'");
    }
    schema.push_back(std::move(col));
  }
  if (schema.empty()) throw ConfigError("data.schema: no columns");
  return schema;
}

// Parses the INI text into a config, rejecting unknown sections/keys and
// out-of-range values with messages that name the offending field.
inline HarnessConfig parse_config(const std::string& text) {
  HarnessConfig cfg;
  std::string section;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  std::map<std::string, bool> seen;

  while (std::getline(in, line)) {
    ++lineno;
    line = detail::trim_ws(line);
    if (line.empty() || line[0] == '#' || line[0] == ';') continue;
    if (line.front() == '[') {
      if (line.back() != ']' || line.size() < 3) {
        throw ConfigError("config line " + std::to_string(lineno) +
                          ": malformed section header");
      }
      section = line.substr(1, line.size() - 2);
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(lineno) +
                        ": expected key = value");
    }
    const std::string key = detail::trim_ws(line.substr(0, eq));
    const std::string value = detail::trim_ws(line.substr(eq + 1));
    const std::string path = section.empty() ? key : section + "." + key;
    if (key.empty()) {
      throw ConfigError("config line " + std::to_string(lineno) +
                        ": empty key");
    }
    if (seen.count(path)) {
      throw ConfigError("duplicate config key '" + path + "'");
    }
    seen[path] = true;

    if (path == "seed") {
      cfg.seed = static_cast<std::uint64_t>(detail::parse_int(value, path));
    } else if (path == "data.source") {
      if (value != "synth" && value != "csv") {
        throw ConfigError("data.source must be synth or csv: got '" + value +
                          "'");
      }
      cfg.data.source = value;
    } else if (path == "data.n") {
      cfg.data.n = static_cast<Index>(detail::parse_int(value, path));
    } else if (path == "data.d") {
      cfg.data.d = static_cast<Index>(detail::parse_int(value, path));
    } else if (path == "data.noise_sigma") {
      cfg.data.noise_sigma = detail::parse_double(value, path);
    } else if (path == "data.train_csv") {
      cfg.data.train_csv = value;
    } else if (path == "data.schema") {
      cfg.data.schema = value;
    } else if (path == "data.split") {
      if (value != "thirds" && value != "none") {
        throw ConfigError("data.split must be thirds or none: got '" + value +
                          "'");
      }
      cfg.data.split = value;
    } else if (path == "data.runs") {
      cfg.data.runs = static_cast<int>(detail::parse_int(value, path));
    } else if (path == "model.kind") {
      if (value == "ols") {
        cfg.model.kind = PenaltyKind::Ols;
      } else if (value == "ridge") {
        cfg.model.kind = PenaltyKind::Ridge;
      } else if (value == "lasso") {
        cfg.model.kind = PenaltyKind::Lasso;
      } else if (value == "elasticnet") {
        cfg.model.kind = PenaltyKind::ElasticNet;
      } else {
        throw ConfigError(
            "model.kind must be one of ols|ridge|lasso|elasticnet: got '" +
            value + "'");
      }
    } else if (path == "model.lambda") {
      cfg.model.lambda = detail::parse_double(value, path);
    } else if (path == "model.rho") {
      cfg.model.rho = detail::parse_double(value, path);
    } else if (path == "attack.kind") {
      if (value != "optp" && value != "statp" && value != "none") {
        throw ConfigError("attack.kind must be one of optp|statp|none: got '" +
                          value + "'");
      }
      cfg.attack.kind = value;
    } else if (path == "attack.init") {
      if (value == "invflip") {
        cfg.attack.init = PoisonInit::InvFlip;
      } else if (value == "bflip") {
        cfg.attack.init = PoisonInit::BFlip;
      } else {
        throw ConfigError("attack.init must be invflip or bflip: got '" +
                          value + "'");
      }
    } else if (path == "attack.variables") {
      if (value == "x") {
        cfg.attack.variables = OptimVars::XOnly;
      } else if (value == "xy") {
        cfg.attack.variables = OptimVars::XAndY;
      } else {
        throw ConfigError("attack.variables must be x or xy: got '" + value +
                          "'");
      }
    } else if (path == "attack.objective") {
      if (value == "wtr") {
        cfg.attack.objective = AttackObjective::WTrain;
      } else if (value == "wval") {
        cfg.attack.objective = AttackObjective::WVal;
      } else if (value == "wtrprime") {
        cfg.attack.objective = AttackObjective::WTrainPrime;
      } else {
        throw ConfigError(
            "attack.objective must be one of wtr|wval|wtrprime: got '" +
            value + "'");
      }
    } else if (path == "attack.alpha") {
      cfg.attack.alpha = detail::parse_double(value, path);
    } else if (path == "attack.eta") {
      cfg.attack.line_search.eta = detail::parse_double(value, path);
    } else if (path == "attack.beta") {
      cfg.attack.line_search.beta = detail::parse_double(value, path);
    } else if (path == "attack.eps") {
      cfg.attack.line_search.eps = detail::parse_double(value, path);
    } else if (path == "attack.max_iters") {
      cfg.attack.line_search.max_outer_iters =
          static_cast<int>(detail::parse_int(value, path));
    } else if (path == "attack.budget") {
      cfg.attack.line_search.budget =
          static_cast<int>(detail::parse_int(value, path));
    } else if (path == "attack.frozen_theta") {
      cfg.attack.frozen_theta = detail::parse_bool(value, path);
    } else if (path == "defense.kind") {
      if (value != "trim" && value != "huber" && value != "ransac" &&
          value != "roni" && value != "none") {
        throw ConfigError(
            "defense.kind must be one of trim|huber|ransac|roni|none: got '" +
            value + "'");
      }
      cfg.defense.kind = value;
    } else if (path == "defense.alpha") {
      cfg.defense.alpha = detail::parse_double(value, path);
    } else if (path == "defense.trim_restarts") {
      cfg.defense.trim_restarts =
          static_cast<int>(detail::parse_int(value, path));
    } else if (path == "defense.roni_validation_size") {
      cfg.defense.roni_validation_size =
          static_cast<Index>(detail::parse_int(value, path));
    } else if (path == "defense.roni_trials") {
      cfg.defense.roni_trials =
          static_cast<int>(detail::parse_int(value, path));
    } else if (path == "defense.roni_tolerance") {
      cfg.defense.roni_tolerance = detail::parse_double(value, path);
    } else if (path == "defense.ransac_trials") {
      cfg.defense.ransac_trials =
          static_cast<int>(detail::parse_int(value, path));
    } else if (path == "sweep.rates") {
      cfg.sweep.rates.clear();
      for (const std::string& r : detail::parse_list(value)) {
        cfg.sweep.rates.push_back(detail::parse_double(r, "sweep.rates"));
      }
      if (cfg.sweep.rates.empty()) {
        throw ConfigError("sweep.rates must list at least one rate");
      }
    } else if (path == "sweep.runs") {
      cfg.sweep.runs = static_cast<int>(detail::parse_int(value, path));
    } else if (path == "sweep.attacks") {
      cfg.sweep.attacks = detail::parse_list(value);
    } else if (path == "sweep.defenses") {
      cfg.sweep.defenses = detail::parse_list(value);
    } else if (path == "transfer.mode") {
      if (value != "disjoint" && value != "same") {
        throw ConfigError("transfer.mode must be disjoint or same: got '" +
                          value + "'");
      }
      cfg.transfer.mode = value;
    } else if (path == "transfer.victim_rows") {
      cfg.transfer.victim_rows = value;
    } else if (path == "transfer.substitute_rows") {
      cfg.transfer.substitute_rows = value;
    } else {
      throw ConfigError("unknown config key '" + path + "'");
    }
  }

  // Cross-field checks; the library revalidates, these fail earlier and
  // name the config field.
  if (cfg.model.kind == PenaltyKind::Ols) cfg.model.lambda = 0.0;
  validate(cfg.model);
  if (cfg.data.source == "csv") {
    if (cfg.data.train_csv.empty()) {
      throw ConfigError("data.train_csv is required when data.source = csv");
    }
    if (cfg.data.schema.empty()) {
      throw ConfigError("data.schema is required when data.source = csv");
    }
    parse_schema(cfg.data.schema);
  } else {
    if (cfg.data.d < 1) throw ConfigError("data.d must be >= 1");
    if (cfg.data.n < cfg.data.d + 2) {
      throw ConfigError("data.n must be >= d+2");
    }
    if (!(cfg.data.noise_sigma >= 0.0)) {
      throw ConfigError("data.noise_sigma must be >= 0");
    }
  }
  if (cfg.data.runs < 1) throw ConfigError("data.runs must be >= 1");
  if (cfg.attack.kind != "none" &&
      !(cfg.attack.alpha > 0.0 && cfg.attack.alpha < 1.0)) {
    throw ConfigError("attack.alpha must lie in (0,1): got " +
                      std::to_string(cfg.attack.alpha));
  }
  // alpha = 0 means "assume no contamination": trim keeps everything.
  if (!(cfg.defense.alpha >= 0.0 && cfg.defense.alpha < 1.0)) {
    throw ConfigError("defense.alpha must lie in [0,1): got " +
                      std::to_string(cfg.defense.alpha));
  }
  if (cfg.defense.trim_restarts < 1) {
    throw ConfigError("defense.trim_restarts must be >= 1");
  }
  if (cfg.sweep.runs < 1) throw ConfigError("sweep.runs must be >= 1");
  for (double r : cfg.sweep.rates) {
    if (!(r > 0.0 && r < 1.0)) {
      throw ConfigError("sweep.rates entries must lie in (0,1): got " +
                        std::to_string(r));
    }
  }
  for (const std::string& a : cfg.sweep.attacks) {
    if (a != "optp" && a != "statp" && a != "none") {
      throw ConfigError("sweep.attacks entries must be optp|statp|none: got '" +
                        a + "'");
    }
  }
  for (const std::string& d : cfg.sweep.defenses) {
    if (d != "trim" && d != "huber" && d != "ransac" && d != "roni" &&
        d != "none") {
      throw ConfigError(
          "sweep.defenses entries must be trim|huber|ransac|roni|none: got '" +
          d + "'");
    }
  }
  return cfg;
}

inline HarnessConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str());
}

inline nlohmann::json config_to_json(const HarnessConfig& cfg) {
  nlohmann::json j;
  j["seed"] = cfg.seed;
  j["data"] = {{"source", cfg.data.source},
               {"n", cfg.data.n},
               {"d", cfg.data.d},
               {"noise_sigma", cfg.data.noise_sigma},
               {"train_csv", cfg.data.train_csv},
               {"schema", cfg.data.schema},
               {"split", cfg.data.split},
               {"runs", cfg.data.runs}};
  j["model"] = {{"kind", penalty_name(cfg.model.kind)},
                {"lambda", cfg.model.lambda},
                {"rho", cfg.model.rho}};
  j["attack"] = {{"kind", cfg.attack.kind},
                 {"init", init_name(cfg.attack.init)},
                 {"variables", vars_name(cfg.attack.variables)},
                 {"objective", objective_name(cfg.attack.objective)},
                 {"alpha", cfg.attack.alpha},
                 {"eta", cfg.attack.line_search.eta},
                 {"beta", cfg.attack.line_search.beta},
                 {"eps", cfg.attack.line_search.eps},
                 {"max_iters", cfg.attack.line_search.max_outer_iters},
                 {"budget", cfg.attack.line_search.budget},
                 {"frozen_theta", cfg.attack.frozen_theta}};
  j["defense"] = {{"kind", cfg.defense.kind},
                  {"alpha", cfg.defense.alpha},
                  {"trim_restarts", cfg.defense.trim_restarts},
                  {"roni_validation_size", cfg.defense.roni_validation_size},
                  {"roni_trials", cfg.defense.roni_trials},
                  {"roni_tolerance", cfg.defense.roni_tolerance},
                  {"ransac_trials", cfg.defense.ransac_trials}};
  j["sweep"] = {{"rates", cfg.sweep.rates},
                {"runs", cfg.sweep.runs},
                {"attacks", cfg.sweep.attacks},
                {"defenses", cfg.sweep.defenses}};
  j["transfer"] = {{"mode", cfg.transfer.mode},
                   {"victim_rows", cfg.transfer.victim_rows},
                   {"substitute_rows", cfg.transfer.substitute_rows}};
  return j;
}

// ---------------------------------------------------------------------------
// Experiment runner
// ---------------------------------------------------------------------------

struct RunData {
  Dataset train;
  Dataset test;
  Dataset val;
  std::optional<TransformRecord> transform;
  std::vector<std::string> feature_names;
};

inline Dataset load_dataset(const DataConfig& data, std::uint64_t seed,
                            std::optional<TransformRecord>* transform,
                            std::vector<std::string>* feature_names) {
  if (data.source == "synth") {
    SynthResult s = synth_linear(data.n, data.d, data.noise_sigma,
                                 mix_seed(seed, 0x5EEDDA7AULL));
    if (feature_names) *feature_names = default_feature_names(data.d);
    return s.data;
  }
  RawTable raw = load_csv(data.train_csv, parse_schema(data.schema));
  PreprocessResult pre = preprocess(raw);
  if (transform) *transform = pre.transform;
  if (feature_names) *feature_names = pre.feature_names;
  return pre.data;
}

// The dataset is fixed per experiment; run_index only moves the split
// permutation, mirroring repeated randomized evaluation.
inline RunData make_run_data(const HarnessConfig& cfg, int run_index,
                             int total_runs) {
  RunData rd;
  Dataset all =
      load_dataset(cfg.data, cfg.seed, &rd.transform, &rd.feature_names);
  if (cfg.data.split == "none") {
    rd.train = all;
    rd.test = all;
    rd.val = all;
    return rd;
  }
  SplitSpec spec;
  spec.runs = std::max(total_runs, run_index + 1);
  spec.seed = mix_seed(cfg.seed, 0x5917B0B5ULL);
  SplitResult parts = split(all, spec, run_index);
  rd.train = std::move(parts.train);
  rd.test = std::move(parts.test);
  rd.val = std::move(parts.val);
  return rd;
}

struct RunRecord {
  int run_index = 0;
  double poisoning_rate = 0.0;
  std::string attack;
  std::string defense;
  double clean_mse = 0.0;
  double poisoned_mse = 0.0;
  double defended_mse = 0.0;
  double attack_seconds = 0.0;
  double defense_seconds = 0.0;
  bool ok = true;
  std::string error;
  nlohmann::json detail;  // grids, traces, sizes
};

namespace detail {

inline double seconds_since(
    const std::chrono::steady_clock::time_point& start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                       start)
      .count();
}

inline std::uint64_t cell_seed(std::uint64_t base, double rate, int run) {
  const auto rate_key =
      static_cast<std::uint64_t>(std::llround(rate * 1e6));
  return mix_seed(mix_seed(base, rate_key), static_cast<std::uint64_t>(run));
}

struct DefenseOutcome {
  Theta theta;
  nlohmann::json detail;
};

inline DefenseOutcome apply_defense(const std::string& kind,
                                    const Dataset& poisoned,
                                    const Dataset& test,
                                    const ModelSpec& spec,
                                    const DefenseSection& defense,
                                    std::uint64_t seed) {
  DefenseOutcome out;
  const Index N = poisoned.n();
  const Index keep = static_cast<Index>(
      std::llround(static_cast<double>(N) / (1.0 + defense.alpha)));

  if (kind == "none") {
    out.theta = fit(poisoned, spec);
    out.detail = nlohmann::json::object();
    return out;
  }
  if (kind == "trim") {
    TrimResult trim =
        trim_fit(poisoned, spec, keep, defense.trim_restarts, seed);
    out.theta = trim.theta;
    out.detail = {{"kept", keep},
                  {"trimmed_loss", trim.loss},
                  {"iterations", trim.iterations},
                  {"failed_restarts", trim.failed_restarts}};
    return out;
  }
  if (kind == "huber") {
    nlohmann::json grid = nlohmann::json::array();
    bool found = false;
    double best_mse = 0.0;
    for (double eps : huber_epsilon_grid()) {
      HuberParams params;
      params.epsilon = eps;
      try {
        HuberResult h = huber_fit(poisoned, spec, params);
        const double m = mse(test, h.theta);
        grid.push_back({{"epsilon", eps}, {"test_mse", m}});
        if (!found || m < best_mse) {
          found = true;
          best_mse = m;
          out.theta = h.theta;
          out.detail = {{"epsilon", eps}};
        }
      } catch (const Error& e) {
        grid.push_back({{"epsilon", eps}, {"error", e.what()}});
      }
    }
    if (!found) {
      throw NumericalError("huber: every epsilon in the grid failed");
    }
    out.detail["grid"] = grid;
    return out;
  }
  if (kind == "ransac") {
    nlohmann::json grid = nlohmann::json::array();
    bool found = false;
    double best_mse = 0.0;
    for (Index size : ransac_size_grid(N)) {
      RansacParams params;
      params.initial_sample_size = size;
      params.max_trials = defense.ransac_trials;
      params.poison_budget = std::max<Index>(1, N - keep);
      try {
        RansacResult r = ransac_fit(poisoned, spec, params, seed);
        const double m = mse(test, r.theta);
        grid.push_back({{"sample_size", size},
                        {"test_mse", m},
                        {"inliers", static_cast<Index>(r.inliers.size())}});
        if (!found || m < best_mse) {
          found = true;
          best_mse = m;
          out.theta = r.theta;
          out.detail = {{"sample_size", size}};
        }
      } catch (const Error& e) {
        grid.push_back({{"sample_size", size}, {"error", e.what()}});
      }
    }
    if (!found) {
      throw NumericalError("ransac: every sample size in the grid failed");
    }
    out.detail["grid"] = grid;
    return out;
  }
  if (kind == "roni") {
    RoniParams params;
    params.validation_size =
        std::min(defense.roni_validation_size, poisoned.n() - 1);
    params.trials = defense.roni_trials;
    params.tolerance = defense.roni_tolerance;
    RoniResult r = roni_fit(poisoned, spec, params, seed);
    out.theta = r.theta;
    out.detail = {{"accepted", static_cast<Index>(r.accepted.size())},
                  {"rejected", static_cast<Index>(r.rejected.size())}};
    return out;
  }
  throw ConfigError("defense.kind '" + kind + "' is not recognized");
}

}  // namespace detail

struct RunOutput {
  RunRecord record;
  PoisonSet poison;
};

// One experiment cell: split, attack at `rate`, retrain, defend, measure.
// All reported MSEs are on the held-out test block.
inline RunOutput execute_run(const HarnessConfig& cfg,
                             const std::string& attack_kind,
                             const std::string& defense_kind, double rate,
                             int run_index, int total_runs) {
  RunOutput out;
  RunRecord& rec = out.record;
  rec.run_index = run_index;
  rec.poisoning_rate = rate;
  rec.attack = attack_kind;
  rec.defense = defense_kind;

  RunData rd = make_run_data(cfg, run_index, total_runs);
  const std::uint64_t seed = detail::cell_seed(cfg.seed, rate, run_index);
  const Theta clean_theta = fit(rd.train, cfg.model);
  rec.clean_mse = mse(rd.test, clean_theta);

  auto start = std::chrono::steady_clock::now();
  if (attack_kind == "optp") {
    AttackConfig acfg;
    acfg.alpha = rate;
    acfg.init = cfg.attack.init;
    acfg.variables = cfg.attack.variables;
    acfg.objective = cfg.attack.objective;
    acfg.line_search = cfg.attack.line_search;
    acfg.frozen_theta = cfg.attack.frozen_theta;
    acfg.seed = seed;
    AttackResult res = run_attack(rd.train, rd.val, cfg.model, acfg);
    out.poison = std::move(res.poison);
    rec.detail["attack"] = {{"outer_iterations", res.outer_iterations},
                            {"converged", res.converged}};
  } else if (attack_kind == "statp") {
    out.poison = run_statp(rd.train, clean_theta, rate, seed);
  } else if (attack_kind == "none") {
    out.poison.points.X.resize(0, rd.train.d());
    out.poison.points.y.resize(0);
  } else {
    throw ConfigError("attack.kind '" + attack_kind + "' is not recognized");
  }
  rec.attack_seconds = detail::seconds_since(start);

  const Dataset poisoned = concat(rd.train, out.poison.points);
  const Theta poisoned_theta = fit(poisoned, cfg.model);
  rec.poisoned_mse = mse(rd.test, poisoned_theta);

  start = std::chrono::steady_clock::now();
  detail::DefenseOutcome defended = detail::apply_defense(
      defense_kind, poisoned, rd.test, cfg.model, cfg.defense, seed);
  rec.defense_seconds = detail::seconds_since(start);
  rec.defended_mse = mse(rd.test, defended.theta);
  if (!defended.detail.empty()) rec.detail["defense"] = defended.detail;
  return out;
}

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

inline nlohmann::json record_to_json(const RunRecord& rec) {
  nlohmann::json j;
  j["run_index"] = rec.run_index;
  j["poisoning_rate"] = rec.poisoning_rate;
  j["attack"] = rec.attack;
  j["defense"] = rec.defense;
  j["status"] = rec.ok ? "ok" : "error";
  if (rec.ok) {
    j["clean_mse"] = rec.clean_mse;
    j["poisoned_mse"] = rec.poisoned_mse;
    j["defended_mse"] = rec.defended_mse;
    j["attack_seconds"] = rec.attack_seconds;
    j["defense_seconds"] = rec.defense_seconds;
    if (!rec.detail.empty()) j["detail"] = rec.detail;
  } else {
    j["error"] = rec.error;
  }
  return j;
}

inline nlohmann::json aggregate_records(const std::vector<RunRecord>& records) {
  // Group by (rate, attack, defense); mean over the successful runs.
  std::map<std::tuple<double, std::string, std::string>,
           std::vector<const RunRecord*>>
      groups;
  for (const RunRecord& r : records) {
    if (r.ok) {
      groups[{r.poisoning_rate, r.attack, r.defense}].push_back(&r);
    }
  }
  nlohmann::json out = nlohmann::json::array();
  for (const auto& [key, rows] : groups) {
    const double k = static_cast<double>(rows.size());
    double clean = 0.0, poisoned = 0.0, defended = 0.0, at = 0.0, dt = 0.0;
    for (const RunRecord* r : rows) {
      clean += r->clean_mse;
      poisoned += r->poisoned_mse;
      defended += r->defended_mse;
      at += r->attack_seconds;
      dt += r->defense_seconds;
    }
    out.push_back({{"poisoning_rate", std::get<0>(key)},
                   {"attack", std::get<1>(key)},
                   {"defense", std::get<2>(key)},
                   {"runs", rows.size()},
                   {"clean_mse", clean / k},
                   {"poisoned_mse", poisoned / k},
                   {"defended_mse", defended / k},
                   {"attack_seconds", at / k},
                   {"defense_seconds", dt / k}});
  }
  return out;
}

namespace detail {

inline void write_file(const std::filesystem::path& path,
                       const std::string& content) {
  std::ofstream out(path);
  if (!out) {
    throw DataError("cannot open '" + path.string() + "' for write");
  }
  out << content;
  if (!out) throw DataError("write to '" + path.string() + "' failed");
}

inline nlohmann::json base_report(const HarnessConfig& cfg,
                                  const std::string& command) {
  nlohmann::json j;
  j["schema_version"] = 1;
  j["command"] = command;
  j["config"] = config_to_json(cfg);
  return j;
}

inline void write_report(const std::filesystem::path& out_dir,
                         const nlohmann::json& report) {
  std::filesystem::create_directories(out_dir);
  write_file(out_dir / "report.json", report.dump(2) + "\n");
}

}  // namespace detail

struct CliOptions {
  std::string out_dir = "out";
  int parallel = 1;
};

// ---------------------------------------------------------------------------
// Subcommands
// ---------------------------------------------------------------------------

// Crafts poison for each run and writes poison_run<k>.csv plus report.json.
inline nlohmann::json cmd_attack(const HarnessConfig& cfg,
                                 const CliOptions& opt) {
  std::filesystem::create_directories(opt.out_dir);
  std::vector<RunRecord> records;
  for (int run = 0; run < cfg.data.runs; ++run) {
    RunOutput out = execute_run(cfg, cfg.attack.kind, "none",
                                cfg.attack.alpha, run, cfg.data.runs);
    std::vector<std::string> names =
        out.poison.points.d() > 0
            ? default_feature_names(out.poison.points.d())
            : std::vector<std::string>{};
    if (out.poison.points.n() > 0) {
      write_csv(std::filesystem::path(opt.out_dir) /
                    ("poison_run" + std::to_string(run) + ".csv"),
                out.poison.points, names);
    }
    records.push_back(std::move(out.record));
  }
  nlohmann::json report = detail::base_report(cfg, "attack");
  report["runs"] = nlohmann::json::array();
  for (const RunRecord& r : records) report["runs"].push_back(record_to_json(r));
  report["aggregates"] = aggregate_records(records);
  detail::write_report(opt.out_dir, report);
  return report;
}

// Attacks (per config) and defends each run; writes report.json.
inline nlohmann::json cmd_defend(const HarnessConfig& cfg,
                                 const CliOptions& opt) {
  std::vector<RunRecord> records;
  for (int run = 0; run < cfg.data.runs; ++run) {
    RunOutput out = execute_run(cfg, cfg.attack.kind, cfg.defense.kind,
                                cfg.attack.alpha, run, cfg.data.runs);
    records.push_back(std::move(out.record));
  }
  nlohmann::json report = detail::base_report(cfg, "defend");
  report["runs"] = nlohmann::json::array();
  for (const RunRecord& r : records) report["runs"].push_back(record_to_json(r));
  report["aggregates"] = aggregate_records(records);
  detail::write_report(opt.out_dir, report);
  return report;
}

// Full rate x run x attack x defense grid; failures are recorded per cell
// and the sweep continues. Cells run in parallel when opt.parallel > 1;
// seeds derive from (seed, rate, run) so the schedule cannot change results.
inline nlohmann::json cmd_sweep(const HarnessConfig& cfg,
                                const CliOptions& opt) {
  std::vector<std::string> attacks = cfg.sweep.attacks;
  if (attacks.empty()) attacks.push_back(cfg.attack.kind);
  std::vector<std::string> defenses = cfg.sweep.defenses;
  if (defenses.empty()) defenses.push_back(cfg.defense.kind);

  struct Cell {
    double rate;
    int run;
    std::string attack;
    std::string defense;
  };
  std::vector<Cell> cells;
  for (double rate : cfg.sweep.rates) {
    for (int run = 0; run < cfg.sweep.runs; ++run) {
      for (const std::string& a : attacks) {
        for (const std::string& d : defenses) {
          cells.push_back({rate, run, a, d});
        }
      }
    }
  }

  std::vector<RunRecord> records(cells.size());
  std::atomic<std::size_t> next{0};
  const int workers = std::max(1, std::min<int>(opt.parallel,
                                                static_cast<int>(cells.size())));
  const auto work = [&]() {
    while (true) {
      const std::size_t i = next.fetch_add(1);
      if (i >= cells.size()) return;
      const Cell& cell = cells[i];
      try {
        records[i] = execute_run(cfg, cell.attack, cell.defense, cell.rate,
                                 cell.run, cfg.sweep.runs)
                         .record;
      } catch (const Error& e) {
        RunRecord rec;
        rec.run_index = cell.run;
        rec.poisoning_rate = cell.rate;
        rec.attack = cell.attack;
        rec.defense = cell.defense;
        rec.ok = false;
        rec.error = e.what();
        records[i] = std::move(rec);
      }
    }
  };
  if (workers == 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(work);
    for (std::thread& t : pool) t.join();
  }

  // Tidy CSV: one row per cell.
  std::ostringstream csv;
  csv << "poisoning_rate,run,attack,defense,clean_mse,poisoned_mse,"
         "defended_mse,attack_seconds,defense_seconds,status\n";
  for (const RunRecord& r : records) {
    csv << detail::format_number(r.poisoning_rate) << ',' << r.run_index
        << ',' << r.attack << ',' << r.defense << ',';
    if (r.ok) {
      csv << detail::format_number(r.clean_mse) << ','
          << detail::format_number(r.poisoned_mse) << ','
          << detail::format_number(r.defended_mse) << ','
          << detail::format_number(r.attack_seconds) << ','
          << detail::format_number(r.defense_seconds) << ",ok\n";
    } else {
      csv << ",,,,,error\n";
    }
  }
  std::filesystem::create_directories(opt.out_dir);
  detail::write_file(std::filesystem::path(opt.out_dir) / "sweep.csv",
                     csv.str());

  nlohmann::json report = detail::base_report(cfg, "sweep");
  report["runs"] = nlohmann::json::array();
  for (const RunRecord& r : records) report["runs"].push_back(record_to_json(r));
  report["aggregates"] = aggregate_records(records);
  detail::write_report(opt.out_dir, report);
  return report;
}

namespace detail {

inline std::pair<Index, Index> parse_row_range(const std::string& text,
                                               const std::string& path,
                                               Index n) {
  const auto colon = text.find(':');
  if (colon == std::string::npos) {
    throw ConfigError(path + " must be lo:hi, got '" + text + "'");
  }
  const Index lo =
      static_cast<Index>(parse_int(text.substr(0, colon), path));
  const Index hi =
      static_cast<Index>(parse_int(text.substr(colon + 1), path));
  if (lo < 0 || hi <= lo || hi > n) {
    throw ConfigError(path + " range [" + std::to_string(lo) + "," +
                      std::to_string(hi) + ") is invalid for n = " +
                      std::to_string(n));
  }
  return {lo, hi};
}

inline Dataset slice_rows(const Dataset& data, Index lo, Index hi) {
  Dataset out;
  out.X = data.X.middleRows(lo, hi - lo);
  out.y = data.y.segment(lo, hi - lo);
  return out;
}

}  // namespace detail

// Poison crafted on a substitute training set, grafted onto the victim:
// the ratio of transferred to original damage measures transferability.
inline nlohmann::json cmd_transfer(const HarnessConfig& cfg,
                                   const CliOptions& opt) {
  Dataset victim, substitute, test;
  if (!cfg.transfer.victim_rows.empty() ||
      !cfg.transfer.substitute_rows.empty()) {
    if (cfg.transfer.victim_rows.empty() ||
        cfg.transfer.substitute_rows.empty()) {
      throw ConfigError(
          "transfer.victim_rows and transfer.substitute_rows must be given "
          "together");
    }
    Dataset all = load_dataset(cfg.data, cfg.seed, nullptr, nullptr);
    const auto [vlo, vhi] = detail::parse_row_range(cfg.transfer.victim_rows,
                                                    "transfer.victim_rows",
                                                    all.n());
    const auto [slo, shi] = detail::parse_row_range(
        cfg.transfer.substitute_rows, "transfer.substitute_rows", all.n());
    if (vlo < shi && slo < vhi) {
      throw ConfigError(
          "transfer.victim_rows and transfer.substitute_rows overlap");
    }
    victim = detail::slice_rows(all, vlo, vhi);
    substitute = detail::slice_rows(all, slo, shi);
    // Whatever is in neither range becomes the test block.
    std::vector<Index> rest;
    for (Index i = 0; i < all.n(); ++i) {
      if ((i < vlo || i >= vhi) && (i < slo || i >= shi)) rest.push_back(i);
    }
    if (rest.empty()) {
      throw ConfigError("transfer row ranges leave no test rows");
    }
    test = detail::take_rows(all, rest);
  } else {
    RunData rd = make_run_data(cfg, 0, 1);
    victim = std::move(rd.train);
    substitute = std::move(rd.val);
    test = std::move(rd.test);
  }
  if (cfg.transfer.mode == "same") substitute = victim;

  const std::uint64_t seed = detail::cell_seed(cfg.seed, cfg.attack.alpha, 0);
  const Theta victim_clean = fit(victim, cfg.model);
  const double clean_mse = mse(test, victim_clean);

  const auto craft = [&](const std::string& kind, const Dataset& train) {
    if (kind == "optp") {
      AttackConfig acfg;
      acfg.alpha = cfg.attack.alpha;
      acfg.init = cfg.attack.init;
      acfg.variables = cfg.attack.variables;
      acfg.objective = cfg.attack.objective;
      acfg.line_search = cfg.attack.line_search;
      acfg.frozen_theta = cfg.attack.frozen_theta;
      acfg.seed = seed;
      return run_attack(train, test, cfg.model, acfg).poison;
    }
    return run_statp(train, fit(train, cfg.model), cfg.attack.alpha, seed);
  };

  nlohmann::json results = nlohmann::json::array();
  for (const std::string& kind : {std::string("optp"), std::string("statp")}) {
    const PoisonSet original = craft(kind, victim);
    const PoisonSet transferred = craft(kind, substitute);
    const double mse_original =
        mse(test, fit(concat(victim, original.points), cfg.model));
    const double mse_transferred =
        mse(test, fit(concat(victim, transferred.points), cfg.model));
    results.push_back({{"attack", kind},
                       {"model", penalty_name(cfg.model.kind)},
                       {"clean_mse", clean_mse},
                       {"mse_original", mse_original},
                       {"mse_transferred", mse_transferred},
                       {"ratio", mse_transferred / mse_original}});
  }

  nlohmann::json report = detail::base_report(cfg, "transfer");
  report["results"] = results;
  detail::write_report(opt.out_dir, report);
  return report;
}

// Generates the synthetic dataset and writes dataset.csv plus report.json.
inline nlohmann::json cmd_gen_data(const HarnessConfig& cfg,
                                   const CliOptions& opt) {
  if (cfg.data.source != "synth") {
    throw ConfigError("gen-data requires data.source = synth");
  }
  // Same derivation as load_dataset, so the written CSV is exactly the set
  // the other subcommands would synthesize for this config.
  SynthResult s = synth_linear(cfg.data.n, cfg.data.d, cfg.data.noise_sigma,
                               mix_seed(cfg.seed, 0x5EEDDA7AULL));
  std::filesystem::create_directories(opt.out_dir);
  const auto path = std::filesystem::path(opt.out_dir) / "dataset.csv";
  write_csv(path, s.data, default_feature_names(cfg.data.d));

  nlohmann::json report = detail::base_report(cfg, "gen-data");
  report["rows"] = s.data.n();
  report["columns"] = s.data.d() + 1;
  report["path"] = path.string();
  report["true_theta"] = {{"w", std::vector<double>(s.truth.w.data(),
                                                    s.truth.w.data() +
                                                        s.truth.w.size())},
                          {"b", s.truth.b}};
  detail::write_report(opt.out_dir, report);
  return report;
}

}  // namespace regpoison
