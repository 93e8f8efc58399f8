#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "regpoison/harness.hpp"

namespace rp = regpoison;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& path) {
  std::ifstream in(path);
  EXPECT_TRUE(in) << path;
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

fs::path write_temp(const std::string& name, const std::string& text) {
  const fs::path path = fs::path(testing::TempDir()) / name;
  std::ofstream out(path);
  out << text;
  return path;
}

int run_cli(const std::string& args) {
#ifdef REGPOISON_CLI_PATH
  const char* cli = REGPOISON_CLI_PATH;
#else
  const char* cli = std::getenv("REGPOISON_CLI_PATH");
#endif
  EXPECT_NE(cli, nullptr) << "REGPOISON_CLI_PATH not set";
  if (!cli) return -1;
  const std::string cmd =
      std::string(cli) + " " + args + " > /dev/null 2>&1";
  const int rc = std::system(cmd.c_str());
  if (rc == -1 || !WIFEXITED(rc)) return -1;
  return WEXITSTATUS(rc);
}

// Report with the wall-clock fields removed, for determinism comparisons.
nlohmann::json masked_report(const fs::path& path) {
  nlohmann::json j = nlohmann::json::parse(slurp(path));
  for (const char* arr : {"runs", "aggregates"}) {
    if (!j.contains(arr)) continue;
    for (auto& rec : j[arr]) {
      rec.erase("attack_seconds");
      rec.erase("defense_seconds");
    }
  }
  return j;
}

int count_lines(const std::string& text) {
  int n = 0;
  for (char c : text) n += c == '\n';
  return n;
}

}  // namespace

// ---------------------------------------------------------------------------
// Config parsing
// ---------------------------------------------------------------------------

TEST(ParseConfig, EmptyTextYieldsTheDefaults) {
  rp::HarnessConfig cfg = rp::parse_config("");
  EXPECT_EQ(cfg.seed, 1u);
  EXPECT_EQ(cfg.data.source, "synth");
  EXPECT_EQ(cfg.data.n, 300);
  EXPECT_EQ(cfg.data.d, 5);
  EXPECT_EQ(cfg.data.split, "thirds");
  EXPECT_EQ(cfg.data.runs, 1);
  EXPECT_EQ(cfg.model.kind, rp::PenaltyKind::Ols);
  EXPECT_EQ(cfg.model.lambda, 0.0);
  EXPECT_EQ(cfg.attack.kind, "optp");
  EXPECT_EQ(cfg.attack.alpha, 0.2);
  EXPECT_EQ(cfg.attack.init, rp::PoisonInit::BFlip);
  EXPECT_EQ(cfg.defense.kind, "trim");
  EXPECT_EQ(cfg.defense.alpha, 0.2);
  EXPECT_EQ(cfg.sweep.rates,
            (std::vector<double>{0.04, 0.08, 0.12, 0.16, 0.20}));
  EXPECT_EQ(cfg.sweep.runs, 5);
  EXPECT_EQ(cfg.transfer.mode, "disjoint");
}

TEST(ParseConfig, ReadsEverySectionAndToleratesCommentsAndSpace) {
  const std::string text = R"(
# top-level comment
seed = 9

[data]
source = synth
n = 120
d = 4
noise_sigma = 0.1
split = none
runs = 3

[model]
kind = elasticnet
lambda = 0.02
rho = 0.4

[attack]
kind = statp
init = invflip
variables = x
objective = wval
alpha = 0.1
eta = 0.3
beta = 0.5
eps = 1e-6
max_iters = 7
budget = 9
frozen_theta = true

[defense]
kind = roni
alpha = 0.1
trim_restarts = 4
roni_validation_size = 12
roni_trials = 3
roni_tolerance = 0.01
ransac_trials = 50

[sweep]
rates = 0.05, 0.1
runs = 2
attacks = statp, none
defenses = trim, none

[transfer]
; semicolon comments work too
mode = same
)";
  rp::HarnessConfig cfg = rp::parse_config(text);
  EXPECT_EQ(cfg.seed, 9u);
  EXPECT_EQ(cfg.data.n, 120);
  EXPECT_EQ(cfg.data.split, "none");
  EXPECT_EQ(cfg.data.runs, 3);
  EXPECT_EQ(cfg.model.kind, rp::PenaltyKind::ElasticNet);
  EXPECT_EQ(cfg.model.lambda, 0.02);
  EXPECT_EQ(cfg.model.rho, 0.4);
  EXPECT_EQ(cfg.attack.kind, "statp");
  EXPECT_EQ(cfg.attack.init, rp::PoisonInit::InvFlip);
  EXPECT_EQ(cfg.attack.variables, rp::OptimVars::XOnly);
  EXPECT_EQ(cfg.attack.objective, rp::AttackObjective::WVal);
  EXPECT_EQ(cfg.attack.line_search.eta, 0.3);
  EXPECT_EQ(cfg.attack.line_search.beta, 0.5);
  EXPECT_EQ(cfg.attack.line_search.eps, 1e-6);
  EXPECT_EQ(cfg.attack.line_search.max_outer_iters, 7);
  EXPECT_EQ(cfg.attack.line_search.budget, 9);
  EXPECT_TRUE(cfg.attack.frozen_theta);
  EXPECT_EQ(cfg.defense.kind, "roni");
  EXPECT_EQ(cfg.defense.roni_validation_size, 12);
  EXPECT_EQ(cfg.defense.roni_tolerance, 0.01);
  EXPECT_EQ(cfg.defense.ransac_trials, 50);
  EXPECT_EQ(cfg.sweep.rates, (std::vector<double>{0.05, 0.1}));
  EXPECT_EQ(cfg.sweep.attacks, (std::vector<std::string>{"statp", "none"}));
  EXPECT_EQ(cfg.sweep.defenses, (std::vector<std::string>{"trim", "none"}));
  EXPECT_EQ(cfg.transfer.mode, "same");
}

TEST(ParseConfig, UnknownAndDuplicateKeysAreNamed) {
  try {
    rp::parse_config("[data]\nbogus = 1\n");
    FAIL() << "expected ConfigError";
  } catch (const rp::ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("unknown config key 'data.bogus'"),
              std::string::npos)
        << e.what();
  }
  try {
    rp::parse_config("seed = 1\nseed = 2\n");
    FAIL() << "expected ConfigError";
  } catch (const rp::ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("duplicate config key 'seed'"),
              std::string::npos)
        << e.what();
  }
}

TEST(ParseConfig, RejectsMalformedSyntaxAndBadEnums) {
  EXPECT_THROW(rp::parse_config("[data\nn = 5\n"), rp::ConfigError);
  EXPECT_THROW(rp::parse_config("just some words\n"), rp::ConfigError);
  EXPECT_THROW(rp::parse_config(" = 3\n"), rp::ConfigError);
  EXPECT_THROW(rp::parse_config("[data]\nn = five\n"), rp::ConfigError);
  EXPECT_THROW(rp::parse_config("[model]\nkind = cubic\n"), rp::ConfigError);
  EXPECT_THROW(rp::parse_config("[attack]\nkind = optq\n"), rp::ConfigError);
  EXPECT_THROW(rp::parse_config("[attack]\ninit = flipish\n"),
               rp::ConfigError);
  EXPECT_THROW(rp::parse_config("[attack]\nobjective = wboth\n"),
               rp::ConfigError);
  EXPECT_THROW(rp::parse_config("[defense]\nkind = shield\n"),
               rp::ConfigError);
  EXPECT_THROW(rp::parse_config("[data]\nsplit = quarters\n"),
               rp::ConfigError);
  EXPECT_THROW(rp::parse_config("[transfer]\nmode = both\n"),
               rp::ConfigError);
  EXPECT_THROW(rp::parse_config("[attack]\nfrozen_theta = maybe\n"),
               rp::ConfigError);
  EXPECT_THROW(rp::parse_config("[sweep]\nattacks = optp, sneak\n"),
               rp::ConfigError);
  EXPECT_THROW(rp::parse_config("[sweep]\nrates = 0.1, 1.5\n"),
               rp::ConfigError);
  EXPECT_THROW(rp::parse_config("[sweep]\nrates = ,\n"), rp::ConfigError);
}

TEST(ParseConfig, CrossFieldRulesNameTheField) {
  try {
    rp::parse_config("[attack]\nalpha = 1.5\n");
    FAIL() << "expected ConfigError";
  } catch (const rp::ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("attack.alpha"), std::string::npos)
        << e.what();
  }
  // Zero contamination is a legal defense assumption, negative is not.
  EXPECT_NO_THROW(rp::parse_config("[defense]\nalpha = 0\n"));
  EXPECT_THROW(rp::parse_config("[defense]\nalpha = -0.1\n"),
               rp::ConfigError);
  EXPECT_THROW(rp::parse_config("[defense]\nalpha = 1.0\n"), rp::ConfigError);

  EXPECT_THROW(rp::parse_config("[data]\nsource = csv\n"), rp::ConfigError);
  EXPECT_THROW(
      rp::parse_config("[data]\nsource = csv\ntrain_csv = x.csv\n"),
      rp::ConfigError);
  EXPECT_THROW(rp::parse_config("[data]\nn = 4\nd = 5\n"), rp::ConfigError);
  EXPECT_THROW(rp::parse_config("[data]\nnoise_sigma = -1\n"),
               rp::ConfigError);
  EXPECT_THROW(rp::parse_config("[model]\nkind = ridge\nlambda = -0.1\n"),
               rp::ConfigError);
}

TEST(ParseConfig, UnpenalizedModelForcesLambdaToZero) {
  rp::HarnessConfig cfg =
      rp::parse_config("[model]\nkind = ols\nlambda = 0.5\n");
  EXPECT_EQ(cfg.model.kind, rp::PenaltyKind::Ols);
  EXPECT_EQ(cfg.model.lambda, 0.0);
}

TEST(ParseSchema, MapsRolesAndRejectsJunk) {
  std::vector<rp::ColumnSchema> schema =
      rp::parse_schema("a:num, b:cat, y:response, junk:ignore");
  ASSERT_EQ(schema.size(), 4u);
  EXPECT_EQ(schema[0].role, rp::ColumnRole::NumericFeature);
  EXPECT_EQ(schema[1].role, rp::ColumnRole::CategoricalFeature);
  EXPECT_EQ(schema[2].role, rp::ColumnRole::Response);
  EXPECT_EQ(schema[3].role, rp::ColumnRole::Ignore);
  EXPECT_THROW(rp::parse_schema("a:num, b"), rp::ConfigError);
  EXPECT_THROW(rp::parse_schema("a:matrix"), rp::ConfigError);
  EXPECT_THROW(rp::parse_schema(""), rp::ConfigError);
}

// ---------------------------------------------------------------------------
// In-process runner behavior
// ---------------------------------------------------------------------------

TEST(ExecuteRun, NoAttackNoDefenseReproducesTheCleanFit) {
  rp::HarnessConfig cfg = rp::parse_config("[data]\nn = 60\nd = 3\n");
  rp::RunOutput out = rp::execute_run(cfg, "none", "none", 0.2, 0, 1);
  EXPECT_TRUE(out.record.ok);
  EXPECT_EQ(out.poison.points.n(), 0);
  EXPECT_EQ(out.record.poisoned_mse, out.record.clean_mse);
  EXPECT_EQ(out.record.defended_mse, out.record.clean_mse);
}

TEST(ExecuteRun, TrimWithZeroAssumedContaminationKeepsTheCleanModel) {
  rp::HarnessConfig cfg =
      rp::parse_config("[data]\nn = 60\nd = 3\n[defense]\nalpha = 0\n");
  rp::RunOutput out = rp::execute_run(cfg, "none", "trim", 0.2, 0, 1);
  EXPECT_EQ(out.record.poisoned_mse, out.record.clean_mse);
  EXPECT_EQ(out.record.defended_mse, out.record.clean_mse);
  EXPECT_TRUE(out.record.ok);
}

TEST(RecordJson, CarriesTheDocumentedFields) {
  rp::RunRecord rec;
  rec.run_index = 2;
  rec.poisoning_rate = 0.12;
  rec.attack = "statp";
  rec.defense = "trim";
  rec.clean_mse = 0.5;
  rec.poisoned_mse = 1.5;
  rec.defended_mse = 0.6;
  nlohmann::json j = rp::record_to_json(rec);
  EXPECT_EQ(j["status"], "ok");
  EXPECT_EQ(j["run_index"], 2);
  EXPECT_EQ(j["poisoning_rate"], 0.12);
  EXPECT_EQ(j["attack"], "statp");
  EXPECT_EQ(j["clean_mse"], 0.5);

  rec.ok = false;
  rec.error = "boom";
  j = rp::record_to_json(rec);
  EXPECT_EQ(j["status"], "error");
  EXPECT_EQ(j["error"], "boom");
  EXPECT_FALSE(j.contains("clean_mse"));
}

TEST(Aggregates, AverageOverSuccessfulRunsPerCell) {
  rp::RunRecord a;
  a.poisoning_rate = 0.1;
  a.attack = "statp";
  a.defense = "trim";
  a.clean_mse = 1.0;
  a.poisoned_mse = 3.0;
  a.defended_mse = 1.0;
  rp::RunRecord b = a;
  b.run_index = 1;
  b.clean_mse = 3.0;
  b.poisoned_mse = 5.0;
  rp::RunRecord bad = a;
  bad.run_index = 2;
  bad.ok = false;
  rp::RunRecord other = a;
  other.defense = "none";

  nlohmann::json agg = rp::aggregate_records({a, b, bad, other});
  ASSERT_EQ(agg.size(), 2u);
  bool saw_trim = false;
  for (const auto& g : agg) {
    if (g["defense"] == "trim") {
      saw_trim = true;
      EXPECT_EQ(g["runs"], 2);
      EXPECT_DOUBLE_EQ(g["clean_mse"].get<double>(), 2.0);
      EXPECT_DOUBLE_EQ(g["poisoned_mse"].get<double>(), 4.0);
    }
  }
  EXPECT_TRUE(saw_trim);
}

// ---------------------------------------------------------------------------
// CLI contract (subprocess)
// ---------------------------------------------------------------------------

TEST(Cli, ExitCodesFollowTheErrorContract) {
  EXPECT_EQ(run_cli("attack"), 2);  // --config is required

  const fs::path bad = write_temp("bad.ini", "[data]\nbogus = 1\n");
  EXPECT_EQ(run_cli("attack --config " + bad.string()), 2);

  const fs::path missing_csv = write_temp(
      "missing_csv.ini",
      "[data]\nsource = csv\ntrain_csv = /nonexistent/never.csv\n"
      "schema = a:num, y:response\n");
  EXPECT_EQ(run_cli("defend --config " + missing_csv.string()), 3);

  // Two identical feature columns make the design rank deficient for an
  // unpenalized fit.
  const fs::path dup = write_temp("dup.csv",
                                  "a,b,y\n"
                                  "0.1,0.1,0.2\n"
                                  "0.4,0.4,0.5\n"
                                  "0.7,0.7,0.6\n"
                                  "0.9,0.9,0.9\n"
                                  "0.3,0.3,0.4\n"
                                  "0.6,0.6,0.7\n");
  const fs::path numerical = write_temp(
      "numerical.ini",
      "[data]\nsource = csv\ntrain_csv = " + dup.string() +
          "\nschema = a:num, b:num, y:response\nsplit = none\n"
          "[model]\nkind = ols\n[attack]\nkind = none\n"
          "[defense]\nkind = none\n");
  EXPECT_EQ(run_cli("defend --config " + numerical.string()), 4);

  const fs::path ok = write_temp(
      "ok.ini",
      "[data]\nn = 40\nd = 2\nsplit = none\n[attack]\nkind = statp\n");
  const fs::path out = fs::path(testing::TempDir()) / "ok_out";
  EXPECT_EQ(run_cli("attack --config " + ok.string() + " --out " +
                    out.string()),
            0);
  EXPECT_TRUE(fs::exists(out / "report.json"));
}

TEST(Cli, AttackWritesThePoisonCsvAndIsByteDeterministic) {
  const fs::path cfg = write_temp(
      "attack_det.ini",
      "seed = 7\n[data]\nn = 300\nd = 5\nsplit = none\n"
      "[attack]\nkind = statp\nalpha = 0.2\n");
  const fs::path out1 = fs::path(testing::TempDir()) / "att1";
  const fs::path out2 = fs::path(testing::TempDir()) / "att2";
  ASSERT_EQ(run_cli("attack --config " + cfg.string() + " --out " +
                    out1.string()),
            0);
  ASSERT_EQ(run_cli("attack --config " + cfg.string() + " --out " +
                    out2.string()),
            0);

  const std::string poison1 = slurp(out1 / "poison_run0.csv");
  EXPECT_EQ(count_lines(poison1), 61);  // header + round(0.2 * 300) rows
  EXPECT_EQ(poison1.substr(0, poison1.find('\n')), "x1,x2,x3,x4,x5,y");
  EXPECT_EQ(poison1, slurp(out2 / "poison_run0.csv"));

  nlohmann::json r1 = masked_report(out1 / "report.json");
  nlohmann::json r2 = masked_report(out2 / "report.json");
  EXPECT_EQ(r1.dump(), r2.dump());
  ASSERT_EQ(r1["runs"].size(), 1u);
  EXPECT_EQ(r1["runs"][0]["status"], "ok");
  EXPECT_EQ(r1["runs"][0]["poisoning_rate"], 0.2);
}

TEST(Cli, SeedFlagOverridesTheConfig) {
  const fs::path cfg = write_temp(
      "seed_override.ini",
      "seed = 7\n[data]\nn = 100\nd = 3\nsplit = none\n"
      "[attack]\nkind = statp\n");
  const fs::path out1 = fs::path(testing::TempDir()) / "seed1";
  const fs::path out2 = fs::path(testing::TempDir()) / "seed2";
  ASSERT_EQ(run_cli("attack --config " + cfg.string() + " --seed 7 --out " +
                    out1.string()),
            0);
  ASSERT_EQ(run_cli("attack --config " + cfg.string() + " --seed 8 --out " +
                    out2.string()),
            0);
  EXPECT_NE(slurp(out1 / "poison_run0.csv"), slurp(out2 / "poison_run0.csv"));
  EXPECT_EQ(masked_report(out1 / "report.json")["config"]["seed"], 7);
  EXPECT_EQ(masked_report(out2 / "report.json")["config"]["seed"], 8);
}

TEST(Cli, DefendReportsTheTrivialNoContaminationCase) {
  const fs::path cfg = write_temp(
      "defend_trivial.ini",
      "[data]\nn = 60\nd = 3\n[attack]\nkind = none\n"
      "[defense]\nkind = trim\nalpha = 0\n");
  const fs::path out = fs::path(testing::TempDir()) / "defend_out";
  ASSERT_EQ(run_cli("defend --config " + cfg.string() + " --out " +
                    out.string()),
            0);
  nlohmann::json report = masked_report(out / "report.json");
  ASSERT_EQ(report["runs"].size(), 1u);
  const auto& rec = report["runs"][0];
  EXPECT_EQ(rec["status"], "ok");
  EXPECT_EQ(rec["clean_mse"].get<double>(), rec["poisoned_mse"].get<double>());
  EXPECT_EQ(rec["clean_mse"].get<double>(), rec["defended_mse"].get<double>());
}

TEST(Cli, SweepCoversTheGridAndIsolatesFailingCells) {
  // At rate 0.01 a 20-row training block rounds to zero poison points, so
  // the statp cells fail; the sweep must record that and keep going.
  const fs::path cfg = write_temp(
      "sweep_grid.ini",
      "seed = 3\n[data]\nn = 60\nd = 2\n"
      "[sweep]\nrates = 0.01, 0.2\nruns = 2\nattacks = statp, none\n"
      "defenses = trim, none\n");
  const fs::path out = fs::path(testing::TempDir()) / "sweep_out";
  ASSERT_EQ(run_cli("sweep --config " + cfg.string() + " --out " +
                    out.string()),
            0);

  nlohmann::json report = masked_report(out / "report.json");
  ASSERT_EQ(report["runs"].size(), 16u);  // 2 rates x 2 runs x 2 x 2
  int ok = 0, errors = 0;
  for (const auto& rec : report["runs"]) {
    if (rec["status"] == "ok") {
      ++ok;
    } else {
      ++errors;
      EXPECT_EQ(rec["attack"], "statp");
      EXPECT_EQ(rec["poisoning_rate"], 0.01);
      EXPECT_TRUE(rec.contains("error"));
    }
  }
  EXPECT_EQ(errors, 4);  // statp at 0.01: 2 runs x 2 defenses
  EXPECT_EQ(ok, 12);

  const std::string csv = slurp(out / "sweep.csv");
  EXPECT_EQ(count_lines(csv), 17);  // header + one row per cell
  EXPECT_NE(csv.find("poisoning_rate,run,attack,defense,clean_mse"),
            std::string::npos);
  EXPECT_NE(csv.find(",,,,,error"), std::string::npos);
}

TEST(Cli, ParallelSweepMatchesSerialSweep) {
  const fs::path cfg = write_temp(
      "sweep_par.ini",
      "seed = 5\n[data]\nn = 90\nd = 3\n"
      "[sweep]\nrates = 0.1, 0.2\nruns = 2\nattacks = statp\n"
      "defenses = trim, none\n");
  const fs::path serial = fs::path(testing::TempDir()) / "sweep_serial";
  const fs::path parallel = fs::path(testing::TempDir()) / "sweep_parallel";
  ASSERT_EQ(run_cli("sweep --config " + cfg.string() + " -j 1 --out " +
                    serial.string()),
            0);
  ASSERT_EQ(run_cli("sweep --config " + cfg.string() + " -j 4 --out " +
                    parallel.string()),
            0);
  EXPECT_EQ(masked_report(serial / "report.json").dump(),
            masked_report(parallel / "report.json").dump());
}

TEST(Cli, TransferAgainstTheSameDataHasRatioOne) {
  const fs::path cfg = write_temp(
      "transfer_same.ini",
      "seed = 11\n[data]\nn = 90\nd = 3\n"
      "[attack]\nalpha = 0.2\nmax_iters = 5\n"
      "[transfer]\nmode = same\n");
  const fs::path out = fs::path(testing::TempDir()) / "transfer_same_out";
  ASSERT_EQ(run_cli("transfer --config " + cfg.string() + " --out " +
                    out.string()),
            0);
  nlohmann::json report = masked_report(out / "report.json");
  ASSERT_EQ(report["results"].size(), 2u);  // optp and statp
  for (const auto& res : report["results"]) {
    EXPECT_NEAR(res["ratio"].get<double>(), 1.0, 1e-12) << res.dump();
    EXPECT_EQ(res["mse_original"].get<double>(),
              res["mse_transferred"].get<double>());
  }
}

TEST(Cli, TransferValidatesExplicitRowRanges) {
  const std::string base =
      "seed = 2\n[data]\nn = 90\nd = 2\n[attack]\nkind = statp\n";
  const fs::path overlap = write_temp(
      "transfer_overlap.ini",
      base + "[transfer]\nvictim_rows = 0:30\nsubstitute_rows = 20:50\n");
  EXPECT_EQ(run_cli("transfer --config " + overlap.string() + " --out " +
                    (fs::path(testing::TempDir()) / "t_ov").string()),
            2);

  const fs::path no_test = write_temp(
      "transfer_notest.ini",
      base + "[transfer]\nvictim_rows = 0:45\nsubstitute_rows = 45:90\n");
  EXPECT_EQ(run_cli("transfer --config " + no_test.string() + " --out " +
                    (fs::path(testing::TempDir()) / "t_nt").string()),
            2);

  const fs::path lonely = write_temp(
      "transfer_lonely.ini", base + "[transfer]\nvictim_rows = 0:30\n");
  EXPECT_EQ(run_cli("transfer --config " + lonely.string() + " --out " +
                    (fs::path(testing::TempDir()) / "t_lo").string()),
            2);

  const fs::path good = write_temp(
      "transfer_ranges.ini",
      base + "[transfer]\nvictim_rows = 0:30\nsubstitute_rows = 30:60\n");
  const fs::path out = fs::path(testing::TempDir()) / "t_good";
  ASSERT_EQ(run_cli("transfer --config " + good.string() + " --out " +
                    out.string()),
            0);
  nlohmann::json report = masked_report(out / "report.json");
  for (const auto& res : report["results"]) {
    EXPECT_TRUE(std::isfinite(res["ratio"].get<double>()));
    EXPECT_GT(res["mse_original"].get<double>(), 0.0);
  }
}

TEST(Cli, GenDataProducesACsvTheCsvPathCanConsume) {
  const fs::path cfg = write_temp(
      "gen.ini", "seed = 13\n[data]\nn = 50\nd = 3\nsplit = none\n");
  const fs::path out = fs::path(testing::TempDir()) / "gen_out";
  ASSERT_EQ(run_cli("gen-data --config " + cfg.string() + " --out " +
                    out.string()),
            0);
  const std::string csv = slurp(out / "dataset.csv");
  EXPECT_EQ(count_lines(csv), 51);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "x1,x2,x3,y");
  nlohmann::json report = masked_report(out / "report.json");
  EXPECT_EQ(report["rows"], 50);
  EXPECT_EQ(report["true_theta"]["w"].size(), 3u);

  const fs::path consume = write_temp(
      "consume.ini",
      "[data]\nsource = csv\ntrain_csv = " + (out / "dataset.csv").string() +
          "\nschema = x1:num, x2:num, x3:num, y:response\nsplit = none\n"
          "[model]\nkind = ridge\nlambda = 0.01\n"
          "[attack]\nkind = statp\n[defense]\nkind = trim\n");
  EXPECT_EQ(run_cli("defend --config " + consume.string() + " --out " +
                    (fs::path(testing::TempDir()) / "consume_out").string()),
            0);

  const fs::path gen_csv_src = write_temp(
      "gen_bad.ini",
      "[data]\nsource = csv\ntrain_csv = " + (out / "dataset.csv").string() +
          "\nschema = x1:num, y:response\n");
  EXPECT_EQ(run_cli("gen-data --config " + gen_csv_src.string() + " --out " +
                    (fs::path(testing::TempDir()) / "gen_bad_out").string()),
            2);
}
