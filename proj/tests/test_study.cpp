#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <string>

#include <json.hpp>

#include "derplan/case_json.hpp"
#include "derplan/errors.hpp"
#include "derplan/study.hpp"
#include "test_support.hpp"

using namespace derplan;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& leaf) {
  const fs::path dir = fs::temp_directory_path() / "derplan_study" / leaf;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string full_config(const std::string& out_dir) {
  return "# study of the congested pair\n"
         "[study]\n"
         "case = " + test::fixture_path("case2_congested.m") + "\n"
         "profile = " + test::fixture_path("rts_profile.csv") + "\n"
         "clusters = 3\n"
         "mode = case2\n"
         "output_dir = " + out_dir + "\n"
         "label = pair\n"
         "level_range = 0.5 1.0\n"
         "\n"
         "[der]\n"
         "sizes = 15:5\n"
         "candidates = 2\n"
         "exclude_generator_buses = no\n"
         "\n"
         "[mcs]\n"
         "seed = 7\n"
         "sigma = 0.05\n"
         "min_samples = 8\n"
         "max_samples = 64\n"
         "penalty_mode = zero\n"
         "lambda_floor = 0.02\n"
         "sigma_literal = off\n"
         "workers = 2\n"
         "\n"
         "[opf]\n"
         "feas_tol = 1e-7\n"
         "kkt_tol = 1e-7\n"
         "act_tol = 2e-5\n"
         "range_tol_mw = 0.05\n"
         "max_iter = 120\n"
         "relax_pmin = false\n"
         "fd_eps_mw = 0.5\n";
}

}  // namespace

TEST_CASE("config parser reads every section and key") {
  const StudyConfig cfg = parse_study_config(full_config("/tmp/out"));
  CHECK(cfg.case_path == test::fixture_path("case2_congested.m"));
  CHECK(cfg.profile_path == test::fixture_path("rts_profile.csv"));
  CHECK(cfg.clusters == 3);
  CHECK(cfg.mode == StudyMode::case2);
  CHECK(cfg.output_dir == "/tmp/out");
  CHECK(cfg.label == "pair");
  CHECK(cfg.level_lo == 0.5);
  CHECK(cfg.level_hi == 1.0);
  REQUIRE(cfg.units.size() == 1);
  CHECK(cfg.units[0].p_size == 15.0);
  CHECK(cfg.units[0].q_size == 5.0);
  CHECK(cfg.candidate_buses == std::vector<int>{2});
  CHECK_FALSE(cfg.exclude_generator_buses);
  CHECK(cfg.mcs.rng_seed == 7);
  CHECK(cfg.mcs.sigma_threshold == 0.05);
  CHECK(cfg.mcs.min_samples == 8);
  CHECK(cfg.mcs.max_samples == 64);
  CHECK(cfg.mcs.penalty_mode == PenaltyMode::zero);
  CHECK(cfg.mcs.lambda_floor == 0.02);
  CHECK_FALSE(cfg.mcs.sigma_literal);
  CHECK(cfg.mcs.workers == 2);
  CHECK(cfg.mcs.opf.feas_tol == 1e-7);
  CHECK(cfg.mcs.opf.kkt_tol == 1e-7);
  CHECK(cfg.mcs.opf.act_tol == 2e-5);
  CHECK(cfg.mcs.opf.range_tol_mw == 0.05);
  CHECK(cfg.mcs.opf.max_iter == 120);
  CHECK_FALSE(cfg.mcs.opf.relax_pmin);
  CHECK(cfg.mcs.opf.fd_eps_mw == 0.5);
  CHECK_NOTHROW(cfg.validate());
}

TEST_CASE("a minimal config falls back to the documented defaults") {
  const StudyConfig cfg = parse_study_config(
      "[study]\ncase = a.m\n[der]\nsizes = 30:10 20:6.66 10:3.33\n");
  CHECK(cfg.clusters == 50);
  CHECK(cfg.mode == StudyMode::all);
  CHECK(cfg.output_dir == ".");
  CHECK(cfg.label.empty());
  CHECK(cfg.level_lo == 0.0);
  REQUIRE(cfg.units.size() == 3);
  CHECK(cfg.units[1].p_size == 20.0);
  CHECK(cfg.units[1].q_size == 6.66);
  CHECK(cfg.units[2].q_size == 3.33);
  CHECK(cfg.mcs.sigma_threshold == 0.01);
  CHECK(cfg.mcs.min_samples == 100);
  CHECK(cfg.mcs.max_samples == 20000);
  CHECK(cfg.mcs.workers == 1);
  CHECK(cfg.mcs.opf.feas_tol == 1e-6);
}

TEST_CASE("config parse errors carry the line and the offending token") {
  CHECK_THROWS_WITH_AS(parse_study_config("[weird]\n"),
                       doctest::Contains("unknown section"), ConfigError);
  CHECK_THROWS_WITH_AS(parse_study_config("[study\n"),
                       doctest::Contains("unterminated"), ConfigError);
  CHECK_THROWS_WITH_AS(parse_study_config("case = a.m\n"),
                       doctest::Contains("before any [section]"), ConfigError);
  CHECK_THROWS_WITH_AS(parse_study_config("[study]\njust words\n"),
                       doctest::Contains("key = value"), ConfigError);
  CHECK_THROWS_WITH_AS(parse_study_config("[study]\ncolor = red\n"),
                       doctest::Contains("unknown key 'color'"), ConfigError);
  CHECK_THROWS_WITH_AS(parse_study_config("[study]\nclusters = many\n"),
                       doctest::Contains("invalid integer"), ConfigError);
  CHECK_THROWS_WITH_AS(parse_study_config("[study]\nmode = case9\n"),
                       doctest::Contains("unknown study mode"), ConfigError);
  CHECK_THROWS_WITH_AS(parse_study_config("[study]\nlevel_range = 0.5\n"),
                       doctest::Contains("two numbers"), ConfigError);
  CHECK_THROWS_WITH_AS(parse_study_config("[mcs]\npenalty_mode = fine\n"),
                       doctest::Contains("penalty mode"), ConfigError);
  CHECK_THROWS_WITH_AS(parse_study_config("[mcs]\nsigma_literal = maybe\n"),
                       doctest::Contains("invalid boolean"), ConfigError);
  CHECK_THROWS_WITH_AS(parse_study_config("[der]\nsizes = 30:ten\n"),
                       doctest::Contains("invalid number"), ConfigError);
  try {
    parse_study_config("[study]\ncase = a.m\nclusters = x\n");
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("line 3") != std::string::npos);
  }
}

TEST_CASE("config validation rejects inconsistent field combinations") {
  StudyConfig cfg = parse_study_config(
      "[study]\ncase = a.m\n[der]\nsizes = 30:10\n");
  CHECK_NOTHROW(cfg.validate());
  StudyConfig bad = cfg;
  bad.case_path.clear();
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = cfg;
  bad.clusters = 0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = cfg;
  bad.label = "a/b";
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = cfg;
  bad.level_lo = 0.5;  // missing high bound
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = cfg;
  bad.level_lo = 0.9;
  bad.level_hi = 0.5;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = cfg;
  bad.units.clear();
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = cfg;
  bad.units[0].p_size = -1.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = cfg;
  bad.mcs.sigma_threshold = 0.0;  // MCS knobs are revalidated here
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("each study mode derives its own DER spec") {
  StudyConfig cfg = parse_study_config(
      "[study]\ncase = a.m\n[der]\nsizes = 30:10 20:6.66\ncandidates = 9 10 "
      "14\nexclude_generator_buses = yes\n");
  const DerSpec c1 = case_spec(cfg, StudyMode::case1);
  CHECK(c1.baseline);
  CHECK(c1.units[0].mode == DerMode::non_dispatchable_pq);
  const DerSpec c2 = case_spec(cfg, StudyMode::case2);
  CHECK_FALSE(c2.baseline);
  CHECK(c2.units[0].mode == DerMode::non_dispatchable_pq);
  CHECK(case_spec(cfg, StudyMode::case3).units[1].mode ==
        DerMode::dispatchable_q);
  CHECK(case_spec(cfg, StudyMode::case4).units[0].mode ==
        DerMode::dispatchable_pq);
  CHECK(c2.candidate_buses == std::vector<int>{9, 10, 14});
  CHECK(c2.exclude_generator_buses);
  CHECK_THROWS_AS(case_spec(cfg, StudyMode::all), SemanticError);
}

TEST_CASE("case files load by extension") {
  const NetworkCase m = load_case_file(test::fixture_path("case14.m"));
  CHECK(m.bus_count() == 14);

  const fs::path dir = scratch_dir("case_io");
  const fs::path json_path = dir / "case14.json";
  write_file_atomic(json_path.string(), save_case_json(m));
  const NetworkCase j = load_case_file(json_path.string());
  CHECK(j == m);

  CHECK_THROWS_WITH_AS(load_case_file("no_such_case.m"),
                       doctest::Contains("no_such_case.m"), ConfigError);
}

TEST_CASE("relative input paths resolve against the config file") {
  const fs::path dir = scratch_dir("rebase");
  fs::create_directories(dir / "inputs");
  fs::copy_file(test::fixture_path("case2_congested.m"),
                dir / "inputs" / "pair.m");
  const fs::path conf = dir / "study.conf";
  write_file_atomic(conf.string(),
                    "[study]\ncase = inputs/pair.m\noutput_dir = out\n"
                    "[der]\nsizes = 5:1\n");
  const StudyConfig cfg = read_study_config(conf.string());
  CHECK(cfg.case_path == (dir / "inputs" / "pair.m").string());
  CHECK(cfg.output_dir == "out");  // outputs stay working-directory relative
  CHECK(load_case_file(cfg.case_path).bus_count() == 2);

  const std::string abs_case = test::fixture_path("case14.m");
  write_file_atomic(conf.string(),
                    "[study]\ncase = " + abs_case + "\n[der]\nsizes = 5:1\n");
  CHECK(read_study_config(conf.string()).case_path == abs_case);
}

TEST_CASE("the study profile honors the source and the level band") {
  StudyConfig cfg;
  SUBCASE("bundled profile by default") {
    const LoadProfile p = load_study_profile(cfg);
    CHECK(p.hourly.size() == 8736);
  }
  SUBCASE("band rescaling applies on load") {
    cfg.level_lo = 0.7;
    cfg.level_hi = 1.0;
    const LoadProfile p = load_study_profile(cfg);
    CHECK(*std::min_element(p.hourly.begin(), p.hourly.end()) == 0.7);
  }
  SUBCASE("missing profile file names the path") {
    cfg.profile_path = "gone.csv";
    CHECK_THROWS_WITH_AS(load_study_profile(cfg), doctest::Contains("gone.csv"),
                         ConfigError);
  }
}

TEST_CASE("atomic writes land complete and leave no temp files") {
  const fs::path dir = scratch_dir("atomic");
  const fs::path target = dir / "report.txt";
  write_file_atomic(target.string(), "first\n");
  write_file_atomic(target.string(), "second\n");
  CHECK(test::read_file(target.string()) == "second\n");
  int entries = 0;
  for ([[maybe_unused]] const auto& e : fs::directory_iterator(dir)) ++entries;
  CHECK(entries == 1);
  CHECK_THROWS_AS(write_file_atomic((dir / "missing" / "x.txt").string(), ""),
                  ConfigError);
}

TEST_CASE("a configured run writes the full report set deterministically") {
  const fs::path dir = scratch_dir("run");
  StudyConfig cfg = parse_study_config(full_config((dir / "a").string()));
  const StudyOutputs first = run_configured_study(cfg);
  REQUIRE(first.plans.size() == 1);
  CHECK(first.plans[0].label == "case2");
  REQUIRE(first.files.size() == 5);  // plan json/txt, trace, stats, manifest

  for (const std::string& f : first.files) CHECK(fs::exists(f));
  const nlohmann::json plan =
      nlohmann::json::parse(test::read_file(first.files[0]));
  CHECK(plan["study"] == "case2");
  CHECK(plan["sites"][0]["bus"] == 2);
  const nlohmann::json manifest =
      nlohmann::json::parse(test::read_file(first.files[4]));
  CHECK(manifest["tool"]["version"] == kToolVersion);
  CHECK(manifest["mcs"]["seed"] == 7);
  CHECK(manifest["profile"]["level_range"][0] == 0.5);

  cfg.output_dir = (dir / "b").string();
  const StudyOutputs second = run_configured_study(cfg);
  for (std::size_t i = 0; i < first.files.size(); ++i)
    CHECK(test::read_file(first.files[i]) ==
          test::read_file(second.files[i]));
}

TEST_CASE("mode all produces four plans and the comparison report") {
  const fs::path dir = scratch_dir("all");
  StudyConfig cfg = parse_study_config(full_config(dir.string()));
  cfg.mode = StudyMode::all;
  cfg.mcs.max_samples = 32;
  const StudyOutputs out = run_configured_study(cfg);
  CHECK(out.plans.size() == 4);
  CHECK(out.files.size() == 4 * 4 + 2);
  const std::string comparison = test::read_file(out.files.back());
  CHECK(comparison.find("case1") != std::string::npos);
  CHECK(comparison.find("case4") != std::string::npos);
  CHECK(comparison.find("site sets") != std::string::npos);
}
