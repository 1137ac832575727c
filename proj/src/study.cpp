#include "derplan/study.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "derplan/case_json.hpp"
#include "derplan/errors.hpp"
#include "derplan/matpower.hpp"

namespace derplan {

namespace {

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

std::string line_tag(int line) { return "line " + std::to_string(line) + ": "; }

Real to_real(const std::string& v, const std::string& ctx, int line) {
  try {
    std::size_t pos = 0;
    const Real r = std::stod(v, &pos);
    if (pos == v.size()) return r;
  } catch (const std::exception&) {
  }
  throw ConfigError(line_tag(line) + "invalid number '" + v + "' for " + ctx);
}

long long to_integer(const std::string& v, const std::string& ctx, int line) {
  try {
    std::size_t pos = 0;
    const long long r = std::stoll(v, &pos);
    if (pos == v.size()) return r;
  } catch (const std::exception&) {
  }
  throw ConfigError(line_tag(line) + "invalid integer '" + v + "' for " + ctx);
}

std::uint64_t to_seed(const std::string& v, const std::string& ctx, int line) {
  try {
    std::size_t pos = 0;
    const std::uint64_t r = std::stoull(v, &pos);
    if (pos == v.size()) return r;
  } catch (const std::exception&) {
  }
  throw ConfigError(line_tag(line) + "invalid seed '" + v + "' for " + ctx);
}

bool to_bool(const std::string& v, const std::string& ctx, int line) {
  if (v == "true" || v == "yes" || v == "on" || v == "1") return true;
  if (v == "false" || v == "no" || v == "off" || v == "0") return false;
  throw ConfigError(line_tag(line) + "invalid boolean '" + v + "' for " + ctx);
}

std::vector<std::string> split_tokens(const std::string& v) {
  std::istringstream in(v);
  std::vector<std::string> out;
  std::string tok;
  while (in >> tok) out.push_back(tok);
  return out;
}

std::vector<DerUnit> parse_sizes(const std::string& v, int line) {
  std::vector<DerUnit> units;
  for (const std::string& tok : split_tokens(v)) {
    DerUnit unit;
    const auto colon = tok.find(':');
    unit.p_size = to_real(tok.substr(0, colon), "der.sizes", line);
    if (colon != std::string::npos)
      unit.q_size = to_real(tok.substr(colon + 1), "der.sizes", line);
    units.push_back(unit);
  }
  if (units.empty())
    throw ConfigError(line_tag(line) + "der.sizes lists no units");
  return units;
}

}  // namespace

const char* to_string(StudyMode mode) {
  switch (mode) {
    case StudyMode::case1: return "case1";
    case StudyMode::case2: return "case2";
    case StudyMode::case3: return "case3";
    case StudyMode::case4: return "case4";
    case StudyMode::all: return "all";
  }
  return "?";
}

StudyMode parse_study_mode(const std::string& text) {
  for (StudyMode m : {StudyMode::case1, StudyMode::case2, StudyMode::case3,
                      StudyMode::case4, StudyMode::all})
    if (text == to_string(m)) return m;
  throw ConfigError("unknown study mode '" + text +
                    "' (expected case1..case4 or all)");
}

void StudyConfig::validate() const {
  if (case_path.empty()) throw ConfigError("study.case is required");
  if (clusters < 1) throw ConfigError("study.clusters must be at least 1");
  if (label.find('/') != std::string::npos ||
      label.find('\\') != std::string::npos)
    throw ConfigError("study.label must be a plain file prefix");
  if ((level_lo == 0.0) != (level_hi == 0.0))
    throw ConfigError("study.level_range needs both a low and a high bound");
  if (level_lo != 0.0 && !(level_lo > 0.0 && level_lo <= level_hi &&
                           level_hi <= 1.0))
    throw ConfigError("study.level_range must satisfy 0 < lo <= hi <= 1");
  if (units.empty()) throw ConfigError("der.sizes is required");
  for (const DerUnit& u : units)
    if (!(u.p_size > 0.0) || u.q_size < 0.0)
      throw ConfigError("der.sizes entries need positive P and nonnegative Q");
  try {
    mcs.validate();
  } catch (const Error& e) {
    throw ConfigError(std::string("mcs section: ") + e.what());
  }
}

StudyConfig parse_study_config(const std::string& text) {
  StudyConfig cfg;
  std::istringstream in(text);
  std::string raw;
  std::string section;
  int line = 0;
  while (std::getline(in, raw)) {
    ++line;
    const auto hash = raw.find_first_of("#;");
    std::string s = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (s.empty()) continue;
    if (s.front() == '[') {
      if (s.back() != ']')
        throw ConfigError(line_tag(line) + "unterminated section header");
      section = trim(s.substr(1, s.size() - 2));
      if (section != "study" && section != "der" && section != "mcs" &&
          section != "opf")
        throw ConfigError(line_tag(line) + "unknown section [" + section + "]");
      continue;
    }
    const auto eq = s.find('=');
    if (eq == std::string::npos)
      throw ConfigError(line_tag(line) + "expected 'key = value'");
    const std::string key = trim(s.substr(0, eq));
    const std::string value = trim(s.substr(eq + 1));
    if (key.empty() || value.empty())
      throw ConfigError(line_tag(line) + "expected 'key = value'");
    if (section.empty())
      throw ConfigError(line_tag(line) + "key '" + key +
                        "' appears before any [section]");
    const std::string ctx = section + "." + key;

    if (section == "study") {
      if (key == "case") {
        cfg.case_path = value;
      } else if (key == "profile") {
        cfg.profile_path = value;
      } else if (key == "clusters") {
        cfg.clusters = static_cast<Index>(to_integer(value, ctx, line));
      } else if (key == "mode") {
        try {
          cfg.mode = parse_study_mode(value);
        } catch (const Error& e) {
          throw ConfigError(line_tag(line) + e.what());
        }
      } else if (key == "output_dir") {
        cfg.output_dir = value;
      } else if (key == "label") {
        cfg.label = value;
      } else if (key == "level_range") {
        const std::vector<std::string> toks = split_tokens(value);
        if (toks.size() != 2)
          throw ConfigError(line_tag(line) +
                            "study.level_range expects two numbers");
        cfg.level_lo = to_real(toks[0], ctx, line);
        cfg.level_hi = to_real(toks[1], ctx, line);
      } else {
        throw ConfigError(line_tag(line) + "unknown key '" + key +
                          "' in [study]");
      }
    } else if (section == "der") {
      if (key == "sizes") {
        cfg.units = parse_sizes(value, line);
      } else if (key == "candidates") {
        cfg.candidate_buses.clear();
        for (const std::string& tok : split_tokens(value))
          cfg.candidate_buses.push_back(
              static_cast<int>(to_integer(tok, ctx, line)));
      } else if (key == "exclude_generator_buses") {
        cfg.exclude_generator_buses = to_bool(value, ctx, line);
      } else {
        throw ConfigError(line_tag(line) + "unknown key '" + key +
                          "' in [der]");
      }
    } else if (section == "mcs") {
      if (key == "seed") {
        cfg.mcs.rng_seed = to_seed(value, ctx, line);
      } else if (key == "sigma") {
        cfg.mcs.sigma_threshold = to_real(value, ctx, line);
      } else if (key == "min_samples") {
        cfg.mcs.min_samples = static_cast<int>(to_integer(value, ctx, line));
      } else if (key == "max_samples") {
        cfg.mcs.max_samples = static_cast<int>(to_integer(value, ctx, line));
      } else if (key == "penalty_mode") {
        try {
          cfg.mcs.penalty_mode = parse_penalty_mode(value);
        } catch (const Error& e) {
          throw ConfigError(line_tag(line) + e.what());
        }
      } else if (key == "lambda_floor") {
        cfg.mcs.lambda_floor = to_real(value, ctx, line);
      } else if (key == "sigma_literal") {
        cfg.mcs.sigma_literal = to_bool(value, ctx, line);
      } else if (key == "workers") {
        cfg.mcs.workers = static_cast<int>(to_integer(value, ctx, line));
      } else {
        throw ConfigError(line_tag(line) + "unknown key '" + key +
                          "' in [mcs]");
      }
    } else {  // opf
      if (key == "feas_tol") {
        cfg.mcs.opf.feas_tol = to_real(value, ctx, line);
      } else if (key == "kkt_tol") {
        cfg.mcs.opf.kkt_tol = to_real(value, ctx, line);
      } else if (key == "act_tol") {
        cfg.mcs.opf.act_tol = to_real(value, ctx, line);
      } else if (key == "range_tol_mw") {
        cfg.mcs.opf.range_tol_mw = to_real(value, ctx, line);
      } else if (key == "max_iter") {
        cfg.mcs.opf.max_iter = static_cast<int>(to_integer(value, ctx, line));
      } else if (key == "relax_pmin") {
        cfg.mcs.opf.relax_pmin = to_bool(value, ctx, line);
      } else if (key == "fd_eps_mw") {
        cfg.mcs.opf.fd_eps_mw = to_real(value, ctx, line);
      } else {
        throw ConfigError(line_tag(line) + "unknown key '" + key +
                          "' in [opf]");
      }
    }
  }
  return cfg;
}

StudyConfig read_study_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open study config '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  StudyConfig config;
  try {
    config = parse_study_config(ss.str());
  } catch (const ConfigError& e) {
    throw ConfigError(path + ": " + e.what());
  }
  // relative case/profile paths resolve against the config file, not the
  // working directory, so a config runs the same from anywhere
  const std::filesystem::path base = std::filesystem::path(path).parent_path();
  auto rebase = [&base](std::string& p) {
    if (!p.empty() && std::filesystem::path(p).is_relative())
      p = (base / p).string();
  };
  rebase(config.case_path);
  rebase(config.profile_path);
  return config;
}

DerSpec case_spec(const StudyConfig& config, StudyMode mode) {
  if (mode == StudyMode::all)
    throw SemanticError("a single study mode is required");
  DerSpec spec;
  spec.units = config.units;
  const DerMode der = mode == StudyMode::case3   ? DerMode::dispatchable_q
                      : mode == StudyMode::case4 ? DerMode::dispatchable_pq
                                                 : DerMode::non_dispatchable_pq;
  for (DerUnit& u : spec.units) u.mode = der;
  spec.baseline = mode == StudyMode::case1;
  spec.candidate_buses = config.candidate_buses;
  spec.exclude_generator_buses = config.exclude_generator_buses;
  return spec;
}

NetworkCase load_case_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open case file '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  if (path.size() >= 5 && path.substr(path.size() - 5) == ".json")
    return load_case_json(ss.str());
  return parse_matpower_case(ss.str());
}

LoadProfile load_study_profile(const StudyConfig& config) {
  LoadProfile profile;
  if (config.profile_path.empty()) {
    profile = rts_profile();
  } else {
    std::ifstream in(config.profile_path, std::ios::binary);
    if (!in)
      throw ConfigError("cannot open profile '" + config.profile_path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    profile = read_profile_csv(ss.str());
  }
  if (config.level_lo != 0.0)
    profile = rescale_profile(profile, config.level_lo, config.level_hi);
  return profile;
}

void write_file_atomic(const std::string& path, const std::string& content) {
  namespace fs = std::filesystem;
  const fs::path target(path);
  fs::path tmp(target);
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw ConfigError("cannot write '" + tmp.string() + "'");
    out << content;
    out.flush();
    if (!out) throw ConfigError("short write to '" + tmp.string() + "'");
  }
  std::error_code ec;
  fs::rename(tmp, target, ec);
  if (ec)
    throw ConfigError("cannot move '" + tmp.string() + "' to '" +
                      target.string() + "': " + ec.message());
}

namespace {

nlohmann::json manifest_json(const StudyConfig& cfg, const NetworkCase& net,
                             const std::vector<StudyMode>& modes) {
  nlohmann::json units = nlohmann::json::array();
  for (const DerUnit& u : cfg.units)
    units.push_back({{"p_mw", u.p_size}, {"q_mvar", u.q_size}});
  nlohmann::json mode_list = nlohmann::json::array();
  for (StudyMode m : modes) mode_list.push_back(to_string(m));
  const std::string eigen = std::to_string(EIGEN_WORLD_VERSION) + "." +
                            std::to_string(EIGEN_MAJOR_VERSION) + "." +
                            std::to_string(EIGEN_MINOR_VERSION);
  return {
      {"tool", {{"name", "derplan"}, {"version", kToolVersion}, {"eigen", eigen}}},
      {"case", {{"path", cfg.case_path}, {"name", net.name}}},
      {"profile",
       {{"source",
         cfg.profile_path.empty() ? std::string("builtin") : cfg.profile_path},
        {"clusters", cfg.clusters},
        {"level_range", cfg.level_lo == 0.0
                            ? nlohmann::json()
                            : nlohmann::json{cfg.level_lo, cfg.level_hi}}}},
      {"modes", mode_list},
      {"der",
       {{"units", units},
        {"candidates", cfg.candidate_buses},
        {"exclude_generator_buses", cfg.exclude_generator_buses}}},
      {"mcs",
       {{"seed", cfg.mcs.rng_seed},
        {"sigma_threshold", cfg.mcs.sigma_threshold},
        {"min_samples", cfg.mcs.min_samples},
        {"max_samples", cfg.mcs.max_samples},
        {"penalty_mode", to_string(cfg.mcs.penalty_mode)},
        {"lambda_floor", cfg.mcs.lambda_floor},
        {"sigma_literal", cfg.mcs.sigma_literal},
        {"workers", cfg.mcs.workers}}},
      {"opf",
       {{"feas_tol", cfg.mcs.opf.feas_tol},
        {"kkt_tol", cfg.mcs.opf.kkt_tol},
        {"act_tol", cfg.mcs.opf.act_tol},
        {"range_tol_mw", cfg.mcs.opf.range_tol_mw},
        {"max_iter", cfg.mcs.opf.max_iter},
        {"relax_pmin", cfg.mcs.opf.relax_pmin},
        {"fd_eps_mw", cfg.mcs.opf.fd_eps_mw}}}};
}

}  // namespace

StudyOutputs run_configured_study(const StudyConfig& config) {
  config.validate();
  const NetworkCase net = load_case_file(config.case_path);
  const LoadProfile profile = load_study_profile(config);

  std::vector<StudyMode> modes;
  if (config.mode == StudyMode::all)
    modes = {StudyMode::case1, StudyMode::case2, StudyMode::case3,
             StudyMode::case4};
  else
    modes = {config.mode};

  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(config.output_dir, ec);
  if (ec)
    throw ConfigError("cannot create output directory '" + config.output_dir +
                      "': " + ec.message());
  const std::string prefix = config.label.empty() ? net.name : config.label;
  const auto out_path = [&](const std::string& suffix) {
    return (fs::path(config.output_dir) / (prefix + suffix)).string();
  };
  std::vector<int> bus_ids;
  for (const Bus& b : net.buses) bus_ids.push_back(b.id);

  StudyOutputs outputs;
  const auto emit = [&](const std::string& suffix, const std::string& text) {
    const std::string path = out_path(suffix);
    write_file_atomic(path, text);
    outputs.files.push_back(path);
  };

  for (StudyMode m : modes) {
    McsResult mcs;
    PlacementPlan plan = run_study(net, profile, case_spec(config, m),
                                   config.mcs, config.clusters, &mcs);
    plan.label = to_string(m);
    const std::string stem = std::string("_") + to_string(m);
    emit(stem + ".plan.json", plan_json(plan));
    emit(stem + ".plan.txt", plan_table(plan));
    emit(stem + ".trace.jsonl", trace_jsonl(mcs.trace));
    emit(stem + ".stats.csv", stats_csv(mcs.stats, bus_ids));
    outputs.plans.push_back(std::move(plan));
  }

  emit("_manifest.json", manifest_json(config, net, modes).dump(1) + "\n");
  if (outputs.plans.size() > 1)
    emit("_comparison.txt", compare_studies(outputs.plans));
  return outputs;
}

}  // namespace derplan
