#include <cstdio>
#include <cstdlib>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "derplan/errors.hpp"
#include "derplan/study.hpp"

using namespace derplan;

namespace {

// single-line, machine-parsable class prefix on stderr
int report_failure(int code, const char* prefix, const std::string& what) {
  std::cerr << prefix << ": " << what << "\n";
  return code;
}

std::string format_lambda(const NetworkCase& net, const Vector& lambda) {
  std::string out;
  char buf[48];
  for (Index b = 0; b < net.bus_count(); ++b) {
    std::snprintf(buf, sizeof(buf), "%s%d:%.4f", b ? "  " : "",
                  net.buses[b].id, lambda[b]);
    out += buf;
  }
  return out;
}

void print_constraints(const NetworkCase& net, const char* heading,
                       const std::vector<ConstraintId>& ids) {
  std::printf("%s:%s\n", heading, ids.empty() ? " (none)" : "");
  for (const ConstraintId& id : ids)
    std::printf("  %-14s %s\n", to_string(id).c_str(),
                describe_constraint(net, id).c_str());
}

int cmd_run(const std::string& config_path) {
  StudyConfig config = read_study_config(config_path);
  if (const char* dir = std::getenv("DERPLAN_OUTPUT_DIR"); dir && *dir)
    config.output_dir = dir;
  const StudyOutputs outputs = run_configured_study(config);
  for (const PlacementPlan& plan : outputs.plans) {
    std::string sites;
    for (const Site& s : plan.sites)
      sites += (sites.empty() ? "" : ", ") + std::to_string(s.bus_id);
    std::printf("%s %s: sites {%s}, sigma %.4g after %d samples (%s)\n",
                plan.case_name.c_str(), plan.label.c_str(), sites.c_str(),
                plan.sigma_stop, plan.samples,
                plan.mcs_converged ? "converged" : "sample limit");
  }
  for (const std::string& file : outputs.files)
    std::printf("wrote %s\n", file.c_str());
  return 0;
}

int cmd_validate(const std::string& case_path) {
  const NetworkCase net = load_case_file(case_path);
  std::printf("case %s: %d buses, %d branches, %d generators\n",
              net.name.c_str(), static_cast<int>(net.bus_count()),
              static_cast<int>(net.branch_count()),
              static_cast<int>(net.generator_count()));
  std::printf("capacity %.10g MW, peak demand %.10g MW / %.10g MVAr\n",
              net.total_p_capacity(), net.total_p_demand(),
              net.total_q_demand());
  const OpfSolution sol = solve_opf(net);
  if (!sol.converged()) {
    std::printf("peak OPF failed: %s\n", sol.message.c_str());
    throw SolveError("validation solve on '" + case_path +
                     "' did not converge");
  }
  std::printf("peak OPF: converged in %d iterations, objective %.4f $/h\n",
              sol.iterations, sol.objective);
  std::printf(
      "residuals: stationarity %.3e, feasibility %.3e, complementarity "
      "%.3e\n",
      sol.residual.stationarity, sol.residual.feasibility,
      sol.residual.complementarity);
  std::printf("lambda_p ($/MWh): %s\n",
              format_lambda(net, sol.lambda_p).c_str());
  std::printf("OK\n");
  return 0;
}

int cmd_range(const std::string& case_path, int bus, double cap_mw) {
  const NetworkCase net = load_case_file(case_path);
  const ValidityRange range = validity_range(net, bus, cap_mw);
  std::printf("case %s, bus %d, probe cap %g MW at peak load\n",
              net.name.c_str(), bus, cap_mw);
  if (range.capped)
    std::printf("validity range: >= %g MW (binding set unchanged up to the "
                "cap)\n",
                range.range_mw);
  else
    std::printf("validity range: %g MW\n", range.range_mw);
  print_constraints(net, "binding at zero injection", range.binding);
  if (!range.capped) {
    print_constraints(net, "leaves the binding set past the range",
                      range.left);
    print_constraints(net, "enters the binding set past the range",
                      range.entered);
    if (!range.beyond_feasible)
      std::printf("the probe just past the range no longer solves\n");
  }
  return 0;
}

int cmd_cluster(const std::string& profile_path, int k,
                const std::string& out_path) {
  StudyConfig loader;
  loader.profile_path = profile_path == "builtin" ? "" : profile_path;
  const LoadProfile profile = load_study_profile(loader);
  const LoadModel model = cluster_profile(profile, k);
  const std::string csv = load_model_csv(model);
  if (out_path.empty()) {
    std::fputs(csv.c_str(), stdout);
  } else {
    write_file_atomic(out_path, csv);
    std::printf("wrote %s\n", out_path.c_str());
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"DER siting and sizing studies driven by optimal power flow "
               "sensitivities"};
  app.require_subcommand(1);

  std::string config_path;
  CLI::App* run = app.add_subcommand(
      "run", "run the studies described by a config file");
  run->add_option("-c,--config", config_path, "study config file")
      ->required();

  std::string case_path;
  CLI::App* validate = app.add_subcommand(
      "validate", "parse a case, check invariants and solve the peak OPF");
  validate->add_option("case", case_path, "case file (.m or .json)")
      ->required();

  std::string range_case;
  int range_bus = 0;
  double range_cap = 100.0;
  CLI::App* range = app.add_subcommand(
      "range", "probe the validity range of the multiplier at one bus");
  range->add_option("case", range_case, "case file (.m or .json)")
      ->required();
  range->add_option("-b,--bus", range_bus, "external bus id")->required();
  range->add_option("--cap", range_cap, "largest probed injection, MW")
      ->capture_default_str();

  std::string profile_path;
  std::string cluster_out;
  int cluster_k = 50;
  CLI::App* cluster = app.add_subcommand(
      "cluster", "reduce a load profile to a clustered level model");
  cluster
      ->add_option("profile", profile_path,
                   "profile CSV, or 'builtin' for the bundled one")
      ->required();
  cluster->add_option("-k,--clusters", cluster_k, "cluster count")
      ->capture_default_str();
  cluster->add_option("-o,--output", cluster_out,
                      "write the model CSV here instead of stdout");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;  // help/version exit clean, usage errors as 2
  }

  try {
    if (*run) return cmd_run(config_path);
    if (*validate) return cmd_validate(case_path);
    if (*range) return cmd_range(range_case, range_bus, range_cap);
    return cmd_cluster(profile_path, cluster_k, cluster_out);
  } catch (const ConfigError& e) {
    return report_failure(2, "config error", e.what());
  } catch (const SyntaxError& e) {
    return report_failure(1, "syntax error", e.what());
  } catch (const SchemaError& e) {
    return report_failure(1, "schema error", e.what());
  } catch (const UnsupportedError& e) {
    return report_failure(1, "unsupported", e.what());
  } catch (const SemanticError& e) {
    return report_failure(1, "semantic error", e.what());
  } catch (const BindingSetChangeError& e) {
    return report_failure(1, "binding set error", e.what());
  } catch (const SolveError& e) {
    return report_failure(1, "solve error", e.what());
  } catch (const Error& e) {
    return report_failure(1, "error", e.what());
  } catch (const std::exception& e) {
    return report_failure(1, "internal error", e.what());
  }
}
