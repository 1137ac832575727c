#pragma once

#include <compare>
#include <string>
#include <vector>

#include "derplan/network.hpp"
#include "derplan/types.hpp"

namespace derplan {

enum class ConstraintKind {
  pgen_lo,
  pgen_hi,
  qgen_lo,
  qgen_hi,
  vmag_lo,
  vmag_hi,
  flow_from,
  flow_to,
};

const char* to_string(ConstraintKind kind);

/// Identity of one inequality: kind plus the 0-based row of the generator,
/// bus, or branch table it constrains.
struct ConstraintId {
  ConstraintKind kind{};
  Index index = 0;
  friend auto operator<=>(const ConstraintId&, const ConstraintId&) = default;
};

/// Compact token such as "flow_from[9]", used in traces and reports.
std::string to_string(const ConstraintId& id);

std::string describe_constraint(const NetworkCase& net, const ConstraintId& id);

struct OpfOptions {
  Real feas_tol = 1e-6;   // scaled feasibility stopping tolerance
  Real kkt_tol = 1e-6;    // scaled stationarity/complementarity tolerance
  Real act_tol = 1e-5;    // per-unit slack below which a constraint is binding
  Real range_tol_mw = 0.1;  // validity-range bisection width
  int max_iter = 150;
  bool relax_pmin = false;  // planning relaxation: p_min of every
                            // dispatchable unit treated as 0
  Real fd_eps_mw = 1.0;     // demand perturbation for the dual cross-check
};

enum class OpfStatus { converged, infeasible, iteration_limit };

const char* to_string(OpfStatus status);

/// Scaled KKT residuals; see kkt_residual() for the exact normalization.
struct KktResidual {
  Real stationarity = 0.0;
  Real feasibility = 0.0;
  Real complementarity = 0.0;
  Real worst() const;
};

struct ConstraintValue {
  ConstraintId id;
  Real mu = 0.0;     // $/MWh for generator and flow rows, $/(pu.h) for voltage
  Real slack = 0.0;  // distance to the bound, internal units (pu; pu^2 for flows)
  bool binding = false;
};

struct OpfSolution {
  OpfStatus status = OpfStatus::iteration_limit;
  std::string message;
  int iterations = 0;
  Real objective = 0.0;  // $/h
  Vector v_mag;          // pu, per bus row
  Vector v_ang;          // rad
  Vector p_gen;          // MW, per generator row
  Vector q_gen;          // MVAr
  Vector lambda_p;       // $/MWh, per bus row (active balance dual)
  Vector lambda_q;       // $/MVArh
  std::vector<ConstraintValue> constraints;
  std::vector<ConstraintId> binding_set;  // sorted by (kind, index)
  KktResidual residual;
  bool converged() const { return status == OpfStatus::converged; }
};

/// Solves the polar AC optimal power flow with a primal-dual interior-point
/// method. Throws SemanticError on malformed input; solve failures are
/// reported through `status`, never by throwing.
OpfSolution solve_opf(const NetworkCase& net, const OpfOptions& opts = {});

/// Recomputes the scaled KKT residuals of a solution from the case data
/// alone. Costs are normalized by the steepest marginal cost before scaling
/// so the residuals are invariant under rescaling of the objective:
///   stationarity     = |grad_x L|_inf / (1 + max(|nu|_inf, |mu|_inf))
///   feasibility      = max(|g|_inf, max_i h_i^+) / (1 + |x|_inf)
///   complementarity  = |mu o max(-h, 0)|_inf / (1 + |x|_inf)
KktResidual kkt_residual(const NetworkCase& net, const OpfSolution& sol,
                         const OpfOptions& opts = {});

/// Central difference of the optimal cost with respect to active demand at
/// one bus, in $/MWh. Throws SolveError if a perturbed solve fails and
/// BindingSetChangeError if the two perturbed solves disagree on the
/// binding set (the multiplier is not differentiable there).
Real finite_difference_lambda(const NetworkCase& net, int bus_id,
                              const OpfOptions& opts = {});

struct ValidityRange {
  Real range_mw = 0.0;  // largest probed injection with an unchanged set
  bool capped = false;  // true when the whole [0, cap] interval is unchanged
  std::vector<ConstraintId> binding;  // binding set at zero injection
  std::vector<ConstraintId> left;     // gone just past the range
  std::vector<ConstraintId> entered;  // new just past the range
  bool beyond_feasible = true;        // probe past the range still solved
};

/// Bisects the largest active-power injection at `bus_id` (demand offset,
/// up to cap_mw) that leaves the optimal binding set unchanged.
ValidityRange validity_range(const NetworkCase& net, int bus_id, Real cap_mw,
                             const OpfOptions& opts = {});

/// Complex bus power injections (MW + j MVAr) at an operating point.
ComplexVector injections(const NetworkCase& net, const Vector& v_mag,
                         const Vector& v_ang);

}  // namespace derplan
