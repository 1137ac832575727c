#pragma once

#include "derplan/types.hpp"

namespace derplan {

/// Complex bus injections S = diag(V) conj(Ybus V), per unit.
ComplexVector bus_injections(const ComplexMatrix& ybus, const ComplexVector& v);

/// First partials of the bus injections in polar coordinates.
struct InjectionJacobian {
  ComplexMatrix dva;  // dS/d(angle)
  ComplexMatrix dvm;  // dS/d(magnitude)
};
InjectionJacobian d_injections(const ComplexMatrix& ybus,
                               const ComplexVector& v);

/// Hessian blocks of lam' * S(V) for a real multiplier vector lam,
/// variable ordering [angles; magnitudes]. Take the real part for the
/// active-power balance rows and the imaginary part for reactive.
struct InjectionHessian {
  ComplexMatrix aa, av, va, vv;
};
InjectionHessian d2_injections(const ComplexMatrix& ybus,
                               const ComplexVector& v, const Vector& lam);

/// Complex flows at one branch end and their first partials.
/// `ybr` is the end admittance matrix (rows = branches, cols = buses) and
/// `end_bus` gives the internal bus index owning each branch end.
struct FlowJacobian {
  ComplexVector s;    // pu
  ComplexMatrix dva;  // nl x nb
  ComplexMatrix dvm;
};
FlowJacobian d_end_flows(const ComplexMatrix& ybr, const IndexVector& end_bus,
                         const ComplexVector& v);

/// Gradient rows of |s|^2 given s and one block of ds/dx.
Matrix d_abs2(const ComplexVector& s, const ComplexMatrix& ds);

/// Real Hessian blocks of mu' * |s_branch|^2, ordering [angles; magnitudes].
struct FlowHessian {
  Matrix aa, av, va, vv;
};
FlowHessian d2_abs2_flows(const ComplexMatrix& ybr, const IndexVector& end_bus,
                          const ComplexVector& v, const FlowJacobian& fj,
                          const Vector& mu);

}  // namespace derplan
