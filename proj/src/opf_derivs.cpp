#include "derplan/opf_derivs.hpp"

namespace derplan {

namespace {
const Complex kJ(0.0, 1.0);

ComplexMatrix unit_rows(const IndexVector& end_bus, const ComplexVector& vals,
                        Index nb) {
  ComplexMatrix m = ComplexMatrix::Zero(end_bus.size(), nb);
  for (Index k = 0; k < end_bus.size(); ++k) m(k, end_bus[k]) = vals[k];
  return m;
}
}  // namespace

ComplexVector bus_injections(const ComplexMatrix& ybus,
                             const ComplexVector& v) {
  return v.array() * (ybus * v).conjugate().array();
}

InjectionJacobian d_injections(const ComplexMatrix& ybus,
                               const ComplexVector& v) {
  const ComplexVector ibus = ybus * v;
  const ComplexVector vnorm =
      (v.array() / v.array().abs().cast<Complex>()).matrix();

  InjectionJacobian out;
  ComplexMatrix inner = -(ybus * v.asDiagonal());
  inner.diagonal() += ibus;
  out.dva = kJ * (v.asDiagonal() * inner.conjugate());
  out.dvm = v.asDiagonal() * (ybus * vnorm.asDiagonal()).conjugate();
  out.dvm.diagonal().array() += ibus.conjugate().array() * vnorm.array();
  return out;
}

InjectionHessian d2_injections(const ComplexMatrix& ybus,
                               const ComplexVector& v, const Vector& lam) {
  const ComplexVector ibus = ybus * v;
  const ComplexVector lamv =
      (lam.cast<Complex>().array() * v.array()).matrix();
  const ComplexVector ginv = v.array().abs().inverse().cast<Complex>();

  const ComplexMatrix B = ybus * v.asDiagonal();
  const ComplexMatrix C = lamv.asDiagonal() * B.conjugate();
  const ComplexMatrix D = ybus.adjoint() * v.asDiagonal();
  ComplexMatrix E = D * lam.cast<Complex>().asDiagonal();
  E.diagonal() -= D * lam.cast<Complex>();
  E = v.conjugate().asDiagonal() * E;
  ComplexMatrix F = C;
  F.diagonal() -= (lamv.array() * ibus.conjugate().array()).matrix();

  InjectionHessian out;
  out.aa = E + F;
  out.va = kJ * (ginv.asDiagonal() * (E - F));
  out.av = out.va.transpose();
  out.vv = ginv.asDiagonal() * (C + C.transpose()) * ginv.asDiagonal();
  return out;
}

FlowJacobian d_end_flows(const ComplexMatrix& ybr, const IndexVector& end_bus,
                         const ComplexVector& v) {
  const Index nb = v.size();
  const Index nl = ybr.rows();
  const ComplexVector ibr = ybr * v;
  const ComplexVector vnorm =
      (v.array() / v.array().abs().cast<Complex>()).matrix();

  ComplexVector vend(nl), vnend(nl);
  for (Index k = 0; k < nl; ++k) {
    vend[k] = v[end_bus[k]];
    vnend[k] = vnorm[end_bus[k]];
  }

  FlowJacobian out;
  out.s = (vend.array() * ibr.conjugate().array()).matrix();
  out.dva =
      kJ * (ibr.conjugate().asDiagonal() * unit_rows(end_bus, vend, nb) -
            vend.asDiagonal() * (ybr * v.asDiagonal()).conjugate());
  out.dvm = vend.asDiagonal() * (ybr * vnorm.asDiagonal()).conjugate() +
            ibr.conjugate().asDiagonal() * unit_rows(end_bus, vnend, nb);
  return out;
}

Matrix d_abs2(const ComplexVector& s, const ComplexMatrix& ds) {
  const Vector sre = s.real();
  const Vector sim = s.imag();
  return 2.0 * (sre.asDiagonal() * ds.real().eval() +
                sim.asDiagonal() * ds.imag().eval());
}

FlowHessian d2_abs2_flows(const ComplexMatrix& ybr, const IndexVector& end_bus,
                          const ComplexVector& v, const FlowJacobian& fj,
                          const Vector& mu) {
  const Index nb = v.size();
  const Index nl = ybr.rows();

  // Hessian blocks of lam' * S_branch with lam = conj(s) .* mu
  const ComplexVector lam =
      (fj.s.conjugate().array() * mu.cast<Complex>().array()).matrix();
  const ComplexVector ginv = v.array().abs().inverse().cast<Complex>();
  const ComplexVector muc = mu.cast<Complex>();

  const ComplexMatrix cbr = unit_rows(end_bus, ComplexVector::Ones(nl), nb);
  const ComplexMatrix A = ybr.adjoint() * lam.asDiagonal() * cbr;
  const ComplexMatrix B = v.conjugate().asDiagonal() * A * v.asDiagonal();
  const ComplexVector dvec =
      ((A * v).array() * v.conjugate().array()).matrix();
  const ComplexVector evec =
      ((A.transpose() * v.conjugate()).array() * v.array()).matrix();
  const ComplexMatrix Fm = B + B.transpose();

  ComplexMatrix saa = Fm;
  saa.diagonal() -= dvec + evec;
  ComplexMatrix sva = B - B.transpose();
  sva.diagonal() -= dvec - evec;
  sva = kJ * (ginv.asDiagonal() * sva);
  const ComplexMatrix sav = sva.transpose();
  const ComplexMatrix svv = ginv.asDiagonal() * Fm * ginv.asDiagonal();

  FlowHessian out;
  out.aa =
      2.0 *
      (saa + fj.dva.transpose() * muc.asDiagonal() * fj.dva.conjugate()).real();
  out.va =
      2.0 *
      (sva + fj.dvm.transpose() * muc.asDiagonal() * fj.dva.conjugate()).real();
  out.av =
      2.0 *
      (sav + fj.dva.transpose() * muc.asDiagonal() * fj.dvm.conjugate()).real();
  out.vv =
      2.0 *
      (svv + fj.dvm.transpose() * muc.asDiagonal() * fj.dvm.conjugate()).real();
  return out;
}

}  // namespace derplan
