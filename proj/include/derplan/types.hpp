#pragma once

#include <Eigen/Dense>
#include <complex>
#include <cstdint>
#include <vector>

namespace derplan {

using Real = double;
using Complex = std::complex<Real>;
using Index = Eigen::Index;

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using ComplexVector = Eigen::VectorXcd;
using ComplexMatrix = Eigen::MatrixXcd;
using IndexVector = Eigen::VectorXi;

using VectorRef = Eigen::Ref<const Vector>;

}  // namespace derplan
