// Shared scalar/matrix aliases, error types and Pauli matrices

#pragma once

#include <complex>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace smf {

using cplx = std::complex<double>;
using Mat2 = Eigen::Matrix2cd;
using MatX = Eigen::MatrixXcd;
using VecX = Eigen::VectorXcd;

inline constexpr cplx I{0.0, 1.0};

// Invalid or inconsistent configuration (bad parameters, missing kernel coverage, ...)
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Argument outside the mathematical domain of an operation
struct DomainError : std::domain_error {
    using std::domain_error::domain_error;
};

// Operation called on a state it does not accept (mixed state where a pure one is needed, ...)
struct PreconditionError : std::logic_error {
    using std::logic_error::logic_error;
};

namespace pauli {

inline Mat2 sx() {
    Mat2 m;
    m << 0.0, 1.0, 1.0, 0.0;
    return m;
}

inline Mat2 sy() {
    Mat2 m;
    m << 0.0, -I, I, 0.0;
    return m;
}

inline Mat2 sz() {
    Mat2 m;
    m << 1.0, 0.0, 0.0, -1.0;
    return m;
}

}  // namespace pauli

// rho = (1 + n.sigma)/2
inline Mat2 density_from_bloch(double x, double y, double z) {
    return 0.5 * (Mat2::Identity() + x * pauli::sx() + y * pauli::sy() + z * pauli::sz());
}

}  // namespace smf
