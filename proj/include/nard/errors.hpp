#pragma once

#include <stdexcept>
#include <string>

namespace nard {

/// Base class for all library errors.
class error : public std::runtime_error {
public:
    explicit error(const std::string& what) : std::runtime_error(what) {}
};

/// A caller-supplied argument violated a documented precondition.
class precondition_error : public error {
public:
    using error::error;
};

/// An iterative method exhausted its iteration budget.
class convergence_error : public error {
public:
    convergence_error(const std::string& what, double last_residual)
        : error(what), last_residual(last_residual) {}
    double last_residual;
};

/// A value is outside the mathematical domain of the operation.
class domain_error : public error {
public:
    using error::error;
};

/// An enumeration would exceed the configured size cap.
class size_error : public error {
public:
    using error::error;
};

/// A root/target search bracket does not contain a solution.
class bracket_error : public error {
public:
    using error::error;
};

/// The model itself is inconsistent (e.g. a covariance that must be
/// positive definite is not).
class model_error : public error {
public:
    using error::error;
};

/// A computed quantity violated a property it should hold up to roundoff
/// (e.g. a covariance recursion produced a clearly indefinite matrix).
class numerical_error : public error {
public:
    using error::error;
};

} // namespace nard
