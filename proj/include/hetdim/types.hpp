#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <stdexcept>
#include <string>

namespace hetdim {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// Phase point split along the saddle's eigen-directions.
/// Flat layout used by the numerics: (x, y, z_1, ..., z_{D-2}).
struct SplitVector {
    double x = 0.0;
    double y = 0.0;
    Vec z;

    SplitVector() = default;
    SplitVector(double x_, double y_, Vec z_) : x(x_), y(y_), z(std::move(z_)) {}

    [[nodiscard]] int dim() const { return static_cast<int>(z.size()) + 2; }

    [[nodiscard]] Vec flat() const {
        Vec v(dim());
        v(0) = x;
        v(1) = y;
        v.tail(z.size()) = z;
        return v;
    }

    static SplitVector from_flat(const Vec& v) {
        return {v(0), v(1), v.tail(v.size() - 2)};
    }
};

inline double max_norm(const Vec& v) { return v.size() == 0 ? 0.0 : v.cwiseAbs().maxCoeff(); }

// Error taxonomy. Input problems derive from std::invalid_argument so the CLI
// can map them to exit code 2; numeric failures derive from std::runtime_error.

struct ModelError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct ContractError : std::logic_error {
    using std::logic_error::logic_error;
};

struct DomainError : std::domain_error {
    using std::domain_error::domain_error;
};

/// An iterate left the validity box; `step` is the offending iteration.
struct EscapeError : DomainError {
    EscapeError(const std::string& what, int step_) : DomainError(what), step(step_) {}
    int step;
};

/// T0^k(p) missed the Pi_1 neighbourhood required by the first-return map.
struct ItineraryError : DomainError {
    ItineraryError(const std::string& what, int step_) : DomainError(what), step(step_) {}
    int step;
};

struct ConvergenceError : std::runtime_error {
    ConvergenceError(const std::string& what, double residual_)
        : std::runtime_error(what), residual(residual_) {}
    double residual;
};

struct AmbiguousIndexError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// A search schedule ran out before the requested properties held.
struct ScheduleExhaustedError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace hetdim
