#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <stdexcept>
#include <string>

namespace owmmd {

template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using Matrix = MatrixX<double>;
using Vector = VectorX<double>;

// Error taxonomy. Every failure mode surfaced by the library maps to one of
// these; the CLI translates them into exit codes.

/// Bad shapes, out-of-domain parameters, non-finite inputs.
class ArgumentError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Data that admits no answer, e.g. a median heuristic over identical points.
class DegenerateDataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Requested a closed-form embedding the (kernel, base measure) pair lacks.
class UnsupportedEmbeddingError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Cholesky of the weight system failed even at the largest jitter.
class NumericalConditioningError : public std::runtime_error {
public:
    NumericalConditioningError(const std::string& what, double final_jitter)
        : std::runtime_error(what), final_jitter_(final_jitter) {}
    [[nodiscard]] double final_jitter() const noexcept { return final_jitter_; }

private:
    double final_jitter_;
};

class SimulationDivergedError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class OptimizationFailedError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Too many bootstrap iterations failed for the test to be meaningful.
class TestInvalidError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace owmmd
