#ifndef MICH_ERRORS_HPP
#define MICH_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace mich {

// Invalid argument values (non-positive shapes, negative counts, bad dimensions).
class DomainError : public std::domain_error {
public:
    explicit DomainError(const std::string& msg) : std::domain_error(msg) {}
};

// Every weight is zero (or -inf in log space), so no distribution exists.
class DegenerateWeightsError : public DomainError {
public:
    explicit DegenerateWeightsError(const std::string& msg) : DomainError(msg) {}
};

// A fit produced a non-finite objective. Carries the iteration it happened on.
class NumericalError : public std::runtime_error {
public:
    NumericalError(const std::string& msg, int iteration)
        : std::runtime_error(msg + " (iteration " + std::to_string(iteration) + ")"),
          iteration(iteration) {}
    int iteration;
};

// The built-in precision estimator cannot run; the caller should supply the
// precision matrix directly.
class EstimatorError : public std::runtime_error {
public:
    explicit EstimatorError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace mich

#endif  // MICH_ERRORS_HPP
