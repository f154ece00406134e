// scvlab/errors.hpp
#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace scvlab {

/// Input violates a parameter invariant. `field()` is a dotted path into the
/// params document (e.g. "costs.channels", "churn.cr_init").
class ValidationError : public std::invalid_argument
{
public:
    ValidationError(std::string field, const std::string& message)
        : std::invalid_argument(field + ": " + message)
        , m_field(std::move(field))
    {
    }

    [[nodiscard]] const std::string& field() const noexcept { return m_field; }

private:
    std::string m_field;
};

/// A series or iterative solver could not meet its tolerance within its cap.
class ConvergenceError : public std::runtime_error
{
public:
    using std::runtime_error::runtime_error;
};

/// Root finding failed: target out of range, or the bracket is not monotone.
class NoSolutionError : public std::domain_error
{
public:
    using std::domain_error::domain_error;
};

} // namespace scvlab
