#pragma once

#include <stdexcept>
#include <string>

namespace ssg {

// Error taxonomy used across the library. Everything derives from std
// exceptions so callers can catch broadly; the concrete types exist so tests
// can assert on the failure class.

struct DimensionError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Invalid numeric input to an elementwise op (log of non-positive, rsqrt of
// non-positive, exp overflow).
struct DomainValueError : std::domain_error {
    using std::domain_error::domain_error;
};

// Label / index outside its declared range.
struct LabelError : std::out_of_range {
    using std::out_of_range::out_of_range;
};

struct IndexError : std::out_of_range {
    using std::out_of_range::out_of_range;
};

// Violation of an API contract (e.g. backward on a non-scalar loss).
struct ContractError : std::logic_error {
    using std::logic_error::logic_error;
};

// Non-finite values or other unrecoverable states during optimization.
struct TrainingError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Structurally degenerate input (zero row sum, empty class).
struct DegeneracyError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Malformed input file; message carries the line number where applicable.
struct ParseError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace ssg
