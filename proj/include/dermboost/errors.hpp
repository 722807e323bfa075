#pragma once

#include <stdexcept>
#include <string>

namespace dermboost {

// Base for everything this library throws on purpose.
struct error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Bad function arguments or out-of-range configuration values.
struct argument_error : error {
    using error::error;
};

// Malformed or inconsistent configuration files.
struct config_error : error {
    using error::error;
};

// Input files that cannot be read or written.
struct io_error : error {
    using error::error;
};

// A cell or line that does not parse.
struct parse_error : error {
    using error::error;
};

// A required column is missing or has the wrong kind.
struct schema_error : error {
    using error::error;
};

// Duplicate identifiers or other cross-record inconsistencies.
struct integrity_error : error {
    using error::error;
};

// Prediction columns that do not line up with the target dataset.
struct join_error : error {
    using error::error;
};

// A dataset that does not conform to a fitted recipe.
struct transform_error : error {
    using error::error;
};

// Inputs that make a metric undefined (single-class labels, no positives).
struct degenerate_input_error : error {
    using error::error;
};

// Every trial of a study failed.
struct study_error : error {
    using error::error;
};

// A multi-run procedure failed part way; message names the failing run.
struct aggregate_error : error {
    using error::error;
};

}  // namespace dermboost
