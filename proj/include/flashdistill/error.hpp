#pragma once

#include <stdexcept>
#include <string>

namespace flashdistill {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Operand shapes do not conform to an op's arity/broadcast rules.
struct ShapeError : Error {
    using Error::Error;
};

// An op produced NaN or Inf.
struct NonFiniteError : Error {
    using Error::Error;
};

// A training loss left the finite range.
struct DivergenceError : Error {
    using Error::Error;
};

// Bad user-facing configuration (unknown key, invalid value, missing file).
struct ConfigError : Error {
    using Error::Error;
};

}  // namespace flashdistill
