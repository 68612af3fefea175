#pragma once

#include <stdexcept>
#include <string>

namespace lite {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Operand shapes do not agree.
struct ShapeError : Error {
    using Error::Error;
};

/// A documented precondition was violated (range, symmetry, cap, ...).
struct ContractError : Error {
    using Error::Error;
};

struct NotFoundError : Error {
    using Error::Error;
};

/// A file exists but its bytes are not a valid artifact (bad magic, truncation, ...).
struct FormatError : Error {
    using Error::Error;
};

struct IoError : Error {
    using Error::Error;
};

}  // namespace lite
