#pragma once

#include <stdexcept>
#include <string>

namespace ncct {

// Error taxonomy shared by the core library and mirrored in the C API
// status codes (see include/ncct.h).

struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// A caller violated a precondition (bad rate, k out of range, ...).
struct InvalidArgument : Error {
    using Error::Error;
};

// The OS said no: unreadable/unwritable path, short write, ...
struct IoError : Error {
    using Error::Error;
};

// The bytes are readable but are not what the format promises.
struct FormatError : Error {
    using Error::Error;
};

// File ends before the header-declared payload does.
struct TruncationError : FormatError {
    using FormatError::FormatError;
};

// Payload complete but the trailing CRC32 does not match.
struct ChecksumError : FormatError {
    using FormatError::FormatError;
};

// Training produced a non-finite loss or gradient.
struct DivergenceError : Error {
    using Error::Error;
};

} // namespace ncct
