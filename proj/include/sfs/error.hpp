//
// SPDX-License-Identifier: Apache-2.0
//

#pragma once

#include <stdexcept>
#include <string>

namespace sfs {

// Base for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Tensor/layer dimensions disagree.
class ShapeError : public Error {
public:
    using Error::Error;
};

// A CSF stream or its serialized bytes violate the format.
class MalformedStream : public Error {
public:
    using Error::Error;
};

// A value does not fit the serialized field width.
class EncodingError : public Error {
public:
    using Error::Error;
};

// No tiling/grouping satisfies the buffer budget.
class PlanningError : public Error {
public:
    using Error::Error;
};

// Network config text rejected; carries the 1-based line number (0 if none).
class ParseError : public Error {
public:
    ParseError(std::size_t line, const std::string& what)
        : Error(line ? "line " + std::to_string(line) + ": " + what : what), line_(line) {}

    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

} // namespace sfs
