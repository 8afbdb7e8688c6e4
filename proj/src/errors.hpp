#pragma once

#include <stdexcept>
#include <string>

namespace sfconv {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Operand shapes do not line up (matmul inner extents, conv channel counts, ...).
class ShapeError : public Error {
public:
    using Error::Error;
};

// Input is outside the mathematical domain of the operation (log of a
// non-positive value, zero-variance statistics, non-finite matrix entries).
class DomainError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

}  // namespace sfconv
