#pragma once

#include <stdexcept>
#include <string>

namespace tvrec {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Mismatched dimensions or an invalid size argument.
class ShapeError : public Error {
public:
    using Error::Error;
};

/// An argument outside its valid domain (rates, targets, ids, flags).
class InvalidArgument : public Error {
public:
    using Error::Error;
};

/// Malformed or missing input data, checkpoints or corpora.
class DataError : public Error {
public:
    using Error::Error;
};

/// Non-finite values or singular normalisations during computation.
class NumericError : public Error {
public:
    using Error::Error;
};

} // namespace tvrec
