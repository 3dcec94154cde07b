#pragma once

#include <stdexcept>
#include <string>

namespace cfgkit {

// Base of every error raised by the toolkit.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Malformed document; the message names the offending JSON path.
class ParseError : public Error {
public:
    using Error::Error;
};

// Well-formed input that violates a type invariant.
class ValidationError : public Error {
public:
    using Error::Error;
};

// Operation called with parameters outside its domain.
class ArgumentError : public Error {
public:
    using Error::Error;
};

class EncodingError : public Error {
public:
    using Error::Error;
};

// Non-finite loss while training; carries the epoch at which it happened.
class TrainingError : public Error {
public:
    TrainingError(const std::string& what, int epoch)
        : Error(what + " (epoch " + std::to_string(epoch) + ")"), epoch_(epoch) {}
    int epoch() const { return epoch_; }

private:
    int epoch_;
};

class IoError : public Error {
public:
    using Error::Error;
};

// A classifier query failed; the message says which graph variant was queried.
class ModelError : public Error {
public:
    using Error::Error;
};

class AdapterError : public Error {
public:
    using Error::Error;
};

class SpawnError : public AdapterError {
public:
    using AdapterError::AdapterError;
};

class TimeoutError : public AdapterError {
public:
    using AdapterError::AdapterError;
};

class ProtocolError : public AdapterError {
public:
    using AdapterError::AdapterError;
};

// The adapter answered ok=false; what() is its error text verbatim.
class RemoteError : public AdapterError {
public:
    using AdapterError::AdapterError;
};

}  // namespace cfgkit
