// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace fedforget {

/// Shapes or lengths of numeric operands disagree.
class DimensionError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// A precondition on an argument value was violated (empty batch, bad arity...).
class ArgumentError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// An operation was invoked on state it does not own (e.g. wrong optimizer tag).
class ContractError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

/// Training data is unusable for the requested operation.
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Configuration could not be parsed or failed validation.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Persisted artifact is from an incompatible format version.
class IncompatibleFormatError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Persisted artifact is truncated or fails its checksum.
class IntegrityError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Base-model pretraining did not reach an acceptable loss.
class PretrainError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace fedforget
