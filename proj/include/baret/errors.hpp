// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace baret {

// Exit-code discipline: 0 success, 1 numeric failure, 2 missing/corrupt
// input, 3 config error. Each error class maps onto one bucket.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ConfigError : Error {
    using Error::Error;
};
struct ParameterError : ConfigError {
    using ConfigError::ConfigError;
};
struct ShapeError : ConfigError {
    using ConfigError::ConfigError;
};
struct VocabularyError : ConfigError {
    using ConfigError::ConfigError;
};
struct UnsupportedError : ConfigError {
    using ConfigError::ConfigError;
};
struct InjectionError : ConfigError {
    using ConfigError::ConfigError;
};

struct NumericError : Error {
    using Error::Error;
};

struct InputError : Error {
    using Error::Error;
};
struct IoError : InputError {
    using InputError::InputError;
};

// Cache corruption classes; each is rejected with its own type.
struct CacheMagicError : InputError {
    using InputError::InputError;
};
struct CacheVersionError : InputError {
    using InputError::InputError;
};
struct CacheChecksumError : InputError {
    using InputError::InputError;
};
struct CacheTruncationError : InputError {
    using InputError::InputError;
};

inline int exit_code_for(const Error& e) {
    if (dynamic_cast<const ConfigError*>(&e)) return 3;
    if (dynamic_cast<const InputError*>(&e)) return 2;
    if (dynamic_cast<const NumericError*>(&e)) return 1;
    return 1;
}

}  // namespace baret
