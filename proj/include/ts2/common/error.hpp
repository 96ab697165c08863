// SPDX-License-Identifier: Apache-2.0
//
// Error taxonomy shared across the pipeline. Each category maps to a CLI
// exit code in tools/ts2.cpp.

#pragma once

#include <stdexcept>
#include <string>

namespace ts2 {

// Invalid configuration: bad field values, schema violations, shape
// mismatches between configured components.
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// API misuse: preconditions violated by the caller (backward on a
// non-scalar, optimizer step before any backward, ...).
class UsageError : public std::logic_error {
public:
    explicit UsageError(const std::string& msg) : std::logic_error(msg) {}
};

// Bad or insufficient data: too few distinct frames for K-means, empty
// reference corpus, zero durations, id mismatches between files.
class DataError : public std::runtime_error {
public:
    explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

// File I/O and format problems (unreadable file, bad magic, unknown
// version).
class IoError : public std::runtime_error {
public:
    explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

// A downstream subcommand could not find an upstream artifact.
class MissingArtifactError : public std::runtime_error {
public:
    explicit MissingArtifactError(const std::string& msg) : std::runtime_error(msg) {}
};

// Training produced a non-finite loss.
class DivergenceError : public std::runtime_error {
public:
    explicit DivergenceError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace ts2
