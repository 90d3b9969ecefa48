#pragma once

#include <stdexcept>
#include <string>

namespace uapatch {

// Base for everything thrown by this library.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Bad caller input: shapes, ranges, unknown names, malformed config.
// The CLI maps these to exit code 2.
class ValidationError : public Error {
public:
    explicit ValidationError(const std::string& msg) : Error(msg) {}
};

class ShapeError : public ValidationError {
public:
    explicit ShapeError(const std::string& msg) : ValidationError(msg) {}
};

class PlacementError : public ValidationError {
public:
    explicit PlacementError(const std::string& msg) : ValidationError(msg) {}
};

class LookupError : public ValidationError {
public:
    explicit LookupError(const std::string& msg) : ValidationError(msg) {}
};

// Protocol violations in evaluation plans (e.g. train/eval class leakage).
class ProtocolError : public ValidationError {
public:
    explicit ProtocolError(const std::string& msg) : ValidationError(msg) {}
};

// Runtime failures: broken files, failed optimizations. Exit code 3.
class IoError : public Error {
public:
    explicit IoError(const std::string& msg) : Error(msg) {}
};

class CheckpointError : public Error {
public:
    CheckpointError(const std::string& msg, const std::string& field)
        : Error(msg + " (field: " + field + ")"), field_(field) {}
    const std::string& field() const { return field_; }

private:
    std::string field_;
};

class OptimizationError : public Error {
public:
    OptimizationError(const std::string& msg, std::string trace_json)
        : Error(msg), trace_json_(std::move(trace_json)) {}
    const std::string& trace_json() const { return trace_json_; }

private:
    std::string trace_json_;
};

}  // namespace uapatch
