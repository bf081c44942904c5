#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>

namespace stereorecon {

/// Base of every exception thrown by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Invalid configuration or recipe; the message names the conflicting fields.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Tensor or frame dimensions do not satisfy an operation's contract.
class ShapeError : public Error {
public:
    using Error::Error;
};

/// A dataset as a whole is unusable (missing directories, count mismatch, ...).
class DataError : public Error {
public:
    using Error::Error;
};

/// A single input file is unreadable or inconsistent with its siblings.
class ItemError : public DataError {
public:
    ItemError(const std::filesystem::path& path, const std::string& what)
        : DataError(path.string() + ": " + what), path_(path) {}

    const std::filesystem::path& path() const noexcept { return path_; }

private:
    std::filesystem::path path_;
};

/// Pretrained weights are missing, unreadable or do not match the network.
class WeightsError : public Error {
public:
    using Error::Error;
};

/// Training hit a non-finite loss or ran out of resources.
class TrainingError : public Error {
public:
    TrainingError(const std::string& what, std::filesystem::path last_good_checkpoint)
        : Error(what), last_good_(std::move(last_good_checkpoint)) {}

    const std::filesystem::path& last_good_checkpoint() const noexcept { return last_good_; }

private:
    std::filesystem::path last_good_;
};

/// A study operation was rejected without changing any state.
class StudyError : public Error {
public:
    enum class Kind { not_found, rejected, completed, invalid };

    StudyError(Kind kind, const std::string& what) : Error(what), kind_(kind) {}

    Kind kind() const noexcept { return kind_; }

private:
    Kind kind_;
};

}  // namespace stereorecon
