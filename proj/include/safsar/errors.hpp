#pragma once

#include <stdexcept>
#include <string>

namespace safsar {

/// Base of every error thrown by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Shape disagreement between operands.
class DimensionError : public Error {
public:
    using Error::Error;
};

/// Argument outside the mathematical domain of an operation (empty input, T = 0, ...).
class DomainError : public Error {
public:
    using Error::Error;
};

/// Caller broke a precondition that is not about shapes.
class ContractError : public Error {
public:
    using Error::Error;
};

/// Invalid static configuration (head count, tubelet divisibility, crop size, ...).
class ConfigError : public Error {
public:
    using Error::Error;
};

/// A Var was used after its tape was reset.
class StaleTapeError : public Error {
public:
    using Error::Error;
};

/// Cosine of a vector whose norm is numerically zero.
class DegenerateVectorError : public Error {
public:
    using Error::Error;
};

/// A dataset split cannot supply the requested episode.
class CapacityError : public Error {
public:
    using Error::Error;
};

/// Training produced a non-finite loss.
class DivergedError : public Error {
public:
    DivergedError(std::size_t episode, const std::string& what)
        : Error(what), episode_(episode) {}
    std::size_t episode() const noexcept { return episode_; }

private:
    std::size_t episode_;
};

/// Finite-difference probe observed a non-deterministic objective.
class GradCheckInvalid : public Error {
public:
    using Error::Error;
};

// Cache format errors.
class CacheError : public Error {
public:
    using Error::Error;
};
class NotACacheError : public CacheError {
public:
    using CacheError::CacheError;
};
class CacheVersionError : public CacheError {
public:
    using CacheError::CacheError;
};
class CacheCorruptionError : public CacheError {
public:
    using CacheError::CacheError;
};
class CacheIoError : public CacheError {
public:
    using CacheError::CacheError;
};

}  // namespace safsar
