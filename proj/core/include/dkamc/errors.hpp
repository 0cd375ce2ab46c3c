#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace dkamc {

// Root of every error the library throws. Subclasses carry the category the
// CLI maps onto exit codes.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class InvalidArgument : public Error {
public:
    using Error::Error;
};

class ShapeError : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

class InvalidSymbol : public InvalidArgument {
public:
    using InvalidArgument::InvalidArgument;
};

class ZeroPowerError : public InvalidArgument {
public:
    using InvalidArgument::InvalidArgument;
};

class InfiniteSnrError : public InvalidArgument {
public:
    using InvalidArgument::InvalidArgument;
};

class DegenerateTaxonomy : public InvalidArgument {
public:
    using InvalidArgument::InvalidArgument;
};

class NonScalarOutput : public InvalidArgument {
public:
    using InvalidArgument::InvalidArgument;
};

enum class FormatErrorKind { BadMagic, UnknownVersion, Truncated, Malformed };

class FormatError : public Error {
public:
    FormatError(FormatErrorKind kind, const std::string& what) : Error(what), kind_(kind) {}
    FormatErrorKind kind() const noexcept { return kind_; }

private:
    FormatErrorKind kind_;
};

class DivergenceError : public Error {
public:
    DivergenceError(const std::string& stage, int epoch, std::size_t batch, double loss);
    int epoch() const noexcept { return epoch_; }
    std::size_t batch() const noexcept { return batch_; }

private:
    int epoch_;
    std::size_t batch_;
};

}  // namespace dkamc
