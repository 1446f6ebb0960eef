#pragma once

#include <stdexcept>
#include <string>

namespace svymc {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class InvalidInput : public Error { using Error::Error; };
class ShapeError : public Error { using Error::Error; };
class DomainError : public Error { using Error::Error; };
class NumericalFailure : public Error { using Error::Error; };

// missing mechanism
class StratumTooSmall : public Error { using Error::Error; };

// tuning
class FoldError : public Error { using Error::Error; };

// simulator
class DesignError : public Error { using Error::Error; };

// baselines
class ColumnEmpty : public Error { using Error::Error; };

// evaluation
class DegenerateTruth : public Error { using Error::Error; };

// io
class SchemaViolation : public Error { using Error::Error; };
class WeightError : public Error { using Error::Error; };

}  // namespace svymc
