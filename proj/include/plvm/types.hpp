#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace plvm {

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

template <typename Scalar>
using RowMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

using Index = Eigen::Index;
using Count = std::int64_t;

using MatrixXd = Matrix<double>;
using VectorXd = Vector<double>;

/// D x V table of nonnegative counts, one row per sample.
using CountArray = RowMatrix<Count>;
using CountVector = Vector<Count>;

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Invalid distribution parameters or transform inputs.
class DomainError : public Error {
public:
    using Error::Error;
};

/// Index or size outside the permitted range.
class BoundsError : public Error {
public:
    using Error::Error;
};

/// Inconsistent or missing run configuration.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Malformed input file; the message names the offending row and column.
class ParseError : public Error {
public:
    ParseError(const std::string &what, std::string row, std::string column)
        : Error(what), row_(std::move(row)), column_(std::move(column)) {}

    const std::string &row() const { return row_; }
    const std::string &column() const { return column_; }

private:
    std::string row_;
    std::string column_;
};

/// A fit produced a non-finite objective or state.
class NumericalError : public Error {
public:
    NumericalError(const std::string &what, long iteration)
        : Error(what), iteration_(iteration) {}

    long iteration() const { return iteration_; }

private:
    long iteration_;
};

}  // namespace plvm
