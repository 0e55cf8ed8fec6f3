#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <stdexcept>
#include <string>

namespace uqf {

using Index = Eigen::Index;

template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using Matrix = MatrixX<double>;
using Vector = VectorX<double>;
using Mask = Eigen::Array<bool, Eigen::Dynamic, 1>;

// Error hierarchy. The CLI maps these onto exit codes.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ConfigError : Error {
  using Error::Error;
};
struct SchemaError : Error {
  using Error::Error;
};
struct ParseError : Error {
  ParseError(const std::string& what, Index row)
      : Error(what + " (row " + std::to_string(row) + ")"), row(row) {}
  Index row;
};
struct IoError : Error {
  using Error::Error;
};
struct FitError : Error {
  using Error::Error;
};
struct QueryError : Error {
  using Error::Error;
};
struct MetricError : Error {
  using Error::Error;
};
struct TuningError : Error {
  using Error::Error;
};
struct FormatError : Error {
  using Error::Error;
};
// Real-data input the user has to supply is absent.
struct MissingDataError : Error {
  using Error::Error;
};

// splitmix64 finalizer; used to derive independent RNG streams from
// (master seed, stream index) pairs.
constexpr std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

}  // namespace uqf
