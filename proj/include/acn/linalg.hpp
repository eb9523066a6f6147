#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>

namespace acn {

template <typename Scalar>
using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

template <typename Scalar>
using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

using Vector = Vec<double>;
using Matrix = Mat<double>;

enum class ErrorCode {
  InvalidParameter,
  DimensionMismatch,
  NonSymmetric,
  DimensionOverLimit,
  NotPositiveSemidefinite,
  NonConvergence,
  IndivisibleN,
  TooManyWorkers,
  DegenerateEstimateSequence,
  OddCommunicationCount,
  Transport,
  Timeout,
  MalformedMessage,
  RuntimeClosed,
  Config,
  Io,
};

const char* to_string(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

inline void require_dim(Eigen::Index got, Eigen::Index want, const char* what) {
  if (got != want) {
    throw Error(ErrorCode::DimensionMismatch,
                std::string(what) + ": expected dimension " + std::to_string(want) +
                    ", got " + std::to_string(got));
  }
}

}  // namespace acn
