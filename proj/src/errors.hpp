#pragma once

#include <stdexcept>
#include <string>

namespace cfp {

enum class ErrorCode {
  InvalidArgument,
  Io,
  NonPositiveDepth,
  DegenerateConfiguration,
  SolverDiverged,
  RankDeficient,
  EmptyInput,
  OutOfRange,
  SingularCovariance,
  EpsilonOutOfRange,
  ZeroPeakProbability,
  TooFewCandidates,
  DegenerateInliers,
  DimensionMismatch,
  NotPositiveDefinite,
  NoValidSamples,
  NumericalFailure,
  CertificateUnavailable,
  OutOfFrustum,
  InfeasiblePurse,
};

inline const char* error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::Io: return "Io";
    case ErrorCode::NonPositiveDepth: return "NonPositiveDepth";
    case ErrorCode::DegenerateConfiguration: return "DegenerateConfiguration";
    case ErrorCode::SolverDiverged: return "SolverDiverged";
    case ErrorCode::RankDeficient: return "RankDeficient";
    case ErrorCode::EmptyInput: return "EmptyInput";
    case ErrorCode::OutOfRange: return "OutOfRange";
    case ErrorCode::SingularCovariance: return "SingularCovariance";
    case ErrorCode::EpsilonOutOfRange: return "EpsilonOutOfRange";
    case ErrorCode::ZeroPeakProbability: return "ZeroPeakProbability";
    case ErrorCode::TooFewCandidates: return "TooFewCandidates";
    case ErrorCode::DegenerateInliers: return "DegenerateInliers";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::NotPositiveDefinite: return "NotPositiveDefinite";
    case ErrorCode::NoValidSamples: return "NoValidSamples";
    case ErrorCode::NumericalFailure: return "NumericalFailure";
    case ErrorCode::CertificateUnavailable: return "CertificateUnavailable";
    case ErrorCode::OutOfFrustum: return "OutOfFrustum";
    case ErrorCode::InfeasiblePurse: return "InfeasiblePurse";
  }
  return "Unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) {
  throw Error(code, what);
}

}  // namespace cfp
