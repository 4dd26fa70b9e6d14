#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace exr {

/// Machine-readable failure codes shared by every module. The names are what
/// travel in wire-protocol Error frames, so they are part of the interface.
enum class Errc {
  // fhir-model
  MalformedJson,
  NotABundle,
  DuplicateResource,
  NotFound,
  // timeline-engine
  TooFewVisits,
  InvalidDensity,
  InvalidGap,
  InvalidParams,
  NoEncounters,
  // cohort
  EmptyQuery,
  NoPatients,
  CohortTooLarge,
  // volumetrics
  SizeMismatch,
  UnsupportedDtype,
  MalformedHeader,
  LabelIsZero,
  LabelAbsent,
  DimMismatch,
  MalformedMesh,
  // pipeline-orchestrator
  DuplicateId,
  InvalidDescriptor,
  UnknownPipeline,
  MissingInput,
  UnknownJob,
  EmptyVolume,
  Timeout,
  ShuttingDown,
  // upstream-clients
  AuthRejected,
  EndpointUnreachable,
  Unauthorized,
  UpstreamError,
  PageCapExceeded,
  PathEscapesRoot,
  IoError,
  // gateway
  BadMagic,
  Oversize,
  Truncated,
  UnknownType,
  NotAllowlisted,
  MalformedHello,
  MalformedRequest,
  NotReady,
  UnexpectedType,
  SessionClosed,
  // cli
  ConfigError,
  Internal,
};

std::string_view to_string(Errc code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& message)
      : std::runtime_error(message), code_(code) {}
  explicit Error(Errc code) : Error(code, std::string(to_string(code))) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

}  // namespace exr
