#include "exr/error.hpp"

namespace exr {

std::string_view to_string(Errc code) noexcept {
  switch (code) {
    case Errc::MalformedJson: return "MalformedJson";
    case Errc::NotABundle: return "NotABundle";
    case Errc::DuplicateResource: return "DuplicateResource";
    case Errc::NotFound: return "NotFound";
    case Errc::TooFewVisits: return "TooFewVisits";
    case Errc::InvalidDensity: return "InvalidDensity";
    case Errc::InvalidGap: return "InvalidGap";
    case Errc::InvalidParams: return "InvalidParams";
    case Errc::NoEncounters: return "NoEncounters";
    case Errc::EmptyQuery: return "EmptyQuery";
    case Errc::NoPatients: return "NoPatients";
    case Errc::CohortTooLarge: return "CohortTooLarge";
    case Errc::SizeMismatch: return "SizeMismatch";
    case Errc::UnsupportedDtype: return "UnsupportedDtype";
    case Errc::MalformedHeader: return "MalformedHeader";
    case Errc::LabelIsZero: return "LabelIsZero";
    case Errc::LabelAbsent: return "LabelAbsent";
    case Errc::DimMismatch: return "DimMismatch";
    case Errc::MalformedMesh: return "MalformedMesh";
    case Errc::DuplicateId: return "DuplicateId";
    case Errc::InvalidDescriptor: return "InvalidDescriptor";
    case Errc::UnknownPipeline: return "UnknownPipeline";
    case Errc::MissingInput: return "MissingInput";
    case Errc::UnknownJob: return "UnknownJob";
    case Errc::EmptyVolume: return "EmptyVolume";
    case Errc::Timeout: return "Timeout";
    case Errc::ShuttingDown: return "ShuttingDown";
    case Errc::AuthRejected: return "AuthRejected";
    case Errc::EndpointUnreachable: return "EndpointUnreachable";
    case Errc::Unauthorized: return "Unauthorized";
    case Errc::UpstreamError: return "UpstreamError";
    case Errc::PageCapExceeded: return "PageCapExceeded";
    case Errc::PathEscapesRoot: return "PathEscapesRoot";
    case Errc::IoError: return "IoError";
    case Errc::BadMagic: return "BadMagic";
    case Errc::Oversize: return "Oversize";
    case Errc::Truncated: return "Truncated";
    case Errc::UnknownType: return "UnknownType";
    case Errc::NotAllowlisted: return "NotAllowlisted";
    case Errc::MalformedHello: return "MalformedHello";
    case Errc::MalformedRequest: return "MalformedRequest";
    case Errc::NotReady: return "NotReady";
    case Errc::UnexpectedType: return "UnexpectedType";
    case Errc::SessionClosed: return "SessionClosed";
    case Errc::ConfigError: return "ConfigError";
    case Errc::Internal: return "Internal";
  }
  return "Internal";
}

}  // namespace exr
