#include "exr/gateway/protocol.hpp"

#include <cstring>

namespace exr::gateway {

bool is_known_type(std::uint8_t raw) noexcept {
  switch (static_cast<MsgType>(raw)) {
    case MsgType::Hello:
    case MsgType::HelloAck:
    case MsgType::Rejected:
    case MsgType::ListPatients:
    case MsgType::PatientList:
    case MsgType::FindPatient:
    case MsgType::PatientSummary:
    case MsgType::GetTimeline:
    case MsgType::TimelineLayout:
    case MsgType::GetClusterLayout:
    case MsgType::ClusterLayout:
    case MsgType::GetEventDetail:
    case MsgType::EventDetail:
    case MsgType::ListPipelines:
    case MsgType::PipelineList:
    case MsgType::GetImaging:
    case MsgType::JobAccepted:
    case MsgType::JobStatus:
    case MsgType::MeshBegin:
    case MsgType::MeshEnd:
    case MsgType::JobStatusRequest:
    case MsgType::Error:
    case MsgType::MeshChunk:
      return true;
  }
  return false;
}

bool is_request_type(MsgType t) noexcept {
  switch (t) {
    case MsgType::Hello:
    case MsgType::ListPatients:
    case MsgType::FindPatient:
    case MsgType::GetTimeline:
    case MsgType::GetClusterLayout:
    case MsgType::GetEventDetail:
    case MsgType::ListPipelines:
    case MsgType::GetImaging:
    case MsgType::JobStatusRequest:
      return true;
    default:
      return false;
  }
}

std::string_view to_string(MsgType t) noexcept {
  switch (t) {
    case MsgType::Hello: return "Hello";
    case MsgType::HelloAck: return "HelloAck";
    case MsgType::Rejected: return "Rejected";
    case MsgType::ListPatients: return "ListPatients";
    case MsgType::PatientList: return "PatientList";
    case MsgType::FindPatient: return "FindPatient";
    case MsgType::PatientSummary: return "PatientSummary";
    case MsgType::GetTimeline: return "GetTimeline";
    case MsgType::TimelineLayout: return "TimelineLayout";
    case MsgType::GetClusterLayout: return "GetClusterLayout";
    case MsgType::ClusterLayout: return "ClusterLayout";
    case MsgType::GetEventDetail: return "GetEventDetail";
    case MsgType::EventDetail: return "EventDetail";
    case MsgType::ListPipelines: return "ListPipelines";
    case MsgType::PipelineList: return "PipelineList";
    case MsgType::GetImaging: return "GetImaging";
    case MsgType::JobAccepted: return "JobAccepted";
    case MsgType::JobStatus: return "JobStatus";
    case MsgType::MeshBegin: return "MeshBegin";
    case MsgType::MeshEnd: return "MeshEnd";
    case MsgType::JobStatusRequest: return "JobStatusRequest";
    case MsgType::Error: return "Error";
    case MsgType::MeshChunk: return "MeshChunk";
  }
  return "Unknown";
}

nlohmann::json Frame::json() const {
  if (is_binary_type(type)) throw exr::Error(Errc::MalformedRequest, "binary frame has no JSON body");
  auto body = nlohmann::json::parse(payload, nullptr, /*allow_exceptions=*/false);
  if (body.is_discarded()) throw exr::Error(Errc::MalformedRequest, "payload is not valid JSON");
  return body;
}

Frame make_frame(MsgType type, const nlohmann::json& body) {
  return {type, body.dump()};
}

Frame error_frame(Errc code, std::string_view message, std::optional<MsgType> request) {
  nlohmann::json body = {{"code", std::string(to_string(code))}, {"message", std::string(message)}};
  if (request) body["request_type"] = std::string(to_string(*request));
  return make_frame(MsgType::Error, body);
}

std::string encode_frame(MsgType type, std::string_view payload) {
  if (payload.size() > kMaxPayloadBytes) {
    throw exr::Error(Errc::Oversize, "payload of " + std::to_string(payload.size()) + " bytes exceeds the frame cap");
  }
  std::string out;
  out.reserve(kFrameHeaderBytes + payload.size());
  out.append(kFrameMagic);
  out.push_back(static_cast<char>(type));
  const auto len = static_cast<std::uint32_t>(payload.size());
  for (int shift = 0; shift < 32; shift += 8) out.push_back(static_cast<char>((len >> shift) & 0xFF));
  out.append(payload);
  return out;
}

std::string encode_frame(const Frame& frame) {
  return encode_frame(frame.type, frame.payload);
}

Frame decode_frame(std::string_view bytes, std::size_t* consumed) {
  const std::size_t magic_seen = std::min(bytes.size(), kFrameMagic.size());
  if (bytes.substr(0, magic_seen) != kFrameMagic.substr(0, magic_seen)) {
    throw exr::Error(Errc::BadMagic, "frame does not start with EXR1");
  }
  if (bytes.size() < kFrameHeaderBytes) throw exr::Error(Errc::Truncated, "incomplete frame header");
  const auto raw_type = static_cast<std::uint8_t>(bytes[4]);
  std::uint32_t len = 0;
  for (int i = 0; i < 4; ++i) len |= std::uint32_t{static_cast<std::uint8_t>(bytes[5 + i])} << (8 * i);
  if (len > kMaxPayloadBytes) {
    throw exr::Error(Errc::Oversize, "declared payload of " + std::to_string(len) + " bytes exceeds the frame cap");
  }
  if (!is_known_type(raw_type)) {
    throw exr::Error(Errc::UnknownType, "unknown message type " + std::to_string(raw_type));
  }
  if (bytes.size() - kFrameHeaderBytes < len) throw exr::Error(Errc::Truncated, "incomplete frame payload");
  if (consumed) *consumed = kFrameHeaderBytes + len;
  return {static_cast<MsgType>(raw_type), std::string(bytes.substr(kFrameHeaderBytes, len))};
}

std::optional<Frame> FrameReader::next() {
  std::size_t used = 0;
  Frame frame;
  try {
    frame = decode_frame(std::string_view(buffer_).substr(offset_), &used);
  } catch (const exr::Error& e) {
    if (e.code() == Errc::Truncated) return std::nullopt;
    throw;
  }
  offset_ += used;
  if (offset_ > (std::size_t{1} << 16) && offset_ * 2 > buffer_.size()) {
    buffer_.erase(0, offset_);
    offset_ = 0;
  }
  return frame;
}

}  // namespace exr::gateway
