#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

#include "exr/error.hpp"

namespace exr::gateway {

/// Frame layout: "EXR1" | u8 msg_type | u32 LE payload_len | payload.
inline constexpr std::string_view kFrameMagic = "EXR1";
inline constexpr std::size_t kFrameHeaderBytes = 9;
inline constexpr std::size_t kMaxPayloadBytes = std::size_t{64} << 20;
inline constexpr std::size_t kStreamChunkBytes = std::size_t{1} << 20;

enum class MsgType : std::uint8_t {
  Hello = 0x01,
  HelloAck = 0x02,
  Rejected = 0x03,
  ListPatients = 0x10,
  PatientList = 0x11,
  FindPatient = 0x12,
  PatientSummary = 0x13,
  GetTimeline = 0x14,
  TimelineLayout = 0x15,
  GetClusterLayout = 0x16,
  ClusterLayout = 0x17,
  GetEventDetail = 0x18,
  EventDetail = 0x19,
  ListPipelines = 0x20,
  PipelineList = 0x21,
  GetImaging = 0x22,
  JobAccepted = 0x23,
  JobStatus = 0x24,
  MeshBegin = 0x25,
  MeshEnd = 0x26,
  JobStatusRequest = 0x27,
  Error = 0x7F,
  MeshChunk = 0x80,
};

bool is_known_type(std::uint8_t raw) noexcept;
/// 0x80 and above carry raw bytes; everything else carries UTF-8 JSON.
constexpr bool is_binary_type(MsgType t) noexcept { return static_cast<std::uint8_t>(t) >= 0x80; }
/// Types a client may send.
bool is_request_type(MsgType t) noexcept;
std::string_view to_string(MsgType t) noexcept;

struct Frame {
  MsgType type = MsgType::Error;
  std::string payload;

  nlohmann::json json() const;  // Throws Error{MalformedRequest}.
  bool operator==(const Frame&) const = default;
};

Frame make_frame(MsgType type, const nlohmann::json& body);
/// {code, message, request_type?}
Frame error_frame(Errc code, std::string_view message, std::optional<MsgType> request = std::nullopt);

/// Throws Error{Oversize}.
std::string encode_frame(const Frame& frame);
std::string encode_frame(MsgType type, std::string_view payload);

/// Decodes the frame at the front of `bytes`; `consumed` receives its total
/// size so trailing bytes can be fed to the next call. Throws
/// Error{Truncated | BadMagic | Oversize | UnknownType}. Header problems are
/// reported as soon as enough bytes are present to see them.
Frame decode_frame(std::string_view bytes, std::size_t* consumed = nullptr);

/// Incremental decoder for a byte stream.
class FrameReader {
 public:
  void feed(std::string_view bytes) { buffer_.append(bytes); }
  /// Next complete frame, or nullopt when more bytes are needed. Rethrows
  /// BadMagic, Oversize and UnknownType.
  std::optional<Frame> next();
  std::size_t buffered() const { return buffer_.size() - offset_; }

 private:
  std::string buffer_;
  std::size_t offset_ = 0;
};

}  // namespace exr::gateway
