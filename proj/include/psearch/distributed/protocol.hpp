#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "psearch/distributed/socket.hpp"

namespace psearch::distributed {

/// Wire format: every frame is
///
///   u32 length (LE, counts the type byte and body) | u8 type | body
///
/// type 0 (json):   body is one UTF-8 JSON document.
/// type 1 (binary): body is u32 header length (LE) | JSON header | raw
///                  little-endian f32 values. Allowed only on connections
///                  whose hello negotiated binary_vectors.
///
/// Requests are {op, request_id, payload} with op one of hello, add,
/// search, stats. Responses are {request_id, status: "ok"|"error", ...}.
/// In a binary search request the floats are the query vector; in a
/// binary add request they are the item vectors concatenated in order.
enum class FrameType : std::uint8_t { json = 0, binary = 1 };

inline constexpr std::uint32_t kProtocolVersion = 1;
inline constexpr std::uint32_t kMaxFrameBytes = 1u << 30;

struct Frame {
  FrameType type = FrameType::json;
  nlohmann::json header;
  std::vector<float> floats;  // binary frames only
};

std::string encode_frame(const Frame& frame);
/// Throws ParseError on malformed bodies.
Frame decode_frame(FrameType type, std::string_view body);

void write_frame(Socket& socket, const Frame& frame, Deadline deadline);
Frame read_frame(Socket& socket, Deadline deadline);

namespace ops {
inline constexpr std::string_view hello = "hello";
inline constexpr std::string_view add = "add";
inline constexpr std::string_view search = "search";
inline constexpr std::string_view stats = "stats";
}  // namespace ops

nlohmann::json error_response(std::uint64_t request_id, std::string_view code, std::string_view message);

}  // namespace psearch::distributed
