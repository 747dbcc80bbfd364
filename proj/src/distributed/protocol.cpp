#include "psearch/distributed/protocol.hpp"

#include <cstring>

#include "psearch/binary_io.hpp"
#include "psearch/errors.hpp"

namespace psearch::distributed {

std::string encode_frame(const Frame& frame) {
  const std::string json = frame.header.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace);
  io::Writer body;
  body.put(static_cast<std::uint8_t>(frame.type));
  if (frame.type == FrameType::binary) {
    body.put<std::uint32_t>(static_cast<std::uint32_t>(json.size()));
    body.put_bytes({reinterpret_cast<const std::uint8_t*>(json.data()), json.size()});
    body.put_floats(frame.floats);
  } else {
    body.put_bytes({reinterpret_cast<const std::uint8_t*>(json.data()), json.size()});
  }
  if (body.data().size() > kMaxFrameBytes) throw Error("frame exceeds maximum size");
  io::Writer out;
  out.put<std::uint32_t>(static_cast<std::uint32_t>(body.data().size()));
  out.put_bytes({reinterpret_cast<const std::uint8_t*>(body.data().data()), body.data().size()});
  return out.take();
}

Frame decode_frame(FrameType type, std::string_view body) {
  Frame frame;
  frame.type = type;
  std::string_view json = body;
  if (type == FrameType::binary) {
    if (body.size() < 4) throw ParseError("frame", "binary frame shorter than its header length");
    io::Reader r(body);
    const auto header_len = r.get<std::uint32_t>();
    if (header_len > r.remaining()) throw ParseError("frame", "binary frame header exceeds frame");
    json = body.substr(4, header_len);
    const auto rest = body.size() - 4 - header_len;
    if (rest % sizeof(float) != 0) throw ParseError("frame", "binary payload is not a whole number of floats");
    frame.floats.resize(rest / sizeof(float));
    std::memcpy(frame.floats.data(), body.data() + 4 + header_len, rest);
  } else if (type != FrameType::json) {
    throw ParseError("frame", "unknown frame type");
  }
  try {
    frame.header = nlohmann::json::parse(json);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError("frame", std::string("invalid JSON frame: ") + e.what());
  }
  return frame;
}

void write_frame(Socket& socket, const Frame& frame, Deadline deadline) {
  socket.send_all(encode_frame(frame), deadline);
}

Frame read_frame(Socket& socket, Deadline deadline) {
  std::uint32_t len = 0;
  socket.recv_exact(reinterpret_cast<char*>(&len), sizeof len, deadline);
  if (len == 0 || len > kMaxFrameBytes) throw TransportError("invalid frame length " + std::to_string(len));
  std::string body(len, '\0');
  socket.recv_exact(body.data(), len, deadline);
  const auto type = static_cast<FrameType>(static_cast<std::uint8_t>(body[0]));
  if (type != FrameType::json && type != FrameType::binary) throw TransportError("unknown frame type");
  return decode_frame(type, std::string_view(body).substr(1));
}

nlohmann::json error_response(std::uint64_t request_id, std::string_view code, std::string_view message) {
  return {{"request_id", request_id}, {"status", "error"}, {"error", {{"code", code}, {"message", message}}}};
}

}  // namespace psearch::distributed
