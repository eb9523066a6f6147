#include <acn/wire.hpp>

#include <bit>
#include <cstring>
#include <string>

namespace acn::wire {

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) {
    out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
}

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) {
    out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
}

void put_f64(std::vector<std::uint8_t>& out, double v) {
  put_u64(out, std::bit_cast<std::uint64_t>(v));
}

std::uint32_t get_u32(const std::uint8_t* p) {
  std::uint32_t v = 0;
  for (int i = 3; i >= 0; --i) {
    v = (v << 8) | p[i];
  }
  return v;
}

std::uint64_t get_u64(const std::uint8_t* p) {
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) {
    v = (v << 8) | p[i];
  }
  return v;
}

double get_f64(const std::uint8_t* p) { return std::bit_cast<double>(get_u64(p)); }

std::vector<std::uint8_t> encode(const Message& msg) {
  std::vector<std::uint8_t> out;
  out.reserve(kHeaderSize + 8 * msg.payload.size());
  for (std::uint8_t b : kMagic) {
    out.push_back(b);
  }
  out.push_back(static_cast<std::uint8_t>(msg.tag));
  put_u32(out, msg.worker_id);
  put_u64(out, msg.round_id);
  put_u64(out, msg.payload.size());
  for (double v : msg.payload) {
    put_f64(out, v);
  }
  return out;
}

Header decode_header(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kHeaderSize) {
    throw Error(ErrorCode::MalformedMessage, "frame shorter than header");
  }
  if (std::memcmp(bytes.data(), kMagic.data(), kMagic.size()) != 0) {
    throw Error(ErrorCode::MalformedMessage, "bad frame magic");
  }
  const std::uint8_t tag = bytes[4];
  if (tag > 2) {
    throw Error(ErrorCode::MalformedMessage, "unknown tag " + std::to_string(tag));
  }
  Header h{};
  h.tag = static_cast<Tag>(tag);
  h.worker_id = get_u32(bytes.data() + 5);
  h.round_id = get_u64(bytes.data() + 9);
  h.count = get_u64(bytes.data() + 17);
  return h;
}

Message decode(std::span<const std::uint8_t> bytes) {
  const Header h = decode_header(bytes);
  if (h.count > (bytes.size() - kHeaderSize) / 8 || bytes.size() != kHeaderSize + 8 * h.count) {
    throw Error(ErrorCode::MalformedMessage, "frame length does not match payload count");
  }
  Message msg;
  msg.tag = h.tag;
  msg.worker_id = h.worker_id;
  msg.round_id = h.round_id;
  msg.payload.resize(h.count);
  for (std::uint64_t i = 0; i < h.count; ++i) {
    msg.payload[i] = get_f64(bytes.data() + kHeaderSize + 8 * i);
  }
  return msg;
}

std::vector<std::uint8_t> encode_payload(std::span<const double> values) {
  std::vector<std::uint8_t> out;
  out.reserve(8 + 8 * values.size());
  put_u64(out, values.size());
  for (double v : values) {
    put_f64(out, v);
  }
  return out;
}

std::vector<double> decode_payload(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 8) {
    throw Error(ErrorCode::MalformedMessage, "payload shorter than count prefix");
  }
  const std::uint64_t count = get_u64(bytes.data());
  if (count != (bytes.size() - 8) / 8 || bytes.size() != 8 + 8 * count) {
    throw Error(ErrorCode::MalformedMessage, "payload length does not match count");
  }
  std::vector<double> values(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    values[i] = get_f64(bytes.data() + 8 + 8 * i);
  }
  return values;
}

}  // namespace acn::wire
