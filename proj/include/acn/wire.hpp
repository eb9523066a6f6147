#pragma once

// Binary framing shared by the TCP transport and the binary dataset format.
//
// Frame layout, all integers little-endian:
//   magic    4 bytes  41 43 4E 31 ("ACN1")
//   tag      1 byte   0 = EVAL_REQ, 1 = EVAL_REPLY, 2 = SHUTDOWN
//   worker   4 bytes  u32
//   round    8 bytes  u64
//   count    8 bytes  u64, number of payload values
//   payload  count * 8 bytes, IEEE-754 binary64

#include <acn/linalg.hpp>

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace acn::wire {

inline constexpr std::array<std::uint8_t, 4> kMagic = {0x41, 0x43, 0x4E, 0x31};
inline constexpr std::size_t kHeaderSize = 4 + 1 + 4 + 8 + 8;

enum class Tag : std::uint8_t { EvalReq = 0, EvalReply = 1, Shutdown = 2 };

struct Message {
  Tag tag = Tag::EvalReq;
  std::uint64_t round_id = 0;
  std::uint32_t worker_id = 0;
  std::vector<double> payload;

  bool operator==(const Message&) const = default;
};

struct Header {
  Tag tag;
  std::uint32_t worker_id;
  std::uint64_t round_id;
  std::uint64_t count;
};

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v);
void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v);
void put_f64(std::vector<std::uint8_t>& out, double v);
std::uint32_t get_u32(const std::uint8_t* p);
std::uint64_t get_u64(const std::uint8_t* p);
double get_f64(const std::uint8_t* p);

std::vector<std::uint8_t> encode(const Message& msg);

/// Parses the fixed-size header; throws MalformedMessage on bad magic or tag.
Header decode_header(std::span<const std::uint8_t> bytes);

/// Decodes exactly one frame occupying all of `bytes`.
Message decode(std::span<const std::uint8_t> bytes);

/// Count-prefixed binary64 sequence: u64 LE count followed by the values.
std::vector<std::uint8_t> encode_payload(std::span<const double> values);
std::vector<double> decode_payload(std::span<const std::uint8_t> bytes);

}  // namespace acn::wire
