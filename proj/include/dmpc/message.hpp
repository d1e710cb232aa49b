#pragma once

#include <cstdint>
#include <cstring>
#include <vector>

#include "dmpc/types.hpp"

namespace dmpc {

// Consensus traffic between neighbors. CopyAndMultiplier carries the sender's
// copy of the receiver's trajectory together with the sender's multiplier for
// that copy; Average carries the sender's averaged own trajectory.
enum class MsgKind : std::uint8_t { CopyAndMultiplier = 1, Average = 2 };

struct AdmmMessage {
  MsgKind kind = MsgKind::CopyAndMultiplier;
  std::uint32_t k = 0;  // outer (linearization) iteration
  std::uint32_t l = 0;  // inner (consensus) iteration
  std::uint32_t sender = 0;
  std::uint32_t receiver = 0;
  Vec payload;
};

// Wire layout, little-endian: kind u8, k u32, l u32, sender u32, receiver u32,
// count u32, then count doubles.
inline std::vector<std::uint8_t> serialize(const AdmmMessage& m) {
  std::vector<std::uint8_t> out(1 + 5 * 4 + sizeof(double) * m.payload.size());
  std::uint8_t* p = out.data();
  *p++ = static_cast<std::uint8_t>(m.kind);
  auto put32 = [&p](std::uint32_t v) {
    std::memcpy(p, &v, 4);
    p += 4;
  };
  put32(m.k);
  put32(m.l);
  put32(m.sender);
  put32(m.receiver);
  put32(static_cast<std::uint32_t>(m.payload.size()));
  std::memcpy(p, m.payload.data(), sizeof(double) * m.payload.size());
  return out;
}

inline AdmmMessage deserialize(const std::vector<std::uint8_t>& bytes) {
  require(bytes.size() >= 21, "message: truncated header");
  AdmmMessage m;
  const std::uint8_t* p = bytes.data();
  const std::uint8_t kind = *p++;
  require(kind == 1 || kind == 2, "message: unknown kind");
  m.kind = static_cast<MsgKind>(kind);
  auto get32 = [&p]() {
    std::uint32_t v;
    std::memcpy(&v, p, 4);
    p += 4;
    return v;
  };
  m.k = get32();
  m.l = get32();
  m.sender = get32();
  m.receiver = get32();
  const std::uint32_t count = get32();
  require(bytes.size() == 21 + sizeof(double) * count, "message: length mismatch");
  m.payload.resize(count);
  std::memcpy(m.payload.data(), p, sizeof(double) * count);
  require(m.payload.allFinite(), "message: non-finite payload");
  return m;
}

}  // namespace dmpc
