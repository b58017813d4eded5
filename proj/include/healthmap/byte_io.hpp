#pragma once

// Little-endian field access over byte buffers. Readers are bounds-checked
// and report out-of-range reads through the supplied error code.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "healthmap/error.hpp"

namespace healthmap::bytes {

template <typename T>
T load_le(std::span<const std::uint8_t> buf, std::size_t pos) {
  T v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(static_cast<T>(buf[pos + i]) << (8 * i));
  return v;
}

template <typename T>
void store_le(std::span<std::uint8_t> buf, std::size_t pos, T value) {
  for (std::size_t i = 0; i < sizeof(T); ++i) buf[pos + i] = static_cast<std::uint8_t>(value >> (8 * i));
}

template <typename T>
void append_le(std::vector<std::uint8_t>& out, T value) {
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<std::uint8_t>(value >> (8 * i)));
}

// Checked read; `what` names the field in the error message.
template <typename T>
T read_le(std::span<const std::uint8_t> buf, std::size_t pos, ErrorCode code, const char* what) {
  if (pos > buf.size() || buf.size() - pos < sizeof(T)) {
    throw Error(code, std::string(what) + " at byte " + std::to_string(pos) + " lies outside the " +
                          std::to_string(buf.size()) + "-byte buffer");
  }
  return load_le<T>(buf, pos);
}

}  // namespace healthmap::bytes
