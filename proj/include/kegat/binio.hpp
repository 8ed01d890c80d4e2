#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>

#include "kegat/error.hpp"

// Little-endian primitives shared by the KB image and checkpoint formats.
namespace kegat::binio {

static_assert(std::endian::native == std::endian::little, "little-endian host required");

inline constexpr char kMagic[4] = {'K', 'G', 'A', 'T'};

template <class T>
void put(std::ostream& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.write(buf, sizeof(T));
}

template <class T>
T get(std::istream& in) {
  char buf[sizeof(T)];
  if (!in.read(buf, sizeof(T))) throw DataError("truncated binary file");
  T v;
  std::memcpy(&v, buf, sizeof(T));
  return v;
}

inline void put_string(std::ostream& out, const std::string& s) {
  put<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::string get_string(std::istream& in) {
  const auto n = get<std::uint32_t>(in);
  std::string s(n, '\0');
  if (n && !in.read(s.data(), n)) throw DataError("truncated binary file");
  return s;
}

inline void put_header(std::ostream& out, std::uint8_t version) {
  out.write(kMagic, 4);
  put<std::uint8_t>(out, version);
}

// Returns the version byte; throws when the magic does not match.
inline std::uint8_t get_header(std::istream& in) {
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0) {
    throw DataError("bad magic: not a KGAT file");
  }
  return get<std::uint8_t>(in);
}

}  // namespace kegat::binio
