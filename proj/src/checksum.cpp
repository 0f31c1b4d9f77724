#include "csteer/checksum.hpp"

#include <cstdio>

namespace csteer {

std::string to_hex(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string Fnv1a::hex() const { return to_hex(state_); }

}  // namespace csteer
