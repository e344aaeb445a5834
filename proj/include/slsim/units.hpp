#pragma once

#include <cmath>
#include <cstdint>

namespace slsim {

using UeId = std::uint32_t;
using Slot = std::int64_t;

inline double db_to_linear(double db) { return std::pow(10.0, db / 10.0); }
inline double linear_to_db(double lin) { return 10.0 * std::log10(lin); }

/// Contiguous subchannel range [first, first + count).
struct SubchannelRange {
  int first = 0;
  int count = 0;

  int end() const { return first + count; }
  bool empty() const { return count <= 0; }
  bool contains(int sc) const { return sc >= first && sc < end(); }

  int overlap(const SubchannelRange& o) const {
    const int lo = first > o.first ? first : o.first;
    const int hi = end() < o.end() ? end() : o.end();
    return hi > lo ? hi - lo : 0;
  }

  /// Bit i set for each subchannel i in the range.
  std::uint32_t mask() const {
    if (count <= 0) return 0;
    return ((count >= 32 ? 0xffffffffu : ((1u << count) - 1u)) << first);
  }

  friend bool operator==(const SubchannelRange&, const SubchannelRange&) = default;
};

}  // namespace slsim
