#pragma once

#include <compare>
#include <cstdint>
#include <functional>
#include <string>

namespace selep {

/// Global block identity: the n-th block of a table.
struct BlockId {
  std::uint32_t table = 0;
  std::uint32_t block = 0;

  friend auto operator<=>(const BlockId&, const BlockId&) = default;
};

inline std::string to_string(BlockId id) {
  return std::to_string(id.table) + ":" + std::to_string(id.block);
}

using PartitionId = std::uint32_t;
using Lba = std::uint64_t;

}  // namespace selep

template <>
struct std::hash<selep::BlockId> {
  std::size_t operator()(const selep::BlockId& id) const noexcept {
    return std::hash<std::uint64_t>{}((std::uint64_t{id.table} << 32) | id.block);
  }
};
