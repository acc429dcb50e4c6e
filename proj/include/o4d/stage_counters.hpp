#pragma once

#include <atomic>
#include <cstdint>

namespace o4d {

// Process-wide call counters for the expensive build stages. The query path
// must leave all of them untouched.
struct StageCounters {
  std::atomic<std::uint64_t> render{0};
  std::atomic<std::uint64_t> track{0};
  std::atomic<std::uint64_t> validate{0};
  std::atomic<std::uint64_t> fuse{0};
  std::atomic<std::uint64_t> embed{0};

  void reset() {
    render = 0;
    track = 0;
    validate = 0;
    fuse = 0;
    embed = 0;
  }
};

StageCounters& stage_counters();

}  // namespace o4d
