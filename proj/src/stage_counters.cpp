#include "o4d/stage_counters.hpp"

namespace o4d {

StageCounters& stage_counters() {
  static StageCounters counters;
  return counters;
}

}  // namespace o4d
