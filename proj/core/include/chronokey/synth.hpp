#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "chronokey/corpus.hpp"

namespace chronokey {

/// Controlled-corpus generator. Every event month carries a unique two-
/// character place marker; distractor commentary re-mentions a neighboring
/// month's event (same marker and rendered key) but is keyed one month away,
/// so purely lexical retrieval is pulled toward the wrong month.
struct SynthSpec {
  std::vector<std::string> gongs = {"隐公", "桓公", "庄公", "闵公"};
  int Y = 8;
  int M = 12;                   // natural months used for events (manifest pads to 13)
  double event_rate = 0.6;      // P(an eligible month carries an event)
  double distractor_rate = 0.5; // P(an event spawns an adjacent-month distractor)
  uint64_t seed = 0;
};

struct SynthResult {
  Gallery gallery;
  std::string ledger_json;  // per-month truth: event and distractor ids
};

SynthResult generate_corpus(const SynthSpec& spec);

}  // namespace chronokey
