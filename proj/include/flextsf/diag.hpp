#pragma once

#include <cstdint>

namespace flextsf::diag {

// Process-wide diagnostics counters. Quiet numeric trouble (division poles,
// skipped optimizer updates) increments these instead of throwing.
struct Counters {
    std::uint64_t elementwise_pole_hits = 0;   // div by 0 / log at or below 0
    std::uint64_t skipped_adam_updates = 0;    // non-finite gradient
    std::uint64_t skipped_short_series = 0;    // pre-training draw rejected
    std::uint64_t unconverged_inversions = 0;  // flow backward hit iteration cap
};

Counters& counters();
void reset();

}  // namespace flextsf::diag
