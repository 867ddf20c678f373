#pragma once

#include <string>

#include "remex/orchestrator.hpp"

namespace remex {

/// A dual-filtered trajectory used as stepwise supervision. Every step is a
/// well-formed search with non-empty retrieval results and an intermediate
/// answer; the final answer matches gold_answer under answer normalization.
struct GoldenTrajectory {
    Trajectory trajectory;
    std::string provenance;
};

}  // namespace remex
