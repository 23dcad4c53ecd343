#pragma once

#include <string>
#include <vector>

#include "tpgst/data.hpp"
#include "tpgst/model.hpp"

namespace tpgst {

struct GradCheckLine {
    std::string component;
    double max_rel_err = 0.0;
    int kink_coords_excluded = 0;  // coordinates where finite differences are invalid
};

struct GradCheckReport {
    std::vector<GradCheckLine> lines;
    bool stop_grad_zero_ok = false;
    double tolerance = 1e-4;

    bool pass() const;
    std::string to_text() const;  // one line per component plus the stop-gradient check
};

// Finite-difference checks for every differentiable operation and for the
// full joint loss of a 2-utterance batch. Large parameter arrays are sampled
// at `max_coords_per_param` coordinates (deterministic in `seed`).
GradCheckReport run_gradcheck(const TaskConfig& task, const ModelConfig& cfg, std::uint64_t seed,
                              int max_coords_per_param = 8);

}  // namespace tpgst
