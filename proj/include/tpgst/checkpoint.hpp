#pragma once

#include <memory>
#include <string>

#include "tpgst/model.hpp"
#include "tpgst/train.hpp"

namespace tpgst {

// Versioned container: a magic line, a length-prefixed JSON header (configs,
// step, parameter manifest), then raw little-endian float64 arrays in
// registration order (values, then Adam m and v when present).
void save_checkpoint(const Model& m, const AdamState* adam, const std::string& path);

struct LoadedCheckpoint {
    Model model;
    std::unique_ptr<AdamState> adam;  // null when the checkpoint has no optimizer state
    long step = 0;
};

// Rebuilds the model from the stored configs and overwrites every parameter.
// Any drift between header and payload raises IntegrityError.
LoadedCheckpoint load_checkpoint(const std::string& path);

}  // namespace tpgst
