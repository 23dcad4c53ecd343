#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "tpgst/data.hpp"
#include "tpgst/model.hpp"
#include "tpgst/tensor.hpp"

namespace tpgst {

struct TrainConfig {
    long steps = 5000;
    int batch_size = 16;
    std::uint64_t seed = 1;
    long checkpoint_interval = 1000;
    int threads = 1;
    double grad_clip = 0.0;  // 0 disables clipping

    void validate() const;
};

struct AdamState {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    long step = 0;
    std::vector<std::vector<double>> m;  // first moments, per parameter
    std::vector<std::vector<double>> v;  // second moments, per parameter

    static AdamState create(const ParamSet& params, double lr, double beta1, double beta2,
                            double eps);
};

// Bias-corrected Adam update from the gradients accumulated in `params`.
void adam_step(ParamSet& params, AdamState& state);

// Scales all gradients so their global L2 norm is at most `max_norm`.
void clip_gradients(ParamSet& params, double max_norm);

struct TrainRecord {
    long step = 0;
    double l_rec = 0.0;
    std::optional<double> l_tpcw;
    std::optional<double> l_tpse;
    double l_total = 0.0;
    double seconds = 0.0;  // wall time since training started
};

struct TrainLog {
    std::vector<TrainRecord> records;

    // step,l_rec,l_tpcw,l_tpse,l_total,seconds; absent losses are empty fields
    void write_csv(const std::string& path) const;
    // loss-field equality; the wall-time column is excluded (not reproducible)
    bool same_losses(const TrainLog& other) const;
};

struct BatchLosses {
    double rec = 0.0;
    std::optional<double> tpcw;
    std::optional<double> tpse;
    double total = 0.0;
};

// Forward + backward over a batch; per-utterance gradients reduce into
// params.grad in utterance order, so results do not depend on `threads`.
BatchLosses forward_backward_batch(Model& m,
                                   const std::vector<const SyntheticUtterance*>& batch,
                                   int threads);

// The deterministic batch for a global 0-based step: epoch permutations are
// derived from (seed, epoch) alone, so a resumed run replays identically.
std::vector<const SyntheticUtterance*> batch_for_step(const std::vector<SyntheticUtterance>& data,
                                                      const TrainConfig& tc, long step);

using StepCallback = std::function<void(long step, const Model& m, const AdamState& adam)>;

// Runs optimizer steps until adam.step reaches tc.steps (supports resuming
// from a loaded state). The callback fires after every step.
TrainLog train(Model& m, const std::vector<SyntheticUtterance>& data, const TrainConfig& tc,
               AdamState& adam, const StepCallback& callback = {});

}  // namespace tpgst
