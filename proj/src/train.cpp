#include "tpgst/train.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <thread>

#include "tpgst/errors.hpp"
#include "tpgst/prng.hpp"

namespace tpgst {

void TrainConfig::validate() const {
    if (steps < 0) throw ValidationError("train.steps: must be >= 0");
    if (batch_size < 1) throw ValidationError("train.batch_size: must be >= 1");
    if (checkpoint_interval < 1) throw ValidationError("train.checkpoint_interval: must be >= 1");
    if (threads < 1) throw ValidationError("train.threads: must be >= 1");
    if (grad_clip < 0.0) throw ValidationError("train.grad_clip: must be >= 0");
}

AdamState AdamState::create(const ParamSet& params, double lr, double beta1, double beta2,
                            double eps) {
    AdamState s;
    s.lr = lr;
    s.beta1 = beta1;
    s.beta2 = beta2;
    s.eps = eps;
    s.m.resize(params.count());
    s.v.resize(params.count());
    for (std::size_t i = 0; i < params.count(); ++i) {
        s.m[i].assign(params.at(i).size(), 0.0);
        s.v[i].assign(params.at(i).size(), 0.0);
    }
    return s;
}

void adam_step(ParamSet& params, AdamState& state) {
    if (state.m.size() != params.count()) {
        throw UsageError("adam_step: state tracks " + std::to_string(state.m.size()) +
                         " parameters, model has " + std::to_string(params.count()));
    }
    state.step += 1;
    const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
    for (std::size_t i = 0; i < params.count(); ++i) {
        Parameter& p = params.at(i);
        std::vector<double>& m = state.m[i];
        std::vector<double>& v = state.v[i];
        if (m.size() != p.size()) {
            throw UsageError("adam_step: moment shape mismatch for parameter " + p.name);
        }
        for (std::size_t j = 0; j < p.size(); ++j) {
            const double g = p.grad[j];
            m[j] = state.beta1 * m[j] + (1.0 - state.beta1) * g;
            v[j] = state.beta2 * v[j] + (1.0 - state.beta2) * g * g;
            const double mhat = m[j] / bc1;
            const double vhat = v[j] / bc2;
            p.value[j] -= state.lr * mhat / (std::sqrt(vhat) + state.eps);
        }
    }
}

void clip_gradients(ParamSet& params, double max_norm) {
    double sq = 0.0;
    for (const auto& p : params) {
        for (double g : p->grad) sq += g * g;
    }
    const double norm = std::sqrt(sq);
    if (norm <= max_norm || norm == 0.0) return;
    const double s = max_norm / norm;
    for (auto& p : params) {
        for (double& g : p->grad) g *= s;
    }
}

void TrainLog::write_csv(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw UsageError("TrainLog: cannot open " + path);
    out << "step,l_rec,l_tpcw,l_tpse,l_total,seconds\n";
    out.precision(17);
    for (const TrainRecord& r : records) {
        out << r.step << "," << r.l_rec << ",";
        if (r.l_tpcw) out << *r.l_tpcw;
        out << ",";
        if (r.l_tpse) out << *r.l_tpse;
        out << "," << r.l_total << "," << r.seconds << "\n";
    }
}

bool TrainLog::same_losses(const TrainLog& other) const {
    if (records.size() != other.records.size()) return false;
    for (std::size_t i = 0; i < records.size(); ++i) {
        const TrainRecord& a = records[i];
        const TrainRecord& b = other.records[i];
        if (a.step != b.step || a.l_rec != b.l_rec || a.l_total != b.l_total) return false;
        if (a.l_tpcw != b.l_tpcw || a.l_tpse != b.l_tpse) return false;
    }
    return true;
}

namespace {

struct UtteranceResult {
    double rec = 0.0, tpcw = 0.0, tpse = 0.0, total = 0.0;
};

UtteranceResult run_one(Model& m, const SyntheticUtterance& u, GradStore& store) {
    Graph g;
    UtteranceLosses losses = utterance_losses(g, m, u);
    g.backward(losses.total, &store);
    UtteranceResult r;
    r.rec = losses.rec.scalar();
    r.total = losses.total.scalar();
    if (losses.tpcw) r.tpcw = losses.tpcw.scalar();
    if (losses.tpse) r.tpse = losses.tpse.scalar();
    return r;
}

}  // namespace

BatchLosses forward_backward_batch(Model& m,
                                   const std::vector<const SyntheticUtterance*>& batch,
                                   int threads) {
    const std::size_t n = batch.size();
    if (n == 0) throw UsageError("forward_backward_batch: empty batch");
    std::vector<GradStore> stores;
    stores.reserve(n);
    for (std::size_t i = 0; i < n; ++i) stores.emplace_back(m.params);
    std::vector<UtteranceResult> results(n);

    if (threads <= 1 || n == 1) {
        for (std::size_t i = 0; i < n; ++i) results[i] = run_one(m, *batch[i], stores[i]);
    } else {
        const int workers = std::min<int>(threads, static_cast<int>(n));
        std::vector<std::thread> pool;
        pool.reserve(static_cast<std::size_t>(workers));
        for (int w = 0; w < workers; ++w) {
            pool.emplace_back([&, w] {
                for (std::size_t i = static_cast<std::size_t>(w); i < n;
                     i += static_cast<std::size_t>(workers)) {
                    results[i] = run_one(m, *batch[i], stores[i]);
                }
            });
        }
        for (std::thread& t : pool) t.join();
    }

    // fixed reduction order keeps results independent of the thread count
    for (std::size_t i = 0; i < n; ++i) stores[i].accumulate_into(m.params);

    BatchLosses out;
    double tpcw = 0.0, tpse = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        out.rec += results[i].rec;
        out.total += results[i].total;
        tpcw += results[i].tpcw;
        tpse += results[i].tpse;
    }
    const double inv = 1.0 / static_cast<double>(n);
    out.rec *= inv;
    out.total *= inv;
    if (!m.cfg.baseline_mode) {
        out.tpcw = tpcw * inv;
        out.tpse = tpse * inv;
    }
    return out;
}

std::vector<const SyntheticUtterance*> batch_for_step(const std::vector<SyntheticUtterance>& data,
                                                      const TrainConfig& tc, long step) {
    const long n = static_cast<long>(data.size());
    if (n == 0) throw UsageError("train: empty dataset");
    const long batch = std::min<long>(tc.batch_size, n);
    const long per_epoch = n / batch;
    const long epoch = step / per_epoch;
    const long slot = step % per_epoch;

    Prng prng(derive_seed(tc.seed, static_cast<std::uint64_t>(epoch)));
    std::vector<int> perm(static_cast<std::size_t>(n));
    for (long i = 0; i < n; ++i) perm[static_cast<std::size_t>(i)] = static_cast<int>(i);
    for (long i = n - 1; i > 0; --i) {
        const int j = prng.below(static_cast<int>(i + 1));
        std::swap(perm[static_cast<std::size_t>(i)], perm[static_cast<std::size_t>(j)]);
    }

    std::vector<const SyntheticUtterance*> out;
    out.reserve(static_cast<std::size_t>(batch));
    for (long k = slot * batch; k < (slot + 1) * batch; ++k) {
        out.push_back(&data[static_cast<std::size_t>(perm[static_cast<std::size_t>(k)])]);
    }
    return out;
}

TrainLog train(Model& m, const std::vector<SyntheticUtterance>& data, const TrainConfig& tc,
               AdamState& adam, const StepCallback& callback) {
    tc.validate();
    if (data.empty()) throw UsageError("train: empty dataset");
    const int f = m.task.channels;
    const int l = m.task.frames_per_utterance;
    for (const SyntheticUtterance& u : data) {
        if (u.channels != f || u.n_frames() != l) {
            throw ValidationError("train: dataset utterance frames are " +
                                  std::to_string(u.channels) + "x" + std::to_string(u.n_frames()) +
                                  ", task expects " + std::to_string(f) + "x" +
                                  std::to_string(l));
        }
    }

    TrainLog log;
    const auto started = std::chrono::steady_clock::now();
    while (adam.step < tc.steps) {
        const long step = adam.step;  // 0-based position in the schedule
        std::vector<const SyntheticUtterance*> batch = batch_for_step(data, tc, step);
        m.params.zero_grads();
        BatchLosses losses = forward_backward_batch(m, batch, tc.threads);
        if (tc.grad_clip > 0.0) clip_gradients(m.params, tc.grad_clip);
        adam_step(m.params, adam);

        TrainRecord rec;
        rec.step = adam.step;
        rec.l_rec = losses.rec;
        rec.l_tpcw = losses.tpcw;
        rec.l_tpse = losses.tpse;
        rec.l_total = losses.total;
        rec.seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
        log.records.push_back(rec);
        if (callback) callback(adam.step, m, adam);
    }
    return log;
}

}  // namespace tpgst
