#include "tpgst/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "tpgst/errors.hpp"

namespace tpgst {

ProsodyTracks compute_tracks(const std::vector<double>& frames, int channels, int n_frames,
                             int noise_band, double energy_floor) {
    if (n_frames < 0 || channels < 1 ||
        frames.size() != static_cast<std::size_t>(channels) * static_cast<std::size_t>(n_frames)) {
        throw DimensionError("compute_tracks: expected " + std::to_string(channels) +
                             " channels x " + std::to_string(n_frames) + " frames");
    }
    const int low = channels - noise_band;
    ProsodyTracks out;
    out.pitch.assign(static_cast<std::size_t>(n_frames), 0.0);
    out.voiced.assign(static_cast<std::size_t>(n_frames), false);
    out.energy.assign(static_cast<std::size_t>(n_frames), 0.0);
    for (int t = 0; t < n_frames; ++t) {
        double sq = 0.0;
        for (int c = 0; c < channels; ++c) {
            const double v = frames[static_cast<std::size_t>(c) * n_frames + t];
            sq += v * v;
        }
        out.energy[static_cast<std::size_t>(t)] = std::log(sq + 1e-8);
        // negative cells (possible in raw model output) carry no mass, which
        // keeps the centroid inside [0, channels - noise_band)
        double mass = 0.0, weighted = 0.0;
        for (int c = 0; c < low; ++c) {
            const double v =
                std::max(0.0, frames[static_cast<std::size_t>(c) * n_frames + t]);
            mass += v;
            weighted += v * static_cast<double>(c);
        }
        if (out.energy[static_cast<std::size_t>(t)] > energy_floor && mass > 1e-12) {
            out.voiced[static_cast<std::size_t>(t)] = true;
            out.pitch[static_cast<std::size_t>(t)] = weighted / mass;
        }
    }
    return out;
}

TrackStats track_stats(const ProsodyTracks& t) {
    TrackStats s;
    double psum = 0.0;
    for (std::size_t i = 0; i < t.pitch.size(); ++i) {
        if (t.voiced[i]) {
            psum += t.pitch[i];
            ++s.voiced_frames;
        }
    }
    if (s.voiced_frames > 0) {
        s.pitch_mean = psum / s.voiced_frames;
        double acc = 0.0;
        for (std::size_t i = 0; i < t.pitch.size(); ++i) {
            if (t.voiced[i]) {
                const double d = t.pitch[i] - s.pitch_mean;
                acc += d * d;
            }
        }
        s.pitch_var = acc / s.voiced_frames;
    }
    if (!t.energy.empty()) {
        double esum = std::accumulate(t.energy.begin(), t.energy.end(), 0.0);
        s.energy_mean = esum / static_cast<double>(t.energy.size());
        double acc = 0.0;
        for (double e : t.energy) {
            const double d = e - s.energy_mean;
            acc += d * d;
        }
        s.energy_var = acc / static_cast<double>(t.energy.size());
    }
    return s;
}

double noise_band_power(const std::vector<double>& frames, int channels, int n_frames,
                        int band) {
    if (band <= 0 || n_frames <= 0) return 0.0;
    double acc = 0.0;
    for (int c = channels - band; c < channels; ++c) {
        for (int t = 0; t < n_frames; ++t) {
            const double v = frames[static_cast<std::size_t>(c) * n_frames + t];
            acc += v * v;
        }
    }
    return acc / (static_cast<double>(band) * static_cast<double>(n_frames));
}

int style_classify(const std::vector<double>& feature,
                   const std::vector<std::vector<double>>& centroids) {
    if (centroids.empty()) throw UsageError("style_classify: empty centroid set");
    int best = 0;
    double best_d = -1.0;
    for (std::size_t k = 0; k < centroids.size(); ++k) {
        if (centroids[k].size() != feature.size()) {
            throw DimensionError("style_classify: centroid " + std::to_string(k) + " has " +
                                 std::to_string(centroids[k].size()) + " dims, feature has " +
                                 std::to_string(feature.size()));
        }
        double d = 0.0;
        for (std::size_t i = 0; i < feature.size(); ++i) {
            const double diff = feature[i] - centroids[k][i];
            d += diff * diff;
        }
        if (best_d < 0.0 || d < best_d) {  // strict: ties keep the lowest id
            best_d = d;
            best = static_cast<int>(k);
        }
    }
    return best;
}

std::vector<double> bias_profile(const std::vector<double>& frames, int channels, int n_frames) {
    if (n_frames < 1) throw DimensionError("bias_profile: empty frame matrix");
    std::vector<double> profile(static_cast<std::size_t>(channels), 0.0);
    for (int c = 0; c < channels; ++c) {
        double mn = frames[static_cast<std::size_t>(c) * n_frames];
        for (int t = 1; t < n_frames; ++t) {
            mn = std::min(mn, frames[static_cast<std::size_t>(c) * n_frames + t]);
        }
        profile[static_cast<std::size_t>(c)] = mn;
    }
    return profile;
}

int classify_speaker(const std::vector<double>& frames, const TaskConfig& task) {
    const int f = task.channels;
    const int l = static_cast<int>(frames.size()) / f;
    std::vector<double> profile = bias_profile(frames, f, l);
    std::vector<std::vector<double>> centroids;
    centroids.reserve(static_cast<std::size_t>(task.speakers));
    for (int s = 0; s < task.speakers; ++s) {
        centroids.emplace_back(task.speaker_bias.begin() + static_cast<std::size_t>(s) * f,
                               task.speaker_bias.begin() + static_cast<std::size_t>(s + 1) * f);
    }
    return style_classify(profile, centroids);
}

double median(std::vector<double> xs) {
    if (xs.empty()) throw UsageError("median: empty sample");
    std::sort(xs.begin(), xs.end());
    const std::size_t n = xs.size();
    return n % 2 == 1 ? xs[n / 2] : 0.5 * (xs[n / 2 - 1] + xs[n / 2]);
}

namespace {

std::vector<double> average_ranks(const std::vector<double>& xs) {
    const std::size_t n = xs.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return xs[a] < xs[b]; });
    std::vector<double> ranks(n, 0.0);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && xs[order[j + 1]] == xs[order[i]]) ++j;
        const double r = 0.5 * static_cast<double>(i + j) + 1.0;
        for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
        i = j + 1;
    }
    return ranks;
}

double pearson(const std::vector<double>& a, const std::vector<double>& b) {
    const std::size_t n = a.size();
    double ma = 0.0, mb = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        ma += a[i];
        mb += b[i];
    }
    ma /= static_cast<double>(n);
    mb /= static_cast<double>(n);
    double num = 0.0, da = 0.0, db = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        num += (a[i] - ma) * (b[i] - mb);
        da += (a[i] - ma) * (a[i] - ma);
        db += (b[i] - mb) * (b[i] - mb);
    }
    if (da == 0.0 || db == 0.0) return 0.0;
    return num / std::sqrt(da * db);
}

}  // namespace

double spearman_rank_correlation(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size() || a.size() < 2) {
        throw UsageError("spearman_rank_correlation: need two samples of equal size >= 2");
    }
    return pearson(average_ranks(a), average_ranks(b));
}

void ModeReport::write_csv(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw UsageError("ModeReport: cannot open " + path);
    out << "utterance_id,mode,pitch_mean,pitch_var,energy_mean,energy_var,noise_power,"
           "style_pred,style_true,speaker_pred,speaker_true\n";
    out.precision(17);
    for (const ModeRow& r : rows) {
        out << r.utterance_id << "," << r.mode << "," << r.pitch_mean << "," << r.pitch_var << ","
            << r.energy_mean << "," << r.energy_var << "," << r.noise_power << "," << r.style_pred
            << "," << r.style_true << "," << r.speaker_pred << "," << r.speaker_true << "\n";
    }
}

std::vector<double> ModeReport::column(const std::string& mode, double ModeRow::*field) const {
    std::vector<double> out;
    for (const ModeRow& r : rows) {
        if (r.mode == mode) out.push_back(r.*field);
    }
    return out;
}

std::vector<double> ModeReport::column_if(const std::string& mode, double ModeRow::*field,
                                          const std::vector<bool>& keep) const {
    std::vector<double> out;
    for (const ModeRow& r : rows) {
        if (r.mode == mode && keep[static_cast<std::size_t>(r.utterance_id)]) {
            out.push_back(r.*field);
        }
    }
    return out;
}

std::vector<std::vector<double>> style_track_centroids(const std::vector<SyntheticUtterance>& data,
                                                       const TaskConfig& task) {
    std::vector<std::vector<double>> centroids(static_cast<std::size_t>(task.styles),
                                               std::vector<double>(2, 0.0));
    std::vector<int> counts(static_cast<std::size_t>(task.styles), 0);
    for (const SyntheticUtterance& u : data) {
        TrackStats s = track_stats(
            compute_tracks(u.frames, u.channels, u.n_frames(), task.noise_band_width));
        centroids[static_cast<std::size_t>(u.style_id)][0] += s.pitch_mean;
        centroids[static_cast<std::size_t>(u.style_id)][1] += s.energy_mean;
        counts[static_cast<std::size_t>(u.style_id)] += 1;
    }
    for (int k = 0; k < task.styles; ++k) {
        if (counts[static_cast<std::size_t>(k)] > 0) {
            centroids[static_cast<std::size_t>(k)][0] /= counts[static_cast<std::size_t>(k)];
            centroids[static_cast<std::size_t>(k)][1] /= counts[static_cast<std::size_t>(k)];
        }
    }
    return centroids;
}

std::vector<std::vector<double>> style_embedding_centroids(
    const Model& m, const std::vector<SyntheticUtterance>& data) {
    std::vector<std::vector<double>> centroids(
        static_cast<std::size_t>(m.task.styles),
        std::vector<double>(static_cast<std::size_t>(m.cfg.d_emb), 0.0));
    std::vector<int> counts(static_cast<std::size_t>(m.task.styles), 0);
    for (const SyntheticUtterance& u : data) {
        Graph g;
        Tensor prosody = m.ref_enc.encode(g, u.frames, u.n_frames());
        const std::vector<double>& e = style_attention(g, prosody, m.bank).embedding.values();
        for (std::size_t i = 0; i < e.size(); ++i) {
            centroids[static_cast<std::size_t>(u.style_id)][i] += e[i];
        }
        counts[static_cast<std::size_t>(u.style_id)] += 1;
    }
    for (int k = 0; k < m.task.styles; ++k) {
        if (counts[static_cast<std::size_t>(k)] > 0) {
            for (double& v : centroids[static_cast<std::size_t>(k)]) {
                v /= counts[static_cast<std::size_t>(k)];
            }
        }
    }
    return centroids;
}

ModeReport compare_modes(const Model& m, const std::vector<SyntheticUtterance>& test,
                         const std::vector<SyntheticUtterance>& centroid_source) {
    const std::vector<std::vector<double>> centroids =
        style_track_centroids(centroid_source, m.task);
    static const char* kModes[] = {"zero", "tpcw", "tpse", "gst"};
    ModeReport report;
    for (std::size_t i = 0; i < test.size(); ++i) {
        const SyntheticUtterance& u = test[i];
        for (const char* mode_name : kModes) {
            InferRequest req;
            req.mode = parse_infer_mode(mode_name);
            req.text = u.text;
            req.speaker_id = u.speaker_id;
            if (req.mode == InferMode::Gst) {
                req.reference_frames = &u.frames;
                req.reference_len = u.n_frames();
            }
            const std::vector<double> frames = infer(m, req);
            const int l = m.task.frames_per_utterance;
            TrackStats s =
                track_stats(compute_tracks(frames, m.task.channels, l, m.task.noise_band_width));
            ModeRow row;
            row.utterance_id = static_cast<int>(i);
            row.mode = mode_name;
            row.pitch_mean = s.pitch_mean;
            row.pitch_var = s.pitch_var;
            row.energy_mean = s.energy_mean;
            row.energy_var = s.energy_var;
            row.noise_power =
                noise_band_power(frames, m.task.channels, l, m.task.noise_band_width);
            row.style_pred = style_classify({s.pitch_mean, s.energy_mean}, centroids);
            row.style_true = u.style_id;
            row.speaker_pred = classify_speaker(frames, m.task);
            row.speaker_true = u.speaker_id;
            report.rows.push_back(std::move(row));
        }
    }
    return report;
}

SpeakerIdentityResult speaker_identity_check(const Model& m) {
    if (m.task.speakers < 2) {
        throw UsageError("speaker_identity_check: needs at least 2 speakers, task has " +
                         std::to_string(m.task.speakers));
    }
    const int n_texts = 4;
    const int body_len = 5;
    const int n_body = m.task.vocab_size - m.task.styles;
    SpeakerIdentityResult out;
    out.pitch_by_speaker.assign(static_cast<std::size_t>(m.task.speakers),
                                std::vector<double>(static_cast<std::size_t>(m.cfg.num_tokens), 0.0));
    out.energy_by_speaker = out.pitch_by_speaker;
    int correct = 0, total = 0;
    for (int s = 0; s < m.task.speakers; ++s) {
        for (int tok = 0; tok < m.cfg.num_tokens; ++tok) {
            double pitch_acc = 0.0, energy_acc = 0.0;
            for (int x = 0; x < n_texts; ++x) {
                InferRequest req;
                req.mode = InferMode::Token;
                req.token_index = tok;
                req.token_scale = 1.0;
                req.speaker_id = s;
                for (int j = 0; j < body_len; ++j) {
                    req.text.push_back(m.task.styles + (3 + 5 * x + 2 * j) % n_body);
                }
                const std::vector<double> frames = infer(m, req);
                total += 1;
                if (classify_speaker(frames, m.task) == s) correct += 1;
                TrackStats st = track_stats(compute_tracks(frames, m.task.channels,
                                                           m.task.frames_per_utterance,
                                                           m.task.noise_band_width));
                pitch_acc += st.pitch_mean;
                energy_acc += st.energy_mean;
            }
            out.pitch_by_speaker[static_cast<std::size_t>(s)][static_cast<std::size_t>(tok)] =
                pitch_acc / n_texts;
            out.energy_by_speaker[static_cast<std::size_t>(s)][static_cast<std::size_t>(tok)] =
                energy_acc / n_texts;
        }
    }
    out.accuracy = static_cast<double>(correct) / static_cast<double>(total);
    for (int a = 0; a < m.task.speakers; ++a) {
        for (int b = a + 1; b < m.task.speakers; ++b) {
            const double rho = spearman_rank_correlation(
                out.pitch_by_speaker[static_cast<std::size_t>(a)],
                out.pitch_by_speaker[static_cast<std::size_t>(b)]);
            out.min_pitch_spearman = std::min(out.min_pitch_spearman, rho);
        }
    }
    return out;
}

double tpse_style_accuracy(const Model& m, const std::vector<SyntheticUtterance>& heldout,
                           const std::vector<std::vector<double>>& centroids) {
    int correct = 0, total = 0;
    for (const SyntheticUtterance& u : heldout) {
        if (u.text.empty() || u.text[0] >= m.task.styles) continue;  // cue-marked only
        Graph g;
        std::vector<Tensor> states = m.text_enc.encode(g, u.text);
        Tensor tf = m.summarizer.summarize(g, states);
        const std::vector<double>& e = predict_style_embedding(g, tf, m.tpse).values();
        total += 1;
        if (style_classify(e, centroids) == u.style_id) correct += 1;
    }
    if (total == 0) throw UsageError("tpse_style_accuracy: no cue-marked utterances in the set");
    return static_cast<double>(correct) / static_cast<double>(total);
}

namespace {

double row_entropy(const std::vector<double>& w, int heads, int tokens) {
    double acc = 0.0;
    for (int j = 0; j < heads; ++j) {
        for (int i = 0; i < tokens; ++i) {
            const double p = w[static_cast<std::size_t>(j * tokens + i)];
            if (p > 0.0) acc -= p * std::log(p);
        }
    }
    return acc / static_cast<double>(heads);
}

}  // namespace

double mean_tpcw_kl(const Model& m, const std::vector<SyntheticUtterance>& data) {
    double acc = 0.0;
    for (const SyntheticUtterance& u : data) {
        Graph g;
        Tensor prosody = m.ref_enc.encode(g, u.frames, u.n_frames());
        StyleAttentionOut att = style_attention(g, prosody, m.bank);
        std::vector<Tensor> states = m.text_enc.encode(g, u.text);
        Tensor tf = m.summarizer.summarize(g, states);
        TpcwOut pw = predict_combination_weights(g, tf, m.tpcw);
        const double ce = tpcw_loss(pw.logits, att.weights).scalar();
        acc += ce - row_entropy(att.weights.values(), m.cfg.num_heads, m.cfg.num_tokens);
    }
    return acc / static_cast<double>(data.size());
}

double mean_uniform_kl(const Model& m, const std::vector<SyntheticUtterance>& data) {
    const double log_n = std::log(static_cast<double>(m.cfg.num_tokens));
    double acc = 0.0;
    for (const SyntheticUtterance& u : data) {
        Graph g;
        Tensor prosody = m.ref_enc.encode(g, u.frames, u.n_frames());
        StyleAttentionOut att = style_attention(g, prosody, m.bank);
        acc += log_n - row_entropy(att.weights.values(), m.cfg.num_heads, m.cfg.num_tokens);
    }
    return acc / static_cast<double>(data.size());
}

}  // namespace tpgst
