#include "tpgst/data.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "tpgst/errors.hpp"

namespace tpgst {

namespace {

using nlohmann::json;

// Template support: Gaussian of width 1.5 channels, cut at +-4.
constexpr int kBumpSupport = 4;
constexpr double kBumpWidth = 1.5;

int round_positive(double x) { return static_cast<int>(x + 0.5); }

}  // namespace

void TaskConfig::validate() const {
    auto fail = [](const std::string& msg) { throw ValidationError("task." + msg); };
    if (vocab_size < 2) fail("vocab_size: must be >= 2");
    if (styles < 1 || styles >= vocab_size) fail("styles: must be in [1, vocab_size)");
    if (speakers < 1) fail("speakers: must be >= 1");
    if (channels < 2) fail("channels: must be >= 2");
    if (frames_per_utterance < 1) fail("frames_per_utterance: must be >= 1");
    if (frames_per_symbol < 1) fail("frames_per_symbol: must be >= 1");
    if (cue_probability < 0.0 || cue_probability > 1.0) {
        fail("cue_probability: must be in [0, 1]");
    }
    if (noise_fraction < 0.0 || noise_fraction > 1.0) fail("noise_fraction: must be in [0, 1]");
    if (noise_band_width < 0 || noise_band_width >= channels) {
        fail("noise_band_width: must be in [0, channels)");
    }
    if (noise_amplitude < 0.0) fail("noise_amplitude: must be >= 0");
    if (static_cast<int>(style_table.size()) != styles) {
        fail("style_table: expected " + std::to_string(styles) + " entries, got " +
             std::to_string(style_table.size()));
    }
    for (int s = 0; s < styles; ++s) {
        const StyleParams& sp = style_table[static_cast<std::size_t>(s)];
        if (sp.rate <= 0.0) fail("style_table[" + std::to_string(s) + "].rate: must be > 0");
        if (sp.amplitude < 0.0) {
            fail("style_table[" + std::to_string(s) + "].amplitude: must be >= 0");
        }
        // centers live in [0, channels - noise_band_width); keep shifted centers in [0, channels)
        if (sp.pitch_shift < 0 || sp.pitch_shift > noise_band_width) {
            fail("style_table[" + std::to_string(s) +
                 "].pitch_shift: must be in [0, noise_band_width]");
        }
        const int dur = round_positive(frames_per_symbol * sp.rate);
        if (dur * 3 > frames_per_utterance) {
            fail("style_table[" + std::to_string(s) +
                 "].rate: 3 symbols must fit in frames_per_utterance");
        }
    }
    if (static_cast<int>(speaker_bias.size()) != speakers * channels) {
        fail("speaker_bias: expected " + std::to_string(speakers) + "x" +
             std::to_string(channels) + " values, got " + std::to_string(speaker_bias.size()));
    }
    for (double b : speaker_bias) {
        if (b < 0.0) fail("speaker_bias: entries must be >= 0");
    }
}

TaskConfig default_task_config() {
    TaskConfig cfg;
    cfg.style_table = {
        {0, 1.0, 1.0},
        {3, 1.0, 1.0},
        {6, 1.0, 1.5},
        {0, 1.8, 1.0},
    };
    cfg.speaker_bias.assign(static_cast<std::size_t>(cfg.speakers * cfg.channels), 0.0);
    // small distinct per-speaker patterns, kept out of the noise band and
    // light enough not to drown the bump centroid
    for (int s = 0; s < cfg.speakers; ++s) {
        for (int k = 0; k < 3; ++k) {
            cfg.speaker_bias[static_cast<std::size_t>(s * cfg.channels + s + 8 * k)] = 0.08;
        }
    }
    return cfg;
}

int bump_center(int symbol, const TaskConfig& cfg) {
    Prng h(static_cast<std::uint64_t>(symbol));
    const int span = cfg.channels - cfg.noise_band_width;
    return static_cast<int>(h.next_u64() % static_cast<std::uint64_t>(span));
}

RenderResult render_frames(const std::vector<int>& text, int style_id, int speaker_id,
                           bool noise_flag, const TaskConfig& cfg, Prng& prng) {
    if (style_id < 0 || style_id >= cfg.styles) {
        throw ValidationError("render_frames: style_id " + std::to_string(style_id) +
                              " out of range [0, " + std::to_string(cfg.styles) + ")");
    }
    if (speaker_id < 0 || speaker_id >= cfg.speakers) {
        throw ValidationError("render_frames: speaker_id " + std::to_string(speaker_id) +
                              " out of range [0, " + std::to_string(cfg.speakers) + ")");
    }
    for (int tok : text) {
        if (tok < 0 || tok >= cfg.vocab_size) {
            throw ValidationError("render_frames: token " + std::to_string(tok) +
                                  " out of range [0, " + std::to_string(cfg.vocab_size) + ")");
        }
    }
    const int f = cfg.channels;
    const int l = cfg.frames_per_utterance;
    const StyleParams& style = cfg.style_table[static_cast<std::size_t>(style_id)];
    const int dur = round_positive(cfg.frames_per_symbol * style.rate);

    RenderResult out;
    out.frames.assign(static_cast<std::size_t>(f * l), 0.0);

    int t = 0;
    for (int tok : text) {
        if (tok < cfg.styles) continue;  // cue tokens are silent
        if (t + dur > l) {
            out.truncated = true;
            break;
        }
        const int center = bump_center(tok, cfg) + style.pitch_shift;
        const int lo = std::max(0, center - kBumpSupport);
        const int hi = std::min(f - 1, center + kBumpSupport);
        for (int c = lo; c <= hi; ++c) {
            const double d = static_cast<double>(c - center);
            const double v = style.amplitude * std::exp(-d * d / (2.0 * kBumpWidth * kBumpWidth));
            for (int j = t; j < t + dur; ++j) {
                out.frames[static_cast<std::size_t>(c * l + j)] += v;
            }
        }
        t += dur;
    }

    const double* bias = cfg.speaker_bias.data() + static_cast<std::size_t>(speaker_id) * f;
    for (int c = 0; c < f; ++c) {
        for (int j = 0; j < l; ++j) out.frames[static_cast<std::size_t>(c * l + j)] += bias[c];
    }

    if (noise_flag && cfg.noise_band_width > 0) {
        const double half = cfg.noise_amplitude / 2.0;
        for (int j = 0; j < l; ++j) {
            for (int b = 0; b < cfg.noise_band_width; ++b) {
                const int c = f - cfg.noise_band_width + b;
                out.frames[static_cast<std::size_t>(c * l + j)] += prng.uniform(-half, half);
            }
        }
    }

    for (double& v : out.frames) v = std::max(0.0, v);
    return out;
}

SyntheticUtterance sample_utterance(const TaskConfig& cfg, Prng& prng) {
    SyntheticUtterance u;
    u.style_id = prng.below(cfg.styles);
    const bool cued = prng.bernoulli(cfg.cue_probability);
    const StyleParams& style = cfg.style_table[static_cast<std::size_t>(u.style_id)];
    const int dur = round_positive(cfg.frames_per_symbol * style.rate);
    const int max_body = cfg.frames_per_utterance / dur;
    const int body_len = 3 + prng.below(max_body - 3 + 1);
    if (cued) u.text.push_back(u.style_id);
    const int n_body_symbols = cfg.vocab_size - cfg.styles;
    for (int i = 0; i < body_len; ++i) u.text.push_back(cfg.styles + prng.below(n_body_symbols));
    u.speaker_id = prng.below(cfg.speakers);
    u.noise_flag = prng.bernoulli(cfg.noise_fraction);
    RenderResult r = render_frames(u.text, u.style_id, u.speaker_id, u.noise_flag, cfg, prng);
    u.channels = cfg.channels;
    u.frames = std::move(r.frames);
    u.truncated = r.truncated;
    return u;
}

std::vector<SyntheticUtterance> make_dataset(const TaskConfig& cfg, std::uint64_t seed,
                                             int count) {
    cfg.validate();
    Prng prng(seed);
    std::vector<SyntheticUtterance> out;
    out.reserve(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i) out.push_back(sample_utterance(cfg, prng));
    return out;
}

void write_dataset(const std::vector<SyntheticUtterance>& data, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw UsageError("write_dataset: cannot open " + path);
    for (const SyntheticUtterance& u : data) {
        if (u.channels <= 0 || u.frames.size() % static_cast<std::size_t>(u.channels) != 0) {
            throw ValidationError("write_dataset: utterance frames are not rectangular");
        }
        const std::size_t cols = u.frames.size() / static_cast<std::size_t>(u.channels);
        json rows = json::array();
        for (int c = 0; c < u.channels; ++c) {
            json r = json::array();
            for (std::size_t j = 0; j < cols; ++j) {
                r.push_back(u.frames[static_cast<std::size_t>(c) * cols + j]);
            }
            rows.push_back(std::move(r));
        }
        json rec;
        rec["text"] = u.text;
        rec["style_id"] = u.style_id;
        rec["speaker_id"] = u.speaker_id;
        rec["noise_flag"] = u.noise_flag;
        rec["frames"] = std::move(rows);
        out << rec.dump() << "\n";
    }
}

std::vector<SyntheticUtterance> read_dataset(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw UsageError("read_dataset: cannot open " + path);
    std::vector<SyntheticUtterance> out;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        const std::string where = "dataset line " + std::to_string(lineno);
        json rec;
        try {
            rec = json::parse(line);
        } catch (const json::exception& e) {
            throw ValidationError(where + ": " + e.what());
        }
        try {
            SyntheticUtterance u;
            u.text = rec.at("text").get<std::vector<int>>();
            u.style_id = rec.at("style_id").get<int>();
            u.speaker_id = rec.at("speaker_id").get<int>();
            u.noise_flag = rec.at("noise_flag").get<bool>();
            const json& rows = rec.at("frames");
            if (!rows.is_array() || rows.empty()) {
                throw ValidationError(where + ": frames must be a non-empty array of rows");
            }
            u.channels = static_cast<int>(rows.size());
            const std::size_t cols = rows[0].size();
            u.frames.reserve(rows.size() * cols);
            for (const json& r : rows) {
                if (!r.is_array() || r.size() != cols) {
                    throw ValidationError(where + ": frames rows have unequal lengths");
                }
                for (const json& v : r) u.frames.push_back(v.get<double>());
            }
            out.push_back(std::move(u));
        } catch (const json::exception& e) {
            throw ValidationError(where + ": " + e.what());
        }
    }
    return out;
}

std::uint64_t fnv1a64(const void* data, std::size_t len) {
    const auto* p = static_cast<const unsigned char*>(data);
    std::uint64_t h = 0xCBF29CE484222325ULL;
    for (std::size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h *= 0x100000001B3ULL;
    }
    return h;
}

std::uint64_t file_hash(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IntegrityError("file_hash: cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    const std::string bytes = ss.str();
    return fnv1a64(bytes.data(), bytes.size());
}

std::string hash_hex(std::uint64_t h) {
    static const char* digits = "0123456789abcdef";
    std::string s(16, '0');
    for (int i = 15; i >= 0; --i) {
        s[static_cast<std::size_t>(i)] = digits[h & 0xF];
        h >>= 4;
    }
    return s;
}

void write_hash_manifest(const std::string& dataset_path) {
    const std::string hex = hash_hex(file_hash(dataset_path));
    std::ofstream out(dataset_path + ".hash", std::ios::binary);
    if (!out) throw UsageError("write_hash_manifest: cannot open " + dataset_path + ".hash");
    out << hex << "\n";
}

void verify_hash_manifest(const std::string& dataset_path) {
    std::ifstream in(dataset_path + ".hash", std::ios::binary);
    if (!in) throw IntegrityError("hash manifest missing: " + dataset_path + ".hash");
    std::string recorded;
    in >> recorded;
    const std::string actual = hash_hex(file_hash(dataset_path));
    if (recorded != actual) {
        throw IntegrityError("dataset hash mismatch for " + dataset_path + ": manifest " +
                             recorded + ", actual " + actual);
    }
}

}  // namespace tpgst
