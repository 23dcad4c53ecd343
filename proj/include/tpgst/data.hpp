#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tpgst/prng.hpp"

namespace tpgst {

struct StyleParams {
    int pitch_shift = 0;     // channels added to every bump center
    double amplitude = 1.0;  // bump amplitude multiplier
    double rate = 1.0;       // frames per symbol = round(base * rate)
};

// The styled-utterance task. Token ids [0, styles) are cue tokens (one per
// style, rendered silent); ids [styles, vocab_size) are body symbols.
struct TaskConfig {
    int vocab_size = 16;
    int styles = 4;
    int speakers = 3;
    int channels = 32;             // F
    int frames_per_utterance = 64; // L
    int frames_per_symbol = 4;     // base duration
    double cue_probability = 0.9;
    double noise_fraction = 0.1;
    int noise_band_width = 8;      // B, top channels
    double noise_amplitude = 0.5;  // a, uniform in [-a/2, a/2]
    std::vector<StyleParams> style_table;     // size styles
    std::vector<double> speaker_bias;         // speakers x channels, row-major

    void validate() const;  // ValidationError with field-qualified message
};

TaskConfig default_task_config();

struct SyntheticUtterance {
    std::vector<int> text;
    int style_id = 0;
    int speaker_id = 0;
    bool noise_flag = false;
    int channels = 0;            // rows of `frames`
    std::vector<double> frames;  // channels x frames_per_utterance, row-major
    bool truncated = false;      // in-memory only; not serialized

    int n_frames() const {
        return channels > 0 ? static_cast<int>(frames.size()) / channels : 0;
    }
};

// Deterministic template center for a body symbol.
int bump_center(int symbol, const TaskConfig& cfg);

struct RenderResult {
    std::vector<double> frames;
    bool truncated = false;
};

// Renders text to a channels x frames_per_utterance matrix. `prng` is
// consumed only when noise_flag is set.
RenderResult render_frames(const std::vector<int>& text, int style_id, int speaker_id,
                           bool noise_flag, const TaskConfig& cfg, Prng& prng);

SyntheticUtterance sample_utterance(const TaskConfig& cfg, Prng& prng);

std::vector<SyntheticUtterance> make_dataset(const TaskConfig& cfg, std::uint64_t seed, int count);

// JSON-lines, one utterance per line, keys: frames, noise_flag, speaker_id,
// style_id, text. Doubles round-trip exactly.
void write_dataset(const std::vector<SyntheticUtterance>& data, const std::string& path);
std::vector<SyntheticUtterance> read_dataset(const std::string& path);

// ---- content hashing --------------------------------------------------------

std::uint64_t fnv1a64(const void* data, std::size_t len);
std::uint64_t file_hash(const std::string& path);
std::string hash_hex(std::uint64_t h);

// Writes/checks "<path>.hash" containing the hex file hash.
void write_hash_manifest(const std::string& dataset_path);
void verify_hash_manifest(const std::string& dataset_path);  // IntegrityError on mismatch

}  // namespace tpgst
