#pragma once

#include <string>
#include <vector>

#include "tpgst/data.hpp"
#include "tpgst/model.hpp"

namespace tpgst {

// Frames below this log-power are treated as silence and excluded from pitch
// statistics (the default clears the speaker-bias floor of the desk task).
constexpr double kPitchEnergyFloor = -0.5;

struct ProsodyTracks {
    std::vector<double> pitch;   // spectral-centroid channel over the non-noise band
    std::vector<bool> voiced;    // frames entering pitch statistics
    std::vector<double> energy;  // log(sum of squares + 1e-8), all channels
};

ProsodyTracks compute_tracks(const std::vector<double>& frames, int channels, int n_frames,
                             int noise_band, double energy_floor = kPitchEnergyFloor);

struct TrackStats {
    double pitch_mean = 0.0;
    double pitch_var = 0.0;
    double energy_mean = 0.0;
    double energy_var = 0.0;
    int voiced_frames = 0;
};

TrackStats track_stats(const ProsodyTracks& t);

// Mean square over the top `band` channels.
double noise_band_power(const std::vector<double>& frames, int channels, int n_frames, int band);

// Nearest centroid by L2; ties resolve to the lowest id. UsageError when empty.
int style_classify(const std::vector<double>& feature,
                   const std::vector<std::vector<double>>& centroids);

// Per-channel minimum over frames. Bump templates and band noise only add
// nonnegative mass on top of the additive speaker bias, so the minimum tracks
// the bias even when no frame is fully silent.
std::vector<double> bias_profile(const std::vector<double>& frames, int channels, int n_frames);

int classify_speaker(const std::vector<double>& frames, const TaskConfig& task);

double median(std::vector<double> xs);
double spearman_rank_correlation(const std::vector<double>& a, const std::vector<double>& b);

struct ModeRow {
    int utterance_id = 0;
    std::string mode;
    double pitch_mean = 0.0, pitch_var = 0.0;
    double energy_mean = 0.0, energy_var = 0.0;
    double noise_power = 0.0;
    int style_pred = -1, style_true = -1;
    int speaker_pred = -1, speaker_true = -1;
};

struct ModeReport {
    std::vector<ModeRow> rows;

    void write_csv(const std::string& path) const;
    std::vector<double> column(const std::string& mode, double ModeRow::*field) const;
    std::vector<double> column_if(const std::string& mode, double ModeRow::*field,
                                  const std::vector<bool>& keep) const;
};

// Per-style centroids of (pitch_mean, energy_mean) measured on rendered data.
std::vector<std::vector<double>> style_track_centroids(const std::vector<SyntheticUtterance>& data,
                                                       const TaskConfig& task);

// Per-style mean GST embeddings of the given utterances' target frames.
std::vector<std::vector<double>> style_embedding_centroids(
    const Model& m, const std::vector<SyntheticUtterance>& data);

// Runs modes {zero, tpcw, tpse, gst} over the test set; gst conditions on the
// utterance's own target frames as the reference.
ModeReport compare_modes(const Model& m, const std::vector<SyntheticUtterance>& test,
                         const std::vector<SyntheticUtterance>& centroid_source);

struct SpeakerIdentityResult {
    double accuracy = 0.0;
    // pitch_by_speaker[s][token] = mean pitch proxy of token-conditioned synthesis
    std::vector<std::vector<double>> pitch_by_speaker;
    std::vector<std::vector<double>> energy_by_speaker;
    double min_pitch_spearman = 1.0;  // over all speaker pairs
};

// Synthesizes fixed texts under every (speaker, token) pair and classifies the
// speaker from the emitted bias profile. UsageError when speakers < 2.
SpeakerIdentityResult speaker_identity_check(const Model& m);

// TPSE style classification accuracy on cue-marked utterances, against
// per-style embedding centroids.
double tpse_style_accuracy(const Model& m, const std::vector<SyntheticUtterance>& heldout,
                           const std::vector<std::vector<double>>& centroids);

// Mean over utterances of (tpcw_loss - target entropy), the per-head KL.
double mean_tpcw_kl(const Model& m, const std::vector<SyntheticUtterance>& data);
double mean_uniform_kl(const Model& m, const std::vector<SyntheticUtterance>& data);

}  // namespace tpgst
