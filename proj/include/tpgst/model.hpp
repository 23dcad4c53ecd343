#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "tpgst/data.hpp"
#include "tpgst/encoders.hpp"
#include "tpgst/heads.hpp"
#include "tpgst/style.hpp"
#include "tpgst/tensor.hpp"

namespace tpgst {

struct ModelConfig {
    int d_sym = 32;
    int d_enc = 64;  // text-encoder state width (must be even)
    int d_tf = 64;   // text feature vector
    int d_ref = 32;  // prosody embedding
    int d_spk = 64;  // speaker embedding
    int num_tokens = 8;
    int num_heads = 2;
    int d_emb = 32;  // style embedding
    int d_attn = 16; // style-attention projection
    int n_hidden = 1;
    int d_hid = 64;  // TPSE hidden width
    int d_dec = 64;  // decoder GRU
    double w_tpcw = 1.0;
    double w_tpse = 1.0;
    // weight of the free-running reconstruction branch; training only on
    // teacher-forced frames leaves synthesis with the model's own feedback
    // untrained and it collapses
    double w_free_run = 1.0;
    bool baseline_mode = false;
    bool detach_text_features = false;
    std::uint64_t seed = 1;
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;

    void validate(const TaskConfig& task) const;  // ValidationError, field-qualified
};

// Sinusoidal position encoding shared by the two sides of the decoder
// attention: queries carry the output column, keys carry the text position's
// expected column at the base rate. Alignment needs a position signal that
// exists without teacher frames, or free-running synthesis collapses.
constexpr int kDecoderPosDim = 12;
std::vector<double> decoder_step_encoding(double column);

// Dot-product content attention plus the frame decoder GRU. The query is the
// decoder state concatenated with the step encoding; keys and context are the
// conditioned states with the text-side encoding appended. The projections
// start from a diagonal alignment prior (matched sinusoid banks), so content
// prediction does not have to wait for attention discovery.
struct DecoderParams {
    Parameter* attn_q = nullptr;  // d_att x (d_dec + kDecoderPosDim)
    Parameter* attn_k = nullptr;  // (d_cond + kDecoderPosDim) x d_att
    GruParams gru;                // input = channels + d_cond + kDecoderPosDim
    Parameter* out_w = nullptr;   // channels x d_dec
    Parameter* out_b = nullptr;
    int d_cond = 0, d_att = 0, channels = 0;

    static DecoderParams create(ParamSet& ps, int channels, int d_cond, int d_dec, Prng& prng);
};

struct Model {
    TaskConfig task;
    ModelConfig cfg;
    ParamSet params;
    TextEncoder text_enc;
    TextSummarizer summarizer;
    ReferenceEncoder ref_enc;  // absent in baseline mode
    SpeakerTable speakers;
    StyleTokenBank bank;       // absent in baseline mode
    TpcwHead tpcw;             // absent in baseline mode
    TpseHead tpse;             // absent in baseline mode
    DecoderParams decoder;

    int cond_dim() const { return cfg.d_enc + cfg.d_emb + cfg.d_spk; }

    static Model build(TaskConfig task, ModelConfig cfg);
};

// Per-position decoder conditioning: [text state; style embedding; speaker
// embedding], with the style and speaker vectors repeated at every position.
std::vector<Tensor> condition_states(const std::vector<Tensor>& text_states,
                                     Tensor style_embedding, Tensor speaker_embedding);

// Autoregressive frame decoder. Emits exactly `out_frames` frame vectors; the
// previous frame is the teacher frame when given, else the model's own output.
std::vector<Tensor> decode(Graph& g, const Model& m, const std::vector<Tensor>& states,
                           int out_frames, const std::vector<double>* teacher_frames);

struct UtteranceLosses {
    Tensor rec;       // teacher-forced reconstruction
    Tensor free_run;  // reconstruction with the model's own feedback
    Tensor tpcw;      // null in baseline mode
    Tensor tpse;      // null in baseline mode
    Tensor total;
};

// Joint losses for one utterance: teacher-forced and free-running
// reconstruction plus the prediction-head losses, whose targets are detached
// so their error never reaches the style layer or reference encoder.
UtteranceLosses utterance_losses(Graph& g, const Model& m, const SyntheticUtterance& u);

enum class InferMode { Gst, Tpcw, Tpse, Token, Zero };

InferMode parse_infer_mode(const std::string& name);  // UsageError on unknown
std::string infer_mode_name(InferMode mode);

struct InferRequest {
    InferMode mode = InferMode::Tpse;
    std::vector<int> text;
    int speaker_id = 0;
    const std::vector<double>* reference_frames = nullptr;  // channels x reference_len
    int reference_len = 0;
    int token_index = -1;
    double token_scale = 1.0;
};

// Free-running synthesis; returns channels x frames_per_utterance.
std::vector<double> infer(const Model& m, const InferRequest& req);

}  // namespace tpgst
