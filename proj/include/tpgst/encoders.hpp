#pragma once

#include <string>
#include <vector>

#include "tpgst/prng.hpp"
#include "tpgst/tensor.hpp"

namespace tpgst {

// Glorot-uniform draws in flat array order; biases stay zero.
void init_glorot(Parameter& p, int fan_in, int fan_out, Prng& prng);
void init_uniform(Parameter& p, double lo, double hi, Prng& prng);

struct GruParams {
    Parameter* wz = nullptr;
    Parameter* bz = nullptr;
    Parameter* wr = nullptr;
    Parameter* br = nullptr;
    Parameter* wc = nullptr;
    Parameter* bc = nullptr;
    int input_dim = 0;
    int hidden_dim = 0;

    static GruParams create(ParamSet& ps, const std::string& prefix, int d_in, int d_h,
                            Prng& prng);
    Tensor step(Graph& g, Tensor x, Tensor h) const;
    Tensor initial_state(Graph& g) const;
};

struct ConvLayer {
    Parameter* w = nullptr;  // (ksize*cin) x cout
    Parameter* b = nullptr;  // cout
    int cin = 0, cout = 0, ksize = 3, stride = 1;

    static ConvLayer create(ParamSet& ps, const std::string& prefix, int cin, int cout,
                            int ksize, int stride, Prng& prng);
    // conv + relu
    Tensor apply(Graph& g, Tensor x) const;
};

// Symbol embedding -> two same-length convolutions -> bidirectional GRU.
// Per-position output is [forward state; backward state], d_enc wide.
struct TextEncoder {
    Parameter* embedding = nullptr;  // vocab x d_sym
    ConvLayer conv1, conv2;
    GruParams fwd, bwd;
    int vocab = 0, d_sym = 0, d_enc = 0;

    static TextEncoder create(ParamSet& ps, int vocab, int d_sym, int d_enc, Prng& prng);
    std::vector<Tensor> encode(Graph& g, const std::vector<int>& text) const;
};

// Time-aggregating GRU over the encoder states; final state is the
// fixed-length text feature vector.
struct TextSummarizer {
    GruParams gru;
    int d_tf = 0;

    static TextSummarizer create(ParamSet& ps, int d_enc, int d_tf, Prng& prng);
    Tensor summarize(Graph& g, const std::vector<Tensor>& states) const;
};

// Two strided convolutions over the frame axis, then a GRU whose final state
// is the prosody embedding (fixed length regardless of input length).
struct ReferenceEncoder {
    ConvLayer conv1, conv2;
    GruParams gru;
    int channels = 0, d_ref = 0;

    static ReferenceEncoder create(ParamSet& ps, int channels, int d_ref, Prng& prng);
    // frames: channels x n_frames, row-major
    Tensor encode(Graph& g, const std::vector<double>& frames, int n_frames) const;
};

struct SpeakerTable {
    Parameter* table = nullptr;  // speakers x d_spk
    int speakers = 0, d_spk = 0;

    static SpeakerTable create(ParamSet& ps, int speakers, int d_spk, Prng& prng);
    Tensor embed(Graph& g, int speaker_id) const;
};

}  // namespace tpgst
