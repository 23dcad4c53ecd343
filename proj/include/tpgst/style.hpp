#pragma once

#include <string>
#include <vector>

#include "tpgst/prng.hpp"
#include "tpgst/tensor.hpp"

namespace tpgst {

// Trainable token bank with per-head additive-attention projections. One bank
// exists per model; the tokens are shared across all utterances and speakers.
struct StyleTokenBank {
    Parameter* tokens = nullptr;  // num_tokens x d_tok, d_tok = d_emb / num_heads
    struct Head {
        Parameter* query_proj = nullptr;  // d_attn x d_ref
        Parameter* key_proj = nullptr;    // d_tok x d_attn
        Parameter* score = nullptr;       // d_attn
        Parameter* value_proj = nullptr;  // d_tok x (d_emb / num_heads)
    };
    std::vector<Head> heads;
    int num_tokens = 0, num_heads = 0, d_emb = 0, d_attn = 0, d_ref = 0, d_tok = 0;

    static StyleTokenBank create(ParamSet& ps, int num_tokens, int num_heads, int d_emb,
                                 int d_attn, int d_ref, Prng& prng);
};

struct StyleAttentionOut {
    Tensor weights;    // num_heads x num_tokens, rows are probability vectors
    Tensor embedding;  // d_emb
};

// Per head j: score(i) = v_j . tanh(Q_j p + K_j tanh(token_i)); weights row j
// is the softmax over tokens; the embedding concatenates the per-head
// value-projected combinations.
StyleAttentionOut style_attention(Graph& g, Tensor prosody, const StyleTokenBank& bank);

// Same weights -> embedding map as style_attention, with supplied weights.
// Rows must be probability vectors (sum within 1e-6).
Tensor combine_tokens(Graph& g, Tensor weights, const StyleTokenBank& bank);

// One-hot weights at `index`, embedding scaled by `scale`.
Tensor condition_on_token(Graph& g, int index, double scale, const StyleTokenBank& bank);

}  // namespace tpgst
