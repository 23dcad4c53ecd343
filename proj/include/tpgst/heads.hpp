#pragma once

#include <vector>

#include "tpgst/prng.hpp"
#include "tpgst/style.hpp"
#include "tpgst/tensor.hpp"

namespace tpgst {

// Single fully-connected layer whose outputs are combination-weight logits,
// one row of num_tokens logits per attention head.
struct TpcwHead {
    Parameter* w = nullptr;  // (num_heads*num_tokens) x d_tf
    Parameter* b = nullptr;
    int d_tf = 0, num_heads = 0, num_tokens = 0;

    static TpcwHead create(ParamSet& ps, int d_tf, int num_heads, int num_tokens, Prng& prng);
};

struct TpcwOut {
    Tensor logits;   // num_heads x num_tokens
    Tensor weights;  // per-row softmax of logits
};

TpcwOut predict_combination_weights(Graph& g, Tensor text_features, const TpcwHead& head);

// Mean over heads of the distribution cross-entropy between a logits row and
// the matching target row. The caller detaches the target.
Tensor tpcw_loss(Tensor logits, Tensor target_weights);

// MLP with relu hidden layers and a tanh output; predicts the style embedding
// without touching the token bank.
struct TpseHead {
    std::vector<Parameter*> ws;
    std::vector<Parameter*> bs;
    int d_tf = 0, d_hid = 0, n_hidden = 0, d_emb = 0;

    static TpseHead create(ParamSet& ps, int d_tf, int n_hidden, int d_hid, int d_emb,
                           Prng& prng);
};

Tensor predict_style_embedding(Graph& g, Tensor text_features, const TpseHead& head);

// L1 between predicted and target style embeddings; caller detaches the target.
Tensor tpse_loss(Tensor pred, Tensor target);

}  // namespace tpgst
