#include "tpgst/heads.hpp"

#include "tpgst/encoders.hpp"
#include "tpgst/errors.hpp"

namespace tpgst {

TpcwHead TpcwHead::create(ParamSet& ps, int d_tf, int num_heads, int num_tokens, Prng& prng) {
    TpcwHead h;
    h.d_tf = d_tf;
    h.num_heads = num_heads;
    h.num_tokens = num_tokens;
    h.w = &ps.add("tpcw.w", {num_heads * num_tokens, d_tf});
    h.b = &ps.add("tpcw.b", {num_heads * num_tokens});
    init_glorot(*h.w, d_tf, num_heads * num_tokens, prng);
    return h;
}

TpcwOut predict_combination_weights(Graph& g, Tensor text_features, const TpcwHead& head) {
    if (text_features.rank() != 1 || text_features.dim(0) != head.d_tf) {
        throw DimensionError("predict_combination_weights: text features " +
                             shape_str(text_features.shape()) + " vs d_tf " +
                             std::to_string(head.d_tf));
    }
    Tensor flat = affine(g.param(*head.w), text_features, g.param(*head.b));
    TpcwOut out;
    out.logits = reshape(flat, {head.num_heads, head.num_tokens});
    out.weights = softmax(out.logits, 1);
    return out;
}

Tensor tpcw_loss(Tensor logits, Tensor target_weights) {
    if (logits.shape() != target_weights.shape()) {
        throw DimensionError("tpcw_loss: logits " + shape_str(logits.shape()) + " vs target " +
                             shape_str(target_weights.shape()));
    }
    const int heads = logits.dim(0);
    Tensor acc;
    for (int j = 0; j < heads; ++j) {
        Tensor ce = cross_entropy_from_distribution(row(logits, j), row(target_weights, j));
        acc = j == 0 ? ce : add(acc, ce);
    }
    return scale(acc, 1.0 / static_cast<double>(heads));
}

TpseHead TpseHead::create(ParamSet& ps, int d_tf, int n_hidden, int d_hid, int d_emb,
                          Prng& prng) {
    TpseHead h;
    h.d_tf = d_tf;
    h.d_hid = d_hid;
    h.n_hidden = n_hidden;
    h.d_emb = d_emb;
    int in = d_tf;
    for (int i = 0; i < n_hidden; ++i) {
        h.ws.push_back(&ps.add("tpse.h" + std::to_string(i) + ".w", {d_hid, in}));
        h.bs.push_back(&ps.add("tpse.h" + std::to_string(i) + ".b", {d_hid}));
        init_glorot(*h.ws.back(), in, d_hid, prng);
        in = d_hid;
    }
    h.ws.push_back(&ps.add("tpse.out.w", {d_emb, in}));
    h.bs.push_back(&ps.add("tpse.out.b", {d_emb}));
    init_glorot(*h.ws.back(), in, d_emb, prng);
    return h;
}

Tensor predict_style_embedding(Graph& g, Tensor text_features, const TpseHead& head) {
    if (text_features.rank() != 1 || text_features.dim(0) != head.d_tf) {
        throw DimensionError("predict_style_embedding: text features " +
                             shape_str(text_features.shape()) + " vs d_tf " +
                             std::to_string(head.d_tf));
    }
    Tensor x = text_features;
    for (int i = 0; i < head.n_hidden; ++i) {
        x = relu(affine(g.param(*head.ws[static_cast<std::size_t>(i)]), x,
                        g.param(*head.bs[static_cast<std::size_t>(i)])));
    }
    return tanh(affine(g.param(*head.ws.back()), x, g.param(*head.bs.back())));
}

Tensor tpse_loss(Tensor pred, Tensor target) { return l1_loss(pred, target); }

}  // namespace tpgst
