#include "tpgst/style.hpp"

#include <cmath>

#include "tpgst/encoders.hpp"
#include "tpgst/errors.hpp"

namespace tpgst {

StyleTokenBank StyleTokenBank::create(ParamSet& ps, int num_tokens, int num_heads, int d_emb,
                                      int d_attn, int d_ref, Prng& prng) {
    if (num_heads < 1 || d_emb % num_heads != 0) {
        throw ValidationError("style bank: d_emb " + std::to_string(d_emb) +
                              " not divisible by heads " + std::to_string(num_heads));
    }
    StyleTokenBank b;
    b.num_tokens = num_tokens;
    b.num_heads = num_heads;
    b.d_emb = d_emb;
    b.d_attn = d_attn;
    b.d_ref = d_ref;
    b.d_tok = d_emb / num_heads;
    b.tokens = &ps.add("style.tokens", {num_tokens, b.d_tok});
    init_uniform(*b.tokens, -0.5, 0.5, prng);
    b.heads.resize(static_cast<std::size_t>(num_heads));
    for (int j = 0; j < num_heads; ++j) {
        const std::string prefix = "style.head" + std::to_string(j);
        Head& h = b.heads[static_cast<std::size_t>(j)];
        h.query_proj = &ps.add(prefix + ".query", {d_attn, d_ref});
        h.key_proj = &ps.add(prefix + ".key", {b.d_tok, d_attn});
        h.score = &ps.add(prefix + ".score", {d_attn});
        h.value_proj = &ps.add(prefix + ".value", {b.d_tok, d_emb / num_heads});
        init_glorot(*h.query_proj, d_ref, d_attn, prng);
        init_glorot(*h.key_proj, b.d_tok, d_attn, prng);
        init_uniform(*h.score, -0.5, 0.5, prng);
        init_glorot(*h.value_proj, b.d_tok, d_emb / num_heads, prng);
    }
    return b;
}

namespace {

// The single definition of the weights -> embedding map; both the attention
// path and the supplied-weights path go through here so they agree bitwise.
Tensor combine_impl(Graph& g, Tensor weights, const StyleTokenBank& bank) {
    Tensor tanh_tokens = tanh(g.param(*bank.tokens));
    std::vector<Tensor> parts;
    parts.reserve(bank.heads.size());
    for (int j = 0; j < bank.num_heads; ++j) {
        const StyleTokenBank::Head& h = bank.heads[static_cast<std::size_t>(j)];
        Tensor values = matmul(tanh_tokens, g.param(*h.value_proj));  // N x (d_emb/h)
        parts.push_back(matvec_t(values, row(weights, j)));
    }
    return concat(parts);
}

}  // namespace

StyleAttentionOut style_attention(Graph& g, Tensor prosody, const StyleTokenBank& bank) {
    if (prosody.rank() != 1 || prosody.dim(0) != bank.d_ref) {
        throw DimensionError("style_attention: prosody " + shape_str(prosody.shape()) +
                             " vs d_ref " + std::to_string(bank.d_ref));
    }
    Tensor tanh_tokens = tanh(g.param(*bank.tokens));
    std::vector<Tensor> weight_rows;
    weight_rows.reserve(bank.heads.size());
    for (const StyleTokenBank::Head& h : bank.heads) {
        Tensor q = matvec(g.param(*h.query_proj), prosody);          // d_attn
        Tensor keys = matmul(tanh_tokens, g.param(*h.key_proj));     // N x d_attn
        Tensor scores = affine(tanh(add_rowvec(keys, q)), g.param(*h.score), Tensor{});
        weight_rows.push_back(softmax(scores, 0));
    }
    StyleAttentionOut out;
    out.weights = stack_rows(weight_rows);
    out.embedding = combine_impl(g, out.weights, bank);
    return out;
}

Tensor combine_tokens(Graph& g, Tensor weights, const StyleTokenBank& bank) {
    if (weights.rank() != 2 || weights.dim(0) != bank.num_heads ||
        weights.dim(1) != bank.num_tokens) {
        throw DimensionError("combine_tokens: weights " + shape_str(weights.shape()) +
                             " vs expected (" + std::to_string(bank.num_heads) + "x" +
                             std::to_string(bank.num_tokens) + ")");
    }
    const std::vector<double>& w = weights.values();
    for (int j = 0; j < bank.num_heads; ++j) {
        double s = 0.0;
        for (int i = 0; i < bank.num_tokens; ++i) {
            const double v = w[static_cast<std::size_t>(j * bank.num_tokens + i)];
            if (v < 0.0) {
                throw ValidationError("combine_tokens: negative weight in head " +
                                      std::to_string(j));
            }
            s += v;
        }
        if (std::abs(s - 1.0) > 1e-6) {
            throw ValidationError("combine_tokens: head " + std::to_string(j) + " row sums to " +
                                  std::to_string(s) + ", expected 1");
        }
    }
    return combine_impl(g, weights, bank);
}

Tensor condition_on_token(Graph& g, int index, double scale, const StyleTokenBank& bank) {
    if (index < 0 || index >= bank.num_tokens) {
        throw ValidationError("condition_on_token: index " + std::to_string(index) +
                              " out of range [0, " + std::to_string(bank.num_tokens) + ")");
    }
    std::vector<double> one_hot(
        static_cast<std::size_t>(bank.num_heads) * static_cast<std::size_t>(bank.num_tokens), 0.0);
    for (int j = 0; j < bank.num_heads; ++j) {
        one_hot[static_cast<std::size_t>(j * bank.num_tokens + index)] = 1.0;
    }
    Tensor weights = g.constant({bank.num_heads, bank.num_tokens}, std::move(one_hot));
    return scale == 1.0 ? combine_impl(g, weights, bank)
                        : tpgst::scale(combine_impl(g, weights, bank), scale);
}

}  // namespace tpgst
