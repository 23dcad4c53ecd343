#include "tpgst/model.hpp"

#include <cmath>

#include "tpgst/errors.hpp"

namespace tpgst {

void ModelConfig::validate(const TaskConfig& task) const {
    auto fail = [](const std::string& msg) { throw ValidationError("model." + msg); };
    const std::pair<int, const char*> dims[] = {
        {d_sym, "d_sym"},   {d_enc, "d_enc"},           {d_tf, "d_tf"},
        {d_ref, "d_ref"},   {d_spk, "d_spk"},           {num_tokens, "num_tokens"},
        {num_heads, "num_heads"}, {d_emb, "d_emb"},     {d_attn, "d_attn"},
        {d_hid, "d_hid"},   {d_dec, "d_dec"}};
    for (auto [v, name] : dims) {
        if (v < 1) fail(std::string(name) + ": must be >= 1");
    }
    if (n_hidden < 0) fail("n_hidden: must be >= 0");
    if (d_enc % 2 != 0) fail("d_enc: must be even");
    if (d_emb % num_heads != 0) fail("d_emb: must be divisible by num_heads");
    if (w_tpcw < 0.0 || w_tpse < 0.0 || w_free_run < 0.0) fail("loss weights: must be >= 0");
    if (lr <= 0.0) fail("lr: must be > 0");
    if (beta1 < 0.0 || beta1 >= 1.0 || beta2 < 0.0 || beta2 >= 1.0) {
        fail("beta1/beta2: must be in [0, 1)");
    }
    if (adam_eps <= 0.0) fail("adam_eps: must be > 0");
    task.validate();
}

std::vector<double> decoder_step_encoding(double column) {
    std::vector<double> enc(kDecoderPosDim);
    double period = 4.0;
    for (int i = 0; i < kDecoderPosDim / 2; ++i) {
        const double w = 2.0 * 3.14159265358979323846 / period;
        enc[static_cast<std::size_t>(2 * i)] = std::sin(w * column);
        enc[static_cast<std::size_t>(2 * i + 1)] = std::cos(w * column);
        period *= 2.0;
    }
    return enc;
}

DecoderParams DecoderParams::create(ParamSet& ps, int channels, int d_cond, int d_dec,
                                    Prng& prng) {
    if (d_dec < kDecoderPosDim) {
        throw ValidationError("model.d_dec: must be >= " + std::to_string(kDecoderPosDim));
    }
    DecoderParams d;
    d.channels = channels;
    d.d_cond = d_cond;
    d.d_att = d_dec;
    d.attn_q = &ps.add("decoder.attn_q", {d.d_att, d_dec + kDecoderPosDim});
    d.attn_k = &ps.add("decoder.attn_k", {d_cond + kDecoderPosDim, d.d_att});
    init_glorot(*d.attn_q, d_dec + kDecoderPosDim, d.d_att, prng);
    init_glorot(*d.attn_k, d_cond + kDecoderPosDim, d.d_att, prng);
    // alignment prior: route the two sinusoid banks through the last
    // kDecoderPosDim attention dims, so scores start peaked where the output
    // column matches the text position's base-rate column
    const double gamma = 0.5;
    for (int j = 0; j < kDecoderPosDim; ++j) {
        const int att = d.d_att - kDecoderPosDim + j;
        d.attn_q->value[static_cast<std::size_t>(att * (d_dec + kDecoderPosDim) + d_dec + j)] =
            gamma;
        d.attn_k->value[static_cast<std::size_t>((d_cond + j) * d.d_att + att)] = gamma;
    }
    d.gru = GruParams::create(ps, "decoder.gru", channels + d_cond + kDecoderPosDim, d_dec, prng);
    d.out_w = &ps.add("decoder.out_w", {channels, d_dec});
    d.out_b = &ps.add("decoder.out_b", {channels});
    init_glorot(*d.out_w, d_dec, channels, prng);
    return d;
}

Model Model::build(TaskConfig task, ModelConfig cfg) {
    cfg.validate(task);
    Model m;
    m.task = std::move(task);
    m.cfg = cfg;
    Prng prng(cfg.seed);
    m.text_enc = TextEncoder::create(m.params, m.task.vocab_size, cfg.d_sym, cfg.d_enc, prng);
    m.summarizer = TextSummarizer::create(m.params, cfg.d_enc, cfg.d_tf, prng);
    if (!cfg.baseline_mode) {
        m.ref_enc = ReferenceEncoder::create(m.params, m.task.channels, cfg.d_ref, prng);
    }
    m.speakers = SpeakerTable::create(m.params, m.task.speakers, cfg.d_spk, prng);
    if (!cfg.baseline_mode) {
        m.bank = StyleTokenBank::create(m.params, cfg.num_tokens, cfg.num_heads, cfg.d_emb,
                                        cfg.d_attn, cfg.d_ref, prng);
        m.tpcw = TpcwHead::create(m.params, cfg.d_tf, cfg.num_heads, cfg.num_tokens, prng);
        m.tpse = TpseHead::create(m.params, cfg.d_tf, cfg.n_hidden, cfg.d_hid, cfg.d_emb, prng);
    }
    m.decoder = DecoderParams::create(m.params, m.task.channels, m.cond_dim(), cfg.d_dec, prng);
    return m;
}

std::vector<Tensor> condition_states(const std::vector<Tensor>& text_states,
                                     Tensor style_embedding, Tensor speaker_embedding) {
    std::vector<Tensor> out;
    out.reserve(text_states.size());
    for (Tensor s : text_states) out.push_back(concat({s, style_embedding, speaker_embedding}));
    return out;
}

std::vector<Tensor> decode(Graph& g, const Model& m, const std::vector<Tensor>& states,
                           int out_frames, const std::vector<double>* teacher_frames) {
    if (states.empty()) throw ValidationError("decode: empty conditioned states");
    const DecoderParams& d = m.decoder;
    const int f = d.channels;
    if (teacher_frames != nullptr &&
        teacher_frames->size() != static_cast<std::size_t>(f) * static_cast<std::size_t>(out_frames)) {
        throw ValidationError("decode: teacher frames have " +
                              std::to_string(teacher_frames->size()) + " values, expected " +
                              std::to_string(f) + "x" + std::to_string(out_frames));
    }
    // append the text-side position code: the segment's center column at the
    // base rate (style-rate warps are left to the learned projections)
    const double base = static_cast<double>(m.task.frames_per_symbol);
    std::vector<Tensor> aug;
    aug.reserve(states.size());
    for (std::size_t i = 0; i < states.size(); ++i) {
        Tensor pos = g.constant({kDecoderPosDim},
                                decoder_step_encoding((static_cast<double>(i) + 0.5) * base));
        aug.push_back(concat({states[i], pos}));
    }
    Tensor states_mat = stack_rows(aug);
    Tensor keys = matmul(states_mat, g.param(*d.attn_k));  // T x d_att
    Tensor h = d.gru.initial_state(g);
    Tensor prev = g.zeros({f});  // go frame
    std::vector<Tensor> frames;
    frames.reserve(static_cast<std::size_t>(out_frames));
    for (int t = 0; t < out_frames; ++t) {
        Tensor pos = g.constant({kDecoderPosDim}, decoder_step_encoding(t));
        Tensor q = matvec(g.param(*d.attn_q), concat({h, pos}));
        Tensor alpha = softmax(affine(keys, q, Tensor{}), 0);
        Tensor context = matvec_t(states_mat, alpha);
        h = d.gru.step(g, concat({prev, context}), h);
        Tensor frame = affine(g.param(*d.out_w), h, g.param(*d.out_b));
        frames.push_back(frame);
        if (teacher_frames != nullptr) {
            std::vector<double> col(static_cast<std::size_t>(f));
            for (int c = 0; c < f; ++c) {
                col[static_cast<std::size_t>(c)] =
                    (*teacher_frames)[static_cast<std::size_t>(c) * out_frames + t];
            }
            prev = g.constant({f}, std::move(col));
        } else {
            prev = frame;
        }
    }
    return frames;
}

UtteranceLosses utterance_losses(Graph& g, const Model& m, const SyntheticUtterance& u) {
    const int f = m.task.channels;
    const int l = m.task.frames_per_utterance;
    if (u.channels != f || u.n_frames() != l) {
        throw ValidationError("utterance_losses: frames are " + std::to_string(u.channels) + "x" +
                              std::to_string(u.n_frames()) + ", task expects " +
                              std::to_string(f) + "x" + std::to_string(l));
    }

    std::vector<Tensor> text_states = m.text_enc.encode(g, u.text);
    Tensor spk = m.speakers.embed(g, u.speaker_id);

    UtteranceLosses out;
    Tensor style_emb;
    Tensor tf;
    if (m.cfg.baseline_mode) {
        style_emb = g.zeros({m.cfg.d_emb});
    } else {
        Tensor prosody = m.ref_enc.encode(g, u.frames, l);
        StyleAttentionOut att = style_attention(g, prosody, m.bank);
        style_emb = att.embedding;

        tf = m.summarizer.summarize(g, text_states);
        if (m.cfg.detach_text_features) tf = stop_gradient(tf);
        TpcwOut pw = predict_combination_weights(g, tf, m.tpcw);
        out.tpcw = tpcw_loss(pw.logits, stop_gradient(att.weights));
        Tensor pe = predict_style_embedding(g, tf, m.tpse);
        out.tpse = tpse_loss(pe, stop_gradient(style_emb));
    }

    std::vector<Tensor> cond = condition_states(text_states, style_emb, spk);

    // mean L1 over the full frame matrix, column by column
    auto frame_l1 = [&](const std::vector<Tensor>& frames) {
        Tensor acc;
        for (int t = 0; t < l; ++t) {
            std::vector<double> col(static_cast<std::size_t>(f));
            for (int c = 0; c < f; ++c) {
                col[static_cast<std::size_t>(c)] = u.frames[static_cast<std::size_t>(c) * l + t];
            }
            Tensor term =
                l1_loss(frames[static_cast<std::size_t>(t)], g.constant({f}, std::move(col)));
            acc = t == 0 ? term : add(acc, term);
        }
        return scale(acc, 1.0 / static_cast<double>(l));
    };
    out.rec = frame_l1(decode(g, m, cond, l, &u.frames));
    out.free_run = frame_l1(decode(g, m, cond, l, nullptr));

    out.total = add(out.rec, scale(out.free_run, m.cfg.w_free_run));
    if (!m.cfg.baseline_mode) {
        out.total =
            add(out.total, add(scale(out.tpcw, m.cfg.w_tpcw), scale(out.tpse, m.cfg.w_tpse)));
    }
    return out;
}

InferMode parse_infer_mode(const std::string& name) {
    if (name == "gst") return InferMode::Gst;
    if (name == "tpcw") return InferMode::Tpcw;
    if (name == "tpse") return InferMode::Tpse;
    if (name == "token") return InferMode::Token;
    if (name == "zero") return InferMode::Zero;
    throw UsageError("unknown inference mode '" + name +
                     "' (expected gst, tpcw, tpse, token, or zero)");
}

std::string infer_mode_name(InferMode mode) {
    switch (mode) {
        case InferMode::Gst: return "gst";
        case InferMode::Tpcw: return "tpcw";
        case InferMode::Tpse: return "tpse";
        case InferMode::Token: return "token";
        case InferMode::Zero: return "zero";
    }
    return "?";
}

std::vector<double> infer(const Model& m, const InferRequest& req) {
    if (m.cfg.baseline_mode && req.mode != InferMode::Zero) {
        throw UsageError("baseline checkpoint has no style pathway; only mode=zero is available");
    }
    Graph g;
    std::vector<Tensor> text_states = m.text_enc.encode(g, req.text);
    Tensor spk = m.speakers.embed(g, req.speaker_id);

    Tensor style_emb;
    switch (req.mode) {
        case InferMode::Gst: {
            if (req.reference_frames == nullptr) {
                throw UsageError("mode=gst requires reference frames");
            }
            Tensor prosody = m.ref_enc.encode(g, *req.reference_frames, req.reference_len);
            style_emb = style_attention(g, prosody, m.bank).embedding;
            break;
        }
        case InferMode::Tpcw: {
            Tensor tf = m.summarizer.summarize(g, text_states);
            TpcwOut pw = predict_combination_weights(g, tf, m.tpcw);
            style_emb = combine_tokens(g, pw.weights, m.bank);
            break;
        }
        case InferMode::Tpse: {
            Tensor tf = m.summarizer.summarize(g, text_states);
            style_emb = predict_style_embedding(g, tf, m.tpse);
            break;
        }
        case InferMode::Token: {
            if (req.token_index < 0) throw UsageError("mode=token requires a token index");
            style_emb = condition_on_token(g, req.token_index, req.token_scale, m.bank);
            break;
        }
        case InferMode::Zero:
            style_emb = g.zeros({m.cfg.d_emb});
            break;
    }

    std::vector<Tensor> cond = condition_states(text_states, style_emb, spk);
    std::vector<Tensor> frames = decode(g, m, cond, m.task.frames_per_utterance, nullptr);

    const int f = m.task.channels;
    const int l = m.task.frames_per_utterance;
    std::vector<double> out(static_cast<std::size_t>(f) * static_cast<std::size_t>(l));
    for (int t = 0; t < l; ++t) {
        const std::vector<double>& col = frames[static_cast<std::size_t>(t)].values();
        for (int c = 0; c < f; ++c) {
            out[static_cast<std::size_t>(c) * l + t] = col[static_cast<std::size_t>(c)];
        }
    }
    return out;
}

}  // namespace tpgst
