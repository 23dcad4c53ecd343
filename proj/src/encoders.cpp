#include "tpgst/encoders.hpp"

#include <cmath>

#include "tpgst/errors.hpp"

namespace tpgst {

void init_glorot(Parameter& p, int fan_in, int fan_out, Prng& prng) {
    const double s = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    for (double& v : p.value) v = prng.uniform(-s, s);
}

void init_uniform(Parameter& p, double lo, double hi, Prng& prng) {
    for (double& v : p.value) v = prng.uniform(lo, hi);
}

// ---- GRU ---------------------------------------------------------------------

GruParams GruParams::create(ParamSet& ps, const std::string& prefix, int d_in, int d_h,
                            Prng& prng) {
    GruParams g;
    g.input_dim = d_in;
    g.hidden_dim = d_h;
    const int din = d_in + d_h;
    g.wz = &ps.add(prefix + ".wz", {d_h, din});
    g.bz = &ps.add(prefix + ".bz", {d_h});
    g.wr = &ps.add(prefix + ".wr", {d_h, din});
    g.br = &ps.add(prefix + ".br", {d_h});
    g.wc = &ps.add(prefix + ".wc", {d_h, din});
    g.bc = &ps.add(prefix + ".bc", {d_h});
    init_glorot(*g.wz, din, d_h, prng);
    init_glorot(*g.wr, din, d_h, prng);
    init_glorot(*g.wc, din, d_h, prng);
    return g;
}

Tensor GruParams::step(Graph& g, Tensor x, Tensor h) const {
    return gru_cell(x, h, g.param(*wz), g.param(*bz), g.param(*wr), g.param(*br), g.param(*wc),
                    g.param(*bc));
}

Tensor GruParams::initial_state(Graph& g) const { return g.zeros({hidden_dim}); }

// ---- convolution ---------------------------------------------------------------

ConvLayer ConvLayer::create(ParamSet& ps, const std::string& prefix, int cin, int cout,
                            int ksize, int stride, Prng& prng) {
    ConvLayer c;
    c.cin = cin;
    c.cout = cout;
    c.ksize = ksize;
    c.stride = stride;
    c.w = &ps.add(prefix + ".w", {ksize * cin, cout});
    c.b = &ps.add(prefix + ".b", {cout});
    init_glorot(*c.w, ksize * cin, cout, prng);
    return c;
}

Tensor ConvLayer::apply(Graph& g, Tensor x) const {
    return relu(conv1d(x, g.param(*w), g.param(*b), stride, ksize));
}

// ---- text encoder ---------------------------------------------------------------

TextEncoder TextEncoder::create(ParamSet& ps, int vocab, int d_sym, int d_enc, Prng& prng) {
    if (d_enc % 2 != 0) {
        throw ValidationError("text encoder: d_enc must be even, got " + std::to_string(d_enc));
    }
    TextEncoder e;
    e.vocab = vocab;
    e.d_sym = d_sym;
    e.d_enc = d_enc;
    e.embedding = &ps.add("text_enc.embedding", {vocab, d_sym});
    init_glorot(*e.embedding, vocab, d_sym, prng);
    e.conv1 = ConvLayer::create(ps, "text_enc.conv1", d_sym, d_enc, 3, 1, prng);
    e.conv2 = ConvLayer::create(ps, "text_enc.conv2", d_enc, d_enc, 3, 1, prng);
    e.fwd = GruParams::create(ps, "text_enc.gru_fwd", d_enc, d_enc / 2, prng);
    e.bwd = GruParams::create(ps, "text_enc.gru_bwd", d_enc, d_enc / 2, prng);
    return e;
}

std::vector<Tensor> TextEncoder::encode(Graph& g, const std::vector<int>& text) const {
    if (text.empty()) throw ValidationError("encode_text: empty token sequence");
    Tensor emb = embed_rows(g.param(*embedding), text);
    Tensor conv = conv2.apply(g, conv1.apply(g, emb));
    const int t_len = static_cast<int>(text.size());

    std::vector<Tensor> fwd_states(static_cast<std::size_t>(t_len));
    Tensor hf = fwd.initial_state(g);
    for (int t = 0; t < t_len; ++t) {
        hf = fwd.step(g, row(conv, t), hf);
        fwd_states[static_cast<std::size_t>(t)] = hf;
    }
    std::vector<Tensor> bwd_states(static_cast<std::size_t>(t_len));
    Tensor hb = bwd.initial_state(g);
    for (int t = t_len - 1; t >= 0; --t) {
        hb = bwd.step(g, row(conv, t), hb);
        bwd_states[static_cast<std::size_t>(t)] = hb;
    }
    std::vector<Tensor> states(static_cast<std::size_t>(t_len));
    for (int t = 0; t < t_len; ++t) {
        states[static_cast<std::size_t>(t)] =
            concat({fwd_states[static_cast<std::size_t>(t)], bwd_states[static_cast<std::size_t>(t)]});
    }
    return states;
}

// ---- summarizer -----------------------------------------------------------------

TextSummarizer TextSummarizer::create(ParamSet& ps, int d_enc, int d_tf, Prng& prng) {
    TextSummarizer s;
    s.d_tf = d_tf;
    s.gru = GruParams::create(ps, "summarizer.gru", d_enc, d_tf, prng);
    return s;
}

Tensor TextSummarizer::summarize(Graph& g, const std::vector<Tensor>& states) const {
    if (states.empty()) throw ValidationError("summarize_text: empty state sequence");
    Tensor h = gru.initial_state(g);
    for (Tensor s : states) h = gru.step(g, s, h);
    return h;
}

// ---- reference encoder ------------------------------------------------------------

ReferenceEncoder ReferenceEncoder::create(ParamSet& ps, int channels, int d_ref, Prng& prng) {
    ReferenceEncoder r;
    r.channels = channels;
    r.d_ref = d_ref;
    r.conv1 = ConvLayer::create(ps, "ref_enc.conv1", channels, d_ref, 3, 2, prng);
    r.conv2 = ConvLayer::create(ps, "ref_enc.conv2", d_ref, d_ref, 3, 2, prng);
    r.gru = GruParams::create(ps, "ref_enc.gru", d_ref, d_ref, prng);
    return r;
}

Tensor ReferenceEncoder::encode(Graph& g, const std::vector<double>& frames,
                                int n_frames) const {
    if (n_frames < 1 ||
        frames.size() != static_cast<std::size_t>(channels) * static_cast<std::size_t>(n_frames)) {
        throw DimensionError("encode_reference: expected " + std::to_string(channels) +
                             " channels x " + std::to_string(n_frames) + " frames, got " +
                             std::to_string(frames.size()) + " values");
    }
    // rows are timesteps: transpose the channel-major frame matrix
    std::vector<double> seq(frames.size());
    for (int t = 0; t < n_frames; ++t) {
        for (int c = 0; c < channels; ++c) {
            seq[static_cast<std::size_t>(t) * channels + c] =
                frames[static_cast<std::size_t>(c) * n_frames + t];
        }
    }
    Tensor x = g.constant({n_frames, channels}, std::move(seq));
    Tensor conv = conv2.apply(g, conv1.apply(g, x));
    Tensor h = gru.initial_state(g);
    for (int t = 0; t < conv.dim(0); ++t) h = gru.step(g, row(conv, t), h);
    return h;
}

// ---- speaker table -----------------------------------------------------------------

SpeakerTable SpeakerTable::create(ParamSet& ps, int speakers, int d_spk, Prng& prng) {
    SpeakerTable s;
    s.speakers = speakers;
    s.d_spk = d_spk;
    s.table = &ps.add("speaker.table", {speakers, d_spk});
    init_glorot(*s.table, speakers, d_spk, prng);
    return s;
}

Tensor SpeakerTable::embed(Graph& g, int speaker_id) const {
    if (speaker_id < 0 || speaker_id >= speakers) {
        throw ValidationError("embed_speaker: id " + std::to_string(speaker_id) +
                              " out of range [0, " + std::to_string(speakers) + ")");
    }
    return row(embed_rows(g.param(*table), {speaker_id}), 0);
}

}  // namespace tpgst
