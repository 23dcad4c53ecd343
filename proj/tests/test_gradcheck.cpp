#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"
#include "tpgst/gradcheck.hpp"
#include "tpgst/tensor.hpp"

using namespace tpgst;

namespace {

TaskConfig small_task() {
    TaskConfig t;
    t.vocab_size = 8;
    t.styles = 2;
    t.speakers = 2;
    t.channels = 8;
    t.frames_per_utterance = 16;
    t.frames_per_symbol = 2;
    t.cue_probability = 0.9;
    t.noise_fraction = 0.2;
    t.noise_band_width = 2;
    t.noise_amplitude = 0.5;
    t.style_table = {{0, 1.0, 1.0}, {2, 1.6, 1.0}};
    t.speaker_bias.assign(16, 0.0);
    t.speaker_bias[1] = 0.06;
    t.speaker_bias[8 + 3] = 0.06;
    return t;
}

ModelConfig small_model() {
    ModelConfig c;
    c.d_sym = 8;
    c.d_enc = 16;
    c.d_tf = 12;
    c.d_ref = 8;
    c.d_spk = 8;
    c.num_tokens = 4;
    c.num_heads = 2;
    c.d_emb = 8;
    c.d_attn = 8;
    c.d_hid = 12;
    c.d_dec = 16;
    return c;
}

}  // namespace

TEST_CASE("gradcheck passes on a small joint model") {
    GradCheckReport report = run_gradcheck(small_task(), small_model(), 1, 6);
    INFO(report.to_text());
    CHECK(report.pass());
    bool saw_joint = false;
    for (const GradCheckLine& l : report.lines) {
        if (l.component == "joint_loss") {
            saw_joint = true;
            CHECK(l.max_rel_err < 1e-4);
        }
    }
    CHECK(saw_joint);
    CHECK(report.stop_grad_zero_ok);
}

TEST_CASE("gradcheck catches a corrupted adjoint and names the op") {
    debug::set_adjoint_fault(Unary::Tanh, true);
    GradCheckReport report = run_gradcheck(small_task(), small_model(), 1, 2);
    debug::set_adjoint_fault(Unary::Tanh, false);
    CHECK_FALSE(report.pass());
    bool tanh_failed = false;
    for (const GradCheckLine& l : report.lines) {
        if (l.component == "tanh" && l.max_rel_err >= 1e-4) tanh_failed = true;
    }
    CHECK(tanh_failed);
    CHECK(report.to_text().find("FAIL tanh") != std::string::npos);
}
