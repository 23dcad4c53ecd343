#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "tpgst/data.hpp"
#include "tpgst/errors.hpp"

using namespace tpgst;

namespace {

TaskConfig zero_bias_config() {
    TaskConfig cfg = default_task_config();
    std::fill(cfg.speaker_bias.begin(), cfg.speaker_bias.end(), 0.0);
    return cfg;
}

std::string temp_path(const std::string& name) { return "/tmp/tpgst_test_" + name; }

}  // namespace

TEST_CASE("default config validates") {
    default_task_config().validate();

    TaskConfig bad = default_task_config();
    bad.cue_probability = 1.5;
    CHECK_THROWS_WITH_AS(bad.validate(), doctest::Contains("cue_probability"), ValidationError);
    bad = default_task_config();
    bad.noise_band_width = 32;
    CHECK_THROWS_WITH_AS(bad.validate(), doctest::Contains("noise_band_width"), ValidationError);
}

TEST_CASE("empty text renders speaker bias broadcast") {
    TaskConfig cfg = default_task_config();
    Prng prng(1);
    RenderResult r = render_frames({}, 0, 1, false, cfg, prng);
    CHECK_FALSE(r.truncated);
    const int l = cfg.frames_per_utterance;
    for (int c = 0; c < cfg.channels; ++c) {
        for (int t = 0; t < l; ++t) {
            CHECK(r.frames[static_cast<std::size_t>(c * l + t)] ==
                  cfg.speaker_bias[static_cast<std::size_t>(1 * cfg.channels + c)]);
        }
    }
}

TEST_CASE("single symbol under the identity style") {
    TaskConfig cfg = zero_bias_config();
    Prng prng(1);
    const int sym = cfg.styles + 2;
    RenderResult r = render_frames({sym}, 0, 0, false, cfg, prng);
    const int l = cfg.frames_per_utterance;
    const int dur = cfg.frames_per_symbol;
    const int center = bump_center(sym, cfg);
    // template columns for the first `dur` frames, silence afterwards
    for (int t = 0; t < l; ++t) {
        for (int c = 0; c < cfg.channels; ++c) {
            const double v = r.frames[static_cast<std::size_t>(c * l + t)];
            if (t >= dur) {
                CHECK(v == 0.0);
            } else if (std::abs(c - center) <= 4) {
                const double d = c - center;
                CHECK(v == doctest::Approx(std::exp(-d * d / 4.5)).epsilon(1e-15));
            } else {
                CHECK(v == 0.0);
            }
        }
    }
}

TEST_CASE("pitch shift moves bump centers by construction") {
    TaskConfig cfg = zero_bias_config();
    cfg.style_table[1] = {3, 1.0, 1.0};  // shift +3, otherwise identity
    // symbols with interior centers; edge bumps clip at channel 0 and cannot
    // equal their rolled counterparts
    std::vector<int> text;
    for (int sym = cfg.styles; sym < cfg.vocab_size && text.size() < 3; ++sym) {
        if (bump_center(sym, cfg) >= 4) text.push_back(sym);
    }
    REQUIRE(text.size() == 3);
    Prng p1(1), p2(1);
    RenderResult base = render_frames(text, 0, 0, false, cfg, p1);
    RenderResult shifted = render_frames(text, 1, 0, false, cfg, p2);
    const int l = cfg.frames_per_utterance;
    bool all_match = true;
    for (int c = 0; c < cfg.channels; ++c) {
        for (int t = 0; t < l; ++t) {
            const double want = c >= 3 ? base.frames[static_cast<std::size_t>((c - 3) * l + t)] : 0.0;
            if (shifted.frames[static_cast<std::size_t>(c * l + t)] != want) all_match = false;
        }
    }
    CHECK(all_match);
}

TEST_CASE("cue and noise probabilities at the extremes") {
    TaskConfig cfg = default_task_config();
    cfg.cue_probability = 1.0;
    cfg.noise_fraction = 0.0;
    Prng prng(5);
    for (int i = 0; i < 64; ++i) {
        SyntheticUtterance u = sample_utterance(cfg, prng);
        REQUIRE_FALSE(u.text.empty());
        CHECK(u.text[0] == u.style_id);
        CHECK_FALSE(u.noise_flag);
        CHECK_FALSE(u.truncated);
        CHECK(u.n_frames() == cfg.frames_per_utterance);
    }
}

TEST_CASE("style separability for a fixed body and speaker") {
    TaskConfig cfg = default_task_config();
    const std::vector<int> body = {cfg.styles + 1, cfg.styles + 3, cfg.styles + 7};
    for (int a = 0; a < cfg.styles; ++a) {
        for (int b = a + 1; b < cfg.styles; ++b) {
            Prng pa(1), pb(1);
            RenderResult ra = render_frames(body, a, 0, false, cfg, pa);
            RenderResult rb = render_frames(body, b, 0, false, cfg, pb);
            double l1 = 0.0;
            for (std::size_t i = 0; i < ra.frames.size(); ++i) {
                l1 += std::abs(ra.frames[i] - rb.frames[i]);
            }
            CHECK(l1 > 0.0);
        }
    }
}

TEST_CASE("noise flag is independent of text cue") {
    TaskConfig cfg = default_task_config();
    cfg.cue_probability = 0.5;
    cfg.noise_fraction = 0.5;
    Prng prng(123);
    int n = 4000, cued = 0, noisy = 0, both = 0;
    for (int i = 0; i < n; ++i) {
        SyntheticUtterance u = sample_utterance(cfg, prng);
        const bool c = !u.text.empty() && u.text[0] < cfg.styles;
        cued += c;
        noisy += u.noise_flag;
        both += c && u.noise_flag;
    }
    const double corr = both / static_cast<double>(n) -
                        (cued / static_cast<double>(n)) * (noisy / static_cast<double>(n));
    CHECK(std::abs(corr) < 0.03);
}

TEST_CASE("long text truncates with a recorded flag") {
    TaskConfig cfg = default_task_config();
    std::vector<int> text(40, cfg.styles + 1);
    Prng prng(1);
    RenderResult r = render_frames(text, 0, 0, false, cfg, prng);
    CHECK(r.truncated);
    CHECK(r.frames.size() ==
          static_cast<std::size_t>(cfg.channels) * static_cast<std::size_t>(cfg.frames_per_utterance));
}

TEST_CASE("dataset write/read round-trips exactly") {
    TaskConfig cfg = default_task_config();
    std::vector<SyntheticUtterance> data = make_dataset(cfg, 42, 8);
    const std::string path = temp_path("roundtrip.jsonl");
    write_dataset(data, path);
    std::vector<SyntheticUtterance> back = read_dataset(path);
    REQUIRE(back.size() == data.size());
    for (std::size_t i = 0; i < data.size(); ++i) {
        CHECK(back[i].text == data[i].text);
        CHECK(back[i].style_id == data[i].style_id);
        CHECK(back[i].speaker_id == data[i].speaker_id);
        CHECK(back[i].noise_flag == data[i].noise_flag);
        CHECK(back[i].channels == data[i].channels);
        CHECK(back[i].frames == data[i].frames);  // bit-exact doubles
    }
    std::remove(path.c_str());
}

TEST_CASE("identical seeds give byte-identical dataset files") {
    TaskConfig cfg = default_task_config();
    const std::string p1 = temp_path("seed42_a.jsonl");
    const std::string p2 = temp_path("seed42_b.jsonl");
    write_dataset(make_dataset(cfg, 42, 16), p1);
    write_dataset(make_dataset(cfg, 42, 16), p2);
    CHECK(file_hash(p1) == file_hash(p2));
    write_dataset(make_dataset(cfg, 43, 16), p2);
    CHECK(file_hash(p1) != file_hash(p2));
    std::remove(p1.c_str());
    std::remove(p2.c_str());
}

TEST_CASE("malformed dataset line reports its line number") {
    const std::string path = temp_path("malformed.jsonl");
    {
        TaskConfig cfg = default_task_config();
        write_dataset(make_dataset(cfg, 1, 2), path);
        std::ofstream app(path, std::ios::app);
        app << "{\"text\": [5], \"style_id\": 0, \"speaker_id\": 0, \"noise_flag\": false, "
               "\"frames\": [[1.0, 2.0], [3.0]]}\n";
    }
    CHECK_THROWS_WITH_AS(read_dataset(path), doctest::Contains("line 3"), ValidationError);
    std::remove(path.c_str());
}

TEST_CASE("hash manifest round trip and mismatch") {
    TaskConfig cfg = default_task_config();
    const std::string path = temp_path("manifest.jsonl");
    write_dataset(make_dataset(cfg, 7, 4), path);
    write_hash_manifest(path);
    verify_hash_manifest(path);
    {
        std::ofstream app(path, std::ios::app);
        app << "\n";
    }
    CHECK_THROWS_AS(verify_hash_manifest(path), IntegrityError);
    std::remove(path.c_str());
    std::remove((path + ".hash").c_str());
}

TEST_CASE("pinned content hash for the seed-7 fixture dataset") {
    TaskConfig cfg = default_task_config();
    const std::string path = temp_path("seed7_512.jsonl");
    write_dataset(make_dataset(cfg, 7, 512), path);
    const std::string actual = hash_hex(file_hash(path));
    std::remove(path.c_str());

    std::ifstream fixture(std::string(TPGST_SOURCE_DIR) + "/tests/fixtures/dataset_seed7_512.hash");
    REQUIRE(fixture.good());
    std::string expected;
    fixture >> expected;
    CHECK(actual == expected);
}
