#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>

#include "doctest.h"
#include "tpgst/errors.hpp"
#include "tpgst/style.hpp"

using namespace tpgst;

namespace {

StyleTokenBank make_bank(ParamSet& ps, int tokens, int heads, int d_emb, int d_attn, int d_ref,
                         std::uint64_t seed) {
    Prng prng(seed);
    return StyleTokenBank::create(ps, tokens, heads, d_emb, d_attn, d_ref, prng);
}

std::vector<double> random_vec(std::size_t n, std::uint64_t seed) {
    Prng prng(seed);
    std::vector<double> v(n);
    for (double& x : v) x = prng.uniform(-1.0, 1.0);
    return v;
}

}  // namespace

TEST_CASE("single token forces weight 1") {
    ParamSet ps;
    StyleTokenBank bank = make_bank(ps, 1, 2, 8, 4, 6, 1);
    Graph g;
    Tensor prosody = g.constant({6}, random_vec(6, 2));
    StyleAttentionOut out = style_attention(g, prosody, bank);
    CHECK(out.weights.values() == std::vector<double>{1.0, 1.0});
}

TEST_CASE("identical tokens split weight evenly") {
    ParamSet ps;
    StyleTokenBank bank = make_bank(ps, 2, 2, 8, 4, 6, 3);
    // make both token rows identical; keys and values then coincide
    for (int i = 0; i < bank.d_tok; ++i) {
        bank.tokens->value[static_cast<std::size_t>(bank.d_tok + i)] =
            bank.tokens->value[static_cast<std::size_t>(i)];
    }
    Graph g;
    StyleAttentionOut out = style_attention(g, g.constant({6}, random_vec(6, 4)), bank);
    for (double w : out.weights.values()) CHECK(w == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("embedding equals the definition formula") {
    ParamSet ps;
    StyleTokenBank bank = make_bank(ps, 4, 2, 8, 4, 6, 5);
    Graph g;
    Tensor prosody = g.constant({6}, random_vec(6, 6));
    StyleAttentionOut out = style_attention(g, prosody, bank);

    // independent recomputation: concat_j sum_i w[j,i] * V_j(tanh(token_i))
    const std::vector<double>& w = out.weights.values();
    const int n = bank.num_tokens, dt = bank.d_tok, de = bank.d_emb / bank.num_heads;
    std::vector<double> expect;
    for (int j = 0; j < bank.num_heads; ++j) {
        const Parameter& vp = *bank.heads[static_cast<std::size_t>(j)].value_proj;  // dt x de
        std::vector<double> head(static_cast<std::size_t>(de), 0.0);
        for (int i = 0; i < n; ++i) {
            for (int a = 0; a < dt; ++a) {
                const double tv =
                    std::tanh(bank.tokens->value[static_cast<std::size_t>(i * dt + a)]);
                for (int b = 0; b < de; ++b) {
                    head[static_cast<std::size_t>(b)] += w[static_cast<std::size_t>(j * n + i)] *
                                                         tv *
                                                         vp.value[static_cast<std::size_t>(a * de + b)];
                }
            }
        }
        expect.insert(expect.end(), head.begin(), head.end());
    }
    REQUIRE(out.embedding.size() == expect.size());
    for (std::size_t i = 0; i < expect.size(); ++i) {
        CHECK(std::abs(out.embedding.values()[i] - expect[i]) < 1e-12);
    }
}

TEST_CASE("combination weights are convex for wild inputs") {
    ParamSet ps;
    StyleTokenBank bank = make_bank(ps, 6, 3, 12, 4, 5, 7);
    Prng prng(8);
    for (int it = 0; it < 500; ++it) {
        Graph g;
        std::vector<double> p(5);
        for (double& v : p) v = prng.uniform(-60.0, 60.0);
        const std::vector<double>& w = style_attention(g, g.constant({5}, p), bank).weights.values();
        for (int j = 0; j < 3; ++j) {
            double s = 0.0;
            for (int i = 0; i < 6; ++i) {
                CHECK(w[static_cast<std::size_t>(j * 6 + i)] >= 0.0);
                s += w[static_cast<std::size_t>(j * 6 + i)];
            }
            CHECK(std::abs(s - 1.0) <= 1e-6);
        }
    }
}

TEST_CASE("combine_tokens reproduces style_attention bitwise") {
    ParamSet ps;
    StyleTokenBank bank = make_bank(ps, 4, 2, 8, 4, 6, 9);
    Graph g;
    StyleAttentionOut out = style_attention(g, g.constant({6}, random_vec(6, 10)), bank);
    Tensor redone = combine_tokens(g, out.weights, bank);
    CHECK(redone.values() == out.embedding.values());
}

TEST_CASE("combine_tokens on one-hot and uniform weights") {
    ParamSet ps;
    StyleTokenBank bank = make_bank(ps, 2, 2, 8, 4, 6, 11);
    Graph g;
    Tensor w0 = g.constant({2, 2}, {1, 0, 1, 0});
    Tensor w1 = g.constant({2, 2}, {0, 1, 0, 1});
    Tensor wu = g.constant({2, 2}, {0.5, 0.5, 0.5, 0.5});
    const std::vector<double>& e0 = combine_tokens(g, w0, bank).values();
    const std::vector<double>& e1 = combine_tokens(g, w1, bank).values();
    const std::vector<double>& eu = combine_tokens(g, wu, bank).values();
    for (std::size_t i = 0; i < e0.size(); ++i) {
        CHECK(eu[i] == doctest::Approx(0.5 * (e0[i] + e1[i])).epsilon(1e-12));
    }

    // one-hot row selects exactly the value-projected tanh'd token
    CHECK(e0 == condition_on_token(g, 0, 1.0, bank).values());

    Tensor bad = g.constant({2, 2}, {0.7, 0.7, 0.5, 0.5});
    CHECK_THROWS_AS(combine_tokens(g, bad, bank), ValidationError);
    Tensor neg = g.constant({2, 2}, {1.5, -0.5, 0.5, 0.5});
    CHECK_THROWS_AS(combine_tokens(g, neg, bank), ValidationError);
}

TEST_CASE("condition_on_token scaling") {
    ParamSet ps;
    StyleTokenBank bank = make_bank(ps, 4, 2, 8, 4, 6, 12);
    Graph g;
    const std::vector<double>& e1 = condition_on_token(g, 2, 1.0, bank).values();
    const std::vector<double>& e0 = condition_on_token(g, 2, 0.0, bank).values();
    const std::vector<double>& e2 = condition_on_token(g, 2, 2.0, bank).values();
    for (std::size_t i = 0; i < e1.size(); ++i) {
        CHECK(e0[i] == 0.0);
        CHECK(e2[i] == 2.0 * e1[i]);
    }
    CHECK_THROWS_AS(condition_on_token(g, 4, 1.0, bank), ValidationError);
}

TEST_CASE("style attention gradients match finite differences") {
    ParamSet ps;
    StyleTokenBank bank = make_bank(ps, 4, 2, 8, 4, 6, 13);
    const std::vector<double> pv = random_vec(6, 14);

    auto eval = [&] {
        Graph g;
        StyleAttentionOut out = style_attention(g, g.constant({6}, pv), bank);
        return add(sum(mul(out.embedding, out.embedding)), sum(mul(out.weights, out.weights)))
            .scalar();
    };
    ps.zero_grads();
    {
        Graph g;
        StyleAttentionOut out = style_attention(g, g.constant({6}, pv), bank);
        g.backward(
            add(sum(mul(out.embedding, out.embedding)), sum(mul(out.weights, out.weights))));
    }
    const double eps = 1e-5;
    for (Parameter* p : {bank.tokens, bank.heads[0].query_proj, bank.heads[0].key_proj,
                         bank.heads[0].score, bank.heads[1].value_proj}) {
        double worst = 0.0;
        for (std::size_t c = 0; c < p->size(); ++c) {
            const double orig = p->value[c];
            p->value[c] = orig + eps;
            const double fp = eval();
            p->value[c] = orig - eps;
            const double fm = eval();
            p->value[c] = orig;
            const double fd = (fp - fm) / (2 * eps);
            worst = std::max(worst, std::abs(p->grad[c] - fd) /
                                        std::max({1.0, std::abs(p->grad[c]), std::abs(fd)}));
        }
        CHECK(worst < 1e-4);
    }

    // prosody gradient through the attention
    const double perr = finite_difference_check(
        [&](Graph& g, Tensor prosody) {
            StyleAttentionOut out = style_attention(g, prosody, bank);
            return sum(mul(out.embedding, out.embedding));
        },
        {6}, pv);
    CHECK(perr < 1e-4);
}

TEST_CASE("weights move when the bank moves") {
    ParamSet ps;
    StyleTokenBank bank = make_bank(ps, 4, 2, 8, 4, 6, 15);
    const std::vector<double> pv = random_vec(6, 16);
    auto weights_now = [&] {
        Graph g;
        return style_attention(g, g.constant({6}, pv), bank).weights.values();
    };
    const std::vector<double> before = weights_now();
    bank.tokens->value[0] += 0.25;  // a parameter update moves the target
    CHECK(weights_now() != before);
}

TEST_CASE("paper-scale bank shapes load and run") {
    {
        ParamSet ps;
        StyleTokenBank bank = make_bank(ps, 20, 4, 32, 16, 12, 17);
        Graph g;
        StyleAttentionOut out = style_attention(g, g.constant({12}, random_vec(12, 18)), bank);
        CHECK(out.weights.shape() == Shape{4, 20});
        CHECK(out.embedding.shape() == Shape{32});
    }
    {
        ParamSet ps;
        StyleTokenBank bank = make_bank(ps, 40, 6, 252, 16, 12, 19);
        CHECK(bank.d_tok == 42);
        Graph g;
        StyleAttentionOut out = style_attention(g, g.constant({12}, random_vec(12, 20)), bank);
        CHECK(out.weights.shape() == Shape{6, 40});
        CHECK(out.embedding.shape() == Shape{252});
    }
    ParamSet ps;
    CHECK_THROWS_AS(make_bank(ps, 8, 3, 32, 16, 12, 21), ValidationError);
}
