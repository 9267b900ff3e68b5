// SPDX-License-Identifier: Apache-2.0

#include "fedforget/errors.hpp"
#include "fedforget/unlearning.hpp"
#include "helpers.hpp"

#include <doctest.h>

#include <cmath>

using namespace fedforget;
using namespace fedforget::testing;

namespace {

constexpr std::size_t kV = 8;

// Uniform over tokens 0..3; the other columns carry no probability mass.
BaseWeights four_live_base() {
    Matrix w = Matrix::Zero(kV, kV);
    w.rightCols(4).setConstant(-1e9);
    return BaseWeights(w);
}

QaPair qa(TokenSeq q, TokenSeq a) {
    QaPair p;
    p.question = std::move(q);
    p.answer = std::move(a);
    return p;
}

AdapterParams zero_adapter(std::size_t rank = 1) {
    return AdapterParams::zeros(AdapterGeometry{kV, rank, static_cast<double>(rank), true});
}

UnlearnConfig config_for(UnlearnMethod m, Rng& rng) {
    UnlearnConfig cfg;
    cfg.method = m;
    cfg.gamma = rng.uniform(0.5, 2.0);
    cfg.alpha_retain = rng.uniform(0.0, 2.0);
    cfg.beta = rng.uniform(0.05, 2.0);
    cfg.delta = rng.uniform(-1.0, 1.0);
    return cfg;
}

}  // namespace

TEST_SUITE("unlearning") {

TEST_CASE("gradient ascent examples") {
    const auto base = four_live_base();
    const auto adapter = zero_adapter();
    const std::vector<QaPair> forget{qa({3}, {2}), qa({1}, {0})};
    CHECK(grad_ascent_loss(base, adapter, forget) == doctest::Approx(-std::log(4.0)).epsilon(1e-15));
    CHECK(grad_ascent_loss(base, adapter, forget, 2.0) == 2.0 * grad_ascent_loss(base, adapter, forget, 1.0));

    Rng rng(1);
    const auto rb = random_base(rng, kV);
    const auto ra = random_adapter(rng, kV, 2);
    const auto batch = random_batch(rng, kV, 4);
    CHECK(std::abs(grad_ascent_loss(rb, ra, batch, 1.7) + 1.7 * nll_loss(rb, ra, batch)) < 1e-15);
    CHECK_THROWS_AS(grad_ascent_loss(rb, ra, std::vector<QaPair>{}), ArgumentError);
}

TEST_CASE("gradient difference examples") {
    Rng rng(2);
    const auto base = random_base(rng, kV);
    const auto adapter = random_adapter(rng, kV, 2);
    const auto forget = random_batch(rng, kV, 3);
    const auto retain = random_batch(rng, kV, 4);
    CHECK(grad_diff_loss(base, adapter, forget, retain, 1.3, 0.0) == grad_ascent_loss(base, adapter, forget, 1.3));
    CHECK(grad_diff_loss(base, adapter, forget, retain, 0.0, 0.7) == doctest::Approx(0.7 * nll_loss(base, adapter, retain)).epsilon(1e-15));

    const auto uniform = four_live_base();
    const std::vector<QaPair> f1{qa({3}, {1})}, r1{qa({2}, {0})};
    CHECK(std::abs(grad_diff_loss(uniform, zero_adapter(), f1, r1)) < 1e-15);
    CHECK_THROWS_AS(grad_diff_loss(base, adapter, forget, std::vector<QaPair>{}), ArgumentError);
}

TEST_CASE("NPO at the reference point") {
    Rng rng(3);
    for (int trial = 0; trial < 20; ++trial) {
        const auto base = random_base(rng, kV);
        const auto adapter = random_adapter(rng, kV, 2);
        const double beta = rng.uniform(0.05, 1.0);
        const auto forget = random_batch(rng, kV, 3);
        CHECK(npo_loss(base, adapter, {adapter}, forget, {}, beta, 0.0) ==
              doctest::Approx(2.0 / beta * std::log(2.0)).epsilon(1e-14));
    }
    const auto base = four_live_base();
    CHECK(npo_loss(base, zero_adapter(), {zero_adapter()}, std::vector{qa({3}, {1})}, {}, 0.1, 0.0) ==
          doctest::Approx(13.862943611198906).epsilon(1e-14));
}

TEST_CASE("NPO two-token case with log-ratio -1") {
    // Each answer transition loses half a nat against the uniform reference.
    const auto base = four_live_base();
    const double c = std::exp(-0.5) / 4.0;
    const double x = std::log(3.0 * c / (1.0 - c));
    auto adapter = AdapterParams::zeros(AdapterGeometry{kV, 2, 2.0, true});
    adapter.a(3, 0) = 1.0;
    adapter.b(0, 0) = x;
    adapter.a(0, 1) = 1.0;
    adapter.b(1, 1) = x;
    const auto target = AdapterParams::zeros(adapter.geometry());
    const std::vector<QaPair> forget{qa({3}, {0, 1})};
    const double ratio = sequence_log_prob(base, adapter, {3}, {0, 1}) - sequence_log_prob(base, target, {3}, {0, 1});
    REQUIRE(ratio == doctest::Approx(-1.0).epsilon(1e-12));
    CHECK(npo_loss(base, adapter, {target}, forget, {}, 0.1, 0.0) == doctest::Approx(12.887933201471418).epsilon(1e-11));
}

TEST_CASE("NPO forget term falls as the forget answer loses probability") {
    const auto base = four_live_base();
    const auto target = zero_adapter();
    const std::vector<QaPair> forget{qa({3}, {2})};
    double prev = npo_loss(base, target, {target}, forget, {}, 0.1, 0.0);
    for (double push = 1.0; push <= 40.0; push += 1.0) {
        auto adapter = zero_adapter();
        adapter.a(3, 0) = 1.0;
        adapter.b(0, 2) = -push;
        const double now = npo_loss(base, adapter, {target}, forget, {}, 0.1, 0.0);
        CHECK(now < prev);
        prev = now;
    }
    CHECK(prev < 2.0);
}

TEST_CASE("SimNPO on a uniform model") {
    const auto base = four_live_base();
    for (std::size_t len = 1; len <= 5; ++len) {
        const std::vector<QaPair> forget{qa({3}, TokenSeq(len, 1))};
        CHECK(simnpo_loss(base, zero_adapter(), forget, {}, 0.1, 0.0, 0.0) ==
              doctest::Approx(12.524656128173921).epsilon(1e-13));
    }
}

TEST_CASE("SimNPO margin raises the forget term") {
    Rng rng(4);
    const auto base = random_base(rng, kV);
    const auto adapter = random_adapter(rng, kV, 2);
    const auto forget = random_batch(rng, kV, 3);
    double prev = simnpo_loss(base, adapter, forget, {}, 0.3, -2.0, 0.0);
    for (double delta = -1.5; delta <= 3.0; delta += 0.5) {
        const double now = simnpo_loss(base, adapter, forget, {}, 0.3, delta, 0.0);
        CHECK(now > prev);
        prev = now;
    }
}

TEST_CASE("SimNPO is invariant to padding with equally likely tokens") {
    // A cycle 1 -> 2 -> 1 with the same per-token probability on every step.
    Matrix w = Matrix::Zero(kV, kV);
    w(3, 1) = 2.0;
    w(1, 2) = 2.0;
    w(2, 1) = 2.0;
    const BaseWeights base(w);
    const auto adapter = zero_adapter();
    const double short_loss = simnpo_loss(base, adapter, std::vector{qa({3}, {1, 2})}, {}, 0.4, 0.2, 0.0);
    const double long_loss = simnpo_loss(base, adapter, std::vector{qa({3}, {1, 2, 1, 2, 1, 2})}, {}, 0.4, 0.2, 0.0);
    CHECK(long_loss == doctest::Approx(short_loss).epsilon(1e-13));
}

TEST_CASE("loss-only functions agree with the objective") {
    Rng rng(5);
    for (int trial = 0; trial < 20; ++trial) {
        const auto base = random_base(rng, kV);
        const auto adapter = random_adapter(rng, kV, 2);
        const auto target = random_adapter(rng, kV, 2);
        const auto forget = random_batch(rng, kV, 3);
        const auto retain = random_batch(rng, kV, 3);
        for (auto m : kAllUnlearnMethods) {
            const auto cfg = config_for(m, rng);
            const double obj = unlearning_objective(base, adapter, cfg, {target}, forget, retain).loss;
            double ref = 0.0;
            switch (m) {
                case UnlearnMethod::GradAscent: ref = grad_ascent_loss(base, adapter, forget, cfg.gamma); break;
                case UnlearnMethod::GradDiff:
                    ref = grad_diff_loss(base, adapter, forget, retain, cfg.gamma, cfg.alpha_retain);
                    break;
                case UnlearnMethod::NPO:
                    ref = npo_loss(base, adapter, {target}, forget, retain, cfg.beta, cfg.alpha_retain);
                    break;
                case UnlearnMethod::SimNPO:
                    ref = simnpo_loss(base, adapter, forget, retain, cfg.beta, cfg.delta, cfg.alpha_retain);
                    break;
            }
            CHECK(obj == doctest::Approx(ref).epsilon(1e-12));
        }
    }
}

TEST_CASE("analytic gradients match central differences for every method") {
    Rng rng(6);
    for (auto m : kAllUnlearnMethods) {
        double worst = 0.0;
        for (int trial = 0; trial < 200; ++trial) {
            const auto base = random_base(rng, kV);
            const auto adapter = random_adapter(rng, kV, 1 + rng.below(3));
            auto target = adapter;
            target.a += random_matrix(rng, target.a.rows(), target.a.cols(), 0.3);
            const auto forget = random_batch(rng, kV, 1 + rng.below(3));
            const auto retain = random_batch(rng, kV, 1 + rng.below(3));
            const auto cfg = config_for(m, rng);
            const auto geom = adapter.geometry();
            const auto f = [&](const FlatParams& x) {
                return unlearning_objective(base, AdapterParams::from_flat(geom, x), cfg, {target}, forget, retain).loss;
            };
            const FlatParams analytic = unlearning_objective(base, adapter, cfg, {target}, forget, retain).grad.flatten();
            worst = std::max(worst, max_relative_error(analytic, central_difference(f, adapter.flatten())));
        }
        INFO(to_string(m));
        CHECK(worst < 1e-6);
    }
}

TEST_CASE("NPO gradient at the snapshot is the unit-weight ascent direction") {
    Rng rng(7);
    for (int trial = 0; trial < 20; ++trial) {
        const auto base = random_base(rng, kV);
        const auto adapter = random_adapter(rng, kV, 2);
        const auto forget = random_batch(rng, kV, 3);
        UnlearnConfig npo;
        npo.method = UnlearnMethod::NPO;
        npo.alpha_retain = 0.0;
        npo.beta = rng.uniform(0.05, 1.0);
        UnlearnConfig ga;
        ga.method = UnlearnMethod::GradAscent;
        const FlatParams g_npo = unlearning_objective(base, adapter, npo, {adapter}, forget, {}).grad.flatten();
        const FlatParams g_ga = unlearning_objective(base, adapter, ga, {adapter}, forget, {}).grad.flatten();
        CHECK((g_npo - g_ga).cwiseAbs().maxCoeff() < 1e-12);
        const auto geom = adapter.geometry();
        const auto f = [&](const FlatParams& x) {
            return unlearning_objective(base, AdapterParams::from_flat(geom, x), npo, {adapter}, forget, {}).loss;
        };
        CHECK(max_relative_error(g_npo, central_difference(f, adapter.flatten())) < 1e-6);
    }
}

TEST_CASE("zero learning rate leaves the adapter unchanged") {
    Rng rng(8);
    const auto base = random_base(rng, kV);
    const auto adapter = random_adapter(rng, kV, 2);
    const auto forget = random_batch(rng, kV, 3);
    const auto retain = random_batch(rng, kV, 5);
    for (auto m : kAllUnlearnMethods) {
        UnlearnConfig cfg;
        cfg.method = m;
        cfg.learning_rate = 0.0;
        cfg.steps = 7;
        CHECK(run_unlearning(base, adapter.geometry(), adapter.flatten(), cfg, forget, retain) == adapter.flatten());
    }
}

TEST_CASE("gradient ascent raises a memorized fact's loss step by step") {
    Matrix w = Matrix::Zero(kV, kV);
    w(3, 5) = 8.0;
    w(5, 6) = 8.0;
    const BaseWeights base(w);
    const auto geom = AdapterGeometry{kV, 2, 4.0, true};
    Rng rng(9);
    auto adapter = AdapterParams::zeros(geom);
    adapter.a = random_matrix(rng, kV, 2, 0.01);
    const std::vector<QaPair> forget{qa({3}, {5, 6})};
    UnlearnConfig cfg;
    cfg.method = UnlearnMethod::GradAscent;
    cfg.learning_rate = 0.05;
    cfg.steps = 1;
    FlatParams x = adapter.flatten();
    double prev = nll_loss(base, adapter, forget);
    for (int step = 0; step < 30; ++step) {
        x = run_unlearning(base, geom, x, cfg, forget, {});
        const double now = nll_loss(base, AdapterParams::from_flat(geom, x), forget);
        CHECK(now > prev);
        prev = now;
    }
}

TEST_CASE("one small NPO step lowers the forget term") {
    Rng rng(10);
    for (int trial = 0; trial < 20; ++trial) {
        const auto base = random_base(rng, kV);
        const auto adapter = random_adapter(rng, kV, 2);
        const auto forget = random_batch(rng, kV, 4);
        UnlearnConfig cfg;
        cfg.method = UnlearnMethod::NPO;
        cfg.alpha_retain = 0.0;
        cfg.learning_rate = 1e-3;
        cfg.steps = 1;
        cfg.batch_size = 4;
        const auto geom = adapter.geometry();
        const FlatParams next = run_unlearning(base, geom, adapter.flatten(), cfg, forget, {});
        const double before = npo_loss(base, adapter, {adapter}, forget, {}, cfg.beta, 0.0);
        const double after = npo_loss(base, AdapterParams::from_flat(geom, next), {adapter}, forget, {}, cfg.beta, 0.0);
        CHECK(after < before);
    }
}

TEST_CASE("run_unlearning reads only its arguments") {
    Rng rng(11);
    const auto base = random_base(rng, kV);
    const auto adapter = random_adapter(rng, kV, 2);
    const auto forget = random_batch(rng, kV, 5);
    const auto retain = random_batch(rng, kV, 6);
    UnlearnConfig cfg;
    cfg.method = UnlearnMethod::GradAscent;
    cfg.rng_seed = 4;
    const FlatParams ga = run_unlearning(base, adapter.geometry(), adapter.flatten(), cfg, forget, retain);
    // GradAscent has no retain term, so the retain content cannot matter.
    CHECK(run_unlearning(base, adapter.geometry(), adapter.flatten(), cfg, forget, random_batch(rng, kV, 2)) == ga);
    for (auto m : kAllUnlearnMethods) {
        cfg.method = m;
        const FlatParams a = run_unlearning(base, adapter.geometry(), adapter.flatten(), cfg, forget, retain);
        const FlatParams b = run_unlearning(base, adapter.geometry(), adapter.flatten(), cfg, forget, retain);
        CHECK(a == b);
    }
}

TEST_CASE("step count and configuration errors") {
    UnlearnConfig cfg;
    cfg.batch_size = 4;
    cfg.epochs = 3;
    CHECK(cfg.effective_steps(9) == 9);
    cfg.steps = 2;
    CHECK(cfg.effective_steps(9) == 2);

    Rng rng(12);
    const auto base = random_base(rng, kV);
    const auto adapter = random_adapter(rng, kV, 2);
    const auto forget = random_batch(rng, kV, 2);
    cfg = UnlearnConfig{};
    CHECK_THROWS_AS(run_unlearning(base, adapter.geometry(), adapter.flatten(), cfg, {}, forget), ArgumentError);
    CHECK_THROWS_AS(run_unlearning(base, adapter.geometry(), adapter.flatten(), cfg, forget, {}), ArgumentError);
    cfg.alpha_retain = 0.0;
    CHECK_NOTHROW(run_unlearning(base, adapter.geometry(), adapter.flatten(), cfg, forget, {}));
    cfg.method = UnlearnMethod::NPO;
    cfg.beta = 0.0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    CHECK_THROWS_AS(npo_loss(base, adapter, {adapter}, forget, {}, 0.0, 0.0), ArgumentError);
    CHECK_THROWS_AS(simnpo_loss(base, adapter, forget, {}, -1.0, 0.0, 0.0), ArgumentError);
    for (auto m : kAllUnlearnMethods) CHECK(parse_unlearn_method(to_string(m)) == m);
    CHECK_THROWS_AS(parse_unlearn_method("RMU"), ArgumentError);
}

TEST_CASE("log_sigmoid is stable in both tails") {
    CHECK(log_sigmoid(0.0) == doctest::Approx(-std::log(2.0)).epsilon(1e-15));
    CHECK(log_sigmoid(800.0) == 0.0);
    CHECK(log_sigmoid(-800.0) == doctest::Approx(-800.0).epsilon(1e-15));
    CHECK(std::isfinite(log_sigmoid(-1e6)));
}

}  // TEST_SUITE
