#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "evanchor/grpo.hpp"
#include "evanchor/rng.hpp"
#include "oracles.hpp"

using namespace evanchor;

namespace {

Phantom small_sphere(std::uint64_t seed = 3) {
    PhantomSpec spec;
    spec.dims = {24, 24, 16};
    spec.center = {10.0, 13.0, 7.0};
    spec.radii = {4.0, 4.0, 4.0};
    spec.fg = 170;
    spec.bg = 60;
    spec.noise_sigma = 5.0;
    spec.seed = seed;
    return generate_phantom(spec);
}

RewardConfig cheap_reward() {
    RewardConfig cfg;
    cfg.weights.c = 0.0;  // skip propagation where the test doesn't need it
    return cfg;
}

// Synthetic group with chosen ratios and advantages, for gradient checks.
RolloutGroup synthetic_group(const ToyPolicy& policy, int query, std::mt19937_64& rng,
                             const std::vector<double>& rho_targets,
                             const std::vector<double>& advantages) {
    RolloutGroup g;
    g.query = query;
    g.advantages = advantages;
    for (double rho : rho_targets) {
        GrpoSample s;
        s.action = policy.sample(query, rng);
        const double lp = policy.logp(query, s.action);
        s.logp_old = lp - std::log(rho);  // makes the ratio exactly rho at theta
        s.logp_ref = lp + 0.3 * (uniform_unit(rng) - 0.5);
        g.samples.push_back(std::move(s));
    }
    return g;
}

double fd_relative_error(double a, double b) {
    return std::abs(a - b) / std::max(std::abs(a) + std::abs(b), 1e-6);
}

}  // namespace

TEST_CASE("advantages match the hand-computed standardization") {
    const std::vector<double> adv = normalize_advantages({1, 2, 3, 4}, 1e-6);
    // mean 2.5, population std sqrt(1.25)
    const std::vector<double> expected{-1.3416, -0.4472, 0.4472, 1.3416};
    for (int i = 0; i < 4; ++i) CHECK(adv[i] == doctest::Approx(expected[i]).epsilon(1e-4));

    const std::vector<double> pair = normalize_advantages({0, 1}, 1e-6);
    CHECK(pair[0] == doctest::Approx(-1.0).epsilon(1e-12));
    CHECK(pair[1] == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("constant rewards trigger the zero-advantage floor") {
    const std::vector<double> adv = normalize_advantages({2.5, 2.5, 2.5, 2.5}, 1e-6);
    for (double a : adv) CHECK(a == 0.0);
}

TEST_CASE("fewer than two rewards is an error") {
    CHECK_THROWS_AS(normalize_advantages({1.0}, 1e-6), std::invalid_argument);
}

TEST_CASE("advantage groups are standardized to mean 0 and std 1 within 1e-9") {
    std::mt19937_64 rng(8);
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<double> rewards;
        const std::size_t n = 2 + uniform_index(rng, 14);
        for (std::size_t i = 0; i < n; ++i) rewards.push_back(4.0 * uniform_unit(rng));
        const std::vector<double> adv = normalize_advantages(rewards, 1e-9);

        double mean = 0.0;
        for (double a : adv) mean += a;
        mean /= static_cast<double>(n);
        double var = 0.0;
        for (double a : adv) var += (a - mean) * (a - mean);
        const double std_dev = std::sqrt(var / static_cast<double>(n));
        if (std_dev == 0.0) continue;  // floor case
        CHECK(std::abs(mean) <= 1e-9);
        CHECK(std::abs(std_dev - 1.0) <= 1e-9);
    }
}

TEST_CASE("advantages are invariant to reward shift and positive scale") {
    std::mt19937_64 rng(9);
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<double> rewards;
        for (int i = 0; i < 6; ++i) rewards.push_back(uniform_unit(rng) * 3.0);
        const std::vector<double> base = normalize_advantages(rewards, 1e-12);

        const double shift = 10.0 * (uniform_unit(rng) - 0.5);
        const double scale = 0.1 + 5.0 * uniform_unit(rng);
        std::vector<double> transformed;
        for (double r : rewards) transformed.push_back(scale * (r + shift));
        const std::vector<double> moved = normalize_advantages(transformed, 1e-12);
        for (std::size_t i = 0; i < rewards.size(); ++i)
            CHECK(moved[i] == doctest::Approx(base[i]).epsilon(1e-9));
    }
}

TEST_CASE("kl estimator closed form and nonnegativity") {
    CHECK(kl_to_reference(-1.7, -1.7) == 0.0);
    const double delta = 0.1;
    CHECK(kl_to_reference(-2.0, -2.0 + delta) ==
          doctest::Approx(0.0051709).epsilon(1e-4));  // e^0.1 - 1.1

    std::mt19937_64 rng(10);
    for (int i = 0; i < 10000; ++i) {
        const double lp = -10.0 + 20.0 * uniform_unit(rng);
        const double lr = -10.0 + 20.0 * uniform_unit(rng);
        const double kl = kl_to_reference(lp, lr);
        CHECK(kl >= 0.0);
        if (lp == lr) CHECK(kl == 0.0);
    }
    CHECK_THROWS_AS(kl_to_reference(std::nan(""), 0.0), std::invalid_argument);
}

TEST_CASE("unit ratios with zero beta make the loss the negative advantage mean") {
    ToyPolicy policy(1, {24, 24, 16}, 1, 3.0);
    std::mt19937_64 rng(11);
    const std::vector<double> adv = normalize_advantages({0.5, 1.5, 2.5, 3.0}, 1e-9);
    const RolloutGroup g = synthetic_group(policy, 0, rng, {1.0, 1.0, 1.0, 1.0}, adv);
    GrpoConfig cfg;
    cfg.beta = 0.0;
    const LossGrad lg = surrogate_loss(policy, g, cfg);
    CHECK(lg.loss == doctest::Approx(0.0).epsilon(1e-12));  // advantages have mean zero
}

TEST_CASE("a clipped positive-advantage sample contributes zero gradient") {
    ToyPolicy policy(1, {24, 24, 16}, 1, 3.0);
    std::mt19937_64 rng(12);
    GrpoConfig cfg;
    cfg.beta = 0.0;
    cfg.epsilon_clip = 0.2;
    const RolloutGroup g = synthetic_group(policy, 0, rng, {1.4}, {1.0});  // rho = 1 + 2eps
    // Pad to two samples with a zero-advantage unit-ratio sample.
    RolloutGroup g2 = g;
    std::mt19937_64 rng2(13);
    const RolloutGroup filler = synthetic_group(policy, 0, rng2, {1.0}, {0.0});
    g2.samples.push_back(filler.samples[0]);
    g2.advantages.push_back(0.0);

    const LossGrad lg = surrogate_loss(policy, g2, cfg);
    for (double v : lg.grad) CHECK(v == 0.0);
    CHECK(lg.loss == doctest::Approx(-(1.2 * 1.0) / 2.0).epsilon(1e-12));
}

TEST_CASE("surrogate gradient matches central finite differences") {
    const Dims dims{16, 16, 6};
    std::mt19937_64 rng(14);
    GrpoConfig cfg;
    cfg.epsilon_clip = 0.2;
    const double h = 1e-5;

    // Ratio regimes checked separately: strictly inside the clip region,
    // strictly beyond it, and mixed. Ratios keep a guard band around the
    // clip boundary so the finite difference never straddles the kink.
    const auto draw_rho = [&](int regime) {
        switch (regime) {
            case 0: return 0.82 + 0.36 * uniform_unit(rng);              // interior
            case 1:
                return uniform_unit(rng) < 0.5 ? 0.5 + 0.29 * uniform_unit(rng)
                                               : 1.21 + 0.5 * uniform_unit(rng);  // clipped
            default: {
                double rho;
                do {
                    rho = 0.5 + 1.2 * uniform_unit(rng);
                } while (std::abs(rho - 0.8) < 2e-3 || std::abs(rho - 1.2) < 2e-3);
                return rho;
            }
        }
    };

    int checked = 0;
    for (int instance = 0; instance < 100; ++instance) {
        ToyPolicy policy(1, dims, 1, 2.0);
        // Randomize the policy so gradients are generic.
        for (double& p : policy.params) p += 0.3 * (uniform_unit(rng) - 0.5);

        cfg.beta = instance % 2 == 0 ? 0.0 : 0.05;
        const int regime = instance % 3;
        std::vector<double> rhos, advs;
        for (int i = 0; i < 4; ++i) {
            rhos.push_back(draw_rho(regime));
            double a;
            do {
                a = 4.0 * (uniform_unit(rng) - 0.5);
            } while (std::abs(a) < 0.05);
            advs.push_back(a);
        }
        const RolloutGroup group = synthetic_group(policy, 0, rng, rhos, advs);
        const LossGrad lg = surrogate_loss(policy, group, cfg);

        ToyPolicy probe = policy;
        for (std::size_t i = 0; i < policy.params.size(); ++i) {
            probe.params[i] = policy.params[i] + h;
            const double up = surrogate_loss(probe, group, cfg).loss;
            probe.params[i] = policy.params[i] - h;
            const double down = surrogate_loss(probe, group, cfg).loss;
            probe.params[i] = policy.params[i];
            const double fd = (up - down) / (2.0 * h);
            CHECK(fd_relative_error(lg.grad[i], fd) < 1e-4);
            ++checked;
        }
    }
    CHECK(checked == 100 * (6 + 6 * 8));
}

TEST_CASE("surrogate rejects non-finite inputs") {
    ToyPolicy policy(1, {16, 16, 6}, 1, 2.0);
    std::mt19937_64 rng(15);
    RolloutGroup g = synthetic_group(policy, 0, rng, {1.0, 1.0}, {0.5, -0.5});
    g.samples[0].logp_old = std::numeric_limits<double>::infinity();
    GrpoConfig cfg;
    CHECK_THROWS_AS(surrogate_loss(policy, g, cfg), std::invalid_argument);
}

TEST_CASE("a deterministic policy yields identical responses and zero advantages") {
    const Phantom ph = small_sphere();
    ToyPolicy policy(1, ph.vol.dims(), 1, 1.0);
    // One-hot slice distribution and essentially zero box variance.
    for (int t = 0; t < 16; ++t) policy.params[policy.logit_index(0, t)] = t == 7 ? 25.0 : -25.0;
    for (int i = 0; i < 4; ++i) policy.params[policy.log_scale_index(0, 7, 0, i)] = -20.0;

    std::mt19937_64 rng(16);
    const RolloutGroup g =
        rollout(policy, policy, 0, ph, cheap_reward(), 4, 1e-6, rng);
    for (const GrpoSample& s : g.samples) CHECK(s.text == g.samples[0].text);
    for (double a : g.advantages) CHECK(a == 0.0);
}

TEST_CASE("rollout is bit-identical for a fixed seed and always parses") {
    const Phantom ph = small_sphere();
    ToyPolicy policy(1, ph.vol.dims(), 1, 3.0);

    std::mt19937_64 rng_a(17), rng_b(17);
    const RolloutGroup a = rollout(policy, policy, 0, ph, cheap_reward(), 6, 1e-6, rng_a);
    const RolloutGroup b = rollout(policy, policy, 0, ph, cheap_reward(), 6, 1e-6, rng_b);
    REQUIRE(a.samples.size() == b.samples.size());
    for (std::size_t i = 0; i < a.samples.size(); ++i) {
        CHECK(a.samples[i].text == b.samples[i].text);
        CHECK(a.samples[i].logp_old == b.samples[i].logp_old);
        CHECK(a.samples[i].reward.r_total == b.samples[i].reward.r_total);
        CHECK(a.samples[i].reward.r_f == 1.0);  // decode keeps every sample schema-valid
    }
}

TEST_CASE("grpo update direction agrees with REINFORCE-with-baseline") {
    const Phantom ph = small_sphere();
    int agree = 0, total = 0;
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        ToyPolicy policy(1, ph.vol.dims(), 1, 3.0);
        std::mt19937_64 r1(derive_seed(seed, 1));
        for (double& p : policy.params) p += 0.2 * (uniform_unit(r1) - 0.5);

        std::mt19937_64 rng(derive_seed(seed, 2));
        const RolloutGroup g = rollout(policy, policy, 0, ph, cheap_reward(), 64, 1e-9, rng);

        GrpoConfig cfg;
        cfg.beta = 0.0;
        cfg.epsilon_clip = 1e9;  // effectively unclipped
        const LossGrad lg = surrogate_loss(policy, g, cfg);

        // REINFORCE with the group-mean baseline.
        std::vector<double> reinforce(policy.params.size(), 0.0);
        double mean_r = 0.0;
        for (const GrpoSample& s : g.samples) mean_r += s.reward.r_total;
        mean_r /= static_cast<double>(g.samples.size());
        for (const GrpoSample& s : g.samples)
            policy.accumulate_grad_logp(0, s.action,
                                        (s.reward.r_total - mean_r) /
                                            static_cast<double>(g.samples.size()),
                                        reinforce);

        for (std::size_t i = 0; i < reinforce.size(); ++i) {
            const double ascent = -lg.grad[i];
            if (std::abs(ascent) < 1e-12 || std::abs(reinforce[i]) < 1e-12) continue;
            ++total;
            if ((ascent > 0) == (reinforce[i] > 0)) ++agree;
        }
    }
    REQUIRE(total > 1000);
    CHECK(static_cast<double>(agree) / static_cast<double>(total) >= 0.95);
}

TEST_CASE("zero training steps leave the cold-start parameters unchanged") {
    const std::vector<Phantom> corpus{small_sphere(1), small_sphere(2)};
    TrainConfig cfg;
    cfg.grpo.steps = 0;
    cfg.grpo.seed = 5;
    cfg.sft_steps = 60;
    cfg.reward.weights.c = 0.0;
    const TrainResult a = train(cfg, corpus);
    const TrainResult b = train(cfg, corpus);
    CHECK(a.policy.params == b.policy.params);
    CHECK(a.log.empty());

    // And the cold start actually moved the parameters.
    const ToyPolicy init(2, corpus[0].vol.dims(), 1, cfg.sigma_init);
    CHECK(a.policy.params != init.params);
}

TEST_CASE("cold start alone fits the modal slice to the derived target") {
    const Phantom ph = small_sphere(9);
    TrainConfig cfg;
    cfg.grpo.steps = 0;
    cfg.grpo.seed = 77;
    cfg.topk = {1, 0};
    cfg.sft_steps = 500;
    cfg.sft_lr = 0.1;
    cfg.reward.weights.c = 0.0;
    const TrainResult r = train(cfg, {ph});
    const EvidenceAnchor target = derive_target(ph.mask, {1, 0});
    CHECK(r.policy.modal_slice(0) == target.key_slice);
}

TEST_CASE("training runs deterministically and logs every step") {
    const std::vector<Phantom> corpus{small_sphere(1), small_sphere(2)};
    TrainConfig cfg;
    cfg.grpo.steps = 12;
    cfg.grpo.group_size = 3;
    cfg.grpo.seed = 13;
    cfg.sft_steps = 40;
    cfg.reward.weights.c = 0.0;

    const TrainResult a = train(cfg, corpus);
    const TrainResult b = train(cfg, corpus);
    REQUIRE(a.log.size() == 12);
    CHECK(a.policy.params == b.policy.params);
    for (int i = 0; i < 12; ++i) {
        CHECK(a.log[i].step == i);
        CHECK(a.log[i].query == i % 2);
        CHECK(a.log[i].mean_total == b.log[i].mean_total);
        CHECK(std::isfinite(a.log[i].loss));
    }
}

TEST_CASE("config invariants are enforced") {
    const std::vector<Phantom> corpus{small_sphere()};
    TrainConfig cfg;
    cfg.reward.weights.c = 0.0;
    SUBCASE("group size") {
        cfg.grpo.group_size = 1;
        CHECK_THROWS_AS(train(cfg, corpus), std::invalid_argument);
    }
    SUBCASE("clip range") {
        cfg.grpo.epsilon_clip = 1.5;
        CHECK_THROWS_AS(train(cfg, corpus), std::invalid_argument);
    }
    SUBCASE("beta") {
        cfg.grpo.beta = -0.1;
        CHECK_THROWS_AS(train(cfg, corpus), std::invalid_argument);
    }
    SUBCASE("empty corpus") { CHECK_THROWS_AS(train(cfg, {}), std::invalid_argument); }
}

TEST_CASE("policy save/load round-trips bit-exactly") {
    ToyPolicy policy(3, {24, 24, 16}, 2, 1.7);
    std::mt19937_64 rng(18);
    for (double& p : policy.params) p += uniform_unit(rng) - 0.5;

    const auto path = std::filesystem::temp_directory_path() / "evanchor-policy-test.evtp";
    save_policy(policy, path);
    const ToyPolicy loaded = load_policy(path);
    CHECK(loaded.params == policy.params);
    CHECK(loaded.num_queries() == 3);
    CHECK(loaded.boxes_per_anchor() == 2);
    CHECK(loaded.dims() == Dims{24, 24, 16});
}
