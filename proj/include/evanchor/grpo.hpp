#pragma once

// Group Relative Policy Optimization over a toy differentiable
// evidence-anchor policy.
//
// The policy is tabular per query: a length-D slice logit vector plus, for
// every (query, slice), Gaussian box heads parameterized by center/size
// means and log-scales. One response = one action (slice index + raw box
// vector); decode rounds and clamps the raw vector to a valid in-bounds
// box, so every rendered response is schema-valid by construction.
//
// Rewards are standardized within each sampled group (population std, with
// an all-zero fallback when the std falls at or below the floor) and the
// policy is updated on the clipped surrogate with a per-sample KL penalty
// to a frozen reference, estimated by exp(d) - d - 1 for
// d = logp_ref - logp_theta.

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "evanchor/phantom.hpp"
#include "evanchor/reward.hpp"
#include "evanchor/targets.hpp"
#include "evanchor/volume.hpp"

namespace evanchor {

struct GrpoConfig {
    int group_size = 4;
    double epsilon_clip = 0.2;
    double beta = 0.01;
    double learning_rate = 0.3;  // plain SGD step size for the policy update
    int steps = 2000;
    double adv_std_floor = 1e-6;
    std::uint64_t seed = 0;
};

// Group standardization: (r - mean) / population std, all zeros when the
// std is at or below the floor. Requires at least two rewards.
std::vector<double> normalize_advantages(const std::vector<double>& rewards, double std_floor);

// Per-sample KL estimator exp(d) - d - 1, d = logp_ref - logp_theta.
// Nonnegative, zero iff the log-probs coincide.
double kl_to_reference(double logp_theta, double logp_ref);

struct Action {
    int slice = 0;
    std::vector<double> u;  // 4 values per box slot: cx, cy, w, h
};

class ToyPolicy {
public:
    ToyPolicy(int num_queries, Dims dims, int boxes_per_anchor, double sigma_init);

    int num_queries() const { return num_queries_; }
    const Dims& dims() const { return dims_; }
    int boxes_per_anchor() const { return boxes_; }

    std::vector<double> params;  // [Q*D logits][Q*D*B*4 means][Q*D*B*4 log-scales]

    std::size_t logit_index(int q, int t) const;
    std::size_t mean_index(int q, int t, int b, int i) const;
    std::size_t log_scale_index(int q, int t, int b, int i) const;

    std::vector<double> slice_probs(int q) const;
    int modal_slice(int q) const;

    Action sample(int q, std::mt19937_64& rng) const;
    Action greedy(int q) const;

    double logp(int q, const Action& a) const;
    // grad += coeff * d logp / d params (sparse in q and a.slice).
    void accumulate_grad_logp(int q, const Action& a, double coeff,
                              std::vector<double>& grad) const;

    std::vector<Box2D> decode_boxes(const Action& a) const;

    // Keeps every parameter in a sane finite range after an update.
    void clamp_params();

private:
    int num_queries_;
    Dims dims_;
    int boxes_;
};

Box2D decode_box(double cx, double cy, double w, double h, int slice_w, int slice_h);

struct GrpoSample {
    Action action;
    std::string text;
    RewardBreakdown reward;
    double logp_old = 0.0;
    double logp_ref = 0.0;
};

struct RolloutGroup {
    int query = 0;
    std::vector<GrpoSample> samples;
    std::vector<double> advantages;
};

RolloutGroup rollout(const ToyPolicy& policy, const ToyPolicy& reference, int query,
                     const Phantom& phantom, const RewardConfig& reward_cfg, int group_size,
                     double adv_std_floor, std::mt19937_64& rng);

struct LossGrad {
    double loss = 0.0;
    std::vector<double> grad;
    double mean_kl = 0.0;
};

// Clipped surrogate with KL penalty and its analytic gradient. epsilon_clip
// only needs to be positive here; the training entry point restricts it to
// (0, 1).
LossGrad surrogate_loss(const ToyPolicy& policy, const RolloutGroup& group,
                        const GrpoConfig& cfg);

struct AdamState {
    std::vector<double> m;
    std::vector<double> v;
    long long t = 0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

void adam_step(std::vector<double>& params, const std::vector<double>& grad, AdamState& state,
               double lr);

struct TrainConfig {
    GrpoConfig grpo;
    TopKConfig topk{3, 0};
    RewardConfig reward;
    bool sft = true;        // cold start before RL
    int sft_steps = 400;
    double sft_lr = 0.05;
    int sft_draws = 4;      // target draws per phantom
    int boxes_per_anchor = 1;
    double sigma_init = 3.0;
};

struct StepRecord {
    int step = 0;
    int query = 0;
    double mean_total = 0.0;
    double mean_rf = 0.0;
    double mean_ra = 0.0;
    double mean_rs = 0.0;
    double mean_rc = 0.0;
    double mean_kl = 0.0;
    double loss = 0.0;
};

struct EvalRecord {
    int query = 0;
    int modal_slice = 0;
    bool modal_is_argmax = false;
    RewardBreakdown breakdown;
    double whole_dsc = 0.0;
};

struct EvalSummary {
    double mean_total = 0.0;
    double mean_rf = 0.0;
    double mean_ra = 0.0;
    double mean_rs = 0.0;
    double mean_rc = 0.0;
    double frac_modal_argmax = 0.0;
    double mean_whole_dsc = 0.0;
    std::vector<EvalRecord> per_query;
};

// Greedy decode per query: reward breakdown plus whole-volume Dice of the
// propagated prediction.
EvalSummary evaluate_policy(const ToyPolicy& policy, const std::vector<Phantom>& corpus,
                            const RewardConfig& reward_cfg);

struct TrainResult {
    ToyPolicy policy;
    std::vector<StepRecord> log;
    EvalSummary final_eval;
};

// Cold-start fit followed by GRPO. Throws DivergenceError when the loss or
// any parameter stops being finite.
TrainResult train(const TrainConfig& cfg, const std::vector<Phantom>& corpus);

void save_policy(const ToyPolicy& policy, const std::filesystem::path& path);
ToyPolicy load_policy(const std::filesystem::path& path);

}  // namespace evanchor
