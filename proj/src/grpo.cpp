#include "evanchor/grpo.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "evanchor/metrics.hpp"
#include "evanchor/rng.hpp"

namespace evanchor {

namespace {

constexpr double kLog2Pi = 1.8378770664093453;

// Seed streams: SFT draws live far away from per-step rollout streams.
constexpr std::uint64_t kSftStream = 1ULL << 40;

double population_std(const std::vector<double>& xs, double mean) {
    double var = 0.0;
    for (double x : xs) var += (x - mean) * (x - mean);
    return std::sqrt(var / static_cast<double>(xs.size()));
}

}  // namespace

std::vector<double> normalize_advantages(const std::vector<double>& rewards, double std_floor) {
    if (rewards.size() < 2)
        throw std::invalid_argument("advantage normalization needs at least two rewards");
    double mean = 0.0;
    for (double r : rewards) mean += r;
    mean /= static_cast<double>(rewards.size());
    const double std = population_std(rewards, mean);

    std::vector<double> adv(rewards.size(), 0.0);
    if (std <= std_floor) return adv;
    for (std::size_t i = 0; i < rewards.size(); ++i) adv[i] = (rewards[i] - mean) / std;
    return adv;
}

double kl_to_reference(double logp_theta, double logp_ref) {
    if (!std::isfinite(logp_theta) || !std::isfinite(logp_ref))
        throw std::invalid_argument("log-probabilities must be finite");
    const double d = logp_ref - logp_theta;
    return std::expm1(d) - d;  // exp(d) - d - 1, exact near zero
}

// --- Toy policy ------------------------------------------------------------

ToyPolicy::ToyPolicy(int num_queries, Dims dims, int boxes_per_anchor, double sigma_init)
    : num_queries_(num_queries), dims_(dims), boxes_(boxes_per_anchor) {
    if (num_queries < 1 || boxes_per_anchor < 1)
        throw std::invalid_argument("policy needs at least one query and one box slot");
    if (!(sigma_init > 0.0)) throw std::invalid_argument("sigma_init must be positive");
    if (dims.h < 1 || dims.w < 1 || dims.d < 1)
        throw std::invalid_argument("policy dims must be positive");

    const std::size_t q = num_queries_, d = dims_.d, b = boxes_;
    params.assign(q * d + 2 * q * d * b * 4, 0.0);

    const double init_mean[4] = {dims_.w / 2.0, dims_.h / 2.0, dims_.w / 3.0, dims_.h / 3.0};
    const double ls = std::log(sigma_init);
    for (std::size_t qi = 0; qi < q; ++qi)
        for (std::size_t t = 0; t < d; ++t)
            for (std::size_t bi = 0; bi < b; ++bi)
                for (int i = 0; i < 4; ++i) {
                    params[mean_index(qi, t, bi, i)] = init_mean[i];
                    params[log_scale_index(qi, t, bi, i)] = ls;
                }
}

std::size_t ToyPolicy::logit_index(int q, int t) const {
    return static_cast<std::size_t>(q) * dims_.d + t;
}

std::size_t ToyPolicy::mean_index(int q, int t, int b, int i) const {
    const std::size_t base = static_cast<std::size_t>(num_queries_) * dims_.d;
    return base + (((static_cast<std::size_t>(q) * dims_.d + t) * boxes_ + b) * 4 + i);
}

std::size_t ToyPolicy::log_scale_index(int q, int t, int b, int i) const {
    const std::size_t block = static_cast<std::size_t>(num_queries_) * dims_.d * boxes_ * 4;
    return mean_index(q, t, b, i) + block;
}

std::vector<double> ToyPolicy::slice_probs(int q) const {
    const int d = dims_.d;
    double max_logit = params[logit_index(q, 0)];
    for (int t = 1; t < d; ++t) max_logit = std::max(max_logit, params[logit_index(q, t)]);
    std::vector<double> p(d);
    double z = 0.0;
    for (int t = 0; t < d; ++t) {
        p[t] = std::exp(params[logit_index(q, t)] - max_logit);
        z += p[t];
    }
    for (double& v : p) v /= z;
    return p;
}

int ToyPolicy::modal_slice(int q) const {
    int best = 0;
    for (int t = 1; t < dims_.d; ++t)
        if (params[logit_index(q, t)] > params[logit_index(q, best)]) best = t;
    return best;
}

Action ToyPolicy::sample(int q, std::mt19937_64& rng) const {
    const std::vector<double> p = slice_probs(q);
    const double r = uniform_unit(rng);
    int slice = dims_.d - 1;
    double acc = 0.0;
    for (int t = 0; t < dims_.d; ++t) {
        acc += p[t];
        if (r < acc) {
            slice = t;
            break;
        }
    }

    Action a{slice, std::vector<double>(static_cast<std::size_t>(boxes_) * 4)};
    for (int b = 0; b < boxes_; ++b)
        for (int i = 0; i < 4; ++i) {
            const double m = params[mean_index(q, slice, b, i)];
            const double s = std::exp(params[log_scale_index(q, slice, b, i)]);
            a.u[static_cast<std::size_t>(b) * 4 + i] = m + s * normal_unit(rng);
        }
    return a;
}

Action ToyPolicy::greedy(int q) const {
    const int slice = modal_slice(q);
    Action a{slice, std::vector<double>(static_cast<std::size_t>(boxes_) * 4)};
    for (int b = 0; b < boxes_; ++b)
        for (int i = 0; i < 4; ++i)
            a.u[static_cast<std::size_t>(b) * 4 + i] = params[mean_index(q, slice, b, i)];
    return a;
}

double ToyPolicy::logp(int q, const Action& a) const {
    const std::vector<double> p = slice_probs(q);
    double lp = std::log(p[a.slice]);
    for (int b = 0; b < boxes_; ++b)
        for (int i = 0; i < 4; ++i) {
            const double m = params[mean_index(q, a.slice, b, i)];
            const double ls = params[log_scale_index(q, a.slice, b, i)];
            const double s = std::exp(ls);
            const double z = (a.u[static_cast<std::size_t>(b) * 4 + i] - m) / s;
            lp += -0.5 * z * z - ls - 0.5 * kLog2Pi;
        }
    return lp;
}

void ToyPolicy::accumulate_grad_logp(int q, const Action& a, double coeff,
                                     std::vector<double>& grad) const {
    const std::vector<double> p = slice_probs(q);
    for (int t = 0; t < dims_.d; ++t) {
        const double indicator = t == a.slice ? 1.0 : 0.0;
        grad[logit_index(q, t)] += coeff * (indicator - p[t]);
    }
    for (int b = 0; b < boxes_; ++b)
        for (int i = 0; i < 4; ++i) {
            const double m = params[mean_index(q, a.slice, b, i)];
            const double ls = params[log_scale_index(q, a.slice, b, i)];
            const double s = std::exp(ls);
            const double z = (a.u[static_cast<std::size_t>(b) * 4 + i] - m) / s;
            grad[mean_index(q, a.slice, b, i)] += coeff * z / s;
            grad[log_scale_index(q, a.slice, b, i)] += coeff * (z * z - 1.0);
        }
}

Box2D decode_box(double cx, double cy, double w, double h, int slice_w, int slice_h) {
    const double hw = std::max(1.0, w) / 2.0;
    const double hh = std::max(1.0, h) / 2.0;
    long x0 = std::lround(cx - hw), x1 = std::lround(cx + hw);
    long y0 = std::lround(cy - hh), y1 = std::lround(cy + hh);
    x0 = std::clamp(x0, 0L, static_cast<long>(slice_w - 1));
    x1 = std::clamp(x1, x0 + 1, static_cast<long>(slice_w));
    y0 = std::clamp(y0, 0L, static_cast<long>(slice_h - 1));
    y1 = std::clamp(y1, y0 + 1, static_cast<long>(slice_h));
    return {static_cast<int>(x0), static_cast<int>(y0), static_cast<int>(x1),
            static_cast<int>(y1)};
}

std::vector<Box2D> ToyPolicy::decode_boxes(const Action& a) const {
    std::vector<Box2D> boxes;
    for (int b = 0; b < boxes_; ++b) {
        const std::size_t o = static_cast<std::size_t>(b) * 4;
        boxes.push_back(decode_box(a.u[o], a.u[o + 1], a.u[o + 2], a.u[o + 3], dims_.w, dims_.h));
    }
    return boxes;
}

void ToyPolicy::clamp_params() {
    const std::size_t logits_end = static_cast<std::size_t>(num_queries_) * dims_.d;
    const std::size_t means_end =
        logits_end + static_cast<std::size_t>(num_queries_) * dims_.d * boxes_ * 4;
    const double mean_bound = 10.0 * std::max(dims_.w, dims_.h);
    // Box scales stay in [0.5, 8] pixels: enough exploration to learn from,
    // bounded 1/sigma so no gradient blows up.
    const double ls_lo = std::log(0.5), ls_hi = std::log(8.0);
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (i < logits_end)
            params[i] = std::clamp(params[i], -30.0, 30.0);
        else if (i < means_end)
            params[i] = std::clamp(params[i], -mean_bound, mean_bound);
        else
            params[i] = std::clamp(params[i], ls_lo, ls_hi);
    }
}

// --- Rollouts and the surrogate ---------------------------------------------

RolloutGroup rollout(const ToyPolicy& policy, const ToyPolicy& reference, int query,
                     const Phantom& phantom, const RewardConfig& reward_cfg, int group_size,
                     double adv_std_floor, std::mt19937_64& rng) {
    if (group_size < 2) throw std::invalid_argument("group size must be >= 2");

    RolloutGroup group;
    group.query = query;
    std::vector<double> totals;
    for (int i = 0; i < group_size; ++i) {
        GrpoSample s;
        s.action = policy.sample(query, rng);
        const EvidenceAnchor anchor{s.action.slice, policy.decode_boxes(s.action)};
        const std::string think = "inspecting slice " + std::to_string(anchor.key_slice + 1);
        s.text = serialize(think, anchor);
        s.reward = reward_total(s.text, phantom.vol, phantom.mask, reward_cfg);
        s.logp_old = policy.logp(query, s.action);
        s.logp_ref = reference.logp(query, s.action);
        totals.push_back(s.reward.r_total);
        group.samples.push_back(std::move(s));
    }
    group.advantages = normalize_advantages(totals, adv_std_floor);
    return group;
}

LossGrad surrogate_loss(const ToyPolicy& policy, const RolloutGroup& group,
                        const GrpoConfig& cfg) {
    if (group.samples.empty()) throw std::invalid_argument("empty rollout group");
    if (!(cfg.epsilon_clip > 0.0)) throw std::invalid_argument("epsilon_clip must be positive");
    if (cfg.beta < 0.0) throw std::invalid_argument("beta must be nonnegative");

    const double g = static_cast<double>(group.samples.size());
    LossGrad out;
    out.grad.assign(policy.params.size(), 0.0);

    for (std::size_t i = 0; i < group.samples.size(); ++i) {
        const GrpoSample& s = group.samples[i];
        const double a = group.advantages[i];
        const double lp = policy.logp(group.query, s.action);
        if (!std::isfinite(lp) || !std::isfinite(s.logp_old) || !std::isfinite(s.logp_ref))
            throw std::invalid_argument("non-finite log-probabilities in rollout group");

        const double rho = std::exp(lp - s.logp_old);
        const double clipped = std::clamp(rho, 1.0 - cfg.epsilon_clip, 1.0 + cfg.epsilon_clip);
        const double surr_unclipped = rho * a;
        const double surr_clipped = clipped * a;
        const double surr = std::min(surr_unclipped, surr_clipped);

        const double d = s.logp_ref - lp;
        const double kl = std::expm1(d) - d;
        out.mean_kl += kl / g;

        out.loss += -(surr - cfg.beta * kl) / g;

        // d surr / d lp is rho*a on the unclipped branch, 0 on the clipped
        // one; d kl / d lp = 1 - exp(d).
        const double dsurr = surr_unclipped <= surr_clipped ? surr_unclipped : 0.0;
        const double dobj = dsurr - cfg.beta * (1.0 - std::exp(d));
        policy.accumulate_grad_logp(group.query, s.action, -dobj / g, out.grad);
    }
    return out;
}

void adam_step(std::vector<double>& params, const std::vector<double>& grad, AdamState& state,
               double lr) {
    if (state.m.empty()) {
        state.m.assign(params.size(), 0.0);
        state.v.assign(params.size(), 0.0);
    }
    if (grad.size() != params.size() || state.m.size() != params.size())
        throw std::invalid_argument("gradient/state size mismatch");
    ++state.t;
    const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.t));
    const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.t));
    for (std::size_t i = 0; i < params.size(); ++i) {
        state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * grad[i];
        state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * grad[i] * grad[i];
        params[i] -= lr * (state.m[i] / bc1) / (std::sqrt(state.v[i] / bc2) + state.eps);
    }
}

// --- Cold start --------------------------------------------------------------

namespace {

struct SftExample {
    int query = 0;
    int slice = 0;
    std::vector<double> u;
};

std::vector<double> encode_boxes(const std::vector<Box2D>& boxes, int slots) {
    std::vector<double> u(static_cast<std::size_t>(slots) * 4);
    for (int b = 0; b < slots; ++b) {
        const Box2D& box = boxes[std::min<std::size_t>(b, boxes.size() - 1)];
        u[static_cast<std::size_t>(b) * 4 + 0] = (box.x0 + box.x1) / 2.0;
        u[static_cast<std::size_t>(b) * 4 + 1] = (box.y0 + box.y1) / 2.0;
        u[static_cast<std::size_t>(b) * 4 + 2] = box.width();
        u[static_cast<std::size_t>(b) * 4 + 3] = box.height();
    }
    return u;
}

// Maximum-likelihood pre-fit of logits and box means on derived targets.
// Log-scales stay at their init so the cold-start policy keeps exploring.
void sft_fit(ToyPolicy& policy, const std::vector<Phantom>& corpus, const TrainConfig& cfg) {
    std::vector<SftExample> examples;
    for (std::size_t q = 0; q < corpus.size(); ++q) {
        std::mt19937_64 rng(derive_seed(cfg.grpo.seed, kSftStream + q));
        for (int d = 0; d < cfg.sft_draws; ++d) {
            const EvidenceAnchor anchor =
                derive_target(corpus[q].mask, cfg.topk, rng, cfg.reward.connectivity,
                              cfg.reward.min_area);
            examples.push_back({static_cast<int>(q), anchor.key_slice,
                                encode_boxes(anchor.boxes, policy.boxes_per_anchor())});
        }
    }
    if (examples.empty()) return;

    AdamState adam;
    std::vector<double> grad(policy.params.size());
    const double n = static_cast<double>(examples.size());
    for (int step = 0; step < cfg.sft_steps; ++step) {
        std::fill(grad.begin(), grad.end(), 0.0);
        for (const SftExample& ex : examples) {
            const std::vector<double> p = policy.slice_probs(ex.query);
            for (int t = 0; t < policy.dims().d; ++t) {
                const double indicator = t == ex.slice ? 1.0 : 0.0;
                grad[policy.logit_index(ex.query, t)] += (p[t] - indicator) / n;
            }
            for (int b = 0; b < policy.boxes_per_anchor(); ++b)
                for (int i = 0; i < 4; ++i) {
                    const std::size_t mi = policy.mean_index(ex.query, ex.slice, b, i);
                    const double s = std::exp(
                        policy.params[policy.log_scale_index(ex.query, ex.slice, b, i)]);
                    const double z =
                        (ex.u[static_cast<std::size_t>(b) * 4 + i] - policy.params[mi]) / s;
                    grad[mi] += -z / s / n;
                }
        }
        adam_step(policy.params, grad, adam, cfg.sft_lr);
        policy.clamp_params();
    }
}

}  // namespace

// --- Evaluation and training --------------------------------------------------

EvalSummary evaluate_policy(const ToyPolicy& policy, const std::vector<Phantom>& corpus,
                            const RewardConfig& reward_cfg) {
    EvalSummary sum;
    for (std::size_t q = 0; q < corpus.size(); ++q) {
        EvalRecord rec;
        rec.query = static_cast<int>(q);
        const Action a = policy.greedy(static_cast<int>(q));
        rec.modal_slice = a.slice;
        rec.modal_is_argmax =
            rank_slices_by_visibility(corpus[q].mask).front().slice == a.slice;

        const EvidenceAnchor anchor{a.slice, policy.decode_boxes(a)};
        const std::string text =
            serialize("inspecting slice " + std::to_string(a.slice + 1), anchor);
        rec.breakdown = reward_total(text, corpus[q].vol, corpus[q].mask, reward_cfg);
        const VoxelMask pred =
            propagate_prediction(corpus[q].vol, anchor, corpus[q].mask, reward_cfg);
        rec.whole_dsc = dice(pred, corpus[q].mask);

        sum.mean_total += rec.breakdown.r_total;
        sum.mean_rf += rec.breakdown.r_f;
        sum.mean_ra += rec.breakdown.r_a;
        sum.mean_rs += rec.breakdown.r_s;
        sum.mean_rc += rec.breakdown.r_c;
        sum.frac_modal_argmax += rec.modal_is_argmax ? 1.0 : 0.0;
        sum.mean_whole_dsc += rec.whole_dsc;
        sum.per_query.push_back(std::move(rec));
    }
    const double n = static_cast<double>(corpus.size());
    sum.mean_total /= n;
    sum.mean_rf /= n;
    sum.mean_ra /= n;
    sum.mean_rs /= n;
    sum.mean_rc /= n;
    sum.frac_modal_argmax /= n;
    sum.mean_whole_dsc /= n;
    return sum;
}

TrainResult train(const TrainConfig& cfg, const std::vector<Phantom>& corpus) {
    if (corpus.empty()) throw std::invalid_argument("training needs at least one phantom");
    if (cfg.grpo.group_size < 2) throw std::invalid_argument("group size must be >= 2");
    if (!(cfg.grpo.epsilon_clip > 0.0 && cfg.grpo.epsilon_clip < 1.0))
        throw std::invalid_argument("epsilon_clip must lie in (0, 1)");
    if (cfg.grpo.beta < 0.0) throw std::invalid_argument("beta must be nonnegative");
    if (cfg.grpo.steps < 0 || cfg.sft_steps < 0)
        throw std::invalid_argument("step counts must be nonnegative");
    if (!(cfg.grpo.learning_rate > 0.0) || !(cfg.sft_lr > 0.0))
        throw std::invalid_argument("learning rates must be positive");
    if (cfg.grpo.adv_std_floor < 0.0) throw std::invalid_argument("std floor must be nonnegative");

    const Dims dims = corpus.front().vol.dims();
    for (const Phantom& ph : corpus) {
        if (ph.vol.dims() != dims || ph.mask.dims() != dims)
            throw DimensionMismatchError("corpus phantoms must share one dim triple");
        if (ph.mask.empty()) throw EmptyMaskError("corpus phantom has an empty ground truth");
    }

    ToyPolicy policy(static_cast<int>(corpus.size()), dims, cfg.boxes_per_anchor,
                     cfg.sigma_init);
    if (cfg.sft && cfg.sft_steps > 0) sft_fit(policy, corpus, cfg);
    const ToyPolicy reference = policy;  // frozen post-cold-start policy

    TrainResult result{policy, {}, {}};
    for (int step = 0; step < cfg.grpo.steps; ++step) {
        const int q = static_cast<int>(step % corpus.size());
        std::mt19937_64 rng(derive_seed(cfg.grpo.seed, static_cast<std::uint64_t>(step)));
        const RolloutGroup group =
            rollout(result.policy, reference, q, corpus[q], cfg.reward, cfg.grpo.group_size,
                    cfg.grpo.adv_std_floor, rng);
        const LossGrad lg = surrogate_loss(result.policy, group, cfg.grpo);
        if (!std::isfinite(lg.loss))
            throw DivergenceError("non-finite loss at step " + std::to_string(step));

        // Plain SGD: with unit ratios and zero-sum advantages only sampled
        // coordinates carry gradient, and unsampled ones must not move.
        // A per-coordinate normalizer would scale the vanishing softmax
        // tail gradients up to full-size steps.
        for (std::size_t i = 0; i < result.policy.params.size(); ++i)
            result.policy.params[i] -= cfg.grpo.learning_rate * lg.grad[i];
        for (double p : result.policy.params)
            if (!std::isfinite(p))
                throw DivergenceError("non-finite parameter after step " + std::to_string(step));
        result.policy.clamp_params();

        StepRecord rec;
        rec.step = step;
        rec.query = q;
        const double g = static_cast<double>(group.samples.size());
        for (const GrpoSample& s : group.samples) {
            rec.mean_total += s.reward.r_total / g;
            rec.mean_rf += s.reward.r_f / g;
            rec.mean_ra += s.reward.r_a / g;
            rec.mean_rs += s.reward.r_s / g;
            rec.mean_rc += s.reward.r_c / g;
        }
        rec.mean_kl = lg.mean_kl;
        rec.loss = lg.loss;
        result.log.push_back(rec);
    }

    result.final_eval = evaluate_policy(result.policy, corpus, cfg.reward);
    return result;
}

// --- Parameter files -----------------------------------------------------------

void save_policy(const ToyPolicy& policy, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot open for writing: " + path.string());
    out << "EVTP1 " << policy.num_queries() << ' ' << policy.dims().h << ' ' << policy.dims().w
        << ' ' << policy.dims().d << ' ' << policy.boxes_per_anchor() << ' '
        << policy.params.size() << '\n';
    char buf[48];
    for (double p : policy.params) {
        std::snprintf(buf, sizeof(buf), "%a\n", p);
        out << buf;
    }
    if (!out) throw IoError("write failed: " + path.string());
}

ToyPolicy load_policy(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open for reading: " + path.string());
    std::string line;
    if (!std::getline(in, line)) throw MalformedHeaderError(path.string() + ": empty file");
    std::istringstream hdr(line);
    std::string magic;
    int q = 0, b = 0;
    Dims dims;
    std::size_t n = 0;
    if (!(hdr >> magic >> q >> dims.h >> dims.w >> dims.d >> b >> n) || magic != "EVTP1")
        throw MalformedHeaderError(path.string() + ": bad policy header");

    ToyPolicy policy(q, dims, b, 1.0);
    if (policy.params.size() != n)
        throw DimensionMismatchError(path.string() + ": parameter count mismatch");
    for (std::size_t i = 0; i < n; ++i) {
        if (!std::getline(in, line))
            throw TruncatedPayloadError(path.string() + ": missing parameter " +
                                        std::to_string(i));
        char* end = nullptr;
        policy.params[i] = std::strtod(line.c_str(), &end);
        if (end == line.c_str())
            throw MalformedHeaderError(path.string() + ": bad parameter literal: " + line);
    }
    return policy;
}

}  // namespace evanchor
