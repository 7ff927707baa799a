// evanchor: phantom generation, target derivation, response scoring, toy
// GRPO training, and mask evaluation over the .evv/.evm formats.
//
// Exit codes: 0 success, 1 data error (e.g. empty ground truth), 2 usage,
// 3 I/O error, 4 training divergence.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "evanchor/checksum.hpp"
#include "evanchor/grpo.hpp"
#include "evanchor/metrics.hpp"
#include "evanchor/phantom.hpp"
#include "evanchor/respparse.hpp"
#include "evanchor/reward.hpp"
#include "evanchor/rng.hpp"
#include "evanchor/targets.hpp"
#include "evanchor/volume_io.hpp"

namespace fs = std::filesystem;
using namespace evanchor;

namespace {

constexpr int kExitData = 1;
constexpr int kExitUsage = 2;
constexpr int kExitIo = 3;
constexpr int kExitDivergence = 4;

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.6f", v);
    return buf;
}

std::string fmt_triple(const Point3& p) {
    char buf[96];
    std::snprintf(buf, sizeof(buf), "%.17g,%.17g,%.17g", p.x, p.y, p.z);
    return buf;
}

std::ofstream open_record_file(const std::string& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot open for writing: " + path);
    return out;
}

// Writes records to --out when given, otherwise to stdout.
class RecordSink {
public:
    explicit RecordSink(const std::string& path) {
        if (!path.empty()) {
            file_ = open_record_file(path);
            out_ = &file_;
        } else {
            out_ = &std::cout;
        }
    }

    template <typename T>
    RecordSink& operator<<(const T& v) {
        *out_ << v;
        return *this;
    }

    void done() {
        out_->flush();
        if (out_ == &file_ && !file_) throw IoError("write failed");
    }

private:
    std::ofstream file_;
    std::ostream* out_ = nullptr;
};

Connectivity connectivity_from_int(int v) {
    if (v == 4) return Connectivity::four;
    if (v == 8) return Connectivity::eight;
    throw UsageError("connectivity must be 4 or 8");
}

// --- gen-phantoms -----------------------------------------------------------

struct GenOptions {
    std::string out_dir;
    CorpusConfig corpus;
    std::string kinds_csv = "sphere,two-blob";
    std::string dims_str = "48x48x48";
};

int run_gen_phantoms(const GenOptions& opt) {
    CorpusConfig cfg = opt.corpus;
    if (std::sscanf(opt.dims_str.c_str(), "%dx%dx%d", &cfg.dims.h, &cfg.dims.w, &cfg.dims.d) !=
        3)
        throw UsageError("--dims expects HxWxD");
    cfg.kinds.clear();
    std::string token;
    std::istringstream kinds(opt.kinds_csv);
    while (std::getline(kinds, token, ','))
        if (!token.empty()) cfg.kinds.push_back(shape_kind_from_string(token));
    if (cfg.kinds.empty()) throw UsageError("--kinds lists no shapes");

    fs::create_directories(opt.out_dir);
    const std::vector<PhantomSpec> specs = sample_corpus_specs(cfg);

    std::ofstream manifest = open_record_file((fs::path(opt.out_dir) / "manifest.txt").string());
    manifest << "#evanchor-manifest v1\tindex\tkind\th\tw\td\tcenter\tradii\tsecond_center\tfg\t"
                "bg\tnoise\tseed\tvolume\tvolume_fnv1a\tmask\tmask_fnv1a\n";
    for (std::size_t i = 0; i < specs.size(); ++i) {
        const PhantomSpec& spec = specs[i];
        const Phantom ph = generate_phantom(spec);
        if (ph.mask.empty())
            std::cerr << "warning: phantom " << i << " has an empty mask\n";

        char stem[32];
        std::snprintf(stem, sizeof(stem), "p%03zu", i);
        const fs::path vol_path = fs::path(opt.out_dir) / (std::string(stem) + ".evv");
        const fs::path mask_path = fs::path(opt.out_dir) / (std::string(stem) + ".evm");
        write_volume(ph.vol, vol_path);
        write_mask(ph.mask, mask_path);

        char noise[40], seed[32];
        std::snprintf(noise, sizeof(noise), "%.17g", spec.noise_sigma);
        std::snprintf(seed, sizeof(seed), "%llu", (unsigned long long)spec.seed);
        manifest << i << '\t' << to_string(spec.kind) << '\t' << spec.dims.h << '\t'
                 << spec.dims.w << '\t' << spec.dims.d << '\t' << fmt_triple(spec.center) << '\t'
                 << fmt_triple(spec.radii) << '\t' << fmt_triple(spec.second_center) << '\t'
                 << int(spec.fg) << '\t' << int(spec.bg) << '\t' << noise << '\t' << seed << '\t'
                 << vol_path.filename().string() << '\t' << to_hex(fnv1a64_file(vol_path)) << '\t'
                 << mask_path.filename().string() << '\t' << to_hex(fnv1a64_file(mask_path))
                 << '\n';
    }
    if (!manifest) throw IoError("manifest write failed");
    return 0;
}

// --- corpus loading -----------------------------------------------------------

std::vector<std::string> split_tabs(const std::string& line) {
    std::vector<std::string> cols;
    std::string cur;
    for (char c : line) {
        if (c == '\t') {
            cols.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    cols.push_back(cur);
    return cols;
}

std::vector<Phantom> load_corpus(const std::string& manifest_path) {
    std::ifstream in(manifest_path);
    if (!in) throw IoError("cannot open manifest: " + manifest_path);
    const fs::path base = fs::path(manifest_path).parent_path();

    std::string header;
    if (!std::getline(in, header) || header.rfind("#evanchor-manifest v1", 0) != 0)
        throw MalformedHeaderError(manifest_path + ": not a v1 manifest");

    std::vector<Phantom> corpus;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        const std::vector<std::string> cols = split_tabs(line);
        if (cols.size() != 16)
            throw MalformedHeaderError(manifest_path + ": bad manifest row: " + line);
        corpus.push_back({read_volume(base / cols[12]), read_mask(base / cols[14])});
    }
    return corpus;
}

// --- derive-targets -----------------------------------------------------------

struct TargetOptions {
    std::vector<std::string> masks;
    int k = 3;
    std::uint64_t seed = 0;
    int connectivity = 8;
    int min_area = 1;
    std::string out;
};

int run_derive_targets(const TargetOptions& opt) {
    RecordSink sink(opt.out);
    sink << "#evanchor-targets v1\tfile\tstatus\tkey_slice\tanswer\n";
    int failures = 0;
    for (std::size_t i = 0; i < opt.masks.size(); ++i) {
        try {
            const VoxelMask mask = read_mask(opt.masks[i]);
            std::mt19937_64 rng(derive_seed(opt.seed, i));
            const EvidenceAnchor anchor =
                derive_target(mask, {opt.k, opt.seed}, rng,
                              connectivity_from_int(opt.connectivity), opt.min_area);
            // The serialized response's answer body is the anchor record.
            const std::string resp = serialize("", anchor);
            const std::size_t a0 = resp.find("<answer>") + 8;
            const std::size_t a1 = resp.find("</answer>");
            sink << opt.masks[i] << "\tok\t" << anchor.key_slice << '\t'
                 << resp.substr(a0, a1 - a0) << '\n';
        } catch (const EmptyMaskError&) {
            sink << opt.masks[i] << "\tempty-mask\t-\t-\n";
            ++failures;
        }
    }
    sink.done();
    return failures == 0 ? 0 : kExitData;
}

// --- score ---------------------------------------------------------------------

struct ScoreOptions {
    std::string responses;
    std::string gt;
    std::string volume;
    RewardConfig reward;
    int connectivity = 8;
    bool no_rc = false;
    std::string out;
};

int run_score(const ScoreOptions& opt) {
    RewardConfig cfg = opt.reward;
    cfg.connectivity = connectivity_from_int(opt.connectivity);
    if (opt.no_rc) cfg.weights.c = 0.0;

    const VoxelMask gt = read_mask(opt.gt);
    Volume vol(gt.dims(), 0);
    if (cfg.weights.c > 0.0) {
        if (opt.volume.empty())
            throw UsageError("--volume is required when the consistency weight is nonzero");
        vol = read_volume(opt.volume);
    }

    std::ifstream in(opt.responses);
    if (!in) throw IoError("cannot open responses: " + opt.responses);

    RecordSink sink(opt.out);
    sink << "#evanchor-score v1\tindex\tr_f\tr_a\tr_s\tr_c\tr_total\treason\n";
    std::string line;
    for (int index = 0; std::getline(in, line); ++index) {
        const RewardBreakdown b = reward_total(line, vol, gt, cfg);
        sink << index << '\t' << int(b.r_f) << '\t' << fmt(b.r_a) << '\t' << fmt(b.r_s) << '\t'
             << fmt(b.r_c) << '\t' << fmt(b.r_total) << '\t' << to_string(b.failure) << '\n';
    }
    sink.done();
    return 0;
}

// --- train-toy ------------------------------------------------------------------

struct TrainOptions {
    std::string corpus;
    std::string config;
    std::string out_log;
    std::string out_params;
    std::vector<std::string> overrides;  // key=value, applied after the file
    std::optional<std::uint64_t> seed;
    std::optional<int> steps;
    std::optional<double> lambda_s;
    bool no_sft = false;
};

bool parse_bool(const std::string& v) {
    if (v == "on" || v == "true" || v == "1") return true;
    if (v == "off" || v == "false" || v == "0") return false;
    throw UsageError("expected on/off, got: " + v);
}

void apply_config_line(TrainConfig& cfg, bool& seed_set, const std::string& key,
                       const std::string& value) {
    const auto d = [&] { return std::stod(value); };
    const auto i = [&] { return std::stoi(value); };
    if (key == "seed") {
        cfg.grpo.seed = std::stoull(value);
        seed_set = true;
    } else if (key == "steps") {
        cfg.grpo.steps = i();
    } else if (key == "group_size") {
        cfg.grpo.group_size = i();
    } else if (key == "epsilon_clip") {
        cfg.grpo.epsilon_clip = d();
    } else if (key == "beta") {
        cfg.grpo.beta = d();
    } else if (key == "learning_rate") {
        cfg.grpo.learning_rate = d();
    } else if (key == "adv_std_floor") {
        cfg.grpo.adv_std_floor = d();
    } else if (key == "topk") {
        cfg.topk.k = i();
    } else if (key == "sft") {
        cfg.sft = parse_bool(value);
    } else if (key == "sft_steps") {
        cfg.sft_steps = i();
    } else if (key == "sft_lr") {
        cfg.sft_lr = d();
    } else if (key == "sft_draws") {
        cfg.sft_draws = i();
    } else if (key == "boxes_per_anchor") {
        cfg.boxes_per_anchor = i();
    } else if (key == "sigma_init") {
        cfg.sigma_init = d();
    } else if (key == "delta") {
        cfg.reward.delta = i();
    } else if (key == "lambda_f") {
        cfg.reward.weights.f = d();
    } else if (key == "lambda_a") {
        cfg.reward.weights.a = d();
    } else if (key == "lambda_s") {
        cfg.reward.weights.s = d();
    } else if (key == "lambda_c") {
        cfg.reward.weights.c = d();
    } else if (key == "propagator") {
        cfg.reward.propagator.kind = propagator_kind_from_string(value);
    } else if (key == "tau") {
        cfg.reward.propagator.tau = d();
    } else if (key == "dilation") {
        cfg.reward.propagator.dilation = i();
    } else if (key == "max_span") {
        cfg.reward.propagator.max_span = i();
    } else if (key == "contrast_floor") {
        cfg.reward.propagator.contrast_floor = d();
    } else if (key == "propagator_command") {
        cfg.reward.propagator.command = value;
    } else if (key == "connectivity") {
        cfg.reward.connectivity = connectivity_from_int(i());
    } else if (key == "min_area") {
        cfg.reward.min_area = i();
    } else if (key == "drop_zero_iou_matches") {
        cfg.reward.drop_zero_iou_matches = parse_bool(value);
    } else {
        throw UsageError("unknown config key: " + key);
    }
}

TrainConfig load_train_config(const TrainOptions& opt, bool& seed_set) {
    TrainConfig cfg;
    if (!opt.config.empty()) {
        std::ifstream in(opt.config);
        if (!in) throw IoError("cannot open config: " + opt.config);
        std::string line;
        int lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            const std::size_t hash = line.find('#');
            if (hash != std::string::npos) line.erase(hash);
            const auto trim = [](std::string s) {
                const auto b = s.find_first_not_of(" \t\r");
                const auto e = s.find_last_not_of(" \t\r");
                return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
            };
            if (trim(line).empty()) continue;
            const std::size_t eq = line.find('=');
            if (eq == std::string::npos)
                throw UsageError(opt.config + ":" + std::to_string(lineno) +
                                 ": expected key = value");
            try {
                apply_config_line(cfg, seed_set, trim(line.substr(0, eq)),
                                  trim(line.substr(eq + 1)));
            } catch (const std::invalid_argument& e) {
                throw UsageError(opt.config + ":" + std::to_string(lineno) + ": " + e.what());
            }
        }
    }
    for (const std::string& kv : opt.overrides) {
        const std::size_t eq = kv.find('=');
        if (eq == std::string::npos) throw UsageError("--set expects key=value, got: " + kv);
        try {
            apply_config_line(cfg, seed_set, kv.substr(0, eq), kv.substr(eq + 1));
        } catch (const std::invalid_argument& e) {
            throw UsageError("--set " + kv + ": " + e.what());
        }
    }
    if (opt.seed) {
        cfg.grpo.seed = *opt.seed;
        seed_set = true;
    }
    if (opt.steps) cfg.grpo.steps = *opt.steps;
    if (opt.lambda_s) cfg.reward.weights.s = *opt.lambda_s;
    if (opt.no_sft) cfg.sft = false;
    return cfg;
}

int run_train_toy(const TrainOptions& opt) {
    bool seed_set = false;
    const TrainConfig cfg = load_train_config(opt, seed_set);
    if (!seed_set) throw UsageError("a seed is required (config key `seed` or --seed)");

    const std::vector<Phantom> corpus = load_corpus(opt.corpus);
    const TrainResult result = train(cfg, corpus);

    if (!opt.out_log.empty()) {
        std::ofstream log = open_record_file(opt.out_log);
        log << "#evanchor-train v1\tstep\tquery\tmean_total\tr_f\tr_a\tr_s\tr_c\tkl\tloss\n";
        for (const StepRecord& r : result.log)
            log << r.step << '\t' << r.query << '\t' << fmt(r.mean_total) << '\t' << fmt(r.mean_rf)
                << '\t' << fmt(r.mean_ra) << '\t' << fmt(r.mean_rs) << '\t' << fmt(r.mean_rc)
                << '\t' << fmt(r.mean_kl) << '\t' << fmt(r.loss) << '\n';
        if (!log) throw IoError("log write failed: " + opt.out_log);
    }
    if (!opt.out_params.empty()) save_policy(result.policy, opt.out_params);

    const EvalSummary& e = result.final_eval;
    std::cout << "final eval: mean_total=" << fmt(e.mean_total) << " r_f=" << fmt(e.mean_rf)
              << " r_a=" << fmt(e.mean_ra) << " r_s=" << fmt(e.mean_rs)
              << " r_c=" << fmt(e.mean_rc) << " modal_argmax=" << fmt(e.frac_modal_argmax)
              << " whole_dsc=" << fmt(e.mean_whole_dsc) << '\n';
    return 0;
}

// --- eval -----------------------------------------------------------------------

struct EvalOptions {
    std::string pred;
    std::string gt;
    std::vector<int> restrict_range;
    std::string out;
};

int run_eval(const EvalOptions& opt) {
    const VoxelMask pred = read_mask(opt.pred);
    const VoxelMask gt = read_mask(opt.gt);
    std::optional<SliceRange> restriction;
    if (!opt.restrict_range.empty())
        restriction = SliceRange{opt.restrict_range[0], opt.restrict_range[1]};
    const MetricReport r = evaluate_masks(pred, gt, restriction);

    RecordSink sink(opt.out);
    sink << "#evanchor-eval v1\tdsc\tiou\ttp\tfp\tfn\n";
    sink << fmt(r.dsc) << '\t' << fmt(r.iou) << '\t' << r.tp << '\t' << r.fp << '\t' << r.fn
         << '\n';
    sink.done();
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"evidence-anchor reward and GRPO toolkit"};
    app.require_subcommand(1);

    GenOptions gen;
    CLI::App* cmd_gen = app.add_subcommand("gen-phantoms", "generate a phantom corpus");
    cmd_gen->add_option("--out-dir", gen.out_dir, "output directory")->required();
    cmd_gen->add_option("--count", gen.corpus.count, "number of phantoms")->required();
    cmd_gen->add_option("--seed", gen.corpus.seed, "corpus seed")->required();
    cmd_gen->add_option("--dims", gen.dims_str, "grid as HxWxD (default 48x48x48)");
    cmd_gen->add_option("--kinds", gen.kinds_csv, "comma list: sphere,ellipsoid,two-blob");
    cmd_gen->add_option("--fg", gen.corpus.fg, "foreground intensity");
    cmd_gen->add_option("--bg", gen.corpus.bg, "background intensity");
    cmd_gen->add_option("--noise-lo", gen.corpus.noise_lo, "noise sigma lower bound");
    cmd_gen->add_option("--noise-hi", gen.corpus.noise_hi, "noise sigma upper bound");

    TargetOptions tgt;
    CLI::App* cmd_tgt = app.add_subcommand("derive-targets", "derive evidence anchors");
    cmd_tgt->add_option("masks", tgt.masks, "mask files (.evm)")->required();
    cmd_tgt->add_option("--k", tgt.k, "top-K visibility pool (default 3)");
    cmd_tgt->add_option("--seed", tgt.seed, "sampling seed")->required();
    cmd_tgt->add_option("--connectivity", tgt.connectivity, "4 or 8 (default 8)");
    cmd_tgt->add_option("--min-area", tgt.min_area, "minimum component pixel count");
    cmd_tgt->add_option("--out", tgt.out, "output file (default stdout)");

    ScoreOptions sc;
    CLI::App* cmd_sc = app.add_subcommand("score", "score responses against a ground truth");
    cmd_sc->add_option("--responses", sc.responses, "file with one response per line")
        ->required();
    cmd_sc->add_option("--gt", sc.gt, "ground-truth mask (.evm)")->required();
    cmd_sc->add_option("--volume", sc.volume, "volume (.evv), needed for the consistency term");
    cmd_sc->add_option("--delta", sc.reward.delta, "axial neighborhood half-width (default 5)");
    cmd_sc->add_option("--lambda-f", sc.reward.weights.f, "format weight");
    cmd_sc->add_option("--lambda-a", sc.reward.weights.a, "axial weight");
    cmd_sc->add_option("--lambda-s", sc.reward.weights.s, "spatial weight");
    cmd_sc->add_option("--lambda-c", sc.reward.weights.c, "consistency weight");
    cmd_sc->add_flag("--no-rc", sc.no_rc, "shorthand for --lambda-c 0");
    cmd_sc->add_option("--propagator", [&sc](const std::vector<std::string>& v) {
        sc.reward.propagator.kind = propagator_kind_from_string(v[0]);
        return true;
    }, "reference-regiongrow | box-extrude | external-command");
    cmd_sc->add_option("--tau", sc.reward.propagator.tau, "intensity tolerance factor");
    cmd_sc->add_option("--dilation", sc.reward.propagator.dilation, "confinement margin");
    cmd_sc->add_option("--max-span", sc.reward.propagator.max_span, "slices per direction");
    cmd_sc->add_option("--command", sc.reward.propagator.command, "external propagator command");
    cmd_sc->add_option("--connectivity", sc.connectivity, "4 or 8 (default 8)");
    cmd_sc->add_option("--min-area", sc.reward.min_area, "minimum GT component pixel count");
    cmd_sc->add_option("--out", sc.out, "output file (default stdout)");

    TrainOptions tr;
    CLI::App* cmd_tr = app.add_subcommand("train-toy", "cold start + GRPO on a corpus");
    cmd_tr->add_option("--corpus", tr.corpus, "manifest from gen-phantoms")->required();
    cmd_tr->add_option("--config", tr.config, "key = value config file");
    cmd_tr->add_option("--set", tr.overrides, "override any config key, e.g. --set beta=0.02");
    cmd_tr->add_option("--out-log", tr.out_log, "training log file");
    cmd_tr->add_option("--out-params", tr.out_params, "final policy parameters file");
    std::uint64_t seed_opt = 0;
    CLI::Option* seed_flag = cmd_tr->add_option("--seed", seed_opt, "training seed");
    int steps_opt = 0;
    CLI::Option* steps_flag = cmd_tr->add_option("--steps", steps_opt, "GRPO steps");
    double lambda_s_opt = 0.0;
    CLI::Option* ls_flag = cmd_tr->add_option("--lambda-s", lambda_s_opt, "spatial weight");
    cmd_tr->add_flag("--no-sft", tr.no_sft, "skip the cold start");

    EvalOptions ev;
    CLI::App* cmd_ev = app.add_subcommand("eval", "DSC/IoU between two masks");
    cmd_ev->add_option("--pred", ev.pred, "predicted mask (.evm)")->required();
    cmd_ev->add_option("--gt", ev.gt, "ground-truth mask (.evm)")->required();
    cmd_ev->add_option("--restrict", ev.restrict_range, "inclusive slice range: lo hi")
        ->expected(2);
    cmd_ev->add_option("--out", ev.out, "output file (default stdout)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);  // --help
        app.exit(e);
        return kExitUsage;
    }

    try {
        if (cmd_gen->parsed()) return run_gen_phantoms(gen);
        if (cmd_tgt->parsed()) return run_derive_targets(tgt);
        if (cmd_sc->parsed()) return run_score(sc);
        if (cmd_tr->parsed()) {
            if (*seed_flag) tr.seed = seed_opt;
            if (*steps_flag) tr.steps = steps_opt;
            if (*ls_flag) tr.lambda_s = lambda_s_opt;
            return run_train_toy(tr);
        }
        if (cmd_ev->parsed()) return run_eval(ev);
        return kExitUsage;
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const IoError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitIo;
    } catch (const DivergenceError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitDivergence;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitData;
    }
}
