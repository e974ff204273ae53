// Command-line front end: track / eval / synth / pretrain.

#include <cstdio>
#include <cstring>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "gdt/bench.hpp"
#include "gdt/config.hpp"
#include "gdt/errors.hpp"

namespace {

const char* kUsage =
    "usage:\n"
    "  gdt track --seq DIR --config FILE --seed N --out results.txt\n"
    "            [--freeze-net] [--no-pretrain] [--state-out FILE] [--weights FILE]\n"
    "  gdt eval --results FILE --gt FILE --csv out.csv [--svg out.svg]\n"
    "  gdt synth --out DIR --frames N --seed N [--velocity VX,VY] [--occlude A:B]\n"
    "            [--noise S] [--size WxH] [--target WxH] [--scale-drift D]\n"
    "            [--brightness-drift D] [--distractors N] [--distractor-morph R]\n"
    "  gdt pretrain --corpus DIR --iters N --seed N --out weights.gdtw [--config FILE]\n";

struct ArgError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct Args {
    std::map<std::string, std::string> values;
    std::set<std::string> flags;

    static Args parse(int argc, char** argv, int start, const std::set<std::string>& bool_flags) {
        Args a;
        for (int i = start; i < argc; ++i) {
            const std::string arg = argv[i];
            if (arg.rfind("--", 0) != 0) throw ArgError("unexpected argument '" + arg + "'");
            if (bool_flags.count(arg)) {
                a.flags.insert(arg);
                continue;
            }
            if (i + 1 >= argc) throw ArgError("missing value for " + arg);
            a.values[arg] = argv[++i];
        }
        return a;
    }

    std::string required(const std::string& name) const {
        auto it = values.find(name);
        if (it == values.end()) throw ArgError("missing required option " + name);
        return it->second;
    }

    std::string optional(const std::string& name, const std::string& fallback = "") const {
        auto it = values.find(name);
        return it == values.end() ? fallback : it->second;
    }

    bool has(const std::string& name) const { return flags.count(name) || values.count(name); }
};

long long parse_ll(const std::string& name, const std::string& v) {
    try {
        std::size_t used = 0;
        const long long out = std::stoll(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        return out;
    } catch (const std::exception&) {
        throw ArgError(name + ": expected an integer, got '" + v + "'");
    }
}

double parse_d(const std::string& name, const std::string& v) {
    try {
        std::size_t used = 0;
        const double out = std::stod(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        return out;
    } catch (const std::exception&) {
        throw ArgError(name + ": expected a number, got '" + v + "'");
    }
}

std::pair<double, double> parse_pair(const std::string& name, const std::string& v, char sep) {
    const std::size_t p = v.find(sep);
    if (p == std::string::npos) {
        throw ArgError(name + ": expected two values separated by '" + std::string(1, sep) + "'");
    }
    return {parse_d(name, v.substr(0, p)), parse_d(name, v.substr(p + 1))};
}

gdt::AppConfig config_or_default(const Args& args) {
    const std::string path = args.optional("--config");
    if (path.empty()) return gdt::AppConfig{};
    return gdt::parse_config_file(path);
}

int cmd_track(int argc, char** argv) {
    const Args args = Args::parse(argc, argv, 2, {"--freeze-net", "--no-pretrain"});
    gdt::AppConfig app = config_or_default(args);
    app.tracker.seed = static_cast<std::uint64_t>(parse_ll("--seed", args.optional("--seed", "1")));
    if (args.has("--freeze-net")) app.tracker.flags.freeze_net = true;

    std::string weights = args.optional("--weights", app.weights_file);
    if (args.has("--no-pretrain")) weights.clear();

    const gdt::Sequence seq = gdt::load_sequence(args.required("--seq"));
    std::optional<gdt::Network> pretrained;
    if (!weights.empty()) pretrained = gdt::load_weights(weights);

    gdt::TrackerState final_state;
    const auto pred = gdt::run_ope(seq, app.tracker, std::move(pretrained), &final_state);

    const std::string out_path = args.required("--out");
    gdt::write_rect_file(out_path, pred);
    const std::string state_out = args.optional("--state-out");
    if (!state_out.empty()) gdt::save_state(final_state, state_out);

    std::printf("tracked %zu frames -> %s\n", pred.size(), out_path.c_str());
    return 0;
}

int cmd_eval(int argc, char** argv) {
    const Args args = Args::parse(argc, argv, 2, {});
    const auto pred = gdt::read_rect_file(args.required("--results"));
    const auto gt = gdt::read_rect_file(args.required("--gt"));
    const auto prec = gdt::precision_curve(pred, gt);
    const auto succ = gdt::success_curve(pred, gt);
    gdt::emit_report(prec, succ, args.required("--csv"), args.optional("--svg"));
    std::printf("precision@20 %.6f\n", gdt::precision_at(prec, 20.0));
    std::printf("success_auc %.6f\n", gdt::success_auc(succ));
    return 0;
}

int cmd_synth(int argc, char** argv) {
    const Args args = Args::parse(argc, argv, 2, {});
    gdt::SynthParams p;
    p.frames = static_cast<int>(parse_ll("--frames", args.optional("--frames", "100")));
    if (args.has("--velocity")) {
        const auto [vx, vy] = parse_pair("--velocity", args.required("--velocity"), ',');
        p.velocity_x = vx;
        p.velocity_y = vy;
    }
    if (args.has("--occlude")) {
        const auto [a, b] = parse_pair("--occlude", args.required("--occlude"), ':');
        p.occlude_begin = static_cast<int>(a);
        p.occlude_end = static_cast<int>(b);
    }
    if (args.has("--noise")) p.noise_sigma = parse_d("--noise", args.required("--noise"));
    if (args.has("--size")) {
        const auto [w, h] = parse_pair("--size", args.required("--size"), 'x');
        p.width = static_cast<int>(w);
        p.height = static_cast<int>(h);
    }
    if (args.has("--target")) {
        const auto [w, h] = parse_pair("--target", args.required("--target"), 'x');
        p.target_w = static_cast<int>(w);
        p.target_h = static_cast<int>(h);
    }
    if (args.has("--scale-drift")) p.scale_drift = parse_d("--scale-drift", args.required("--scale-drift"));
    if (args.has("--brightness-drift")) {
        p.brightness_drift = parse_d("--brightness-drift", args.required("--brightness-drift"));
    }
    if (args.has("--distractors")) {
        p.distractors = static_cast<int>(parse_ll("--distractors", args.required("--distractors")));
    }
    if (args.has("--distractor-morph")) {
        p.distractor_morph = parse_d("--distractor-morph", args.required("--distractor-morph"));
    }
    const auto seed = static_cast<std::uint64_t>(parse_ll("--seed", args.optional("--seed", "1")));

    const gdt::Sequence seq = gdt::synth_sequence(p, seed, args.required("--out"));
    std::printf("wrote %zu frames under %s\n", seq.frame_paths.size(), seq.dir.c_str());
    return 0;
}

int cmd_pretrain(int argc, char** argv) {
    const Args args = Args::parse(argc, argv, 2, {});
    gdt::AppConfig app = config_or_default(args);
    app.tracker.seed = static_cast<std::uint64_t>(parse_ll("--seed", args.optional("--seed", "1")));
    const int iters = static_cast<int>(parse_ll("--iters", args.optional("--iters", "300")));

    gdt::PretrainStats stats;
    const gdt::Network net =
        gdt::pretrain_objectness(args.required("--corpus"), iters, app.tracker, &stats);
    gdt::save_weights(net, args.required("--out"));
    std::printf("pretrained %d iterations on %d object / %d background patches, holdout accuracy %.3f\n",
                stats.used_iterations, stats.n_object, stats.n_background, stats.holdout_accuracy);
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    if (argc < 2) {
        std::fputs(kUsage, stderr);
        return 2;
    }
    const std::string cmd = argv[1];
    try {
        if (cmd == "track") return cmd_track(argc, argv);
        if (cmd == "eval") return cmd_eval(argc, argv);
        if (cmd == "synth") return cmd_synth(argc, argv);
        if (cmd == "pretrain") return cmd_pretrain(argc, argv);
        std::fprintf(stderr, "unknown command '%s'\n%s", cmd.c_str(), kUsage);
        return 2;
    } catch (const ArgError& e) {
        std::fprintf(stderr, "error: %s\n%s", e.what(), kUsage);
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
}
