// Timing harness for the batch kernels: serial reference vs OpenMP, with a
// bitwise equality check between the two paths.

#include <chrono>
#include <cstdio>
#include <cstring>
#include <string>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "gdt/appearance.hpp"
#include "gdt/net.hpp"
#include "gdt/rng.hpp"

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

gdt::ImageBuffer random_patch(int size, gdt::Rng& rng) {
    gdt::ImageBuffer img;
    img.width = size;
    img.height = size;
    img.channels = 1;
    img.data.resize(static_cast<std::size_t>(size) * size);
    for (auto& v : img.data) v = static_cast<std::uint8_t>(rng.uniform_int(0, 255));
    return img;
}

template <typename F>
double time_best_of(int reps, F&& fn) {
    double best = 1e300;
    for (int r = 0; r < reps; ++r) {
        const auto t0 = Clock::now();
        fn();
        best = std::min(best, seconds_since(t0));
    }
    return best;
}

void row(const char* name, double serial_s, double parallel_s, bool equal) {
    std::printf("%-22s %10.1f ms %10.1f ms %8.2fx   %s\n", name, serial_s * 1e3, parallel_s * 1e3,
                serial_s / parallel_s, equal ? "bit-equal" : "MISMATCH");
}

} // namespace

int main(int argc, char** argv) {
    int n_patches = 256;
    int reps = 3;
    for (int i = 1; i < argc; ++i) {
        if (std::strcmp(argv[i], "--quick") == 0) {
            n_patches = 48;
            reps = 1;
        } else if (std::strcmp(argv[i], "--patches") == 0 && i + 1 < argc) {
            n_patches = std::atoi(argv[++i]);
        } else if (std::strcmp(argv[i], "--reps") == 0 && i + 1 < argc) {
            reps = std::atoi(argv[++i]);
        } else {
            std::fprintf(stderr, "usage: gdt-bench [--quick] [--patches N] [--reps N]\n");
            return 2;
        }
    }

#ifdef _OPENMP
    std::printf("OpenMP: %d threads\n", omp_get_max_threads());
#else
    std::printf("OpenMP: compiled out, both paths run serially\n");
#endif

    gdt::NetworkConfig cfg; // library defaults
    const gdt::Network net = gdt::init_network(cfg, 7);
    gdt::Rng rng(11);
    std::vector<gdt::ImageBuffer> patches;
    for (int i = 0; i < n_patches; ++i) patches.push_back(random_patch(cfg.input_size, rng));

    std::printf("%d patches of %dx%d, best of %d reps\n\n", n_patches, cfg.input_size,
                cfg.input_size, reps);
    std::printf("%-22s %13s %13s %9s\n", "kernel", "serial", "parallel", "speedup");

    std::vector<std::vector<double>> conv_s, conv_p;
    const double t_conv_s =
        time_best_of(reps, [&] { conv_s = gdt::conv_features_batch(net, patches, gdt::Exec::Serial); });
    const double t_conv_p =
        time_best_of(reps, [&] { conv_p = gdt::conv_features_batch(net, patches, gdt::Exec::Parallel); });
    row("conv_features_batch", t_conv_s, t_conv_p, conv_s == conv_p);

    std::vector<gdt::ForwardCache> fc_s, fc_p;
    const double t_fc_s =
        time_best_of(reps, [&] { fc_s = gdt::fc_forward_batch(net, conv_s, gdt::Exec::Serial); });
    const double t_fc_p =
        time_best_of(reps, [&] { fc_p = gdt::fc_forward_batch(net, conv_p, gdt::Exec::Parallel); });
    bool fc_equal = fc_s.size() == fc_p.size();
    for (std::size_t i = 0; fc_equal && i < fc_s.size(); ++i) fc_equal = fc_s[i].x == fc_p[i].x;
    row("fc_forward_batch", t_fc_s, t_fc_p, fc_equal);

    std::vector<gdt::FeatureVector> feats(fc_s.size());
    for (std::size_t i = 0; i < fc_s.size(); ++i) feats[i] = fc_s[i].x;
    gdt::AppearanceModel model;
    model.pos.mu.assign(cfg.feature_dim, 0.1);
    model.pos.var.assign(cfg.feature_dim, 0.5);
    model.neg.mu.assign(cfg.feature_dim, -0.1);
    model.neg.var.assign(cfg.feature_dim, 0.8);
    std::vector<double> sc_s, sc_p;
    const double t_sc_s =
        time_best_of(reps, [&] { sc_s = gdt::score_batch(model, feats, gdt::Exec::Serial); });
    const double t_sc_p =
        time_best_of(reps, [&] { sc_p = gdt::score_batch(model, feats, gdt::Exec::Parallel); });
    row("score_batch", t_sc_s, t_sc_p, sc_s == sc_p);

    const bool all_equal = conv_s == conv_p && fc_equal && sc_s == sc_p;
    std::printf("\n%s\n", all_equal ? "serial and parallel paths agree bitwise"
                                    : "ERROR: serial and parallel paths disagree");
    return all_equal ? 0 : 1;
}
