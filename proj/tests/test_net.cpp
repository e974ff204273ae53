#include <cmath>
#include <fstream>

#include "doctest.h"

#include "gdt/errors.hpp"
#include "gdt/net.hpp"
#include "test_util.hpp"

using namespace gdt;

namespace {

NetworkConfig miniature_config() {
    NetworkConfig cfg;
    cfg.input_size = 8;
    cfg.conv_spec = {{3, 1, 2}};
    cfg.fc6_dim = 5;
    cfg.feature_dim = 4;
    return cfg;
}

// independent oracle: central finite differences of L(theta) = dot(x, g)
// over every fc parameter, evaluated with full forward passes
struct FdCheck {
    double max_rel_err = 0.0;
    int checked = 0;
};

double loss_of(const Network& net, const ImageBuffer& patch, const FeatureVector& g) {
    const auto [x, cache] = forward_features(net, patch);
    double l = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) l += x[i] * g[i];
    return l;
}

FdCheck fd_check_fc(Network net, const ImageBuffer& patch, const FeatureVector& g, double h) {
    const auto [x, cache] = forward_features(net, patch);
    const FcGradients analytic = backward_fc(net, cache, g);

    FdCheck result;
    auto probe = [&](std::vector<double>& params, const std::vector<double>& grad) {
        for (std::size_t i = 0; i < params.size(); ++i) {
            const double saved = params[i];
            params[i] = saved + h;
            const double lp = loss_of(net, patch, g);
            params[i] = saved - h;
            const double lm = loss_of(net, patch, g);
            params[i] = saved;
            const double fd = (lp - lm) / (2.0 * h);
            const double a = grad[i];
            const double rel = std::abs(a - fd) / std::max({std::abs(a), std::abs(fd), 1e-6});
            result.max_rel_err = std::max(result.max_rel_err, rel);
            ++result.checked;
        }
    };
    probe(net.fc6_w, analytic.fc6_w);
    probe(net.fc6_b, analytic.fc6_b);
    probe(net.fc7_w, analytic.fc7_w);
    probe(net.fc7_b, analytic.fc7_b);
    return result;
}

// pre-activations near zero make finite differences ill-defined across the
// ReLU kink; redraw until the margins are comfortable
bool safe_margins(const ForwardCache& cache, double margin) {
    for (double z : cache.z6) {
        if (std::abs(z) < margin) return false;
    }
    for (double z : cache.z7) {
        if (std::abs(z) < margin) return false;
    }
    return true;
}

} // namespace

TEST_CASE("init_network is deterministic in the seed") {
    const NetworkConfig cfg = miniature_config();
    const Network a = init_network(cfg, 123);
    const Network b = init_network(cfg, 123);
    CHECK(a == b);
    const Network c = init_network(cfg, 124);
    CHECK_FALSE(a == c);
    // biases start at zero, weights within the fan-in bound
    for (double v : a.fc6_b) CHECK(v == 0.0);
    const double bound = std::sqrt(6.0 / static_cast<double>(cfg.fc6_dim));
    for (double v : a.fc7_w) CHECK(std::abs(v) <= bound);
}

TEST_CASE("collapsing config is rejected with the stage named") {
    NetworkConfig cfg = miniature_config();
    cfg.input_size = 6;
    cfg.conv_spec = {{3, 1, 2}, {3, 1, 2}}; // 6 -> 4 -> 2 -> 0 after second pool
    CHECK_THROWS_WITH_AS(cfg.validate(), doctest::Contains("stage 2"), ConfigError);
}

TEST_CASE("all-zero patch with zero biases maps to exact zeros") {
    const NetworkConfig cfg = miniature_config();
    const Network net = init_network(cfg, 9);
    ImageBuffer patch;
    patch.width = patch.height = cfg.input_size;
    patch.channels = 1;
    patch.data.assign(64, 0);
    const auto [x, cache] = forward_features(net, patch);
    REQUIRE(static_cast<int>(x.size()) == cfg.feature_dim);
    for (double v : x) CHECK(v == 0.0);
}

TEST_CASE("forward shape contract") {
    const NetworkConfig cfg = miniature_config();
    const Network net = init_network(cfg, 1);
    gdt::Rng rng(2);
    for (int i = 0; i < 5; ++i) {
        const ImageBuffer patch = testutil::random_image(8, 8, rng);
        const auto [x, cache] = forward_features(net, patch);
        REQUIRE(static_cast<int>(x.size()) == cfg.feature_dim);
        for (double v : x) CHECK(std::isfinite(v));
    }
    const ImageBuffer wrong = testutil::random_image(9, 8, rng);
    CHECK_THROWS_AS(forward_features(net, wrong), DimensionError);
}

TEST_CASE("miniature forward matches a hand computation") {
    NetworkConfig cfg;
    cfg.input_size = 4;
    cfg.conv_spec = {{3, 1, 1}};
    cfg.fc6_dim = 1;
    cfg.feature_dim = 1;
    Network net = init_network(cfg, 0);
    // hand-set weights
    net.conv_w[0].assign(9, 1.0);
    net.conv_b[0] = {0.1};
    net.fc6_w = {0.5};
    net.fc6_b = {0.2};
    net.fc7_w = {2.0};
    net.fc7_b = {-0.3};

    ImageBuffer patch;
    patch.width = patch.height = 4;
    patch.channels = 1;
    patch.data.resize(16);
    for (int i = 0; i < 16; ++i) patch.data[i] = static_cast<std::uint8_t>(16 * i);

    // conv windows sum the normalized 3x3 neighbourhoods; the bottom-right
    // window has the largest sum and wins the 2x2 max-pool:
    //   sum = (80+96+112+144+160+176+208+224+240)/255 = 1440/255
    const double pooled = 0.1 + 1440.0 / 255.0;
    const double h6 = 0.2 + 0.5 * pooled;
    const double expected = 2.0 * h6 - 0.3;

    const auto [x, cache] = forward_features(net, patch);
    CHECK(x[0] == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("backward_fc base cases") {
    const NetworkConfig cfg = miniature_config();
    const Network net = init_network(cfg, 5);
    gdt::Rng rng(6);
    const ImageBuffer patch = testutil::random_image(8, 8, rng);
    const auto [x, cache] = forward_features(net, patch);

    SUBCASE("zero upstream gradient gives exactly zero gradients") {
        const FcGradients g = backward_fc(net, cache, FeatureVector(cfg.feature_dim, 0.0));
        for (double v : g.fc6_w) CHECK(v == 0.0);
        for (double v : g.fc7_w) CHECK(v == 0.0);
        for (double v : g.fc6_b) CHECK(v == 0.0);
        for (double v : g.fc7_b) CHECK(v == 0.0);
    }

    SUBCASE("last-layer weight gradient is the outer product chain-rule base case") {
        FeatureVector g(cfg.feature_dim);
        for (auto& v : g) v = rng.uniform(-1.0, 1.0);
        const FcGradients grads = backward_fc(net, cache, g);
        for (int i = 0; i < cfg.feature_dim; ++i) {
            const double dz = cache.z7[i] > 0.0 ? g[i] : 0.0;
            for (int j = 0; j < cfg.fc6_dim; ++j) {
                CHECK(grads.fc7_w[static_cast<std::size_t>(i) * cfg.fc6_dim + j] ==
                      dz * cache.h6[j]);
            }
            CHECK(grads.fc7_b[i] == dz);
        }
    }

    SUBCASE("stale cache is rejected after an update") {
        Network updated = net;
        FcGradients g;
        g.fc6_w.assign(net.fc6_w.size(), 0.0);
        g.fc6_b.assign(net.fc6_b.size(), 0.0);
        g.fc7_w.assign(net.fc7_w.size(), 0.0);
        g.fc7_b.assign(net.fc7_b.size(), 0.0);
        apply_sgd(updated, g, 0.1);
        CHECK_THROWS_WITH_AS(backward_fc(updated, cache, FeatureVector(cfg.feature_dim, 1.0)),
                             doctest::Contains("stale"), DimensionError);
    }
}

TEST_CASE("backward_fc agrees with central finite differences") {
    int nets_checked = 0;
    std::uint64_t seed = 100;
    while (nets_checked < 5) {
        const Network net = init_network(miniature_config(), seed);
        gdt::Rng rng(seed * 31 + 1);
        const ImageBuffer patch = testutil::random_image(8, 8, rng);
        const auto [x, cache] = forward_features(net, patch);
        ++seed;
        if (!safe_margins(cache, 0.05)) continue;
        FeatureVector g(x.size());
        for (auto& v : g) v = rng.uniform(-1.0, 1.0);
        const FdCheck fd = fd_check_fc(net, patch, g, 1e-3);
        CHECK(fd.max_rel_err < 1e-4);
        CHECK(fd.checked > 0);
        ++nets_checked;
    }
}

TEST_CASE("apply_sgd contract") {
    const NetworkConfig cfg = miniature_config();
    Network net = init_network(cfg, 11);
    const Network before = net;

    FcGradients zero;
    zero.fc6_w.assign(net.fc6_w.size(), 0.0);
    zero.fc6_b.assign(net.fc6_b.size(), 0.0);
    zero.fc7_w.assign(net.fc7_w.size(), 0.0);
    zero.fc7_b.assign(net.fc7_b.size(), 0.0);

    SUBCASE("zero gradients leave the network unchanged") {
        apply_sgd(net, zero, 0.5);
        CHECK(net == before);
    }
    SUBCASE("learning rate zero violates the precondition") {
        CHECK_THROWS_AS(apply_sgd(net, zero, 0.0), ConfigError);
        CHECK_THROWS_AS(apply_sgd(net, zero, -1.0), ConfigError);
    }
    SUBCASE("w=1, grad=2, lr=0.1 gives w=0.8") {
        net.fc7_w[0] = 1.0;
        FcGradients g = zero;
        g.fc7_w[0] = 2.0;
        apply_sgd(net, g, 0.1);
        CHECK(net.fc7_w[0] == doctest::Approx(0.8).epsilon(1e-15));
    }
    SUBCASE("non-finite gradients are rejected and nothing changes") {
        FcGradients g = zero;
        g.fc6_w[0] = std::numeric_limits<double>::quiet_NaN();
        CHECK_THROWS_AS(apply_sgd(net, g, 0.1), NumericError);
        CHECK(net == before);
    }
}

TEST_CASE("conv parameters stay frozen through fc updates") {
    const NetworkConfig cfg = miniature_config();
    Network net = init_network(cfg, 21);
    const auto conv_w0 = net.conv_w;
    const auto conv_b0 = net.conv_b;
    gdt::Rng rng(22);
    for (int step = 0; step < 20; ++step) {
        FcGradients g;
        g.fc6_w.resize(net.fc6_w.size());
        g.fc6_b.resize(net.fc6_b.size());
        g.fc7_w.resize(net.fc7_w.size());
        g.fc7_b.resize(net.fc7_b.size());
        for (auto* v : {&g.fc6_w, &g.fc6_b, &g.fc7_w, &g.fc7_b}) {
            for (auto& e : *v) e = rng.uniform(-1.0, 1.0);
        }
        apply_sgd(net, g, 0.01);
    }
    CHECK(net.conv_w == conv_w0);
    CHECK(net.conv_b == conv_b0);
    CHECK(net.revision == 20);
}

TEST_CASE("weight file round trip is bit-exact") {
    const std::string dir = testutil::scratch_dir("weights");
    const Network net = init_network(miniature_config(), 77);
    const std::string path = dir + "/w.gdtw";
    save_weights(net, path);
    const Network loaded = load_weights(path);
    CHECK(loaded == net);
}

TEST_CASE("weight file error paths") {
    const std::string dir = testutil::scratch_dir("weights_err");
    const Network net = init_network(miniature_config(), 78);
    const std::string path = dir + "/w.gdtw";
    save_weights(net, path);

    SUBCASE("truncation reports the byte offset") {
        const std::string bytes = testutil::read_bytes(path);
        testutil::write_bytes(dir + "/trunc.gdtw", bytes.substr(0, bytes.size() / 2));
        CHECK_THROWS_WITH_AS(load_weights(dir + "/trunc.gdtw"), doctest::Contains("byte offset"),
                             FormatError);
    }
    SUBCASE("wrong magic") {
        std::string bytes = testutil::read_bytes(path);
        bytes[0] = 'X';
        testutil::write_bytes(dir + "/magic.gdtw", bytes);
        CHECK_THROWS_WITH_AS(load_weights(dir + "/magic.gdtw"), doctest::Contains("magic"),
                             FormatError);
    }
    SUBCASE("extra tensor is rejected") {
        auto tensors = network_tensors(net);
        tensors.push_back({"gauss_pos/mu", {2}, {0.0, 0.0}});
        std::ofstream out(dir + "/extra.gdtw", std::ios::binary);
        write_gdtw(out, tensors);
        out.close();
        CHECK_THROWS_WITH_AS(load_weights(dir + "/extra.gdtw"), doctest::Contains("unexpected"),
                             FormatError);
    }
    SUBCASE("shape mismatch against the header") {
        auto tensors = network_tensors(net);
        for (auto& t : tensors) {
            if (t.name == "fc7.bias") {
                t.dims = {static_cast<std::uint32_t>(t.values.size() + 1)};
                t.values.push_back(0.0);
            }
        }
        std::ofstream out(dir + "/shape.gdtw", std::ios::binary);
        write_gdtw(out, tensors);
        out.close();
        CHECK_THROWS_WITH_AS(load_weights(dir + "/shape.gdtw"), doctest::Contains("fc7.bias"),
                             FormatError);
    }
}

TEST_CASE("serial and parallel batch paths are bit-identical") {
    const Network net = init_network(miniature_config(), 31);
    gdt::Rng rng(32);
    std::vector<ImageBuffer> patches;
    for (int i = 0; i < 17; ++i) patches.push_back(testutil::random_image(8, 8, rng));
    const auto serial = conv_features_batch(net, patches, Exec::Serial);
    const auto parallel = conv_features_batch(net, patches, Exec::Parallel);
    CHECK(serial == parallel);

    const auto fc_serial = fc_forward_batch(net, serial, Exec::Serial);
    const auto fc_parallel = fc_forward_batch(net, parallel, Exec::Parallel);
    REQUIRE(fc_serial.size() == fc_parallel.size());
    for (std::size_t i = 0; i < fc_serial.size(); ++i) {
        CHECK(fc_serial[i].x == fc_parallel[i].x);
    }
}

TEST_CASE("full backward matches finite differences on every parameter") {
    NetworkConfig cfg;
    cfg.input_size = 8;
    cfg.conv_spec = {{3, 1, 2}};
    cfg.fc6_dim = 4;
    cfg.feature_dim = 3;

    int nets_checked = 0;
    std::uint64_t seed = 300;
    while (nets_checked < 2) {
        Network net = init_network(cfg, seed);
        gdt::Rng rng(seed + 1);
        const ImageBuffer patch = testutil::random_image(8, 8, rng);
        const FullCache cache = forward_full(net, patch);
        ++seed;
        if (!safe_margins(cache.fc, 0.05)) continue;

        FeatureVector g(cfg.feature_dim);
        for (auto& v : g) v = rng.uniform(-1.0, 1.0);
        const FullGradients analytic = backward_full(net, cache, g);

        const double h = 1e-4;
        double max_rel = 0.0;
        auto probe = [&](std::vector<double>& params, const std::vector<double>& grad) {
            for (std::size_t i = 0; i < params.size(); ++i) {
                const double saved = params[i];
                params[i] = saved + h;
                const double lp = loss_of(net, patch, g);
                params[i] = saved - h;
                const double lm = loss_of(net, patch, g);
                params[i] = saved;
                const double fd = (lp - lm) / (2.0 * h);
                const double rel =
                    std::abs(grad[i] - fd) / std::max({std::abs(grad[i]), std::abs(fd), 1e-5});
                max_rel = std::max(max_rel, rel);
            }
        };
        probe(net.conv_w[0], analytic.conv_w[0]);
        probe(net.conv_b[0], analytic.conv_b[0]);
        probe(net.fc6_w, analytic.fc.fc6_w);
        probe(net.fc7_w, analytic.fc.fc7_w);
        CHECK(max_rel < 1e-4);
        ++nets_checked;
    }
}
