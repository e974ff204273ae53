#include "gdt/net.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>

#include "gdt/errors.hpp"
#include "gdt/rng.hpp"
#include "omp_util.hpp"

namespace gdt {

// ---------------------------------------------------------------------------
// config

void NetworkConfig::validate() const {
    if (input_size < 1) throw ConfigError("input_size must be >= 1");
    if (input_channels != 1 && input_channels != 3) {
        throw ConfigError("input_channels must be 1 or 3");
    }
    if (conv_spec.empty()) throw ConfigError("conv_spec must have at least one stage");
    if (fc6_dim < 1 || feature_dim < 1) throw ConfigError("fc dims must be >= 1");
    int side = input_size;
    for (std::size_t s = 0; s < conv_spec.size(); ++s) {
        const ConvStage& st = conv_spec[s];
        const std::string where = "conv stage " + std::to_string(s + 1);
        if (st.kernel < 1 || st.stride < 1 || st.out_channels < 1) {
            throw ConfigError(where + ": kernel, stride and out_channels must be >= 1");
        }
        if (side < st.kernel) {
            throw ConfigError(where + ": spatial size " + std::to_string(side) +
                              " is smaller than kernel " + std::to_string(st.kernel));
        }
        side = (side - st.kernel) / st.stride + 1;
        side /= 2; // 2x2 max-pool, stride 2, floor
        if (side < 1) {
            throw ConfigError(where + ": spatial size collapses below 1 after pooling");
        }
    }
}

std::vector<int> NetworkConfig::stage_sizes() const {
    validate();
    std::vector<int> sizes;
    int side = input_size;
    for (const ConvStage& st : conv_spec) {
        side = (side - st.kernel) / st.stride + 1;
        side /= 2;
        sizes.push_back(side);
    }
    return sizes;
}

int NetworkConfig::conv_output_size() const {
    const auto sizes = stage_sizes();
    const int side = sizes.back();
    return side * side * conv_spec.back().out_channels;
}

// ---------------------------------------------------------------------------
// init

Network init_network(const NetworkConfig& config, std::uint64_t seed) {
    config.validate();
    Network net;
    net.config = config;
    Rng rng(seed);

    // uniform bound sqrt(6/fan_in) keeps activation magnitudes roughly
    // constant through the ReLU stack, so fitted feature variances stay
    // clear of the density floor
    auto uniform_fan_in = [&rng](std::vector<double>& w, std::size_t n, int fan_in) {
        const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
        w.resize(n);
        for (auto& v : w) v = rng.uniform(-bound, bound);
    };

    int in_c = config.input_channels;
    for (const ConvStage& st : config.conv_spec) {
        std::vector<double> w, b;
        const std::size_t n = static_cast<std::size_t>(st.out_channels) * in_c * st.kernel * st.kernel;
        uniform_fan_in(w, n, in_c * st.kernel * st.kernel);
        b.assign(st.out_channels, 0.0);
        net.conv_w.push_back(std::move(w));
        net.conv_b.push_back(std::move(b));
        in_c = st.out_channels;
    }
    const int conv_out = config.conv_output_size();
    uniform_fan_in(net.fc6_w, static_cast<std::size_t>(config.fc6_dim) * conv_out, conv_out);
    net.fc6_b.assign(config.fc6_dim, 0.0);
    uniform_fan_in(net.fc7_w, static_cast<std::size_t>(config.feature_dim) * config.fc6_dim, config.fc6_dim);
    net.fc7_b.assign(config.feature_dim, 0.0);
    return net;
}

// ---------------------------------------------------------------------------
// kernels

namespace {

// valid convolution, plane-major [c][y][x]; out must be pre-sized, bias-filled.
// The stride-1 nest keeps the inner loads contiguous so it vectorizes.
void conv_valid(const double* in, int ic, int ih, int iw,
                const double* wt, int oc, int k, int stride,
                double* out, int oh, int ow) {
    for (int o = 0; o < oc; ++o) {
        for (int c = 0; c < ic; ++c) {
            for (int ky = 0; ky < k; ++ky) {
                for (int kx = 0; kx < k; ++kx) {
                    const double wv = wt[((static_cast<std::size_t>(o) * ic + c) * k + ky) * k + kx];
                    if (stride == 1) {
                        for (int y = 0; y < oh; ++y) {
                            const double* ip = in + (static_cast<std::size_t>(c) * ih + y + ky) * iw + kx;
                            double* op = out + (static_cast<std::size_t>(o) * oh + y) * ow;
                            for (int x = 0; x < ow; ++x) {
                                op[x] += wv * ip[x];
                            }
                        }
                    } else {
                        for (int y = 0; y < oh; ++y) {
                            const double* ip =
                                in + (static_cast<std::size_t>(c) * ih + y * stride + ky) * iw + kx;
                            double* op = out + (static_cast<std::size_t>(o) * oh + y) * ow;
                            for (int x = 0; x < ow; ++x) {
                                op[x] += wv * ip[x * stride];
                            }
                        }
                    }
                }
            }
        }
    }
}

void fill_bias(double* out, const double* bias, int oc, int plane) {
    for (int o = 0; o < oc; ++o) {
        std::fill(out + static_cast<std::size_t>(o) * plane,
                  out + static_cast<std::size_t>(o) * plane + plane, bias[o]);
    }
}

// 2x2 max-pool, stride 2; optionally records the argmax flat index per cell.
// Ties take the first element in scan order.
void maxpool2(const double* in, int c, int h, int w, double* out, int* argmax) {
    const int oh = h / 2, ow = w / 2;
    for (int ch = 0; ch < c; ++ch) {
        const double* plane = in + static_cast<std::size_t>(ch) * h * w;
        const std::size_t base = static_cast<std::size_t>(ch) * h * w;
        for (int y = 0; y < oh; ++y) {
            for (int x = 0; x < ow; ++x) {
                int best = (2 * y) * w + 2 * x;
                double bv = plane[best];
                const int cands[3] = {(2 * y) * w + 2 * x + 1, (2 * y + 1) * w + 2 * x,
                                      (2 * y + 1) * w + 2 * x + 1};
                for (int idx : cands) {
                    if (plane[idx] > bv) {
                        bv = plane[idx];
                        best = idx;
                    }
                }
                const std::size_t oi = (static_cast<std::size_t>(ch) * oh + y) * ow + x;
                out[oi] = bv;
                if (argmax) argmax[oi] = static_cast<int>(base) + best;
            }
        }
    }
}

std::vector<double> normalize_patch(const NetworkConfig& cfg, const ImageBuffer& patch) {
    if (patch.width != cfg.input_size || patch.height != cfg.input_size ||
        patch.channels != cfg.input_channels) {
        throw DimensionError("forward: patch is " + std::to_string(patch.width) + "x" +
                             std::to_string(patch.height) + "x" + std::to_string(patch.channels) +
                             ", network expects " + std::to_string(cfg.input_size) + "x" +
                             std::to_string(cfg.input_size) + "x" + std::to_string(cfg.input_channels));
    }
    // bytes -> [0,1]; plane-major
    const int n = cfg.input_size, c = cfg.input_channels;
    std::vector<double> out(static_cast<std::size_t>(c) * n * n);
    for (int ch = 0; ch < c; ++ch) {
        for (int y = 0; y < n; ++y) {
            for (int x = 0; x < n; ++x) {
                out[(static_cast<std::size_t>(ch) * n + y) * n + x] = patch.at(x, y, ch) / 255.0;
            }
        }
    }
    return out;
}

// runs the conv stack; when caches != nullptr the per-stage activations are
// recorded for the full backward pass
std::vector<double> conv_stack(const Network& net, std::vector<double> input,
                               std::vector<StageCache>* caches) {
    const NetworkConfig& cfg = net.config;
    int side = cfg.input_size;
    int in_c = cfg.input_channels;
    std::vector<double> cur = std::move(input);
    for (std::size_t s = 0; s < cfg.conv_spec.size(); ++s) {
        const ConvStage& st = cfg.conv_spec[s];
        const int ch = (side - st.kernel) / st.stride + 1;
        const int ph = ch / 2;
        std::vector<double> conv_out(static_cast<std::size_t>(st.out_channels) * ch * ch);
        fill_bias(conv_out.data(), net.conv_b[s].data(), st.out_channels, ch * ch);
        conv_valid(cur.data(), in_c, side, side, net.conv_w[s].data(), st.out_channels,
                   st.kernel, st.stride, conv_out.data(), ch, ch);

        StageCache* sc = nullptr;
        if (caches) {
            caches->push_back({});
            sc = &caches->back();
            sc->input = cur;
            sc->pre_relu = conv_out;
        }
        for (auto& v : conv_out) v = v > 0.0 ? v : 0.0;

        std::vector<double> pooled(static_cast<std::size_t>(st.out_channels) * ph * ph);
        if (sc) sc->pool_src.resize(pooled.size());
        maxpool2(conv_out.data(), st.out_channels, ch, ch, pooled.data(),
                 sc ? sc->pool_src.data() : nullptr);

        cur = std::move(pooled);
        side = ph;
        in_c = st.out_channels;
    }
    return cur;
}

void matvec(const double* w, const double* in, const double* bias, double* out,
            int rows, int cols) {
    for (int i = 0; i < rows; ++i) {
        const double* row = w + static_cast<std::size_t>(i) * cols;
        double acc = bias[i];
        for (int j = 0; j < cols; ++j) acc += row[j] * in[j];
        out[i] = acc;
    }
}

} // namespace

std::vector<double> conv_features(const Network& net, const ImageBuffer& patch) {
    // hot path: candidate scoring runs this hundreds of times per frame, so
    // the stage buffers ping-pong through thread-local scratch instead of
    // allocating; only the small final stage output is copied out
    thread_local std::vector<double> buf_in, buf_conv, buf_pool;
    const NetworkConfig& cfg = net.config;

    {
        if (patch.width != cfg.input_size || patch.height != cfg.input_size ||
            patch.channels != cfg.input_channels) {
            throw DimensionError("forward: patch is " + std::to_string(patch.width) + "x" +
                                 std::to_string(patch.height) + "x" + std::to_string(patch.channels) +
                                 ", network expects " + std::to_string(cfg.input_size) + "x" +
                                 std::to_string(cfg.input_size) + "x" +
                                 std::to_string(cfg.input_channels));
        }
        const int n = cfg.input_size, c = cfg.input_channels;
        buf_in.resize(static_cast<std::size_t>(c) * n * n);
        for (int ch = 0; ch < c; ++ch) {
            for (int y = 0; y < n; ++y) {
                for (int x = 0; x < n; ++x) {
                    buf_in[(static_cast<std::size_t>(ch) * n + y) * n + x] = patch.at(x, y, ch) / 255.0;
                }
            }
        }
    }

    std::vector<double>* cur = &buf_in;
    std::vector<double>* conv = &buf_conv;
    std::vector<double>* pool = &buf_pool;
    int side = cfg.input_size;
    int in_c = cfg.input_channels;
    for (std::size_t s = 0; s < cfg.conv_spec.size(); ++s) {
        const ConvStage& st = cfg.conv_spec[s];
        const int ch = (side - st.kernel) / st.stride + 1;
        const int ph = ch / 2;
        conv->resize(static_cast<std::size_t>(st.out_channels) * ch * ch);
        fill_bias(conv->data(), net.conv_b[s].data(), st.out_channels, ch * ch);
        conv_valid(cur->data(), in_c, side, side, net.conv_w[s].data(), st.out_channels,
                   st.kernel, st.stride, conv->data(), ch, ch);
        for (auto& v : *conv) v = v > 0.0 ? v : 0.0;
        pool->resize(static_cast<std::size_t>(st.out_channels) * ph * ph);
        maxpool2(conv->data(), st.out_channels, ch, ch, pool->data(), nullptr);
        std::swap(cur, pool);
        side = ph;
        in_c = st.out_channels;
    }
    return *cur;
}

void fc_forward_into(const Network& net, const std::vector<double>& conv_flat, ForwardCache& cache) {
    const NetworkConfig& cfg = net.config;
    const int conv_out = cfg.conv_output_size();
    if (static_cast<int>(conv_flat.size()) != conv_out) {
        throw DimensionError("fc_forward: conv features have length " +
                             std::to_string(conv_flat.size()) + ", expected " +
                             std::to_string(conv_out));
    }
    cache.conv_flat = conv_flat;
    cache.z6.resize(cfg.fc6_dim);
    matvec(net.fc6_w.data(), cache.conv_flat.data(), net.fc6_b.data(), cache.z6.data(),
           cfg.fc6_dim, conv_out);
    cache.h6 = cache.z6;
    for (auto& v : cache.h6) v = v > 0.0 ? v : 0.0;
    cache.z7.resize(cfg.feature_dim);
    matvec(net.fc7_w.data(), cache.h6.data(), net.fc7_b.data(), cache.z7.data(),
           cfg.feature_dim, cfg.fc6_dim);
    cache.x = cache.z7;
    if (cfg.fc7_activation == Fc7Activation::Relu) {
        for (auto& v : cache.x) v = v > 0.0 ? v : 0.0;
    }
    cache.revision = net.revision;
}

ForwardCache fc_forward(const Network& net, std::vector<double> conv_flat) {
    ForwardCache cache;
    fc_forward_into(net, conv_flat, cache);
    return cache;
}

std::pair<FeatureVector, ForwardCache> forward_features(const Network& net, const ImageBuffer& patch) {
    ForwardCache cache = fc_forward(net, conv_features(net, patch));
    return {cache.x, std::move(cache)};
}

// ---------------------------------------------------------------------------
// fc backward

namespace {

// shared by backward_fc and backward_full; optionally emits d(conv_flat)
FcGradients fc_backward_impl(const Network& net, const ForwardCache& cache,
                             const FeatureVector& grad_x, std::vector<double>* d_conv_flat) {
    const NetworkConfig& cfg = net.config;
    if (cache.revision != net.revision) {
        throw DimensionError("backward_fc: stale forward cache (network revision " +
                             std::to_string(net.revision) + ", cache revision " +
                             std::to_string(cache.revision) + ")");
    }
    if (static_cast<int>(grad_x.size()) != cfg.feature_dim ||
        static_cast<int>(cache.z7.size()) != cfg.feature_dim ||
        static_cast<int>(cache.z6.size()) != cfg.fc6_dim ||
        static_cast<int>(cache.conv_flat.size()) != cfg.conv_output_size()) {
        throw DimensionError("backward_fc: cache or gradient shape mismatch");
    }
    const int nf = cfg.feature_dim, n6 = cfg.fc6_dim;
    const int nc = cfg.conv_output_size();

    std::vector<double> dz7(nf);
    for (int i = 0; i < nf; ++i) {
        // ReLU derivative taken as 0 at exactly 0
        const bool live = cfg.fc7_activation == Fc7Activation::Identity || cache.z7[i] > 0.0;
        dz7[i] = live ? grad_x[i] : 0.0;
    }

    FcGradients g;
    g.fc7_b = dz7;
    g.fc7_w.resize(static_cast<std::size_t>(nf) * n6);
    for (int i = 0; i < nf; ++i) {
        for (int j = 0; j < n6; ++j) {
            g.fc7_w[static_cast<std::size_t>(i) * n6 + j] = dz7[i] * cache.h6[j];
        }
    }

    std::vector<double> dz6(n6, 0.0);
    for (int i = 0; i < nf; ++i) {
        const double d = dz7[i];
        if (d == 0.0) continue;
        const double* row = net.fc7_w.data() + static_cast<std::size_t>(i) * n6;
        for (int j = 0; j < n6; ++j) dz6[j] += row[j] * d;
    }
    for (int j = 0; j < n6; ++j) {
        if (!(cache.z6[j] > 0.0)) dz6[j] = 0.0;
    }

    g.fc6_b = dz6;
    g.fc6_w.resize(static_cast<std::size_t>(n6) * nc);
    for (int j = 0; j < n6; ++j) {
        const double d = dz6[j];
        double* row = g.fc6_w.data() + static_cast<std::size_t>(j) * nc;
        if (d == 0.0) {
            std::fill(row, row + nc, 0.0);
            continue;
        }
        for (int l = 0; l < nc; ++l) row[l] = d * cache.conv_flat[l];
    }

    if (d_conv_flat) {
        d_conv_flat->assign(nc, 0.0);
        for (int j = 0; j < n6; ++j) {
            const double d = dz6[j];
            if (d == 0.0) continue;
            const double* row = net.fc6_w.data() + static_cast<std::size_t>(j) * nc;
            for (int l = 0; l < nc; ++l) (*d_conv_flat)[l] += row[l] * d;
        }
    }
    return g;
}

bool all_finite(const std::vector<double>& v) {
    for (double x : v) {
        if (!std::isfinite(x)) return false;
    }
    return true;
}

void axpy(std::vector<double>& y, const std::vector<double>& x, double a) {
    for (std::size_t i = 0; i < y.size(); ++i) y[i] += a * x[i];
}

void add_into(std::vector<double>& y, const std::vector<double>& x) {
    if (y.empty()) {
        y = x;
        return;
    }
    for (std::size_t i = 0; i < y.size(); ++i) y[i] += x[i];
}

} // namespace

FcGradients backward_fc(const Network& net, const ForwardCache& cache, const FeatureVector& grad_x) {
    return fc_backward_impl(net, cache, grad_x, nullptr);
}

void accumulate_backward_fc(const Network& net, const ForwardCache& cache,
                            const FeatureVector& grad_x, FcGradients& acc) {
    const NetworkConfig& cfg = net.config;
    if (cache.revision != net.revision) {
        throw DimensionError("backward_fc: stale forward cache (network revision " +
                             std::to_string(net.revision) + ", cache revision " +
                             std::to_string(cache.revision) + ")");
    }
    if (static_cast<int>(grad_x.size()) != cfg.feature_dim ||
        static_cast<int>(cache.conv_flat.size()) != cfg.conv_output_size()) {
        throw DimensionError("backward_fc: cache or gradient shape mismatch");
    }
    const int nf = cfg.feature_dim, n6 = cfg.fc6_dim;
    const int nc = cfg.conv_output_size();
    if (acc.fc6_w.empty()) {
        acc.fc6_w.assign(static_cast<std::size_t>(n6) * nc, 0.0);
        acc.fc6_b.assign(n6, 0.0);
        acc.fc7_w.assign(static_cast<std::size_t>(nf) * n6, 0.0);
        acc.fc7_b.assign(nf, 0.0);
    }

    std::vector<double> dz7(nf);
    for (int i = 0; i < nf; ++i) {
        const bool live = cfg.fc7_activation == Fc7Activation::Identity || cache.z7[i] > 0.0;
        dz7[i] = live ? grad_x[i] : 0.0;
    }
    std::vector<double> dz6(n6, 0.0);
    for (int i = 0; i < nf; ++i) {
        const double d = dz7[i];
        if (d == 0.0) continue;
        acc.fc7_b[i] += d;
        const double* w_row = net.fc7_w.data() + static_cast<std::size_t>(i) * n6;
        double* g_row = acc.fc7_w.data() + static_cast<std::size_t>(i) * n6;
        for (int j = 0; j < n6; ++j) {
            g_row[j] += d * cache.h6[j];
            dz6[j] += w_row[j] * d;
        }
    }
    for (int j = 0; j < n6; ++j) {
        if (!(cache.z6[j] > 0.0)) dz6[j] = 0.0;
    }
    for (int j = 0; j < n6; ++j) {
        const double d = dz6[j];
        if (d == 0.0) continue;
        acc.fc6_b[j] += d;
        double* g_row = acc.fc6_w.data() + static_cast<std::size_t>(j) * nc;
        const double* cf = cache.conv_flat.data();
        for (int l = 0; l < nc; ++l) g_row[l] += d * cf[l];
    }
}

FcGradients& FcGradients::operator+=(const FcGradients& o) {
    add_into(fc6_w, o.fc6_w);
    add_into(fc6_b, o.fc6_b);
    add_into(fc7_w, o.fc7_w);
    add_into(fc7_b, o.fc7_b);
    return *this;
}

void FcGradients::scale(double s) {
    for (auto* v : {&fc6_w, &fc6_b, &fc7_w, &fc7_b}) {
        for (auto& x : *v) x *= s;
    }
}

bool FcGradients::finite() const {
    return all_finite(fc6_w) && all_finite(fc6_b) && all_finite(fc7_w) && all_finite(fc7_b);
}

void apply_sgd(Network& net, const FcGradients& grads, double learning_rate) {
    if (!(learning_rate > 0.0)) {
        throw ConfigError("apply_sgd: learning_rate must be > 0");
    }
    if (grads.fc6_w.size() != net.fc6_w.size() || grads.fc6_b.size() != net.fc6_b.size() ||
        grads.fc7_w.size() != net.fc7_w.size() || grads.fc7_b.size() != net.fc7_b.size()) {
        throw DimensionError("apply_sgd: gradient shapes do not match the network");
    }
    if (!grads.finite()) {
        throw NumericError("apply_sgd: non-finite gradient, update rejected");
    }
    axpy(net.fc6_w, grads.fc6_w, -learning_rate);
    axpy(net.fc6_b, grads.fc6_b, -learning_rate);
    axpy(net.fc7_w, grads.fc7_w, -learning_rate);
    axpy(net.fc7_b, grads.fc7_b, -learning_rate);
    ++net.revision;
}

// ---------------------------------------------------------------------------
// full path (pretraining)

FullCache forward_full(const Network& net, const ImageBuffer& patch) {
    FullCache cache;
    auto conv_flat = conv_stack(net, normalize_patch(net.config, patch), &cache.stages);
    cache.fc = fc_forward(net, std::move(conv_flat));
    return cache;
}

FullGradients backward_full(const Network& net, const FullCache& cache, const FeatureVector& grad_x) {
    const NetworkConfig& cfg = net.config;
    FullGradients g;
    std::vector<double> d_flat;
    g.fc = fc_backward_impl(net, cache.fc, grad_x, &d_flat);

    g.conv_w.resize(cfg.conv_spec.size());
    g.conv_b.resize(cfg.conv_spec.size());

    // walk the stages backwards; d_flat is the gradient of the last pool output
    std::vector<double> d_pool = std::move(d_flat);
    for (int s = static_cast<int>(cfg.conv_spec.size()) - 1; s >= 0; --s) {
        const ConvStage& st = cfg.conv_spec[s];
        const StageCache& sc = cache.stages[s];
        const int in_plane_c = s == 0 ? cfg.input_channels : cfg.conv_spec[s - 1].out_channels;
        const int in_side = static_cast<int>(std::lround(
            std::sqrt(static_cast<double>(sc.input.size()) / in_plane_c)));
        const int ch = (in_side - st.kernel) / st.stride + 1;

        // unpool: route each pooled gradient to its argmax source
        std::vector<double> d_relu(sc.pre_relu.size(), 0.0);
        for (std::size_t i = 0; i < sc.pool_src.size(); ++i) {
            d_relu[sc.pool_src[i]] += d_pool[i];
        }
        // ReLU
        for (std::size_t i = 0; i < d_relu.size(); ++i) {
            if (!(sc.pre_relu[i] > 0.0)) d_relu[i] = 0.0;
        }

        g.conv_w[s].assign(net.conv_w[s].size(), 0.0);
        g.conv_b[s].assign(net.conv_b[s].size(), 0.0);
        std::vector<double> d_in(sc.input.size(), 0.0);
        for (int o = 0; o < st.out_channels; ++o) {
            const double* dout = d_relu.data() + static_cast<std::size_t>(o) * ch * ch;
            double acc_b = 0.0;
            for (int i = 0; i < ch * ch; ++i) acc_b += dout[i];
            g.conv_b[s][o] = acc_b;
            for (int c = 0; c < in_plane_c; ++c) {
                const double* in_plane = sc.input.data() + static_cast<std::size_t>(c) * in_side * in_side;
                double* din_plane = d_in.data() + static_cast<std::size_t>(c) * in_side * in_side;
                for (int ky = 0; ky < st.kernel; ++ky) {
                    for (int kx = 0; kx < st.kernel; ++kx) {
                        const std::size_t wi =
                            ((static_cast<std::size_t>(o) * in_plane_c + c) * st.kernel + ky) * st.kernel + kx;
                        const double wv = net.conv_w[s][wi];
                        double acc_w = 0.0;
                        for (int y = 0; y < ch; ++y) {
                            const double* ip = in_plane + (y * st.stride + ky) * in_side + kx;
                            double* dp = din_plane + (y * st.stride + ky) * in_side + kx;
                            const double* dr = dout + static_cast<std::size_t>(y) * ch;
                            for (int x = 0; x < ch; ++x) {
                                acc_w += dr[x] * ip[x * st.stride];
                                dp[x * st.stride] += wv * dr[x];
                            }
                        }
                        g.conv_w[s][wi] += acc_w;
                    }
                }
            }
        }
        d_pool = std::move(d_in);
    }
    return g;
}

FullGradients& FullGradients::operator+=(const FullGradients& o) {
    if (conv_w.empty()) conv_w.resize(o.conv_w.size());
    if (conv_b.empty()) conv_b.resize(o.conv_b.size());
    for (std::size_t s = 0; s < o.conv_w.size(); ++s) {
        add_into(conv_w[s], o.conv_w[s]);
        add_into(conv_b[s], o.conv_b[s]);
    }
    fc += o.fc;
    return *this;
}

void FullGradients::scale(double s) {
    for (auto& v : conv_w) {
        for (auto& x : v) x *= s;
    }
    for (auto& v : conv_b) {
        for (auto& x : v) x *= s;
    }
    fc.scale(s);
}

bool FullGradients::finite() const {
    for (const auto& v : conv_w) {
        if (!all_finite(v)) return false;
    }
    for (const auto& v : conv_b) {
        if (!all_finite(v)) return false;
    }
    return fc.finite();
}

void apply_sgd_all(Network& net, const FullGradients& grads, double learning_rate) {
    if (!(learning_rate > 0.0)) {
        throw ConfigError("apply_sgd_all: learning_rate must be > 0");
    }
    if (grads.conv_w.size() != net.conv_w.size()) {
        throw DimensionError("apply_sgd_all: stage count mismatch");
    }
    if (!grads.finite()) {
        throw NumericError("apply_sgd_all: non-finite gradient, update rejected");
    }
    for (std::size_t s = 0; s < net.conv_w.size(); ++s) {
        axpy(net.conv_w[s], grads.conv_w[s], -learning_rate);
        axpy(net.conv_b[s], grads.conv_b[s], -learning_rate);
    }
    axpy(net.fc6_w, grads.fc.fc6_w, -learning_rate);
    axpy(net.fc6_b, grads.fc.fc6_b, -learning_rate);
    axpy(net.fc7_w, grads.fc.fc7_w, -learning_rate);
    axpy(net.fc7_b, grads.fc.fc7_b, -learning_rate);
    ++net.revision;
}

// ---------------------------------------------------------------------------
// batch front-ends

std::vector<std::vector<double>> conv_features_batch(const Network& net,
                                                     const std::vector<ImageBuffer>& patches,
                                                     Exec exec) {
    std::vector<std::vector<double>> out(patches.size());
    const std::int64_t n = static_cast<std::int64_t>(patches.size());
    if (exec == Exec::Serial) {
        for (std::int64_t i = 0; i < n; ++i) out[i] = conv_features(net, patches[i]);
        return out;
    }
    detail::ErrorCollector errors;
#pragma omp parallel for schedule(dynamic)
    for (std::int64_t i = 0; i < n; ++i) {
        try {
            out[i] = conv_features(net, patches[i]);
        } catch (...) {
            errors.capture();
        }
    }
    errors.rethrow_if_any();
    return out;
}

std::vector<ForwardCache> fc_forward_batch(const Network& net,
                                           const std::vector<std::vector<double>>& conv_flat,
                                           Exec exec) {
    std::vector<ForwardCache> out(conv_flat.size());
    fc_forward_batch_into(net, conv_flat, out, exec);
    return out;
}

void fc_forward_batch_into(const Network& net, const std::vector<std::vector<double>>& conv_flat,
                           std::vector<ForwardCache>& out, Exec exec) {
    out.resize(conv_flat.size());
    const std::int64_t n = static_cast<std::int64_t>(conv_flat.size());
    if (exec == Exec::Serial) {
        for (std::int64_t i = 0; i < n; ++i) fc_forward_into(net, conv_flat[i], out[i]);
        return;
    }
    detail::ErrorCollector errors;
#pragma omp parallel for schedule(dynamic)
    for (std::int64_t i = 0; i < n; ++i) {
        try {
            fc_forward_into(net, conv_flat[i], out[i]);
        } catch (...) {
            errors.capture();
        }
    }
    errors.rethrow_if_any();
}

std::vector<FullCache> forward_full_batch(const Network& net,
                                          const std::vector<ImageBuffer>& patches,
                                          Exec exec) {
    std::vector<FullCache> out(patches.size());
    const std::int64_t n = static_cast<std::int64_t>(patches.size());
    if (exec == Exec::Serial) {
        for (std::int64_t i = 0; i < n; ++i) out[i] = forward_full(net, patches[i]);
        return out;
    }
    detail::ErrorCollector errors;
#pragma omp parallel for schedule(dynamic)
    for (std::int64_t i = 0; i < n; ++i) {
        try {
            out[i] = forward_full(net, patches[i]);
        } catch (...) {
            errors.capture();
        }
    }
    errors.rethrow_if_any();
    return out;
}

// ---------------------------------------------------------------------------
// GDTW container

namespace {

constexpr char kMagic[4] = {'G', 'D', 'T', 'W'};
constexpr std::uint32_t kVersion = 1;

void put_u16(std::string& buf, std::uint16_t v) {
    buf.push_back(static_cast<char>(v & 0xff));
    buf.push_back(static_cast<char>((v >> 8) & 0xff));
}

void put_u32(std::string& buf, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f64(std::string& buf, double d) {
    const auto bits = std::bit_cast<std::uint64_t>(d);
    for (int i = 0; i < 8; ++i) buf.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
}

struct ByteParser {
    const std::string& buf;
    const std::string& origin;
    std::size_t pos = 0;

    void need(std::size_t n, const char* what) {
        if (buf.size() - pos < n) {
            throw FormatError(origin + ": truncated file reading " + std::string(what) +
                              " at byte offset " + std::to_string(pos));
        }
    }
    std::uint16_t u16(const char* what) {
        need(2, what);
        const auto* p = reinterpret_cast<const unsigned char*>(buf.data() + pos);
        pos += 2;
        return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
    }
    std::uint32_t u32(const char* what) {
        need(4, what);
        const auto* p = reinterpret_cast<const unsigned char*>(buf.data() + pos);
        pos += 4;
        return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
               (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
    }
    double f64(const char* what) {
        need(8, what);
        std::uint64_t bits = 0;
        const auto* p = reinterpret_cast<const unsigned char*>(buf.data() + pos);
        for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(p[i]) << (8 * i);
        pos += 8;
        return std::bit_cast<double>(bits);
    }
};

} // namespace

std::size_t Tensor::count() const {
    std::size_t n = 1;
    for (auto d : dims) n *= d;
    return n;
}

void write_gdtw(std::ostream& out, const std::vector<Tensor>& tensors) {
    std::string buf;
    buf.append(kMagic, 4);
    put_u32(buf, kVersion);
    put_u32(buf, static_cast<std::uint32_t>(tensors.size()));
    for (const Tensor& t : tensors) {
        if (t.values.size() != t.count()) {
            throw DimensionError("write_gdtw: tensor '" + t.name + "' has " +
                                 std::to_string(t.values.size()) + " values but dims imply " +
                                 std::to_string(t.count()));
        }
        put_u16(buf, static_cast<std::uint16_t>(t.name.size()));
        buf.append(t.name);
        buf.push_back(static_cast<char>(t.dims.size()));
        for (auto d : t.dims) put_u32(buf, d);
        for (double v : t.values) put_f64(buf, v);
    }
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!out) throw IoError("write_gdtw: stream write failed");
}

std::vector<Tensor> read_gdtw(std::istream& in, const std::string& origin) {
    std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    ByteParser p{buf, origin, 0};
    p.need(4, "magic");
    if (std::memcmp(buf.data(), kMagic, 4) != 0) {
        throw FormatError(origin + ": bad magic (expected GDTW)");
    }
    p.pos = 4;
    const std::uint32_t version = p.u32("version");
    if (version != kVersion) {
        throw FormatError(origin + ": unsupported version " + std::to_string(version));
    }
    const std::uint32_t count = p.u32("tensor count");
    std::vector<Tensor> tensors;
    tensors.reserve(count);
    for (std::uint32_t i = 0; i < count; ++i) {
        Tensor t;
        const std::uint16_t name_len = p.u16("name length");
        p.need(name_len, "tensor name");
        t.name.assign(buf, p.pos, name_len);
        p.pos += name_len;
        p.need(1, "ndim");
        const unsigned ndim = static_cast<unsigned char>(buf[p.pos++]);
        if (ndim > 8) {
            throw FormatError(origin + ": tensor '" + t.name + "' has implausible ndim " +
                              std::to_string(ndim));
        }
        std::size_t n = 1;
        for (unsigned d = 0; d < ndim; ++d) {
            const std::uint32_t dim = p.u32("dim");
            if (dim == 0 || dim > (1u << 28)) {
                throw FormatError(origin + ": tensor '" + t.name + "' has bad dimension " +
                                  std::to_string(dim));
            }
            t.dims.push_back(dim);
            n *= dim;
        }
        p.need(8 * n, ("values of tensor '" + t.name + "'").c_str());
        t.values.resize(n);
        for (std::size_t v = 0; v < n; ++v) t.values[v] = p.f64("value");
        tensors.push_back(std::move(t));
    }
    return tensors;
}

namespace {

std::string dims_str(const std::vector<std::uint32_t>& dims) {
    std::string s;
    for (std::size_t i = 0; i < dims.size(); ++i) {
        if (i) s += "x";
        s += std::to_string(dims[i]);
    }
    return s;
}

} // namespace

std::vector<Tensor> network_tensors(const Network& net, const std::string& prefix) {
    const NetworkConfig& cfg = net.config;
    std::vector<Tensor> out;

    Tensor conf;
    conf.name = prefix + "config";
    conf.values = {static_cast<double>(cfg.input_size), static_cast<double>(cfg.input_channels),
                   static_cast<double>(cfg.conv_spec.size())};
    for (const ConvStage& st : cfg.conv_spec) {
        conf.values.push_back(st.kernel);
        conf.values.push_back(st.stride);
        conf.values.push_back(st.out_channels);
    }
    conf.values.push_back(cfg.fc6_dim);
    conf.values.push_back(cfg.feature_dim);
    conf.values.push_back(cfg.fc7_activation == Fc7Activation::Relu ? 1.0 : 0.0);
    conf.dims = {static_cast<std::uint32_t>(conf.values.size())};
    out.push_back(std::move(conf));

    int in_c = cfg.input_channels;
    for (std::size_t s = 0; s < cfg.conv_spec.size(); ++s) {
        const ConvStage& st = cfg.conv_spec[s];
        const std::string base = prefix + "conv" + std::to_string(s + 1);
        out.push_back({base + ".weight",
                       {static_cast<std::uint32_t>(st.out_channels), static_cast<std::uint32_t>(in_c),
                        static_cast<std::uint32_t>(st.kernel), static_cast<std::uint32_t>(st.kernel)},
                       net.conv_w[s]});
        out.push_back({base + ".bias", {static_cast<std::uint32_t>(st.out_channels)}, net.conv_b[s]});
        in_c = st.out_channels;
    }
    out.push_back({prefix + "fc6.weight",
                   {static_cast<std::uint32_t>(cfg.fc6_dim), static_cast<std::uint32_t>(cfg.conv_output_size())},
                   net.fc6_w});
    out.push_back({prefix + "fc6.bias", {static_cast<std::uint32_t>(cfg.fc6_dim)}, net.fc6_b});
    out.push_back({prefix + "fc7.weight",
                   {static_cast<std::uint32_t>(cfg.feature_dim), static_cast<std::uint32_t>(cfg.fc6_dim)},
                   net.fc7_w});
    out.push_back({prefix + "fc7.bias", {static_cast<std::uint32_t>(cfg.feature_dim)}, net.fc7_b});
    return out;
}

Network network_from_tensors(const std::vector<Tensor>& tensors, const std::string& origin,
                             const std::string& prefix) {
    std::map<std::string, const Tensor*> by_name;
    for (const Tensor& t : tensors) {
        if (t.name.rfind(prefix, 0) == 0) {
            by_name[t.name.substr(prefix.size())] = &t;
        }
    }
    auto take = [&](const std::string& name) -> const Tensor& {
        auto it = by_name.find(name);
        if (it == by_name.end()) {
            throw FormatError(origin + ": missing tensor '" + prefix + name + "'");
        }
        const Tensor* t = it->second;
        by_name.erase(it);
        return *t;
    };

    const Tensor& conf = take("config");
    const auto& cv = conf.values;
    if (cv.size() < 6) throw FormatError(origin + ": config tensor too short");
    NetworkConfig cfg;
    cfg.input_size = static_cast<int>(cv[0]);
    cfg.input_channels = static_cast<int>(cv[1]);
    const int n_stages = static_cast<int>(cv[2]);
    if (n_stages < 1 || n_stages > 16 || cv.size() != static_cast<std::size_t>(3 + 3 * n_stages + 3)) {
        throw FormatError(origin + ": config tensor has inconsistent stage count");
    }
    cfg.conv_spec.clear();
    for (int s = 0; s < n_stages; ++s) {
        cfg.conv_spec.push_back({static_cast<int>(cv[3 + 3 * s]), static_cast<int>(cv[4 + 3 * s]),
                                 static_cast<int>(cv[5 + 3 * s])});
    }
    cfg.fc6_dim = static_cast<int>(cv[3 + 3 * n_stages]);
    cfg.feature_dim = static_cast<int>(cv[4 + 3 * n_stages]);
    cfg.fc7_activation = cv[5 + 3 * n_stages] != 0.0 ? Fc7Activation::Relu : Fc7Activation::Identity;
    try {
        cfg.validate();
    } catch (const ConfigError& e) {
        throw FormatError(origin + ": invalid stored config: " + e.what());
    }

    Network net;
    net.config = cfg;
    auto expect = [&](const std::string& name, std::vector<std::uint32_t> dims) {
        const Tensor& t = take(name);
        if (t.dims != dims) {
            throw FormatError(origin + ": tensor '" + prefix + name + "' has dims " +
                              dims_str(t.dims) + ", header implies " + dims_str(dims));
        }
        return t.values;
    };

    int in_c = cfg.input_channels;
    for (int s = 0; s < n_stages; ++s) {
        const ConvStage& st = cfg.conv_spec[s];
        const std::string base = "conv" + std::to_string(s + 1);
        net.conv_w.push_back(expect(base + ".weight",
                                    {static_cast<std::uint32_t>(st.out_channels),
                                     static_cast<std::uint32_t>(in_c),
                                     static_cast<std::uint32_t>(st.kernel),
                                     static_cast<std::uint32_t>(st.kernel)}));
        net.conv_b.push_back(expect(base + ".bias", {static_cast<std::uint32_t>(st.out_channels)}));
        in_c = st.out_channels;
    }
    net.fc6_w = expect("fc6.weight", {static_cast<std::uint32_t>(cfg.fc6_dim),
                                      static_cast<std::uint32_t>(cfg.conv_output_size())});
    net.fc6_b = expect("fc6.bias", {static_cast<std::uint32_t>(cfg.fc6_dim)});
    net.fc7_w = expect("fc7.weight", {static_cast<std::uint32_t>(cfg.feature_dim),
                                      static_cast<std::uint32_t>(cfg.fc6_dim)});
    net.fc7_b = expect("fc7.bias", {static_cast<std::uint32_t>(cfg.feature_dim)});

    if (!by_name.empty()) {
        throw FormatError(origin + ": unexpected tensor '" + prefix + by_name.begin()->first + "'");
    }
    return net;
}

void save_weights(const Network& net, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write file: " + path);
    write_gdtw(out, network_tensors(net));
}

Network load_weights(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open file: " + path);
    const auto tensors = read_gdtw(in, path);
    return network_from_tensors(tensors, path);
}

} // namespace gdt
