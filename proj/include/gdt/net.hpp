#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "gdt/image.hpp"

namespace gdt {

// Output of the final fully connected layer; the appearance descriptor.
using FeatureVector = std::vector<double>;

// Batch kernels come in two flavours: a plain serial loop kept as the
// reference, and an OpenMP loop over independent items. Per-item arithmetic
// is byte-for-byte the same code, so both produce bit-identical results.
enum class Exec { Serial, Parallel };

struct ConvStage {
    int kernel = 3;
    int stride = 1;
    int out_channels = 8;

    bool operator==(const ConvStage&) const = default;
};

enum class Fc7Activation { Relu, Identity };

// Compact convolutional backbone: each conv stage is a valid (unpadded)
// convolution followed by ReLU and a 2x2/stride-2 max-pool, then two fully
// connected layers. The conv stack is frozen during tracking; only the fc
// head trains online. Patch bytes are normalized to [0,1] and mean-centered
// by the constant 0.0 (i.e. kept non-negative), so an all-zero patch maps to
// an all-zero input plane.
struct NetworkConfig {
    int input_size = 64;
    int input_channels = 1;
    std::vector<ConvStage> conv_spec = {{5, 1, 8}, {3, 1, 16}, {3, 1, 32}};
    int fc6_dim = 128;
    int feature_dim = 64;
    Fc7Activation fc7_activation = Fc7Activation::Relu;

    // Throws ConfigError naming the first stage whose output would collapse
    // below 1x1.
    void validate() const;

    // Spatial side after each stage's pool (validates on the way).
    std::vector<int> stage_sizes() const;

    // Flattened length of the conv stack output (input to fc6).
    int conv_output_size() const;

    bool operator==(const NetworkConfig&) const = default;
};

// Weight layout: conv_w[s] is [oc][ic][k][k] flattened, conv_b[s] is [oc];
// fc6_w is [fc6_dim][conv_out] row-major, fc7_w is [feature_dim][fc6_dim].
struct Network {
    NetworkConfig config;
    std::vector<std::vector<double>> conv_w;
    std::vector<std::vector<double>> conv_b;
    std::vector<double> fc6_w, fc6_b;
    std::vector<double> fc7_w, fc7_b;

    // Bumped by every weight update; forward caches remember the revision
    // they were computed against so stale caches are rejected.
    std::uint64_t revision = 0;

    bool operator==(const Network& o) const {
        return config == o.config && conv_w == o.conv_w && conv_b == o.conv_b &&
               fc6_w == o.fc6_w && fc6_b == o.fc6_b && fc7_w == o.fc7_w && fc7_b == o.fc7_b;
    }
};

// Activations needed to backpropagate through the fc head only.
struct ForwardCache {
    std::vector<double> conv_flat; // input to fc6
    std::vector<double> z6, h6;    // fc6 pre-/post-activation
    std::vector<double> z7;        // fc7 pre-activation
    FeatureVector x;               // fc7 output
    std::uint64_t revision = 0;
};

struct FcGradients {
    std::vector<double> fc6_w, fc6_b, fc7_w, fc7_b;

    FcGradients& operator+=(const FcGradients& o);
    void scale(double s);
    bool finite() const;
};

/// Deterministic initialization: fan-in-scaled uniform weights
/// U(-1/sqrt(fan_in), 1/sqrt(fan_in)) drawn in a fixed order, zero biases.
Network init_network(const NetworkConfig& config, std::uint64_t seed);

/// Conv stack only; the flattened result is reusable across fc updates
/// because the conv weights are frozen online.
std::vector<double> conv_features(const Network& net, const ImageBuffer& patch);

/// Fc head from a cached conv output.
ForwardCache fc_forward(const Network& net, std::vector<double> conv_flat);

/// Full forward pass; returns the feature vector and the cache backward_fc
/// needs.
std::pair<FeatureVector, ForwardCache> forward_features(const Network& net, const ImageBuffer& patch);

/// Gradients of dot(x, grad_x) with respect to the fc parameters only; conv
/// gradients are not computed. The cache must come from a forward pass
/// against the current weights.
FcGradients backward_fc(const Network& net, const ForwardCache& cache, const FeatureVector& grad_x);

/// Same math, summed into `acc` without building per-example temporaries
/// (the batch loops are memory-bound on the fc6 gradient otherwise). A
/// default-constructed `acc` is zero-initialized to the right shapes.
void accumulate_backward_fc(const Network& net, const ForwardCache& cache,
                            const FeatureVector& grad_x, FcGradients& acc);

/// fc params <- fc params - lr * grad; conv parameters are never touched.
/// Rejects non-positive learning rates and non-finite gradients (the network
/// is left unchanged in both cases).
void apply_sgd(Network& net, const FcGradients& grads, double learning_rate);

// --- full-network path, used only by objectness pretraining ---------------

struct StageCache {
    std::vector<double> input;    // ic x h x w
    std::vector<double> pre_relu; // oc x ch x cw, conv output before ReLU
    std::vector<int> pool_src;    // flat index into the relu output per pooled cell
};

struct FullCache {
    std::vector<StageCache> stages;
    ForwardCache fc;
};

struct FullGradients {
    std::vector<std::vector<double>> conv_w, conv_b;
    FcGradients fc;

    FullGradients& operator+=(const FullGradients& o);
    void scale(double s);
    bool finite() const;
};

FullCache forward_full(const Network& net, const ImageBuffer& patch);
FullGradients backward_full(const Network& net, const FullCache& cache, const FeatureVector& grad_x);
void apply_sgd_all(Network& net, const FullGradients& grads, double learning_rate);

// --- batch front-ends ------------------------------------------------------

std::vector<std::vector<double>> conv_features_batch(const Network& net,
                                                     const std::vector<ImageBuffer>& patches,
                                                     Exec exec = Exec::Parallel);

std::vector<ForwardCache> fc_forward_batch(const Network& net,
                                           const std::vector<std::vector<double>>& conv_flat,
                                           Exec exec = Exec::Parallel);

/// Overload reusing previously allocated caches (the initialization loop
/// re-runs the fc head hundreds of times over the same batch).
void fc_forward_batch_into(const Network& net, const std::vector<std::vector<double>>& conv_flat,
                           std::vector<ForwardCache>& out, Exec exec = Exec::Parallel);

void fc_forward_into(const Network& net, const std::vector<double>& conv_flat, ForwardCache& cache);

std::vector<FullCache> forward_full_batch(const Network& net,
                                          const std::vector<ImageBuffer>& patches,
                                          Exec exec = Exec::Parallel);

// --- GDTW container --------------------------------------------------------

// Portable tensor file: magic "GDTW", u32 version (= 1), u32 tensor count;
// per tensor: u16 name length + UTF-8 name, u8 ndim, ndim x u32 dims, then
// dims-product f64 values. All integers and doubles little-endian.
struct Tensor {
    std::string name;
    std::vector<std::uint32_t> dims;
    std::vector<double> values;

    std::size_t count() const;
};

void write_gdtw(std::ostream& out, const std::vector<Tensor>& tensors);
std::vector<Tensor> read_gdtw(std::istream& in, const std::string& origin);

/// Network <-> tensor list, with an optional name prefix ("net/" inside
/// tracker state files). The config travels as a tensor of scalars so a file
/// fully reconstructs the network.
std::vector<Tensor> network_tensors(const Network& net, const std::string& prefix = "");
Network network_from_tensors(const std::vector<Tensor>& tensors, const std::string& origin,
                             const std::string& prefix = "");

/// Round-trip is bit-exact: load_weights(save_weights(net)) == net.
void save_weights(const Network& net, const std::string& path);
Network load_weights(const std::string& path);

} // namespace gdt
