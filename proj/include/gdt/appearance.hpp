#pragma once

#include <vector>

#include "gdt/net.hpp"

namespace gdt {

// Independent per-dimension normal densities. var is kept at or above the
// configured floor so log-densities and score gradients stay bounded.
struct DiagonalGaussian {
    std::vector<double> mu;
    std::vector<double> var;

    bool operator==(const DiagonalGaussian&) const = default;
};

// Paired class-conditional densities for target (pos) and background (neg)
// features. Class priors are assumed equal and therefore carry no state.
struct AppearanceModel {
    DiagonalGaussian pos;
    DiagonalGaussian neg;

    bool operator==(const AppearanceModel&) const = default;
};

// The printed moment update blends variances with a (sigma - sigma*)^2 cross
// term; the moment-matching form of a two-component mixture would use
// (mu - mu*)^2 instead. Both are available; SigmaDiff is the default.
enum class VarianceCrossTerm { SigmaDiff, MuDiff };

struct UpdateConfig {
    double gamma = 0.95;
    double variance_floor = 1e-4;
    VarianceCrossTerm variance_cross_term = VarianceCrossTerm::SigmaDiff;

    void validate() const;
};

enum class SampleLabel { Positive, Negative };

/// Maximum-likelihood fit: per-dimension sample mean and population (1/M)
/// variance, clamped to the floor. Needs at least two samples.
DiagonalGaussian fit_gaussian(const std::vector<FeatureVector>& batch, double variance_floor = 1e-4);

/// Tracking score S(x) = sum_i [log N(x_i; pos_i) - log N(x_i; neg_i)],
/// evaluated purely in log space so extreme densities never overflow.
double score(const AppearanceModel& model, const FeatureVector& x);

/// Analytic dS/dx for a positive example:
///   g_i = -(x_i - mu_pos_i)/var_pos_i + (x_i - mu_neg_i)/var_neg_i
/// and the negated vector for a negative example.
FeatureVector score_gradient(const AppearanceModel& model, const FeatureVector& x, SampleLabel label);

/// Elementwise sum of score_gradient over a labeled batch.
FeatureVector batch_gradient(const AppearanceModel& model,
                             const std::vector<std::pair<FeatureVector, SampleLabel>>& batch);

/// Blends old moments toward freshly fitted ones at rate gamma:
///   mu'  = gamma mu + (1-gamma) mu*
///   var' = gamma var + (1-gamma) var* + gamma (1-gamma) c
/// with c = (sigma - sigma*)^2 or (mu - mu*)^2 per the configured cross term.
/// Computed in delta form, so updating a gaussian with itself is a bitwise
/// fixed point. The result is re-clamped to the variance floor.
DiagonalGaussian ema_update(const DiagonalGaussian& old_g, const DiagonalGaussian& fresh,
                            const UpdateConfig& cfg);

/// Scores many feature vectors against one model snapshot.
std::vector<double> score_batch(const AppearanceModel& model,
                                const std::vector<FeatureVector>& features,
                                Exec exec = Exec::Parallel);

double cosine_similarity(const FeatureVector& a, const FeatureVector& b);

FeatureVector mean_feature(const std::vector<FeatureVector>& features);

} // namespace gdt
