#include "gdt/appearance.hpp"

#include <cmath>

#include "gdt/errors.hpp"
#include "omp_util.hpp"

namespace gdt {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836; // log(2*pi)

void check_same_dim(const AppearanceModel& model, const FeatureVector& x) {
    const std::size_t n = x.size();
    if (model.pos.mu.size() != n || model.pos.var.size() != n ||
        model.neg.mu.size() != n || model.neg.var.size() != n) {
        throw DimensionError("appearance model and feature vector dimensions differ");
    }
}

} // namespace

void UpdateConfig::validate() const {
    if (!(gamma >= 0.0 && gamma <= 1.0)) throw ConfigError("gamma must lie in [0, 1]");
    if (!(variance_floor > 0.0)) throw ConfigError("variance_floor must be > 0");
}

DiagonalGaussian fit_gaussian(const std::vector<FeatureVector>& batch, double variance_floor) {
    if (batch.size() < 2) {
        throw DimensionError("fit_gaussian: need at least 2 samples, got " +
                             std::to_string(batch.size()));
    }
    const std::size_t n = batch[0].size();
    for (const auto& f : batch) {
        if (f.size() != n) throw DimensionError("fit_gaussian: inconsistent feature lengths");
    }
    const double inv_m = 1.0 / static_cast<double>(batch.size());
    DiagonalGaussian g;
    g.mu.assign(n, 0.0);
    g.var.assign(n, 0.0);
    for (const auto& f : batch) {
        for (std::size_t i = 0; i < n; ++i) g.mu[i] += f[i];
    }
    for (std::size_t i = 0; i < n; ++i) g.mu[i] *= inv_m;
    for (const auto& f : batch) {
        for (std::size_t i = 0; i < n; ++i) {
            const double d = f[i] - g.mu[i];
            g.var[i] += d * d;
        }
    }
    for (std::size_t i = 0; i < n; ++i) {
        g.var[i] = std::max(g.var[i] * inv_m, variance_floor);
    }
    return g;
}

double score(const AppearanceModel& model, const FeatureVector& x) {
    check_same_dim(model, x);
    double s = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double dp = x[i] - model.pos.mu[i];
        const double dn = x[i] - model.neg.mu[i];
        const double lp = -0.5 * (kLog2Pi + std::log(model.pos.var[i])) - dp * dp / (2.0 * model.pos.var[i]);
        const double ln = -0.5 * (kLog2Pi + std::log(model.neg.var[i])) - dn * dn / (2.0 * model.neg.var[i]);
        s += lp - ln;
    }
    return s;
}

FeatureVector score_gradient(const AppearanceModel& model, const FeatureVector& x, SampleLabel label) {
    check_same_dim(model, x);
    FeatureVector g(x.size());
    const double sign = label == SampleLabel::Positive ? 1.0 : -1.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double d = -(x[i] - model.pos.mu[i]) / model.pos.var[i] +
                         (x[i] - model.neg.mu[i]) / model.neg.var[i];
        g[i] = sign * d;
    }
    return g;
}

FeatureVector batch_gradient(const AppearanceModel& model,
                             const std::vector<std::pair<FeatureVector, SampleLabel>>& batch) {
    if (batch.empty()) throw DimensionError("batch_gradient: empty batch");
    FeatureVector sum(batch[0].first.size(), 0.0);
    for (const auto& [x, label] : batch) {
        const FeatureVector g = score_gradient(model, x, label);
        if (g.size() != sum.size()) throw DimensionError("batch_gradient: inconsistent lengths");
        for (std::size_t i = 0; i < sum.size(); ++i) sum[i] += g[i];
    }
    return sum;
}

DiagonalGaussian ema_update(const DiagonalGaussian& old_g, const DiagonalGaussian& fresh,
                            const UpdateConfig& cfg) {
    cfg.validate();
    const std::size_t n = old_g.mu.size();
    if (old_g.var.size() != n || fresh.mu.size() != n || fresh.var.size() != n) {
        throw DimensionError("ema_update: gaussian dimensions differ");
    }
    const double one_minus = 1.0 - cfg.gamma;
    DiagonalGaussian out;
    out.mu.resize(n);
    out.var.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        out.mu[i] = old_g.mu[i] + one_minus * (fresh.mu[i] - old_g.mu[i]);
        double cross;
        if (cfg.variance_cross_term == VarianceCrossTerm::SigmaDiff) {
            const double ds = std::sqrt(old_g.var[i]) - std::sqrt(fresh.var[i]);
            cross = ds * ds;
        } else {
            const double dm = old_g.mu[i] - fresh.mu[i];
            cross = dm * dm;
        }
        const double v = old_g.var[i] + one_minus * (fresh.var[i] - old_g.var[i]) +
                         cfg.gamma * one_minus * cross;
        out.var[i] = std::max(v, cfg.variance_floor);
    }
    return out;
}

std::vector<double> score_batch(const AppearanceModel& model,
                                const std::vector<FeatureVector>& features, Exec exec) {
    std::vector<double> out(features.size());
    const std::int64_t n = static_cast<std::int64_t>(features.size());
    if (exec == Exec::Serial) {
        for (std::int64_t i = 0; i < n; ++i) out[i] = score(model, features[i]);
        return out;
    }
    detail::ErrorCollector errors;
#pragma omp parallel for schedule(static)
    for (std::int64_t i = 0; i < n; ++i) {
        try {
            out[i] = score(model, features[i]);
        } catch (...) {
            errors.capture();
        }
    }
    errors.rethrow_if_any();
    return out;
}

double cosine_similarity(const FeatureVector& a, const FeatureVector& b) {
    if (a.size() != b.size()) throw DimensionError("cosine_similarity: lengths differ");
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    if (na <= 0.0 || nb <= 0.0) return 0.0;
    return dot / (std::sqrt(na) * std::sqrt(nb));
}

FeatureVector mean_feature(const std::vector<FeatureVector>& features) {
    if (features.empty()) throw DimensionError("mean_feature: empty batch");
    FeatureVector mean(features[0].size(), 0.0);
    for (const auto& f : features) {
        if (f.size() != mean.size()) throw DimensionError("mean_feature: inconsistent lengths");
        for (std::size_t i = 0; i < mean.size(); ++i) mean[i] += f[i];
    }
    const double inv = 1.0 / static_cast<double>(features.size());
    for (auto& v : mean) v *= inv;
    return mean;
}

} // namespace gdt
