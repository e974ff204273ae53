#include "gdt/tracker.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

#include "gdt/errors.hpp"
#include "omp_util.hpp"

namespace gdt {

namespace fs = std::filesystem;

void TrackerConfig::validate() const {
    net.validate();
    sampler.validate();
    update.validate();
    if (!(fc_learning_rate > 0.0)) throw ConfigError("fc_learning_rate must be > 0");
    if (!(pretrain_learning_rate > 0.0)) throw ConfigError("pretrain_learning_rate must be > 0");
    if (gradient_clip < 0.0) throw ConfigError("gradient_clip must be >= 0 (0 disables clipping)");
    if (init_iterations < 0 || online_iterations < 0) throw ConfigError("iteration counts must be >= 0");
    if (pretrain_batch < 1) throw ConfigError("pretrain_batch must be >= 1");
    if (!std::isfinite(score_gate) || !std::isfinite(similarity_threshold)) {
        throw ConfigError("gate thresholds must be finite");
    }
}

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

ImageBuffer match_channels(const ImageBuffer& frame, int want_channels) {
    if (frame.channels == want_channels) return frame;
    if (frame.channels == 3 && want_channels == 1) return to_grayscale(frame);
    throw DimensionError("frame has " + std::to_string(frame.channels) +
                         " channels, network expects " + std::to_string(want_channels));
}

std::vector<ImageBuffer> crop_batch(const ImageBuffer& frame, const std::vector<BoundingBox>& boxes,
                                    int out_size, Exec exec) {
    std::vector<ImageBuffer> out(boxes.size());
    const std::int64_t n = static_cast<std::int64_t>(boxes.size());
    if (exec == Exec::Serial) {
        for (std::int64_t i = 0; i < n; ++i) out[i] = crop_resize(frame, boxes[i], out_size, out_size);
        return out;
    }
    detail::ErrorCollector errors;
#pragma omp parallel for schedule(dynamic)
    for (std::int64_t i = 0; i < n; ++i) {
        try {
            out[i] = crop_resize(frame, boxes[i], out_size, out_size);
        } catch (...) {
            errors.capture();
        }
    }
    errors.rethrow_if_any();
    return out;
}

// Parameter gradient of the separation loss (-sum_pos S + sum_neg S) over a
// labeled batch, averaged over the batch. Per-example feature gradients are
// L2-clipped before backpropagation, and each weight matrix is preconditioned
// by the batch-mean squared norm of its input, so fc_learning_rate bounds the
// induced feature-space step independently of the layer widths (a raw SGD
// step scales with those norms and blows past the fitted densities on wide
// nets). Accumulation uses a fixed chunk count combined in chunk order, so
// the result does not depend on the thread count.
FcGradients batch_loss_fc_gradient(const Network& net, const AppearanceModel& model,
                                   const std::vector<ForwardCache>& caches,
                                   const std::vector<SampleLabel>& labels, double clip) {
    const std::int64_t m = static_cast<std::int64_t>(caches.size());
    if (m == 0 || labels.size() != caches.size()) {
        throw DimensionError("batch gradient: caches and labels disagree");
    }
    const int n_chunks = static_cast<int>(std::min<std::int64_t>(8, m));
    std::vector<FcGradients> partial(n_chunks);
    detail::ErrorCollector errors;
#pragma omp parallel for schedule(dynamic)
    for (int c = 0; c < n_chunks; ++c) {
        try {
            const std::int64_t lo = m * c / n_chunks;
            const std::int64_t hi = m * (c + 1) / n_chunks;
            for (std::int64_t i = lo; i < hi; ++i) {
                FeatureVector g = score_gradient(model, caches[i].x, labels[i]);
                double norm = 0.0;
                for (double v : g) norm += v * v;
                norm = std::sqrt(norm);
                double s = -1.0; // descent on the loss = ascent on labeled score
                if (clip > 0.0 && norm > clip) s *= clip / norm;
                for (auto& v : g) v *= s;
                accumulate_backward_fc(net, caches[i], g, partial[c]);
            }
        } catch (...) {
            errors.capture();
        }
    }
    errors.rethrow_if_any();
    FcGradients total = std::move(partial[0]);
    for (int c = 1; c < n_chunks; ++c) total += partial[c];

    double mean_c2 = 0.0, mean_h2 = 0.0;
    for (const auto& cache : caches) {
        for (double v : cache.conv_flat) mean_c2 += v * v;
        for (double v : cache.h6) mean_h2 += v * v;
    }
    const double inv_m = 1.0 / static_cast<double>(m);
    mean_c2 = std::max(1.0, mean_c2 * inv_m);
    mean_h2 = std::max(1.0, mean_h2 * inv_m);
    for (auto& v : total.fc6_w) v *= inv_m / mean_c2;
    for (auto& v : total.fc7_w) v *= inv_m / mean_h2;
    for (auto& v : total.fc6_b) v *= inv_m;
    for (auto& v : total.fc7_b) v *= inv_m;
    return total;
}

struct LabeledFeatures {
    std::vector<FeatureVector> pos, neg;
};

LabeledFeatures split_features(const std::vector<ForwardCache>& caches,
                               const std::vector<SampleLabel>& labels) {
    LabeledFeatures out;
    for (std::size_t i = 0; i < caches.size(); ++i) {
        (labels[i] == SampleLabel::Positive ? out.pos : out.neg).push_back(caches[i].x);
    }
    return out;
}

AppearanceModel fit_model(const std::vector<ForwardCache>& caches,
                          const std::vector<SampleLabel>& labels, double floor) {
    const LabeledFeatures f = split_features(caches, labels);
    return {fit_gaussian(f.pos, floor), fit_gaussian(f.neg, floor)};
}

} // namespace

TrackerState initialize(const ImageBuffer& first_frame, const BoundingBox& box,
                        const TrackerConfig& cfg, std::optional<Network> pretrained) {
    cfg.validate();
    TrackerState st;
    st.cfg = cfg;
    st.net = pretrained ? std::move(*pretrained) : init_network(cfg.net, cfg.seed);
    st.cfg.net = st.net.config; // loaded weights carry their own architecture
    st.rng = Rng(Rng::mix(cfg.seed, 0x7472616bULL));

    const ImageBuffer frame = match_channels(first_frame, st.net.config.input_channels);
    if (!box.valid() || box.x < 0.0 || box.y < 0.0 || box.right() > frame.width ||
        box.bottom() > frame.height) {
        throw GeometryError("initialize: target box must lie inside the first frame");
    }

    const auto pos_boxes = sample_positives(box, frame.width, frame.height, cfg.sampler, st.rng);
    const auto neg_boxes = sample_negatives(box, frame.width, frame.height, cfg.sampler, st.rng);

    std::vector<BoundingBox> all_boxes = pos_boxes;
    all_boxes.insert(all_boxes.end(), neg_boxes.begin(), neg_boxes.end());
    std::vector<SampleLabel> labels(pos_boxes.size(), SampleLabel::Positive);
    labels.insert(labels.end(), neg_boxes.size(), SampleLabel::Negative);

    const auto patches = crop_batch(frame, all_boxes, st.net.config.input_size, Exec::Parallel);
    const auto conv = conv_features_batch(st.net, patches);
    auto caches = fc_forward_batch(st.net, conv);

    // phase-2 loop. The densities are estimated once from the raw features
    // and held fixed while the fc head descends the separation loss (the
    // same gaussians-fixed convention as the online stage 2); refitting them
    // every pass feeds the 1/var gradients back into themselves and the
    // estimates collapse. Stops early when the score gap plateaus.
    const AppearanceModel loss_model = fit_model(caches, labels, cfg.update.variance_floor);
    std::vector<double> gap_history;
    gap_history.reserve(cfg.init_iterations);
    for (int it = 0; it < cfg.init_iterations; ++it) {
        double mean_pos = 0.0, mean_neg = 0.0;
        for (std::size_t i = 0; i < caches.size(); ++i) {
            const double s = score(loss_model, caches[i].x);
            (labels[i] == SampleLabel::Positive ? mean_pos : mean_neg) += s;
        }
        mean_pos /= static_cast<double>(pos_boxes.size());
        mean_neg /= static_cast<double>(neg_boxes.size());
        if (!std::isfinite(mean_pos) || !std::isfinite(mean_neg)) {
            throw NumericError("initialize: non-finite scores at iteration " + std::to_string(it));
        }
        const double gap = mean_pos - mean_neg;
        gap_history.push_back(gap);
        if (it >= 20) {
            const double prev = gap_history[it - 20];
            if (std::abs(gap - prev) < 1e-3 * std::max(std::abs(prev), 1e-12)) break;
        }
        const FcGradients grads =
            batch_loss_fc_gradient(st.net, loss_model, caches, labels, cfg.gradient_clip);
        apply_sgd(st.net, grads, cfg.fc_learning_rate);
        fc_forward_batch_into(st.net, conv, caches);
    }

    // the tracking model comes from fresh batches the loss never saw, so the
    // fitted spreads reflect the fine-tuned features honestly
    const auto fresh_pos = sample_positives(box, frame.width, frame.height, cfg.sampler, st.rng);
    const auto fresh_neg = sample_negatives(box, frame.width, frame.height, cfg.sampler, st.rng);
    auto features_of = [&](const std::vector<BoundingBox>& boxes) {
        const auto crops = crop_batch(frame, boxes, st.net.config.input_size, Exec::Parallel);
        const auto cc = fc_forward_batch(st.net, conv_features_batch(st.net, crops));
        std::vector<FeatureVector> out(cc.size());
        for (std::size_t i = 0; i < cc.size(); ++i) out[i] = cc[i].x;
        return out;
    };
    const auto pos_feats = features_of(fresh_pos);
    st.model = {fit_gaussian(pos_feats, cfg.update.variance_floor),
                fit_gaussian(features_of(fresh_neg), cfg.update.variance_floor)};
    st.last_update_feature = mean_feature(pos_feats);
    st.current_box = box;
    st.initial_aspect = box.aspect();
    st.frame_index = 1;
    return st;
}

bool should_update(const TrackerState& state, double score_value, const FeatureVector& mean_pos_feature) {
    if (!(score_value >= state.cfg.score_gate)) return false;
    return cosine_similarity(mean_pos_feature, state.last_update_feature) >=
           state.cfg.similarity_threshold;
}

std::pair<BoundingBox, double> track_frame(TrackerState& st, const ImageBuffer& frame_in) {
    const TrackerConfig& cfg = st.cfg;
    FrameDebug dbg;

    CandidateSet cand;
    std::vector<ForwardCache> cand_caches;
    ImageBuffer frame;
    try {
        frame = match_channels(frame_in, st.net.config.input_channels);
        // consecutive rejections double the search disc until it spans the
        // frame; that is what re-acquires a target lost behind an occluder
        const double base_radius =
            cfg.sampler.search_radius_factor * std::max(st.current_box.w, st.current_box.h);
        double widen = 1.0;
        if (st.skip_streak > 0 && base_radius > 0.0) {
            const double cap = std::max(1.0, std::max(frame.width, frame.height) / base_radius);
            widen = std::min(std::ldexp(1.0, std::min(st.skip_streak, 16)), cap);
        }
        cand = generate_candidates(st.current_box, frame.width, frame.height, cfg.sampler, st.rng,
                                   widen);
        const auto patches = crop_batch(frame, cand.boxes, st.net.config.input_size, Exec::Parallel);
        cand_caches = fc_forward_batch(st.net, conv_features_batch(st.net, patches));
    } catch (const Error&) {
        // keep the previous box, widen the next search, report no confidence
        st.last_update_skipped = true;
        ++st.skip_streak;
        ++st.frame_index;
        return {st.current_box, kNegInf};
    }

    std::vector<double> scores(cand_caches.size());
    for (std::size_t i = 0; i < cand_caches.size(); ++i) scores[i] = score(st.model, cand_caches[i].x);

    // argmax; ties go to the candidate nearest the previous center, then to
    // the earliest index
    std::size_t best = 0;
    double best_dist = center_distance(cand.boxes[0], st.current_box);
    for (std::size_t i = 1; i < scores.size(); ++i) {
        if (scores[i] > scores[best]) {
            best = i;
            best_dist = center_distance(cand.boxes[i], st.current_box);
        } else if (scores[i] == scores[best]) {
            const double d = center_distance(cand.boxes[i], st.current_box);
            if (d < best_dist) {
                best = i;
                best_dist = d;
            }
        }
    }
    const BoundingBox xstar = cand.boxes[best];
    const double sstar = scores[best];

    bool updated = false;
    double similarity = 0.0;
    if (sstar >= cfg.score_gate) {
        const auto pos_boxes =
            sample_positives(xstar, frame.width, frame.height, cfg.sampler, st.rng);
        const auto pos_patches = crop_batch(frame, pos_boxes, st.net.config.input_size, Exec::Parallel);
        auto pos_caches = fc_forward_batch(st.net, conv_features_batch(st.net, pos_patches));
        std::vector<FeatureVector> pos_feats(pos_caches.size());
        for (std::size_t i = 0; i < pos_caches.size(); ++i) pos_feats[i] = pos_caches[i].x;
        const FeatureVector mean_pos = mean_feature(pos_feats);
        similarity = cosine_similarity(mean_pos, st.last_update_feature);

        if (should_update(st, sstar, mean_pos)) {
            const auto neg_boxes =
                sample_negatives(xstar, frame.width, frame.height, cfg.sampler, st.rng);
            const auto neg_patches =
                crop_batch(frame, neg_boxes, st.net.config.input_size, Exec::Parallel);
            const auto neg_conv = conv_features_batch(st.net, neg_patches);
            auto neg_caches = fc_forward_batch(st.net, neg_conv);

            // stage 1: re-estimate the densities, then blend (Gaussian EMA)
            if (!cfg.flags.freeze_gaussians) {
                std::vector<FeatureVector> neg_feats(neg_caches.size());
                for (std::size_t i = 0; i < neg_caches.size(); ++i) neg_feats[i] = neg_caches[i].x;
                const DiagonalGaussian fresh_pos = fit_gaussian(pos_feats, cfg.update.variance_floor);
                const DiagonalGaussian fresh_neg = fit_gaussian(neg_feats, cfg.update.variance_floor);
                st.model.pos = ema_update(st.model.pos, fresh_pos, cfg.update);
                st.model.neg = ema_update(st.model.neg, fresh_neg, cfg.update);
            }

            // stage 2: densities fixed, push the batch gradient into the fc head
            if (!cfg.flags.freeze_net) {
                std::vector<ForwardCache> caches = std::move(pos_caches);
                caches.insert(caches.end(), std::make_move_iterator(neg_caches.begin()),
                              std::make_move_iterator(neg_caches.end()));
                std::vector<SampleLabel> labels(pos_feats.size(), SampleLabel::Positive);
                labels.insert(labels.end(), caches.size() - pos_feats.size(), SampleLabel::Negative);
                std::vector<std::vector<double>> conv_flat;
                for (int it = 0; it < cfg.online_iterations; ++it) {
                    if (it > 0) {
                        if (conv_flat.empty()) {
                            for (const auto& c : caches) conv_flat.push_back(c.conv_flat);
                        }
                        caches = fc_forward_batch(st.net, conv_flat);
                    }
                    const FcGradients grads =
                        batch_loss_fc_gradient(st.net, st.model, caches, labels, cfg.gradient_clip);
                    apply_sgd(st.net, grads, cfg.fc_learning_rate);
                }
            }

            st.last_update_feature = mean_pos;
            updated = true;
        }
    }

    st.last_update_skipped = !updated;
    st.skip_streak = updated ? 0 : st.skip_streak + 1;
    st.current_box = xstar;
    ++st.frame_index;

    if (cfg.debug_retain_candidates) {
        dbg.candidates = std::move(cand);
        dbg.candidate_scores = std::move(scores);
        dbg.argmax = static_cast<int>(best);
        dbg.score = sstar;
        dbg.similarity = similarity;
        dbg.gate_passed = updated;
        dbg.updated = updated;
        st.last_debug = std::move(dbg);
    }
    return {xstar, sstar};
}

// ---------------------------------------------------------------------------
// objectness pretraining

namespace {

std::vector<std::string> list_patch_files(const fs::path& dir) {
    if (!fs::is_directory(dir)) {
        throw IoError("pretrain: missing corpus directory " + dir.string());
    }
    std::vector<std::string> out;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (!entry.is_regular_file()) continue;
        const auto ext = entry.path().extension().string();
        if (ext == ".pgm" || ext == ".ppm") out.push_back(entry.path().string());
    }
    std::sort(out.begin(), out.end());
    return out;
}

} // namespace

Network pretrain_objectness(const std::string& corpus_dir, int iterations,
                            const TrackerConfig& cfg, PretrainStats* stats) {
    cfg.validate();
    const auto object_files = list_patch_files(fs::path(corpus_dir) / "object");
    const auto background_files = list_patch_files(fs::path(corpus_dir) / "background");
    if (object_files.empty() || background_files.empty()) {
        throw IoError("pretrain: corpus needs patches under object/ and background/, found " +
                      std::to_string(object_files.size()) + " / " +
                      std::to_string(background_files.size()));
    }

    Network net = init_network(cfg.net, cfg.seed);
    if (stats) {
        *stats = {};
        stats->n_object = static_cast<int>(object_files.size());
        stats->n_background = static_cast<int>(background_files.size());
    }
    if (iterations <= 0) return net;

    const int in_size = cfg.net.input_size;
    auto load_patch = [&](const std::string& path) {
        ImageBuffer img = match_channels(load_image(path), cfg.net.input_channels);
        const BoundingBox full{0.0, 0.0, static_cast<double>(img.width),
                               static_cast<double>(img.height)};
        return crop_resize(img, full, in_size, in_size);
    };

    std::vector<ImageBuffer> images;
    std::vector<int> targets; // 1 = object, 0 = background
    for (const auto& p : object_files) {
        images.push_back(load_patch(p));
        targets.push_back(1);
    }
    for (const auto& p : background_files) {
        images.push_back(load_patch(p));
        targets.push_back(0);
    }

    Rng rng(Rng::mix(cfg.seed, 0x70726574ULL));

    // deterministic shuffled split, ~20% held out
    std::vector<std::size_t> order(images.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    for (std::size_t i = order.size(); i > 1; --i) {
        std::swap(order[i - 1], order[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i) - 1))]);
    }
    const std::size_t n_hold = std::max<std::size_t>(1, order.size() / 5);
    std::vector<std::size_t> hold(order.begin(), order.begin() + n_hold);
    std::vector<std::size_t> train(order.begin() + n_hold, order.end());
    for (int cls = 0; cls < 2; ++cls) {
        if (std::none_of(train.begin(), train.end(), [&](std::size_t i) { return targets[i] == cls; })) {
            for (auto it = hold.begin(); it != hold.end(); ++it) {
                if (targets[*it] == cls) {
                    train.push_back(*it);
                    hold.erase(it);
                    break;
                }
            }
        }
    }

    // temporary logistic head on top of the feature vector
    const int nf = cfg.net.feature_dim;
    std::vector<double> head_w(nf);
    {
        const double bound = 1.0 / std::sqrt(static_cast<double>(nf));
        for (auto& v : head_w) v = rng.uniform(-bound, bound);
    }
    double head_b = 0.0;

    const int batch_size = std::min<int>(cfg.pretrain_batch, static_cast<int>(train.size()));
    for (int it = 0; it < iterations; ++it) {
        std::vector<ImageBuffer> batch;
        std::vector<int> batch_y;
        for (int b = 0; b < batch_size; ++b) {
            const std::size_t pick =
                train[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(train.size()) - 1))];
            batch.push_back(images[pick]);
            batch_y.push_back(targets[pick]);
        }
        const auto caches = forward_full_batch(net, batch);

        std::vector<double> errs(batch_size);
        std::vector<double> d_head_w(nf, 0.0);
        double d_head_b = 0.0;
        for (int b = 0; b < batch_size; ++b) {
            const FeatureVector& x = caches[b].fc.x;
            double s = head_b;
            for (int i = 0; i < nf; ++i) s += head_w[i] * x[i];
            const double p = 1.0 / (1.0 + std::exp(-s));
            const double e = p - static_cast<double>(batch_y[b]);
            errs[b] = e;
            for (int i = 0; i < nf; ++i) d_head_w[i] += e * x[i];
            d_head_b += e;
        }

        // fixed chunking again: bit-identical for any thread count
        const int n_chunks = std::min(8, batch_size);
        std::vector<FullGradients> partial(n_chunks);
        detail::ErrorCollector errors;
#pragma omp parallel for schedule(dynamic)
        for (int c = 0; c < n_chunks; ++c) {
            try {
                const int lo = batch_size * c / n_chunks;
                const int hi = batch_size * (c + 1) / n_chunks;
                for (int b = lo; b < hi; ++b) {
                    FeatureVector dx(nf);
                    for (int i = 0; i < nf; ++i) dx[i] = errs[b] * head_w[i];
                    partial[c] += backward_full(net, caches[b], dx);
                }
            } catch (...) {
                errors.capture();
            }
        }
        errors.rethrow_if_any();
        FullGradients total = std::move(partial[0]);
        for (int c = 1; c < n_chunks; ++c) total += partial[c];
        total.scale(1.0 / static_cast<double>(batch_size));
        apply_sgd_all(net, total, cfg.pretrain_learning_rate);

        const double inv_b = 1.0 / static_cast<double>(batch_size);
        for (int i = 0; i < nf; ++i) head_w[i] -= cfg.pretrain_learning_rate * d_head_w[i] * inv_b;
        head_b -= cfg.pretrain_learning_rate * d_head_b * inv_b;
        if (stats) stats->used_iterations = it + 1;
    }

    if (stats) {
        std::vector<ImageBuffer> hold_imgs;
        for (auto i : hold) hold_imgs.push_back(images[i]);
        const auto conv = conv_features_batch(net, hold_imgs);
        const auto caches = fc_forward_batch(net, conv);
        int correct = 0;
        for (std::size_t i = 0; i < hold.size(); ++i) {
            double s = head_b;
            for (int d = 0; d < nf; ++d) s += head_w[d] * caches[i].x[d];
            const int pred = s > 0.0 ? 1 : 0;
            if (pred == targets[hold[i]]) ++correct;
        }
        stats->holdout_accuracy =
            hold.empty() ? 0.0 : static_cast<double>(correct) / static_cast<double>(hold.size());
    }
    return net;
}

// ---------------------------------------------------------------------------
// state persistence

namespace {

std::vector<Tensor> state_tensors(const TrackerState& st) {
    const int nf = st.net.config.feature_dim;
    if (static_cast<int>(st.model.pos.mu.size()) != nf ||
        static_cast<int>(st.last_update_feature.size()) != nf) {
        throw DimensionError("save_state: state dimensions inconsistent with the network");
    }
    auto tensors = network_tensors(st.net, "net/");
    const auto un = static_cast<std::uint32_t>(nf);
    tensors.push_back({"gauss_pos/mu", {un}, st.model.pos.mu});
    tensors.push_back({"gauss_pos/var", {un}, st.model.pos.var});
    tensors.push_back({"gauss_neg/mu", {un}, st.model.neg.mu});
    tensors.push_back({"gauss_neg/var", {un}, st.model.neg.var});
    tensors.push_back({"box/current", {4}, {st.current_box.x, st.current_box.y, st.current_box.w, st.current_box.h}});
    tensors.push_back({"box/meta",
                       {4},
                       {st.initial_aspect, static_cast<double>(st.frame_index),
                        st.cfg.flags.freeze_net ? 1.0 : 0.0,
                        st.cfg.flags.freeze_gaussians ? 1.0 : 0.0}});
    tensors.push_back({"box/last_update_feature", {un}, st.last_update_feature});
    return tensors;
}

DiagonalGaussian gaussian_from_tensors(const std::vector<Tensor>& tensors, const std::string& section,
                                       int feature_dim, const std::string& origin) {
    const Tensor* mu = nullptr;
    const Tensor* var = nullptr;
    for (const auto& t : tensors) {
        if (t.name == section + "/mu") mu = &t;
        if (t.name == section + "/var") var = &t;
    }
    if (!mu || !var) {
        throw FormatError(origin + ": not a tracker state file, missing section '" + section + "'");
    }
    auto check = [&](const Tensor& t, const char* what) {
        if (static_cast<int>(t.values.size()) != feature_dim) {
            throw FormatError(origin + ": corrupted section '" + section + "': " + what + " has " +
                              std::to_string(t.values.size()) + " values, expected " +
                              std::to_string(feature_dim));
        }
        for (double v : t.values) {
            if (!std::isfinite(v)) {
                throw FormatError(origin + ": corrupted section '" + section + "': non-finite " +
                                  std::string(what));
            }
        }
    };
    check(*mu, "mu");
    check(*var, "var");
    for (double v : var->values) {
        if (!(v > 0.0)) {
            throw FormatError(origin + ": corrupted section '" + section + "': non-positive variance");
        }
    }
    return {mu->values, var->values};
}

} // namespace

void save_state(const TrackerState& st, std::ostream& out) {
    write_gdtw(out, state_tensors(st));
}

void save_state(const TrackerState& st, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write file: " + path);
    save_state(st, out);
}

TrackerState load_state(std::istream& in, const std::string& origin) {
    const auto tensors = read_gdtw(in, origin);
    TrackerState st;
    st.net = network_from_tensors(tensors, origin, "net/");
    const int nf = st.net.config.feature_dim;
    st.model.pos = gaussian_from_tensors(tensors, "gauss_pos", nf, origin);
    st.model.neg = gaussian_from_tensors(tensors, "gauss_neg", nf, origin);

    const Tensor* current = nullptr;
    const Tensor* meta = nullptr;
    const Tensor* feat = nullptr;
    for (const auto& t : tensors) {
        if (t.name == "box/current") current = &t;
        if (t.name == "box/meta") meta = &t;
        if (t.name == "box/last_update_feature") feat = &t;
    }
    if (!current || !meta || !feat) {
        throw FormatError(origin + ": not a tracker state file, missing section 'box'");
    }
    if (current->values.size() != 4 || meta->values.size() != 4) {
        throw FormatError(origin + ": corrupted section 'box'");
    }
    st.current_box = {current->values[0], current->values[1], current->values[2], current->values[3]};
    if (!st.current_box.valid()) throw FormatError(origin + ": corrupted section 'box': empty box");
    if (static_cast<int>(feat->values.size()) != nf) {
        throw FormatError(origin + ": corrupted section 'box': last_update_feature length mismatch");
    }
    st.initial_aspect = meta->values[0];
    st.frame_index = static_cast<std::int64_t>(meta->values[1]);
    st.cfg.net = st.net.config;
    st.cfg.flags.freeze_net = meta->values[2] != 0.0;
    st.cfg.flags.freeze_gaussians = meta->values[3] != 0.0;
    st.last_update_feature = feat->values;
    st.rng = Rng(Rng::mix(st.cfg.seed, 0x6c6f6164ULL));

    for (const auto& t : tensors) {
        const bool known = t.name.rfind("net/", 0) == 0 || t.name.rfind("gauss_pos/", 0) == 0 ||
                           t.name.rfind("gauss_neg/", 0) == 0 || t.name.rfind("box/", 0) == 0;
        if (!known) throw FormatError(origin + ": unexpected tensor '" + t.name + "'");
    }
    return st;
}

TrackerState load_state(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open file: " + path);
    return load_state(in, path);
}

bool states_equal_except_box(const std::string& a, const std::string& b) {
    std::istringstream sa(a), sb(b);
    const auto ta = read_gdtw(sa, "state a");
    const auto tb = read_gdtw(sb, "state b");
    if (ta.size() != tb.size()) return false;
    for (std::size_t i = 0; i < ta.size(); ++i) {
        if (ta[i].name != tb[i].name || ta[i].dims != tb[i].dims) return false;
        if (ta[i].name == "box/current" || ta[i].name == "box/meta") continue;
        if (ta[i].values != tb[i].values) return false;
    }
    return true;
}

} // namespace gdt
