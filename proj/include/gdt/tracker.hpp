#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "gdt/appearance.hpp"
#include "gdt/net.hpp"
#include "gdt/sampler.hpp"

namespace gdt {

// Ablation switches: freeze_net reproduces the "no bp" baseline (only the
// gaussians adapt online); freeze_gaussians pins the densities too.
struct TrackerFlags {
    bool freeze_net = false;
    bool freeze_gaussians = false;

    bool operator==(const TrackerFlags&) const = default;
};

struct TrackerConfig {
    NetworkConfig net;
    SamplerConfig sampler;
    UpdateConfig update;
    double fc_learning_rate = 1e-3;
    // per-example feature-gradient L2 clip applied before the fc update;
    // bounds the step when a freshly fitted variance sits at the floor
    double gradient_clip = 3.0;
    int init_iterations = 500;
    int online_iterations = 1;
    double score_gate = 0.0;
    double similarity_threshold = 0.5;
    double pretrain_learning_rate = 1e-2;
    int pretrain_batch = 16;
    std::uint64_t seed = 1;
    TrackerFlags flags;
    bool debug_retain_candidates = false;

    void validate() const;
};

// Per-frame trace kept when debug_retain_candidates is on.
struct FrameDebug {
    CandidateSet candidates;
    std::vector<double> candidate_scores;
    int argmax = -1;
    double score = 0.0;
    double similarity = 0.0;
    bool gate_passed = false;
    bool updated = false;
};

struct TrackerState {
    Network net;
    AppearanceModel model;
    BoundingBox current_box;
    double initial_aspect = 1.0;
    FeatureVector last_update_feature; // mean feature of the last accepted positive batch
    std::int64_t frame_index = 0;
    TrackerConfig cfg;
    Rng rng{0};

    // transient gating memory: each consecutive rejected update doubles the
    // next frame's search disc (capped at the frame size) until the tracker
    // is confident again. Deliberately not serialized, so a gate-rejected
    // frame changes only the box sections of the state file.
    bool last_update_skipped = false;
    int skip_streak = 0;

    FrameDebug last_debug;
};

/// Target-specific first-frame fine-tuning: samples positive/negative
/// batches, runs up to init_iterations fc-only descent steps on the score
/// separation (stopping early once the positive-negative score gap
/// plateaus), then fits the initial gaussians by maximum likelihood on the
/// post-fine-tuning features. When `pretrained` is given its weights (and
/// embedded config) are used instead of a fresh seeded initialization.
TrackerState initialize(const ImageBuffer& first_frame, const BoundingBox& box,
                        const TrackerConfig& cfg, std::optional<Network> pretrained = std::nullopt);

/// One tracking step: score candidates around the previous box, move to the
/// argmax (ties: nearest center to the previous box, then first index), and,
/// when the confidence gate passes, re-estimate the gaussians from fresh
/// samples (EMA), then run the online fc update with the gaussians held
/// fixed. Returns the new box and its score. A frame whose candidate phase
/// fails keeps the previous box and returns score -inf with no update.
std::pair<BoundingBox, double> track_frame(TrackerState& state, const ImageBuffer& frame);

/// Confidence gate: score must reach score_gate and the cosine between the
/// fresh mean positive feature and the one from the last accepted update
/// must reach similarity_threshold.
bool should_update(const TrackerState& state, double score, const FeatureVector& mean_pos_feature);

struct PretrainStats {
    double holdout_accuracy = 0.0;
    int n_object = 0;
    int n_background = 0;
    int used_iterations = 0;
};

/// Miniature objectness phase: trains all layers (conv included) with a
/// temporary binary logistic head on an object/ vs background/ patch corpus,
/// then discards the head and returns the backbone.
Network pretrain_objectness(const std::string& corpus_dir, int iterations,
                            const TrackerConfig& cfg, PretrainStats* stats = nullptr);

/// GDTW container with sections net/, gauss_pos/, gauss_neg/, box/.
/// save -> load is bit-exact for everything serialized.
void save_state(const TrackerState& state, std::ostream& out);
void save_state(const TrackerState& state, const std::string& path);
TrackerState load_state(std::istream& in, const std::string& origin);
TrackerState load_state(const std::string& path);

/// True when the serialized forms agree on every section other than box/.
bool states_equal_except_box(const std::string& serialized_a, const std::string& serialized_b);

} // namespace gdt
