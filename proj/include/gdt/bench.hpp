#pragma once

#include <optional>
#include <string>
#include <vector>

#include "gdt/tracker.hpp"

namespace gdt {

// A sequence directory: img/ with zero-padded numbered PGM/PPM frames,
// groundtruth_rect.txt with one 1-based x,y,w,h line per frame (comma or
// whitespace separated), optional attributes.txt with tags such as OCC, SV.
struct Sequence {
    std::string dir;
    std::vector<std::string> frame_paths;
    std::vector<BoundingBox> gt; // converted to the internal 0-based convention
    std::vector<std::string> attributes;
};

// threshold -> value samples; thresholds strictly increasing, values in [0,1]
struct EvalCurve {
    std::vector<std::pair<double, double>> samples;
};

Sequence load_sequence(const std::string& dir);

/// Ground-truth and results files share one line format; this reads either
/// (1-based on disk, 0-based in memory).
std::vector<BoundingBox> read_rect_file(const std::string& path);
void write_rect_file(const std::string& path, const std::vector<BoundingBox>& boxes);

/// One-pass evaluation: initialize on the first frame's ground truth, track
/// to the end, never re-initialize. The first output equals gt[0].
std::vector<BoundingBox> run_ope(const Sequence& seq, const TrackerConfig& cfg,
                                 std::optional<Network> pretrained = std::nullopt,
                                 TrackerState* final_state = nullptr);

/// Fraction of frames whose center error is within each pixel threshold
/// (0, step, ..., max_threshold inclusive).
EvalCurve precision_curve(const std::vector<BoundingBox>& pred, const std::vector<BoundingBox>& gt,
                          double max_threshold = 50.0, double step = 1.0);
double precision_at(const EvalCurve& curve, double threshold = 20.0);

/// Fraction of frames whose IoU reaches each of 101 thresholds 0, 0.01, .., 1.
EvalCurve success_curve(const std::vector<BoundingBox>& pred, const std::vector<BoundingBox>& gt);

/// Mean of the success curve samples.
double success_auc(const EvalCurve& curve);

struct SequenceResult {
    std::string name;
    std::vector<std::string> attributes;
    std::vector<BoundingBox> pred;
    std::vector<BoundingBox> gt;
};

struct AttributeRow {
    std::string attribute; // "ALL" plus one row per tag
    int sequences = 0;
    double precision20 = 0.0;
    double success = 0.0;
};

/// Per-attribute mean of the per-sequence precision@20 and success AUC.
std::vector<AttributeRow> attribute_report(const std::vector<SequenceResult>& results);

// Synthetic sequence generator: a textured target over a blotchy background,
// constant per-axis velocity with border bounces, optional per-frame size
// drift, additive Gaussian pixel noise, and an optional interval of frames in
// which a flat distractor rectangle fully covers the target (recorded in an
// occlusion.txt sidecar, one 0/1 line per frame).
struct SynthParams {
    int frames = 100;
    int width = 320;
    int height = 240;
    int target_w = 40;
    int target_h = 40;
    double velocity_x = 2.0;
    double velocity_y = 1.0;
    double noise_sigma = 8.0;
    int occlude_begin = 0; // 1-based, half-open interval [begin, end); 0 = none
    int occlude_end = 0;
    double scale_drift = 0.0;
    // per-frame multiplicative intensity change of the target texture;
    // unlike geometric drift this survives the crop normalization, so it
    // exercises genuine online appearance adaptation
    double brightness_drift = 0.0;
    // wandering patches drawn from the same texture family as the target;
    // they reward trackers whose features separate this target from
    // lookalike clutter rather than from plain background only
    int distractors = 0;
    // per-frame blend rate pulling distractor textures toward the target's
    // (capped at 3/4); separating the pair then demands continuously
    // re-learned features, which is what the online update provides
    double distractor_morph = 0.0;
};

Sequence synth_sequence(const SynthParams& params, std::uint64_t seed, const std::string& out_dir);

/// Texture patches from the same generator families, for building pretraining
/// corpora: object patches carry the target texture, background patches the
/// background field.
ImageBuffer synth_object_patch(int w, int h, Rng& rng);
ImageBuffer synth_background_patch(int w, int h, Rng& rng);

/// The wandering-distractor texture: same stripe family as the target but
/// the opposite orientation.
ImageBuffer synth_distractor_patch(int w, int h, Rng& rng);

/// CSV with a `precision` section (threshold,value) and a `success` section
/// (overlap,value); numbers print exactly enough digits to round-trip.
/// Optionally also a self-contained SVG with both charts.
void emit_report(const EvalCurve& precision, const EvalCurve& success, const std::string& csv_path,
                 const std::string& svg_path = "");

std::pair<EvalCurve, EvalCurve> parse_report_csv(const std::string& csv_path);

} // namespace gdt
