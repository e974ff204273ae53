#pragma once

#include <vector>

#include "gdt/geometry.hpp"
#include "gdt/rng.hpp"

namespace gdt {

struct SamplerConfig {
    int n_pos = 32;
    int n_neg = 96;
    double pos_min_iou = 0.8;
    double neg_max_iou = 0.2;
    double neg_min_center_dist = 0.5;    // fraction of the box diagonal
    double search_radius_factor = 0.6;   // radius = factor * max(w, h)
    int n_candidates = 300;
    int n_scales = 3;                    // odd
    double scale_step = 0.02;

    void validate() const;
};

// The prediction batch X: candidate boxes plus the pyramid scale each one
// was drawn at. Every box lies inside the image, is at least 4 px on a side,
// and keeps the previous box's aspect ratio (clipping translates boxes back
// into bounds rather than trimming them).
struct CandidateSet {
    std::vector<BoundingBox> boxes;
    std::vector<double> scales;
};

/// n_pos boxes with iou >= pos_min_iou against `box`, drawn by jittering the
/// center with uniform offsets; the unjittered box itself is always first.
/// Draws that leave the image or miss the overlap threshold are rejected;
/// exceeding 10000 draws (box hard against the border) is a SamplingError.
std::vector<BoundingBox> sample_positives(const BoundingBox& box, int img_w, int img_h,
                                          const SamplerConfig& cfg, Rng& rng);

/// n_neg boxes of the same size whose centers are at least
/// neg_min_center_dist * diagonal away and whose iou <= neg_max_iou, uniform
/// over the valid region (centers drawn uniformly over the image, rejection
/// for the constraints), clipped to the image. Boxes thinner than 4 px after
/// clipping are rejected too.
std::vector<BoundingBox> sample_negatives(const BoundingBox& box, int img_w, int img_h,
                                          const SamplerConfig& cfg, Rng& rng);

/// Smallest scale step that changes the shorter side by at least one pixel:
/// max(step, 1 / min(w, h)).
double effective_scale_step(const BoundingBox& box, double step);

/// Candidate centers uniform in a disc of radius search_radius_factor *
/// max(w, h) * widen around the previous center; scales are the n_scales
/// pyramid levels 1 + k * step' centered on 1. The previous box itself is
/// always the first candidate. The tracker widens the disc while its
/// confidence gate keeps rejecting updates, which is how a target is
/// re-acquired after an occlusion.
CandidateSet generate_candidates(const BoundingBox& prev_box, int img_w, int img_h,
                                 const SamplerConfig& cfg, Rng& rng, double widen = 1.0);

} // namespace gdt
