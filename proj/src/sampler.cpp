#include "gdt/sampler.hpp"

#include <algorithm>
#include <cmath>

#include "gdt/errors.hpp"

namespace gdt {

namespace {

constexpr int kMaxDraws = 10000;
constexpr double kMinBoxSide = 4.0;

bool inside_image(const BoundingBox& b, int img_w, int img_h) {
    return b.x >= 0.0 && b.y >= 0.0 && b.right() <= img_w && b.bottom() <= img_h;
}

} // namespace

void SamplerConfig::validate() const {
    if (n_pos < 1 || n_neg < 1 || n_candidates < 1) {
        throw ConfigError("sampler counts must be >= 1");
    }
    if (n_scales < 1 || n_scales % 2 == 0) {
        throw ConfigError("n_scales must be odd and >= 1");
    }
    if (!(scale_step > 0.0 && scale_step < 1.0)) {
        throw ConfigError("scale_step must lie in (0, 1)");
    }
    if (!(pos_min_iou > neg_max_iou)) {
        throw ConfigError("pos_min_iou must exceed neg_max_iou");
    }
    if (!(search_radius_factor >= 0.0)) {
        throw ConfigError("search_radius_factor must be >= 0");
    }
    if (!(neg_min_center_dist >= 0.0)) {
        throw ConfigError("neg_min_center_dist must be >= 0");
    }
}

std::vector<BoundingBox> sample_positives(const BoundingBox& box, int img_w, int img_h,
                                          const SamplerConfig& cfg, Rng& rng) {
    cfg.validate();
    if (!box.valid() || !inside_image(box, img_w, img_h)) {
        throw GeometryError("sample_positives: box must lie inside the image");
    }
    std::vector<BoundingBox> out;
    out.reserve(cfg.n_pos);
    out.push_back(box);

    // jitter spans a good part of the allowed overlap band: the positive
    // mean then acts as a translation-blurred template, which trades a
    // little localization sharpness for much steadier frame-to-frame
    // behaviour; pos_min_iou = 1 degenerates to zero jitter and returns
    // n_pos copies
    const double max_dx = 0.4 * (1.0 - cfg.pos_min_iou) * box.w;
    const double max_dy = 0.4 * (1.0 - cfg.pos_min_iou) * box.h;

    int draws = 0;
    while (static_cast<int>(out.size()) < cfg.n_pos) {
        if (++draws > kMaxDraws) {
            throw SamplingError("sample_positives: exceeded " + std::to_string(kMaxDraws) +
                                " draws (box too close to the image border?)");
        }
        BoundingBox b = box;
        b.x += rng.uniform(-max_dx, max_dx);
        b.y += rng.uniform(-max_dy, max_dy);
        if (!inside_image(b, img_w, img_h)) continue;
        if (iou(b, box) < cfg.pos_min_iou) continue;
        out.push_back(b);
    }
    return out;
}

std::vector<BoundingBox> sample_negatives(const BoundingBox& box, int img_w, int img_h,
                                          const SamplerConfig& cfg, Rng& rng) {
    cfg.validate();
    if (!box.valid()) throw GeometryError("sample_negatives: invalid box");
    const double r_min = cfg.neg_min_center_dist * box.diagonal();

    // quick feasibility check: the farthest image corner must clear r_min
    const double cx = box.cx(), cy = box.cy();
    const double far_x = std::max(cx, img_w - cx);
    const double far_y = std::max(cy, img_h - cy);
    if (std::sqrt(far_x * far_x + far_y * far_y) < r_min) {
        throw SamplingError("sample_negatives: image too small to place any center at distance " +
                            std::to_string(r_min));
    }

    std::vector<BoundingBox> out;
    out.reserve(cfg.n_neg);
    int draws = 0;
    while (static_cast<int>(out.size()) < cfg.n_neg) {
        if (++draws > kMaxDraws) {
            throw SamplingError("sample_negatives: exceeded " + std::to_string(kMaxDraws) +
                                " draws, no valid placement");
        }
        const double ncx = rng.uniform(0.0, img_w);
        const double ncy = rng.uniform(0.0, img_h);
        const double dx = ncx - cx, dy = ncy - cy;
        if (std::sqrt(dx * dx + dy * dy) < r_min) continue;

        // background comes in all sizes: negatives span a size range around
        // the target so the fitted density covers the multi-scale candidates
        const double size_factor = rng.uniform(0.7, 1.4);
        BoundingBox b{ncx - 0.5 * box.w * size_factor, ncy - 0.5 * box.h * size_factor,
                      box.w * size_factor, box.h * size_factor};
        const double x0 = std::max(b.x, 0.0);
        const double y0 = std::max(b.y, 0.0);
        const double x1 = std::min(b.right(), static_cast<double>(img_w));
        const double y1 = std::min(b.bottom(), static_cast<double>(img_h));
        b = BoundingBox{x0, y0, x1 - x0, y1 - y0};
        if (b.w < kMinBoxSide || b.h < kMinBoxSide) continue;
        if (iou(b, box) > cfg.neg_max_iou) continue;
        out.push_back(b);
    }
    return out;
}

double effective_scale_step(const BoundingBox& box, double step) {
    if (!(step > 0.0)) throw ConfigError("effective_scale_step: step must be > 0");
    if (!box.valid()) throw GeometryError("effective_scale_step: invalid box");
    return std::max(step, 1.0 / std::min(box.w, box.h));
}

CandidateSet generate_candidates(const BoundingBox& prev_box, int img_w, int img_h,
                                 const SamplerConfig& cfg, Rng& rng, double widen) {
    cfg.validate();
    if (!prev_box.valid()) throw GeometryError("generate_candidates: invalid previous box");
    if (!(widen >= 1.0)) throw ConfigError("generate_candidates: widen must be >= 1");

    const double step = effective_scale_step(prev_box, cfg.scale_step);
    const double radius = cfg.search_radius_factor * std::max(prev_box.w, prev_box.h) * widen;
    const int half = cfg.n_scales / 2;
    std::vector<double> levels;
    for (int k = -half; k <= half; ++k) levels.push_back(1.0 + k * step);

    // scale bounds: box must fit in the image and stay >= 4 px on a side
    const double max_scale = std::min(img_w / prev_box.w, img_h / prev_box.h);
    const double min_scale = kMinBoxSide / std::min(prev_box.w, prev_box.h);

    const double scale_lo = std::min(min_scale, 1.0);
    const double scale_hi = std::max(max_scale, scale_lo);
    auto clipped = [&](double cx, double cy, double s) {
        s = std::clamp(s, scale_lo, scale_hi);
        const double w = prev_box.w * s;
        const double h = prev_box.h * s;
        BoundingBox b{cx - 0.5 * w, cy - 0.5 * h, w, h};
        b.x = std::clamp(b.x, 0.0, std::max(0.0, img_w - w));
        b.y = std::clamp(b.y, 0.0, std::max(0.0, img_h - h));
        return std::make_pair(b, s);
    };

    CandidateSet set;
    set.boxes.reserve(cfg.n_candidates);
    set.scales.reserve(cfg.n_candidates);
    auto [first, fs] = clipped(prev_box.cx(), prev_box.cy(), 1.0);
    set.boxes.push_back(first);
    set.scales.push_back(fs);

    while (static_cast<int>(set.boxes.size()) < cfg.n_candidates) {
        double dx, dy;
        do {
            dx = rng.uniform(-radius, radius);
            dy = rng.uniform(-radius, radius);
        } while (dx * dx + dy * dy > radius * radius);
        const double s = levels[static_cast<std::size_t>(rng.uniform_int(0, cfg.n_scales - 1))];
        auto [b, bs] = clipped(prev_box.cx() + dx, prev_box.cy() + dy, s);
        set.boxes.push_back(b);
        set.scales.push_back(bs);
    }
    return set;
}

} // namespace gdt
