#include "gdt/bench.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "gdt/errors.hpp"

namespace gdt {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// sequence and rect-file I/O

namespace {

std::vector<BoundingBox> parse_rect_lines(std::istream& in, const std::string& origin) {
    std::vector<BoundingBox> boxes;
    std::string raw;
    int line_no = 0;
    while (std::getline(in, raw)) {
        ++line_no;
        std::string line = raw;
        for (auto& c : line) {
            if (c == ',' || c == '\t') c = ' ';
        }
        std::istringstream ss(line);
        double v[4];
        if (!(ss >> v[0] >> v[1] >> v[2] >> v[3])) {
            // allow trailing blank lines
            std::string rest;
            std::istringstream probe(line);
            if (!(probe >> rest)) continue;
            throw FormatError(origin + " line " + std::to_string(line_no) + ": expected 4 numbers, got '" + raw + "'");
        }
        std::string extra;
        if (ss >> extra) {
            throw FormatError(origin + " line " + std::to_string(line_no) + ": trailing token '" + extra + "'");
        }
        if (v[2] <= 0.0 || v[3] <= 0.0) {
            throw FormatError(origin + " line " + std::to_string(line_no) + ": non-positive box size");
        }
        // files are 1-based per the OTB convention
        boxes.push_back({v[0] - 1.0, v[1] - 1.0, v[2], v[3]});
    }
    return boxes;
}

} // namespace

std::vector<BoundingBox> read_rect_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open file: " + path);
    return parse_rect_lines(in, path);
}

void write_rect_file(const std::string& path, const std::vector<BoundingBox>& boxes) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write file: " + path);
    for (const auto& b : boxes) {
        out << std::llround(b.x) + 1 << "," << std::llround(b.y) + 1 << ","
            << std::llround(b.w) << "," << std::llround(b.h) << "\n";
    }
    if (!out) throw IoError("write failed: " + path);
}

Sequence load_sequence(const std::string& dir) {
    Sequence seq;
    seq.dir = dir;
    const fs::path img_dir = fs::path(dir) / "img";
    if (!fs::is_directory(img_dir)) {
        throw IoError("load_sequence: missing image directory " + img_dir.string());
    }
    for (const auto& entry : fs::directory_iterator(img_dir)) {
        if (!entry.is_regular_file()) continue;
        const auto ext = entry.path().extension().string();
        if (ext == ".pgm" || ext == ".ppm") seq.frame_paths.push_back(entry.path().string());
    }
    std::sort(seq.frame_paths.begin(), seq.frame_paths.end());
    if (seq.frame_paths.empty()) {
        throw IoError("load_sequence: no .pgm/.ppm frames under " + img_dir.string());
    }

    seq.gt = read_rect_file((fs::path(dir) / "groundtruth_rect.txt").string());
    if (seq.gt.size() != seq.frame_paths.size()) {
        throw FormatError("load_sequence: " + std::to_string(seq.frame_paths.size()) +
                          " frames but " + std::to_string(seq.gt.size()) +
                          " ground-truth lines in " + dir);
    }

    const fs::path attr = fs::path(dir) / "attributes.txt";
    if (fs::exists(attr)) {
        std::ifstream in(attr);
        std::string tok;
        std::string all((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
        for (auto& c : all) {
            if (c == ',' || c == '\n' || c == '\r') c = ' ';
        }
        std::istringstream ss(all);
        while (ss >> tok) seq.attributes.push_back(tok);
    }
    return seq;
}

std::vector<BoundingBox> run_ope(const Sequence& seq, const TrackerConfig& cfg,
                                 std::optional<Network> pretrained, TrackerState* final_state) {
    if (seq.frame_paths.empty()) throw GeometryError("run_ope: empty sequence");
    const ImageBuffer first = load_image(seq.frame_paths[0]);
    TrackerState st = initialize(first, seq.gt[0], cfg, std::move(pretrained));
    std::vector<BoundingBox> pred;
    pred.reserve(seq.frame_paths.size());
    pred.push_back(seq.gt[0]);
    for (std::size_t i = 1; i < seq.frame_paths.size(); ++i) {
        const ImageBuffer frame = load_image(seq.frame_paths[i]);
        pred.push_back(track_frame(st, frame).first);
    }
    if (final_state) *final_state = std::move(st);
    return pred;
}

// ---------------------------------------------------------------------------
// metrics

EvalCurve precision_curve(const std::vector<BoundingBox>& pred, const std::vector<BoundingBox>& gt,
                          double max_threshold, double step) {
    if (pred.size() != gt.size()) throw DimensionError("precision_curve: length mismatch");
    if (pred.empty()) throw DimensionError("precision_curve: empty input");
    if (!(step > 0.0) || !(max_threshold >= 0.0)) throw ConfigError("precision_curve: bad thresholds");
    std::vector<double> dists(pred.size());
    for (std::size_t i = 0; i < pred.size(); ++i) dists[i] = center_distance(pred[i], gt[i]);
    EvalCurve curve;
    const int n_steps = static_cast<int>(std::floor(max_threshold / step + 1e-9));
    for (int k = 0; k <= n_steps; ++k) {
        const double t = k * step;
        int hits = 0;
        for (double d : dists) {
            if (d <= t) ++hits;
        }
        curve.samples.push_back({t, static_cast<double>(hits) / static_cast<double>(pred.size())});
    }
    return curve;
}

double precision_at(const EvalCurve& curve, double threshold) {
    if (curve.samples.empty()) throw DimensionError("precision_at: empty curve");
    for (const auto& [t, v] : curve.samples) {
        if (std::abs(t - threshold) < 1e-9) return v;
    }
    // between samples: linear interpolation; outside: clamp to the ends
    if (threshold <= curve.samples.front().first) return curve.samples.front().second;
    if (threshold >= curve.samples.back().first) return curve.samples.back().second;
    for (std::size_t i = 1; i < curve.samples.size(); ++i) {
        const auto& [t0, v0] = curve.samples[i - 1];
        const auto& [t1, v1] = curve.samples[i];
        if (threshold >= t0 && threshold <= t1) {
            const double a = (threshold - t0) / (t1 - t0);
            return v0 + a * (v1 - v0);
        }
    }
    return curve.samples.back().second;
}

EvalCurve success_curve(const std::vector<BoundingBox>& pred, const std::vector<BoundingBox>& gt) {
    if (pred.size() != gt.size()) throw DimensionError("success_curve: length mismatch");
    if (pred.empty()) throw DimensionError("success_curve: empty input");
    std::vector<double> overlaps(pred.size());
    for (std::size_t i = 0; i < pred.size(); ++i) overlaps[i] = iou(pred[i], gt[i]);
    EvalCurve curve;
    for (int k = 0; k <= 100; ++k) {
        const double t = k / 100.0;
        int hits = 0;
        for (double o : overlaps) {
            if (o >= t) ++hits;
        }
        curve.samples.push_back({t, static_cast<double>(hits) / static_cast<double>(pred.size())});
    }
    return curve;
}

double success_auc(const EvalCurve& curve) {
    if (curve.samples.empty()) throw DimensionError("success_auc: empty curve");
    double sum = 0.0;
    for (const auto& [t, v] : curve.samples) sum += v;
    return sum / static_cast<double>(curve.samples.size());
}

std::vector<AttributeRow> attribute_report(const std::vector<SequenceResult>& results) {
    struct Acc {
        int n = 0;
        double p = 0.0, s = 0.0;
    };
    std::map<std::string, Acc> rows;
    Acc all;
    for (const auto& r : results) {
        const double p = precision_at(precision_curve(r.pred, r.gt));
        const double s = success_auc(success_curve(r.pred, r.gt));
        all.n += 1;
        all.p += p;
        all.s += s;
        std::set<std::string> tags(r.attributes.begin(), r.attributes.end());
        for (const auto& tag : tags) {
            auto& acc = rows[tag];
            acc.n += 1;
            acc.p += p;
            acc.s += s;
        }
    }
    std::vector<AttributeRow> out;
    if (all.n > 0) out.push_back({"ALL", all.n, all.p / all.n, all.s / all.n});
    for (const auto& [tag, acc] : rows) {
        out.push_back({tag, acc.n, acc.p / acc.n, acc.s / acc.n});
    }
    return out;
}

// ---------------------------------------------------------------------------
// synthetic sequences

namespace {

// cluttered field: a smooth blotch base plus hard-edged rectangles, blobs
// and coarse stripes, so distinct background crops have genuinely different
// statistics (a uniform background would make every negative sample look
// alike and give the fitted negative density an unrealistically tiny spread)
void fill_background(ImageBuffer& img, Rng& rng) {
    constexpr int kBlock = 24;
    const int gw = img.width / kBlock + 2;
    const int gh = img.height / kBlock + 2;
    std::vector<double> grid(static_cast<std::size_t>(gw) * gh);
    for (auto& v : grid) v = rng.uniform(40.0, 200.0);
    for (int y = 0; y < img.height; ++y) {
        const double gy = static_cast<double>(y) / kBlock;
        const int y0 = static_cast<int>(gy);
        const double fy = gy - y0;
        for (int x = 0; x < img.width; ++x) {
            const double gx = static_cast<double>(x) / kBlock;
            const int x0 = static_cast<int>(gx);
            const double fx = gx - x0;
            const double v00 = grid[static_cast<std::size_t>(y0) * gw + x0];
            const double v01 = grid[static_cast<std::size_t>(y0) * gw + x0 + 1];
            const double v10 = grid[static_cast<std::size_t>(y0 + 1) * gw + x0];
            const double v11 = grid[static_cast<std::size_t>(y0 + 1) * gw + x0 + 1];
            const double v = (1 - fy) * ((1 - fx) * v00 + fx * v01) + fy * ((1 - fx) * v10 + fx * v11);
            img.at(x, y) = static_cast<std::uint8_t>(std::clamp(v, 0.0, 255.0));
        }
    }

    const int n_shapes = std::max(12, img.width * img.height / 2500);
    for (int s = 0; s < n_shapes; ++s) {
        const int kind = static_cast<int>(rng.uniform_int(0, 2));
        const int cx = static_cast<int>(rng.uniform_int(0, img.width - 1));
        const int cy = static_cast<int>(rng.uniform_int(0, img.height - 1));
        if (kind == 0) {
            // hard-edged rectangle
            const int w = static_cast<int>(rng.uniform_int(8, 48));
            const int h = static_cast<int>(rng.uniform_int(8, 48));
            const double v = rng.uniform(30.0, 225.0);
            for (int y = std::max(0, cy - h / 2); y < std::min(img.height, cy + h / 2); ++y) {
                for (int x = std::max(0, cx - w / 2); x < std::min(img.width, cx + w / 2); ++x) {
                    img.at(x, y) = static_cast<std::uint8_t>(v);
                }
            }
        } else if (kind == 1) {
            // coarse axis-aligned stripes (much coarser than the target texture)
            const int w = static_cast<int>(rng.uniform_int(16, 56));
            const int h = static_cast<int>(rng.uniform_int(16, 56));
            const double period = rng.uniform(14.0, 36.0);
            const bool vertical = rng.uniform() < 0.5;
            const double base = rng.uniform(70.0, 180.0);
            for (int y = std::max(0, cy - h / 2); y < std::min(img.height, cy + h / 2); ++y) {
                for (int x = std::max(0, cx - w / 2); x < std::min(img.width, cx + w / 2); ++x) {
                    const double u = vertical ? x : y;
                    const double v = base + 55.0 * std::sin(u * 6.28318530717958647692 / period);
                    img.at(x, y) = static_cast<std::uint8_t>(std::clamp(v, 0.0, 255.0));
                }
            }
        } else {
            // filled disc
            const int r = static_cast<int>(rng.uniform_int(4, 18));
            const double v = rng.uniform(30.0, 225.0);
            for (int y = std::max(0, cy - r); y < std::min(img.height, cy + r); ++y) {
                for (int x = std::max(0, cx - r); x < std::min(img.width, cx + r); ++x) {
                    const int dx = x - cx, dy = y - cy;
                    if (dx * dx + dy * dy <= r * r) img.at(x, y) = static_cast<std::uint8_t>(v);
                }
            }
        }
    }

    // broadband grain over everything: real backgrounds keep every filter
    // channel mildly active, and channels that only the target excites would
    // otherwise fit floor-clamped negative variances and distort the score
    for (auto& v : img.data) {
        const double grain = rng.uniform(-14.0, 14.0);
        v = static_cast<std::uint8_t>(std::clamp(static_cast<double>(v) + grain, 0.0, 255.0));
    }
}

void paste(ImageBuffer& canvas, const ImageBuffer& patch, int px, int py) {
    for (int y = 0; y < patch.height; ++y) {
        const int cy = py + y;
        if (cy < 0 || cy >= canvas.height) continue;
        for (int x = 0; x < patch.width; ++x) {
            const int cx = px + x;
            if (cx < 0 || cx >= canvas.width) continue;
            canvas.at(cx, cy) = patch.at(x, y);
        }
    }
}

void fill_rect(ImageBuffer& canvas, int x0, int y0, int x1, int y1, std::uint8_t value) {
    for (int y = std::max(0, y0); y < std::min(canvas.height, y1); ++y) {
        for (int x = std::max(0, x0); x < std::min(canvas.width, x1); ++x) {
            canvas.at(x, y) = value;
        }
    }
}

} // namespace

namespace {

ImageBuffer striped_patch(int w, int h, Rng& rng, double ux, double uy) {
    ImageBuffer img;
    img.width = w;
    img.height = h;
    img.channels = 1;
    img.data.resize(static_cast<std::size_t>(w) * h);
    const double period = rng.uniform(7.0, 11.0);
    const double phase = rng.uniform(0.0, 6.28318530717958647692);
    const int cell = 4;
    const int cw = w / cell + 2, chh = h / cell + 2;
    std::vector<double> cells(static_cast<std::size_t>(cw) * chh);
    for (auto& v : cells) v = rng.uniform(-35.0, 35.0);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const double stripe =
                150.0 + 90.0 * std::sin((ux * x + uy * y) * 6.28318530717958647692 / period + phase);
            const double noise = cells[static_cast<std::size_t>(y / cell) * cw + x / cell];
            img.at(x, y) = static_cast<std::uint8_t>(std::clamp(stripe + noise, 0.0, 255.0));
        }
    }
    return img;
}

} // namespace

ImageBuffer synth_object_patch(int w, int h, Rng& rng) {
    // bright diagonally oriented stripes with coarse cell noise;
    // high-frequency energy that the blotchy background lacks
    return striped_patch(w, h, rng, 2.0, 1.0);
}

ImageBuffer synth_distractor_patch(int w, int h, Rng& rng) {
    // same family, opposite orientation: discriminable by texture-tuned
    // features, confusable for weaker ones
    return striped_patch(w, h, rng, -1.0, 2.0);
}

ImageBuffer synth_background_patch(int w, int h, Rng& rng) {
    ImageBuffer img;
    img.width = w;
    img.height = h;
    img.channels = 1;
    img.data.resize(static_cast<std::size_t>(w) * h);
    fill_background(img, rng);
    return img;
}

Sequence synth_sequence(const SynthParams& p, std::uint64_t seed, const std::string& out_dir) {
    if (p.frames < 1) throw GeometryError("synth_sequence: frames must be >= 1");
    if (p.width < 32 || p.height < 32) throw GeometryError("synth_sequence: image too small");
    if (p.target_w < 8 || p.target_h < 8 || p.target_w > p.width / 2 || p.target_h > p.height / 2) {
        throw GeometryError("synth_sequence: target size must fit the frame");
    }
    if (std::abs(p.velocity_x) >= p.width / 4.0 || std::abs(p.velocity_y) >= p.height / 4.0) {
        throw GeometryError("synth_sequence: velocity too large for the frame");
    }
    if (p.occlude_begin != 0 || p.occlude_end != 0) {
        if (p.occlude_begin < 1 || p.occlude_end < p.occlude_begin) {
            throw GeometryError("synth_sequence: bad occlusion interval");
        }
    }
    if (p.scale_drift <= -1.0) throw GeometryError("synth_sequence: bad scale drift");
    if (p.brightness_drift <= -1.0) throw GeometryError("synth_sequence: bad brightness drift");
    if (p.distractors < 0 || p.distractor_morph < 0.0) {
        throw GeometryError("synth_sequence: bad distractor settings");
    }

    fs::create_directories(fs::path(out_dir) / "img");

    ImageBuffer background;
    background.width = p.width;
    background.height = p.height;
    background.channels = 1;
    background.data.resize(static_cast<std::size_t>(p.width) * p.height);
    Rng bg_rng(Rng::mix(seed, 1));
    fill_background(background, bg_rng);

    Rng tex_rng(Rng::mix(seed, 2));
    const ImageBuffer master = synth_object_patch(p.target_w, p.target_h, tex_rng);

    struct Wanderer {
        ImageBuffer patch;
        double x, y, vx, vy;
    };
    std::vector<Wanderer> wanderers;
    {
        Rng drng(Rng::mix(seed, 3));
        for (int d = 0; d < p.distractors; ++d) {
            Wanderer w;
            w.patch = synth_distractor_patch(p.target_w, p.target_h, drng);
            // start in a corner quadrant away from the centered target
            w.x = drng.uniform() < 0.5 ? drng.uniform(4.0, p.width * 0.25)
                                       : drng.uniform(p.width * 0.75 - p.target_w, p.width - p.target_w - 4.0);
            w.y = drng.uniform() < 0.5 ? drng.uniform(4.0, p.height * 0.25)
                                       : drng.uniform(p.height * 0.75 - p.target_h, p.height - p.target_h - 4.0);
            w.vx = drng.uniform(-2.5, 2.5);
            w.vy = drng.uniform(-2.5, 2.5);
            wanderers.push_back(std::move(w));
        }
    }

    Sequence seq;
    seq.dir = out_dir;
    std::vector<char> occluded(p.frames, 0);

    double px = std::floor((p.width - p.target_w) / 2.0);
    double py = std::floor((p.height - p.target_h) / 2.0);
    double vx = p.velocity_x, vy = p.velocity_y;
    constexpr double kMargin = 2.0;

    for (int t = 0; t < p.frames; ++t) {
        const double scale = std::pow(1.0 + p.scale_drift, t);
        const int tw = std::max(8, static_cast<int>(std::lround(p.target_w * scale)));
        const int th = std::max(8, static_cast<int>(std::lround(p.target_h * scale)));

        // bounce off the margins so the target stays fully inside
        const double hi_x = p.width - tw - kMargin;
        const double hi_y = p.height - th - kMargin;
        if (px < kMargin) { px = kMargin + (kMargin - px); vx = -vx; }
        if (px > hi_x) { px = hi_x - (px - hi_x); vx = -vx; }
        if (py < kMargin) { py = kMargin + (kMargin - py); vy = -vy; }
        if (py > hi_y) { py = hi_y - (py - hi_y); vy = -vy; }

        const int ix = static_cast<int>(std::lround(px));
        const int iy = static_cast<int>(std::lround(py));

        ImageBuffer canvas = background;
        const double morph =
            std::min(0.75, p.distractor_morph * t); // blend toward the target texture
        for (auto& w : wanderers) {
            ImageBuffer shown = w.patch;
            if (morph > 0.0) {
                for (std::size_t i = 0; i < shown.data.size(); ++i) {
                    const double v = (1.0 - morph) * w.patch.data[i] + morph * master.data[i];
                    shown.data[i] = static_cast<std::uint8_t>(std::clamp(v, 0.0, 255.0));
                }
            }
            paste(canvas, shown, static_cast<int>(std::lround(w.x)), static_cast<int>(std::lround(w.y)));
            w.x += w.vx;
            w.y += w.vy;
            if (w.x < kMargin || w.x > p.width - w.patch.width - kMargin) w.vx = -w.vx;
            if (w.y < kMargin || w.y > p.height - w.patch.height - kMargin) w.vy = -w.vy;
            w.x = std::clamp(w.x, 0.0, static_cast<double>(p.width - w.patch.width));
            w.y = std::clamp(w.y, 0.0, static_cast<double>(p.height - w.patch.height));
        }
        ImageBuffer target =
            (tw == p.target_w && th == p.target_h)
                ? master
                : crop_resize(master, {0.0, 0.0, static_cast<double>(p.target_w), static_cast<double>(p.target_h)}, tw, th);
        if (p.brightness_drift != 0.0) {
            const double gain = std::pow(1.0 + p.brightness_drift, t);
            for (auto& v : target.data) {
                v = static_cast<std::uint8_t>(std::clamp(v * gain, 0.0, 255.0));
            }
        }
        paste(canvas, target, ix, iy);

        const int frame_no = t + 1;
        const bool occ = p.occlude_begin != 0 && frame_no >= p.occlude_begin && frame_no < p.occlude_end;
        if (occ) {
            fill_rect(canvas, ix - 6, iy - 6, ix + tw + 6, iy + th + 6, 70);
            occluded[t] = 1;
        }

        if (p.noise_sigma > 0.0) {
            Rng noise_rng(Rng::mix(seed, 1000 + static_cast<std::uint64_t>(t)));
            for (auto& v : canvas.data) {
                const double nv = v + noise_rng.normal(0.0, p.noise_sigma);
                v = static_cast<std::uint8_t>(std::clamp(nv, 0.0, 255.0));
            }
        }

        char name[32];
        std::snprintf(name, sizeof name, "%04d.pgm", frame_no);
        const std::string path = (fs::path(out_dir) / "img" / name).string();
        save_image(canvas, path);
        seq.frame_paths.push_back(path);
        seq.gt.push_back({static_cast<double>(ix), static_cast<double>(iy),
                          static_cast<double>(tw), static_cast<double>(th)});

        px += vx;
        py += vy;
    }

    write_rect_file((fs::path(out_dir) / "groundtruth_rect.txt").string(), seq.gt);

    {
        std::ofstream occ_out(fs::path(out_dir) / "occlusion.txt");
        for (char c : occluded) occ_out << (c ? '1' : '0') << "\n";
    }
    if (p.occlude_begin != 0) seq.attributes.push_back("OCC");
    if (p.scale_drift != 0.0) seq.attributes.push_back("SV");
    if (p.brightness_drift != 0.0) seq.attributes.push_back("IV");
    if (p.distractors > 0) seq.attributes.push_back("BC");
    if (!seq.attributes.empty()) {
        std::ofstream attr_out(fs::path(out_dir) / "attributes.txt");
        for (std::size_t i = 0; i < seq.attributes.size(); ++i) {
            attr_out << (i ? "," : "") << seq.attributes[i];
        }
        attr_out << "\n";
    }
    return seq;
}

// ---------------------------------------------------------------------------
// reports

namespace {

// shortest decimal string that parses back to exactly this double
std::string format_number(double v) {
    char buf[64];
    for (int prec = 1; prec <= 17; ++prec) {
        std::snprintf(buf, sizeof buf, "%.*g", prec, v);
        if (std::strtod(buf, nullptr) == v) return buf;
    }
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

// values always carry a decimal point ("1.0", not "1")
std::string format_value(double v) {
    std::string s = format_number(v);
    if (s.find_first_of(".einf") == std::string::npos) s += ".0";
    return s;
}

void svg_chart(std::ostream& out, const EvalCurve& curve, int x_off, const std::string& title,
               const std::string& x_label) {
    constexpr int kW = 420, kH = 300, kL = 50, kT = 30, kR = 20, kB = 45;
    const int plot_w = kW - kL - kR, plot_h = kH - kT - kB;
    const double x_max = curve.samples.back().first;
    auto sx = [&](double t) { return x_off + kL + t / x_max * plot_w; };
    auto sy = [&](double v) { return kT + (1.0 - v) * plot_h; };

    out << "<g font-family=\"sans-serif\" font-size=\"11\">\n";
    out << "<text x=\"" << x_off + kW / 2 << "\" y=\"16\" text-anchor=\"middle\" font-size=\"14\">"
        << title << "</text>\n";
    out << "<rect x=\"" << x_off + kL << "\" y=\"" << kT << "\" width=\"" << plot_w
        << "\" height=\"" << plot_h << "\" fill=\"none\" stroke=\"black\"/>\n";
    for (int i = 0; i <= 5; ++i) {
        const double t = x_max * i / 5.0;
        const double v = i / 5.0;
        out << "<line x1=\"" << sx(t) << "\" y1=\"" << kT + plot_h << "\" x2=\"" << sx(t)
            << "\" y2=\"" << kT + plot_h + 4 << "\" stroke=\"black\"/>\n";
        out << "<text x=\"" << sx(t) << "\" y=\"" << kT + plot_h + 16
            << "\" text-anchor=\"middle\">" << format_number(t) << "</text>\n";
        out << "<line x1=\"" << x_off + kL - 4 << "\" y1=\"" << sy(v) << "\" x2=\"" << x_off + kL
            << "\" y2=\"" << sy(v) << "\" stroke=\"black\"/>\n";
        out << "<text x=\"" << x_off + kL - 7 << "\" y=\"" << sy(v) + 4
            << "\" text-anchor=\"end\">" << format_number(v) << "</text>\n";
    }
    out << "<text x=\"" << x_off + kL + plot_w / 2 << "\" y=\"" << kH - 8
        << "\" text-anchor=\"middle\">" << x_label << "</text>\n";
    out << "<text x=\"" << x_off + 14 << "\" y=\"" << kT + plot_h / 2
        << "\" text-anchor=\"middle\" transform=\"rotate(-90 " << x_off + 14 << " "
        << kT + plot_h / 2 << ")\">fraction of frames</text>\n";
    out << "<polyline fill=\"none\" stroke=\"#c00\" stroke-width=\"1.5\" points=\"";
    for (const auto& [t, v] : curve.samples) out << sx(t) << "," << sy(v) << " ";
    out << "\"/>\n</g>\n";
}

} // namespace

void emit_report(const EvalCurve& precision, const EvalCurve& success, const std::string& csv_path,
                 const std::string& svg_path) {
    if (precision.samples.empty() || success.samples.empty()) {
        throw DimensionError("emit_report: empty curves");
    }
    {
        std::ofstream out(csv_path);
        if (!out) throw IoError("cannot write file: " + csv_path);
        out << "precision\n";
        for (const auto& [t, v] : precision.samples) {
            out << format_number(t) << "," << format_value(v) << "\n";
        }
        out << "success\n";
        for (const auto& [t, v] : success.samples) {
            out << format_number(t) << "," << format_value(v) << "\n";
        }
        if (!out) throw IoError("write failed: " + csv_path);
    }
    if (!svg_path.empty()) {
        std::ofstream out(svg_path);
        if (!out) throw IoError("cannot write file: " + svg_path);
        out << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
            << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"860\" height=\"300\" "
               "viewBox=\"0 0 860 300\">\n";
        svg_chart(out, precision, 0, "precision", "center error threshold (px)");
        svg_chart(out, success, 430, "success", "overlap threshold");
        out << "</svg>\n";
        if (!out) throw IoError("write failed: " + svg_path);
    }
}

std::pair<EvalCurve, EvalCurve> parse_report_csv(const std::string& csv_path) {
    std::ifstream in(csv_path);
    if (!in) throw IoError("cannot open file: " + csv_path);
    EvalCurve precision, success;
    EvalCurve* cur = nullptr;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        if (line == "precision") {
            cur = &precision;
            continue;
        }
        if (line == "success") {
            cur = &success;
            continue;
        }
        if (!cur) throw FormatError(csv_path + " line " + std::to_string(line_no) + ": data before section header");
        const std::size_t comma = line.find(',');
        if (comma == std::string::npos) {
            throw FormatError(csv_path + " line " + std::to_string(line_no) + ": expected 'threshold,value'");
        }
        const double t = std::strtod(line.substr(0, comma).c_str(), nullptr);
        const double v = std::strtod(line.substr(comma + 1).c_str(), nullptr);
        cur->samples.push_back({t, v});
    }
    return {precision, success};
}

} // namespace gdt
