#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "doctest.h"

#include "gdt/bench.hpp"
#include "gdt/config.hpp"
#include "gdt/errors.hpp"
#include "test_util.hpp"

using namespace gdt;
namespace fs = std::filesystem;

namespace {

std::vector<BoundingBox> offset_boxes(const std::vector<BoundingBox>& src, double dx, double dy) {
    std::vector<BoundingBox> out = src;
    for (auto& b : out) {
        b.x += dx;
        b.y += dy;
    }
    return out;
}

// minimal well-formedness check: angle-bracket tokens balance as a tree
bool xml_well_formed(const std::string& text) {
    std::vector<std::string> stack;
    std::size_t i = 0;
    bool seen_root = false;
    while (i < text.size()) {
        if (text[i] != '<') {
            ++i;
            continue;
        }
        const std::size_t end = text.find('>', i);
        if (end == std::string::npos) return false;
        std::string tag = text.substr(i + 1, end - i - 1);
        i = end + 1;
        if (tag.empty()) return false;
        if (tag[0] == '?' || tag[0] == '!') continue; // declaration / comment
        const bool closing = tag[0] == '/';
        const bool self_closing = tag.back() == '/';
        std::string name = tag.substr(closing ? 1 : 0);
        const std::size_t sp = name.find_first_of(" \t\n/");
        if (sp != std::string::npos) name = name.substr(0, sp);
        if (name.empty()) return false;
        if (closing) {
            if (stack.empty() || stack.back() != name) return false;
            stack.pop_back();
        } else if (!self_closing) {
            if (stack.empty() && seen_root) return false;
            stack.push_back(name);
            seen_root = true;
        }
    }
    return stack.empty() && seen_root;
}

} // namespace

TEST_CASE("rect file parsing converts 1-based to 0-based") {
    const std::string dir = testutil::scratch_dir("rects");
    testutil::write_bytes(dir + "/gt.txt", "10,20,30,40\n5 6 7 8\n1\t2\t3\t4\n");
    const auto boxes = read_rect_file(dir + "/gt.txt");
    REQUIRE(boxes.size() == 3);
    CHECK(boxes[0] == BoundingBox{9, 19, 30, 40});
    CHECK(boxes[1] == BoundingBox{4, 5, 7, 8});
    CHECK(boxes[2] == BoundingBox{0, 1, 3, 4});
}

TEST_CASE("rect file errors carry the line number") {
    const std::string dir = testutil::scratch_dir("rects_err");
    testutil::write_bytes(dir + "/bad.txt", "1,2,3,4\n5,6,7\n");
    CHECK_THROWS_WITH_AS(read_rect_file(dir + "/bad.txt"), doctest::Contains("line 2"), FormatError);
    testutil::write_bytes(dir + "/zero.txt", "1,2,0,4\n");
    CHECK_THROWS_AS(read_rect_file(dir + "/zero.txt"), FormatError);
}

TEST_CASE("rect file round trip") {
    const std::string dir = testutil::scratch_dir("rects_rt");
    const std::vector<BoundingBox> boxes{{9, 19, 30, 40}, {0, 0, 5, 6}};
    write_rect_file(dir + "/r.txt", boxes);
    CHECK(read_rect_file(dir + "/r.txt") == boxes);
    CHECK(testutil::read_bytes(dir + "/r.txt") == "10,20,30,40\n1,1,5,6\n");
}

TEST_CASE("load_sequence validates the frame / gt pairing") {
    const std::string dir = testutil::scratch_dir("seq_mismatch");
    fs::create_directories(fs::path(dir) / "img");
    gdt::Rng rng(3);
    for (int i = 1; i <= 5; ++i) {
        char name[16];
        std::snprintf(name, sizeof name, "%04d.pgm", i);
        save_image(testutil::random_image(32, 24, rng), (fs::path(dir) / "img" / name).string());
    }
    testutil::write_bytes(dir + "/groundtruth_rect.txt", "1,1,4,4\n1,1,4,4\n1,1,4,4\n1,1,4,4\n");
    CHECK_THROWS_WITH_AS(load_sequence(dir), doctest::Contains("4"), FormatError);
}

TEST_CASE("precision curve worked examples") {
    std::vector<BoundingBox> gt;
    for (int i = 0; i < 10; ++i) gt.push_back({10.0 * i, 5.0, 20, 20});

    SUBCASE("perfect tracking is 1 at every threshold") {
        const EvalCurve c = precision_curve(gt, gt);
        CHECK(c.samples.size() == 51);
        for (const auto& [t, v] : c.samples) CHECK(v == 1.0);
        CHECK(precision_at(c, 20.0) == 1.0);
    }
    SUBCASE("constant 25px offset flips between t=20 and t=30") {
        const EvalCurve c = precision_curve(offset_boxes(gt, 25.0, 0.0), gt);
        CHECK(precision_at(c, 20.0) == 0.0);
        CHECK(precision_at(c, 25.0) == 1.0);
        CHECK(precision_at(c, 30.0) == 1.0);
    }
    SUBCASE("half exact, half far off gives 0.5 at t=20") {
        auto pred = gt;
        for (std::size_t i = 0; i < pred.size(); i += 2) pred[i].x += 100.0;
        const EvalCurve c = precision_curve(pred, gt);
        CHECK(precision_at(c, 20.0) == 0.5);
    }
    SUBCASE("curves are monotone non-decreasing in the threshold") {
        gdt::Rng rng(4);
        std::vector<BoundingBox> pred;
        for (std::size_t i = 0; i < gt.size(); ++i) {
            pred.push_back({gt[i].x + rng.uniform(-40, 40), gt[i].y + rng.uniform(-40, 40), 20, 20});
        }
        const EvalCurve c = precision_curve(pred, gt);
        for (std::size_t i = 1; i < c.samples.size(); ++i) {
            CHECK(c.samples[i].second >= c.samples[i - 1].second);
        }
    }
    SUBCASE("length mismatch is an error") {
        CHECK_THROWS_AS(precision_curve(gt, std::vector<BoundingBox>(gt.begin(), gt.end() - 1)),
                        DimensionError);
    }
}

TEST_CASE("success curve worked examples") {
    std::vector<BoundingBox> gt;
    for (int i = 0; i < 10; ++i) gt.push_back({10.0 * i, 5.0, 20, 20});

    SUBCASE("perfect tracking has AUC 1") {
        const EvalCurve c = success_curve(gt, gt);
        CHECK(c.samples.size() == 101);
        CHECK(success_auc(c) == 1.0);
    }
    SUBCASE("disjoint boxes leave only the t=0 bin") {
        const EvalCurve c = success_curve(offset_boxes(gt, 1000.0, 0.0), gt);
        CHECK(success_auc(c) == doctest::Approx(1.0 / 101.0));
    }
    SUBCASE("constant IoU 0.5 gives AUC within one bin of 0.5") {
        // shift by a third of the width: overlap 2/3 w, union 4/3 w -> IoU 0.5
        auto pred = gt;
        for (auto& b : pred) b.x += 20.0 / 3.0;
        const EvalCurve c = success_curve(pred, gt);
        CHECK(std::abs(success_auc(c) - 0.5) <= 1.0 / 101.0 + 1e-12);
    }
    SUBCASE("monotone non-increasing in the overlap threshold") {
        gdt::Rng rng(5);
        auto pred = gt;
        for (auto& b : pred) {
            b.x += rng.uniform(-15, 15);
            b.y += rng.uniform(-15, 15);
        }
        const EvalCurve c = success_curve(pred, gt);
        for (std::size_t i = 1; i < c.samples.size(); ++i) {
            CHECK(c.samples[i].second <= c.samples[i - 1].second);
        }
    }
    SUBCASE("AUC equals the mean of the samples") {
        gdt::Rng rng(6);
        auto pred = gt;
        for (auto& b : pred) b.x += rng.uniform(0, 25);
        const EvalCurve c = success_curve(pred, gt);
        double mean = 0.0;
        for (const auto& [t, v] : c.samples) mean += v;
        mean /= static_cast<double>(c.samples.size());
        CHECK(success_auc(c) == mean);
    }
}

TEST_CASE("attribute report") {
    std::vector<BoundingBox> gt{{0, 0, 10, 10}, {5, 5, 10, 10}};
    SequenceResult exact{"a", {"OCC"}, gt, gt};
    SequenceResult off{"b", {}, offset_boxes(gt, 100, 0), gt};
    SequenceResult off2{"c", {"OCC", "SV"}, offset_boxes(gt, 100, 0), gt};

    SUBCASE("single tagged sequence: row equals its own scores") {
        const auto rows = attribute_report({exact});
        REQUIRE(rows.size() == 2);
        CHECK(rows[0].attribute == "ALL");
        CHECK(rows[1].attribute == "OCC");
        CHECK(rows[1].precision20 == 1.0);
        CHECK(rows[1].success == 1.0);
    }
    SUBCASE("untagged sequences appear only under ALL") {
        const auto rows = attribute_report({exact, off});
        REQUIRE(rows.size() == 2);
        CHECK(rows[0].attribute == "ALL");
        CHECK(rows[0].sequences == 2);
        CHECK(rows[1].attribute == "OCC");
        CHECK(rows[1].sequences == 1);
    }
    SUBCASE("shared tag averages the member scores") {
        const auto rows = attribute_report({exact, off2});
        const auto occ = std::find_if(rows.begin(), rows.end(),
                                      [](const AttributeRow& r) { return r.attribute == "OCC"; });
        REQUIRE(occ != rows.end());
        CHECK(occ->sequences == 2);
        CHECK(occ->precision20 == doctest::Approx(0.5));
    }
}

TEST_CASE("synthetic sequences are deterministic and annotated") {
    SynthParams p;
    p.frames = 12;
    p.velocity_x = 2.0;
    p.velocity_y = 0.0;
    p.noise_sigma = 4.0;
    p.occlude_begin = 5;
    p.occlude_end = 8;

    const std::string dir_a = testutil::scratch_dir("synth_a");
    const std::string dir_b = testutil::scratch_dir("synth_b");
    const Sequence a = synth_sequence(p, 42, dir_a);
    const Sequence b = synth_sequence(p, 42, dir_b);

    SUBCASE("same seed, bit-identical frames and ground truth") {
        REQUIRE(a.frame_paths.size() == 12);
        for (std::size_t i = 0; i < a.frame_paths.size(); ++i) {
            CHECK(testutil::read_bytes(a.frame_paths[i]) == testutil::read_bytes(b.frame_paths[i]));
        }
        CHECK(testutil::read_bytes(dir_a + "/groundtruth_rect.txt") ==
              testutil::read_bytes(dir_b + "/groundtruth_rect.txt"));
        const Sequence c = synth_sequence(p, 43, testutil::scratch_dir("synth_c"));
        CHECK(testutil::read_bytes(a.frame_paths[0]) != testutil::read_bytes(c.frame_paths[0]));
    }
    SUBCASE("integer velocity gives an arithmetic ground-truth sequence") {
        for (std::size_t i = 1; i < a.gt.size(); ++i) {
            CHECK(a.gt[i].x - a.gt[i - 1].x == 2.0);
            CHECK(a.gt[i].y == a.gt[0].y);
        }
    }
    SUBCASE("occlusion sidecar flags exactly the occluded frames") {
        std::ifstream occ(dir_a + "/occlusion.txt");
        std::string line;
        int frame = 0;
        while (std::getline(occ, line)) {
            ++frame;
            const bool expect = frame >= 5 && frame < 8;
            CHECK(line == (expect ? "1" : "0"));
        }
        CHECK(frame == 12);
        CHECK(a.attributes == std::vector<std::string>{"OCC"});
    }
    SUBCASE("the sequence loads back through the standard loader") {
        const Sequence loaded = load_sequence(dir_a);
        CHECK(loaded.frame_paths.size() == a.frame_paths.size());
        CHECK(loaded.gt == a.gt);
        CHECK(loaded.attributes == a.attributes);
    }
}

TEST_CASE("report emission") {
    std::vector<BoundingBox> gt;
    for (int i = 0; i < 4; ++i) gt.push_back({5.0 * i, 0, 12, 12});
    const EvalCurve prec = precision_curve(gt, gt);
    const EvalCurve succ = success_curve(offset_boxes(gt, 3, 0), gt);
    const std::string dir = testutil::scratch_dir("report");

    SUBCASE("csv round-trips exactly and starts with 0,1.0 for perfect tracking") {
        emit_report(prec, succ, dir + "/r.csv");
        const std::string text = testutil::read_bytes(dir + "/r.csv");
        CHECK(text.rfind("precision\n0,1.0\n", 0) == 0);
        const auto [p2, s2] = parse_report_csv(dir + "/r.csv");
        CHECK(p2.samples == prec.samples);
        CHECK(s2.samples == succ.samples);
    }
    SUBCASE("svg is well-formed") {
        emit_report(prec, succ, dir + "/r.csv", dir + "/r.svg");
        const std::string svg = testutil::read_bytes(dir + "/r.svg");
        CHECK(svg.find("<svg") != std::string::npos);
        CHECK(xml_well_formed(svg));
    }
}

TEST_CASE("run_ope output shape") {
    const std::string dir = testutil::scratch_dir("ope");
    SynthParams p;
    p.frames = 4;
    p.noise_sigma = 4.0;
    const Sequence seq = synth_sequence(p, 17, dir);

    TrackerConfig cfg;
    cfg.net.input_size = 32;
    cfg.net.conv_spec = {{5, 1, 6}, {3, 1, 12}};
    cfg.net.fc6_dim = 32;
    cfg.net.feature_dim = 24;
    cfg.sampler.n_pos = 12;
    cfg.sampler.n_neg = 36;
    cfg.sampler.n_candidates = 50;
    cfg.init_iterations = 30;
    cfg.seed = 3;

    const auto pred = run_ope(seq, cfg);
    REQUIRE(pred.size() == seq.frame_paths.size());
    CHECK(pred[0] == seq.gt[0]); // OPE starts from the ground truth
}

TEST_CASE("config file parsing") {
    SUBCASE("values land in the right fields") {
        const AppConfig app = parse_config_text(
            "# comment\n"
            "net.input_size = 32\n"
            "net.conv_spec = 5x1x6,3x1x12\n"
            "sampler.n_candidates = 120   # trailing comment\n"
            "update.gamma = 0.9\n"
            "update.variance_cross_term = mu_diff\n"
            "tracker.fc_learning_rate = 0.01\n"
            "tracker.freeze_net = true\n"
            "tracker.weights_file = w.gdtw\n");
        CHECK(app.tracker.net.input_size == 32);
        REQUIRE(app.tracker.net.conv_spec.size() == 2);
        CHECK(app.tracker.net.conv_spec[1].out_channels == 12);
        CHECK(app.tracker.sampler.n_candidates == 120);
        CHECK(app.tracker.update.gamma == 0.9);
        CHECK(app.tracker.update.variance_cross_term == VarianceCrossTerm::MuDiff);
        CHECK(app.tracker.fc_learning_rate == 0.01);
        CHECK(app.tracker.flags.freeze_net);
        CHECK(app.weights_file == "w.gdtw");
    }
    SUBCASE("unknown keys are errors with the line number") {
        CHECK_THROWS_WITH_AS(parse_config_text("net.input_size = 32\nbogus.key = 1\n"),
                             doctest::Contains("bogus.key"), ConfigError);
        CHECK_THROWS_WITH_AS(parse_config_text("\n\nx = 1\n"), doctest::Contains(":3"), ConfigError);
    }
    SUBCASE("bad values are errors") {
        CHECK_THROWS_AS(parse_config_text("net.input_size = soon\n"), ConfigError);
        CHECK_THROWS_AS(parse_config_text("tracker.freeze_net = maybe\n"), ConfigError);
        CHECK_THROWS_AS(parse_config_text("net.conv_spec = 5x1\n"), ConfigError);
        CHECK_THROWS_AS(parse_config_text("net.input_size 32\n"), ConfigError);
    }
    SUBCASE("defaults validate") {
        const AppConfig app = parse_config_text("");
        CHECK(app.tracker.net.input_size == 64);
        CHECK(app.tracker.sampler.n_candidates == 300);
        CHECK(app.tracker.update.gamma == 0.95);
    }
}
