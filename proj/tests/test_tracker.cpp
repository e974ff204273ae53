#include <cmath>
#include <fstream>
#include <sstream>

#include "doctest.h"

#include "gdt/bench.hpp"
#include "gdt/errors.hpp"
#include "gdt/tracker.hpp"
#include "test_util.hpp"

using namespace gdt;

namespace {

// desk-scale config that keeps the tracker tests fast; the variance floor
// sits above the fit floor of this miniature feature space so the density
// ranking stays well-conditioned
TrackerConfig small_config() {
    TrackerConfig cfg;
    cfg.net.input_size = 48;
    cfg.net.conv_spec = {{5, 1, 8}, {3, 1, 16}, {3, 1, 16}};
    cfg.net.fc6_dim = 96;
    cfg.net.feature_dim = 48;
    cfg.sampler.n_pos = 24;
    cfg.sampler.n_neg = 72;
    cfg.sampler.n_candidates = 150;
    cfg.init_iterations = 80;
    cfg.update.variance_floor = 1e-2;
    cfg.seed = 6;
    return cfg;
}

SynthParams small_sequence_params() {
    SynthParams p;
    p.frames = 6;
    p.velocity_x = 2.0;
    p.velocity_y = 1.0;
    p.noise_sigma = 6.0;
    return p;
}

std::string serialize(const TrackerState& st) {
    std::ostringstream out;
    save_state(st, out);
    return out.str();
}

struct InitFixture {
    std::string dir;
    Sequence seq;
    ImageBuffer first;
    TrackerConfig cfg;

    InitFixture()
        : dir(testutil::scratch_dir("tracker_fix")),
          seq(synth_sequence(small_sequence_params(), 95, dir)),
          first(load_image(seq.frame_paths[0])),
          cfg(small_config()) {}
};

} // namespace

TEST_CASE("initialize with zero iterations keeps the input network") {
    InitFixture fx;
    fx.cfg.init_iterations = 0;
    const Network net = init_network(fx.cfg.net, fx.cfg.seed);
    const TrackerState st = initialize(fx.first, fx.seq.gt[0], fx.cfg, net);
    CHECK(st.net == net);
    CHECK(st.frame_index == 1);
    CHECK(st.current_box == fx.seq.gt[0]);
    CHECK(static_cast<int>(st.model.pos.mu.size()) == fx.cfg.net.feature_dim);
    for (double v : st.model.pos.var) CHECK(v >= fx.cfg.update.variance_floor);
}

TEST_CASE("initialize separates positive and negative scores") {
    InitFixture fx;
    const TrackerState st = initialize(fx.first, fx.seq.gt[0], fx.cfg);

    // fresh samples, scored against the fitted model
    Rng rng(1234);
    const auto pos = sample_positives(fx.seq.gt[0], fx.first.width, fx.first.height, fx.cfg.sampler, rng);
    const auto neg = sample_negatives(fx.seq.gt[0], fx.first.width, fx.first.height, fx.cfg.sampler, rng);
    auto mean_score = [&](const std::vector<BoundingBox>& boxes) {
        double sum = 0.0;
        for (const auto& b : boxes) {
            const ImageBuffer patch = crop_resize(fx.first, b, fx.cfg.net.input_size, fx.cfg.net.input_size);
            sum += score(st.model, forward_features(st.net, patch).first);
        }
        return sum / static_cast<double>(boxes.size());
    };
    CHECK(mean_score(pos) > mean_score(neg));
}

TEST_CASE("initialize is deterministic") {
    InitFixture fx;
    const TrackerState a = initialize(fx.first, fx.seq.gt[0], fx.cfg);
    const TrackerState b = initialize(fx.first, fx.seq.gt[0], fx.cfg);
    CHECK(serialize(a) == serialize(b));
}

TEST_CASE("initialize rejects a box outside the frame") {
    InitFixture fx;
    CHECK_THROWS_AS(initialize(fx.first, BoundingBox{-10, 0, 40, 40}, fx.cfg), GeometryError);
}

TEST_CASE("track_frame on the initialization frame stays on target") {
    InitFixture fx;
    TrackerState st = initialize(fx.first, fx.seq.gt[0], fx.cfg);
    const auto [box, s] = track_frame(st, fx.first);
    CHECK(iou(box, fx.seq.gt[0]) >= 0.8);
    CHECK(std::isfinite(s));
    CHECK(st.frame_index == 2);
}

TEST_CASE("argmax contract: returned score tops every candidate") {
    InitFixture fx;
    fx.cfg.debug_retain_candidates = true;
    TrackerState st = initialize(fx.first, fx.seq.gt[0], fx.cfg);
    for (std::size_t i = 1; i < fx.seq.frame_paths.size(); ++i) {
        const auto [box, s] = track_frame(st, load_image(fx.seq.frame_paths[i]));
        REQUIRE(st.last_debug.argmax >= 0);
        for (double cs : st.last_debug.candidate_scores) CHECK(s >= cs);
        CHECK(st.last_debug.candidates.boxes[st.last_debug.argmax] == box);
    }
}

TEST_CASE("aspect ratio is conserved across frames") {
    InitFixture fx;
    TrackerState st = initialize(fx.first, fx.seq.gt[0], fx.cfg);
    const double aspect0 = fx.seq.gt[0].aspect();
    for (std::size_t i = 1; i < fx.seq.frame_paths.size(); ++i) {
        track_frame(st, load_image(fx.seq.frame_paths[i]));
        CHECK(std::abs(st.current_box.aspect() - aspect0) <= 1e-9 * aspect0);
    }
    CHECK(st.initial_aspect == aspect0);
}

TEST_CASE("freeze flags pin the model and network bit-exactly") {
    InitFixture fx;
    fx.cfg.flags.freeze_net = true;
    fx.cfg.flags.freeze_gaussians = true;
    TrackerState st = initialize(fx.first, fx.seq.gt[0], fx.cfg);
    const Network net0 = st.net;
    const AppearanceModel model0 = st.model;
    for (std::size_t i = 1; i < fx.seq.frame_paths.size(); ++i) {
        track_frame(st, load_image(fx.seq.frame_paths[i]));
    }
    CHECK(st.net == net0);
    CHECK(st.model == model0);
}

TEST_CASE("a frame failing the candidate phase keeps the box and reports -inf") {
    InitFixture fx;
    TrackerState st = initialize(fx.first, fx.seq.gt[0], fx.cfg);
    const std::string before = serialize(st);
    ImageBuffer empty; // degenerate frame: every crop fails
    empty.width = 0;
    empty.height = 0;
    empty.channels = 1;
    const auto [box, s] = track_frame(st, empty);
    CHECK(box == fx.seq.gt[0]);
    CHECK(s == -std::numeric_limits<double>::infinity());
    CHECK(st.frame_index == 2);
    CHECK(st.last_update_skipped);
    const std::string after = serialize(st);
    CHECK(states_equal_except_box(before, after));
}

TEST_CASE("gate rejection leaves everything but the box untouched") {
    InitFixture fx;
    fx.cfg.similarity_threshold = 2.0; // cosine can never reach this
    TrackerState st = initialize(fx.first, fx.seq.gt[0], fx.cfg);
    const std::string before = serialize(st);
    const auto [box, s] = track_frame(st, load_image(fx.seq.frame_paths[1]));
    const std::string after = serialize(st);
    CHECK(states_equal_except_box(before, after));
    CHECK(st.last_update_skipped);
    CHECK(before != after); // box and frame counter did move
}

TEST_CASE("should_update gate") {
    InitFixture fx;
    TrackerState st = initialize(fx.first, fx.seq.gt[0], fx.cfg);
    const FeatureVector same = st.last_update_feature;
    FeatureVector orthogonal(same.size(), 0.0);
    // build a vector orthogonal to `same`: swap two coordinates, negate one
    orthogonal[0] = -same[1];
    orthogonal[1] = same[0];

    CHECK_FALSE(should_update(st, -0.1, same));          // negative score fails
    CHECK(should_update(st, 1.0, same));                 // cosine 1 passes
    CHECK_FALSE(should_update(st, 1.0, orthogonal));     // cosine ~0 fails at 0.5
    CHECK(should_update(st, 0.0, same));                 // gate is "not negative"
}

TEST_CASE("state round trip is bit-exact") {
    InitFixture fx;
    TrackerState st = initialize(fx.first, fx.seq.gt[0], fx.cfg);
    track_frame(st, load_image(fx.seq.frame_paths[1]));

    const std::string dir = testutil::scratch_dir("state_rt");
    const std::string path = dir + "/state.gdtw";
    save_state(st, path);
    const TrackerState loaded = load_state(path);

    CHECK(loaded.net == st.net);
    CHECK(loaded.model == st.model);
    CHECK(loaded.current_box == st.current_box);
    CHECK(loaded.initial_aspect == st.initial_aspect);
    CHECK(loaded.frame_index == st.frame_index);
    CHECK(loaded.last_update_feature == st.last_update_feature);
    CHECK(serialize(loaded) == serialize(st));
}

TEST_CASE("state file error paths") {
    InitFixture fx;
    const std::string dir = testutil::scratch_dir("state_err");
    TrackerState st = initialize(fx.first, fx.seq.gt[0], fx.cfg);

    SUBCASE("weights-only file is not a state file") {
        save_weights(st.net, dir + "/w.gdtw");
        CHECK_THROWS_AS(load_state(dir + "/w.gdtw"), FormatError);
    }
    SUBCASE("state file is not a weights file") {
        save_state(st, dir + "/s.gdtw");
        CHECK_THROWS_AS(load_weights(dir + "/s.gdtw"), FormatError);
    }
    SUBCASE("corrupted gaussian section names the section") {
        std::ostringstream buf;
        save_state(st, buf);
        std::istringstream in(buf.str());
        auto tensors = read_gdtw(in, "mem");
        for (auto& t : tensors) {
            if (t.name == "gauss_neg/var") t.values[0] = -1.0;
        }
        std::ofstream out(dir + "/bad.gdtw", std::ios::binary);
        write_gdtw(out, tensors);
        out.close();
        CHECK_THROWS_WITH_AS(load_state(dir + "/bad.gdtw"), doctest::Contains("gauss_neg"),
                             FormatError);
    }
}

TEST_CASE("pretrain objectness") {
    const std::string dir = testutil::scratch_dir("corpus");
    namespace fs = std::filesystem;
    fs::create_directories(fs::path(dir) / "object");
    fs::create_directories(fs::path(dir) / "background");
    Rng rng(31);
    for (int i = 0; i < 24; ++i) {
        char name[32];
        std::snprintf(name, sizeof name, "%03d.pgm", i);
        save_image(synth_object_patch(48, 48, rng), (fs::path(dir) / "object" / name).string());
        save_image(synth_background_patch(48, 48, rng), (fs::path(dir) / "background" / name).string());
    }

    TrackerConfig cfg = small_config();

    SUBCASE("zero iterations returns the seeded initialization") {
        PretrainStats stats;
        const Network net = pretrain_objectness(dir, 0, cfg, &stats);
        CHECK(net == init_network(cfg.net, cfg.seed));
        CHECK(stats.n_object == 24);
        CHECK(stats.n_background == 24);
    }
    SUBCASE("separable corpus trains past 0.9 holdout accuracy, deterministically") {
        PretrainStats stats;
        const Network a = pretrain_objectness(dir, 120, cfg, &stats);
        CHECK(stats.holdout_accuracy > 0.9);
        const Network b = pretrain_objectness(dir, 120, cfg);
        CHECK(a == b);
        CHECK_FALSE(a == init_network(cfg.net, cfg.seed)); // conv stack did move
    }
    SUBCASE("empty corpus is an error") {
        const std::string empty = testutil::scratch_dir("corpus_empty");
        fs::create_directories(fs::path(empty) / "object");
        fs::create_directories(fs::path(empty) / "background");
        CHECK_THROWS_AS(pretrain_objectness(empty, 10, cfg), IoError);
    }
}

TEST_CASE("tracker config validation") {
    TrackerConfig cfg = small_config();
    cfg.fc_learning_rate = 0.0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = small_config();
    cfg.init_iterations = -1;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
}
