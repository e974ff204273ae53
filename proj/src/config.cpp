#include "gdt/config.hpp"

#include <cctype>
#include <fstream>
#include <sstream>

#include "gdt/errors.hpp"

namespace gdt {

namespace {

std::string trim(const std::string& s) {
    std::size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return s.substr(b, e - b);
}

struct KeyContext {
    const std::string& origin;
    int line;
    const std::string& key;

    [[noreturn]] void fail(const std::string& why) const {
        throw ConfigError(origin + ":" + std::to_string(line) + ": key '" + key + "': " + why);
    }
};

int parse_int(const KeyContext& ctx, const std::string& v) {
    try {
        std::size_t used = 0;
        const int out = std::stoi(v, &used);
        if (used != v.size()) ctx.fail("trailing characters in integer '" + v + "'");
        return out;
    } catch (const ConfigError&) {
        throw;
    } catch (const std::exception&) {
        ctx.fail("expected an integer, got '" + v + "'");
    }
}

double parse_double(const KeyContext& ctx, const std::string& v) {
    try {
        std::size_t used = 0;
        const double out = std::stod(v, &used);
        if (used != v.size()) ctx.fail("trailing characters in number '" + v + "'");
        return out;
    } catch (const ConfigError&) {
        throw;
    } catch (const std::exception&) {
        ctx.fail("expected a number, got '" + v + "'");
    }
}

bool parse_bool(const KeyContext& ctx, const std::string& v) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    ctx.fail("expected true/false, got '" + v + "'");
}

// "5x1x8,3x1x16,3x1x32" -> stages of kernel x stride x out_channels
std::vector<ConvStage> parse_conv_spec(const KeyContext& ctx, const std::string& v) {
    std::vector<ConvStage> stages;
    std::stringstream ss(v);
    std::string stage;
    while (std::getline(ss, stage, ',')) {
        stage = trim(stage);
        int vals[3];
        std::size_t pos = 0;
        for (int i = 0; i < 3; ++i) {
            std::size_t next = i < 2 ? stage.find('x', pos) : stage.size();
            if (next == std::string::npos) ctx.fail("stage '" + stage + "' is not KxSxC");
            try {
                std::size_t used = 0;
                vals[i] = std::stoi(stage.substr(pos, next - pos), &used);
                if (used != next - pos) throw std::invalid_argument(stage);
            } catch (const std::exception&) {
                ctx.fail("stage '" + stage + "' is not KxSxC");
            }
            pos = next + 1;
        }
        stages.push_back({vals[0], vals[1], vals[2]});
    }
    if (stages.empty()) ctx.fail("conv_spec needs at least one stage");
    return stages;
}

} // namespace

AppConfig parse_config_text(const std::string& text, const std::string& origin) {
    AppConfig app;
    TrackerConfig& t = app.tracker;

    std::stringstream lines(text);
    std::string raw;
    int line_no = 0;
    while (std::getline(lines, raw)) {
        ++line_no;
        const std::size_t hash = raw.find('#');
        std::string line = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
        if (line.empty()) continue;
        const std::size_t eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError(origin + ":" + std::to_string(line_no) +
                              ": expected 'key = value', got '" + line + "'");
        }
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        const KeyContext ctx{origin, line_no, key};
        if (value.empty()) ctx.fail("empty value");

        if (key == "net.input_size") t.net.input_size = parse_int(ctx, value);
        else if (key == "net.input_channels") t.net.input_channels = parse_int(ctx, value);
        else if (key == "net.conv_spec") t.net.conv_spec = parse_conv_spec(ctx, value);
        else if (key == "net.fc6_dim") t.net.fc6_dim = parse_int(ctx, value);
        else if (key == "net.feature_dim") t.net.feature_dim = parse_int(ctx, value);
        else if (key == "net.fc7_activation") {
            if (value == "relu") t.net.fc7_activation = Fc7Activation::Relu;
            else if (value == "identity") t.net.fc7_activation = Fc7Activation::Identity;
            else ctx.fail("expected relu or identity, got '" + value + "'");
        }
        else if (key == "sampler.n_pos") t.sampler.n_pos = parse_int(ctx, value);
        else if (key == "sampler.n_neg") t.sampler.n_neg = parse_int(ctx, value);
        else if (key == "sampler.pos_min_iou") t.sampler.pos_min_iou = parse_double(ctx, value);
        else if (key == "sampler.neg_max_iou") t.sampler.neg_max_iou = parse_double(ctx, value);
        else if (key == "sampler.neg_min_center_dist") t.sampler.neg_min_center_dist = parse_double(ctx, value);
        else if (key == "sampler.search_radius_factor") t.sampler.search_radius_factor = parse_double(ctx, value);
        else if (key == "sampler.n_candidates") t.sampler.n_candidates = parse_int(ctx, value);
        else if (key == "sampler.n_scales") t.sampler.n_scales = parse_int(ctx, value);
        else if (key == "sampler.scale_step") t.sampler.scale_step = parse_double(ctx, value);
        else if (key == "update.gamma") t.update.gamma = parse_double(ctx, value);
        else if (key == "update.variance_floor") t.update.variance_floor = parse_double(ctx, value);
        else if (key == "update.variance_cross_term") {
            if (value == "sigma_diff") t.update.variance_cross_term = VarianceCrossTerm::SigmaDiff;
            else if (value == "mu_diff") t.update.variance_cross_term = VarianceCrossTerm::MuDiff;
            else ctx.fail("expected sigma_diff or mu_diff, got '" + value + "'");
        }
        else if (key == "tracker.fc_learning_rate") t.fc_learning_rate = parse_double(ctx, value);
        else if (key == "tracker.gradient_clip") t.gradient_clip = parse_double(ctx, value);
        else if (key == "tracker.init_iterations") t.init_iterations = parse_int(ctx, value);
        else if (key == "tracker.online_iterations") t.online_iterations = parse_int(ctx, value);
        else if (key == "tracker.score_gate") t.score_gate = parse_double(ctx, value);
        else if (key == "tracker.similarity_threshold") t.similarity_threshold = parse_double(ctx, value);
        else if (key == "tracker.pretrain_learning_rate") t.pretrain_learning_rate = parse_double(ctx, value);
        else if (key == "tracker.pretrain_batch") t.pretrain_batch = parse_int(ctx, value);
        else if (key == "tracker.freeze_net") t.flags.freeze_net = parse_bool(ctx, value);
        else if (key == "tracker.freeze_gaussians") t.flags.freeze_gaussians = parse_bool(ctx, value);
        else if (key == "tracker.weights_file") app.weights_file = value;
        else {
            throw ConfigError(origin + ":" + std::to_string(line_no) + ": unknown key '" + key + "'");
        }
    }
    t.validate();
    return app;
}

AppConfig parse_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config file: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config_text(ss.str(), path);
}

} // namespace gdt
