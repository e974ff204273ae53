#pragma once

#include <string>

#include "gdt/tracker.hpp"

namespace gdt {

// Parsed `key = value` configuration plus the optional pretrained weights
// reference that the track command consumes.
struct AppConfig {
    TrackerConfig tracker;
    std::string weights_file;
};

/// UTF-8 `key = value` lines; '#' starts a comment; blank lines are ignored.
/// Unknown keys and unparsable values are ConfigErrors that name the key and
/// line number. See README for the key list.
AppConfig parse_config_text(const std::string& text, const std::string& origin = "<config>");
AppConfig parse_config_file(const std::string& path);

} // namespace gdt
