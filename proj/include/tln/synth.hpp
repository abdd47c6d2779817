#pragma once

#include <cstdint>
#include <string>

#include "tln/data.hpp"

namespace tln {

// Parametric shape/texture classes rendered at a configurable resolution.
// class_offset selects a window into the archetype table, so a source and a
// target dataset with non-overlapping windows share no classes (the desk
// analog of the ImageNet -> target relationship).
struct SynthSpec {
    std::string name = "synthetic";
    std::int64_t classes = 8;
    std::int64_t channels = 3;
    std::int64_t height = 16;
    std::int64_t width = 16;
    std::int64_t per_class = 250;
    std::uint64_t seed = 1;
    std::int64_t class_offset = 0;
    double noise = 0.06;
};

std::int64_t synth_archetype_count();
std::string synth_archetype_name(std::int64_t index);

Dataset generate_shapes(const SynthSpec& spec);

}  // namespace tln
