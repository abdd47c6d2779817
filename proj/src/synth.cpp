#include "tln/synth.hpp"

#include <algorithm>
#include <cmath>

#include "tln/error.hpp"

namespace tln {

namespace {

constexpr const char* kArchetypes[] = {
    "disc",      "box",     "triangle", "hstripes", "vstripes", "dstripes", "checker",
    "plus",      "ring",    "xcross",   "dots",     "halves",   "radial",   "diamond",
};
constexpr std::int64_t kArchetypeCount = std::int64_t(std::size(kArchetypes));

struct Palette {
    double fg[3];
    double bg[3];
};

Palette sample_palette(std::int64_t channels, Rng& rng) {
    // per-sample colors: class identity lives in the shape, not the hue
    Palette p{};
    const double hue = rng.uniform(0.0, 6.2831853);
    const double bg_level = rng.uniform(0.05, 0.35);
    for (int c = 0; c < 3; ++c) {
        const double phase = hue + 2.0943951 * c;
        p.fg[c] = std::clamp(0.62 + 0.3 * std::cos(phase) + rng.uniform(-0.06, 0.06), 0.0, 1.0);
        p.bg[c] = std::clamp(bg_level + rng.uniform(-0.04, 0.04), 0.0, 1.0);
    }
    if (channels == 1) {
        p.fg[0] = rng.uniform(0.65, 0.95);
        p.bg[0] = bg_level;
    }
    return p;
}

void render(std::int64_t archetype, std::int64_t C, std::int64_t H, std::int64_t W, double noise,
            Rng& rng, std::uint8_t* out) {
    const Palette pal = sample_palette(C, rng);
    const double cy = double(H) / 2.0 + rng.uniform(-double(H) / 8.0, double(H) / 8.0);
    const double cx = double(W) / 2.0 + rng.uniform(-double(W) / 8.0, double(W) / 8.0);
    const double r = double(std::min(H, W)) * rng.uniform(0.27, 0.40);
    const double t = std::max(1.2, r / 3.0);
    const std::int64_t period = 2 + rng.below(3);
    const std::int64_t phase = rng.below(period * 2);
    const bool orient = rng.bernoulli(0.5);

    for (std::int64_t y = 0; y < H; ++y) {
        for (std::int64_t x = 0; x < W; ++x) {
            const double dy = double(y) - cy;
            const double dx = double(x) - cx;
            const double dist = std::sqrt(dx * dx + dy * dy);
            double m = 0.0;
            switch (archetype) {
                case 0: m = dist <= r ? 1.0 : 0.0; break;
                case 1: {
                    const double d = std::max(std::abs(dx), std::abs(dy));
                    m = (d <= r && d >= r - t) ? 1.0 : 0.0;
                    break;
                }
                case 2:
                    m = (dy >= -r && dy <= r && std::abs(dx) <= (dy + r) / 2.0) ? 1.0 : 0.0;
                    break;
                case 3: m = ((y + phase) / period) % 2 == 0 ? 1.0 : 0.0; break;
                case 4: m = ((x + phase) / period) % 2 == 0 ? 1.0 : 0.0; break;
                case 5: m = ((x + y + phase) / period) % 2 == 0 ? 1.0 : 0.0; break;
                case 6:
                    m = (((x + phase) / period) + ((y + phase) / period)) % 2 == 0 ? 1.0 : 0.0;
                    break;
                case 7:
                    m = ((std::abs(dx) <= t && std::abs(dy) <= r) ||
                         (std::abs(dy) <= t && std::abs(dx) <= r))
                            ? 1.0
                            : 0.0;
                    break;
                case 8: m = (dist <= r && dist >= r - t) ? 1.0 : 0.0; break;
                case 9:
                    m = (std::abs(std::abs(dx) - std::abs(dy)) <= t && dist <= 1.3 * r) ? 1.0 : 0.0;
                    break;
                case 10:
                    m = ((x + phase) % (period + 2) < 2 && (y + phase) % (period + 2) < 2) ? 1.0
                                                                                          : 0.0;
                    break;
                case 11: m = (orient ? dx : dy) >= 0 ? 1.0 : 0.0; break;
                case 12: m = std::clamp(1.0 - dist / (1.5 * r), 0.0, 1.0); break;
                case 13: {
                    const double d = std::abs(dx) + std::abs(dy);
                    m = (d <= 1.3 * r && d >= 1.3 * r - 1.4 * t) ? 1.0 : 0.0;
                    break;
                }
                default: throw ContractError("archetype out of range");
            }
            for (std::int64_t c = 0; c < C; ++c) {
                const double base = pal.bg[c % 3] + (pal.fg[c % 3] - pal.bg[c % 3]) * m;
                const double v = std::clamp(base + rng.gaussian() * noise, 0.0, 1.0);
                out[c * H * W + y * W + x] = std::uint8_t(std::lround(v * 255.0));
            }
        }
    }
}

}  // namespace

std::int64_t synth_archetype_count() { return kArchetypeCount; }

std::string synth_archetype_name(std::int64_t index) {
    if (index < 0 || index >= kArchetypeCount) throw IndexError("archetype index out of range");
    return kArchetypes[index];
}

Dataset generate_shapes(const SynthSpec& spec) {
    if (spec.classes < 1) throw ContractError("synthetic dataset needs at least one class");
    if (spec.class_offset < 0 || spec.class_offset + spec.classes > kArchetypeCount) {
        throw ContractError("class window [" + std::to_string(spec.class_offset) + "," +
                            std::to_string(spec.class_offset + spec.classes) + ") outside " +
                            std::to_string(kArchetypeCount) + " archetypes");
    }
    if (spec.channels != 1 && spec.channels != 3) {
        throw ContractError("synthetic datasets are 1- or 3-channel");
    }
    if (spec.per_class < 1) throw ContractError("per_class must be positive");

    Dataset ds;
    ds.name = spec.name;
    ds.channels = spec.channels;
    ds.height = spec.height;
    ds.width = spec.width;
    for (std::int64_t k = 0; k < spec.classes; ++k) {
        ds.class_names.push_back(synth_archetype_name(spec.class_offset + k));
    }
    const std::int64_t total = spec.classes * spec.per_class;
    ds.pixels.resize(std::size_t(total * ds.sample_values()));
    ds.labels.resize(std::size_t(total));

    Rng rng(mix_seed(spec.seed, std::uint64_t(spec.class_offset)));
    std::int64_t at = 0;
    for (std::int64_t k = 0; k < spec.classes; ++k) {
        for (std::int64_t i = 0; i < spec.per_class; ++i, ++at) {
            render(spec.class_offset + k, ds.channels, ds.height, ds.width, spec.noise, rng,
                   ds.pixels.data() + at * ds.sample_values());
            ds.labels[std::size_t(at)] = std::uint8_t(k);
        }
    }
    ds.compute_channel_stats();
    ds.validate();
    return ds;
}

}  // namespace tln
