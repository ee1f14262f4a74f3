#include "irgsfda/toydet/scene.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>

#include "irgsfda/numerics/random.hpp"

namespace irgsfda::toydet {

using numerics::Tensor;

namespace {

constexpr double kMinSide = 26.0;
constexpr double kMaxSide = 30.0;
constexpr double kMaxAspect = 0.05;
constexpr double kMaxOffset = 1.5;
constexpr int kPlacementAttempts = 40;
constexpr double kGray = 0.5;

constexpr std::array<std::array<double, 3>, kNumClasses> kClassColor{{
    {0.85, 0.30, 0.25},  // square
    {0.30, 0.80, 0.35},  // disc
    {0.30, 0.35, 0.85},  // triangle
}};

bool inside_shape(ShapeClass shape, const Box& b, double px, double py) {
    if (px < b.x1 || px >= b.x2 || py < b.y1 || py >= b.y2) return false;
    switch (shape) {
    case ShapeClass::Square:
        return true;
    case ShapeClass::Disc: {
        const double dx = (px - b.cx()) / (0.5 * b.width());
        const double dy = (py - b.cy()) / (0.5 * b.height());
        return dx * dx + dy * dy <= 1.0;
    }
    case ShapeClass::Triangle: {
        // apex at top centre, base along the bottom edge
        const double t = (py - b.y1) / b.height();
        return std::abs(px - b.cx()) <= 0.5 * b.width() * t;
    }
    }
    return false;
}

bool separated(const Box& a, const Box& b) {
    constexpr double gap = 1.0;
    return a.x2 + gap <= b.x1 || b.x2 + gap <= a.x1 || a.y2 + gap <= b.y1 || b.y2 + gap <= a.y1;
}

struct Layout {
    std::vector<BoxLabel> objects;
    std::vector<std::array<double, 3>> colors;
};

Layout sample_layout(numerics::Rng& rng) {
    std::uniform_int_distribution<int> count_dist(static_cast<int>(kMinObjects), static_cast<int>(kMaxObjects));
    std::uniform_int_distribution<int> class_dist(0, static_cast<int>(kNumClasses) - 1);
    // centres sit near a grid-cell corner, so each object covers a symmetric
    // 4x4 block of cell centres and several 32 px anchors overlap it
    std::uniform_int_distribution<int> corner(2, static_cast<int>(kImageSize / 8) - 2);
    std::uniform_real_distribution<double> offset(-kMaxOffset, kMaxOffset);
    std::uniform_real_distribution<double> side(kMinSide, kMaxSide);
    std::uniform_real_distribution<double> aspect(1.0 - kMaxAspect, 1.0 + kMaxAspect);
    std::uniform_real_distribution<double> tint(-0.08, 0.08);

    Layout layout;
    const int wanted = count_dist(rng);
    for (int k = 0; k < wanted; ++k) {
        const int cls = class_dist(rng);
        const double s = side(rng);
        const double w = s * aspect(rng), h = s * aspect(rng);
        for (int attempt = 0; attempt < kPlacementAttempts; ++attempt) {
            const double cx = 8.0 * corner(rng) + offset(rng);
            const double cy = 8.0 * corner(rng) + offset(rng);
            const double size = static_cast<double>(kImageSize);
            if (cx - 0.5 * w < 0.0 || cy - 0.5 * h < 0.0 || cx + 0.5 * w > size || cy + 0.5 * h > size) continue;
            const Box box{cx - 0.5 * w, cy - 0.5 * h, cx + 0.5 * w, cy + 0.5 * h};
            const bool ok = std::all_of(layout.objects.begin(), layout.objects.end(),
                                        [&](const BoxLabel& o) { return separated(o.box, box); });
            if (!ok) continue;
            layout.objects.push_back({box, cls});
            std::array<double, 3> color = kClassColor[static_cast<std::size_t>(cls)];
            for (double& c : color) c = std::clamp(c + tint(rng), 0.0, 1.0);
            layout.colors.push_back(color);
            break;
        }
    }
    return layout;
}

Tensor render_clean(const Layout& layout, numerics::Rng& rng) {
    std::uniform_real_distribution<double> level(0.30, 0.45);
    std::uniform_real_distribution<double> wave(0.02, 0.06);
    std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
    std::uniform_real_distribution<double> freq(0.05, 0.15);
    const double base = level(rng);
    const double amp = wave(rng), ph = phase(rng), fx = freq(rng), fy = freq(rng);

    constexpr std::size_t n = kImageSize;
    Tensor img({kChannels, n, n});
    for (std::size_t y = 0; y < n; ++y)
        for (std::size_t x = 0; x < n; ++x) {
            const double v = base + amp * std::sin(fx * static_cast<double>(x) + fy * static_cast<double>(y) + ph);
            for (std::size_t c = 0; c < kChannels; ++c) img[(c * n + y) * n + x] = v;
        }

    for (std::size_t k = 0; k < layout.objects.size(); ++k) {
        const auto& obj = layout.objects[k];
        const auto shape = static_cast<ShapeClass>(obj.class_id);
        const auto x0 = static_cast<std::size_t>(std::floor(obj.box.x1));
        const auto y0 = static_cast<std::size_t>(std::floor(obj.box.y1));
        const auto x1 = std::min(n, static_cast<std::size_t>(std::ceil(obj.box.x2)));
        const auto y1 = std::min(n, static_cast<std::size_t>(std::ceil(obj.box.y2)));
        for (std::size_t y = y0; y < y1; ++y)
            for (std::size_t x = x0; x < x1; ++x) {
                if (!inside_shape(shape, obj.box, static_cast<double>(x) + 0.5, static_cast<double>(y) + 0.5))
                    continue;
                for (std::size_t c = 0; c < kChannels; ++c) img[(c * n + y) * n + x] = layout.colors[k][c];
            }
    }
    return img;
}

}  // namespace

DomainSpec DomainSpec::source() {
    return DomainSpec{};
}

DomainSpec DomainSpec::target() {
    DomainSpec d;
    d.name = "target";
    d.noise_sigma = 0.03;
    d.fog_alpha = 0.20;
    return d;
}

void DomainSpec::validate() const {
    if (brightness < -0.5 || brightness > 0.5)
        throw numerics::ContractError("domain brightness must lie in [-0.5, 0.5]");
    if (contrast < 0.5 || contrast > 1.5) throw numerics::ContractError("domain contrast must lie in [0.5, 1.5]");
    if (!(noise_sigma >= 0.0)) throw numerics::ContractError("domain noise_sigma must be >= 0");
    if (fog_alpha < 0.0 || fog_alpha > 1.0) throw numerics::ContractError("domain fog_alpha must lie in [0, 1]");
}

Tensor apply_domain(const Tensor& clean, const DomainSpec& domain, std::uint64_t seed) {
    domain.validate();
    Tensor out = clean;
    std::uint64_t name_hash = 1469598103934665603ULL;
    for (char ch : domain.name) name_hash = (name_hash ^ static_cast<unsigned char>(ch)) * 1099511628211ULL;
    numerics::Rng rng(numerics::mix_seed(seed, name_hash));
    std::normal_distribution<double> noise(0.0, 1.0);
    const double a = domain.fog_alpha;
    const bool photometric = domain.contrast != 1.0 || domain.brightness != 0.0;
    for (double& v : out.values()) {
        double p = photometric ? domain.contrast * (v - kGray) + kGray + domain.brightness : v;
        if (domain.noise_sigma > 0.0) p += domain.noise_sigma * noise(rng);
        if (a > 0.0) p = (1.0 - a) * p + a * kGray;
        v = std::clamp(p, 0.0, 1.0);
    }
    return out;
}

SyntheticScene generate_scene(const DomainSpec& domain, std::uint64_t seed) {
    numerics::Rng rng(numerics::mix_seed(seed));
    Layout layout = sample_layout(rng);
    Tensor clean = render_clean(layout, rng);
    return SyntheticScene{apply_domain(clean, domain, seed), std::move(layout.objects), seed};
}

std::uint64_t scene_seed(std::uint64_t base_seed, std::size_t index) {
    return numerics::mix_seed(base_seed, static_cast<std::uint64_t>(index));
}

namespace serial {
std::vector<SyntheticScene> generate_scenes(const DomainSpec& domain, std::uint64_t base_seed, std::size_t count) {
    std::vector<SyntheticScene> scenes;
    scenes.reserve(count);
    for (std::size_t i = 0; i < count; ++i) scenes.push_back(generate_scene(domain, scene_seed(base_seed, i)));
    return scenes;
}
}  // namespace serial

std::vector<SyntheticScene> generate_scenes(const DomainSpec& domain, std::uint64_t base_seed, std::size_t count) {
    domain.validate();
    std::vector<SyntheticScene> scenes(count);
    const auto n = static_cast<long long>(count);
#pragma omp parallel for schedule(dynamic, 4)
    for (long long i = 0; i < n; ++i)
        scenes[static_cast<std::size_t>(i)] = generate_scene(domain, scene_seed(base_seed, static_cast<std::size_t>(i)));
    return scenes;
}

}  // namespace irgsfda::toydet
