#include "irgsfda/adapt/augment.hpp"

#include <algorithm>

#include "irgsfda/numerics/random.hpp"

namespace irgsfda::adapt {

AugmentationPolicy AugmentationPolicy::weak() {
    return {AugKind::Weak, 0.0, 1.0, 1.0, 0.01, 0};
}

AugmentationPolicy AugmentationPolicy::strong() {
    return {AugKind::Strong, 0.3, 0.6, 1.4, 0.05, 16};
}

numerics::Tensor augment(const numerics::Tensor& image, const AugmentationPolicy& policy, std::uint64_t seed) {
    if (image.rank() != 3) throw numerics::DimensionError("augment: expected a C x H x W image");
    numerics::Rng rng(numerics::mix_seed(seed, policy.kind == AugKind::Strong ? 0x5707 : 0x3ea4));
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const double offset = policy.brightness_jitter * (2.0 * unit(rng) - 1.0);
    const double gain = policy.contrast_lo + (policy.contrast_hi - policy.contrast_lo) * unit(rng);
    std::normal_distribution<double> noise(0.0, 1.0);

    const bool photometric = gain != 1.0 || offset != 0.0;
    numerics::Tensor out = image;
    for (double& v : out.values()) {
        double p = photometric ? gain * (v - 0.5) + 0.5 + offset : v;
        if (policy.noise_sigma > 0.0) p += policy.noise_sigma * noise(rng);
        v = std::clamp(p, 0.0, 1.0);
    }

    if (policy.cutout_max > 0) {
        const std::size_t c = image.dim(0), h = image.dim(1), w = image.dim(2);
        std::uniform_int_distribution<std::size_t> side(1, std::min({policy.cutout_max, h, w}));
        const std::size_t ch = side(rng), cw = side(rng);
        std::uniform_int_distribution<std::size_t> ys(0, h - ch), xs(0, w - cw);
        const std::size_t y0 = ys(rng), x0 = xs(rng);
        for (std::size_t k = 0; k < c; ++k)
            for (std::size_t y = y0; y < y0 + ch; ++y)
                for (std::size_t x = x0; x < x0 + cw; ++x) out[(k * h + y) * w + x] = kCutoutGray;
    }
    return out;
}

}  // namespace irgsfda::adapt
