#pragma once

#include <cstdint>

#include "irgsfda/numerics/tensor.hpp"

namespace irgsfda::adapt {

enum class AugKind { Weak, Strong };

/// Photometric-only augmentation; box coordinates stay valid across views.
struct AugmentationPolicy {
    AugKind kind = AugKind::Weak;
    double brightness_jitter = 0.0;  // offset drawn from [-b, b]
    double contrast_lo = 1.0;
    double contrast_hi = 1.0;
    double noise_sigma = 0.01;
    std::size_t cutout_max = 0;  // side of the gray cutout square, 0 disables

    static AugmentationPolicy weak();
    static AugmentationPolicy strong();
};

inline constexpr double kCutoutGray = 0.5;

/// Deterministic in (image, policy, seed); output clipped to [0, 1].
numerics::Tensor augment(const numerics::Tensor& image, const AugmentationPolicy& policy, std::uint64_t seed);

}  // namespace irgsfda::adapt
