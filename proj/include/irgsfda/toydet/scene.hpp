#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "irgsfda/numerics/tensor.hpp"
#include "irgsfda/toydet/boxes.hpp"

namespace irgsfda::toydet {

inline constexpr std::size_t kChannels = 3;
inline constexpr std::size_t kImageSize = 64;
inline constexpr std::size_t kNumClasses = 3;  // square, disc, triangle
inline constexpr std::size_t kBackgroundClass = kNumClasses;
inline constexpr std::size_t kMinObjects = 1;
inline constexpr std::size_t kMaxObjects = 5;

enum class ShapeClass : int { Square = 0, Disc = 1, Triangle = 2 };

struct BoxLabel {
    Box box;
    int class_id = 0;

    bool operator==(const BoxLabel&) const = default;
};

/// Photometric rendering of a domain. Object geometry never depends on it.
struct DomainSpec {
    std::string name = "source";
    double brightness = 0.0;  // additive offset in [-0.5, 0.5]
    double contrast = 1.0;    // gain about mid-gray in [0.5, 1.5]
    double noise_sigma = 0.0;
    double fog_alpha = 0.0;   // blend weight toward constant gray, in [0, 1]

    static DomainSpec source();
    /// Foggy, noisy rendering used as the adaptation target.
    static DomainSpec target();

    /// Throws ContractError when a field is out of range.
    void validate() const;

    bool operator==(const DomainSpec&) const = default;
};

struct SyntheticScene {
    numerics::Tensor image;  // 3 x 64 x 64, values in [0, 1]
    std::vector<BoxLabel> objects;
    std::uint64_t seed = 0;
};

/// Deterministic in (domain, seed). Equal seeds give identical `objects`
/// in every domain.
SyntheticScene generate_scene(const DomainSpec& domain, std::uint64_t seed);

/// Seed of the i-th scene of a dataset rooted at `base_seed`.
std::uint64_t scene_seed(std::uint64_t base_seed, std::size_t index);

/// Renders `count` scenes with seeds scene_seed(base_seed, i).
std::vector<SyntheticScene> generate_scenes(const DomainSpec& domain, std::uint64_t base_seed,
                                            std::size_t count);

namespace serial {
std::vector<SyntheticScene> generate_scenes(const DomainSpec& domain, std::uint64_t base_seed,
                                            std::size_t count);
}

/// Applies the domain's photometric transform to a clean rendering.
numerics::Tensor apply_domain(const numerics::Tensor& clean, const DomainSpec& domain, std::uint64_t seed);

}  // namespace irgsfda::toydet
