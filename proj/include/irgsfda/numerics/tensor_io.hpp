#pragma once

#include <filesystem>
#include <stdexcept>

#include "irgsfda/numerics/tensor.hpp"

namespace irgsfda::numerics {

/// Raised on unreadable, truncated or mis-versioned files.
class FormatError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Raw little-endian float64 values, row-major, no header. Shapes live in
/// the accompanying JSON index or manifest.
void write_raw(const std::filesystem::path& path, const Tensor& tensor);
Tensor read_raw(const std::filesystem::path& path, const Shape& shape);

}  // namespace irgsfda::numerics
