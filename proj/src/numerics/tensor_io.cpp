#include "irgsfda/numerics/tensor_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <vector>

namespace irgsfda::numerics {

static_assert(std::endian::native == std::endian::little, "tensor files are written in native little-endian order");

void write_raw(const std::filesystem::path& path, const Tensor& tensor) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError("cannot open " + path.string() + " for writing");
    const auto values = tensor.values();
    out.write(reinterpret_cast<const char*>(values.data()), static_cast<std::streamsize>(values.size_bytes()));
    if (!out) throw FormatError("short write to " + path.string());
}

Tensor read_raw(const std::filesystem::path& path, const Shape& shape) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open " + path.string());
    const std::size_t n = shape_size(shape);
    const auto bytes = std::filesystem::file_size(path);
    if (bytes != n * sizeof(double))
        throw FormatError(path.string() + " holds " + std::to_string(bytes) + " bytes, expected " +
                          std::to_string(n * sizeof(double)) + " for shape " + shape_string(shape));
    std::vector<double> values(n);
    in.read(reinterpret_cast<char*>(values.data()), static_cast<std::streamsize>(n * sizeof(double)));
    if (!in) throw FormatError("short read from " + path.string());
    return Tensor(shape, std::move(values));
}

}  // namespace irgsfda::numerics
