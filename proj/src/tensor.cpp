#include "concept_probe/tensor.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

namespace cprobe {

std::size_t shape_size(const Shape& shape) {
    std::size_t n = 1;
    for (auto d : shape) {
        n *= d;
    }
    return n;
}

std::string shape_string(const Shape& shape) {
    std::ostringstream os;
    for (std::size_t i = 0; i < shape.size(); ++i) {
        os << (i ? "x" : "") << shape[i];
    }
    return os.str();
}

namespace {

void validate_shape(const Shape& shape) {
    if (shape.empty()) {
        throw ShapeError("tensor shape must have at least one dimension");
    }
    for (auto d : shape) {
        if (d == 0) {
            throw ShapeError("tensor dimensions must be positive, got " + shape_string(shape));
        }
    }
}

}  // namespace

Tensor::Tensor(Shape shape, float fill) : shape_(std::move(shape)) {
    validate_shape(shape_);
    data_.assign(shape_size(shape_), fill);
}

Tensor::Tensor(Shape shape, std::vector<float> data) : shape_(std::move(shape)), data_(std::move(data)) {
    validate_shape(shape_);
    if (shape_size(shape_) != data_.size()) {
        throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                         " does not match shape " + shape_string(shape_));
    }
}

bool Tensor::all_finite() const {
    for (float x : data_) {
        if (!std::isfinite(x)) {
            return false;
        }
    }
    return true;
}

namespace le {

void put_u32(std::ostream& out, std::uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) {
        b[i] = static_cast<unsigned char>(v >> (8 * i));
    }
    out.write(reinterpret_cast<const char*>(b), 4);
}

void put_u64(std::ostream& out, std::uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) {
        b[i] = static_cast<unsigned char>(v >> (8 * i));
    }
    out.write(reinterpret_cast<const char*>(b), 8);
}

void put_f32(std::ostream& out, std::span<const float> values) {
    for (float f : values) {
        put_u32(out, std::bit_cast<std::uint32_t>(f));
    }
}

std::uint32_t get_u32(std::istream& in) {
    unsigned char b[4];
    if (!in.read(reinterpret_cast<char*>(b), 4)) {
        throw FormatError("unexpected end of data");
    }
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) {
        v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
    }
    return v;
}

std::uint64_t get_u64(std::istream& in) {
    const std::uint64_t lo = get_u32(in);
    const std::uint64_t hi = get_u32(in);
    return lo | (hi << 32);
}

void get_f32(std::istream& in, std::span<float> values) {
    for (auto& f : values) {
        f = std::bit_cast<float>(get_u32(in));
    }
}

}  // namespace le

void write_tensor(std::ostream& out, const Tensor& t) {
    out.write("TEN1", 4);
    le::put_u32(out, kTensorFormatVersion);
    le::put_u32(out, static_cast<std::uint32_t>(t.shape().size()));
    for (auto d : t.shape()) {
        le::put_u32(out, static_cast<std::uint32_t>(d));
    }
    le::put_f32(out, t.data());
}

Tensor read_tensor(std::istream& in) {
    char magic[4];
    if (!in.read(magic, 4) || std::memcmp(magic, "TEN1", 4) != 0) {
        throw FormatError("tensor: bad magic (expected TEN1)");
    }
    const auto version = le::get_u32(in);
    if (version != kTensorFormatVersion) {
        throw FormatError("tensor: unsupported version " + std::to_string(version));
    }
    const auto ndim = le::get_u32(in);
    if (ndim == 0 || ndim > 8) {
        throw FormatError("tensor: bad ndim " + std::to_string(ndim));
    }
    Shape shape(ndim);
    for (auto& d : shape) {
        d = le::get_u32(in);
        if (d == 0) {
            throw FormatError("tensor: zero dimension");
        }
    }
    std::vector<float> data(shape_size(shape));
    le::get_f32(in, data);
    return Tensor(std::move(shape), std::move(data));
}

void save_tensor(const std::filesystem::path& path, const Tensor& t) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw IoError("cannot open " + path.string() + " for writing");
    }
    write_tensor(out, t);
    if (!out) {
        throw IoError("failed writing " + path.string());
    }
}

Tensor load_tensor(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open " + path.string());
    }
    try {
        return read_tensor(in);
    } catch (const FormatError& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
}

}  // namespace cprobe
