#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace cprobe {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_string(const Shape& shape);

class ShapeError : public std::invalid_argument {
 public:
    using std::invalid_argument::invalid_argument;
};

class IoError : public std::runtime_error {
 public:
    using std::runtime_error::runtime_error;
};

/// Malformed file contents (bad magic, truncated payload, bad JSON fields).
class FormatError : public std::runtime_error {
 public:
    using std::runtime_error::runtime_error;
};

/// Row-major float32 tensor. Images are laid out height x width x channels.
class Tensor {
 public:
    Tensor() = default;
    explicit Tensor(Shape shape, float fill = 0.0f);
    Tensor(Shape shape, std::vector<float> data);

    const Shape& shape() const { return shape_; }
    std::size_t size() const { return data_.size(); }

    std::span<float> data() { return data_; }
    std::span<const float> data() const { return data_; }

    float& operator[](std::size_t i) { return data_[i]; }
    float operator[](std::size_t i) const { return data_[i]; }

    bool all_finite() const;

    friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
    Shape shape_;
    std::vector<float> data_;
};

// ".ten" files: "TEN1", u32 version, u32 ndim, ndim x u32 dims, then
// little-endian float32 payload.
inline constexpr std::uint32_t kTensorFormatVersion = 1;

void write_tensor(std::ostream& out, const Tensor& t);
Tensor read_tensor(std::istream& in);
void save_tensor(const std::filesystem::path& path, const Tensor& t);
Tensor load_tensor(const std::filesystem::path& path);

namespace le {
void put_u32(std::ostream& out, std::uint32_t v);
void put_u64(std::ostream& out, std::uint64_t v);
void put_f32(std::ostream& out, std::span<const float> values);
std::uint32_t get_u32(std::istream& in);
std::uint64_t get_u64(std::istream& in);
void get_f32(std::istream& in, std::span<float> values);
}  // namespace le

}  // namespace cprobe
