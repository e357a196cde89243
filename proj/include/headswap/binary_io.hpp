#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <vector>

namespace headswap {

static_assert(std::endian::native == std::endian::little, "container formats assume a little-endian host");

/// Append-only little-endian byte buffer.
class ByteWriter
{
public:
    void raw(const void* data, std::size_t n)
    {
        const auto* p = static_cast<const std::uint8_t*>(data);
        bytes_.insert(bytes_.end(), p, p + n);
    }
    void u32(std::uint32_t v) { raw(&v, sizeof v); }
    void f32s(const float* data, std::size_t n) { raw(data, n * sizeof(float)); }
    void f64s(const double* data, std::size_t n) { raw(data, n * sizeof(double)); }

    std::vector<std::uint8_t> take() { return std::move(bytes_); }

private:
    std::vector<std::uint8_t> bytes_;
};

class ByteReader
{
public:
    explicit ByteReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

    void raw(void* out, std::size_t n)
    {
        if (n > remaining())
            throw std::runtime_error("corrupt header: unexpected end of data");
        std::memcpy(out, bytes_.data() + pos_, n);
        pos_ += n;
    }
    std::uint32_t u32()
    {
        std::uint32_t v;
        raw(&v, sizeof v);
        return v;
    }
    void f32s(float* out, std::size_t n) { raw(out, n * sizeof(float)); }
    void f64s(double* out, std::size_t n) { raw(out, n * sizeof(double)); }

    std::size_t remaining() const { return bytes_.size() - pos_; }

private:
    std::span<const std::uint8_t> bytes_;
    std::size_t pos_ = 0;
};

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

} // namespace headswap
