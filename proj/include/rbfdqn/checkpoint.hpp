#pragma once

// Binary framing shared by parameter checkpoints and replay dumps.
//
//   "RBFQ1"                         5-byte magic
//   <payload>                       producer-specific header fields
//   ParamStore body (repeated):
//     u64 slot_count
//     per slot: u64 name_len, name bytes, u64 rank, rank x u64 dims
//     f64 values, little-endian, flat order
//     u64 value_count trailer (must equal the number of floats written)
//
// All integers are little-endian u64, all reals little-endian IEEE-754 doubles.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>

#include "rbfdqn/nn_core.hpp"

namespace rbfdqn::io {

inline constexpr std::string_view kMagic = "RBFQ1";

class BinaryWriter {
public:
    explicit BinaryWriter(std::ostream& out) : out_(out) {}

    void magic();
    void u64(std::uint64_t v);
    void f64(double v);
    void f64s(std::span<const double> v);
    void str(std::string_view s);
    void param_store(const nn::ParamStore& p);

private:
    std::ostream& out_;
};

class BinaryReader {
public:
    explicit BinaryReader(std::istream& in) : in_(in) {}

    // Throws FormatError if the magic is missing.
    void magic();
    std::uint64_t u64();
    double f64();
    std::vector<double> f64s(std::size_t n);
    std::string str();
    // Throws FormatError on truncation or trailer mismatch.
    nn::ParamStore param_store();

private:
    void read_bytes(char* dst, std::size_t n);
    std::istream& in_;
};

void save_param_store(const std::filesystem::path& path, const nn::ParamStore& params);
nn::ParamStore load_param_store(const std::filesystem::path& path);

} // namespace rbfdqn::io
