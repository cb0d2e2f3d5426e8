#include "rbfdqn/checkpoint.hpp"

#include <array>
#include <bit>
#include <fstream>
#include <istream>
#include <ostream>

#include <fmt/format.h>

#include "rbfdqn/errors.hpp"

namespace rbfdqn::io {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

// Guards against absurd allocations when a corrupted length field is read.
constexpr std::uint64_t kMaxCount = std::uint64_t{1} << 34;

} // namespace

void BinaryWriter::magic() { out_.write(kMagic.data(), static_cast<std::streamsize>(kMagic.size())); }

void BinaryWriter::u64(std::uint64_t v) {
    const auto bytes = std::bit_cast<std::array<char, 8>>(v);
    out_.write(bytes.data(), 8);
}

void BinaryWriter::f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }

void BinaryWriter::f64s(std::span<const double> v) {
    out_.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size_bytes()));
}

void BinaryWriter::str(std::string_view s) {
    u64(s.size());
    out_.write(s.data(), static_cast<std::streamsize>(s.size()));
}

void BinaryWriter::param_store(const nn::ParamStore& p) {
    u64(p.layout().size());
    for (const auto& slot : p.layout()) {
        str(slot.name);
        u64(slot.shape.size());
        for (auto d : slot.shape) u64(d);
    }
    f64s(p.values());
    u64(p.size());
}

void BinaryReader::read_bytes(char* dst, std::size_t n) {
    in_.read(dst, static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in_.gcount()) != n) {
        throw FormatError(fmt::format("unexpected end of file (wanted {} bytes, got {})", n, in_.gcount()));
    }
}

void BinaryReader::magic() {
    std::array<char, kMagic.size()> buf{};
    read_bytes(buf.data(), buf.size());
    if (std::string_view(buf.data(), buf.size()) != kMagic) throw FormatError("bad magic, not an RBFQ1 file");
}

std::uint64_t BinaryReader::u64() {
    std::array<char, 8> bytes{};
    read_bytes(bytes.data(), 8);
    return std::bit_cast<std::uint64_t>(bytes);
}

double BinaryReader::f64() { return std::bit_cast<double>(u64()); }

std::vector<double> BinaryReader::f64s(std::size_t n) {
    if (n > kMaxCount) throw FormatError(fmt::format("implausible float count {}", n));
    std::vector<double> v(n);
    read_bytes(reinterpret_cast<char*>(v.data()), n * sizeof(double));
    return v;
}

std::string BinaryReader::str() {
    const auto n = u64();
    if (n > 4096) throw FormatError(fmt::format("implausible string length {}", n));
    std::string s(n, '\0');
    read_bytes(s.data(), n);
    return s;
}

nn::ParamStore BinaryReader::param_store() {
    const auto slots = u64();
    if (slots > 4096) throw FormatError(fmt::format("implausible slot count {}", slots));
    std::vector<nn::ParamSlot> layout;
    layout.reserve(slots);
    for (std::uint64_t i = 0; i < slots; ++i) {
        nn::ParamSlot slot;
        slot.name = str();
        const auto rank = u64();
        if (rank > 8) throw FormatError(fmt::format("slot '{}': implausible rank {}", slot.name, rank));
        for (std::uint64_t r = 0; r < rank; ++r) slot.shape.push_back(u64());
        layout.push_back(std::move(slot));
    }
    nn::ParamStore store(std::move(layout));
    const auto values = f64s(store.size());
    std::copy(values.begin(), values.end(), store.values().begin());
    const auto trailer = u64();
    if (trailer != store.size()) {
        throw FormatError(fmt::format("trailer count {} does not match layout size {}", trailer, store.size()));
    }
    return store;
}

void save_param_store(const std::filesystem::path& path, const nn::ParamStore& params) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError(fmt::format("cannot open '{}' for writing", path.string()));
    BinaryWriter w(out);
    w.magic();
    w.param_store(params);
    if (!out) throw FormatError(fmt::format("write to '{}' failed", path.string()));
}

nn::ParamStore load_param_store(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError(fmt::format("cannot open '{}'", path.string()));
    BinaryReader r(in);
    r.magic();
    return r.param_store();
}

} // namespace rbfdqn::io
