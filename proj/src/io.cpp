#include "flowfuse/io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <system_error>

namespace flowfuse {

namespace fs = std::filesystem;

namespace {

constexpr char kCubeMagic[4] = {'F', 'F', 'C', 'B'};
constexpr char kCheckpointMagic[4] = {'F', 'F', 'C', 'K'};
constexpr uint32_t kFormatVersion = 1;

void put_u32(std::string& out, uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f64(std::string& out, double v) {
    uint64_t bits;
    std::memcpy(&bits, &v, sizeof(bits));
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
}

class Reader {
  public:
    Reader(std::string data, fs::path path) : data_(std::move(data)), path_(std::move(path)) {}

    void expect_magic(const char (&magic)[4], const char* kind) {
        const std::string got = take(4);
        if (std::memcmp(got.data(), magic, 4) != 0)
            throw IoError(path_.string() + ": not a " + kind + " file");
    }

    uint32_t u32() {
        const std::string b = take(4);
        uint32_t v = 0;
        for (int i = 0; i < 4; ++i)
            v |= static_cast<uint32_t>(static_cast<unsigned char>(b[static_cast<size_t>(i)]))
                 << (8 * i);
        return v;
    }

    double f64() {
        const std::string b = take(8);
        uint64_t bits = 0;
        for (int i = 0; i < 8; ++i)
            bits |= static_cast<uint64_t>(static_cast<unsigned char>(b[static_cast<size_t>(i)]))
                    << (8 * i);
        double v;
        std::memcpy(&v, &bits, sizeof(v));
        return v;
    }

    std::string take(size_t n) {
        if (pos_ + n > data_.size())
            throw IoError(path_.string() + ": truncated (wanted " + std::to_string(n) +
                          " bytes at offset " + std::to_string(pos_) + ")");
        std::string out = data_.substr(pos_, n);
        pos_ += n;
        return out;
    }

    void expect_end() {
        if (pos_ != data_.size())
            throw IoError(path_.string() + ": " + std::to_string(data_.size() - pos_) +
                          " trailing bytes");
    }

  private:
    std::string data_;
    fs::path path_;
    size_t pos_ = 0;
};

void check_version(uint32_t v, const fs::path& path) {
    if (v != kFormatVersion)
        throw IoError(path.string() + ": unsupported format version " + std::to_string(v));
}

void append_tensor(std::string& out, const Tensor& t) {
    put_u32(out, static_cast<uint32_t>(t.rank()));
    for (int e : t.shape) put_u32(out, static_cast<uint32_t>(e));
    for (double v : t.data) put_f64(out, v);
}

Tensor read_tensor(Reader& r, const fs::path& path) {
    const uint32_t rank = r.u32();
    if (rank > 4) throw IoError(path.string() + ": implausible rank " + std::to_string(rank));
    std::vector<int> shape;
    int64_t n = 1;
    for (uint32_t i = 0; i < rank; ++i) {
        const uint32_t e = r.u32();
        if (e == 0 || e > (1u << 24)) throw IoError(path.string() + ": implausible extent");
        shape.push_back(static_cast<int>(e));
        n *= e;
    }
    Tensor t;
    t.shape = std::move(shape);
    t.data.resize(static_cast<size_t>(n));
    for (double& v : t.data) v = r.f64();
    return t;
}

}  // namespace

void write_text_atomic(const fs::path& path, const std::string& content) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    const fs::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot open " + tmp.string() + " for writing");
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
        if (!out) throw IoError("short write to " + tmp.string());
    }
    std::error_code ec;
    fs::rename(tmp, path, ec);
    if (ec) throw IoError("rename " + tmp.string() + " -> " + path.string() + ": " + ec.message());
}

std::string read_text(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    if (in.bad()) throw IoError("read error on " + path.string());
    return buf.str();
}

void write_cube(const fs::path& path, const Tensor& t) {
    check_contract(t.rank() == 2 || t.rank() == 3,
                   "array file holds rank 2 or 3, got " + shape_str(t.shape));
    std::string out;
    out.reserve(16 + t.data.size() * 8);
    out.append(kCubeMagic, 4);
    put_u32(out, kFormatVersion);
    append_tensor(out, t);
    write_text_atomic(path, out);
}

Tensor read_cube(const fs::path& path) {
    Reader r(read_text(path), path);
    r.expect_magic(kCubeMagic, "array");
    check_version(r.u32(), path);
    Tensor t = read_tensor(r, path);
    r.expect_end();
    if (t.rank() != 2 && t.rank() != 3)
        throw IoError(path.string() + ": array rank " + std::to_string(t.rank()));
    return t;
}

void write_checkpoint(const fs::path& path, const ParamStore& params) {
    std::string out;
    out.append(kCheckpointMagic, 4);
    put_u32(out, kFormatVersion);
    put_u32(out, static_cast<uint32_t>(params.size()));
    for (const auto& [name, value] : params.entries()) {
        put_u32(out, static_cast<uint32_t>(name.size()));
        out.append(name);
        append_tensor(out, value);
    }
    write_text_atomic(path, out);
}

ParamStore read_checkpoint(const fs::path& path) {
    Reader r(read_text(path), path);
    r.expect_magic(kCheckpointMagic, "checkpoint");
    check_version(r.u32(), path);
    const uint32_t count = r.u32();
    ParamStore params;
    for (uint32_t i = 0; i < count; ++i) {
        const uint32_t name_len = r.u32();
        if (name_len > 4096) throw IoError(path.string() + ": implausible name length");
        const std::string name = r.take(name_len);
        params.add(name, read_tensor(r, path));
    }
    r.expect_end();
    return params;
}

void write_pattern(const fs::path& path, const SfaPattern& pattern) {
    pattern.validate();
    std::ostringstream out;
    for (int r = 0; r < 4; ++r) {
        for (int c = 0; c < 4; ++c) {
            if (c) out << ' ';
            out << pattern.base[static_cast<size_t>(r * 4 + c)];
        }
        out << '\n';
    }
    write_text_atomic(path, out.str());
}

SfaPattern read_pattern(const fs::path& path) {
    std::istringstream in(read_text(path));
    SfaPattern p;
    int max_band = -1;
    for (int i = 0; i < 16; ++i) {
        if (!(in >> p.base[static_cast<size_t>(i)]))
            throw IoError(path.string() + ": expected 16 integers, got " + std::to_string(i));
        max_band = std::max(max_band, p.base[static_cast<size_t>(i)]);
    }
    int extra;
    if (in >> extra) throw IoError(path.string() + ": more than 16 integers");
    p.bands = max_band + 1;
    try {
        p.validate();
    } catch (const ContractViolation& e) {
        throw IoError(path.string() + ": " + e.what());
    }
    return p;
}

void write_ppm(const fs::path& path, const Tensor& cube, const std::array<int, 3>& rgb_bands) {
    check_contract(cube.rank() == 3, "ppm export needs a cube, got " + shape_str(cube.shape));
    for (int b : rgb_bands)
        check_contract(b >= 0 && b < cube.shape[0],
                       "ppm band " + std::to_string(b) + " outside [0," +
                           std::to_string(cube.shape[0]) + ")");
    const int h = cube.shape[1];
    const int w = cube.shape[2];
    std::string out = "P6\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n";
    const size_t plane = static_cast<size_t>(h) * w;
    for (size_t i = 0; i < plane; ++i) {
        for (int ch = 0; ch < 3; ++ch) {
            const double v =
                cube.data[static_cast<size_t>(rgb_bands[static_cast<size_t>(ch)]) * plane + i];
            const double clamped = std::clamp(v, 0.0, 1.0);
            out.push_back(static_cast<char>(
                static_cast<unsigned char>(std::lround(clamped * 255.0))));
        }
    }
    write_text_atomic(path, out);
}

std::string format_double(double v) {
    std::array<char, 64> buf;
    const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v);
    check_contract(res.ec == std::errc(), "double formatting failed");
    return std::string(buf.data(), res.ptr);
}

}  // namespace flowfuse
