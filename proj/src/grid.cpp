#include "packtherm/grid.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <limits>

namespace packtherm {

GridSpec::GridSpec(int rows_, int cols_, double width_, double height_)
    : rows(rows_), cols(cols_), width(width_), height(height_) {
    if (rows < 3 || cols < 3)
        throw Error("GridSpec: rows and cols must be >= 3 (stencil needs interior nodes)");
    if (!(width > 0.0) || !(height > 0.0))
        throw Error("GridSpec: width and height must be positive");
    const double hx = width / cols;
    const double hy = height / rows;
    if (std::abs(hx - hy) > 1e-12 * hx)
        throw Error("GridSpec: pixels must be square (width/cols != height/rows)");
    step = hx;
}

GridSpec GridSpec::square(int n, double side) { return GridSpec(n, n, side, side); }

ScalarField::ScalarField(GridSpec spec, std::vector<double> values)
    : spec_(spec), values_(std::move(values)) {
    if (static_cast<int>(values_.size()) != spec_.cell_count())
        throw Error("ScalarField: value count does not match grid shape");
    for (double v : values_)
        if (!std::isfinite(v)) throw Error("ScalarField: values must be finite (no NaN/Inf)");
}

ScalarField::ScalarField(GridSpec spec, double fill)
    : spec_(spec), values_(static_cast<size_t>(spec.cell_count()), fill) {
    if (!std::isfinite(fill)) throw Error("ScalarField: values must be finite (no NaN/Inf)");
}

FieldStats field_stats(const ScalarField& f) {
    FieldStats s;
    s.min = std::numeric_limits<double>::infinity();
    s.max = -std::numeric_limits<double>::infinity();
    double sum = 0.0;
    for (double v : f.values()) {
        s.min = std::min(s.min, v);
        s.max = std::max(s.max, v);
        sum += v;
    }
    s.mean = sum / f.size();
    return s;
}

namespace {

constexpr char kMagic[4] = {'T', 'F', 'L', 'D'};
constexpr uint32_t kVersion = 1;

void put_u32(std::string& buf, uint32_t v) {
    buf.push_back(static_cast<char>(v & 0xff));
    buf.push_back(static_cast<char>((v >> 8) & 0xff));
    buf.push_back(static_cast<char>((v >> 16) & 0xff));
    buf.push_back(static_cast<char>((v >> 24) & 0xff));
}

uint32_t get_u32(const unsigned char* p) {
    return static_cast<uint32_t>(p[0]) | (static_cast<uint32_t>(p[1]) << 8) |
           (static_cast<uint32_t>(p[2]) << 16) | (static_cast<uint32_t>(p[3]) << 24);
}

} // namespace

void write_field(const ScalarField& f, const std::string& path) {
    std::string buf;
    buf.reserve(16 + f.values().size() * 8);
    buf.append(kMagic, 4);
    put_u32(buf, kVersion);
    put_u32(buf, static_cast<uint32_t>(f.rows()));
    put_u32(buf, static_cast<uint32_t>(f.cols()));
    for (double v : f.values()) {
        uint64_t bits;
        std::memcpy(&bits, &v, 8);
        for (int k = 0; k < 8; ++k) buf.push_back(static_cast<char>((bits >> (8 * k)) & 0xff));
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("write_field: cannot open '" + path + "' for writing");
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!out) throw Error("write_field: short write to '" + path + "'");
}

ScalarField read_field(const std::string& path, double width, double height) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("read_field: cannot open '" + path + "'");
    std::string raw((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (raw.size() < 16) throw Error("read_field: truncated file '" + path + "' (header incomplete)");
    const unsigned char* p = reinterpret_cast<const unsigned char*>(raw.data());
    if (std::memcmp(p, kMagic, 4) != 0) throw Error("read_field: bad magic in '" + path + "'");
    if (get_u32(p + 4) != kVersion) throw Error("read_field: unsupported version in '" + path + "'");
    const uint32_t rows = get_u32(p + 8);
    const uint32_t cols = get_u32(p + 12);
    const size_t expect = 16 + static_cast<size_t>(rows) * cols * 8;
    if (raw.size() < expect)
        throw Error("read_field: truncated file '" + path + "' (payload shorter than header dims)");
    if (raw.size() > expect)
        throw Error("read_field: dimension mismatch vs header in '" + path + "' (trailing bytes)");
    std::vector<double> values(static_cast<size_t>(rows) * cols);
    for (size_t i = 0; i < values.size(); ++i) {
        uint64_t bits = 0;
        for (int k = 0; k < 8; ++k)
            bits |= static_cast<uint64_t>(p[16 + i * 8 + k]) << (8 * k);
        std::memcpy(&values[i], &bits, 8);
    }
    return ScalarField(GridSpec(static_cast<int>(rows), static_cast<int>(cols), width, height),
                       std::move(values));
}

} // namespace packtherm
