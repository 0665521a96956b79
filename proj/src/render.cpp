#include "packtherm/render.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

namespace packtherm {

void write_pgm(const ScalarField& field, const std::string& path, double lo, double hi) {
    if (!std::isfinite(lo) || !std::isfinite(hi) || hi < lo)
        throw Error("write_pgm: invalid range");
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("write_pgm: cannot open '" + path + "' for writing");
    out << "P5\n" << field.cols() << " " << field.rows() << "\n255\n";
    std::string bytes;
    bytes.reserve(static_cast<size_t>(field.size()));
    const double span = hi - lo;
    for (int i = 0; i < field.size(); ++i) {
        int v;
        if (span == 0.0) {
            v = 128;
        } else {
            v = static_cast<int>(std::lround((field[i] - lo) / span * 255.0));
            v = std::clamp(v, 0, 255);
        }
        bytes.push_back(static_cast<char>(v));
    }
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error("write_pgm: short write to '" + path + "'");
}

void write_pgm(const ScalarField& field, const std::string& path) {
    const FieldStats s = field_stats(field);
    write_pgm(field, path, s.min, s.max);
}

} // namespace packtherm
