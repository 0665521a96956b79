#pragma once

#include <string>
#include <vector>

#include "packtherm/errors.hpp"

namespace packtherm {

/// Uniform 2D grid with square pixels. A field of m rows by n columns covers
/// a physical box of width a (x) and height b (y), in meters, with pixel
/// centers at ((i + 0.5) * h, (j + 0.5) * h) for column i and row j.
/// The pixel pitch h must satisfy h = a/n = b/m.
struct GridSpec {
    int rows = 0;        ///< m, pixel count along y
    int cols = 0;        ///< n, pixel count along x
    double width = 0.0;  ///< a [m]
    double height = 0.0; ///< b [m]
    double step = 0.0;   ///< h [m]

    GridSpec(int rows_, int cols_, double width_, double height_);

    /// n-by-n grid over a square box of the given side length [m].
    static GridSpec square(int n, double side);

    bool same_shape(const GridSpec& o) const { return rows == o.rows && cols == o.cols; }
    int cell_count() const { return rows * cols; }
    int index(int row, int col) const { return row * cols + col; }
};

/// Scalar quantity sampled at pixel centers, stored row-major.
/// Units are carried by context: temperature [degC], conductivity [W/(m K)],
/// intensity [W/m^2]. Values are validated finite at construction and the
/// object is immutable afterwards.
class ScalarField {
public:
    ScalarField(GridSpec spec, std::vector<double> values);
    ScalarField(GridSpec spec, double fill);

    const GridSpec& spec() const { return spec_; }
    int rows() const { return spec_.rows; }
    int cols() const { return spec_.cols; }
    double at(int row, int col) const { return values_[spec_.index(row, col)]; }
    double operator[](int flat) const { return values_[flat]; }
    const std::vector<double>& values() const { return values_; }
    int size() const { return static_cast<int>(values_.size()); }

private:
    GridSpec spec_;
    std::vector<double> values_;
};

struct FieldStats {
    double min = 0.0;
    double max = 0.0;
    double mean = 0.0;
};

FieldStats field_stats(const ScalarField& f);

/// TFLD on-disk format (bit-exact): magic "TFLD", u32 LE version = 1,
/// u32 rows, u32 cols, then rows*cols little-endian f64 row-major.
/// The physical extent is not stored; the reader is told the box size.
void write_field(const ScalarField& f, const std::string& path);
ScalarField read_field(const std::string& path, double width, double height);

} // namespace packtherm
