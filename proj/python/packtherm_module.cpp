#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "packtherm/metrics.hpp"
#include "packtherm/pipeline.hpp"
#include "packtherm/render.hpp"

namespace py = pybind11;
using namespace packtherm;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;
using BoolArray = py::array_t<bool, py::array::c_style | py::array::forcecast>;

ScalarField field_from_array(const Array& a, double width, double height) {
    if (a.ndim() != 2) throw Error("expected a 2D array");
    const int rows = static_cast<int>(a.shape(0));
    const int cols = static_cast<int>(a.shape(1));
    std::vector<double> v(a.data(), a.data() + static_cast<size_t>(rows) * cols);
    return ScalarField(GridSpec(rows, cols, width, height), std::move(v));
}

Array field_to_array(const ScalarField& f) {
    Array out({f.rows(), f.cols()});
    std::copy(f.values().begin(), f.values().end(), out.mutable_data());
    return out;
}

BatteryMask mask_from_array(const BoolArray& a, double width, double height) {
    if (a.ndim() != 2) throw Error("expected a 2D mask");
    const int rows = static_cast<int>(a.shape(0));
    const int cols = static_cast<int>(a.shape(1));
    BatteryMask mask{GridSpec(rows, cols, width, height),
                     std::vector<uint8_t>(static_cast<size_t>(rows) * cols, 0)};
    for (int i = 0; i < rows * cols; ++i) mask.flags[i] = a.data()[i] ? 1 : 0;
    return mask;
}

SolveOptions make_opts(double tol, int max_iterations) {
    SolveOptions o;
    o.tolerance = tol;
    o.max_iterations = max_iterations;
    return o;
}

} // namespace

PYBIND11_MODULE(packtherm, m) {
    m.doc() = "Battery-pack temperature fields: layout generation, steady-state heat solvers, "
              "physics-informed surrogate inference, and evaluation metrics.";

    py::register_exception<Error>(m, "PacktermError", PyExc_RuntimeError);

    py::class_<PackConfig>(m, "PackConfig")
        .def(py::init<>())
        .def_readwrite("phi_b", &PackConfig::phi_b)
        .def_readwrite("k", &PackConfig::k)
        .def_readwrite("lambda_b", &PackConfig::lambda_b)
        .def_readwrite("lambda_c", &PackConfig::lambda_c)
        .def_readwrite("t0", &PackConfig::t0);

    py::class_<Layout>(m, "Layout")
        .def(py::init<>())
        .def_readwrite("domain_w_mm", &Layout::domain_w_mm)
        .def_readwrite("domain_h_mm", &Layout::domain_h_mm)
        .def_readwrite("diameter_mm", &Layout::diameter_mm)
        .def_readwrite("gap_cell_mm", &Layout::gap_cell_mm)
        .def_readwrite("gap_wall_mm", &Layout::gap_wall_mm)
        .def_readwrite("centers_mm", &Layout::centers_mm);

    m.def("validate_layout", &validate_layout, py::arg("layout"));
    m.def("generate_layout", &generate_layout, py::arg("seed"), py::arg("n_cells"),
          py::arg("geometry") = Layout{}, py::arg("max_rejections") = 10000);
    m.def("write_layout", &write_layout, py::arg("layout"), py::arg("path"));
    m.def("read_layout", &read_layout, py::arg("path"));

    m.def(
        "battery_mask",
        [](const Layout& layout, int rows, int cols) {
            const GridSpec g(rows, cols, layout.domain_w_mm * 1e-3, layout.domain_h_mm * 1e-3);
            const BatteryMask mask = battery_mask(layout, g);
            py::array_t<bool> out({rows, cols});
            for (int i = 0; i < rows * cols; ++i) out.mutable_data()[i] = mask.flags[i] != 0;
            return out;
        },
        py::arg("layout"), py::arg("rows"), py::arg("cols"));

    m.def(
        "rasterize_conductivity",
        [](const Layout& layout, int rows, int cols, const PackConfig& pack) {
            const GridSpec g(rows, cols, layout.domain_w_mm * 1e-3, layout.domain_h_mm * 1e-3);
            return field_to_array(rasterize_conductivity(layout, g, pack));
        },
        py::arg("layout"), py::arg("rows"), py::arg("cols"), py::arg("pack") = PackConfig{});

    m.def(
        "rasterize_initial_intensity",
        [](const Layout& layout, int rows, int cols, const PackConfig& pack) {
            const GridSpec g(rows, cols, layout.domain_w_mm * 1e-3, layout.domain_h_mm * 1e-3);
            return field_to_array(rasterize_initial_intensity(layout, g, pack));
        },
        py::arg("layout"), py::arg("rows"), py::arg("cols"), py::arg("pack") = PackConfig{});

    m.def(
        "solve_reference",
        [](const Array& lam, const BoolArray& mask, const PackConfig& pack, double width,
           double height, double tol, int max_iterations) {
            const ScalarField f = field_from_array(lam, width, height);
            return field_to_array(solve_reference(f, mask_from_array(mask, width, height), pack,
                                                  make_opts(tol, max_iterations)));
        },
        py::arg("conductivity"), py::arg("mask"), py::arg("pack") = PackConfig{},
        py::arg("width") = 0.084, py::arg("height") = 0.084, py::arg("tol") = 1e-10,
        py::arg("max_iterations") = 200000);

    m.def(
        "solve_lowfi",
        [](const Array& lam, const BoolArray& mask, const PackConfig& pack, double width,
           double height, double tol, int max_iterations) {
            const ScalarField f = field_from_array(lam, width, height);
            return field_to_array(solve_lowfi(f, mask_from_array(mask, width, height), pack,
                                              make_opts(tol, max_iterations)));
        },
        py::arg("conductivity"), py::arg("mask"), py::arg("pack") = PackConfig{},
        py::arg("width") = 0.084, py::arg("height") = 0.084, py::arg("tol") = 1e-10,
        py::arg("max_iterations") = 200000);

    m.def(
        "solve_dense",
        [](const Array& lam, const BoolArray& mask, const PackConfig& pack, double width,
           double height, const std::string& disc) {
            const ScalarField f = field_from_array(lam, width, height);
            const Discretization d =
                disc == "reference" ? Discretization::reference : Discretization::lowfi;
            return field_to_array(solve_dense(f, mask_from_array(mask, width, height), pack, d));
        },
        py::arg("conductivity"), py::arg("mask"), py::arg("pack") = PackConfig{},
        py::arg("width") = 0.084, py::arg("height") = 0.084,
        py::arg("discretization") = "lowfi");

    m.def(
        "residual_lowfi",
        [](const Array& T, const Array& lam, const BoolArray& mask, const PackConfig& pack,
           double width, double height) {
            return field_to_array(residual_lowfi(field_from_array(T, width, height),
                                                 field_from_array(lam, width, height),
                                                 mask_from_array(mask, width, height), pack));
        },
        py::arg("T"), py::arg("conductivity"), py::arg("mask"), py::arg("pack") = PackConfig{},
        py::arg("width") = 0.084, py::arg("height") = 0.084);

    m.def(
        "energy_balance",
        [](const Array& T, const BoolArray& mask, const PackConfig& pack, double width,
           double height) {
            const ScalarField f = field_from_array(T, width, height);
            const EnergyBalance eb = energy_balance(f, mask_from_array(mask, width, height),
                                                    pack, f.spec());
            py::dict d;
            d["heat_in"] = eb.heat_in;
            d["heat_out"] = eb.heat_out;
            d["relative_mismatch"] = eb.relative_mismatch;
            return d;
        },
        py::arg("T"), py::arg("mask"), py::arg("pack") = PackConfig{}, py::arg("width") = 0.084,
        py::arg("height") = 0.084);

    m.def(
        "field_stats",
        [](const Array& a) {
            const int rows = static_cast<int>(a.shape(0));
            const ScalarField f = field_from_array(a, static_cast<double>(a.shape(1)),
                                                   static_cast<double>(rows));
            const FieldStats s = field_stats(f);
            py::dict d;
            d["min"] = s.min;
            d["max"] = s.max;
            d["mean"] = s.mean;
            return d;
        },
        py::arg("field"));

    m.def(
        "write_field",
        [](const Array& a, const std::string& path, double width, double height) {
            write_field(field_from_array(a, width, height), path);
        },
        py::arg("field"), py::arg("path"), py::arg("width") = 0.084, py::arg("height") = 0.084);
    m.def(
        "read_field",
        [](const std::string& path, double width, double height) {
            return field_to_array(read_field(path, width, height));
        },
        py::arg("path"), py::arg("width") = 0.084, py::arg("height") = 0.084);

    auto np_metric = [](double (*fn)(const ScalarField&, const ScalarField&)) {
        return [fn](const Array& pred, const Array& truth) {
            const double cols = static_cast<double>(pred.shape(1));
            const double rows = static_cast<double>(pred.shape(0));
            return fn(field_from_array(pred, cols, rows), field_from_array(truth, cols, rows));
        };
    };
    m.def("mae", np_metric(&mae), py::arg("pred"), py::arg("truth"));
    m.def("max_ae", np_metric(&max_ae), py::arg("pred"), py::arg("truth"));
    m.def("mt_ae", np_metric(&mt_ae), py::arg("pred"), py::arg("truth"));
    m.def(
        "bmae",
        [](const Array& pred, const Array& truth, const BoolArray& mask) {
            const double cols = static_cast<double>(pred.shape(1));
            const double rows = static_cast<double>(pred.shape(0));
            return bmae(field_from_array(pred, cols, rows), field_from_array(truth, cols, rows),
                        mask_from_array(mask, cols, rows));
        },
        py::arg("pred"), py::arg("truth"), py::arg("mask"));

    m.def(
        "predict",
        [](const std::string& model_path, const Array& lam, double width, double height) {
            return field_to_array(make_predictor(model_path)(field_from_array(lam, width, height)));
        },
        py::arg("model_path"), py::arg("conductivity"), py::arg("width") = 0.084,
        py::arg("height") = 0.084,
        "Run a saved model (backbone, head, or supervised) on a conductivity raster");

    m.def(
        "render_pgm",
        [](const Array& a, const std::string& path, double width, double height) {
            write_pgm(field_from_array(a, width, height), path);
        },
        py::arg("field"), py::arg("path"), py::arg("width") = 0.084, py::arg("height") = 0.084);
}
