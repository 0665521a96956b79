#include "packtherm/layout.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

#include <json.hpp>

namespace packtherm {

namespace {

std::string fmt_mm(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.3f", v);
    return buf;
}

} // namespace

void validate_layout(const Layout& layout) {
    if (!(layout.domain_w_mm > 0.0) || !(layout.domain_h_mm > 0.0))
        throw Error("layout: domain dimensions must be positive");
    if (!(layout.diameter_mm > 0.0)) throw Error("layout: diameter must be positive");
    if (layout.gap_cell_mm < 0.0 || layout.gap_wall_mm < 0.0)
        throw Error("layout: gaps must be non-negative");

    const double min_wall = layout.min_wall_dist_mm();
    for (size_t i = 0; i < layout.centers_mm.size(); ++i) {
        const auto& c = layout.centers_mm[i];
        if (!std::isfinite(c[0]) || !std::isfinite(c[1]))
            throw Error("layout: center coordinates must be finite");
        const double dx = std::min(c[0], layout.domain_w_mm - c[0]);
        const double dy = std::min(c[1], layout.domain_h_mm - c[1]);
        if (dx < min_wall || dy < min_wall)
            throw Error("layout: cell-wall clearance violated: center " + std::to_string(i) +
                        " is " + fmt_mm(std::min(dx, dy)) + " mm from a wall, need >= " +
                        fmt_mm(min_wall) + " mm");
    }
    const double min_dist = layout.min_center_dist_mm();
    for (size_t i = 0; i < layout.centers_mm.size(); ++i) {
        for (size_t j = i + 1; j < layout.centers_mm.size(); ++j) {
            const double dx = layout.centers_mm[i][0] - layout.centers_mm[j][0];
            const double dy = layout.centers_mm[i][1] - layout.centers_mm[j][1];
            const double dist = std::hypot(dx, dy);
            if (dist < min_dist)
                throw Error("layout: cell-cell clearance violated: centers " + std::to_string(i) +
                            " and " + std::to_string(j) + " are " + fmt_mm(dist) +
                            " mm apart, need >= " + fmt_mm(min_dist) + " mm");
        }
    }
}

void validate_pack_config(const PackConfig& c) {
    if (!(c.phi_b > 0.0)) throw Error("pack config: phi_b must be positive");
    if (!(c.k > 0.0)) throw Error("pack config: k must be positive");
    if (!(c.lambda_b > 0.0) || !(c.lambda_c > 0.0))
        throw Error("pack config: conductivities must be positive");
    if (!std::isfinite(c.t0)) throw Error("pack config: t0 must be finite");
}

void write_layout(const Layout& layout, const std::string& path) {
    validate_layout(layout);
    nlohmann::ordered_json j;
    j["domain_mm"] = {layout.domain_w_mm, layout.domain_h_mm};
    j["diameter_mm"] = layout.diameter_mm;
    j["gap_cell_mm"] = layout.gap_cell_mm;
    j["gap_wall_mm"] = layout.gap_wall_mm;
    auto centers = nlohmann::ordered_json::array();
    for (const auto& c : layout.centers_mm) centers.push_back({c[0], c[1]});
    j["centers_mm"] = centers;
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw Error("write_layout: cannot open '" + path + "' for writing");
    out << j.dump(2) << "\n";
}

Layout read_layout(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("read_layout: cannot open '" + path + "'");
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw Error("read_layout: malformed JSON in '" + path + "': " + e.what());
    }
    Layout layout;
    try {
        layout.domain_w_mm = j.at("domain_mm").at(0).get<double>();
        layout.domain_h_mm = j.at("domain_mm").at(1).get<double>();
        layout.diameter_mm = j.at("diameter_mm").get<double>();
        layout.gap_cell_mm = j.at("gap_cell_mm").get<double>();
        layout.gap_wall_mm = j.at("gap_wall_mm").get<double>();
        layout.centers_mm.clear();
        for (const auto& c : j.at("centers_mm"))
            layout.centers_mm.push_back({c.at(0).get<double>(), c.at(1).get<double>()});
    } catch (const nlohmann::json::exception& e) {
        throw Error("read_layout: malformed layout JSON in '" + path + "': " + e.what());
    }
    validate_layout(layout);
    return layout;
}

} // namespace packtherm
