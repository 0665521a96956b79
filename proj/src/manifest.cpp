#include "packtherm/manifest.hpp"

#include <filesystem>
#include <fstream>
#include <set>

#include <json.hpp>

namespace fs = std::filesystem;

namespace packtherm {

std::string to_string(Split s) {
    switch (s) {
    case Split::pretrain: return "pretrain";
    case Split::labeled: return "labeled";
    case Split::val: return "val";
    case Split::test: return "test";
    }
    return "?";
}

Split split_from_string(const std::string& s) {
    if (s == "pretrain") return Split::pretrain;
    if (s == "labeled") return Split::labeled;
    if (s == "val") return Split::val;
    if (s == "test") return Split::test;
    throw Error("manifest: unknown split tag '" + s + "'");
}

std::string DatasetManifest::resolve(const std::string& rel) const {
    fs::path p(rel);
    if (p.is_absolute() || base_dir.empty()) return rel;
    return (fs::path(base_dir) / p).string();
}

std::vector<const CaseEntry*> DatasetManifest::split_cases(Split s) const {
    std::vector<const CaseEntry*> out;
    for (const auto& c : cases)
        if (c.split == s) out.push_back(&c);
    return out;
}

DatasetManifest read_manifest(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("read_manifest: cannot open '" + path + "'");
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw Error("read_manifest: malformed JSON in '" + path + "': " + e.what());
    }
    if (!j.is_array()) throw Error("read_manifest: top-level value must be a list of cases");

    DatasetManifest m;
    m.base_dir = fs::path(path).parent_path().string();
    std::set<std::string> ids;
    for (const auto& e : j) {
        CaseEntry c;
        try {
            c.id = e.at("id").get<std::string>();
            c.layout_path = e.at("layout").get<std::string>();
            c.conductivity_path = e.at("conductivity").get<std::string>();
            if (e.contains("temperature") && !e.at("temperature").is_null())
                c.temperature_path = e.at("temperature").get<std::string>();
            c.split = split_from_string(e.at("split").get<std::string>());
        } catch (const nlohmann::json::exception& ex) {
            throw Error("read_manifest: malformed case entry in '" + path + "': " + ex.what());
        }
        if (!ids.insert(c.id).second)
            throw Error("read_manifest: duplicate case id '" + c.id + "'");
        for (const std::string& p : {c.layout_path, c.conductivity_path, c.temperature_path}) {
            if (p.empty()) continue;
            if (!fs::exists(m.resolve(p)))
                throw Error("read_manifest: case '" + c.id + "' references missing file '" +
                            m.resolve(p) + "'");
        }
        m.cases.push_back(std::move(c));
    }
    return m;
}

void write_manifest(const DatasetManifest& m, const std::string& path) {
    auto j = nlohmann::ordered_json::array();
    for (const auto& c : m.cases) {
        nlohmann::ordered_json e;
        e["id"] = c.id;
        e["layout"] = c.layout_path;
        e["conductivity"] = c.conductivity_path;
        if (!c.temperature_path.empty()) e["temperature"] = c.temperature_path;
        e["split"] = to_string(c.split);
        j.push_back(std::move(e));
    }
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw Error("write_manifest: cannot open '" + path + "' for writing");
    out << j.dump(2) << "\n";
}

} // namespace packtherm
