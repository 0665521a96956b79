#pragma once

#include <string>
#include <vector>

#include "packtherm/errors.hpp"

namespace packtherm {

enum class Split { pretrain, labeled, val, test };

std::string to_string(Split s);
Split split_from_string(const std::string& s);

/// One dataset case. Paths are stored as written in the manifest file and
/// resolved against the manifest's directory. temperature_path is empty for
/// unsolved cases.
struct CaseEntry {
    std::string id;
    std::string layout_path;
    std::string conductivity_path;
    std::string temperature_path;
    Split split = Split::pretrain;
};

struct DatasetManifest {
    std::string base_dir; ///< directory the relative paths resolve against
    std::vector<CaseEntry> cases;

    std::string resolve(const std::string& rel) const;
    std::vector<const CaseEntry*> split_cases(Split s) const;
};

/// Manifest JSON: a list of case objects
/// {"id":..., "layout":..., "conductivity":..., "temperature":..., "split":...}
/// read_manifest enforces unique ids and that every referenced path exists.
DatasetManifest read_manifest(const std::string& path);
void write_manifest(const DatasetManifest& m, const std::string& path);

} // namespace packtherm
