#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "concept_probe/dataset.hpp"
#include "concept_probe/synthdata.hpp"

namespace cprobe {

struct DatasetBundle {
    LabeledDataset dataset;
    std::vector<synthdata::ConceptSet> concepts;
};

/// Writes every image and concept example as a ".ten" file under `dir` and a
/// `manifest.json` listing paths (relative to `dir`), labels, splits and
/// concept membership. `provenance` is embedded verbatim as a JSON object.
void write_dataset(const std::filesystem::path& dir, const DatasetBundle& bundle,
                   const std::string& provenance_json = "{}");

/// Reads a manifest written by write_dataset. Malformed JSON raises
/// FormatError naming the line and column; bad fields name the field path.
DatasetBundle read_dataset(const std::filesystem::path& manifest_path);

}  // namespace cprobe
