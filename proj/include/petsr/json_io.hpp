#pragma once

#include <filesystem>
#include <utility>

#include "json.hpp"
#include "petsr/volume.hpp"

namespace petsr {

using Json = nlohmann::json;

/// Volume I/O carrying extra sidecar fields (e.g. an embedded scanner geometry).
void write_volume(const ImageGrid& grid, const std::filesystem::path& path, const Json& extra);
std::pair<ImageGrid, Json> read_volume_with_sidecar(const std::filesystem::path& path);

Json read_json_file(const std::filesystem::path& path);
void write_json_file(const Json& j, const std::filesystem::path& path);

struct TissueTable;
TissueTable tissue_table_from_json(const Json& j);
Json tissue_table_to_json(const TissueTable& table);

}  // namespace petsr
