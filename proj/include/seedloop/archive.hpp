#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

namespace seedloop {

/// Self-describing weight archive: an 8-byte magic, a JSON header describing
/// the model, then one block of float32 parameters.
struct Archive {
  nlohmann::json header;
  std::vector<float> weights;
};

void write_archive(const std::filesystem::path& path, std::string_view magic, const Archive& archive);
Archive read_archive(const std::filesystem::path& path, std::string_view magic);

} // namespace seedloop
