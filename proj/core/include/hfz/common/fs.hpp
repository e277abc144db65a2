#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "hfz/common/bytes.hpp"

namespace hfz::fsx {

namespace fs = std::filesystem;

Bytes read_file(const fs::path& path);
std::string read_text(const fs::path& path);

// Writes to a dot-prefixed temporary next to `path` and renames it into place,
// so directory scanners never see a partially written file.
void write_atomic(const fs::path& path, std::string_view data);
void write_atomic(const fs::path& path, const Bytes& data);

// Regular, non-hidden files directly inside `dir`, sorted by file name.
// Missing directory yields an empty list.
std::vector<fs::path> list_files(const fs::path& dir);

// Seed file name for a generated input: hex of its content hash.
std::string content_name(const Bytes& data);

}  // namespace hfz::fsx
