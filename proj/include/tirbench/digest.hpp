#pragma once

#include <filesystem>
#include <string>
#include <string_view>

namespace tirbench {

/// "sha256:<lowercase hex>"
std::string sha256_digest(std::string_view bytes);
std::string file_digest(const std::filesystem::path& path);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view bytes);

}  // namespace tirbench
