#pragma once

#include <filesystem>
#include <string>
#include <string_view>

namespace dbigan {

std::string sha256_hex(std::string_view bytes);
std::string sha256_file(const std::filesystem::path& path);
// Git blob object id: sha1("blob <size>\0" + content).
std::string git_blob_id(std::string_view content);

} // namespace dbigan
