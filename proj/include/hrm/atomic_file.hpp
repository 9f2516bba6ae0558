#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <string_view>

#include "hrm/error.hpp"

namespace hrm {

/// Writes `contents` to a sibling temporary file, then renames it over `path`.
inline void atomic_write(const std::filesystem::path& path, std::string_view contents) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorCode::kInvalidInput, "cannot write " + tmp.string());
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!out) fail(ErrorCode::kInvalidInput, "write failed for " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) fail(ErrorCode::kInvalidInput, "cannot rename " + tmp.string() + ": " + ec.message());
}

}  // namespace hrm
