#pragma once

#include <string>

#include "shiftlab/common.hpp"

namespace shiftlab {

/// Write-temp-then-rename so long runs never leave a truncated file behind.
/// Creates parent directories as needed.
void atomic_write_file(const std::string& path, const std::string& content);

std::string read_file(const std::string& path);

}  // namespace shiftlab
