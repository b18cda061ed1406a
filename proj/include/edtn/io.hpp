#pragma once

#include <string>

namespace edtn {

// Writes content to path via a temporary file in the same directory plus rename,
// so partially written outputs are never observed.
void atomic_write(const std::string& path, const std::string& content);

std::string read_file(const std::string& path);

// Shortest round-trip decimal form of a double ("%.17g" then trimmed), used for all
// numeric text output so reruns are byte-identical.
std::string format_double(double v);

}  // namespace edtn
