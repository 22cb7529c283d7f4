#include "elmap/io.hpp"

#include <cstdio>
#include <fstream>
#include <string>

namespace elmap {

double resident_memory_mb()
{
  std::ifstream status("/proc/self/status");
  std::string line;
  while (std::getline(status, line)) {
    if (line.rfind("VmRSS:", 0) == 0) {
      long kb = 0;
      if (std::sscanf(line.c_str(), "VmRSS: %ld kB", &kb) == 1) {
        return static_cast<double>(kb) / 1024.0;
      }
    }
  }
  return 0.0;
}

} // namespace elmap
