// Standalone driver for measuring branch coverage of the reference cache:
// built with --coverage against src/memory.cpp, it replays the exhaustive
// protocol suite and exits nonzero on any behavioral violation.

#include <cstdio>

#include "memory_protocol.hpp"

int main() {
  const std::string bad = corrtrack::run_memory_protocol_suite();
  if (!bad.empty()) {
    std::fputs(bad.c_str(), stderr);
    return 1;
  }
  return 0;
}
