#pragma once

#include <spdlog/spdlog.h>

namespace urcl {

/// Library-wide logger; warnings for recoverable numerical and sampling fallbacks.
inline spdlog::logger& logger() {
  static std::shared_ptr<spdlog::logger> instance = [] {
    auto existing = spdlog::get("urcl");
    return existing ? existing : spdlog::default_logger()->clone("urcl");
  }();
  return *instance;
}

}  // namespace urcl
