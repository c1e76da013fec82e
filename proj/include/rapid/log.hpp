#pragma once

#include <memory>
#include <string>
#include <vector>

#include <spdlog/spdlog.h>

namespace rapid {

/// Process-wide logger: stderr plus an in-memory ring of recent lines for status snapshots.
std::shared_ptr<spdlog::logger> log();

std::vector<std::string> recent_log_lines(std::size_t limit = 20);

void set_log_level(spdlog::level::level_enum level);

}  // namespace rapid
