#include "rapid/log.hpp"

#include <spdlog/sinks/ringbuffer_sink.h>
#include <spdlog/sinks/stdout_color_sinks.h>

namespace rapid {

namespace {

struct Sinks {
    std::shared_ptr<spdlog::sinks::ringbuffer_sink_mt> ring =
        std::make_shared<spdlog::sinks::ringbuffer_sink_mt>(200);
    std::shared_ptr<spdlog::logger> logger;

    Sinks() {
        auto err = std::make_shared<spdlog::sinks::stderr_color_sink_mt>();
        ring->set_pattern("%H:%M:%S.%e %l %v");
        logger = std::make_shared<spdlog::logger>("rapid", spdlog::sinks_init_list{err, ring});
        logger->set_level(spdlog::level::info);
    }
};

Sinks& sinks() {
    static Sinks s;
    return s;
}

}  // namespace

std::shared_ptr<spdlog::logger> log() { return sinks().logger; }

std::vector<std::string> recent_log_lines(std::size_t limit) {
    auto lines = sinks().ring->last_formatted(limit);
    for (auto& l : lines) {
        while (!l.empty() && (l.back() == '\n' || l.back() == '\r')) l.pop_back();
    }
    return lines;
}

void set_log_level(spdlog::level::level_enum level) { sinks().logger->set_level(level); }

}  // namespace rapid
