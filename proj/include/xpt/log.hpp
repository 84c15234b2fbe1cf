#pragma once

#include <atomic>
#include <chrono>
#include <iostream>
#include <mutex>
#include <string_view>

#include <json.hpp>

namespace xpt {

inline std::atomic<bool>& logging_enabled() {
    static std::atomic<bool> enabled{true};
    return enabled;
}

/// One JSON object per line on standard error: {"ts": ..., "event": ..., <fields>}.
inline void log_event(std::string_view event, nlohmann::json fields = nlohmann::json::object()) {
    if (!logging_enabled()) return;
    static std::mutex mutex;
    const auto now = std::chrono::system_clock::now().time_since_epoch();
    fields["event"] = event;
    fields["ts"] = std::chrono::duration<double>(now).count();
    std::lock_guard lock(mutex);
    std::cerr << fields.dump() << '\n';
}

}  // namespace xpt
