#pragma once

#include <atomic>
#include <functional>
#include <iostream>
#include <mutex>
#include <string>

namespace spdcinv {

enum class LogLevel { debug = 0, info = 1, warn = 2, error = 3, quiet = 4 };

/// Process-wide diagnostic sink. Default: warnings and above go to stderr.
class Log {
public:
    using Sink = std::function<void(LogLevel, const std::string&)>;

    static Log& instance() {
        static Log log;
        return log;
    }

    void set_level(LogLevel l) { level_.store(l); }
    LogLevel level() const { return level_.load(); }
    void set_sink(Sink s) {
        std::lock_guard lock(mutex_);
        sink_ = std::move(s);
    }

    void write(LogLevel l, const std::string& msg) {
        if (l < level_.load()) return;
        std::lock_guard lock(mutex_);
        if (sink_) {
            sink_(l, msg);
            return;
        }
        static const char* names[] = {"debug", "info", "warn", "error", ""};
        std::cerr << "[spdcinv " << names[static_cast<int>(l)] << "] " << msg << '\n';
    }

private:
    std::atomic<LogLevel> level_{LogLevel::warn};
    std::mutex mutex_;
    Sink sink_;
};

inline void log_debug(const std::string& m) { Log::instance().write(LogLevel::debug, m); }
inline void log_info(const std::string& m) { Log::instance().write(LogLevel::info, m); }
inline void log_warn(const std::string& m) { Log::instance().write(LogLevel::warn, m); }

} // namespace spdcinv
