#pragma once

#include <functional>
#include <string>

namespace hcm::log {

enum class Level { Debug, Info, Warning, Error };

using Sink = std::function<void(Level, const std::string&)>;

// Replaces the process-wide sink; returns the previous one. The default sink
// writes warnings and errors to stderr and drops the rest.
Sink set_sink(Sink sink);

void write(Level level, const std::string& message);

inline void debug(const std::string& m) { write(Level::Debug, m); }
inline void info(const std::string& m) { write(Level::Info, m); }
inline void warn(const std::string& m) { write(Level::Warning, m); }

}  // namespace hcm::log
