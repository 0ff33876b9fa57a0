#pragma once

#include <string_view>

namespace ddtcdr::log {

enum class Level { quiet = 0, warn = 1, info = 2, debug = 3 };

// Read once from DDTCDR_VERBOSITY (quiet|warn|info|debug); defaults to warn.
Level verbosity();
void set_verbosity(Level level);

void warn(std::string_view msg);
void info(std::string_view msg);
void debug(std::string_view msg);

}  // namespace ddtcdr::log
