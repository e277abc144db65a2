#pragma once

#include <string_view>

namespace hfz::log {

enum class Level { Debug, Info, Warn, Error, Quiet };

void set_level(Level level);
Level level();

void debug(std::string_view msg);
void info(std::string_view msg);
void warn(std::string_view msg);
void error(std::string_view msg);

}  // namespace hfz::log
