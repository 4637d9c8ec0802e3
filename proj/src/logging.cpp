#include "panoptic/logging.hpp"

#include <cstdlib>
#include <string>

#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

namespace panoptic {

void init_logging() {
  auto logger = spdlog::stderr_color_mt("panoptic");
  logger->set_pattern("[%l] %v");
  spdlog::level::level_enum level = spdlog::level::info;
  if (const char* env = std::getenv("PANOPTIC_LOG")) {
    const std::string name = env;
    if (name == "error") level = spdlog::level::err;
    if (name == "debug") level = spdlog::level::debug;
  }
  logger->set_level(level);
  spdlog::set_default_logger(logger);
}

}  // namespace panoptic
