#pragma once

namespace panoptic {

/// Routes log output to stderr at the level named by PANOPTIC_LOG
/// (error, info or debug; default info).
void init_logging();

}  // namespace panoptic
