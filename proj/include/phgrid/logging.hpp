#pragma once

namespace phgrid {

/// Routes diagnostics to stderr at the level named by PHGRID_LOG
/// (error, warn, info, debug; default warn).
void init_logging();

}  // namespace phgrid
