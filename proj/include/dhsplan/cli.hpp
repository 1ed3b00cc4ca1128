#pragma once

namespace dhsplan {

/// Exit codes: 0 optimal/converged, 1 error, 2 infeasible,
/// 3 budget exhausted with incumbent, 4 check tolerance exceeded.
int run_cli(int argc, char **argv);

} // namespace dhsplan
