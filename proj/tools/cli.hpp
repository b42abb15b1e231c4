#pragma once

namespace wunet_cli {

// Runs one CLI invocation and returns the process exit code: 0 success,
// 1 operational or usage error, 2 gradient check failure.
// gradcheck_flags are OR-ed into the flags of the gradcheck subcommand.
int run(int argc, char** argv, int gradcheck_flags = 0);

}  // namespace wunet_cli
