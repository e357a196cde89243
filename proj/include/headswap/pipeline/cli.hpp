#pragma once

#include <iosfwd>

namespace headswap {

/**
 * Command-line front end. Subcommands: synth-data, fit, nmfc, reenact,
 * train-init, finetune, render, metrics. Global flags --seed, --threads and
 * --config (TOML, one [section] per subcommand mirroring its flags).
 *
 * Returns 0 on success, 2 on a usage error, 1 when a stage fails.
 */
int cli_main(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

} // namespace headswap
