#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace lego::harness {

/// Subcommands gen | train | eval | probe | mimic | flops | export-attn.
/// `args` excludes the program name. Returns 0 on success, nonzero with a
/// message on `err` for usage or runtime errors.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

int run_cli(int argc, char** argv);

}  // namespace lego::harness
