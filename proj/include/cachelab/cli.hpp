#pragma once

#include <iosfwd>
#include <string>
#include <string_view>

#include "cachelab/rng.hpp"
#include "cachelab/serving_node.hpp"

namespace cachelab {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitConfig = 2;

/// Subcommands: calibrate, attack-prefix, attack-semantic, defend-eval, report, serve.
/// Returns 0 on success, 2 on a config or usage error, 1 on any other failure.
int run_cli(int argc, const char* const* argv, std::istream& in, std::ostream& out,
            std::ostream& err);

/// One request of the `serve` line protocol:
///   SUBMIT <user> <gen_tokens> <prompt...>  ->  OK <ttft_s> <total_s> <response>  |  LIMITED <retry_after_s>
///   ADVANCE <seconds>                       ->  OK <now_s>
///   NOW                                     ->  OK <now_s>
/// Malformed lines answer "ERR <message>".
std::string handle_protocol_line(ServingNode& node, std::string_view line, Rng& rng);

}  // namespace cachelab
