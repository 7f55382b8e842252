#ifndef MIRA_TOOLS_CLI_HPP_
#define MIRA_TOOLS_CLI_HPP_

#include <ostream>

namespace mira {

// Exit codes: 0 ok, 2 config/usage error, 3 runtime failure.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace mira

#endif  // MIRA_TOOLS_CLI_HPP_
