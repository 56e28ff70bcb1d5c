#ifndef SRNET_CLI_HPP
#define SRNET_CLI_HPP

namespace srnet {

// Entry point behind the srnet binary; also callable in-process from tests.
// Exit codes: 0 success, 1 runtime failure, 2 usage/config errors.
int run_cli(int argc, const char* const* argv);

}  // namespace srnet

#endif
