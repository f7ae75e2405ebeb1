#pragma once

namespace mdc {

// Entry point of the `mdc` binary; also callable from tests.
// Exit codes: 0 success, 1 usage error, 2 runtime error, 3 selfcheck failure.
int cli_main(int argc, const char* const* argv);

}  // namespace mdc
