#pragma once

#include <string>
#include <vector>

namespace ccnet {

// Entry point behind the ccnet binary. Returns the process exit code:
// 0 on success, 1 on runtime failure, 2 on usage errors.
int cli_run(const std::vector<std::string>& args);

}  // namespace ccnet
