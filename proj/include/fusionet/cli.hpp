#pragma once

namespace fusionet::cli {

/// Exit codes: 0 success, 1 runtime failure (e.g. a training fault), 2 bad
/// usage, config, data or checkpoint.
int run(int argc, char** argv);

}  // namespace fusionet::cli
