#pragma once
// Command-line front end over the whole pipeline. Seven subcommands:
//
//   gen-data      write the synthetic slide corpus + vocab under data_dir
//   pretrain-lm   stage 0: decoder language-model warmup on train answers
//   train         stage 1: compression / baseline training (needs stage 0)
//   eval          score the test split with the stage-1 checkpoint
//   bench         tcp vs full-forward wall-clock + analytic-FLOP report
//   ablate        stage-1 sweep over compression-token counts (--lc list)
//   dump-hidden   export projected/embedded/compressed token states
//
// Every subcommand accepts --config FILE plus --<key> VALUE (or --<key>=VALUE)
// overrides for any run-config key, applied after the file. Exit codes:
// 0 success, 1 usage error, 2 data/config/runtime error.

#include <iosfwd>

namespace tcv {

int cli_main(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace tcv
