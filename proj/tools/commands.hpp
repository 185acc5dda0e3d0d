#pragma once

namespace CLI {
class App;
}

namespace zipfmax::cli {

// Each registers one subcommand on the application; the subcommand's
// callback performs the work and throws on failure (CLI::ParseError
// subclasses for usage problems, std::exception for runtime ones).
void add_calibrate(CLI::App& app);
void add_partition(CLI::App& app);
void add_train(CLI::App& app);
void add_eval(CLI::App& app);
void add_bench(CLI::App& app);
void add_build_vocab(CLI::App& app);

}  // namespace zipfmax::cli
