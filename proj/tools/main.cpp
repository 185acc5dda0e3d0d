#include <exception>
#include <iostream>

#include "CLI11.hpp"
#include "commands.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Adaptive softmax toolkit: calibrate GEMM cost, partition a vocabulary, "
               "train and evaluate language models, benchmark output layers."};
  app.require_subcommand(1);

  zipfmax::cli::add_calibrate(app);
  zipfmax::cli::add_partition(app);
  zipfmax::cli::add_train(app);
  zipfmax::cli::add_eval(app);
  zipfmax::cli::add_bench(app);
  zipfmax::cli::add_build_vocab(app);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
