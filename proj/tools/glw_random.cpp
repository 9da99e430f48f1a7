// Writes a VGG-19-shaped GLW1 file with He-initialised random weights, for
// smoke runs and tests that need no real checkpoint.

#include <CLI11.hpp>

#include <iostream>

#include "ghostlayer/network_spec.hpp"
#include "ghostlayer/weights.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Generate random VGG-19-shaped GLW1 weights", "glw-random"};
  std::string output;
  std::uint64_t seed = 0;
  app.add_option("output", output, "destination file")->required();
  app.add_option("--seed", seed, "generator seed");
  CLI11_PARSE(app, argc, argv);
  try {
    ghostlayer::save_weights(ghostlayer::random_weights(ghostlayer::vgg19_spec(), seed), output);
  } catch (const ghostlayer::Error& e) {
    std::cerr << "glw-random: " << e.what() << '\n';
    return ghostlayer::exit_code_for(e);
  }
  return 0;
}
