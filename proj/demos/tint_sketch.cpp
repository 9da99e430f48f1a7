// Small end-to-end run: draws a gray sketch and a two-tone style swatch,
// then tints the sketch with random VGG-19 weights.
//
//   tint_sketch <output-dir> [iterations]
//
// Random weights only show the mechanics. Real colour transfer needs a
// converted pretrained weight file and the ghostlayer CLI.

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <iostream>

#include "ghostlayer/ghostlayer.hpp"

namespace gl = ghostlayer;

int main(int argc, char** argv) {
  if (argc < 2) {
    std::cerr << "usage: tint_sketch <output-dir> [iterations]\n";
    return 2;
  }
  const std::filesystem::path dir = argv[1];
  const std::size_t iterations = argc > 2 ? std::strtoul(argv[2], nullptr, 10) : 150;
  std::filesystem::create_directories(dir);

  gl::ImageBuffer sketch(64, 64), swatch(64, 64);
  for (std::size_t y = 0; y < 64; ++y) {
    for (std::size_t x = 0; x < 64; ++x) {
      const double r = std::hypot(double(x) - 32.0, double(y) - 28.0);
      const std::uint8_t g = r < 18 ? static_cast<std::uint8_t>(80 + 4 * r) : (r < 20 ? 20 : 210);
      sketch.px(x, y)[0] = sketch.px(x, y)[1] = sketch.px(x, y)[2] = g;
      // Warm ochre on top, deep blue below.
      auto* s = swatch.px(x, y);
      s[0] = y < 32 ? 200 : 30;
      s[1] = y < 32 ? 140 : 50;
      s[2] = y < 32 ? 40 : 190;
    }
  }
  gl::encode(sketch, dir / "sketch.png");
  gl::encode(swatch, dir / "swatch.png");

  gl::TransferJob job;
  job.content_path = dir / "sketch.png";
  job.style_paths = {dir / "swatch.png"};
  job.weight_path = "(random)";
  job.output_path = dir / "tinted.png";
  job.trace_path = dir / "tinted.csv";
  job.preprocess.width = 64;
  job.preprocess.height = 64;
  job.optimizer.iterations = iterations;
  job.optimizer.checkpoint_every = 25;

  const gl::FeatureExtractor net(gl::vgg19_spec(), gl::random_weights(gl::vgg19_spec(), 1));
  try {
    gl::run_job(job, net, std::cerr);
  } catch (const gl::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  std::cout << "wrote " << job.output_path.string() << " and " << job.trace_path.string() << '\n';
  return 0;
}
