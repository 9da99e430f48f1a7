#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>

#include "ghostlayer/imaging.hpp"
#include "support/nets.hpp"

namespace ghostlayer {
namespace {

using testing::TempDir;

// Shell-quoted single argument.
std::string q(const std::string& s) {
  std::string out = "'";
  for (char c : s) out += c == '\'' ? std::string("'\\''") : std::string(1, c);
  return out + "'";
}

class Cli : public ::testing::Test {
 protected:
  static inline TempDir* shared = nullptr;
  TempDir dir;

  static void SetUpTestSuite() {
    shared = new TempDir;
    const std::string cmd = q(GLW_RANDOM_PATH) + " " + q((shared->path() / "vgg.glw").string()) + " --seed 5";
    ASSERT_EQ(std::system(cmd.c_str()), 0);
    SeededRng rng(1);
    ImageBuffer content(40, 40), style(40, 40);
    for (auto* img : {&content, &style}) {
      for (auto& v : img->pixels) v = static_cast<std::uint8_t>(rng.next() % 256);
    }
    encode(content, shared->path() / "content.png");
    encode(style, shared->path() / "style.png");
  }
  static void TearDownTestSuite() {
    delete shared;
    shared = nullptr;
  }

  std::string base_args() const {
    return "--content " + q((shared->path() / "content.png").string()) + " --style " +
           q((shared->path() / "style.png").string()) + " --weights " + q((shared->path() / "vgg.glw").string()) +
           " --output " + q((dir / "out.png").string()) + " --size 32x32 --iterations 2 --checkpoint-every 1";
  }

  // Runs the CLI and returns its exit status; stdout and stderr are kept.
  int run(const std::string& args) {
    const std::string cmd = q(GHOSTLAYER_CLI_PATH) + " " + args + " >" + q((dir / "stdout").string()) + " 2>" +
                            q((dir / "stderr").string());
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  }

  std::string stderr_text() const {
    std::ifstream in(dir / "stderr");
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
  }
};

TEST_F(Cli, SuccessfulRunExitsZeroAndWritesOutputs) {
  EXPECT_EQ(run(base_args()), 0) << stderr_text();
  EXPECT_TRUE(std::filesystem::exists(dir / "out.png"));
  EXPECT_TRUE(std::filesystem::exists(dir / "out.csv"));
  EXPECT_NE(stderr_text().find("step=2"), std::string::npos);
}

TEST_F(Cli, QuietRunPrintsNoProgress) {
  EXPECT_EQ(run(base_args() + " --quiet"), 0) << stderr_text();
  EXPECT_EQ(stderr_text().find("step="), std::string::npos);
}

TEST_F(Cli, HelpExitsZero) { EXPECT_EQ(run("--help"), 0); }

TEST_F(Cli, UsageErrorsExitTwo) {
  EXPECT_EQ(run(""), 2);
  EXPECT_EQ(run(base_args() + " --beta -1"), 2);
  EXPECT_EQ(run(base_args() + " --no-such-flag"), 2);
  EXPECT_EQ(run("--config " + q((dir / "absent.cfg").string())), 2);
}

TEST_F(Cli, InputErrorsExitThree) {
  EXPECT_EQ(run(base_args() + " --content " + q((dir / "absent.png").string())), 3);
  {
    std::ofstream junk(dir / "junk.glw");
    junk << "GLW0 nonsense";
  }
  EXPECT_EQ(run(base_args() + " --weights " + q((dir / "junk.glw").string())), 3);
  {
    std::ofstream junk(dir / "junk.png");
    junk << "\x89PNG\r\n\x1a\n";
  }
  EXPECT_EQ(run(base_args() + " --content " + q((dir / "junk.png").string())), 3);
  EXPECT_FALSE(std::filesystem::exists(dir / "out.png"));
}

TEST_F(Cli, NumericFailureExitsFourWithoutOutput) {
  EXPECT_EQ(run(base_args() + " --method sgd --lr 1e30 --iterations 20"), 4) << stderr_text();
  EXPECT_FALSE(std::filesystem::exists(dir / "out.png"));
  EXPECT_FALSE(std::filesystem::exists(dir / "out.csv"));
}

}  // namespace
}  // namespace ghostlayer
