#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <sys/wait.h>

#ifdef PGT_CLI_PATH

namespace fs = std::filesystem;

namespace {

struct Result {
  int code = -1;
  std::string out;
  std::string err;
};

std::string slurp(const fs::path& p) {
  std::ifstream f(p);
  std::stringstream s;
  s << f.rdbuf();
  return s.str();
}

Result run(const fs::path& dir, const std::string& args) {
  const std::string cmd = std::string("\"") + PGT_CLI_PATH + "\" " + args + " > \"" +
                          (dir / "out.txt").string() + "\" 2> \"" + (dir / "err.txt").string() +
                          "\"";
  const int status = std::system(cmd.c_str());
  Result r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = slurp(dir / "out.txt");
  r.err = slurp(dir / "err.txt");
  return r;
}

}  // namespace

TEST_CASE("command line end to end") {
  const fs::path dir = fs::temp_directory_path() / "pgt_cli_test";
  fs::remove_all(dir);
  fs::create_directories(dir);
  const std::string d = "\"" + dir.string() + "\"";

  Result r = run(dir, "--seed 3 synth-data --train 4 --val 1 --test 2 --out " + d + "/data");
  REQUIRE(r.code == 0);
  CHECK(fs::exists(dir / "data" / "manifest.json"));

  r = run(dir, "--seed 3 synth-data --train 4 --out " + d + "/data");
  CHECK(r.code == 1);
  CHECK(r.err.rfind("pgt: error: io:", 0) == 0);

  {
    std::ofstream cfg(dir / "train.cfg");
    cfg << "base_channels = 8\nbatch_size = 2\nmax_steps = 3\nphase1_steps = 1\n";
  }
  r = run(dir, "--seed 1 --config " + d + "/train.cfg train --manifest " + d +
                   "/data/manifest.json --out " + d + "/run");
  REQUIRE(r.code == 0);
  for (const char* f : {"model.pgtc", "weights.pgtw", "trace.csv", "config.txt"}) {
    CHECK(fs::exists(dir / "run" / f));
  }

  r = run(dir, "eval --manifest " + d + "/data/manifest.json " + d + "/run/model.pgtc --out " + d +
                   "/eval.csv");
  REQUIRE(r.code == 0);
  CHECK(r.out.find("No enhance") != std::string::npos);
  CHECK(slurp(dir / "eval.csv").rfind("model,mse,ssim,psnr", 0) == 0);

  r = run(dir, "--seed 2 quantize --model " + d + "/run/weights.pgtw --manifest " + d +
                   "/data/manifest.json --mode weight_and_activations --calibration 2 --out " + d +
                   "/q8.pgtq");
  REQUIRE(r.code == 0);
  CHECK(fs::exists(dir / "q8.pgtq"));
  r = run(dir, "eval --manifest " + d + "/data/manifest.json " + d + "/q8.pgtq");
  CHECK(r.code == 0);

  r = run(dir, "denoise --model " + d + "/run/model.pgtc --in " + d +
                   "/data/test/000000_noisy.pgm --out " + d + "/clean.pgm");
  CHECK(r.code == 0);
  CHECK(fs::exists(dir / "clean.pgm"));

  r = run(dir, "inspect-model " + d + "/run/model.pgtc");
  CHECK(r.code == 0);
  CHECK(r.out.find("binary.head") != std::string::npos);

  r = run(dir, "train --bogus");
  CHECK(r.code == 2);
  CHECK(r.err.rfind("pgt: error: usage:", 0) == 0);
  r = run(dir, "inspect-model " + d + "/missing.pgtw");
  CHECK(r.code == 1);
  CHECK(r.err.rfind("pgt: error:", 0) == 0);
  {
    std::ofstream cfg(dir / "bad.cfg");
    cfg << "learning_rat = 0.1\n";
  }
  r = run(dir, "--config " + d + "/bad.cfg train --manifest " + d + "/data/manifest.json --out " +
                   d + "/run2");
  CHECK(r.code == 1);
  CHECK(r.err.rfind("pgt: error: config:", 0) == 0);
  fs::remove_all(dir);
}

#endif
