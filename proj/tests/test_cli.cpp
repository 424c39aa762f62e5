// Drives the command-line tool as a subprocess and checks exit codes and output.

#include <doctest.h>

#include <sys/wait.h>

#include <array>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

namespace fs = std::filesystem;

namespace {

struct Result {
  int status;
  std::string output;
};

Result run(const std::string& args) {
  const std::string cmd = std::string(ECGAN_LAB_CLI) + " " + args + " 2>&1";
  FILE* pipe = ::popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  std::string out;
  std::array<char, 512> buf{};
  while (std::fgets(buf.data(), static_cast<int>(buf.size()), pipe)) out += buf.data();
  const int raw = ::pclose(pipe);
  return {WIFEXITED(raw) ? WEXITSTATUS(raw) : -1, out};
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("ecgan_cli_test_" + name);
  fs::remove_all(p);
  return p;
}

const char* kQuick = " --set net.g_hidden=16 --set net.d_hidden=16 --set data.samples=800"
                     " --set eval.samples_per_class=10 --set train.batch_size=16";

}  // namespace

TEST_CASE("run smoke contract") {
  const fs::path out = scratch("run");
  const Result r = run("run --preset ECGAN-0 --dataset ring8 --steps 200 --seeds 1 -q --out " + out.string() + kQuick);
  CHECK(r.status == 0);
  const fs::path dir = out / "ECGAN-0_ring8";
  for (const char* f : {"config.txt", "metrics.jsonl", "summary.json", "samples.png"}) CHECK(fs::exists(dir / f));
  std::ifstream metrics(dir / "metrics.jsonl");
  std::string line;
  CHECK(static_cast<bool>(std::getline(metrics, line)));
  CHECK(line.find("\"preset\":\"ECGAN-0\"") != std::string::npos);

  const Result again = run("run --preset ECGAN-0 --dataset ring8 --steps 200 --seeds 1 -q --out " + out.string() + kQuick);
  CHECK(again.status == 0);
  CHECK(again.output.find("already complete") != std::string::npos);

  const Result conflict = run("run --preset ECGAN-0 --dataset ring8 --steps 100 --seeds 1 -q --out " + out.string() + kQuick);
  CHECK(conflict.status == 1);
  CHECK(conflict.output.find("--force") != std::string::npos);
  fs::remove_all(out);
}

TEST_CASE("multi-seed summary has per-seed and aggregate rows") {
  const fs::path out = scratch("seeds");
  const Result r = run("run --preset ECGAN-UC --steps 30 --seeds 1,2 -q --out " + out.string() + kQuick);
  CHECK(r.status == 0);
  std::ifstream in(out / "ECGAN-UC_ring8" / "summary.json");
  const std::string text((std::istreambuf_iterator<char>(in)), {});
  CHECK(text.find("\"per_seed\"") != std::string::npos);
  CHECK(text.find("\"aggregate\"") != std::string::npos);
  fs::remove_all(out);
}

TEST_CASE("environment variable overrides the output root") {
  const fs::path env = scratch("env");
  const std::string cmd = "ECGAN_LAB_OUT=" + env.string() + " " + ECGAN_LAB_CLI +
                          " run --preset ECGAN-0 --steps 10 -q --out /nonexistent/ignored" + kQuick + " >/dev/null 2>&1";
  CHECK(std::system(cmd.c_str()) == 0);
  CHECK(fs::exists(env / "ECGAN-0_ring8" / "summary.json"));
  fs::remove_all(env);
}

TEST_CASE("usage errors exit with status 2") {
  const Result unknown = run("run --preset NotAGAN --steps 10");
  CHECK(unknown.status == 2);
  CHECK(unknown.output.find("ECGAN-UCE") != std::string::npos);
  CHECK(unknown.output.find("ContraGAN") != std::string::npos);
  CHECK(run("frobnicate").status == 2);
  CHECK(run("run --set nonsense").status == 2);
  CHECK(run("run --set train.steps=abc").status == 2);
  CHECK(run("verify").status == 2);
  CHECK(run("verify telepathy").status == 2);
  CHECK(run("compare --presets ECGAN-0").status == 2);
}

TEST_CASE("verify suites") {
  const Result duality = run("verify duality");
  CHECK(duality.status == 0);
  CHECK(duality.output.find("PASS 100/100") != std::string::npos);
  const Result eq = run("verify equivalence");
  CHECK(eq.status == 0);
  CHECK(eq.output.find("PASS") != std::string::npos);
  const Result grads = run("verify gradients --seed 3");
  CHECK(grads.status == 0);
  CHECK(grads.output.find("max relative error") != std::string::npos);
  const Result bound = run("verify entropy-bound");
  CHECK(bound.status == 0);
  CHECK(bound.output.find("\"kind\":\"entropy-bound\"") != std::string::npos);
}

TEST_CASE("compare") {
  const fs::path out = scratch("compare");
  const std::string common = " --steps 20 -q --out " + out.string() + kQuick;
  const Result missing = run("compare --presets ECGAN-0,ECGAN-UC --no-train" + common);
  CHECK(missing.status == 1);
  CHECK(missing.output.find("summary.json") != std::string::npos);

  const Result r = run("compare --presets ECGAN-UC,ECGAN-0" + common);
  CHECK(r.status == 0);
  CHECK(fs::exists(out / "compare" / "compare.csv"));
  std::ifstream csv(out / "compare" / "compare.csv");
  std::string header, row;
  std::getline(csv, header);
  CHECK(header.starts_with("order,"));
  int rows = 0;
  while (std::getline(csv, row)) ++rows;
  CHECK(rows == 2);
  CHECK(run("compare --presets ECGAN-UC,ECGAN-0 --no-train" + common).status == 0);
  fs::remove_all(out);
}

TEST_CASE("preset listing") {
  const Result r = run("presets");
  CHECK(r.status == 0);
  CHECK(r.output == "ECGAN-0\nECGAN-U\nECGAN-C\nECGAN-E\nECGAN-UC\nECGAN-UCE\nProjGAN\nACGAN\nContraGAN\n");
}
