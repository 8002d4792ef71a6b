#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "tarq/cli.hpp"
#include "tarq/tensor_io.hpp"

namespace tarq {
namespace {

namespace fs = std::filesystem;

struct Outcome {
  int code;
  std::string out;
  std::string err;
};

Outcome run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::path(::testing::TempDir()) /
           ("tarq_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  // One-layer model plus calibration; inputs are small integers so f32 storage
  // is exact.
  void write_single_layer(const Matrix& w, std::size_t positions, double zero_scale = 1.0) {
    io::TensorFile model;
    model.sections.push_back(io::encode_fp_tensor(io::to_fp_tensor(w)));
    io::write_file(path("model.tqt"), model);
    Matrix x(positions, w.cols());
    for (std::size_t t = 0; t < positions; ++t)
      for (std::size_t j = 0; j < w.cols(); ++j)
        x(t, j) = zero_scale * static_cast<double>(static_cast<int>((t * 7 + j * 3) % 11) - 5);
    io::TensorFile calib;
    calib.sections.push_back(io::encode_fp_tensor(io::to_fp_tensor(x)));
    io::FpTensor z;
    z.dims = {positions};
    for (std::size_t t = 0; t < positions; ++t) z.data.push_back(t % 5 == 0 ? 2.0f : 4.5f);
    calib.sections.push_back(io::encode_fp_tensor(z));
    io::write_file(path("calib.tqt"), calib);
  }

  fs::path dir_;
};

Matrix lattice_layer() {
  Matrix w(3, 16);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 16; ++j)
      w(i, j) = 0.25 * static_cast<double>(static_cast<int>((j + 5 * i) % 16) - 8);
  return w;
}

TEST_F(CliTest, HelpAndParseErrors) {
  EXPECT_EQ(run({"--help"}).code, cli::kExitOk);
  EXPECT_EQ(run({}).code, cli::kExitParse);
  EXPECT_EQ(run({"frobnicate"}).code, cli::kExitParse);
  const Outcome bits = run({"quantize", "--bits", "9", "--model", "m", "--calib", "c"});
  EXPECT_EQ(bits.code, cli::kExitParse);
  EXPECT_TRUE(bits.out.empty());
  EXPECT_FALSE(bits.err.empty());
  EXPECT_EQ(run({"quantize", "--model", "m"}).code, cli::kExitParse);
  EXPECT_EQ(run({"quantize", "--model", "m", "--calib", "c", "--variant", "nope"}).code,
            cli::kExitParse);
}

TEST_F(CliTest, MalformedInputFiles) {
  EXPECT_EQ(run({"quantize", "--model", path("missing.tqt"), "--calib", path("c.tqt")}).code,
            cli::kExitParse);
  std::ofstream(path("garbage.tqt")) << "not a tensor file";
  EXPECT_EQ(run({"quantize", "--model", path("garbage.tqt"), "--calib", path("garbage.tqt")}).code,
            cli::kExitParse);
  write_single_layer(lattice_layer(), 20);
  io::TensorFile short_calib;
  short_calib.sections.push_back(io::read_file(path("calib.tqt")).sections[0]);
  io::write_file(path("short.tqt"), short_calib);
  EXPECT_EQ(run({"quantize", "--model", path("model.tqt"), "--calib", path("short.tqt")}).code,
            cli::kExitParse);
}

TEST_F(CliTest, SingularMetricIsNumericFailure) {
  write_single_layer(lattice_layer(), 20, 0.0);
  const Outcome o = run({"quantize", "--model", path("model.tqt"), "--calib", path("calib.tqt"),
                         "--out-dir", path("q")});
  EXPECT_EQ(o.code, cli::kExitNumeric);
  EXPECT_NE(o.err.find("SingularMetric"), std::string::npos);
}

TEST_F(CliTest, LatticeExactGptqRoundtrip) {
  const Matrix w = lattice_layer();
  write_single_layer(w, 40);
  const Outcome o = run({"quantize", "--variant", "gptq", "--bits", "4", "--group-size", "128",
                         "--model", path("model.tqt"), "--calib", path("calib.tqt"), "--out-dir",
                         path("q"), "--out", path("report.txt")});
  ASSERT_EQ(o.code, 0) << o.err;
  EXPECT_NE(o.out.find("layer 0 variant=gptq"), std::string::npos);
  const io::TensorFile f = io::read_file(path("q/layer_0.tqt"));
  ASSERT_EQ(f.sections.size(), 1u);
  EXPECT_EQ(dequantize(io::decode_packed(f.sections[0])), w);
  const std::string report = slurp(path("report.txt"));
  EXPECT_NE(report.find("config.variant = gptq"), std::string::npos);
  EXPECT_NE(report.find("config.group_size = 128"), std::string::npos);
}

TEST_F(CliTest, NoDriftTarqEqualsRarebalOnly) {
  Matrix w(4, 8);
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 8; ++j) w(i, j) = std::sin(1.0 + 3.0 * i + j);
  write_single_layer(w, 50);
  const std::vector<std::string> base = {"--group-size", "4", "--model", path("model.tqt"),
                                         "--calib", path("calib.tqt")};
  auto args = [&](const std::string& v, const std::string& out) {
    std::vector<std::string> a{"quantize", "--variant", v, "--out-dir", path(out)};
    a.insert(a.end(), base.begin(), base.end());
    return a;
  };
  ASSERT_EQ(run(args("tarq", "a")).code, 0);
  ASSERT_EQ(run(args("rarebal_only", "b")).code, 0);
  EXPECT_EQ(slurp(path("a/layer_0.tqt")), slurp(path("b/layer_0.tqt")));
}

TEST_F(CliTest, SeededRunsAreByteIdentical) {
  ASSERT_EQ(run({"synth", "--seed", "5", "--dims", "8,8,8", "--positions", "128", "--out-model",
                 path("m.tqt"), "--out-calib", path("c.tqt")})
                .code,
            0);
  std::string first_out;
  for (const char* tag : {"r1", "r2"}) {
    const Outcome o = run({"quantize", "--variant", "spqr_tarq", "--rarity-gate-outliers",
                           "--group-size", "4", "--outlier-fraction", "0.2", "--model",
                           path("m.tqt"), "--calib", path("c.tqt"), "--out-dir", path(tag),
                           "--out", path(std::string(tag) + ".txt")});
    ASSERT_EQ(o.code, 0) << o.err;
    if (first_out.empty()) first_out = o.out;
    EXPECT_EQ(o.out, first_out);
  }
  for (const char* f : {"layer_0.tqt", "layer_1.tqt"}) {
    EXPECT_EQ(slurp(dir_ / "r1" / f), slurp(dir_ / "r2" / f));
    EXPECT_EQ(io::read_file((dir_ / "r1" / f).string()).sections.size(), 2u);
  }
  EXPECT_EQ(slurp(path("r1.txt")), slurp(path("r2.txt")));
  EXPECT_NE(slurp(path("r1.txt")).find("config.variant = spqr_tarq_gated"), std::string::npos);
}

TEST_F(CliTest, PoolManifests) {
  {
    std::ofstream freq(path("freq.tsv"));
    freq << "#total 1000000000\nthe\t50000000\na\t20000000\n";
  }
  std::vector<std::string> corpora;
  for (int s = 0; s < 3; ++s) {
    const std::string p = path("src" + std::to_string(s) + ".tsv");
    std::ofstream c(p);
    for (int k = 0; k < 200; ++k) {
      c << "s" << s << "_" << k << "\tthe a";
      for (int r = 0; r < (k * 13 + s) % 6; ++r) c << " zq" << r;
      c << "\n";
    }
    corpora.push_back(p);
  }
  std::vector<std::string> args{"pool", "--kind", "r_cross", "-n", "128", "--freq",
                                path("freq.tsv"), "--out", path("cross.txt")};
  for (const auto& c : corpora) {
    args.push_back("--corpus");
    args.push_back(c);
  }
  ASSERT_EQ(run(args).code, 0);
  std::istringstream manifest(slurp(path("cross.txt")));
  std::string header, line;
  std::getline(manifest, header);
  EXPECT_NE(header.find("staged_per_source=171"), std::string::npos);
  EXPECT_NE(header.find("candidates=513"), std::string::npos);
  std::size_t ids = 0;
  while (std::getline(manifest, line)) ids += !line.empty();
  EXPECT_EQ(ids, 128u);

  auto mix = [&](const std::string& out) {
    return run({"pool", "--kind", "r_mix", "-n", "50", "--seed", "3", "--freq", path("freq.tsv"),
                "--corpus", corpora[0], "--out", path(out)});
  };
  ASSERT_EQ(mix("m1.txt").code, 0);
  ASSERT_EQ(mix("m2.txt").code, 0);
  EXPECT_EQ(slurp(path("m1.txt")), slurp(path("m2.txt")));

  const Outcome all = run({"pool", "--kind", "r_top", "-n", "200", "--freq", path("freq.tsv"),
                           "--corpus", corpora[1], "--out", "-"});
  ASSERT_EQ(all.code, 0);
  EXPECT_EQ(std::count(all.out.begin(), all.out.end(), '\n'), 201);

  EXPECT_EQ(run({"pool", "--kind", "r_top", "-n", "500", "--freq", path("freq.tsv"), "--corpus",
                 corpora[0]})
                .code,
            cli::kExitParse);
}

TEST_F(CliTest, AblateGridRecordCounts) {
  const std::vector<std::pair<std::string, std::size_t>> grids = {
      {"c", 5}, {"k", 9}, {"source", 3}, {"variants", 4}};
  for (const auto& [grid, cells] : grids) {
    const std::string out = path("ablate_" + grid + ".txt");
    const Outcome o = run({"ablate", "--grid", grid, "--trials", "2", "--dims", "6,6,4",
                           "--positions", "64", "--group-size", "3", "--out", out});
    ASSERT_EQ(o.code, 0) << o.err;
    const std::string text = slurp(out);
    std::size_t runs = 0;
    for (std::size_t pos = text.find("[run "); pos != std::string::npos;
         pos = text.find("[run ", pos + 1))
      ++runs;
    EXPECT_EQ(runs, cells) << grid;
  }
  EXPECT_EQ(run({"ablate", "--grid", "bogus", "--out", path("x.txt")}).code, cli::kExitParse);
}

TEST_F(CliTest, ReportCommandEchoesConfig) {
  const Outcome o = run({"report", "--methods", "gptq,tarq", "--trials", "2", "--dims", "6,4",
                         "--positions", "48", "--group-size", "3", "--cost-ratio", "2", "--out",
                         path("r.txt")});
  ASSERT_EQ(o.code, 0) << o.err;
  const std::string text = slurp(path("r.txt"));
  EXPECT_NE(text.find("config.cost_ratio_c = 2"), std::string::npos);
  EXPECT_NE(text.find("config.positions = 48"), std::string::npos);
  EXPECT_LT(text.find("method = gptq"), text.find("method = tarq"));
}

}  // namespace
}  // namespace tarq
