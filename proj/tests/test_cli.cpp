#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include "msreg/volume_io.hpp"

namespace fs = std::filesystem;

namespace {

const char* cli_path() { return MSREG_CLI_PATH; }

int run(const std::string& args) {
  const std::string cmd = std::string(cli_path()) + " " + args + " > /dev/null 2>&1";
  return std::system(cmd.c_str());
}

fs::path work_dir() {
  static const fs::path dir = [] {
    auto d = fs::temp_directory_path() / "msreg_cli_tests";
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::vector<char> bytes_of(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST(Cli, UnknownSubcommandFails) {
  EXPECT_NE(run("no-such-subcommand"), 0);
  EXPECT_NE(run("phantom"), 0);  // missing required outputs
}

TEST(Cli, PhantomWritesReadableVolumesAndManifest) {
  const auto d = work_dir();
  const std::string base = " --dims 20,20,20 --r-wm 4 --r-gm 6 --amplitude 1 --seed 5";
  ASSERT_EQ(run("phantom --out-intensity " + (d / "i.nii").string() + " --out-gm " +
                (d / "g.nii").string() + " --out-wm " + (d / "w.nii").string() + base),
            0);
  const auto vol = msreg::read_scalar_volume((d / "i.nii").string());
  EXPECT_EQ(vol.grid.dims, (std::array<int, 3>{20, 20, 20}));
  const auto gm = msreg::read_label_volume((d / "g.nii").string());
  EXPECT_EQ(gm.grid.dims, vol.grid.dims);
  const std::string manifest = slurp(d / "i.nii.manifest");
  EXPECT_NE(manifest.find("subcommand: phantom"), std::string::npos);
  EXPECT_NE(manifest.find("seed: 5"), std::string::npos);
}

TEST(Cli, MetricsOnIdenticalLabelsReportsPerfectScores) {
  const auto d = work_dir();
  ASSERT_EQ(run("phantom --out-intensity " + (d / "mi.nii").string() + " --out-gm " +
                (d / "mg.nii").string() + " --out-wm " + (d / "mw.nii").string() +
                " --dims 16,16,16 --r-wm 3 --r-gm 5 --amplitude 0 --seed 2"),
            0);
  ASSERT_EQ(run("metrics --warped " + (d / "mg.nii").string() + " --fixed " +
                (d / "mg.nii").string() + " --out " + (d / "report.txt").string()),
            0);
  const std::string report = slurp(d / "report.txt");
  EXPECT_NE(report.find("label.1.dsc: 1"), std::string::npos);
  EXPECT_NE(report.find("label.1.to: 1"), std::string::npos);
  EXPECT_NE(report.find("label.1.assd_mm: 0"), std::string::npos);
}

TEST(Cli, GuidedRegisterWithZeroLevelsEqualsPlainRegister) {
  const auto d = work_dir();
  const std::string mk = " --dims 20,20,20 --r-wm 4 --r-gm 6 --amplitude 1 --noise 0.01";
  ASSERT_EQ(run("phantom --out-intensity " + (d / "f.nii").string() + " --out-gm " +
                (d / "fg.nii").string() + " --out-wm " + (d / "fw.nii").string() + mk + " --seed 1"),
            0);
  ASSERT_EQ(run("phantom --out-intensity " + (d / "m.nii").string() + " --out-gm " +
                (d / "mg2.nii").string() + " --out-wm " + (d / "mw2.nii").string() + mk +
                " --seed 11"),
            0);
  const std::string demons = " --pyramid-levels 2 --iterations 8,5";
  ASSERT_EQ(run("register --fixed " + (d / "f.nii").string() + " --moving " + (d / "m.nii").string() +
                " --out-field " + (d / "plain").string() + demons),
            0);
  ASSERT_EQ(run("guided-register --fixed " + (d / "f.nii").string() + " --moving " +
                (d / "m.nii").string() + " --out-field " + (d / "guided").string() + demons),
            0);
  for (const char* c : {".ux.nii", ".uy.nii", ".uz.nii"})
    EXPECT_EQ(bytes_of(d / ("plain" + std::string(c))), bytes_of(d / ("guided" + std::string(c))))
        << c;
}

TEST(Cli, SimplifyRunsATrainedNetEndToEnd) {
  const auto d = work_dir();
  ASSERT_EQ(run("phantom --out-intensity " + (d / "t.nii").string() + " --out-gm " +
                (d / "tg.nii").string() + " --out-wm " + (d / "tw.nii").string() +
                " --dims 24,24,24 --r-wm 5 --r-gm 7 --amplitude 1 --seed 3"),
            0);
  // target: the same image (identity mapping is learnable fast)
  ASSERT_EQ(run("train --complex " + (d / "t.nii").string() + " --simple " + (d / "t.nii").string() +
                " --out " + (d / "net.bin").string() +
                " --channels 2 --skips '' --patches 8 --batch 4 --epochs 2 --seed 9"),
            0);
  ASSERT_EQ(run("simplify --net " + (d / "net.bin").string() + " --in " + (d / "t.nii").string() +
                " --out " + (d / "ts.nii").string()),
            0);
  const auto out = msreg::read_scalar_volume((d / "ts.nii").string());
  EXPECT_EQ(out.grid.dims, (std::array<int, 3>{24, 24, 24}));
}
