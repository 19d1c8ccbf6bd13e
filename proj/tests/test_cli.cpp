#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

#include "vortexline/cli.hpp"
#include "vortexline/io/config.hpp"

using namespace vortexline;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("vortexline_test_" + name);
  fs::remove_all(p);
  return p;
}

std::vector<std::string> read_lines(const fs::path& p) {
  std::ifstream in(p);
  std::vector<std::string> out;
  for (std::string l; std::getline(in, l);) out.push_back(l);
  return out;
}

std::vector<std::string> split(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  for (std::string c; std::getline(ss, c, ',');) out.push_back(c);
  return out;
}

}  // namespace

TEST(Config, RoundTrip) {
  io::RunConfig c;
  c.time = 2.5;
  c.nodal.seed = Vec3(0.1, 0.2, 0.3);
  c.chaos.window = 0.3;
  c.chaos.mode = DeviationMode::finite_separation;
  c.field.resolution = {3, 4, 5};
  const auto j = io::to_json(c);
  const auto back = io::parse_config(j);
  EXPECT_EQ(io::to_json(back), j);
  EXPECT_EQ(io::config_hash(back), io::config_hash(c));
}

TEST(Config, DefaultsFromEmptyObject) {
  const auto c = io::parse_config(nlohmann::json::object());
  EXPECT_EQ(c.wavefunction.modes.size(), 3u);
  EXPECT_EQ(c.time, 4.0);
  EXPECT_EQ(c.trajectory.x0, Vec3(-0.7, -1.1, 1.3));
}

TEST(Config, UnknownKeysRejected) {
  EXPECT_THROW(io::parse_config({{"tme", 4.0}}), Error);
  EXPECT_THROW(io::parse_config({{"nodal", {{"dss", 0.1}}}}), Error);
  EXPECT_THROW(io::parse_config({{"wavefunction", {{"omega", {1, 0, 1}}}}}), Error);
  EXPECT_THROW(io::parse_config({{"chaos", {{"mode", "magic"}}}}), Error);
}

TEST(Config, HashChangesWithContent) {
  io::RunConfig a, b;
  b.time = 4.5;
  EXPECT_NE(io::config_hash(a), io::config_hash(b));
  EXPECT_EQ(io::config_hash(a).size(), 16u);
}

TEST(Csv, FullPrecisionAndNan) {
  io::CsvWriter w({"a", "b"});
  w.cell(0.1).cell(std::numeric_limits<double>::quiet_NaN());
  w.end_row();
  const auto lines = split(w.str().substr(w.str().find('\n') + 1));
  EXPECT_EQ(std::stod(lines[0]), 0.1);
  EXPECT_EQ(lines[1].substr(0, 3), "nan");
}

TEST(Cli, FieldRowCountAndColumns) {
  io::RunConfig c;
  c.field.resolution = {3, 4, 5};
  c.output_dir = scratch("field").string();
  std::ostringstream err;
  EXPECT_EQ(cli::run("field", c, err), cli::kSuccess) << err.str();
  const auto lines = read_lines(fs::path(c.output_dir) / "field.csv");
  ASSERT_EQ(lines.size(), 61u);
  EXPECT_EQ(lines[0], "x,y,z,rho,phase,vx,vy,vz");
  EXPECT_TRUE(fs::exists(fs::path(c.output_dir) / "manifest.json"));
  EXPECT_TRUE(fs::exists(fs::path(c.output_dir) / "config.json"));
}

TEST(Cli, SingleModeFieldIsAtRest) {
  io::RunConfig c;
  c.wavefunction.modes = {{Complex(1.0, 0.0), {0, 0, 0}}};
  c.field.resolution = {3, 3, 3};
  c.output_dir = scratch("rest").string();
  std::ostringstream err;
  ASSERT_EQ(cli::run("field", c, err), cli::kSuccess);
  const auto lines = read_lines(fs::path(c.output_dir) / "field.csv");
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const auto cells = split(lines[i]);
    ASSERT_EQ(cells.size(), 8u);
    for (int k = 5; k < 8; ++k) EXPECT_EQ(std::stod(cells[k]), 0.0);
  }
}

TEST(Cli, ExitCodes) {
  io::RunConfig c;
  c.output_dir = scratch("codes").string();
  std::ostringstream err;
  EXPECT_EQ(cli::run("nonsense", c, err), cli::kFailure);
  // a seed far from any node cannot start a line
  c.nodal.seed = Vec3(3.9, 3.9, 3.9);
  EXPECT_EQ(cli::run("nodal", c, err), cli::kFailure);
  const auto manifest = nlohmann::json::parse(std::ifstream(fs::path(c.output_dir) / "manifest.json"));
  EXPECT_EQ(manifest["exit_code"], 1);
  EXPECT_FALSE(manifest["warnings"].empty());
}

TEST(Cli, NodalSeededLine) {
  io::RunConfig c;
  const auto lines0 = trace_all_lines(c.spec(), c.time, c.nodal_options(), c.nodal.scan_resolution);
  ASSERT_FALSE(lines0.empty());
  c.nodal.seed = lines0[0].points[5].r0 + Vec3(0.01, -0.01, 0.0);
  c.output_dir = scratch("nodal").string();
  std::ostringstream err;
  const int code = cli::run("nodal", c, err);
  ASSERT_NE(code, cli::kFailure) << err.str();
  const auto summary = nlohmann::json::parse(std::ifstream(fs::path(c.output_dir) / "nodal.json"));
  EXPECT_EQ(summary["lines"].size(), 1u);
  const auto lines = read_lines(fs::path(c.output_dir) / "nodal_0.csv");
  EXPECT_GT(lines.size(), 10u);
}

TEST(Threads, EnvironmentFallback) {
  EXPECT_EQ(resolve_threads(3), 3u);
  setenv("VORTEXLINE_THREADS", "2", 1);
  EXPECT_EQ(resolve_threads(0), 2u);
  unsetenv("VORTEXLINE_THREADS");
  EXPECT_EQ(resolve_threads(0), 1u);
}
