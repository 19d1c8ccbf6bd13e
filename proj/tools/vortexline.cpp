// Command-line front end: vortexline <command> [--config PATH] [--out DIR]
// [--t TIME] [--seed X,Y,Z] [--threads N]
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "vortexline/cli.hpp"

namespace {

vortexline::Vec3 parse_triple(const std::string& s) {
  std::stringstream ss(s);
  std::string item;
  std::vector<double> v;
  while (std::getline(ss, item, ',')) v.push_back(std::stod(item));
  if (v.size() != 3) throw vortexline::Error(vortexline::ErrorCode::ConfigError, "--seed expects X,Y,Z");
  return {v[0], v[1], v[2]};
}

}  // namespace

int main(int argc, char** argv) {
  using namespace vortexline;
  CLI::App app{"Bohmian trajectories, nodal lines and X-point structure of oscillator superpositions"};
  app.set_version_flag("--version", std::string(VORTEXLINE_VERSION));
  app.require_subcommand(1);

  std::string config_path, out_dir, seed;
  double t = 0.0;
  int threads = 0;
  app.add_option("--config", config_path, "JSON configuration file")->check(CLI::ExistingFile);
  app.add_option("--out", out_dir, "output directory (overrides output.dir)");
  auto* t_opt = app.add_option("--t", t, "time (overrides time)");
  auto* seed_opt = app.add_option("--seed", seed,
                                  "X,Y,Z: line seed for line commands, initial point for trajectory/chaos");
  auto* threads_opt = app.add_option("--threads", threads, "worker threads (else VORTEXLINE_THREADS)")
                          ->check(CLI::PositiveNumber);
  for (const auto& [name, fn] : cli::commands()) app.add_subcommand(name, "run " + name)->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : cli::kFailure;
  }
  const std::string command = app.get_subcommands().front()->get_name();

  io::RunConfig config;
  try {
    config = config_path.empty() ? io::parse_config(io::json::object()) : io::load_config(config_path);
    if (!out_dir.empty()) config.output_dir = out_dir;
    if (*t_opt) config.time = t;
    if (*threads_opt) config.threads = threads;
    if (*seed_opt) {
      const Vec3 s = parse_triple(seed);
      if (command == "trajectory" || command == "chaos") config.trajectory.x0 = s;
      else config.nodal.seed = s;
    }
  } catch (const std::exception& e) {
    std::cerr << "config: " << e.what() << "\n";
    return cli::kFailure;
  }
  return cli::run(command, config, std::cerr);
}
