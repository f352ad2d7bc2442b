#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "spinglass/app/config.hpp"
#include "spinglass/app/runner.hpp"
#include "spinglass/error.hpp"

int main(int argc, char** argv) {
  namespace app = spinglass::app;

  CLI::App cli{"Constrained spherical spin glass free energy toolkit"};
  cli.set_version_flag("--version", app::kVersion);
  cli.require_subcommand(1);

  std::string config_file;
  std::optional<std::uint64_t> seed;
  std::optional<unsigned> workers;
  std::string out_file;
  std::string format;

  cli.add_option("--config", config_file, "JSON run configuration")->required()->check(CLI::ExistingFile);
  cli.add_option("--seed", seed, "RNG seed (overrides the config)");
  cli.add_option("--workers", workers, "worker threads")->check(CLI::PositiveNumber);
  cli.add_option("--out", out_file, "output file (default: standard output)");
  cli.add_option("--format", format, "report format")->check(CLI::IsMember({"json", "csv"}));

  for (const auto& name : app::task_names()) {
    auto* sub = cli.add_subcommand(name);
    sub->fallthrough();
  }

  try {
    cli.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = cli.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    app::RunConfig config = app::load_config_file(config_file);
    config.task = cli.get_subcommands().front()->get_name();
    if (seed) config.seed = *seed;
    if (workers) config.workers = *workers;
    if (!out_file.empty()) config.output = out_file;
    if (!format.empty()) config.format = format;
    const auto result = app::run(config);
    app::emit(config, app::render(config, result));
    return result.exit_code;
  } catch (const spinglass::Error& e) {
    std::cerr << app::render_error(e);
    return app::kError;
  } catch (const std::exception& e) {
    std::cerr << app::render_error(spinglass::Error(spinglass::ErrorCode::InvalidArgument, e.what()));
    return app::kError;
  }
}
