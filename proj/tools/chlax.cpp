#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "chlax/chlax.hpp"

namespace {

chlax::RunConfig load_config(const std::string& path, const std::string& mode) {
  chlax::json j;
  if (!path.empty()) {
    std::ifstream in(path);
    if (!in) throw chlax::ValidationError("cannot open config: " + path);
    in >> j;
  } else {
    j = chlax::json::object();
  }
  j["mode"] = mode;
  return chlax::parse_config(j);
}

int dispatch(const std::string& mode, const std::string& config_path,
             const std::string& out_override, bool quiet) {
  chlax::RunConfig cfg;
  std::filesystem::path out_dir = out_override.empty() ? "out" : out_override;
  try {
    cfg = load_config(config_path, mode);
    out_dir = out_override.empty() ? std::filesystem::path(cfg.output_dir)
                                   : std::filesystem::path(out_override);
    return chlax::run_mode(cfg, out_dir, quiet);
  } catch (const chlax::ValidationError& e) {
    chlax::write_error_record(out_dir, "validation", e.what());
    return 2;
  } catch (const chlax::Error& e) {
    chlax::write_error_record(out_dir, "numerical", e.what());
    return 1;
  } catch (const std::exception& e) {
    chlax::write_error_record(out_dir, "internal", e.what());
    return 1;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "chlax: Camassa-Holm solver by triangular/orthogonal factorization of "
      "operator exponentials, with particle, time-stepping and spectral "
      "oracles"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir;
  bool quiet = false;
  app.add_option("--config", config_path, "JSON configuration file");
  app.add_option("--out", out_dir, "output directory (overrides config)");
  app.add_flag("--quiet", quiet, "suppress per-gate output");

  const char* modes[] = {"solve", "compare", "peakon", "spectrum", "selfcheck"};
  const char* descriptions[] = {
      "run the CH pipeline and write per-time CSVs plus a manifest",
      "cross-validate the factorization flow against the oracles",
      "finite-peakon system: ODE flow vs matrix flow",
      "Sturm-Liouville vs Mercer spectral mapping",
      "double L and n, report convergence ratios"};
  for (int i = 0; i < 5; ++i)
    app.add_subcommand(modes[i], descriptions[i])->fallthrough();

  CLI11_PARSE(app, argc, argv);
  const std::string mode = app.get_subcommands().front()->get_name();
  return dispatch(mode, config_path, out_dir, quiet);
}
