#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "hk/cli.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Build and verify pseudo-hyper-Kaehler structures from holomorphic symplectic families"};
  app.require_subcommand(1);
  app.set_version_flag("--version", hk::kToolVersion);

  std::string path;
  hk::cli::VerifyOptions vopt;
  double tol = 0.0;
  auto* verify = app.add_subcommand("verify", "Run every structure check on a chart");
  verify->add_option("file", path, "Structure file")->required();
  auto* tol_opt = verify->add_option("--tol", tol, "Pointwise identity tolerance");
  verify->add_option("--samples", vopt.samples, "Random zeta samples per grid point");
  verify->add_option("--seed", vopt.seed, "Seed for sampling");
  verify->add_option("--out", vopt.out, "Report path (default: standard output)");

  std::string rout;
  auto* reconstruct = app.add_subcommand("reconstruct", "Rebuild the metric on the chart grid");
  reconstruct->add_option("file", path, "Structure file")->required();
  reconstruct->add_option("--out", rout, "Output path (default: standard output)");

  hk::cli::SweepOptions sopt;
  auto* sweep = app.add_subcommand("sweep", "Sample twistor-sphere invariants at one chart point");
  sweep->add_option("file", path, "Structure file")->required();
  sweep->add_option("--zeta-grid", sopt.zeta_grid, "Sphere grid resolution N (N*N samples)");
  sweep->add_option("--point", sopt.point, "Chart point \"x0,x1,...\" (default: box centre)");
  sweep->add_option("--out", sopt.out, "CSV path (default: standard output)");

  std::string model;
  std::vector<std::string> params;
  std::string zout;
  auto* zoo = app.add_subcommand("zoo", "Write a built-in model as a structure file");
  zoo->add_option("name", model, "Model name")->required();
  zoo->add_option("--param", params, "Model parameter key=value (repeatable)");
  zoo->add_option("--out", zout, "Output path (default: standard output)");

  hk::cli::SectionsOptions xopt;
  auto* sections = app.add_subcommand("sections", "Check real twistor sections and the HKLR metric");
  sections->add_option("file", path, "Structure file")->required();
  sections->add_option("--count", xopt.count, "Number of random vector pairs");
  sections->add_option("--seed", xopt.seed, "Seed for sampling");
  sections->add_option("--point", xopt.point, "Chart point \"x0,x1,...\" (default: box centre)");
  sections->add_option("--out", xopt.out, "Report path (default: standard output)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  if (*verify) {
    if (*tol_opt) vopt.tol = tol;
    return hk::cli::cmd_verify(path, vopt);
  }
  if (*reconstruct) return hk::cli::cmd_reconstruct(path, rout);
  if (*sweep) return hk::cli::cmd_sweep(path, sopt);
  if (*zoo) return hk::cli::cmd_zoo(model, params, zout);
  if (*sections) return hk::cli::cmd_sections(path, xopt);
  return 2;
}
