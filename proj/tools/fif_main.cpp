#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "fif/errors.hpp"
#include "fif/experiments.hpp"

namespace {

constexpr int kConfigExit = 2;
constexpr int kNumericalExit = 3;

void add_common(CLI::App* cmd, fif::CliOptions& o, std::string& config, bool need_config) {
  auto* c = cmd->add_option("--config", config, "experiment config (INI)");
  if (need_config) c->check(CLI::ExistingFile);
  cmd->add_option("--seed", o.seed, "override the experiment seed");
  cmd->add_option("--out", o.out, "output directory")->required();
  cmd->add_flag("--force", o.force, "overwrite artifacts in an existing output directory");
  cmd->add_option("--jobs", o.jobs, "parallel runs (capped by FIF_NUM_THREADS)")
      ->check(CLI::PositiveNumber);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Encoder/decoder density models trained with a free-form log-determinant surrogate"};
  app.require_subcommand(1);

  fif::CliOptions train_opts;
  std::string train_config;
  auto* train = app.add_subcommand("train", "train one model and write run artifacts");
  add_common(train, train_opts, train_config, false);
  train->add_flag("--resume", train_opts.resume, "continue the run in --out from its checkpoint");

  fif::CliOptions var_opts;
  std::string unused_config;
  fif::VarianceStudyOptions vs;
  std::vector<std::string> kinds;
  auto* var = app.add_subcommand("variance-study", "trace-estimator variance and gradient distance");
  add_common(var, var_opts, unused_config, false);
  var->add_option("--d", vs.d, "latent dimension")->check(CLI::PositiveNumber);
  var->add_option("--D", vs.D, "data dimension")->check(CLI::PositiveNumber);
  var->add_option("--kinds", kinds, "probe kinds")->delimiter(',');
  var->add_option("--ks", vs.ks, "probe counts")->delimiter(',');
  var->add_option("--samples", vs.samples, "trace estimates per kind and K")
      ->check(CLI::PositiveNumber);
  var->add_option("--hidden", vs.hidden, "hidden widths of the random MLP")->delimiter(',');
  var->add_option("--grad-seeds", vs.grad_seeds, "probe seeds averaged per distance point")
      ->check(CLI::PositiveNumber);

  fif::CliOptions phase_opts;
  std::string phase_config;
  auto* phase = app.add_subcommand("phase-transition", "sweep beta and compare regimes");
  add_common(phase, phase_opts, phase_config, true);
  phase->get_option("--config")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (train->parsed()) {
      if (!train_opts.resume && train_config.empty()) {
        throw fif::ConfigError("train: --config is required unless --resume is given");
      }
      return fif::cmd_train(train_config, train_opts);
    }
    if (var->parsed()) {
      if (var_opts.seed) vs.seed = *var_opts.seed;
      if (!kinds.empty()) {
        vs.kinds.clear();
        for (const auto& k : kinds) vs.kinds.push_back(fif::probe_kind_from_string(k));
      }
      return fif::cmd_variance_study(vs, var_opts);
    }
    return fif::cmd_phase_transition(phase_config, phase_opts);
  } catch (const fif::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfigExit;
  } catch (const fif::ParseError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfigExit;
  } catch (const fif::NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kNumericalExit;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
