#include <CLI11.hpp>
#include <exception>
#include <iostream>

#include "atomflow/errors.hpp"
#include "atomflow/version.hpp"
#include "commands.hpp"

namespace {

constexpr int kExitValidation = 1;
constexpr int kExitRuntime = 2;

}  // namespace

int main(int argc, char** argv) {
  using namespace atomflow::cli;
  CLI::App app{"atomflow: flow-matching generation of molecules and crystals"};
  app.set_version_flag("--version", std::string(atomflow::kVersion));
  app.require_subcommand(1);

  TrainArgs train;
  auto* train_cmd = app.add_subcommand("train", "pretrain a denoiser from a JSON run config");
  train_cmd->add_option("--config", train.config, "run config (JSON)")->required()->check(CLI::ExistingFile);
  train_cmd->add_option("--out", train.out, "output directory for best/ and last/ checkpoints")->required();
  train_cmd->add_option("--steps", train.steps, "override train.steps");
  train_cmd->add_option("--seed", train.seed, "override train.seed");

  SampleArgs sample;
  auto* sample_cmd = app.add_subcommand("sample", "generate systems from a checkpoint");
  sample_cmd->add_option("--ckpt", sample.ckpt, "checkpoint directory")->required()->check(CLI::ExistingDirectory);
  sample_cmd->add_option("--out", sample.out, "output dataset (JSON lines)")->required();
  sample_cmd->add_option("--domain", sample.domain, "molecule or material")
      ->check(CLI::IsMember({"molecule", "material"}));
  sample_cmd->add_option("--n", sample.n, "number of samples")->check(CLI::PositiveNumber);
  sample_cmd->add_option("--steps", sample.steps, "integration steps (default: config)")->check(CLI::PositiveNumber);
  sample_cmd->add_option("--num-atoms", sample.num_atoms, "fixed atom count (default: training histogram)")
      ->check(CLI::PositiveNumber);
  sample_cmd->add_option("--seed", sample.seed, "sampling seed");
  sample_cmd->add_option("--report", sample.report, "write a metrics report (JSON)");
  sample_cmd->add_option("--reference", sample.reference, "reference dataset for matching metrics")
      ->check(CLI::ExistingFile);

  FinetuneArgs ft;
  auto* ft_cmd = app.add_subcommand("finetune", "train auxiliary prediction heads on a frozen trunk");
  ft_cmd->add_option("--ckpt", ft.ckpt, "pretrained checkpoint directory")->required()->check(CLI::ExistingDirectory);
  ft_cmd->add_option("--data", ft.data, "labeled training dataset")->required()->check(CLI::ExistingFile);
  ft_cmd->add_option("--val", ft.val, "labeled validation dataset")->check(CLI::ExistingFile);
  ft_cmd->add_option("--out", ft.out, "output directory for best/ and last/ checkpoints")->required();
  ft_cmd->add_option("--task", ft.task, "properties or energy_forces")
      ->check(CLI::IsMember({"properties", "energy_forces"}));
  ft_cmd->add_option("--tap-layer", ft.tap_layer, "trunk layer feeding the auxiliary stacks");
  ft_cmd->add_option("--steps", ft.steps, "optimizer steps")->check(CLI::NonNegativeNumber);
  ft_cmd->add_option("--batch", ft.batch, "batch size")->check(CLI::PositiveNumber);
  ft_cmd->add_option("--eval-every", ft.eval_every, "validation interval")->check(CLI::PositiveNumber);
  ft_cmd->add_option("--lr", ft.lr, "learning rate")->check(CLI::PositiveNumber);
  ft_cmd->add_option("--seed", ft.seed, "seed");

  EvalArgs eval;
  auto* eval_cmd = app.add_subcommand("eval", "score a dataset of generated systems");
  eval_cmd->add_option("--in", eval.in, "dataset to score")->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--report", eval.report, "report path (JSON)")->required();
  eval_cmd->add_option("--reference", eval.reference, "reference dataset")->check(CLI::ExistingFile);

  InspectArgs inspect;
  auto* inspect_cmd = app.add_subcommand("inspect", "print configuration, parameter counts and tensors");
  auto* cfg_opt = inspect_cmd->add_option("--config", inspect.config, "run config (JSON)")->check(CLI::ExistingFile);
  auto* ckpt_opt =
      inspect_cmd->add_option("--ckpt", inspect.ckpt, "checkpoint directory")->check(CLI::ExistingDirectory);
  cfg_opt->excludes(ckpt_opt);
  inspect_cmd->add_flag("--tensors", inspect.tensors, "list every tensor");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kExitValidation;
  }

  try {
    if (*train_cmd) return run_train(train);
    if (*sample_cmd) return run_sample(sample);
    if (*ft_cmd) return run_finetune(ft);
    if (*eval_cmd) return run_eval(eval);
    if (*inspect_cmd) {
      if (inspect.config.empty() && inspect.ckpt.empty()) {
        std::cerr << "usage error: inspect needs --config or --ckpt\n";
        return kExitValidation;
      }
      return run_inspect(inspect);
    }
  } catch (const atomflow::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.is_validation_error() ? kExitValidation : kExitRuntime;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitValidation;
}
