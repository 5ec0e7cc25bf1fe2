#include <CLI11.hpp>
#include <iostream>
#include <optional>

#include "btn/commands.hpp"

namespace {

struct Overrides {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out, data, checkpoint, resume, model, scalar_activation;
  bool bilinear = true, so2 = true, augment = false;
  CLI::Option* bilinear_opt = nullptr;
  CLI::Option* so2_opt = nullptr;
  CLI::Option* augment_opt = nullptr;
  std::optional<std::size_t> epochs, batch_size, patience, n_train, n_val, n_test, n_seeds;
  std::optional<std::size_t> rep_width, latent_dim, hidden_width;
  std::optional<double> lr, clip_norm;
  bool aug_row = false;
};

void add_common(CLI::App& app, Overrides& o) {
  app.add_option("--config", o.config, "INI configuration file")->check(CLI::ExistingFile);
  app.add_option("--seed", o.seed, "Seed for generation, initialisation and shuffling");
  app.add_option("--out", o.out, "Output directory");
  app.add_option("--data", o.data, "Dataset directory (train.bin, val.bin, test.bin)");
  app.add_option("--model", o.model, "baseline, vector or tensor");
  o.bilinear_opt = app.add_flag("--bilinear,!--no-bilinear", o.bilinear, "Bilinear layers on/off");
  o.so2_opt = app.add_flag("--so2,!--no-so2", o.so2, "SO(2) axial layers on/off");
  app.add_option("--scalar-activation", o.scalar_activation, "relu or log_relu (representation layers)");
  app.add_option("--rep-width", o.rep_width, "Hidden features per representation (2F)");
  app.add_option("--latent-dim", o.latent_dim, "Latent width L");
  app.add_option("--hidden-width", o.hidden_width, "Width of dense layers");
  app.add_option("--epochs", o.epochs, "Training epochs");
  app.add_option("--batch-size", o.batch_size, "Minibatch size");
  app.add_option("--lr", o.lr, "Adam learning rate");
  app.add_option("--patience", o.patience, "Early-stopping patience in epochs");
  app.add_option("--clip-norm", o.clip_norm, "Gradient L2 norm cap, 0 disables");
  o.augment_opt = app.add_flag("--augment,!--no-augment", o.augment, "Random beam-axis rotation per batch");
}

btn::RunConfig resolve(const Overrides& o) {
  btn::RunConfig c = o.config.empty() ? btn::RunConfig{} : btn::load_run_config(o.config);
  if (o.seed) c.seed = o.seed;
  if (o.out) c.out_dir = *o.out;
  if (o.data) c.data_dir = *o.data;
  if (o.checkpoint) c.checkpoint = *o.checkpoint;
  if (o.resume) c.resume = *o.resume;
  if (o.model) c.model.model_class = btn::parse_model_class(*o.model);
  if (o.bilinear_opt && o.bilinear_opt->count()) c.model.bilinear = o.bilinear;
  if (o.so2_opt && o.so2_opt->count()) c.model.so2 = o.so2;
  if (o.augment_opt && o.augment_opt->count()) c.train.augment = o.augment;
  if (o.scalar_activation) c.model.scalar_activation = btn::parse_scalar_activation(*o.scalar_activation);
  if (o.rep_width) c.model.rep_width = *o.rep_width;
  if (o.latent_dim) c.model.latent_dim = *o.latent_dim;
  if (o.hidden_width) c.model.hidden_width = *o.hidden_width;
  if (o.epochs) c.train.epochs = *o.epochs;
  if (o.batch_size) c.train.batch_size = *o.batch_size;
  if (o.lr) c.train.lr = *o.lr;
  if (o.patience) c.train.patience = *o.patience;
  if (o.clip_norm) c.train.clip_norm = *o.clip_norm;
  if (o.n_train) c.n_train = *o.n_train;
  if (o.n_val) c.n_val = *o.n_val;
  if (o.n_test) c.n_test = *o.n_test;
  if (o.n_seeds) c.n_seeds = *o.n_seeds;
  if (o.aug_row) c.ablate_aug_row = true;
  c.model.validate();
  c.train.validate();
  return c;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bilinear tensor networks for jet tagging"};
  app.require_subcommand(1);
  // One set per subcommand: the flag handles must belong to the parsed one.
  Overrides og, ot, oe, oa;

  auto* gen = app.add_subcommand("gen", "Generate train/val/test datasets");
  add_common(*gen, og);
  gen->add_option("--n-train", og.n_train, "Training events");
  gen->add_option("--n-val", og.n_val, "Validation events");
  gen->add_option("--n-test", og.n_test, "Test events");

  auto* train = app.add_subcommand("train", "Train a model");
  add_common(*train, ot);
  train->add_option("--resume", ot.resume, "Continue from a checkpoint (e.g. <out>/last.ckpt)");

  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on the test set");
  add_common(*eval, oe);
  eval->add_option("--checkpoint", oe.checkpoint, "Checkpoint to evaluate (default <out>/model.ckpt)");

  auto* check = app.add_subcommand("check", "Run the equivariance and gradient checks");
  btn::CheckOptions check_opt;
  check->add_option("--seed", check_opt.seed, "Seed");
  check->add_flag("--skip-model", [&](std::int64_t) { check_opt.model_checks = false; }, "Layer checks only");
  check->add_flag("--inject-transpose-bug", check_opt.transpose_bug,
                  "Negative control: rotate inputs with the transposed matrix");

  auto* ablate = app.add_subcommand("ablate", "Train the model ladder over several seeds");
  add_common(*ablate, oa);
  ablate->add_option("--n-seeds", oa.n_seeds, "Runs per model");
  ablate->add_flag("--aug-row", oa.aug_row, "Include the rotation-augmented baseline");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen) {
      btn::cmd_gen(resolve(og), std::cout);
    } else if (*train) {
      btn::cmd_train(resolve(ot), std::cout);
    } else if (*eval) {
      const bool explicit_model = oe.model || oe.bilinear_opt->count() || oe.so2_opt->count();
      btn::cmd_eval(resolve(oe), std::cout, explicit_model);
    } else if (*check) {
      return btn::cmd_check(check_opt, std::cout) ? 0 : 1;
    } else if (*ablate) {
      btn::cmd_ablate(resolve(oa), std::cout);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
