// command-line front end: synthesize data, train the small classifiers,
// craft centered adversarial examples, and score them against defenses.

#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "CLI11.hpp"

#include "cia/dataset.hpp"
#include "cia/experiment.hpp"
#include "cia/network.hpp"

namespace fs = std::filesystem;

namespace {

void ensure_parent_dir(const std::string& path) {
  const fs::path parent = fs::path(path).parent_path();
  if (!parent.empty()) fs::create_directories(parent);
}

int cmd_dataset_gen(uint64_t seed, int n_train, int n_test, const std::string& out) {
  cia::Dataset ds = cia::generate_dataset(seed, n_train, n_test);
  ensure_parent_dir(out);
  cia::save_dataset(ds, out);
  std::printf("wrote %s (%d train / %d test images, seed %llu)\n", out.c_str(), n_train, n_test,
              static_cast<unsigned long long>(seed));
  return 0;
}

int cmd_train(const std::string& dataset, int variant, uint64_t seed, const std::string& out,
              int epochs, int batch, float lr) {
  cia::Dataset ds = cia::load_dataset(dataset);
  cia::Network net = cia::make_reference_network(variant, seed);
  cia::TrainOptions opts;
  opts.epochs = epochs;
  opts.batch = batch;
  opts.lr = lr;
  net = cia::train(net, ds.train.images, ds.train.labels, opts, seed);
  ensure_parent_dir(out);
  cia::save_network(net, out);
  const double train_acc = cia::accuracy(net, ds.train.images, ds.train.labels);
  const double test_acc = cia::accuracy(net, ds.test.images, ds.test.labels);
  std::printf("wrote %s  (variant %d, seed %llu, train acc %.4f, test acc %.4f)\n", out.c_str(),
              variant, static_cast<unsigned long long>(seed), train_acc, test_acc);
  return 0;
}

int cmd_attack(const std::string& config_path) {
  cia::ExperimentConfig config = cia::load_experiment_config(config_path);
  if (config.out_dir.empty()) {
    std::fprintf(stderr, "attack: the config must set out_dir\n");
    return 1;
  }
  cia::Dataset ds = cia::load_dataset(config.dataset_path);
  const auto models = cia::load_models(config);
  cia::CampaignResult campaign = cia::run_attack_campaign(config, ds, models);
  cia::save_campaign(config, campaign);
  std::printf("crafted %zu adversarial images into %s\n", campaign.adversarials.size(),
              config.out_dir.c_str());
  return 0;
}

int cmd_eval(const std::string& config_path) {
  cia::ExperimentConfig config = cia::load_experiment_config(config_path);
  if (config.out_dir.empty()) {
    std::fprintf(stderr, "eval: the config must set out_dir\n");
    return 1;
  }
  const auto models = cia::load_models(config);
  cia::CampaignResult campaign = cia::load_campaign(config);
  const auto rows = cia::evaluate_campaign(config, models, campaign);
  const std::string csv = cia::render_csv(rows);
  const fs::path report = fs::path(config.out_dir) / "report.csv";
  std::ofstream f(report, std::ios::binary);
  if (!f) {
    std::fprintf(stderr, "eval: cannot write %s\n", report.string().c_str());
    return 1;
  }
  f << csv;
  std::printf("%s", cia::render_table(csv).c_str());
  std::printf("wrote %s\n", report.string().c_str());
  return 0;
}

int cmd_report(const std::string& in, const std::string& out) {
  std::ifstream f(in, std::ios::binary);
  if (!f) {
    std::fprintf(stderr, "report: cannot open %s\n", in.c_str());
    return 1;
  }
  std::stringstream ss;
  ss << f.rdbuf();
  const std::string table = cia::render_table(ss.str());
  if (out.empty() || out == "-") {
    std::printf("%s", table.c_str());
  } else {
    ensure_parent_dir(out);
    std::ofstream o(out, std::ios::binary);
    if (!o) {
      std::fprintf(stderr, "report: cannot write %s\n", out.c_str());
      return 1;
    }
    o << table;
    std::printf("wrote %s\n", out.c_str());
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"centered initial attack toolkit"};
  app.require_subcommand(1);

  // dataset gen
  auto* dataset = app.add_subcommand("dataset", "dataset utilities");
  dataset->require_subcommand(1);
  auto* gen = dataset->add_subcommand("gen", "synthesize a labeled image corpus");
  uint64_t gen_seed = 1;
  int n_train = 8000, n_test = 1000;
  std::string gen_out;
  gen->add_option("--seed", gen_seed, "generator seed");
  gen->add_option("--n-train", n_train, "training images");
  gen->add_option("--n-test", n_test, "test images");
  gen->add_option("--out", gen_out, "output .ciad path")->required();

  // train
  auto* train = app.add_subcommand("train", "train one classifier variant");
  std::string train_dataset, train_out;
  int variant = 0, epochs = 4, batch = 32;
  float lr = 1e-3f;
  uint64_t train_seed = 1;
  train->add_option("--dataset", train_dataset, "input .ciad path")->required();
  train->add_option("--arch-variant", variant, "architecture variant 0..4");
  train->add_option("--seed", train_seed, "init/shuffle seed");
  train->add_option("--epochs", epochs, "training epochs");
  train->add_option("--batch", batch, "minibatch size");
  train->add_option("--lr", lr, "Adam learning rate");
  train->add_option("--out", train_out, "output .cian model path")->required();

  // attack / eval
  auto* attack = app.add_subcommand("attack", "craft adversarial images per an experiment config");
  std::string attack_config;
  attack->add_option("--config", attack_config, "experiment config JSON")->required();

  auto* eval = app.add_subcommand("eval", "score saved adversarial images against defenses");
  std::string eval_config;
  eval->add_option("--config", eval_config, "experiment config JSON")->required();

  // report
  auto* report = app.add_subcommand("report", "render a report CSV as a text table");
  std::string report_in, report_out;
  report->add_option("--in", report_in, "report.csv path")->required();
  report->add_option("--out", report_out, "output text path ('-' for stdout)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) return cmd_dataset_gen(gen_seed, n_train, n_test, gen_out);
    if (train->parsed()) return cmd_train(train_dataset, variant, train_seed, train_out, epochs, batch, lr);
    if (attack->parsed()) return cmd_attack(attack_config);
    if (eval->parsed()) return cmd_eval(eval_config);
    if (report->parsed()) return cmd_report(report_in, report_out);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
