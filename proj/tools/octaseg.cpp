// Copyright 2026 The OCTASeg Authors
// SPDX-License-Identifier: Apache-2.0
//
// Command-line front end. Subcommands:
//   train    fit the two-stage model, writing checkpoints and a run log
//   eval     score a checkpoint on a split, writing a metrics CSV
//   predict  write probability maps and overlays for a split
//   ablate   run an 8-row toggle study and write its table
//   synth    generate a synthetic dataset in the on-disk layout
//   params   print trainable-parameter counts for a configuration
//
// Exit codes: 0 success, 2 configuration or usage error, 3 non-finite loss.

#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "octaseg/dataio/dataset.hpp"
#include "octaseg/dataio/synth.hpp"
#include "octaseg/report/csv.hpp"
#include "octaseg/report/overlay.hpp"
#include "octaseg/train/ablate.hpp"
#include "octaseg/train/checkpoint.hpp"
#include "octaseg/train/trainer.hpp"
#include "octaseg/train/tta.hpp"

namespace {

using namespace octaseg;
using Scalar = float;

struct Options {
  std::string data, out, ckpt, config_file;
  std::string field = "3M";
  std::string split = "test";
  std::string study = "vessel";
  std::string dsconv = "plain";
  ModelConfig mc;
  TrainConfig tc;
  double aug_p = 0.2;
  bool no_tta = false;
  long synth_n = 16;
  long synth_size = 128;
};

// Key/value config file with [model] and [train] sections. Later command-line
// flags override anything set here.
void load_config_file(const std::string& path, Options& o) {
  std::ifstream in(path);
  require(in.good(), ErrorCode::ConfigError, "cannot open config file " + path);
  std::string line, section;
  long lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto where = [&] { return path + ":" + std::to_string(lineno); };
    size_t hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    auto trim = [](std::string s) {
      size_t a = s.find_first_not_of(" \t\r");
      size_t b = s.find_last_not_of(" \t\r");
      return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
    };
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      require(line.back() == ']', ErrorCode::ConfigError, where() + ": unclosed section");
      section = line.substr(1, line.size() - 2);
      require(section == "model" || section == "train", ErrorCode::ConfigError,
              where() + ": unknown section [" + section + "]");
      continue;
    }
    size_t eq = line.find('=');
    require(eq != std::string::npos, ErrorCode::ConfigError,
            where() + ": expected key = value");
    std::string key = trim(line.substr(0, eq));
    std::string val = trim(line.substr(eq + 1));
    require(!section.empty(), ErrorCode::ConfigError,
            where() + ": key outside [model]/[train] section");
    auto as_long = [&] { return std::stol(val); };
    auto as_double = [&] { return std::stod(val); };
    auto as_bool = [&] {
      if (val == "true" || val == "1") return true;
      if (val == "false" || val == "0") return false;
      fail(ErrorCode::ConfigError, where() + ": boolean must be true/false");
    };
    try {
      if (section == "model") {
        if (key == "base_channels") o.mc.base_channels = as_long();
        else if (key == "ssm_state_dim") o.mc.ssm_state_dim = as_long();
        else if (key == "dropout_rate") o.mc.dropout_rate = as_double();
        else if (key == "roi_size") o.mc.roi_size = as_long();
        else if (key == "hdfe") o.mc.hdfe = as_bool();
        else if (key == "vmaf") o.mc.vmaf = as_bool();
        else if (key == "cmbf") o.mc.cmbf = as_bool();
        else if (key == "cfeb") o.mc.cfeb = as_bool();
        else if (key == "roi") o.mc.roi = as_bool();
        else if (key == "rv_prior") o.mc.rv_prior = as_bool();
        else if (key == "stop_rv_gradient") o.mc.stop_rv_gradient = as_bool();
        else if (key == "dsconv_mode") o.dsconv = val;
        else if (key == "seed") o.mc.seed = static_cast<std::uint64_t>(as_long());
        else fail(ErrorCode::ConfigError, where() + ": unknown model key " + key);
      } else {
        if (key == "epochs") o.tc.epochs = as_long();
        else if (key == "batch_size") o.tc.batch_size = as_long();
        else if (key == "weight_decay") o.tc.weight_decay = as_double();
        else if (key == "lr_max") o.tc.lr_max = as_double();
        else if (key == "lr_init") o.tc.lr_init = as_double();
        else if (key == "warmup_epochs") o.tc.warmup_epochs = as_long();
        else if (key == "lr_min") o.tc.lr_min = as_double();
        else if (key == "eval_start_fraction") o.tc.eval_start_fraction = as_double();
        else if (key == "periodic_ckpt_every") o.tc.periodic_ckpt_every = as_long();
        else if (key == "seed") o.tc.seed = static_cast<std::uint64_t>(as_long());
        else if (key == "aug_p") o.aug_p = as_double();
        else fail(ErrorCode::ConfigError, where() + ": unknown train key " + key);
      }
    } catch (const std::invalid_argument&) {
      fail(ErrorCode::ConfigError, where() + ": bad value for " + key);
    } catch (const std::out_of_range&) {
      fail(ErrorCode::ConfigError, where() + ": value out of range for " + key);
    }
  }
}

void add_model_flags(CLI::App* cmd, Options& o) {
  cmd->add_option("--base-channels", o.mc.base_channels, "Encoder width at full scale");
  cmd->add_option("--state-dim", o.mc.ssm_state_dim, "State dimension of the scan");
  cmd->add_option("--dropout", o.mc.dropout_rate, "Dropout probability");
  cmd->add_option("--roi-size", o.mc.roi_size, "Center crop side for the zone stage");
  cmd->add_flag("!--no-hdfe", o.mc.hdfe, "Disable the directional extractor");
  cmd->add_flag("!--no-vmaf", o.mc.vmaf, "Disable the attention fusion block");
  cmd->add_flag("!--no-cmbf", o.mc.cmbf, "Disable the multi-branch stem");
  cmd->add_flag("!--no-cfeb", o.mc.cfeb, "Disable the zone enhancement block");
  cmd->add_flag("!--no-roi", o.mc.roi, "Feed the zone stage full frames");
  cmd->add_flag("!--no-rv-prior", o.mc.rv_prior, "Drop the vessel prior channel");
  cmd->add_flag("--stop-rv-gradient", o.mc.stop_rv_gradient,
                "Detach the vessel prior from the zone loss");
  cmd->add_option("--dsconv-mode", o.dsconv, "Directional conv mode: plain|offset");
  cmd->add_option("--seed", o.mc.seed, "Seed for weights, batching, and augmentation");
}

void add_train_flags(CLI::App* cmd, Options& o) {
  cmd->add_option("--epochs", o.tc.epochs, "Training epochs");
  cmd->add_option("--batch-size", o.tc.batch_size, "Samples per optimizer step");
  cmd->add_option("--weight-decay", o.tc.weight_decay, "Decoupled weight decay");
  cmd->add_option("--lr-max", o.tc.lr_max, "Peak learning rate");
  cmd->add_option("--lr-init", o.tc.lr_init, "Warmup starting learning rate");
  cmd->add_option("--warmup-epochs", o.tc.warmup_epochs, "Linear warmup length");
  cmd->add_option("--lr-min", o.tc.lr_min, "Cosine floor");
  cmd->add_option("--eval-start", o.tc.eval_start_fraction,
                  "Fraction of the run before validation begins");
  cmd->add_option("--ckpt-every", o.tc.periodic_ckpt_every,
                  "Periodic checkpoint cadence within the eval phase");
  cmd->add_option("--aug-p", o.aug_p, "Per-transform augmentation probability");
}

std::pair<long, long> dataset_hw(const std::vector<OCTASample<Scalar>>& set) {
  require(!set.empty(), ErrorCode::EmptySet, "dataset split is empty");
  return {set.front().image.dim(2), set.front().image.dim(3)};
}

// Builds a model from checkpoint metadata and loads its weights.
JointNet<Scalar> restore(const std::string& path, ParamRegistry<Scalar>& reg) {
  nlohmann::json meta = peek_checkpoint(path);
  require(meta.contains("model"), ErrorCode::ConfigError,
          "checkpoint lacks a model config: " + path);
  ModelConfig mc = model_config_from_json(meta.at("model"));
  Rng rng(mc.seed);
  JointNet<Scalar> net(reg, rng, mc);
  load_checkpoint(path, reg);
  return net;
}

int cmd_train(Options& o) {
  o.mc.dsconv_mode = dsconv_mode_from(o.dsconv);
  TrainConfig tc = validate_train_config(o.tc);
  auto train_set = load_dataset<Scalar>(o.data, o.field, "train", o.mc.roi_size);
  auto val_set = load_dataset<Scalar>(o.data, o.field, "val", o.mc.roi_size);
  ModelConfig mc = validate_config(o.mc, dataset_hw(train_set));
  ParamRegistry<Scalar> reg;
  Rng rng(mc.seed);
  JointNet<Scalar> net(reg, rng, mc);
  std::cout << "model parameters: " << reg.count_scalars() << "\n";
  AugmentationPolicy aug;
  aug.p = o.aug_p;
  Trainer<Scalar> trainer(net, reg, tc, LossWeights::for_field(o.field), aug);
  TrainResult res = trainer.run(train_set, val_set, o.out, &std::cout);

  std::ofstream log(std::filesystem::path(o.out) / "train_log.csv");
  log << "epoch,loss,lr\n";
  char buf[96];
  for (const auto& l : res.log) {
    std::snprintf(buf, sizeof buf, "%ld,%.6f,%.8f\n", l.epoch, l.loss, l.lr);
    log << buf;
  }
  for (const auto& r : res.records)
    if (r.kind != "periodic")
      std::cout << r.kind << ": epoch " << r.epoch << " rv_dice " << r.rv_dice
                << " faz_dice " << r.faz_dice << " -> " << r.path << "\n";
  return 0;
}

int cmd_eval(Options& o) {
  auto set = load_dataset<Scalar>(o.data, o.field, o.split);
  ParamRegistry<Scalar> reg;
  JointNet<Scalar> net = restore(o.ckpt, reg);
  GradMode::NoGradGuard off;
  std::vector<MetricsRow> rows;
  for (const auto& s : set) {
    Tensor<Scalar> rv_p, faz_p;
    auto forward = [&](const Tensor<Scalar>& img) {
      JointOut<Scalar> out = net(Var<Scalar>::leaf(img));
      return std::make_pair(out.rv.prob.value(), out.faz_full.value());
    };
    if (o.no_tta) {
      std::tie(rv_p, faz_p) = forward(s.image);
    } else {
      std::tie(rv_p, faz_p) = tta_predict_joint<Scalar>(forward, s.image);
    }
    Tensor<Scalar> rv_b = binarize(rv_p), faz_b = binarize(faz_p);
    rows.push_back({s.id, dice_metric(rv_b, s.rv), jaccard_metric(rv_b, s.rv),
                    dice_metric(faz_b, s.faz), jaccard_metric(faz_b, s.faz)});
  }
  std::filesystem::create_directories(o.out);
  std::string csv = (std::filesystem::path(o.out) / "metrics.csv").string();
  write_metrics_csv(csv, rows);
  std::vector<double> rv_d, faz_d;
  for (const auto& r : rows) {
    rv_d.push_back(r.rv_dice);
    faz_d.push_back(r.faz_dice);
  }
  auto [rv_mean, rv_std] = aggregate(rv_d);
  auto [faz_mean, faz_std] = aggregate(faz_d);
  char buf[160];
  std::snprintf(buf, sizeof buf,
                "%s %s: rv_dice %.4f+-%.4f faz_dice %.4f+-%.4f (%zu samples)\n",
                o.field.c_str(), o.split.c_str(), rv_mean, rv_std, faz_mean, faz_std,
                rows.size());
  std::cout << buf << "wrote " << csv << "\n";
  return 0;
}

int cmd_predict(Options& o) {
  auto set = load_dataset<Scalar>(o.data, o.field, o.split);
  ParamRegistry<Scalar> reg;
  JointNet<Scalar> net = restore(o.ckpt, reg);
  GradMode::NoGradGuard off;
  for (const auto& s : set) {
    auto forward = [&](const Tensor<Scalar>& img) {
      JointOut<Scalar> out = net(Var<Scalar>::leaf(img));
      return std::make_pair(out.rv.prob.value(), out.faz_full.value());
    };
    auto [rv_p, faz_p] = o.no_tta ? forward(s.image)
                                  : tta_predict_joint<Scalar>(forward, s.image);
    write_prediction_files(o.out, s, rv_p, faz_p);
    std::cout << s.id << "\n";
  }
  return 0;
}

int cmd_ablate(Options& o) {
  o.mc.dsconv_mode = dsconv_mode_from(o.dsconv);
  TrainConfig tc = validate_train_config(o.tc);
  AblationStudy study;
  if (o.study == "vessel") study = AblationStudy::Vessel;
  else if (o.study == "zone") study = AblationStudy::Zone;
  else fail(ErrorCode::ConfigError, "study must be vessel or zone, got " + o.study);
  auto train_set = load_dataset<Scalar>(o.data, o.field, "train", o.mc.roi_size);
  auto val_set = load_dataset<Scalar>(o.data, o.field, "val", o.mc.roi_size);
  AugmentationPolicy aug;
  aug.p = o.aug_p;
  auto rows = run_ablation(study, o.mc, tc, LossWeights::for_field(o.field), train_set,
                           val_set, aug, &std::cout);
  std::filesystem::create_directories(o.out);
  std::string csv =
      (std::filesystem::path(o.out) / ("ablation_" + o.study + ".csv")).string();
  write_ablation_csv(csv, study, rows);
  std::cout << "wrote " << csv << "\n";
  return 0;
}

int cmd_synth(Options& o) {
  write_synth_dataset<Scalar>(o.out, o.field, o.synth_n, o.synth_size, o.synth_size,
                              o.mc.seed);
  std::cout << "wrote " << o.synth_n << " samples under " << o.out << "/" << o.field
            << "\n";
  return 0;
}

int cmd_params(Options& o) {
  o.mc.dsconv_mode = dsconv_mode_from(o.dsconv);
  ParamRegistry<Scalar> reg;
  Rng rng(o.mc.seed);
  JointNet<Scalar> net(reg, rng, o.mc);
  for (const auto& [name, count] : param_breakdown(reg))
    std::cout << name << " " << count << "\n";
  std::cout << "total " << reg.count_scalars() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  Options o;
  CLI::App app{"Two-stage vessel and foveal-zone segmentation for OCTA images"};
  app.require_subcommand(1);

  auto add_common = [&](CLI::App* cmd, bool wants_data) {
    cmd->add_option("--config", o.config_file, "Key/value config file")
        ->check(CLI::ExistingFile);
    cmd->add_option("--field", o.field, "Field of view: 3M|6M")
        ->check(CLI::IsMember({"3M", "6M"}));
    if (wants_data)
      cmd->add_option("--data", o.data, "Dataset root directory")->required();
  };

  CLI::App* train = app.add_subcommand("train", "Fit the model");
  add_common(train, true);
  train->add_option("--out", o.out, "Checkpoint and log directory")->required();
  add_model_flags(train, o);
  add_train_flags(train, o);

  CLI::App* eval = app.add_subcommand("eval", "Score a checkpoint");
  add_common(eval, true);
  eval->add_option("--ckpt", o.ckpt, "Checkpoint file")->required();
  eval->add_option("--out", o.out, "Directory for metrics.csv")->required();
  eval->add_option("--split", o.split, "Dataset split");
  eval->add_flag("--no-tta", o.no_tta, "Skip flip-averaged inference");

  CLI::App* predict = app.add_subcommand("predict", "Write predictions and overlays");
  add_common(predict, true);
  predict->add_option("--ckpt", o.ckpt, "Checkpoint file")->required();
  predict->add_option("--out", o.out, "Output directory")->required();
  predict->add_option("--split", o.split, "Dataset split");
  predict->add_flag("--no-tta", o.no_tta, "Skip flip-averaged inference");

  CLI::App* ablate = app.add_subcommand("ablate", "Run a toggle study");
  add_common(ablate, true);
  ablate->add_option("--study", o.study, "vessel|zone")->required();
  ablate->add_option("--out", o.out, "Directory for the table")->required();
  add_model_flags(ablate, o);
  add_train_flags(ablate, o);

  CLI::App* synth = app.add_subcommand("synth", "Generate a synthetic dataset");
  synth->add_option("--out", o.out, "Dataset root to create")->required();
  synth->add_option("--field", o.field, "Subdirectory name: 3M|6M")
      ->check(CLI::IsMember({"3M", "6M"}));
  synth->add_option("--n", o.synth_n, "Sample count");
  synth->add_option("--size", o.synth_size, "Square image side in pixels");
  synth->add_option("--seed", o.mc.seed, "Generator seed");

  CLI::App* params = app.add_subcommand("params", "Print parameter counts");
  params->add_option("--config", o.config_file, "Key/value config file")
      ->check(CLI::ExistingFile);
  add_model_flags(params, o);

  // The config file fills defaults, so parse twice: once to find --config,
  // then again so explicit flags win over file values.
  try {
    app.parse(argc, argv);
    if (!o.config_file.empty()) {
      load_config_file(o.config_file, o);
      app.clear();
      app.parse(argc, argv);
    }
    o.tc.seed = o.mc.seed;
    if (train->parsed()) return cmd_train(o);
    if (eval->parsed()) return cmd_eval(o);
    if (predict->parsed()) return cmd_predict(o);
    if (ablate->parsed()) return cmd_ablate(o);
    if (synth->parsed()) return cmd_synth(o);
    if (params->parsed()) return cmd_params(o);
    return 2;
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  } catch (const octaseg::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.code() == octaseg::ErrorCode::NonFiniteLoss ? 3 : 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
