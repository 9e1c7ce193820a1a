// ldg: change-detection toolkit CLI.
//
// Subcommands: synth (generate a synthetic dataset), train, eval (optionally
// under a perturbation), infer (single pair -> change-map PNG), profile
// (params / FLOPs / peak memory, optionally swept over input sizes).
//
// Model configuration is a flat key=value text file; every key can also be
// overridden on the command line. LDG_THREADS caps intra-op parallelism.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>

#include "CLI11.hpp"
#include "ldg/train.hpp"

namespace fs = std::filesystem;

namespace {

std::map<std::string, std::string> read_config_file(const std::string& path) {
  std::map<std::string, std::string> m;
  std::ifstream f(path);
  if (!f) throw ldg::ContractError("cannot open config file: " + path);
  std::string line;
  int lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    auto first = line.find_first_not_of(" \t");
    if (first == std::string::npos || line[first] == '#') continue;
    auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ldg::ContractError(path + ":" + std::to_string(lineno) +
                               ": expected key=value, got \"" + line + "\"");
    auto strip = [](std::string s) {
      auto b = s.find_first_not_of(" \t");
      auto e = s.find_last_not_of(" \t");
      return b == std::string::npos ? std::string{} : s.substr(b, e - b + 1);
    };
    m[strip(line.substr(0, eq))] = strip(line.substr(eq + 1));
  }
  return m;
}

// every model-config key doubles as a CLI flag that overrides the file
struct ConfigArgs {
  std::map<std::string, std::string> overrides;

  void attach(CLI::App* cmd) {
    static const char* keys[] = {"stage_channels", "blocks_per_stage", "width_multiplier",
                                 "use_se",         "backbone_expansion", "use_dgm",
                                 "use_dadf",       "state_dim",          "expansion",
                                 "c_dec",          "seed",               "dtype"};
    for (const char* k : keys)
      cmd->add_option_function<std::string>(
          std::string("--") + k, [this, k](const std::string& v) { overrides[k] = v; },
          "override config key " + std::string(k));
  }

  ldg::ModelConfig resolve(const std::string& config_path) const {
    std::map<std::string, std::string> m;
    if (!config_path.empty()) m = read_config_file(config_path);
    for (const auto& [k, v] : overrides) m[k] = v;
    return ldg::config_from_map(m);
  }
};

void write_dataset(const ldg::Dataset& ds, const std::string& out) {
  for (const char* sub : {"A", "B", "label"}) fs::create_directories(fs::path(out) / sub);
  for (const auto& s : ds.samples) {
    ldg::write_png_rgb((fs::path(out) / "A" / (s.id + ".png")).string(), s.pre);
    ldg::write_png_rgb((fs::path(out) / "B" / (s.id + ".png")).string(), s.post);
    ldg::ImageF lab;
    lab.channels = 1;
    lab.height = s.pre.height;
    lab.width = s.pre.width;
    lab.data.assign(s.mask.begin(), s.mask.end());
    ldg::write_png_gray((fs::path(out) / "label" / (s.id + ".png")).string(), lab);
  }
}

void print_metrics(const ldg::Metrics& m) {
  std::printf("Rec %.4f  Pre %.4f  OA %.4f  F1 %.4f  IoU %.4f\n", m.rec, m.pre, m.oa,
              m.f1, m.iou);
}

template <class S>
int run_train(const ldg::ModelConfig& cfg, const std::string& data,
              const ldg::TrainOptions& opt) {
  ldg::Dataset ds = ldg::load_dataset(data);
  std::printf("loaded %zu samples from %s\n", ds.size(), data.c_str());
  ldg::LDGNet<S> net(cfg);
  std::printf("model: %lld parameters\n",
              static_cast<long long>(ldg::param_count(net.collect())));
  ldg::TrainResult r = ldg::train(net, ds, opt);
  std::printf("best F1 %.4f at epoch %d (%lld skipped steps)\n", r.best_f1, r.best_epoch,
              static_cast<long long>(r.skipped_steps));
  if (!opt.out_dir.empty())
    std::printf("wrote %s/metrics.csv and %s/best.ckpt\n", opt.out_dir.c_str(),
                opt.out_dir.c_str());
  return 0;
}

template <class S>
int run_eval(const ldg::Checkpoint& ck, const std::string& data,
             const std::string& perturb_kind, double sigma) {
  ldg::ModelConfig cfg = ldg::config_from_map(ck.config);
  ldg::LDGNet<S> net(cfg);
  ldg::ParamList<S> ps = net.collect();
  ldg::load_into(ck, ps);
  ldg::Dataset ds = ldg::load_dataset(data);
  if (!perturb_kind.empty()) {
    ldg::PerturbKind kind;
    if (perturb_kind == "gauss_noise") kind = ldg::PerturbKind::GaussNoise;
    else if (perturb_kind == "gauss_blur") kind = ldg::PerturbKind::GaussBlur;
    else throw ldg::ContractError("unknown perturbation: " + perturb_kind);
    ds = ldg::perturb(ds, kind, sigma);
    std::printf("perturbation %s sigma %.3f\n", perturb_kind.c_str(), sigma);
  }
  std::vector<const ldg::Sample*> all;
  for (const auto& s : ds.samples) all.push_back(&s);
  print_metrics(ldg::evaluate(net, all));
  return 0;
}

template <class S>
int run_infer(const ldg::Checkpoint& ck, const std::string& pre_path,
              const std::string& post_path, const std::string& out_path) {
  ldg::ModelConfig cfg = ldg::config_from_map(ck.config);
  ldg::LDGNet<S> net(cfg);
  ldg::ParamList<S> ps = net.collect();
  ldg::load_into(ck, ps);
  net.set_training(false);

  ldg::ImageF pre = ldg::read_png(pre_path);
  ldg::ImageF post = ldg::read_png(post_path);
  ldg::promote_rgb(pre);
  ldg::promote_rgb(post);
  if (pre.height != post.height || pre.width != post.width)
    throw ldg::ContractError("pre/post image dimensions differ");

  auto to_tensor = [](const ldg::ImageF& im) {
    std::vector<S> d(im.data.begin(), im.data.end());
    return ldg::Tensor<S>::from_data({1, 3, im.height, im.width}, std::move(d));
  };
  ldg::NoGradGuard ng;
  ldg::Tensor<S> logits = net.forward(to_tensor(pre), to_tensor(post));

  ldg::ImageF map;
  map.channels = 1;
  map.height = pre.height;
  map.width = pre.width;
  map.data.resize(static_cast<std::size_t>(map.height * map.width));
  std::int64_t hw = map.height * map.width;
  const S* z = logits.data();
  std::int64_t changed = 0;
  for (std::int64_t i = 0; i < hw; ++i) {
    bool c = z[hw + i] > z[i];  // class-1 logit wins
    map.data[static_cast<std::size_t>(i)] = c ? 1.f : 0.f;
    changed += c;
  }
  ldg::write_png_gray(out_path, map);
  std::printf("wrote %s (%.2f%% changed)\n", out_path.c_str(),
              100.0 * static_cast<double>(changed) / static_cast<double>(hw));
  return 0;
}

template <class S>
int run_profile(const ldg::ModelConfig& cfg, std::int64_t input_size, bool sweep) {
  ldg::CostReport r = ldg::profile_model<S>(cfg, input_size);
  std::printf("input %lldx%lld\n", static_cast<long long>(input_size),
              static_cast<long long>(input_size));
  std::printf("params     %12lld  (%.2fM)\n", static_cast<long long>(r.params),
              static_cast<double>(r.params) / 1e6);
  std::printf("flops      %12lld  (%.2fG)\n", static_cast<long long>(r.flops),
              static_cast<double>(r.flops) / 1e9);
  std::printf("peak bytes %12lld  (%.2fMB)\n", static_cast<long long>(r.peak_bytes),
              static_cast<double>(r.peak_bytes) / (1024.0 * 1024.0));
  std::printf(
      "reference: the LDGNet publication reports 3.43M params / 1.12G FLOPs / "
      "513MB GPU memory (its numbers, not this build's; the publication does "
      "not specify layer widths, so an exact match is impossible)\n");
  if (sweep) {
    std::printf("\npeak-memory sweep:\n");
    for (std::int64_t s = 256; s <= 1024; s += 128) {
      ldg::CostReport rs = ldg::profile_model<S>(cfg, s);
      std::printf("  %4lld -> %12lld bytes (%.2fMB)\n", static_cast<long long>(s),
                  static_cast<long long>(rs.peak_bytes),
                  static_cast<double>(rs.peak_bytes) / (1024.0 * 1024.0));
    }
  }
  return 0;
}

template <class F>
int dispatch_dtype(const std::string& dtype, F&& f) {
  if (dtype == "f64") return f(double{});
  return f(float{});
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ldg: lightweight difference-guided change detection"};
  app.require_subcommand(1);

  // synth
  auto* synth = app.add_subcommand("synth", "generate a synthetic dataset");
  std::int64_t synth_n = 100, synth_size = 128;
  std::uint64_t synth_seed = 1;
  std::string synth_out;
  synth->add_option("--n", synth_n, "number of pairs");
  synth->add_option("--size", synth_size, "image side length (>= 64)");
  synth->add_option("--seed", synth_seed, "generator seed");
  synth->add_option("--out", synth_out, "output directory (A/, B/, label/)")->required();

  // train
  auto* train = app.add_subcommand("train", "train a model");
  std::string train_config, train_data, train_out;
  ldg::TrainOptions topt;
  double mem_budget_mb = 0;
  ConfigArgs train_cfg;
  train->add_option("--config", train_config, "key=value config file");
  train->add_option("--data", train_data, "dataset directory")->required();
  train->add_option("--epochs", topt.epochs, "number of epochs");
  train->add_option("--batch", topt.batch, "mini-batch size");
  train->add_option("--lr", topt.lr, "learning rate");
  train->add_option("--wd", topt.wd, "weight decay");
  train->add_option("--early-stop-f1", topt.early_stop_f1,
                    "stop once validation F1 reaches this value");
  train->add_option("--mem-budget-mb", mem_budget_mb,
                    "reject configs whose estimated peak exceeds this budget");
  train->add_option("--out", train_out, "output directory for metrics.csv and best.ckpt");
  train_cfg.attach(train);

  // eval
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint");
  std::string eval_ckpt, eval_data, eval_perturb;
  double eval_sigma = 0;
  eval->add_option("--ckpt", eval_ckpt, "checkpoint file")->required();
  eval->add_option("--data", eval_data, "dataset directory")->required();
  eval->add_option("--perturb", eval_perturb, "gauss_noise or gauss_blur");
  eval->add_option("--sigma", eval_sigma, "perturbation strength");

  // infer
  auto* infer = app.add_subcommand("infer", "run one bi-temporal pair");
  std::string inf_ckpt, inf_pre, inf_post, inf_out;
  infer->add_option("--ckpt", inf_ckpt, "checkpoint file")->required();
  infer->add_option("--pre", inf_pre, "pre-event PNG")->required();
  infer->add_option("--post", inf_post, "post-event PNG")->required();
  infer->add_option("--out", inf_out, "output change-map PNG")->required();

  // profile
  auto* profile = app.add_subcommand("profile", "report params / FLOPs / peak memory");
  std::string prof_config;
  std::int64_t prof_size = 256;
  bool prof_sweep = false;
  ConfigArgs prof_cfg;
  profile->add_option("--config", prof_config,
                      "key=value config file (default: full-size configuration)");
  profile->add_option("--input-size", prof_size, "input side length");
  profile->add_flag("--sweep", prof_sweep, "also sweep input sizes 256..1024");
  prof_cfg.attach(profile);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*synth) {
      ldg::Dataset ds = ldg::synth_generate(synth_n, synth_size, synth_seed);
      write_dataset(ds, synth_out);
      std::printf("wrote %zu pairs to %s\n", ds.size(), synth_out.c_str());
      return 0;
    }
    if (*train) {
      ldg::ModelConfig cfg = train_cfg.resolve(train_config);
      topt.out_dir = train_out;
      topt.verbose = true;
      topt.mem_budget = static_cast<std::int64_t>(mem_budget_mb * 1024 * 1024);
      return dispatch_dtype(cfg.dtype, [&](auto s) {
        return run_train<decltype(s)>(cfg, train_data, topt);
      });
    }
    if (*eval) {
      ldg::Checkpoint ck = ldg::read_checkpoint(eval_ckpt);
      std::string dtype = ck.config.count("dtype") ? ck.config.at("dtype") : "f32";
      return dispatch_dtype(dtype, [&](auto s) {
        return run_eval<decltype(s)>(ck, eval_data, eval_perturb, eval_sigma);
      });
    }
    if (*infer) {
      ldg::Checkpoint ck = ldg::read_checkpoint(inf_ckpt);
      std::string dtype = ck.config.count("dtype") ? ck.config.at("dtype") : "f32";
      return dispatch_dtype(dtype, [&](auto s) {
        return run_infer<decltype(s)>(ck, inf_pre, inf_post, inf_out);
      });
    }
    if (*profile) {
      ldg::ModelConfig cfg;
      if (prof_config.empty() && prof_cfg.overrides.empty())
        cfg = ldg::ModelConfig::full();
      else
        cfg = prof_cfg.resolve(prof_config);
      return dispatch_dtype(cfg.dtype, [&](auto s) {
        return run_profile<decltype(s)>(cfg, prof_size, prof_sweep);
      });
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
