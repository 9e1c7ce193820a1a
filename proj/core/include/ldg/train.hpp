#pragma once

// Training loop: seeded shuffling, AdamW, per-epoch validation metrics as
// CSV rows, best-F1 checkpointing, optional early stop at a target F1.

#include <fstream>
#include <functional>

#include "ldg/checkpoint.hpp"
#include "ldg/data.hpp"
#include "ldg/loss.hpp"
#include "ldg/model.hpp"
#include "ldg/optim.hpp"
#include "ldg/profile.hpp"

namespace ldg {

// deterministic 80/20 split by id hash
inline void split_dataset(const Dataset& ds, std::vector<const Sample*>& train,
                          std::vector<const Sample*>& val) {
  for (const auto& s : ds.samples)
    (fnv1a(s.id) % 5 == 0 ? val : train).push_back(&s);
}

template <class S>
struct Batch {
  Tensor<S> pre, post;  // [B,3,H,W]
  Tensor<S> target;     // [B,H,W]
};

template <class S>
Batch<S> make_batch(const std::vector<const Sample*>& samples,
                    const std::vector<std::size_t>& idx, std::size_t lo, std::size_t hi) {
  std::int64_t B = static_cast<std::int64_t>(hi - lo);
  std::int64_t H = samples[idx[lo]]->pre.height, W = samples[idx[lo]]->pre.width;
  std::vector<S> pre(static_cast<std::size_t>(B * 3 * H * W));
  std::vector<S> post(pre.size());
  std::vector<S> tgt(static_cast<std::size_t>(B * H * W));
  for (std::size_t k = lo; k < hi; ++k) {
    const Sample& s = *samples[idx[k]];
    if (s.pre.height != H || s.pre.width != W)
      throw ShapeError("make_batch: inconsistent sample sizes");
    std::size_t b = k - lo;
    for (std::size_t i = 0; i < s.pre.data.size(); ++i) {
      pre[b * s.pre.data.size() + i] = static_cast<S>(s.pre.data[i]);
      post[b * s.post.data.size() + i] = static_cast<S>(s.post.data[i]);
    }
    for (std::size_t i = 0; i < s.mask.size(); ++i)
      tgt[b * s.mask.size() + i] = static_cast<S>(s.mask[i]);
  }
  return {Tensor<S>::from_data({B, 3, H, W}, std::move(pre)),
          Tensor<S>::from_data({B, 3, H, W}, std::move(post)),
          Tensor<S>::from_data({B, H, W}, std::move(tgt))};
}

// confusion-matrix metrics over a sample list (eval mode, no gradients)
template <class S>
Metrics evaluate(LDGNet<S>& net, const std::vector<const Sample*>& samples,
                 std::size_t batch = 8) {
  NoGradGuard ng;
  net.set_training(false);
  ConfusionCounts counts;
  std::vector<std::size_t> idx(samples.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  for (std::size_t lo = 0; lo < samples.size(); lo += batch) {
    std::size_t hi = std::min(samples.size(), lo + batch);
    Batch<S> b = make_batch<S>(samples, idx, lo, hi);
    accumulate_confusion(counts, net.forward(b.pre, b.post), b.target);
  }
  return metrics(counts);
}

struct TrainOptions {
  int epochs = 30;
  std::size_t batch = 16;
  double lr = 1e-4, wd = 5e-4;
  double early_stop_f1 = -1.0;    // < 0 disables early stopping
  std::int64_t mem_budget = 0;    // bytes; > 0 rejects configs whose estimated
                                  // training peak exceeds the budget
  std::string out_dir;            // when set: metrics.csv + best.ckpt
  bool verbose = false;
};

struct EpochRow {
  int epoch;
  double loss, rec, pre, oa, f1, iou;
};

struct TrainResult {
  std::vector<EpochRow> log;
  double best_f1 = -1.0;
  int best_epoch = -1;
  std::int64_t skipped_steps = 0;
};

inline std::string csv_row(const EpochRow& r) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "%d,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f", r.epoch, r.loss, r.rec,
                r.pre, r.oa, r.f1, r.iou);
  return buf;
}

template <class S>
TrainResult train(LDGNet<S>& net, const Dataset& ds, const TrainOptions& opt) {
  if (ds.samples.empty()) throw ContractError("train: dataset is empty");
  std::vector<const Sample*> tr, va;
  split_dataset(ds, tr, va);
  if (tr.empty() || va.empty())
    throw ContractError("train: degenerate train/val split");

  if (opt.mem_budget > 0) {
    // coarse up-front estimate: single-sample inference peak, scaled by the
    // batch size and a factor of 3 for the autodiff tape
    CostReport r = profile_model<S>(net.cfg, ds.samples.front().pre.height);
    std::int64_t est = r.peak_bytes * static_cast<std::int64_t>(opt.batch) * 3;
    if (est > opt.mem_budget)
      throw ContractError("train: estimated peak memory " + std::to_string(est) +
                          " bytes exceeds budget " + std::to_string(opt.mem_budget));
  }

  AdamW<S> optim(net.collect(), opt.lr, opt.wd);
  TrainResult res;
  std::ofstream csv;
  if (!opt.out_dir.empty()) {
    std::filesystem::create_directories(opt.out_dir);
    csv.open(opt.out_dir + "/metrics.csv");
    csv << "epoch,loss,rec,pre,oa,f1,iou\n";
  }

  std::vector<std::size_t> idx(tr.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  for (int epoch = 1; epoch <= opt.epochs; ++epoch) {
    // seeded Fisher-Yates shuffle, decoupled from parameter-init draws
    Rng rng(mix64(net.cfg.seed ^ mix64(static_cast<std::uint64_t>(epoch))));
    for (std::size_t i = idx.size(); i > 1; --i)
      std::swap(idx[i - 1], idx[static_cast<std::size_t>(
                    rng.uniform_int(0, static_cast<std::int64_t>(i) - 1))]);

    net.set_training(true);
    double loss_sum = 0;
    std::size_t batches = 0;
    for (std::size_t lo = 0; lo < tr.size(); lo += opt.batch) {
      std::size_t hi = std::min(tr.size(), lo + opt.batch);
      Batch<S> b = make_batch<S>(tr, idx, lo, hi);
      optim.zero_grad();
      Tensor<S> loss = total_loss(net.forward(b.pre, b.post), b.target);
      loss.backward();
      optim.step();
      loss_sum += static_cast<double>(loss.item());
      ++batches;
    }

    Metrics m = evaluate(net, va);
    EpochRow row{epoch, loss_sum / static_cast<double>(batches),
                 m.rec, m.pre, m.oa, m.f1, m.iou};
    res.log.push_back(row);
    if (csv.is_open()) csv << csv_row(row) << "\n" << std::flush;
    if (opt.verbose) std::fprintf(stderr, "epoch %s\n", csv_row(row).c_str());

    if (m.f1 > res.best_f1) {
      res.best_f1 = m.f1;
      res.best_epoch = epoch;
      if (!opt.out_dir.empty()) {
        ParamList<S> ps = net.collect();
        save_checkpoint(opt.out_dir + "/best.ckpt", config_to_map(net.cfg), ps);
      }
    }
    if (opt.early_stop_f1 >= 0 && m.f1 >= opt.early_stop_f1) break;
  }
  res.skipped_steps = optim.skipped;
  return res;
}

}  // namespace ldg
