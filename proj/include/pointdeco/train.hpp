#pragma once

// Training, evaluation and decoration on top of the networks in net.hpp.
// Optimisation is plain stochastic gradient descent with a fixed step: one
// frustum is one batch. All randomness (epoch shuffles, per-batch resampling)
// comes from a single generator seeded by the caller, so a given dataset,
// options and seed always produce byte-identical checkpoints and loss traces.

#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "pointdeco/cloud.hpp"
#include "pointdeco/common.hpp"
#include "pointdeco/frustum.hpp"
#include "pointdeco/grad.hpp"
#include "pointdeco/net.hpp"
#include "pointdeco/tensor.hpp"

namespace pointdeco {

struct TrainOpts {
  int epochs = 40;
  double lr = 0.02;
  int m = 128;                    // rows per batch when resampling
  std::uint64_t seed = 1;
  double target_accuracy = 0.0;   // > 0 enables early stopping
};

struct TrainReport {
  int epochs_run = 0;
  std::vector<double> epoch_loss;      // mean batch loss per epoch
  std::vector<double> epoch_accuracy;  // training-batch accuracy per epoch
  double final_loss = 0.0;
  double final_accuracy = 0.0;  // full deterministic pass after training
  bool reached_target = false;
};

// Where variant A takes its mask channel from.
enum class MaskSource { GroundTruth, Predicted };

inline void shuffle_indices(std::vector<int>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    std::swap(v[i - 1], v[uniform_below(rng, i)]);
  }
}

inline std::vector<Frustum> collect_frusta(
    const std::vector<RecodedCloud>& clouds) {
  std::vector<Frustum> out;
  for (const auto& c : clouds) {
    auto fs = group_by_index(c);
    for (auto& f : fs) out.push_back(std::move(f));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Evaluation (deterministic full-frustum passes, no resampling).

inline double eval_seg_accuracy(const SegNetParams& seg,
                                const std::vector<Frustum>& frusta) {
  std::size_t hit = 0, total = 0;
  for (const auto& f : frusta) {
    const auto batch = build_full(f, seg.n_cls);
    Tape tape;
    const auto out = seg_forward(tape, seg, batch.rows, batch.class_onehot);
    const auto mask = predict_mask(tape.value(out.logits));
    for (std::size_t i = 0; i < mask.size(); ++i) {
      hit += mask[i] == batch.seg_labels[i] ? 1 : 0;
    }
    total += mask.size();
  }
  return total == 0 ? 0.0 : static_cast<double>(hit) / total;
}

inline double eval_fusion_accuracy(const SegNetParams& seg,
                                   const FusionParams& fusion,
                                   const std::vector<Frustum>& frusta) {
  if (fusion.variant == FusionVariant::A) {
    // The predicted mask is exactly the segmentation head's prediction.
    return eval_seg_accuracy(seg, frusta);
  }
  std::size_t hit = 0, total = 0;
  for (const auto& f : frusta) {
    const auto batch = build_full(f, seg.n_cls);
    Tape tape;
    const auto out = seg_forward(tape, seg, batch.rows, batch.class_onehot);
    const auto f2 = tape.leaf(batch.feats);
    const auto f3 = fusion_forward(tape, fusion, out.f1, f2);
    const auto logits = aux_forward(tape, fusion, f3);
    const auto mask = predict_mask(tape.value(logits));
    for (std::size_t i = 0; i < mask.size(); ++i) {
      hit += mask[i] == batch.seg_labels[i] ? 1 : 0;
    }
    total += mask.size();
  }
  return total == 0 ? 0.0 : static_cast<double>(hit) / total;
}

// ---------------------------------------------------------------------------
// Segmentation training: per-frustum batches resampled to opts.m rows,
// cross-entropy on the fg/bg head. The per-epoch accuracy in the report is
// measured on the training batches themselves (free at forward time); the
// final accuracy is a full deterministic pass.

inline TrainReport train_seg(SegNetParams& seg,
                             const std::vector<RecodedCloud>& clouds,
                             const TrainOpts& opts) {
  const auto frusta = collect_frusta(clouds);
  if (frusta.empty()) {
    throw Error(ErrorCode::EmptyFrustum, "no frusta to train on");
  }
  auto refs = seg.named();
  auto grads = make_grads(std::as_const(seg).named());
  Rng rng(opts.seed);
  std::vector<int> order(frusta.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);

  TrainReport report;
  for (int epoch = 0; epoch < opts.epochs; ++epoch) {
    shuffle_indices(order, rng);
    double loss_sum = 0.0;
    std::size_t hit = 0, total = 0;
    for (int fi : order) {
      const auto batch = build_batch(frusta[fi], opts.m, seg.n_cls, rng);
      Tape tape;
      const auto out =
          seg_forward(tape, seg, batch.rows, batch.class_onehot, &grads);
      const auto loss = tape.softmax_ce(out.logits, batch.seg_labels);
      const double lv = tape.value(loss).at(0, 0);
      if (!std::isfinite(lv)) {
        throw Error(ErrorCode::DivergedLoss,
                    "segmentation loss diverged at epoch " +
                        std::to_string(epoch));
      }
      const auto mask = predict_mask(tape.value(out.logits));
      for (std::size_t i = 0; i < mask.size(); ++i) {
        hit += mask[i] == batch.seg_labels[i] ? 1 : 0;
      }
      total += mask.size();
      tape.backward(loss);
      sgd_step(refs, grads, opts.lr);
      loss_sum += lv;
    }
    report.epochs_run = epoch + 1;
    report.epoch_loss.push_back(loss_sum / static_cast<double>(order.size()));
    report.epoch_accuracy.push_back(static_cast<double>(hit) /
                                    static_cast<double>(total));
    if (opts.target_accuracy > 0.0 &&
        report.epoch_accuracy.back() >= opts.target_accuracy) {
      break;
    }
  }
  if (!report.epoch_loss.empty()) report.final_loss = report.epoch_loss.back();
  report.final_accuracy = eval_seg_accuracy(seg, frusta);
  report.reached_target = opts.target_accuracy > 0.0 &&
                          report.final_accuracy >= opts.target_accuracy;
  return report;
}

// ---------------------------------------------------------------------------
// Fusion training: the segmentation network is frozen, its F1 output per
// frustum is precomputed once, and only the head (plus the auxiliary fg/bg
// classifier) learns, against the same labels. Variant A has nothing to train.

inline TrainReport train_fusion(const SegNetParams& seg, FusionParams& fusion,
                                const std::vector<RecodedCloud>& clouds,
                                const TrainOpts& opts) {
  const auto frusta = collect_frusta(clouds);
  if (frusta.empty()) {
    throw Error(ErrorCode::EmptyFrustum, "no frusta to train on");
  }
  TrainReport report;
  if (fusion.variant == FusionVariant::A) {
    report.final_accuracy = eval_fusion_accuracy(seg, fusion, frusta);
    report.reached_target = opts.target_accuracy > 0.0 &&
                            report.final_accuracy >= opts.target_accuracy;
    return report;
  }

  struct Precomputed {
    Mat f1;
    Mat feats;
    std::vector<int> labels;
  };
  std::vector<Precomputed> data;
  data.reserve(frusta.size());
  for (const auto& f : frusta) {
    const auto batch = build_full(f, seg.n_cls);
    Tape tape;
    const auto out = seg_forward(tape, seg, batch.rows, batch.class_onehot);
    data.push_back({tape.value(out.f1), batch.feats, batch.seg_labels});
  }

  auto refs = fusion.named();
  auto grads = make_grads(std::as_const(fusion).named());
  Rng rng(opts.seed);
  std::vector<int> order(data.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);

  for (int epoch = 0; epoch < opts.epochs; ++epoch) {
    shuffle_indices(order, rng);
    double loss_sum = 0.0;
    std::size_t hit = 0, total = 0;
    for (int fi : order) {
      Tape tape;
      const auto f1 = tape.leaf(data[fi].f1);
      const auto f2 = tape.leaf(data[fi].feats);
      const auto f3 = fusion_forward(tape, fusion, f1, f2, &grads);
      const auto logits = aux_forward(tape, fusion, f3, &grads);
      const auto loss = tape.softmax_ce(logits, data[fi].labels);
      const double lv = tape.value(loss).at(0, 0);
      if (!std::isfinite(lv)) {
        throw Error(ErrorCode::DivergedLoss,
                    "fusion loss diverged at epoch " + std::to_string(epoch));
      }
      const auto mask = predict_mask(tape.value(logits));
      for (std::size_t i = 0; i < mask.size(); ++i) {
        hit += mask[i] == data[fi].labels[i] ? 1 : 0;
      }
      total += mask.size();
      tape.backward(loss);
      sgd_step(refs, grads, opts.lr);
      loss_sum += lv;
    }
    report.epochs_run = epoch + 1;
    report.epoch_loss.push_back(loss_sum / static_cast<double>(order.size()));
    report.epoch_accuracy.push_back(static_cast<double>(hit) /
                                    static_cast<double>(total));
    if (opts.target_accuracy > 0.0 &&
        report.epoch_accuracy.back() >= opts.target_accuracy) {
      break;
    }
  }
  if (!report.epoch_loss.empty()) report.final_loss = report.epoch_loss.back();
  report.final_accuracy = eval_fusion_accuracy(seg, fusion, frusta);
  report.reached_target = opts.target_accuracy > 0.0 &&
                          report.final_accuracy >= opts.target_accuracy;
  return report;
}

// ---------------------------------------------------------------------------
// Decoration: append the fusion head's semantic channels to every recoded
// point. Each frustum is forwarded whole (no resampling), so every point gets
// exactly one semantic vector and the output row order matches the recoded
// input. Base channels are copied through untouched. Variant A appends a
// single mask channel (ground-truth label column or the network's predicted
// mask); the learned variants append kSemanticDim channels.

inline DecoratedCloud decorate_cloud(
    const RecodedCloud& cloud, const SegNetParams& seg,
    const FusionParams& fusion,
    MaskSource mask_source = MaskSource::GroundTruth) {
  DecoratedCloud out;
  out.frame_id = cloud.frame_id;
  out.base_channels = cloud.base_channels;
  out.semantic_channels = semantic_channels(fusion.variant);
  out.rows.reserve(cloud.points.size() *
                   static_cast<std::size_t>(out.channels()));

  for (const auto& f : group_by_index(cloud)) {
    const auto batch = build_full(f, seg.n_cls);
    Tape tape;
    const auto net = seg_forward(tape, seg, batch.rows, batch.class_onehot);
    Mat semantic;  // rows x semantic_channels
    if (fusion.variant == FusionVariant::A) {
      semantic = Mat(static_cast<int>(f.points.size()), 1);
      if (mask_source == MaskSource::GroundTruth) {
        for (std::size_t i = 0; i < f.points.size(); ++i) {
          semantic.at(static_cast<int>(i), 0) =
              static_cast<double>(f.points[i].seg_label);
        }
      } else {
        const auto mask = predict_mask(tape.value(net.logits));
        for (std::size_t i = 0; i < mask.size(); ++i) {
          semantic.at(static_cast<int>(i), 0) = static_cast<double>(mask[i]);
        }
      }
    } else {
      const auto f2 = tape.leaf(batch.feats);
      const auto f3 = fusion_forward(tape, fusion, net.f1, f2);
      semantic = tape.value(f3);
    }
    for (std::size_t r = 0; r < f.points.size(); ++r) {
      const auto& p = f.points[r].base;
      out.rows.push_back(p.x);
      out.rows.push_back(p.y);
      out.rows.push_back(p.z);
      for (double v : p.feats) out.rows.push_back(v);
      for (int c = 0; c < semantic.cols; ++c) {
        out.rows.push_back(to_f32(semantic.at(static_cast<int>(r), c)));
      }
    }
  }
  return out;
}

}  // namespace pointdeco
