#pragma once

// The decoration networks. A shared-weight per-point encoder with a global
// max-pool produces point-wise features F1; a fusion head combines F1 with
// the points' raw non-coordinate channels F2 into the semantic features F3
// that decorate_cloud() appends to each point. Four fusion variants:
//   A: 1-channel predicted foreground mask (no learned parameters)
//   B: 2-layer MLP on F2 alone
//   C: 2-layer MLP on F1 alone
//   D: 2-layer MLPs on each of F1 and F2, concatenated, then a 2-layer MLP
// Every layer is linear + bias + ReLU except the last layer of each head,
// which stays linear. B, C and D are trained through a small auxiliary
// foreground/background classifier on top of F3.

#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "pointdeco/cloud.hpp"
#include "pointdeco/common.hpp"
#include "pointdeco/frustum.hpp"
#include "pointdeco/grad.hpp"
#include "pointdeco/io.hpp"
#include "pointdeco/tensor.hpp"

namespace pointdeco {

constexpr int kLocalDim = 64;    // per-point features after the encoder
constexpr int kGlobalDim = 256;  // pooled context vector
constexpr int kF1Dim = 64;       // point-wise output of the main network
constexpr int kSemanticDim = 16; // F3 width for variants B, C, D
constexpr int kSegClasses = 2;   // background / foreground

using ParamRefs = std::vector<std::pair<std::string, Mat*>>;
using ConstParamRefs = std::vector<std::pair<std::string, const Mat*>>;

namespace detail {

inline Mat xavier(int rows, int cols, Rng& rng) {
  return random_mat(rows, cols, std::sqrt(6.0 / (rows + cols)), rng);
}

inline ConstParamRefs to_const(const ParamRefs& refs) {
  ConstParamRefs out;
  out.reserve(refs.size());
  for (const auto& [name, mat] : refs) out.emplace_back(name, mat);
  return out;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Segmentation network: rows (k x D) -> local (k x 64) -> pooled global
// (1 x 256), tiled and concatenated with the local features and the
// detection's one-hot class, then decoded to F1 (k x 64) and fg/bg logits.

struct SegNetParams {
  int in_channels = 4;
  int n_cls = 3;
  Mat enc1_w, enc1_b;
  Mat enc2_w, enc2_b;
  Mat enc3_w, enc3_b;
  Mat dec1_w, dec1_b;
  Mat dec2_w, dec2_b;
  Mat head_w, head_b;

  static SegNetParams init(int in_channels, int n_cls, Rng& rng) {
    SegNetParams p;
    p.in_channels = in_channels;
    p.n_cls = n_cls;
    p.enc1_w = detail::xavier(in_channels, kLocalDim, rng);
    p.enc1_b = Mat(1, kLocalDim);
    p.enc2_w = detail::xavier(kLocalDim, kLocalDim, rng);
    p.enc2_b = Mat(1, kLocalDim);
    p.enc3_w = detail::xavier(kLocalDim, kGlobalDim, rng);
    p.enc3_b = Mat(1, kGlobalDim);
    const int dec_in = kLocalDim + kGlobalDim + n_cls;
    p.dec1_w = detail::xavier(dec_in, 128, rng);
    p.dec1_b = Mat(1, 128);
    p.dec2_w = detail::xavier(128, kF1Dim, rng);
    p.dec2_b = Mat(1, kF1Dim);
    p.head_w = detail::xavier(kF1Dim, kSegClasses, rng);
    p.head_b = Mat(1, kSegClasses);
    return p;
  }

  ParamRefs named() {
    return {{"seg.enc1_w", &enc1_w}, {"seg.enc1_b", &enc1_b},
            {"seg.enc2_w", &enc2_w}, {"seg.enc2_b", &enc2_b},
            {"seg.enc3_w", &enc3_w}, {"seg.enc3_b", &enc3_b},
            {"seg.dec1_w", &dec1_w}, {"seg.dec1_b", &dec1_b},
            {"seg.dec2_w", &dec2_w}, {"seg.dec2_b", &dec2_b},
            {"seg.head_w", &head_w}, {"seg.head_b", &head_b}};
  }
  ConstParamRefs named() const {
    return detail::to_const(const_cast<SegNetParams*>(this)->named());
  }
};

// Parallel gradient storage for an ordered parameter list.
inline std::vector<Mat> make_grads(const ConstParamRefs& refs) {
  std::vector<Mat> grads;
  grads.reserve(refs.size());
  for (const auto& [name, mat] : refs) grads.emplace_back(mat->rows, mat->cols);
  return grads;
}

// One plain gradient-descent step; parameters are re-rounded to float32 so
// checkpoints capture them exactly. Gradients are cleared afterwards.
inline void sgd_step(const ParamRefs& refs, std::vector<Mat>& grads,
                     double lr) {
  require_shape(refs.size() == grads.size(), "sgd_step parameter count");
  for (std::size_t i = 0; i < refs.size(); ++i) {
    Mat& p = *refs[i].second;
    require_shape(p.same_shape(grads[i]), "sgd_step gradient shape");
    for (std::size_t j = 0; j < p.d.size(); ++j) {
      p.d[j] = to_f32(p.d[j] - lr * grads[i].d[j]);
    }
    grads[i].zero();
  }
}

struct SegTrace {
  Tape::Id f1 = -1;      // k x kF1Dim
  Tape::Id logits = -1;  // k x kSegClasses
  Tape::Id global = -1;  // 1 x kGlobalDim pooled context
};

namespace detail {

inline Tape::Id dense(Tape& t, Tape::Id x, const Mat& w, const Mat& b,
                      Mat* gw, Mat* gb, bool relu_after) {
  const auto y =
      t.bias_add(t.matmul(x, t.leaf(w, gw)), t.leaf(b, gb));
  return relu_after ? t.relu(y) : y;
}

}  // namespace detail

// Runs the segmentation network on one batch. When `grads` is non-null it
// must follow the named() order; backward() will then accumulate into it.
inline SegTrace seg_forward(Tape& t, const SegNetParams& p, const Mat& rows,
                            const Mat& class_onehot,
                            std::vector<Mat>* grads = nullptr) {
  require_shape(rows.cols == p.in_channels, "segmentation input width");
  require_shape(class_onehot.rows == 1 && class_onehot.cols == p.n_cls,
                "segmentation one-hot width");
  auto g = [&](int i) -> Mat* { return grads ? &(*grads)[i] : nullptr; };

  const auto x = t.leaf(rows);
  const auto h1 = detail::dense(t, x, p.enc1_w, p.enc1_b, g(0), g(1), true);
  const auto local = detail::dense(t, h1, p.enc2_w, p.enc2_b, g(2), g(3), true);
  const auto h3 = detail::dense(t, local, p.enc3_w, p.enc3_b, g(4), g(5), true);
  const auto global = t.maxpool_rows(h3);
  const auto global_tiled = t.tile_rows(global, rows.rows);
  const auto onehot_tiled = t.tile_rows(t.leaf(class_onehot), rows.rows);
  const auto joined =
      t.concat_cols(t.concat_cols(local, global_tiled), onehot_tiled);
  const auto d1 = detail::dense(t, joined, p.dec1_w, p.dec1_b, g(6), g(7), true);
  const auto f1 = detail::dense(t, d1, p.dec2_w, p.dec2_b, g(8), g(9), true);
  const auto logits =
      detail::dense(t, f1, p.head_w, p.head_b, g(10), g(11), false);
  return {f1, logits, global};
}

// Per-row foreground prediction; equal logits fall back to background.
inline std::vector<int> predict_mask(const Mat& logits) {
  std::vector<int> mask(logits.rows, 0);
  for (int i = 0; i < logits.rows; ++i) {
    mask[i] = logits.at(i, 1) > logits.at(i, 0) ? 1 : 0;
  }
  return mask;
}

// ---------------------------------------------------------------------------
// Fusion heads.

enum class FusionVariant { A, B, C, D };

inline const char* fusion_variant_name(FusionVariant v) {
  switch (v) {
    case FusionVariant::A: return "A";
    case FusionVariant::B: return "B";
    case FusionVariant::C: return "C";
    case FusionVariant::D: return "D";
  }
  return "?";
}

inline FusionVariant fusion_variant_from_name(const std::string& s) {
  if (s == "A") return FusionVariant::A;
  if (s == "B") return FusionVariant::B;
  if (s == "C") return FusionVariant::C;
  if (s == "D") return FusionVariant::D;
  throw Error(ErrorCode::InvalidClass, "unknown fusion variant '" + s + "'");
}

inline int semantic_channels(FusionVariant v) {
  return v == FusionVariant::A ? 1 : kSemanticDim;
}

struct FusionParams {
  FusionVariant variant = FusionVariant::D;
  int f2_channels = 1;  // width of the raw non-coordinate block

  // Variant B branch (F2 -> 16 -> 16).
  Mat b1_w, b1_b, b2_w, b2_b;
  // Variant C branch (F1 -> 32 -> 16).
  Mat c1_w, c1_b, c2_w, c2_b;
  // Variant D: F1 -> 64 -> 32, F2 -> 16 -> 16, concat -> 32 -> 16.
  Mat d_f1a_w, d_f1a_b, d_f1b_w, d_f1b_b;
  Mat d_f2a_w, d_f2a_b, d_f2b_w, d_f2b_b;
  Mat post1_w, post1_b, post2_w, post2_b;
  // Auxiliary fg/bg classifier on F3, used only to train B, C and D.
  Mat aux_w, aux_b;

  static FusionParams init(FusionVariant variant, int f2_channels, Rng& rng) {
    if ((variant == FusionVariant::B || variant == FusionVariant::D) &&
        f2_channels < 1) {
      throw Error(ErrorCode::ShapeMismatch,
                  "fusion variant " +
                      std::string(fusion_variant_name(variant)) +
                      " needs at least one non-coordinate channel");
    }
    FusionParams p;
    p.variant = variant;
    p.f2_channels = f2_channels;
    switch (variant) {
      case FusionVariant::A:
        return p;
      case FusionVariant::B:
        p.b1_w = detail::xavier(f2_channels, 16, rng);
        p.b1_b = Mat(1, 16);
        p.b2_w = detail::xavier(16, kSemanticDim, rng);
        p.b2_b = Mat(1, kSemanticDim);
        break;
      case FusionVariant::C:
        p.c1_w = detail::xavier(kF1Dim, 32, rng);
        p.c1_b = Mat(1, 32);
        p.c2_w = detail::xavier(32, kSemanticDim, rng);
        p.c2_b = Mat(1, kSemanticDim);
        break;
      case FusionVariant::D:
        p.d_f1a_w = detail::xavier(kF1Dim, 64, rng);
        p.d_f1a_b = Mat(1, 64);
        p.d_f1b_w = detail::xavier(64, 32, rng);
        p.d_f1b_b = Mat(1, 32);
        p.d_f2a_w = detail::xavier(f2_channels, 16, rng);
        p.d_f2a_b = Mat(1, 16);
        p.d_f2b_w = detail::xavier(16, 16, rng);
        p.d_f2b_b = Mat(1, 16);
        p.post1_w = detail::xavier(32 + 16, 32, rng);
        p.post1_b = Mat(1, 32);
        p.post2_w = detail::xavier(32, kSemanticDim, rng);
        p.post2_b = Mat(1, kSemanticDim);
        break;
    }
    p.aux_w = detail::xavier(kSemanticDim, kSegClasses, rng);
    p.aux_b = Mat(1, kSegClasses);
    return p;
  }

  ParamRefs named() {
    switch (variant) {
      case FusionVariant::A:
        return {};
      case FusionVariant::B:
        return {{"fus.b1_w", &b1_w}, {"fus.b1_b", &b1_b},
                {"fus.b2_w", &b2_w}, {"fus.b2_b", &b2_b},
                {"fus.aux_w", &aux_w}, {"fus.aux_b", &aux_b}};
      case FusionVariant::C:
        return {{"fus.c1_w", &c1_w}, {"fus.c1_b", &c1_b},
                {"fus.c2_w", &c2_w}, {"fus.c2_b", &c2_b},
                {"fus.aux_w", &aux_w}, {"fus.aux_b", &aux_b}};
      case FusionVariant::D:
        return {{"fus.d_f1a_w", &d_f1a_w}, {"fus.d_f1a_b", &d_f1a_b},
                {"fus.d_f1b_w", &d_f1b_w}, {"fus.d_f1b_b", &d_f1b_b},
                {"fus.d_f2a_w", &d_f2a_w}, {"fus.d_f2a_b", &d_f2a_b},
                {"fus.d_f2b_w", &d_f2b_w}, {"fus.d_f2b_b", &d_f2b_b},
                {"fus.post1_w", &post1_w}, {"fus.post1_b", &post1_b},
                {"fus.post2_w", &post2_w}, {"fus.post2_b", &post2_b},
                {"fus.aux_w", &aux_w}, {"fus.aux_b", &aux_b}};
    }
    return {};
  }
  ConstParamRefs named() const {
    return detail::to_const(const_cast<FusionParams*>(this)->named());
  }
};

// F3 for the learned variants (B, C, D). Variant A has no tape form; use
// predict_mask on the segmentation logits instead.
inline Tape::Id fusion_forward(Tape& t, const FusionParams& p, Tape::Id f1,
                               Tape::Id f2, std::vector<Mat>* grads = nullptr) {
  auto g = [&](int i) -> Mat* { return grads ? &(*grads)[i] : nullptr; };
  switch (p.variant) {
    case FusionVariant::A:
      throw Error(ErrorCode::MissingMask,
                  "variant A decorates with a mask, not a learned head; "
                  "supply a mask source instead");
    case FusionVariant::B: {
      const auto h = detail::dense(t, f2, p.b1_w, p.b1_b, g(0), g(1), true);
      return detail::dense(t, h, p.b2_w, p.b2_b, g(2), g(3), false);
    }
    case FusionVariant::C: {
      const auto h = detail::dense(t, f1, p.c1_w, p.c1_b, g(0), g(1), true);
      return detail::dense(t, h, p.c2_w, p.c2_b, g(2), g(3), false);
    }
    case FusionVariant::D: {
      const auto a1 =
          detail::dense(t, f1, p.d_f1a_w, p.d_f1a_b, g(0), g(1), true);
      const auto a2 =
          detail::dense(t, a1, p.d_f1b_w, p.d_f1b_b, g(2), g(3), true);
      const auto b1 =
          detail::dense(t, f2, p.d_f2a_w, p.d_f2a_b, g(4), g(5), true);
      const auto b2 =
          detail::dense(t, b1, p.d_f2b_w, p.d_f2b_b, g(6), g(7), true);
      const auto cat = t.concat_cols(a2, b2);
      const auto h =
          detail::dense(t, cat, p.post1_w, p.post1_b, g(8), g(9), true);
      return detail::dense(t, h, p.post2_w, p.post2_b, g(10), g(11), false);
    }
  }
  throw Error(ErrorCode::ShapeMismatch, "unreachable fusion variant");
}

// Auxiliary fg/bg logits on top of F3. Gradient slots follow named(): the aux
// matrices are always the last two entries.
inline Tape::Id aux_forward(Tape& t, const FusionParams& p, Tape::Id f3,
                            std::vector<Mat>* grads = nullptr) {
  const int n = grads ? static_cast<int>(grads->size()) : 0;
  Mat* gw = grads ? &(*grads)[n - 2] : nullptr;
  Mat* gb = grads ? &(*grads)[n - 1] : nullptr;
  return detail::dense(t, f3, p.aux_w, p.aux_b, gw, gb, false);
}

// ---------------------------------------------------------------------------
// Checkpoints.

inline void save_params(const std::string& path, const ConstParamRefs& refs) {
  NamedMats entries;
  entries.reserve(refs.size());
  for (const auto& [name, mat] : refs) entries.emplace_back(name, *mat);
  save_checkpoint(path, entries);
}

inline void load_params(const std::string& path, const ParamRefs& refs) {
  const auto entries = load_checkpoint(path);
  if (entries.size() != refs.size()) {
    throw Error(ErrorCode::MalformedFile,
                path + ": expected " + std::to_string(refs.size()) +
                    " matrices, found " + std::to_string(entries.size()));
  }
  for (std::size_t i = 0; i < refs.size(); ++i) {
    if (entries[i].first != refs[i].first) {
      throw Error(ErrorCode::MalformedFile,
                  path + ": matrix " + std::to_string(i) + " is '" +
                      entries[i].first + "', expected '" + refs[i].first + "'");
    }
    if (!entries[i].second.same_shape(*refs[i].second)) {
      throw Error(ErrorCode::ShapeMismatch,
                  path + ": shape mismatch for '" + entries[i].first + "'");
    }
    *refs[i].second = entries[i].second;
  }
}

// Seg+fusion bundles share one container; the seg block comes first.
inline void save_model(const std::string& path, const SegNetParams& seg,
                       const FusionParams* fusion = nullptr) {
  NamedMats entries;
  for (const auto& [name, mat] : seg.named()) entries.emplace_back(name, *mat);
  if (fusion != nullptr) {
    for (const auto& [name, mat] : fusion->named()) {
      entries.emplace_back(name, *mat);
    }
  }
  save_checkpoint(path, entries);
}

}  // namespace pointdeco
