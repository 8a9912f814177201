#pragma once

#include "contextprobe/types.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <map>
#include <span>
#include <utility>
#include <vector>

namespace contextprobe {

enum class Task { classifier, segmenter };

struct ConvSpec {
  int out_channels = 16;
  int stride = 1;
};

/// Small conv net, 3x3 kernels, zero padding 1, tanh hidden activations.
/// The classifier ends in a channelwise global max-pool and a linear layer;
/// the segmenter keeps full resolution (stride 1 enforced) and ends in a
/// 1x1 head over [local features ; broadcast global-average features],
/// giving every pixel access to image-level context.
struct ArchDescriptor {
  Task task = Task::classifier;
  int num_classes = 2;
  Index in_h = 64;
  Index in_w = 64;
  int in_channels = 3;
  std::vector<ConvSpec> convs;
};

void validate(const ArchDescriptor& arch);

std::size_t param_count(const ArchDescriptor& arch);

/// Flat parameters plus the descriptor that gives them shape.
struct ParamVec {
  ArchDescriptor arch;
  Eigen::VectorXd values;
  std::uint64_t init_seed = 0;
};

/// Fan-in-scaled uniform weights, zero biases. Deterministic in (arch, seed).
ParamVec init_params(const ArchDescriptor& arch, std::uint64_t seed);

/// Activations retained by a forward pass; enables an exact backward pass
/// for any upstream logit gradient.
struct ForwardCache {
  std::vector<std::vector<Planed>> acts;  // acts[0] = input, acts[l+1] = conv l output
  // classifier head
  Eigen::VectorXd pooled;
  std::vector<std::pair<Index, Index>> pool_argmax;
  // segmenter head
  Eigen::VectorXd gctx;
};

Eigen::VectorXd classifier_apply(const ParamVec& params, const Image& image,
                                 ForwardCache* cache = nullptr);

/// Per-pixel logits, one plane per class.
std::vector<Planed> segmenter_apply(const ParamVec& params, const Image& image,
                                    ForwardCache* cache = nullptr);

Eigen::VectorXd classifier_backward(const ParamVec& params,
                                    const ForwardCache& cache,
                                    const Eigen::VectorXd& dlogits);

Eigen::VectorXd segmenter_backward(const ParamVec& params,
                                   const ForwardCache& cache,
                                   const std::vector<Planed>& dlogits);

// ---------------------------------------------------------------------------
// Losses. Each returns its value and the gradient w.r.t. the raw logits;
// the *_bundle helpers below fold that through the model backward pass.

struct LogitLoss {
  double loss = 0;
  Eigen::VectorXd dlogits;
};

/// Sum over classes of stabilized binary cross-entropy against the
/// presence indicator of `positives`.
LogitLoss multilabel_bce(const Eigen::VectorXd& logits,
                         std::span<const int> positives);

struct HingeLoss {
  double loss = 0;
  std::map<int, Eigen::VectorXd> dlogits;  // keyed by removed class
};

/// Ranking hinge over a scene's edited set: for each present class c with an
/// own-removal edit, penalizes scoring the c-removed image above the lowest
/// score among the other-removal images. Subgradients route through the
/// first attaining min element (ascending removed-class order).
HingeLoss context_hinge(const std::map<int, Eigen::VectorXd>& edit_logits,
                        std::span<const int> present);

enum class SegLossMode { plain, ignore_removed, negative };

struct SegLogitLoss {
  double ce = 0;   // softmax cross-entropy part
  double neg = 0;  // weighted negative-likelihood part
  std::vector<Planed> dlogits;
};

/// Per-pixel softmax cross-entropy. `plain` averages over all pixels and
/// rejects ignore labels; `ignore_removed` drops sentinel pixels from the
/// mean; `negative` adds lambda_neg * mean over edit-mask pixels of
/// -log(1 - p(removed_class)). When `per_class_ce` is given, accumulates
/// (summed loss, pixel count) per ground-truth class.
SegLogitLoss seg_loss(const std::vector<Planed>& logits,
                      const LabelPlane& labels, SegLossMode mode,
                      int removed_class = -1,
                      const MaskPlane* edit_mask = nullptr,
                      double lambda_neg = 0.5,
                      std::map<int, std::pair<double, long>>* per_class_ce = nullptr);

// ---------------------------------------------------------------------------

struct LossBreakdown {
  double bce = 0, hinge = 0, seg_ce = 0, seg_neg = 0;
  double total() const { return bce + hinge + seg_ce + seg_neg; }
  LossBreakdown& operator+=(const LossBreakdown& o);
  void scale(double s);
};

/// Scalar loss with its gradient w.r.t. the flat parameter vector.
struct LossBundle {
  double loss = 0;
  Eigen::VectorXd grad;
  LossBreakdown parts;
};

LossBundle classifier_bce_bundle(const ParamVec& params, const Image& image,
                                 std::span<const int> positives);

/// Hinge term over the full edited set of one scene.
LossBundle classifier_hinge_bundle(const ParamVec& params,
                                   const std::map<int, Image>& edited_images,
                                   std::span<const int> present);

LossBundle segmenter_bundle(const ParamVec& params, const Image& image,
                            const LabelPlane& labels, SegLossMode mode,
                            int removed_class = -1,
                            const MaskPlane* edit_mask = nullptr,
                            double lambda_neg = 0.5,
                            std::map<int, std::pair<double, long>>* per_class_ce = nullptr);

/// Classic momentum update: v <- mu*v + g, p <- p - lr*v.
/// Throws on non-finite gradients (training divergence signal).
void sgd_step(ParamVec& params, Eigen::VectorXd& velocity,
              const Eigen::VectorXd& grad, double lr, double momentum);

}  // namespace contextprobe
