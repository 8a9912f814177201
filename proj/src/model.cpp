#include "contextprobe/model.hpp"

#include "contextprobe/rng.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace contextprobe {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Eigen::MatrixXd;
using Eigen::VectorXd;

constexpr int kKernel = 3;
constexpr int kPad = 1;

Index conv_out(Index in, int stride) { return (in - 1) / stride + 1; }

struct ConvShape {
  int in_ch = 0, out_ch = 0, stride = 1;
  Index in_h = 0, in_w = 0, out_h = 0, out_w = 0;
  std::size_t w_off = 0, b_off = 0;
  std::size_t weights() const {
    return static_cast<std::size_t>(out_ch) * in_ch * kKernel * kKernel;
  }
};

struct Layout {
  std::vector<ConvShape> convs;
  int feat_ch = 0;       // channels feeding the head
  Index feat_h = 0, feat_w = 0;
  std::size_t head_w = 0;   // classifier W / segmenter local W
  std::size_t head_wg = 0;  // segmenter global-context W
  std::size_t head_b = 0;
  std::size_t total = 0;
};

Layout layout_of(const ArchDescriptor& arch) {
  Layout L;
  std::size_t off = 0;
  int ch = arch.in_channels;
  Index h = arch.in_h, w = arch.in_w;
  for (const ConvSpec& cs : arch.convs) {
    ConvShape s;
    s.in_ch = ch;
    s.out_ch = cs.out_channels;
    s.stride = cs.stride;
    s.in_h = h;
    s.in_w = w;
    s.out_h = conv_out(h, cs.stride);
    s.out_w = conv_out(w, cs.stride);
    s.w_off = off;
    off += s.weights();
    s.b_off = off;
    off += s.out_ch;
    L.convs.push_back(s);
    ch = s.out_ch;
    h = s.out_h;
    w = s.out_w;
  }
  L.feat_ch = ch;
  L.feat_h = h;
  L.feat_w = w;
  const std::size_t k = arch.num_classes;
  if (arch.task == Task::classifier) {
    L.head_w = off;
    off += k * ch;
    L.head_b = off;
    off += k;
  } else {
    L.head_w = off;
    off += k * ch;
    L.head_wg = off;
    off += k * ch;
    L.head_b = off;
    off += k;
  }
  L.total = off;
  return L;
}

/// Patch matrix for a 3x3/pad-1 convolution: row ci*9+kr*3+kc, column
/// p = r_out*out_w + c_out. Out-of-bounds taps read zero.
MatrixXd im2col(const std::vector<Planed>& in, const ConvShape& s) {
  const Index n = s.out_h * s.out_w;
  MatrixXd cols(static_cast<Index>(s.in_ch) * kKernel * kKernel, n);
  for (Index p = 0; p < n; ++p) {
    const Index r0 = (p / s.out_w) * s.stride - kPad;
    const Index c0 = (p % s.out_w) * s.stride - kPad;
    for (int ci = 0; ci < s.in_ch; ++ci) {
      const Planed& plane = in[ci];
      for (int kr = 0; kr < kKernel; ++kr) {
        const Index r = r0 + kr;
        const bool row_ok = r >= 0 && r < s.in_h;
        for (int kc = 0; kc < kKernel; ++kc) {
          const Index c = c0 + kc;
          const double v =
              (row_ok && c >= 0 && c < s.in_w) ? plane(r, c) : 0.0;
          cols(ci * 9 + kr * 3 + kc, p) = v;
        }
      }
    }
  }
  return cols;
}

void col2im_add(std::vector<Planed>& din, const MatrixXd& dcols,
                const ConvShape& s) {
  for (Index p = 0; p < s.out_h * s.out_w; ++p) {
    const Index r0 = (p / s.out_w) * s.stride - kPad;
    const Index c0 = (p % s.out_w) * s.stride - kPad;
    for (int ci = 0; ci < s.in_ch; ++ci) {
      Planed& plane = din[ci];
      for (int kr = 0; kr < kKernel; ++kr) {
        const Index r = r0 + kr;
        if (r < 0 || r >= s.in_h) continue;
        for (int kc = 0; kc < kKernel; ++kc) {
          const Index c = c0 + kc;
          if (c < 0 || c >= s.in_w) continue;
          plane(r, c) += dcols(ci * 9 + kr * 3 + kc, p);
        }
      }
    }
  }
}

std::vector<Planed> image_planes(const Image& image) {
  std::vector<Planed> planes(3);
  for (int k = 0; k < 3; ++k) planes[k] = image.ch[k].cast<double>();
  return planes;
}

/// Conv + tanh. Output planes indexed by out channel.
std::vector<Planed> conv_forward(const ParamVec& params, const ConvShape& s,
                                 const std::vector<Planed>& in) {
  const MatrixXd cols = im2col(in, s);
  Eigen::Map<const RowMat> W(params.values.data() + s.w_off, s.out_ch,
                             static_cast<Index>(s.in_ch) * 9);
  Eigen::Map<const VectorXd> b(params.values.data() + s.b_off, s.out_ch);
  MatrixXd z = W * cols;
  z.colwise() += b;
  std::vector<Planed> out(s.out_ch);
  for (int k = 0; k < s.out_ch; ++k) {
    Planed plane(s.out_h, s.out_w);
    for (Index p = 0; p < s.out_h * s.out_w; ++p)
      plane(p / s.out_w, p % s.out_w) = std::tanh(z(k, p));
    out[k] = std::move(plane);
  }
  return out;
}

/// Gradient w.r.t. the conv input given the gradient at its tanh output.
std::vector<Planed> conv_backward(const ParamVec& params, const ConvShape& s,
                                  const std::vector<Planed>& in,
                                  const std::vector<Planed>& out,
                                  const std::vector<Planed>& dout,
                                  VectorXd& grad) {
  const Index n = s.out_h * s.out_w;
  MatrixXd dz(s.out_ch, n);
  for (int k = 0; k < s.out_ch; ++k)
    for (Index p = 0; p < n; ++p) {
      const double a = out[k](p / s.out_w, p % s.out_w);
      dz(k, p) = dout[k](p / s.out_w, p % s.out_w) * (1.0 - a * a);
    }
  const MatrixXd cols = im2col(in, s);
  Eigen::Map<RowMat> dW(grad.data() + s.w_off, s.out_ch,
                        static_cast<Index>(s.in_ch) * 9);
  Eigen::Map<VectorXd> db(grad.data() + s.b_off, s.out_ch);
  dW += dz * cols.transpose();
  db += dz.rowwise().sum();

  Eigen::Map<const RowMat> W(params.values.data() + s.w_off, s.out_ch,
                             static_cast<Index>(s.in_ch) * 9);
  const MatrixXd dcols = W.transpose() * dz;
  std::vector<Planed> din(s.in_ch);
  for (int ci = 0; ci < s.in_ch; ++ci) din[ci] = Planed::Zero(s.in_h, s.in_w);
  col2im_add(din, dcols, s);
  return din;
}

/// Channelwise max over the plane; first attaining position in row-major
/// scan order, so tie handling is deterministic.
void global_max(const std::vector<Planed>& feats, VectorXd& pooled,
                std::vector<std::pair<Index, Index>>& argmax) {
  const int ch = static_cast<int>(feats.size());
  pooled.resize(ch);
  argmax.assign(ch, {0, 0});
  for (int k = 0; k < ch; ++k) {
    double best = -std::numeric_limits<double>::infinity();
    for (Index r = 0; r < feats[k].rows(); ++r)
      for (Index c = 0; c < feats[k].cols(); ++c)
        if (feats[k](r, c) > best) {
          best = feats[k](r, c);
          argmax[k] = {r, c};
        }
    pooled[k] = best;
  }
}

void run_trunk(const ParamVec& params, const Layout& L, const Image& image,
               ForwardCache& cache) {
  if (image.rows() != params.arch.in_h || image.cols() != params.arch.in_w)
    throw std::invalid_argument("image shape does not match architecture");
  cache.acts.clear();
  cache.acts.push_back(image_planes(image));
  for (const ConvShape& s : L.convs)
    cache.acts.push_back(conv_forward(params, s, cache.acts.back()));
}

VectorXd trunk_backward(const ParamVec& params, const Layout& L,
                        const ForwardCache& cache, std::vector<Planed> dfeat) {
  VectorXd grad = VectorXd::Zero(static_cast<Index>(L.total));
  for (int l = static_cast<int>(L.convs.size()) - 1; l >= 0; --l)
    dfeat = conv_backward(params, L.convs[l], cache.acts[l], cache.acts[l + 1],
                          dfeat, grad);
  return grad;
}

double sigmoid(double z) {
  return z >= 0.0 ? 1.0 / (1.0 + std::exp(-z))
                  : std::exp(z) / (1.0 + std::exp(z));
}

double logsumexp(const VectorXd& z) {
  const double m = z.maxCoeff();
  double s = 0;
  for (Index i = 0; i < z.size(); ++i) s += std::exp(z[i] - m);
  return m + std::log(s);
}

}  // namespace

void validate(const ArchDescriptor& arch) {
  if (arch.convs.empty())
    throw std::invalid_argument("arch.channels: at least one conv layer required");
  if (arch.num_classes < 2)
    throw std::invalid_argument("arch: need at least 2 classes");
  if (arch.in_h < 4 || arch.in_w < 4)
    throw std::invalid_argument("arch: input smaller than 4x4");
  if (arch.in_channels < 1)
    throw std::invalid_argument("arch: input channels must be >= 1");
  for (const ConvSpec& c : arch.convs) {
    if (c.out_channels < 1)
      throw std::invalid_argument("arch.channels: must be >= 1");
    if (c.stride < 1)
      throw std::invalid_argument("arch.strides: must be >= 1");
    if (arch.task == Task::segmenter && c.stride != 1)
      throw std::invalid_argument("arch.strides: segmenter layers must use stride 1");
  }
}

std::size_t param_count(const ArchDescriptor& arch) {
  return layout_of(arch).total;
}

ParamVec init_params(const ArchDescriptor& arch, std::uint64_t seed) {
  validate(arch);
  const Layout L = layout_of(arch);
  ParamVec p;
  p.arch = arch;
  p.init_seed = seed;
  p.values = VectorXd::Zero(static_cast<Index>(L.total));
  Rng rng(mix_seed(seed, "init"));
  auto fill = [&](std::size_t off, std::size_t n, double fan_in) {
    const double bound = 1.0 / std::sqrt(fan_in);
    for (std::size_t i = 0; i < n; ++i)
      p.values[static_cast<Index>(off + i)] = rng.uniform(-bound, bound);
  };
  for (const ConvShape& s : L.convs)
    fill(s.w_off, s.weights(), static_cast<double>(s.in_ch) * 9);
  const std::size_t k = arch.num_classes;
  if (arch.task == Task::classifier) {
    fill(L.head_w, k * L.feat_ch, L.feat_ch);
  } else {
    fill(L.head_w, k * L.feat_ch, 2.0 * L.feat_ch);
    fill(L.head_wg, k * L.feat_ch, 2.0 * L.feat_ch);
  }
  return p;
}

Eigen::VectorXd classifier_apply(const ParamVec& params, const Image& image,
                                 ForwardCache* cache) {
  if (params.arch.task != Task::classifier)
    throw std::invalid_argument("classifier_apply on a segmenter");
  const Layout L = layout_of(params.arch);
  ForwardCache local;
  ForwardCache& fc = cache ? *cache : local;
  run_trunk(params, L, image, fc);
  global_max(fc.acts.back(), fc.pooled, fc.pool_argmax);

  const Index k = params.arch.num_classes;
  Eigen::Map<const RowMat> W(params.values.data() + L.head_w, k, L.feat_ch);
  Eigen::Map<const VectorXd> b(params.values.data() + L.head_b, k);
  return W * fc.pooled + b;
}

std::vector<Planed> segmenter_apply(const ParamVec& params, const Image& image,
                                    ForwardCache* cache) {
  if (params.arch.task != Task::segmenter)
    throw std::invalid_argument("segmenter_apply on a classifier");
  const Layout L = layout_of(params.arch);
  ForwardCache local;
  ForwardCache& fc = cache ? *cache : local;
  run_trunk(params, L, image, fc);
  const std::vector<Planed>& feats = fc.acts.back();
  fc.gctx.resize(L.feat_ch);
  for (int f = 0; f < L.feat_ch; ++f) fc.gctx[f] = feats[f].mean();

  const Index k = params.arch.num_classes;
  Eigen::Map<const RowMat> Wf(params.values.data() + L.head_w, k, L.feat_ch);
  Eigen::Map<const RowMat> Wg(params.values.data() + L.head_wg, k, L.feat_ch);
  Eigen::Map<const VectorXd> b(params.values.data() + L.head_b, k);
  const VectorXd ctx = Wg * fc.gctx + b;

  std::vector<Planed> logits(k);
  for (Index c = 0; c < k; ++c) {
    Planed plane = Planed::Constant(L.feat_h, L.feat_w, ctx[c]);
    for (int f = 0; f < L.feat_ch; ++f) plane += Wf(c, f) * feats[f];
    logits[c] = std::move(plane);
  }
  return logits;
}

Eigen::VectorXd classifier_backward(const ParamVec& params,
                                    const ForwardCache& cache,
                                    const Eigen::VectorXd& dlogits) {
  const Layout L = layout_of(params.arch);
  const Index k = params.arch.num_classes;
  if (dlogits.size() != k)
    throw std::invalid_argument("dlogits size does not match class count");
  Eigen::Map<const RowMat> W(params.values.data() + L.head_w, k, L.feat_ch);

  VectorXd head_grad = VectorXd::Zero(static_cast<Index>(L.total));
  Eigen::Map<RowMat> dW(head_grad.data() + L.head_w, k, L.feat_ch);
  Eigen::Map<VectorXd> db(head_grad.data() + L.head_b, k);
  dW = dlogits * cache.pooled.transpose();
  db = dlogits;

  const VectorXd dpooled = W.transpose() * dlogits;
  std::vector<Planed> dfeat(L.feat_ch);
  for (int f = 0; f < L.feat_ch; ++f) {
    dfeat[f] = Planed::Zero(L.feat_h, L.feat_w);
    const auto [r, c] = cache.pool_argmax[f];
    dfeat[f](r, c) = dpooled[f];
  }
  return trunk_backward(params, L, cache, std::move(dfeat)) + head_grad;
}

Eigen::VectorXd segmenter_backward(const ParamVec& params,
                                   const ForwardCache& cache,
                                   const std::vector<Planed>& dlogits) {
  const Layout L = layout_of(params.arch);
  const Index k = params.arch.num_classes;
  if (static_cast<Index>(dlogits.size()) != k)
    throw std::invalid_argument("dlogits plane count does not match class count");
  const std::vector<Planed>& feats = cache.acts.back();
  Eigen::Map<const RowMat> Wf(params.values.data() + L.head_w, k, L.feat_ch);
  Eigen::Map<const RowMat> Wg(params.values.data() + L.head_wg, k, L.feat_ch);

  VectorXd head_grad = VectorXd::Zero(static_cast<Index>(L.total));
  Eigen::Map<RowMat> dWf(head_grad.data() + L.head_w, k, L.feat_ch);
  Eigen::Map<RowMat> dWg(head_grad.data() + L.head_wg, k, L.feat_ch);
  Eigen::Map<VectorXd> db(head_grad.data() + L.head_b, k);

  VectorXd dsum(k);  // total upstream gradient per class plane
  for (Index c = 0; c < k; ++c) dsum[c] = dlogits[c].sum();
  db = dsum;
  for (Index c = 0; c < k; ++c)
    for (int f = 0; f < L.feat_ch; ++f) {
      dWf(c, f) = (dlogits[c] * feats[f]).sum();
      dWg(c, f) = dsum[c] * cache.gctx[f];
    }

  std::vector<Planed> dfeat(L.feat_ch);
  const double inv_area = 1.0 / static_cast<double>(L.feat_h * L.feat_w);
  for (int f = 0; f < L.feat_ch; ++f) {
    Planed plane = Planed::Zero(L.feat_h, L.feat_w);
    for (Index c = 0; c < k; ++c) plane += Wf(c, f) * dlogits[c];
    // average-pooled context branch spreads its gradient over every pixel
    double dg = 0;
    for (Index c = 0; c < k; ++c) dg += Wg(c, f) * dsum[c];
    plane += dg * inv_area;
    dfeat[f] = std::move(plane);
  }
  return trunk_backward(params, L, cache, std::move(dfeat)) + head_grad;
}

// ---------------------------------------------------------------------------

LogitLoss multilabel_bce(const Eigen::VectorXd& logits,
                         std::span<const int> positives) {
  const Index k = logits.size();
  VectorXd y = VectorXd::Zero(k);
  for (int c : positives) {
    if (c < 0 || c >= k)
      throw std::invalid_argument("label outside class range");
    y[c] = 1.0;
  }
  LogitLoss out;
  out.dlogits = VectorXd::Zero(k);
  for (Index c = 0; c < k; ++c) {
    const double z = logits[c];
    out.loss += std::max(z, 0.0) - z * y[c] + std::log1p(std::exp(-std::abs(z)));
    out.dlogits[c] = sigmoid(z) - y[c];
  }
  return out;
}

HingeLoss context_hinge(const std::map<int, Eigen::VectorXd>& edit_logits,
                        std::span<const int> present) {
  HingeLoss out;
  for (const auto& [removed, logits] : edit_logits)
    out.dlogits.emplace(removed, VectorXd::Zero(logits.size()));

  for (int ci : present) {
    const auto self_it = edit_logits.find(ci);
    if (self_it == edit_logits.end()) continue;  // class has no own edit
    const double self = self_it->second[ci];
    bool any = false;
    double min_other = 0;
    int arg_min = -1;
    for (const auto& [removed, logits] : edit_logits) {
      if (removed == ci) continue;
      const double s = logits[ci];
      if (!any || s < min_other) {  // strict <: first attaining min wins
        any = true;
        min_other = s;
        arg_min = removed;
      }
    }
    if (!any) continue;  // empty constraint set contributes 0
    const double term = self - min_other;
    if (term > 0.0) {
      out.loss += term;
      out.dlogits[ci][ci] += 1.0;
      out.dlogits[arg_min][ci] -= 1.0;
    }
  }
  return out;
}

SegLogitLoss seg_loss(const std::vector<Planed>& logits,
                      const LabelPlane& labels, SegLossMode mode,
                      int removed_class, const MaskPlane* edit_mask,
                      double lambda_neg,
                      std::map<int, std::pair<double, long>>* per_class_ce) {
  const Index k = static_cast<Index>(logits.size());
  if (k == 0) throw std::invalid_argument("seg_loss: no logit planes");
  const Index h = logits[0].rows(), w = logits[0].cols();
  if (labels.rows() != h || labels.cols() != w)
    throw std::invalid_argument("seg_loss: label shape mismatch");
  if (mode == SegLossMode::negative) {
    if (removed_class < 0 || removed_class >= k || edit_mask == nullptr)
      throw std::invalid_argument(
          "seg_loss: negative mode requires removed_class and edit_mask");
    if (edit_mask->rows() != h || edit_mask->cols() != w)
      throw std::invalid_argument("seg_loss: edit mask shape mismatch");
  }

  SegLogitLoss out;
  out.dlogits.resize(k);
  for (Index c = 0; c < k; ++c) out.dlogits[c] = Planed::Zero(h, w);

  // first pass: count contributing pixels so gradients carry the final
  // normalization directly
  long ce_count = 0;
  for (Index r = 0; r < h; ++r)
    for (Index c = 0; c < w; ++c) {
      const std::uint16_t y = labels(r, c);
      if (y == kIgnoreLabel) {
        if (mode == SegLossMode::plain)
          throw std::invalid_argument("seg_loss: ignore label in plain mode");
        continue;
      }
      if (y >= k) throw std::invalid_argument("seg_loss: label outside class range");
      ++ce_count;
    }
  long neg_count = 0;
  if (mode == SegLossMode::negative)
    neg_count = (*edit_mask).count();

  VectorXd z(k);
  double ce_sum = 0, neg_sum = 0;
  for (Index r = 0; r < h; ++r) {
    for (Index c = 0; c < w; ++c) {
      const std::uint16_t y = labels(r, c);
      const bool in_mask =
          mode == SegLossMode::negative && (*edit_mask)(r, c);
      if (y == kIgnoreLabel && !in_mask) continue;
      for (Index i = 0; i < k; ++i) z[i] = logits[i](r, c);
      const double lse = logsumexp(z);

      if (y != kIgnoreLabel) {
        const double pixel_ce = lse - z[y];
        ce_sum += pixel_ce;
        if (per_class_ce) {
          auto& acc = (*per_class_ce)[y];
          acc.first += pixel_ce;
          acc.second += 1;
        }
        for (Index i = 0; i < k; ++i) {
          const double soft = std::exp(z[i] - lse);
          out.dlogits[i](r, c) += (soft - (i == y ? 1.0 : 0.0)) / ce_count;
        }
      }

      if (in_mask) {
        // -log(1 - p(removed)) = lse(all) - lse(all but removed)
        double m = -std::numeric_limits<double>::infinity();
        for (Index i = 0; i < k; ++i)
          if (i != removed_class) m = std::max(m, z[i]);
        double s = 0;
        for (Index i = 0; i < k; ++i)
          if (i != removed_class) s += std::exp(z[i] - m);
        const double lse_excl = m + std::log(s);
        neg_sum += lse - lse_excl;
        const double scale = lambda_neg / neg_count;
        for (Index i = 0; i < k; ++i) {
          const double soft_all = std::exp(z[i] - lse);
          const double soft_excl =
              i == removed_class ? 0.0 : std::exp(z[i] - lse_excl);
          out.dlogits[i](r, c) += scale * (soft_all - soft_excl);
        }
      }
    }
  }
  out.ce = ce_count > 0 ? ce_sum / ce_count : 0.0;
  out.neg = neg_count > 0 ? lambda_neg * neg_sum / neg_count : 0.0;
  return out;
}

// ---------------------------------------------------------------------------

LossBreakdown& LossBreakdown::operator+=(const LossBreakdown& o) {
  bce += o.bce;
  hinge += o.hinge;
  seg_ce += o.seg_ce;
  seg_neg += o.seg_neg;
  return *this;
}

void LossBreakdown::scale(double s) {
  bce *= s;
  hinge *= s;
  seg_ce *= s;
  seg_neg *= s;
}

LossBundle classifier_bce_bundle(const ParamVec& params, const Image& image,
                                 std::span<const int> positives) {
  ForwardCache cache;
  const VectorXd logits = classifier_apply(params, image, &cache);
  const LogitLoss ll = multilabel_bce(logits, positives);
  LossBundle out;
  out.loss = ll.loss;
  out.parts.bce = ll.loss;
  out.grad = classifier_backward(params, cache, ll.dlogits);
  return out;
}

LossBundle classifier_hinge_bundle(const ParamVec& params,
                                   const std::map<int, Image>& edited_images,
                                   std::span<const int> present) {
  std::map<int, ForwardCache> caches;
  std::map<int, VectorXd> logits;
  for (const auto& [removed, image] : edited_images)
    logits.emplace(removed,
                   classifier_apply(params, image, &caches[removed]));
  const HingeLoss hl = context_hinge(logits, present);

  LossBundle out;
  out.loss = hl.loss;
  out.parts.hinge = hl.loss;
  out.grad = VectorXd::Zero(static_cast<Index>(param_count(params.arch)));
  for (const auto& [removed, dlogits] : hl.dlogits) {
    if (dlogits.isZero(0.0)) continue;
    out.grad += classifier_backward(params, caches.at(removed), dlogits);
  }
  return out;
}

LossBundle segmenter_bundle(const ParamVec& params, const Image& image,
                            const LabelPlane& labels, SegLossMode mode,
                            int removed_class, const MaskPlane* edit_mask,
                            double lambda_neg,
                            std::map<int, std::pair<double, long>>* per_class_ce) {
  ForwardCache cache;
  const std::vector<Planed> logits = segmenter_apply(params, image, &cache);
  const SegLogitLoss sl = seg_loss(logits, labels, mode, removed_class,
                                   edit_mask, lambda_neg, per_class_ce);
  LossBundle out;
  out.loss = sl.ce + sl.neg;
  out.parts.seg_ce = sl.ce;
  out.parts.seg_neg = sl.neg;
  out.grad = segmenter_backward(params, cache, sl.dlogits);
  return out;
}

void sgd_step(ParamVec& params, Eigen::VectorXd& velocity,
              const Eigen::VectorXd& grad, double lr, double momentum) {
  if (lr <= 0.0) throw std::invalid_argument("sgd_step: lr must be > 0");
  if (grad.size() != params.values.size() || velocity.size() != params.values.size())
    throw std::invalid_argument("sgd_step: size mismatch");
  if (!grad.allFinite())
    throw std::runtime_error("sgd_step: non-finite gradient (training diverged)");
  velocity = momentum * velocity + grad;
  params.values -= lr * velocity;
}

}  // namespace contextprobe
