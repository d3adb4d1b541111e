#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include <json.hpp>

#include "ctsim/container_io.hpp"
#include "ctsim/errors.hpp"
#include "ctsim/metrics.hpp"
#include "ctsim/rng.hpp"
#include "ctsim/version.hpp"

// Small convolutional triage classifier:
//   conv3x3(1->8) -> ReLU -> maxpool2 -> conv3x3(8->16) -> ReLU -> maxpool2
//   -> global average pool -> linear -> logit.
// Valid convolutions, floor pooling. The GAP head makes class activation
// maps a weighted sum of the final feature maps.

namespace ctsim {

struct ParamLayout {
  static constexpr int kConv1Out = 8;
  static constexpr int kConv2Out = 16;
  static constexpr int kKernel = 3;

  static constexpr int conv1_w = 0;
  static constexpr int conv1_w_len = kConv1Out * 1 * kKernel * kKernel;  // 72
  static constexpr int conv1_b = conv1_w + conv1_w_len;                  // 72
  static constexpr int conv1_b_len = kConv1Out;
  static constexpr int conv2_w = conv1_b + conv1_b_len;                  // 80
  static constexpr int conv2_w_len = kConv2Out * kConv1Out * kKernel * kKernel;
  static constexpr int conv2_b = conv2_w + conv2_w_len;                  // 1232
  static constexpr int conv2_b_len = kConv2Out;
  static constexpr int head_w = conv2_b + conv2_b_len;                   // 1248
  static constexpr int head_w_len = kConv2Out;
  static constexpr int head_b = head_w + head_w_len;                     // 1264
  static constexpr int head_b_len = 1;
  static constexpr int total = head_b + head_b_len;                      // 1265

  static nlohmann::json descriptor() {
    return nlohmann::json::array(
        {{{"name", "conv1.weight"}, {"shape", {kConv1Out, 1, kKernel, kKernel}}, {"offset", conv1_w}},
         {{"name", "conv1.bias"}, {"shape", {kConv1Out}}, {"offset", conv1_b}},
         {{"name", "conv2.weight"}, {"shape", {kConv2Out, kConv1Out, kKernel, kKernel}}, {"offset", conv2_w}},
         {{"name", "conv2.bias"}, {"shape", {kConv2Out}}, {"offset", conv2_b}},
         {{"name", "head.weight"}, {"shape", {kConv2Out}}, {"offset", head_w}},
         {{"name", "head.bias"}, {"shape", {1}}, {"offset", head_b}}});
  }
};

template <typename T>
struct NetParams {
  std::vector<T> v = std::vector<T>(ParamLayout::total, T(0));
};

using ModelParams = NetParams<float>;

// Spatial sizes produced by each stage for a given input side length.
struct NetDims {
  int input = 0, c1 = 0, p1 = 0, c2 = 0, p2 = 0;

  static NetDims for_input(int n) {
    if (n < 16 || n % 2 != 0)
      throw std::domain_error("triage: input side must be even and >= 16");
    NetDims d;
    d.input = n;
    d.c1 = n - 2;
    d.p1 = d.c1 / 2;
    d.c2 = d.p1 - 2;
    d.p2 = d.c2 / 2;
    return d;
  }
};

// He fan-in initialization: weights ~ N(0, 2/fan_in), zero biases.
template <typename T>
NetParams<T> init_params_as(uint64_t seed) {
  NetParams<T> p;
  const uint64_t key = rng::hash2(seed, rng::fnv1a("he-init"));
  auto fill = [&](int off, int len, double fan_in) {
    const double std_dev = std::sqrt(2.0 / fan_in);
    for (int i = 0; i < len; ++i)
      p.v[off + i] = static_cast<T>(std_dev * rng::normal(rng::hash2(key, off + i)));
  };
  fill(ParamLayout::conv1_w, ParamLayout::conv1_w_len, 9.0);
  fill(ParamLayout::conv2_w, ParamLayout::conv2_w_len, 9.0 * ParamLayout::kConv1Out);
  fill(ParamLayout::head_w, ParamLayout::head_w_len, ParamLayout::kConv2Out);
  return p;
}

inline ModelParams init_params(uint64_t seed) { return init_params_as<float>(seed); }

namespace detail {

template <typename T>
void check_finite_input(const T* x, size_t n) {
  double acc = 0.0;
  for (size_t i = 0; i < n; ++i) acc += std::abs(static_cast<double>(x[i]));
  if (!std::isfinite(acc))
    throw std::domain_error("triage: non-finite input image");
}

// Activation buffers reused across calls on the same thread.
template <typename T>
struct Workspace {
  std::vector<T> a1, p1, a2, p2;        // post-ReLU / post-pool activations
  std::vector<int> arg1, arg2;          // flat argmax indices for unpooling
  std::vector<T> da1, dp1, da2, dp2;    // gradients
  T gap[ParamLayout::kConv2Out];
  T logit;

  void resize(const NetDims& d) {
    a1.resize(static_cast<size_t>(ParamLayout::kConv1Out) * d.c1 * d.c1);
    p1.resize(static_cast<size_t>(ParamLayout::kConv1Out) * d.p1 * d.p1);
    a2.resize(static_cast<size_t>(ParamLayout::kConv2Out) * d.c2 * d.c2);
    p2.resize(static_cast<size_t>(ParamLayout::kConv2Out) * d.p2 * d.p2);
    arg1.resize(p1.size());
    arg2.resize(p2.size());
  }
  void resize_backward() {
    da1.assign(a1.size(), T(0));
    dp1.assign(p1.size(), T(0));
    da2.assign(a2.size(), T(0));
    dp2.assign(p2.size(), T(0));
  }
};

template <typename T>
Workspace<T>& workspace() {
  thread_local Workspace<T> ws;
  return ws;
}

template <typename T>
void conv_relu(const T* w, const T* b, const T* in, int in_side, int in_ch,
               int out_ch, T* out) {
  const int os = in_side - 2;
  std::vector<T> acc(os);
  for (int co = 0; co < out_ch; ++co) {
    const T* wc = w + static_cast<size_t>(co) * in_ch * 9;
    for (int i = 0; i < os; ++i) {
      for (int j = 0; j < os; ++j) acc[j] = b[co];
      for (int ci = 0; ci < in_ch; ++ci) {
        const T* img = in + static_cast<size_t>(ci) * in_side * in_side;
        const T* wk = wc + ci * 9;
        for (int di = 0; di < 3; ++di) {
          const T* row = img + static_cast<size_t>(i + di) * in_side;
          const T w0 = wk[di * 3 + 0], w1 = wk[di * 3 + 1], w2 = wk[di * 3 + 2];
          for (int j = 0; j < os; ++j)
            acc[j] += w0 * row[j] + w1 * row[j + 1] + w2 * row[j + 2];
        }
      }
      T* orow = out + (static_cast<size_t>(co) * os + i) * os;
      for (int j = 0; j < os; ++j) orow[j] = acc[j] > T(0) ? acc[j] : T(0);
    }
  }
}

template <typename T>
void maxpool2(const T* in, int in_side, int ch, T* out, int* argmax) {
  const int os = in_side / 2;
  for (int c = 0; c < ch; ++c) {
    const T* img = in + static_cast<size_t>(c) * in_side * in_side;
    T* o = out + static_cast<size_t>(c) * os * os;
    int* am = argmax + static_cast<size_t>(c) * os * os;
    for (int i = 0; i < os; ++i) {
      for (int j = 0; j < os; ++j) {
        const int r0 = 2 * i, c0 = 2 * j;
        int best = r0 * in_side + c0;
        T bv = img[best];
        const int cand[3] = {r0 * in_side + c0 + 1, (r0 + 1) * in_side + c0,
                             (r0 + 1) * in_side + c0 + 1};
        for (int k = 0; k < 3; ++k)
          if (img[cand[k]] > bv) { bv = img[cand[k]]; best = cand[k]; }
        o[i * os + j] = bv;
        am[i * os + j] = c * in_side * in_side + best;
      }
    }
  }
}

// Runs the full forward pass into the workspace; input is a single-channel
// image of side d.input.
template <typename T>
void forward_into(const NetParams<T>& params, const T* x, const NetDims& d,
                  Workspace<T>& ws) {
  const T* pv = params.v.data();
  ws.resize(d);
  conv_relu(pv + ParamLayout::conv1_w, pv + ParamLayout::conv1_b, x, d.input, 1,
            ParamLayout::kConv1Out, ws.a1.data());
  maxpool2(ws.a1.data(), d.c1, ParamLayout::kConv1Out, ws.p1.data(), ws.arg1.data());
  conv_relu(pv + ParamLayout::conv2_w, pv + ParamLayout::conv2_b, ws.p1.data(),
            d.p1, ParamLayout::kConv1Out, ParamLayout::kConv2Out, ws.a2.data());
  maxpool2(ws.a2.data(), d.c2, ParamLayout::kConv2Out, ws.p2.data(), ws.arg2.data());
  const int area = d.p2 * d.p2;
  T logit = pv[ParamLayout::head_b];
  for (int k = 0; k < ParamLayout::kConv2Out; ++k) {
    T s = T(0);
    const T* m = ws.p2.data() + static_cast<size_t>(k) * area;
    for (int i = 0; i < area; ++i) s += m[i];
    ws.gap[k] = s / static_cast<T>(area);
    logit += pv[ParamLayout::head_w + k] * ws.gap[k];
  }
  ws.logit = logit;
}

template <typename T>
void backward_into(const NetParams<T>& params, const T* x, const NetDims& d,
                   T dlogit, Workspace<T>& ws, NetParams<T>& grad) {
  const T* pv = params.v.data();
  T* gv = grad.v.data();
  ws.resize_backward();

  // Head and GAP.
  gv[ParamLayout::head_b] += dlogit;
  const int area2 = d.p2 * d.p2;
  for (int k = 0; k < ParamLayout::kConv2Out; ++k) {
    gv[ParamLayout::head_w + k] += dlogit * ws.gap[k];
    const T dgap = dlogit * pv[ParamLayout::head_w + k] / static_cast<T>(area2);
    T* dm = ws.dp2.data() + static_cast<size_t>(k) * area2;
    for (int i = 0; i < area2; ++i) dm[i] = dgap;
  }
  // Unpool 2 (argmax scatter) + ReLU mask.
  for (size_t i = 0; i < ws.dp2.size(); ++i) ws.da2[ws.arg2[i]] += ws.dp2[i];
  for (size_t i = 0; i < ws.da2.size(); ++i)
    if (!(ws.a2[i] > T(0))) ws.da2[i] = T(0);

  // conv2 backward: weight/bias grads and input gradient.
  {
    const int os = d.c2, is = d.p1;
    for (int co = 0; co < ParamLayout::kConv2Out; ++co) {
      const T* dout = ws.da2.data() + static_cast<size_t>(co) * os * os;
      T bsum = T(0);
      for (int i = 0; i < os * os; ++i) bsum += dout[i];
      gv[ParamLayout::conv2_b + co] += bsum;
      for (int ci = 0; ci < ParamLayout::kConv1Out; ++ci) {
        const T* in = ws.p1.data() + static_cast<size_t>(ci) * is * is;
        T* din = ws.dp1.data() + static_cast<size_t>(ci) * is * is;
        for (int di = 0; di < 3; ++di) {
          for (int dj = 0; dj < 3; ++dj) {
            const int widx = ParamLayout::conv2_w + ((co * ParamLayout::kConv1Out + ci) * 3 + di) * 3 + dj;
            const T w = pv[widx];
            T wacc = T(0);
            for (int i = 0; i < os; ++i) {
              const T* drow = dout + static_cast<size_t>(i) * os;
              const T* irow = in + static_cast<size_t>(i + di) * is + dj;
              T* dirow = din + static_cast<size_t>(i + di) * is + dj;
              for (int j = 0; j < os; ++j) {
                wacc += drow[j] * irow[j];
                dirow[j] += drow[j] * w;
              }
            }
            gv[widx] += wacc;
          }
        }
      }
    }
  }
  // Unpool 1 + ReLU mask.
  for (size_t i = 0; i < ws.dp1.size(); ++i) ws.da1[ws.arg1[i]] += ws.dp1[i];
  for (size_t i = 0; i < ws.da1.size(); ++i)
    if (!(ws.a1[i] > T(0))) ws.da1[i] = T(0);

  // conv1 backward: weight/bias grads only (input gradient unused).
  {
    const int os = d.c1, is = d.input;
    for (int co = 0; co < ParamLayout::kConv1Out; ++co) {
      const T* dout = ws.da1.data() + static_cast<size_t>(co) * os * os;
      T bsum = T(0);
      for (int i = 0; i < os * os; ++i) bsum += dout[i];
      gv[ParamLayout::conv1_b + co] += bsum;
      for (int di = 0; di < 3; ++di) {
        for (int dj = 0; dj < 3; ++dj) {
          T wacc = T(0);
          for (int i = 0; i < os; ++i) {
            const T* drow = dout + static_cast<size_t>(i) * os;
            const T* irow = x + static_cast<size_t>(i + di) * is + dj;
            for (int j = 0; j < os; ++j) wacc += drow[j] * irow[j];
          }
          gv[ParamLayout::conv1_w + (co * 3 + di) * 3 + dj] += wacc;
        }
      }
    }
  }
}

template <typename T>
T stable_sigmoid(T logit) {
  if (logit >= T(0)) return T(1) / (T(1) + std::exp(-logit));
  const T e = std::exp(logit);
  return e / (T(1) + e);
}

// log(1 + exp(-m)) without overflow.
template <typename T>
T softplus_neg(T m) {
  if (m > T(0)) return std::log1p(std::exp(-m));
  return -m + std::log1p(std::exp(m));
}

}  // namespace detail

template <typename T>
struct ForwardResult {
  T logit = T(0);
  int feature_side = 0;  // side length of each final feature map
  std::vector<T> features;  // kConv2Out maps feeding the GAP head
};

// Forward pass returning the logit and the feature stack the GAP head
// averages (the maps a class activation map is built from).
template <typename T>
ForwardResult<T> forward(const NetParams<T>& params, const T* image, int n) {
  const NetDims d = NetDims::for_input(n);
  detail::check_finite_input(image, static_cast<size_t>(n) * n);
  auto& ws = detail::workspace<T>();
  detail::forward_into(params, image, d, ws);
  ForwardResult<T> r;
  r.logit = ws.logit;
  r.feature_side = d.p2;
  r.features = ws.p2;
  return r;
}

template <typename T>
ForwardResult<T> forward(const NetParams<T>& params, const std::vector<T>& image,
                         int n) {
  if (image.size() != static_cast<size_t>(n) * n)
    throw std::domain_error("triage: image buffer size mismatch");
  return forward(params, image.data(), n);
}

// Binary cross-entropy with logits and its gradient in parameter layout
// order. label must be 0 or 1.
template <typename T>
std::pair<T, NetParams<T>> loss_and_grad(const NetParams<T>& params,
                                         const T* image, int n, int label) {
  if (label != 0 && label != 1)
    throw std::domain_error("triage: label must be 0 or 1");
  const NetDims d = NetDims::for_input(n);
  detail::check_finite_input(image, static_cast<size_t>(n) * n);
  auto& ws = detail::workspace<T>();
  detail::forward_into(params, image, d, ws);
  const T margin = (label == 1 ? ws.logit : -ws.logit);
  const T loss = detail::softplus_neg(margin);
  const T dlogit = detail::stable_sigmoid(ws.logit) - static_cast<T>(label);
  NetParams<T> grad;
  detail::backward_into(params, image, d, dlogit, ws, grad);
  return {loss, std::move(grad)};
}

template <typename T>
std::pair<T, NetParams<T>> loss_and_grad(const NetParams<T>& params,
                                         const std::vector<T>& image, int n,
                                         int label) {
  if (image.size() != static_cast<size_t>(n) * n)
    throw std::domain_error("triage: image buffer size mismatch");
  return loss_and_grad(params, image.data(), n, label);
}

// Abnormality probability; thresholding at 0.5 gives the binary prediction.
inline double predict(const ModelParams& params, const std::vector<float>& image,
                      int n) {
  const auto r = forward(params, image, n);
  return detail::stable_sigmoid(static_cast<double>(r.logit));
}

// ---------------------------------------------------------------------------
// Class activation maps.

struct Cam {
  int raw_side = 0;
  std::vector<double> raw;        // head-weighted sum of final feature maps
  int upsampled_side = 0;
  std::vector<double> upsampled;  // raw map bilinearly resized to input size
  std::vector<double> normalized;  // upsampled map min-max scaled to [0, 1]
};

namespace detail {
inline std::vector<double> bilinear_resize(const std::vector<double>& src,
                                           int in_n, int out_n) {
  std::vector<double> dst(static_cast<size_t>(out_n) * out_n);
  const double scale = static_cast<double>(in_n) / out_n;
  for (int v = 0; v < out_n; ++v) {
    double sy = (v + 0.5) * scale - 0.5;
    sy = std::clamp(sy, 0.0, static_cast<double>(in_n - 1));
    const int y0 = std::min(static_cast<int>(sy), in_n - 2 < 0 ? 0 : in_n - 2);
    const double wy = sy - y0;
    for (int u = 0; u < out_n; ++u) {
      double sx = (u + 0.5) * scale - 0.5;
      sx = std::clamp(sx, 0.0, static_cast<double>(in_n - 1));
      const int x0 = std::min(static_cast<int>(sx), in_n - 2 < 0 ? 0 : in_n - 2);
      const double wx = sx - x0;
      const double a = src[static_cast<size_t>(y0) * in_n + x0];
      const double b = src[static_cast<size_t>(y0) * in_n + std::min(x0 + 1, in_n - 1)];
      const double c = src[static_cast<size_t>(std::min(y0 + 1, in_n - 1)) * in_n + x0];
      const double d = src[static_cast<size_t>(std::min(y0 + 1, in_n - 1)) * in_n +
                           std::min(x0 + 1, in_n - 1)];
      dst[static_cast<size_t>(v) * out_n + u] =
          (1 - wy) * ((1 - wx) * a + wx * b) + wy * ((1 - wx) * c + wx * d);
    }
  }
  return dst;
}
}  // namespace detail

// CAM = sum_k head_w[k] * featuremap_k. The raw map satisfies
// mean(raw) == logit - head_bias up to rounding; the normalized variant is
// for rendering only.
inline Cam compute_cam(const ModelParams& params, const std::vector<float>& image,
                       int n) {
  const auto r = forward(params, image, n);
  Cam cam;
  cam.raw_side = r.feature_side;
  const int area = r.feature_side * r.feature_side;
  cam.raw.assign(area, 0.0);
  for (int k = 0; k < ParamLayout::kConv2Out; ++k) {
    const double w = params.v[ParamLayout::head_w + k];
    const float* m = r.features.data() + static_cast<size_t>(k) * area;
    for (int i = 0; i < area; ++i) cam.raw[i] += w * static_cast<double>(m[i]);
  }
  cam.upsampled_side = n;
  cam.upsampled = detail::bilinear_resize(cam.raw, cam.raw_side, n);
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (double v : cam.upsampled) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  cam.normalized.assign(cam.upsampled.size(), 0.0);
  if (hi > lo)
    for (size_t i = 0; i < cam.upsampled.size(); ++i)
      cam.normalized[i] = (cam.upsampled[i] - lo) / (hi - lo);
  return cam;
}

// ---------------------------------------------------------------------------
// Training.

struct AugmentConfig {
  bool horizontal_flip = true;
  bool rotation = true;
  bool zoom = true;
  double rotation_max_deg = 10.0;
  double zoom_min = 0.9;
  double zoom_max = 1.1;
};

struct TrainConfig {
  double learning_rate = 1e-3;
  double weight_decay = 1e-6;
  double plateau_decay_factor = 0.1;
  int plateau_patience = 10;
  double plateau_min_delta = 1e-4;
  int grad_accumulation_steps = 16;
  int epochs = 50;
  int batch_size = 1;
  AugmentConfig augment;
  uint64_t seed = 1;

  void validate() const {
    if (!(learning_rate > 0.0)) throw config_error("training.learning_rate must be > 0");
    if (weight_decay < 0.0) throw config_error("training.weight_decay must be >= 0");
    if (plateau_patience < 1) throw config_error("training.plateau_patience must be >= 1");
    if (epochs < 1) throw config_error("training.epochs must be >= 1");
    if (grad_accumulation_steps < 1)
      throw config_error("training.grad_accumulation_steps must be >= 1");
    if (batch_size != 1) throw config_error("training.batch_size must be 1");
    if (!(plateau_decay_factor > 0.0 && plateau_decay_factor < 1.0))
      throw config_error("training.plateau_decay_factor must be in (0, 1)");
    if (!(augment.zoom_min > 0.0 && augment.zoom_min <= augment.zoom_max))
      throw config_error("training.augment zoom range invalid");
  }
};

struct Sample {
  std::vector<float> pixels;
  int n = 0;
  int label = 0;
};

struct AugParams {
  bool flip = false;
  double rot_rad = 0.0;
  double zoom = 1.0;
};

inline AugParams sample_augmentation(const AugmentConfig& cfg, uint64_t seed,
                                     int epoch, size_t index) {
  const uint64_t key =
      rng::hash4(seed, rng::fnv1a("augment"), static_cast<uint64_t>(epoch), index);
  AugParams a;
  if (cfg.horizontal_flip) a.flip = rng::u01(rng::hash2(key, 0)) < 0.5;
  if (cfg.rotation) {
    const double deg = rng::uniform(rng::hash2(key, 1), -cfg.rotation_max_deg,
                                    cfg.rotation_max_deg);
    a.rot_rad = deg * 3.14159265358979323846 / 180.0;
  }
  if (cfg.zoom) a.zoom = rng::uniform(rng::hash2(key, 2), cfg.zoom_min, cfg.zoom_max);
  return a;
}

// Applies flip/rotation/zoom about the image center with one bilinear warp.
// Samples falling outside the source contribute zero.
inline std::vector<float> augment_image(const std::vector<float>& src, int n,
                                        const AugParams& a) {
  if (!a.flip && a.rot_rad == 0.0 && a.zoom == 1.0) return src;
  std::vector<float> dst(static_cast<size_t>(n) * n, 0.0f);
  const double c = std::cos(a.rot_rad), s = std::sin(a.rot_rad);
  const double half = 0.5 * (n - 1);
  for (int v = 0; v < n; ++v) {
    const double yc = v - half;
    for (int u = 0; u < n; ++u) {
      const double xc = u - half;
      // Inverse map: unzoom, unrotate, then unflip.
      double x = (xc * c + yc * s) / a.zoom;
      double y = (-xc * s + yc * c) / a.zoom;
      if (a.flip) x = -x;
      const double sx = x + half, sy = y + half;
      const int x0 = static_cast<int>(std::floor(sx));
      const int y0 = static_cast<int>(std::floor(sy));
      const double wx = sx - x0, wy = sy - y0;
      double acc = 0.0;
      for (int dy = 0; dy < 2; ++dy)
        for (int dx = 0; dx < 2; ++dx) {
          const int xi = x0 + dx, yi = y0 + dy;
          if (xi < 0 || xi >= n || yi < 0 || yi >= n) continue;
          const double w = (dx ? wx : 1.0 - wx) * (dy ? wy : 1.0 - wy);
          acc += w * src[static_cast<size_t>(yi) * n + xi];
        }
      dst[static_cast<size_t>(v) * n + u] = static_cast<float>(acc);
    }
  }
  return dst;
}

struct CurvePoint {
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double lr = 0.0;
};

struct TrainedModel {
  ModelParams params;
  std::string config_hash;
  uint64_t seed = 0;
  std::vector<CurvePoint> curve;
  int best_epoch = 0;  // 1-based epoch whose parameters are returned
};

namespace detail {
struct Adam {
  std::vector<float> m, v;
  int64_t t = 0;
  static constexpr double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;

  explicit Adam(size_t n) : m(n, 0.0f), v(n, 0.0f) {}

  void step(std::vector<float>& p, const std::vector<float>& g, double lr,
            double weight_decay) {
    ++t;
    const float bc1 = static_cast<float>(1.0 - std::pow(beta1, static_cast<double>(t)));
    const float bc2 = static_cast<float>(1.0 - std::pow(beta2, static_cast<double>(t)));
    const float b1 = static_cast<float>(beta1), b2 = static_cast<float>(beta2);
    const float flr = static_cast<float>(lr), fwd = static_cast<float>(weight_decay);
    for (size_t i = 0; i < p.size(); ++i) {
      const float gi = g[i] + fwd * p[i];
      m[i] = b1 * m[i] + (1.0f - b1) * gi;
      v[i] = b2 * v[i] + (1.0f - b2) * gi * gi;
      const float mhat = m[i] / bc1;
      const float vhat = v[i] / bc2;
      p[i] -= flr * mhat / (std::sqrt(vhat) + static_cast<float>(eps));
    }
  }
};
}  // namespace detail

// Deterministic training loop: Adam with gradient accumulation, per-epoch
// seeded shuffles and augmentations, plateau learning-rate decay, and
// best-validation-epoch parameter selection.
inline TrainedModel train(const std::vector<Sample>& train_set,
                          const std::vector<Sample>& val_set,
                          const TrainConfig& cfg,
                          const std::string& config_hash = "") {
  cfg.validate();
  if (train_set.empty() || val_set.empty())
    throw config_error("train: train and validation sets must be nonempty");
  bool has_pos = false, has_neg = false;
  for (const auto& s : train_set) (s.label ? has_pos : has_neg) = true;
  if (!has_pos || !has_neg)
    throw config_error("train: training set must contain both classes");

  ModelParams params = init_params(cfg.seed);
  detail::Adam opt(params.v.size());
  double lr = cfg.learning_rate;

  TrainedModel out;
  out.seed = cfg.seed;
  out.config_hash = config_hash;

  double best_val = std::numeric_limits<double>::infinity();
  double plateau_best = std::numeric_limits<double>::infinity();
  int stall = 0;

  std::vector<size_t> order(train_set.size());
  std::vector<float> grad_accum(params.v.size(), 0.0f);
  std::vector<float> grad_mean(params.v.size(), 0.0f);

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    // Seeded Fisher-Yates shuffle.
    std::iota(order.begin(), order.end(), 0);
    rng::Stream shuffle_rng(
        rng::hash3(cfg.seed, rng::fnv1a("shuffle"), static_cast<uint64_t>(epoch)));
    for (size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[shuffle_rng.next_below(i)]);

    double train_loss = 0.0;
    std::fill(grad_accum.begin(), grad_accum.end(), 0.0f);
    int pending = 0;
    auto flush = [&]() {
      if (pending == 0) return;
      const float inv = 1.0f / static_cast<float>(pending);
      for (size_t i = 0; i < grad_accum.size(); ++i) grad_mean[i] = grad_accum[i] * inv;
      opt.step(params.v, grad_mean, lr, cfg.weight_decay);
      std::fill(grad_accum.begin(), grad_accum.end(), 0.0f);
      pending = 0;
    };
    for (size_t idx : order) {
      const Sample& s = train_set[idx];
      const AugParams aug = sample_augmentation(cfg.augment, cfg.seed, epoch, idx);
      const std::vector<float> img = augment_image(s.pixels, s.n, aug);
      auto [loss, grad] = loss_and_grad(params, img, s.n, s.label);
      train_loss += static_cast<double>(loss);
      for (size_t i = 0; i < grad_accum.size(); ++i) grad_accum[i] += grad.v[i];
      if (++pending == cfg.grad_accumulation_steps) flush();
    }
    flush();
    train_loss /= static_cast<double>(train_set.size());

    double val_loss = 0.0;
    for (const auto& s : val_set) {
      const auto r = forward(params, s.pixels, s.n);
      const float margin = (s.label == 1 ? r.logit : -r.logit);
      val_loss += static_cast<double>(detail::softplus_neg(margin));
    }
    val_loss /= static_cast<double>(val_set.size());

    out.curve.push_back({epoch, train_loss, val_loss, lr});

    if (val_loss < best_val) {
      best_val = val_loss;
      out.params = params;
      out.best_epoch = epoch;
    }
    // Plateau rule: decay when the loss fails to improve by more than
    // plateau_min_delta for plateau_patience consecutive epochs.
    if (val_loss < plateau_best - cfg.plateau_min_delta) {
      plateau_best = val_loss;
      stall = 0;
    } else if (++stall >= cfg.plateau_patience) {
      lr *= cfg.plateau_decay_factor;
      stall = 0;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Model container (CTMODL01) and training-curve CSV.

inline constexpr char kModelMagic[9] = "CTMODL01";

inline void save_model(const std::string& path, const TrainedModel& model) {
  nlohmann::json header{{"format_version", kFormatVersion},
                        {"layout", ParamLayout::descriptor()},
                        {"config_hash", model.config_hash},
                        {"seed", model.seed},
                        {"best_epoch", model.best_epoch}};
  std::vector<double> payload(model.params.v.begin(), model.params.v.end());
  io::write_file(path, io::encode_container(kModelMagic, header, payload));
}

inline TrainedModel load_model(const std::string& path) {
  auto c = io::decode_container(kModelMagic, io::read_file(path), path);
  TrainedModel m;
  try {
    if (c.header.at("layout") != ParamLayout::descriptor())
      throw data_error("model layout descriptor mismatch in " + path);
    m.config_hash = c.header.at("config_hash").get<std::string>();
    m.seed = c.header.at("seed").get<uint64_t>();
    m.best_epoch = c.header.at("best_epoch").get<int>();
  } catch (const nlohmann::json::exception& e) {
    throw data_error("bad model header in " + path + ": " + e.what());
  }
  if (c.payload.size() != static_cast<size_t>(ParamLayout::total))
    throw data_error("model payload size mismatch in " + path);
  for (size_t i = 0; i < c.payload.size(); ++i)
    m.params.v[i] = static_cast<float>(c.payload[i]);
  return m;
}

inline void save_training_curve(const std::string& path,
                                const std::vector<CurvePoint>& curve) {
  std::string csv = "epoch,train_loss,val_loss,lr\n";
  for (const auto& p : curve)
    csv += std::to_string(p.epoch) + "," + format_double_roundtrip(p.train_loss) +
           "," + format_double_roundtrip(p.val_loss) + "," +
           format_double_roundtrip(p.lr) + "\n";
  io::write_file(path, csv);
}

}  // namespace ctsim
