// Copyright 2026 The Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "autoslim/engine.hpp"

#include <Eigen/Core>
#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "autoslim/resource.hpp"

namespace autoslim {
namespace {

template <typename T>
using MatR = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapR = Eigen::Map<MatR<T>, 0, Eigen::OuterStride<>>;
template <typename T>
using CMapR = Eigen::Map<const MatR<T>, 0, Eigen::OuterStride<>>;

// Activations are stored channel-major: [C][N][H][W].
template <typename T>
struct Act {
  int c = 0;
  int n = 0;
  int h = 0;
  int w = 0;
  std::vector<T> v;

  void reset(int c_, int n_, int h_, int w_) {
    c = c_;
    n = n_;
    h = h_;
    w = w_;
    v.assign(static_cast<size_t>(c) * n * h * w, T(0));
  }
  std::int64_t plane() const { return std::int64_t{n} * h * w; }
};

struct ConvGeom {
  int k = 1;
  int stride = 1;
  int pad = 0;
  int ho = 0;
  int wo = 0;
};

ConvGeom conv_geom(const LayerSpec& layer, int h, int w) {
  return {layer.kernel, layer.stride, layer.kernel / 2, (h + layer.stride - 1) / layer.stride,
          (w + layer.stride - 1) / layer.stride};
}

bool is_pointwise(const ConvGeom& g) { return g.k == 1 && g.stride == 1; }

// col: [Cin*k*k, N*Ho*Wo]
template <typename T>
void im2col(const Act<T>& x, const ConvGeom& g, std::vector<T>& col) {
  const std::int64_t cols = std::int64_t{x.n} * g.ho * g.wo;
  col.assign(static_cast<size_t>(x.c) * g.k * g.k * cols, T(0));
  for (int ci = 0; ci < x.c; ++ci) {
    const T* src_c = x.v.data() + static_cast<std::int64_t>(ci) * x.plane();
    for (int ky = 0; ky < g.k; ++ky) {
      for (int kx = 0; kx < g.k; ++kx) {
        T* dst = col.data() + ((static_cast<std::int64_t>(ci) * g.k + ky) * g.k + kx) * cols;
        for (int n = 0; n < x.n; ++n) {
          const T* src = src_c + static_cast<std::int64_t>(n) * x.h * x.w;
          for (int oy = 0; oy < g.ho; ++oy) {
            const int iy = oy * g.stride - g.pad + ky;
            T* row = dst + (static_cast<std::int64_t>(n) * g.ho + oy) * g.wo;
            if (iy < 0 || iy >= x.h) continue;
            for (int ox = 0; ox < g.wo; ++ox) {
              const int ix = ox * g.stride - g.pad + kx;
              if (ix >= 0 && ix < x.w) row[ox] = src[iy * x.w + ix];
            }
          }
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const std::vector<T>& col, const ConvGeom& g, Act<T>& dx) {
  const std::int64_t cols = std::int64_t{dx.n} * g.ho * g.wo;
  for (int ci = 0; ci < dx.c; ++ci) {
    T* dst_c = dx.v.data() + static_cast<std::int64_t>(ci) * dx.plane();
    for (int ky = 0; ky < g.k; ++ky) {
      for (int kx = 0; kx < g.k; ++kx) {
        const T* src = col.data() + ((static_cast<std::int64_t>(ci) * g.k + ky) * g.k + kx) * cols;
        for (int n = 0; n < dx.n; ++n) {
          T* dst = dst_c + static_cast<std::int64_t>(n) * dx.h * dx.w;
          for (int oy = 0; oy < g.ho; ++oy) {
            const int iy = oy * g.stride - g.pad + ky;
            if (iy < 0 || iy >= dx.h) continue;
            const T* row = src + (static_cast<std::int64_t>(n) * g.ho + oy) * g.wo;
            for (int ox = 0; ox < g.wo; ++ox) {
              const int ix = ox * g.stride - g.pad + kx;
              if (ix >= 0 && ix < dx.w) dst[iy * dx.w + ix] += row[ox];
            }
          }
        }
      }
    }
  }
}

template <typename T>
void check_slice(const LayerSpec& layer, const BasicTensor<T>& t, int axis, std::int64_t need) {
  if (t.rank() <= axis || t.dim(axis) < need)
    throw std::invalid_argument(fmt::format("layer '{}': active slice needs {} along axis {} of {}",
                                            layer.id, need, axis, shape_string(t.shape())));
}

template <typename T>
class Executor {
 public:
  // Without `retain`, activations are released once their last consumer has
  // run and backward() is unavailable.
  Executor(const NetworkSpec& spec, const BasicWeights<T>& weights, const std::vector<int>& channels,
           bool retain)
      : spec_(spec), w_(weights), ch_(channels), retain_(retain) {
    if (w_.layers.size() != spec_.layers().size())
      throw std::invalid_argument("weight store does not match the spec");
    if (ch_.size() != spec_.layers().size())
      throw std::invalid_argument("channel vector does not match the spec");
  }

  void forward(const BasicTensor<T>& images, BnMode mode, BnMoments* moments) {
    const Shape3 expect = spec_.input_shape();
    if (images.rank() != 4 || images.dim(1) != expect.c || images.dim(2) != expect.h ||
        images.dim(3) != expect.w)
      throw std::invalid_argument(fmt::format("batch shape {} does not match spec input [N,{},{},{}]",
                                              shape_string(images.shape()), expect.c, expect.h,
                                              expect.w));
    if (mode == BnMode::kCalibrate && moments == nullptr)
      throw std::invalid_argument("calibrate mode needs a moments accumulator");
    const int n = images.dim(0);
    input_.reset(expect.c, n, expect.h, expect.w);
    const std::int64_t hw = std::int64_t{expect.h} * expect.w;
    for (int b = 0; b < n; ++b)
      for (int c = 0; c < expect.c; ++c)
        std::copy_n(images.data() + (static_cast<std::int64_t>(b) * expect.c + c) * hw, hw,
                    input_.v.data() + (static_cast<std::int64_t>(c) * n + b) * hw);

    out_.assign(spec_.layers().size(), Act<T>{});
    xhat_.assign(spec_.layers().size(), {});
    invstd_.assign(spec_.layers().size(), {});
    std::vector<int> pending(spec_.layers().size(), 0);
    for (int i : spec_.topo_order())
      for (int src : spec_.inputs_of(i)) ++pending[src];
    for (int i : spec_.topo_order()) {
      const auto& layer = spec_.layer(i);
      if (layer.kind == LayerKind::kSoftmaxXent) continue;
      const auto& inputs = spec_.inputs_of(i);
      const Act<T>& x = inputs.empty() ? input_ : out_[inputs[0]];
      Act<T>& y = out_[i];
      switch (layer.kind) {
        case LayerKind::kConv: conv_forward(i, x, y); break;
        case LayerKind::kDwConv: dwconv_forward(i, x, y); break;
        case LayerKind::kFc: fc_forward(i, x, y); break;
        case LayerKind::kBn: bn_forward(i, x, y, mode, moments); break;
        case LayerKind::kRelu:
          y = x;
          for (auto& v : y.v) v = v > T(0) ? v : T(0);
          break;
        case LayerKind::kAvgPoolGlobal: pool_forward(x, y); break;
        case LayerKind::kAdd:
          y = x;
          for (size_t j = 1; j < inputs.size(); ++j) {
            const auto& other = out_[inputs[j]];
            for (size_t e = 0; e < y.v.size(); ++e) y.v[e] += other.v[e];
          }
          break;
        case LayerKind::kSoftmaxXent: break;
      }
      if (!retain_) {
        for (int src : inputs)
          if (--pending[src] == 0 && src != spec_.logits_layer()) {
            out_[src].v.clear();
            out_[src].v.shrink_to_fit();
          }
        xhat_[i].clear();
        xhat_[i].shrink_to_fit();
      }
    }
  }

  BasicTensor<T> logits() const {
    const Act<T>& y = out_[spec_.logits_layer()];
    BasicTensor<T> out({y.n, y.c});
    for (int b = 0; b < y.n; ++b)
      for (int c = 0; c < y.c; ++c) out[static_cast<size_t>(b) * y.c + c] = y.v[static_cast<size_t>(c) * y.n + b];
    return out;
  }

  void backward(const BasicTensor<T>& dlogits, BasicGradients<T>& g) {
    if (!retain_) throw std::logic_error("backward needs retained activations");
    if (g.layers.size() != spec_.layers().size())
      throw std::invalid_argument("gradient store does not match the spec");
    grad_.assign(spec_.layers().size(), {});
    {
      const Act<T>& y = out_[spec_.logits_layer()];
      auto& d = grad_[spec_.logits_layer()];
      d.assign(y.v.size(), T(0));
      for (int b = 0; b < y.n; ++b)
        for (int c = 0; c < y.c; ++c) d[static_cast<size_t>(c) * y.n + b] = dlogits[static_cast<size_t>(b) * y.c + c];
    }
    const auto& order = spec_.topo_order();
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
      const int i = *it;
      const auto& layer = spec_.layer(i);
      if (grad_[i].empty()) continue;
      const auto& inputs = spec_.inputs_of(i);
      const bool has_src = !inputs.empty();
      const Act<T>& x = has_src ? out_[inputs[0]] : input_;
      std::vector<T>* dx = has_src ? &src_grad(inputs[0]) : nullptr;
      const std::vector<T>& dy = grad_[i];
      switch (layer.kind) {
        case LayerKind::kConv: conv_backward(i, x, dy, dx, g.layers[i]); break;
        case LayerKind::kDwConv: dwconv_backward(i, x, dy, dx, g.layers[i]); break;
        case LayerKind::kFc: fc_backward(i, x, dy, dx, g.layers[i]); break;
        case LayerKind::kBn: bn_backward(i, dy, *dx, g.layers[i]); break;
        case LayerKind::kRelu: {
          const auto& y = out_[i].v;
          for (size_t e = 0; e < dy.size(); ++e)
            if (y[e] > T(0)) (*dx)[e] += dy[e];
          break;
        }
        case LayerKind::kAvgPoolGlobal: {
          const std::int64_t hw = std::int64_t{x.h} * x.w;
          const T scale = T(1) / static_cast<T>(hw);
          for (int c = 0; c < x.c; ++c)
            for (int b = 0; b < x.n; ++b) {
              const T d = dy[static_cast<size_t>(c) * x.n + b] * scale;
              T* dst = dx->data() + (static_cast<std::int64_t>(c) * x.n + b) * hw;
              for (std::int64_t p = 0; p < hw; ++p) dst[p] += d;
            }
          break;
        }
        case LayerKind::kAdd:
          for (int src : inputs) {
            auto& d = src_grad(src);
            for (size_t e = 0; e < dy.size(); ++e) d[e] += dy[e];
          }
          break;
        case LayerKind::kSoftmaxXent: break;
      }
      grad_[i].clear();
      grad_[i].shrink_to_fit();
    }
  }

 private:
  std::vector<T>& src_grad(int src) {
    auto& d = grad_[src];
    if (d.empty()) d.assign(out_[src].v.size(), T(0));
    return d;
  }

  void conv_forward(int i, const Act<T>& x, Act<T>& y) {
    const auto& layer = spec_.layer(i);
    const auto& p = w_.layers[i];
    const ConvGeom g = conv_geom(layer, x.h, x.w);
    const int cout = ch_[i];
    check_slice(layer, p.weight, 0, cout);
    check_slice(layer, p.weight, 1, x.c);
    const std::int64_t k_active = std::int64_t{x.c} * g.k * g.k;
    const std::int64_t k_stored = std::int64_t{p.weight.dim(1)} * g.k * g.k;
    y.reset(cout, x.n, g.ho, g.wo);
    const std::int64_t cols = y.plane();
    const T* col_data = x.v.data();
    if (!is_pointwise(g)) {
      im2col(x, g, col_);
      col_data = col_.data();
    }
    CMapR<T> wm(p.weight.data(), cout, k_active, Eigen::OuterStride<>(k_stored));
    CMapR<T> cm(col_data, k_active, cols, Eigen::OuterStride<>(cols));
    MapR<T> ym(y.v.data(), cout, cols, Eigen::OuterStride<>(cols));
    ym.noalias() = wm * cm;
    for (int c = 0; c < cout; ++c) ym.row(c).array() += p.bias[c];
  }

  void conv_backward(int i, const Act<T>& x, const std::vector<T>& dy, std::vector<T>* dx,
                     LayerGrads<T>& gr) {
    const auto& layer = spec_.layer(i);
    const auto& p = w_.layers[i];
    const ConvGeom g = conv_geom(layer, x.h, x.w);
    const int cout = ch_[i];
    const std::int64_t k_active = std::int64_t{x.c} * g.k * g.k;
    const std::int64_t k_stored = std::int64_t{p.weight.dim(1)} * g.k * g.k;
    const std::int64_t cols = std::int64_t{x.n} * g.ho * g.wo;
    const T* col_data = x.v.data();
    if (!is_pointwise(g)) {
      im2col(x, g, col_);
      col_data = col_.data();
    }
    CMapR<T> dym(dy.data(), cout, cols, Eigen::OuterStride<>(cols));
    CMapR<T> cm(col_data, k_active, cols, Eigen::OuterStride<>(cols));
    MapR<T> dwm(gr.weight.data(), cout, k_active, Eigen::OuterStride<>(k_stored));
    dwm.noalias() += dym * cm.transpose();
    for (int c = 0; c < cout; ++c) gr.bias[c] += dym.row(c).sum();
    if (dx == nullptr) return;
    CMapR<T> wm(p.weight.data(), cout, k_active, Eigen::OuterStride<>(k_stored));
    if (is_pointwise(g)) {
      MapR<T> dxm(dx->data(), k_active, cols, Eigen::OuterStride<>(cols));
      dxm.noalias() += wm.transpose() * dym;
    } else {
      std::vector<T> dcol(static_cast<size_t>(k_active * cols));
      MapR<T> dcm(dcol.data(), k_active, cols, Eigen::OuterStride<>(cols));
      dcm.noalias() = wm.transpose() * dym;
      Act<T> view;
      view.c = x.c;
      view.n = x.n;
      view.h = x.h;
      view.w = x.w;
      view.v.swap(*dx);
      col2im_add(dcol, g, view);
      view.v.swap(*dx);
    }
  }

  void dwconv_forward(int i, const Act<T>& x, Act<T>& y) {
    const auto& layer = spec_.layer(i);
    const auto& p = w_.layers[i];
    const ConvGeom g = conv_geom(layer, x.h, x.w);
    check_slice(layer, p.weight, 0, x.c);
    y.reset(x.c, x.n, g.ho, g.wo);
    const int kk = g.k * g.k;
    for (int c = 0; c < x.c; ++c) {
      const T* kernel = p.weight.data() + static_cast<std::int64_t>(c) * kk;
      for (int b = 0; b < x.n; ++b) {
        const T* src = x.v.data() + (static_cast<std::int64_t>(c) * x.n + b) * x.h * x.w;
        T* dst = y.v.data() + (static_cast<std::int64_t>(c) * y.n + b) * g.ho * g.wo;
        for (int oy = 0; oy < g.ho; ++oy)
          for (int ox = 0; ox < g.wo; ++ox) {
            T acc = p.bias[c];
            for (int ky = 0; ky < g.k; ++ky) {
              const int iy = oy * g.stride - g.pad + ky;
              if (iy < 0 || iy >= x.h) continue;
              for (int kx = 0; kx < g.k; ++kx) {
                const int ix = ox * g.stride - g.pad + kx;
                if (ix >= 0 && ix < x.w) acc += kernel[ky * g.k + kx] * src[iy * x.w + ix];
              }
            }
            dst[oy * g.wo + ox] = acc;
          }
      }
    }
  }

  void dwconv_backward(int i, const Act<T>& x, const std::vector<T>& dy, std::vector<T>* dx,
                       LayerGrads<T>& gr) {
    const auto& layer = spec_.layer(i);
    const auto& p = w_.layers[i];
    const ConvGeom g = conv_geom(layer, x.h, x.w);
    const int kk = g.k * g.k;
    for (int c = 0; c < x.c; ++c) {
      const T* kernel = p.weight.data() + static_cast<std::int64_t>(c) * kk;
      T* dkernel = gr.weight.data() + static_cast<std::int64_t>(c) * kk;
      T dbias = T(0);
      for (int b = 0; b < x.n; ++b) {
        const std::int64_t in_off = (static_cast<std::int64_t>(c) * x.n + b) * x.h * x.w;
        const T* src = x.v.data() + in_off;
        T* dsrc = dx ? dx->data() + in_off : nullptr;
        const T* d = dy.data() + (static_cast<std::int64_t>(c) * x.n + b) * g.ho * g.wo;
        for (int oy = 0; oy < g.ho; ++oy)
          for (int ox = 0; ox < g.wo; ++ox) {
            const T go = d[oy * g.wo + ox];
            dbias += go;
            for (int ky = 0; ky < g.k; ++ky) {
              const int iy = oy * g.stride - g.pad + ky;
              if (iy < 0 || iy >= x.h) continue;
              for (int kx = 0; kx < g.k; ++kx) {
                const int ix = ox * g.stride - g.pad + kx;
                if (ix < 0 || ix >= x.w) continue;
                dkernel[ky * g.k + kx] += go * src[iy * x.w + ix];
                if (dsrc) dsrc[iy * x.w + ix] += go * kernel[ky * g.k + kx];
              }
            }
          }
      }
      gr.bias[c] += dbias;
    }
  }

  // Flattens [C][N][H*W] into [C*H*W, N].
  static void flatten(const Act<T>& x, std::vector<T>& out) {
    const std::int64_t hw = std::int64_t{x.h} * x.w;
    out.resize(static_cast<size_t>(x.c * hw * x.n));
    for (int c = 0; c < x.c; ++c)
      for (int b = 0; b < x.n; ++b)
        for (std::int64_t q = 0; q < hw; ++q)
          out[static_cast<size_t>((c * hw + q) * x.n + b)] =
              x.v[static_cast<size_t>((static_cast<std::int64_t>(c) * x.n + b) * hw + q)];
  }

  void fc_forward(int i, const Act<T>& x, Act<T>& y) {
    const auto& layer = spec_.layer(i);
    const auto& p = w_.layers[i];
    const int out = ch_[i];
    const std::int64_t in_active = std::int64_t{x.c} * x.h * x.w;
    check_slice(layer, p.weight, 0, out);
    check_slice(layer, p.weight, 1, in_active);
    flatten(x, col_);
    y.reset(out, x.n, 1, 1);
    CMapR<T> wm(p.weight.data(), out, in_active, Eigen::OuterStride<>(p.weight.dim(1)));
    CMapR<T> xm(col_.data(), in_active, x.n, Eigen::OuterStride<>(x.n));
    MapR<T> ym(y.v.data(), out, x.n, Eigen::OuterStride<>(x.n));
    ym.noalias() = wm * xm;
    for (int c = 0; c < out; ++c) ym.row(c).array() += p.bias[c];
  }

  void fc_backward(int i, const Act<T>& x, const std::vector<T>& dy, std::vector<T>* dx,
                   LayerGrads<T>& gr) {
    const auto& p = w_.layers[i];
    const int out = ch_[i];
    const std::int64_t hw = std::int64_t{x.h} * x.w;
    const std::int64_t in_active = x.c * hw;
    flatten(x, col_);
    CMapR<T> dym(dy.data(), out, x.n, Eigen::OuterStride<>(x.n));
    CMapR<T> xm(col_.data(), in_active, x.n, Eigen::OuterStride<>(x.n));
    MapR<T> dwm(gr.weight.data(), out, in_active, Eigen::OuterStride<>(p.weight.dim(1)));
    dwm.noalias() += dym * xm.transpose();
    for (int c = 0; c < out; ++c) gr.bias[c] += dym.row(c).sum();
    if (dx == nullptr) return;
    CMapR<T> wm(p.weight.data(), out, in_active, Eigen::OuterStride<>(p.weight.dim(1)));
    MatR<T> dflat = wm.transpose() * dym;
    for (int c = 0; c < x.c; ++c)
      for (int b = 0; b < x.n; ++b)
        for (std::int64_t q = 0; q < hw; ++q)
          (*dx)[static_cast<size_t>((static_cast<std::int64_t>(c) * x.n + b) * hw + q)] +=
              dflat(c * hw + q, b);
  }

  void pool_forward(const Act<T>& x, Act<T>& y) {
    y.reset(x.c, x.n, 1, 1);
    const std::int64_t hw = std::int64_t{x.h} * x.w;
    for (int c = 0; c < x.c; ++c)
      for (int b = 0; b < x.n; ++b) {
        const T* src = x.v.data() + (static_cast<std::int64_t>(c) * x.n + b) * hw;
        double acc = 0.0;
        for (std::int64_t q = 0; q < hw; ++q) acc += src[q];
        y.v[static_cast<size_t>(c) * x.n + b] = static_cast<T>(acc / static_cast<double>(hw));
      }
  }

  void bn_forward(int i, const Act<T>& x, Act<T>& y, BnMode mode, BnMoments* moments) {
    const auto& layer = spec_.layer(i);
    const auto& p = w_.layers[i];
    check_slice(layer, p.gamma, 0, x.c);
    y.reset(x.c, x.n, x.h, x.w);
    const std::int64_t m = x.plane();
    if (mode == BnMode::kEval) {
      for (int c = 0; c < x.c; ++c) {
        const T scale = p.gamma[c] / static_cast<T>(std::sqrt(static_cast<double>(p.running_var[c]) + kBnEpsilon));
        const T shift = p.beta[c] - p.running_mean[c] * scale;
        const T* src = x.v.data() + c * m;
        T* dst = y.v.data() + c * m;
        for (std::int64_t e = 0; e < m; ++e) dst[e] = src[e] * scale + shift;
      }
      return;
    }
    auto& xhat = xhat_[i];
    auto& invstd = invstd_[i];
    xhat.resize(y.v.size());
    invstd.resize(x.c);
    BnMoments::Layer* acc = nullptr;
    if (mode == BnMode::kCalibrate) {
      acc = &moments->layers.at(i);
      if (acc->mean.size() < static_cast<size_t>(x.c)) {
        acc->mean.resize(x.c, 0.0);
        acc->m2.resize(x.c, 0.0);
      }
    }
    for (int c = 0; c < x.c; ++c) {
      const T* src = x.v.data() + c * m;
      double mean = 0.0;
      for (std::int64_t e = 0; e < m; ++e) mean += src[e];
      mean /= static_cast<double>(m);
      double ss = 0.0;
      for (std::int64_t e = 0; e < m; ++e) {
        const double d = src[e] - mean;
        ss += d * d;
      }
      const double var = ss / static_cast<double>(m);
      const T istd = static_cast<T>(1.0 / std::sqrt(var + kBnEpsilon));
      invstd[c] = istd;
      const T mu = static_cast<T>(mean);
      T* xh = xhat.data() + c * m;
      T* dst = y.v.data() + c * m;
      for (std::int64_t e = 0; e < m; ++e) {
        xh[e] = (src[e] - mu) * istd;
        dst[e] = p.gamma[c] * xh[e] + p.beta[c];
      }
      if (acc != nullptr) {
        // Chan et al. pairwise merge of (count, mean, M2).
        const double n_a = acc->count;
        const double n_b = static_cast<double>(m);
        const double total = n_a + n_b;
        const double delta = mean - acc->mean[c];
        acc->mean[c] += delta * n_b / total;
        acc->m2[c] += ss + delta * delta * n_a * n_b / total;
      }
    }
    if (acc != nullptr) acc->count += static_cast<double>(m);
  }

  void bn_backward(int i, const std::vector<T>& dy, std::vector<T>& dx, LayerGrads<T>& gr) {
    const auto& p = w_.layers[i];
    const Act<T>& y = out_[i];
    const auto& xhat = xhat_[i];
    if (xhat.empty()) throw std::logic_error("bn backward needs a train-mode forward");
    const std::int64_t m = y.plane();
    for (int c = 0; c < y.c; ++c) {
      const T* d = dy.data() + c * m;
      const T* xh = xhat.data() + c * m;
      double sum_dy = 0.0;
      double sum_dy_xhat = 0.0;
      for (std::int64_t e = 0; e < m; ++e) {
        sum_dy += d[e];
        sum_dy_xhat += static_cast<double>(d[e]) * xh[e];
      }
      gr.gamma[c] += static_cast<T>(sum_dy_xhat);
      gr.beta[c] += static_cast<T>(sum_dy);
      const T g = p.gamma[c];
      const T k = g * invstd_[i][c] / static_cast<T>(m);
      const T mean_dy = static_cast<T>(sum_dy);
      const T mean_dy_xhat = static_cast<T>(sum_dy_xhat);
      T* out = dx.data() + c * m;
      for (std::int64_t e = 0; e < m; ++e)
        out[e] += k * (static_cast<T>(m) * d[e] - mean_dy - xh[e] * mean_dy_xhat);
    }
  }

  const NetworkSpec& spec_;
  const BasicWeights<T>& w_;
  const std::vector<int>& ch_;
  const bool retain_;
  Act<T> input_;
  std::vector<Act<T>> out_;
  std::vector<std::vector<T>> grad_;
  std::vector<std::vector<T>> xhat_;
  std::vector<std::vector<T>> invstd_;
  std::vector<T> col_;
};

template <typename T>
void for_each_trainable(LayerGrads<T>& g, const LayerParams<T>& p,
                        const std::function<void(BasicTensor<T>&, const BasicTensor<T>&)>& fn) {
  fn(g.weight, p.weight);
  fn(g.bias, p.bias);
  fn(g.gamma, p.gamma);
  fn(g.beta, p.beta);
}

}  // namespace

std::vector<int> resolve_channels(const NetworkSpec& spec, const WidthBounds& bounds,
                                  const ChannelConfig& config) {
  return layer_channels(spec, active_channels(spec, bounds, config));
}

template <typename T>
BasicWeights<T> init_weights(const NetworkSpec& spec, const WidthBounds& bounds, std::uint64_t seed,
                             const ChannelWidths* fan_widths) {
  validate_bounds(spec, bounds);
  const ChannelWidths max_widths = active_channels(spec, bounds, max_config(spec, bounds));
  const auto shapes = infer_shapes(spec, max_widths, spec.input_shape());
  const std::vector<int> max_ch = layer_channels(spec, max_widths);
  std::vector<Shape3> fan_shapes = shapes;
  std::vector<int> fan_ch = max_ch;
  if (fan_widths != nullptr) {
    fan_shapes = infer_shapes(spec, *fan_widths, spec.input_shape());
    fan_ch = layer_channels(spec, *fan_widths);
  }
  auto input_shape = [&](const std::vector<Shape3>& s, int i) {
    const auto& in = spec.inputs_of(i);
    return in.empty() ? spec.input_shape() : s[in[0]];
  };

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> uniform(-1.0, 1.0);
  BasicWeights<T> w;
  w.layers.resize(spec.layers().size());
  for (int i = 0; i < static_cast<int>(spec.layers().size()); ++i) {
    const auto& layer = spec.layer(i);
    auto& p = w.layers[i];
    const Shape3 in = input_shape(shapes, i);
    const int k = layer.kernel;
    switch (layer.kind) {
      case LayerKind::kConv:
      case LayerKind::kDwConv: {
        const bool dw = layer.kind == LayerKind::kDwConv;
        p.weight = BasicTensor<T>({max_ch[i], dw ? 1 : in.c, k, k});
        p.bias = BasicTensor<T>({max_ch[i]});
        const double std = std::sqrt(2.0 / (static_cast<double>(fan_ch[i]) * k * k));
        for (auto& v : p.weight.values()) v = static_cast<T>(normal(rng) * std);
        break;
      }
      case LayerKind::kFc: {
        p.weight = BasicTensor<T>({max_ch[i], static_cast<int>(in.size())});
        p.bias = BasicTensor<T>({max_ch[i]});
        const double bound = 1.0 / std::sqrt(static_cast<double>(input_shape(fan_shapes, i).size()));
        for (auto& v : p.weight.values()) v = static_cast<T>(uniform(rng) * bound);
        break;
      }
      case LayerKind::kBn:
        p.gamma = BasicTensor<T>({max_ch[i]}, T(1));
        p.beta = BasicTensor<T>({max_ch[i]});
        p.running_mean = BasicTensor<T>({max_ch[i]});
        p.running_var = BasicTensor<T>({max_ch[i]}, T(1));
        break;
      default:
        break;
    }
  }
  return w;
}

template <typename T>
BasicGradients<T> zero_gradients(const BasicWeights<T>& weights) {
  BasicGradients<T> g;
  g.layers.resize(weights.layers.size());
  for (size_t i = 0; i < weights.layers.size(); ++i) {
    const auto& p = weights.layers[i];
    auto& d = g.layers[i];
    if (!p.weight.empty()) d.weight = BasicTensor<T>(p.weight.shape());
    if (!p.bias.empty()) d.bias = BasicTensor<T>(p.bias.shape());
    if (!p.gamma.empty()) d.gamma = BasicTensor<T>(p.gamma.shape());
    if (!p.beta.empty()) d.beta = BasicTensor<T>(p.beta.shape());
  }
  return g;
}

template <typename T>
BasicTensor<T> forward(const NetworkSpec& spec, const BasicWeights<T>& weights,
                       const std::vector<int>& channels, const BasicTensor<T>& images, BnMode mode,
                       BnMoments* moments) {
  Executor<T> exec(spec, weights, channels, false);
  exec.forward(images, mode, moments);
  return exec.logits();
}

template <typename T>
double softmax_xent(const BasicTensor<T>& logits, const Targets<T>& targets, LossKind loss_kind,
                    BasicTensor<T>* dlogits, BasicTensor<T>* probabilities) {
  const int n = logits.dim(0);
  const int classes = logits.dim(1);
  if (loss_kind == LossKind::kHardXent && static_cast<int>(targets.labels.size()) != n)
    throw std::invalid_argument("label count does not match the batch");
  if (loss_kind == LossKind::kSoftXent &&
      (targets.soft.rank() != 2 || targets.soft.dim(0) != n || targets.soft.dim(1) != classes))
    throw std::invalid_argument("soft targets do not match the logits");
  if (dlogits) *dlogits = BasicTensor<T>({n, classes});
  if (probabilities) *probabilities = BasicTensor<T>({n, classes});
  std::vector<double> logp(classes);
  double total = 0.0;
  for (int b = 0; b < n; ++b) {
    const T* z = logits.data() + static_cast<std::int64_t>(b) * classes;
    double zmax = z[0];
    for (int c = 1; c < classes; ++c) zmax = std::max(zmax, static_cast<double>(z[c]));
    double sum = 0.0;
    for (int c = 0; c < classes; ++c) sum += std::exp(z[c] - zmax);
    const double lse = zmax + std::log(sum);
    for (int c = 0; c < classes; ++c) logp[c] = z[c] - lse;
    double loss = 0.0;
    if (loss_kind == LossKind::kHardXent) {
      const int label = targets.labels[b];
      if (label < 0 || label >= classes) throw std::invalid_argument("label out of range");
      loss = -logp[label];
    } else {
      const T* t = targets.soft.data() + static_cast<std::int64_t>(b) * classes;
      for (int c = 0; c < classes; ++c) loss -= static_cast<double>(t[c]) * logp[c];
    }
    total += loss;
    for (int c = 0; c < classes; ++c) {
      const T prob = static_cast<T>(std::exp(logp[c]));
      if (probabilities) (*probabilities)[static_cast<size_t>(b) * classes + c] = prob;
      if (dlogits) {
        const T target = loss_kind == LossKind::kHardXent
                             ? (c == targets.labels[b] ? T(1) : T(0))
                             : targets.soft[static_cast<size_t>(b) * classes + c];
        (*dlogits)[static_cast<size_t>(b) * classes + c] = (prob - target) / static_cast<T>(n);
      }
    }
  }
  return total / n;
}

template <typename T>
PassResult<T> backward(const NetworkSpec& spec, const BasicWeights<T>& weights,
                       const std::vector<int>& channels, const BasicTensor<T>& images,
                       const Targets<T>& targets, LossKind loss_kind, BasicGradients<T>& accum) {
  Executor<T> exec(spec, weights, channels, true);
  exec.forward(images, BnMode::kTrain, nullptr);
  PassResult<T> result;
  BasicTensor<T> dlogits;
  result.loss = softmax_xent(exec.logits(), targets, loss_kind, &dlogits, &result.probabilities);
  exec.backward(dlogits, accum);
  return result;
}

template <typename T>
void sgd_step(BasicWeights<T>& weights, const BasicGradients<T>& grads, SgdState<T>& state,
              const SgdParams& params) {
  if (grads.layers.size() != weights.layers.size())
    throw std::invalid_argument("gradient store does not match the weights");
  if (state.velocity.layers.empty()) state.velocity = zero_gradients(weights);
  const T lr = static_cast<T>(params.lr);
  const T mu = static_cast<T>(params.momentum);
  const T wd = static_cast<T>(params.weight_decay);
  auto update = [&](BasicTensor<T>& w, const BasicTensor<T>& g, BasicTensor<T>& v) {
    if (w.empty()) return;
    for (std::int64_t e = 0; e < w.numel(); ++e) {
      v[e] = mu * v[e] + (g[e] + wd * w[e]);
      w[e] -= lr * v[e];
    }
  };
  for (size_t i = 0; i < weights.layers.size(); ++i) {
    auto& p = weights.layers[i];
    const auto& g = grads.layers[i];
    auto& v = state.velocity.layers[i];
    update(p.weight, g.weight, v.weight);
    update(p.bias, g.bias, v.bias);
    update(p.gamma, g.gamma, v.gamma);
    update(p.beta, g.beta, v.beta);
  }
}

template <typename T>
std::int64_t recalibrate_bn(const NetworkSpec& spec, BasicWeights<T>& weights,
                            const std::vector<int>& channels, const BatchStream<T>& stream) {
  BnMoments moments;
  moments.layers.resize(spec.layers().size());
  std::int64_t samples = 0;
  BasicTensor<T> batch;
  {
    Executor<T> exec(spec, weights, channels, false);
    while (stream(batch)) {
      if (batch.empty()) continue;
      exec.forward(batch, BnMode::kCalibrate, &moments);
      samples += batch.dim(0);
    }
  }
  if (samples == 0) throw std::invalid_argument("BN calibration stream is empty");
  for (size_t i = 0; i < spec.layers().size(); ++i) {
    if (spec.layer(static_cast<int>(i)).kind != LayerKind::kBn) continue;
    const auto& acc = moments.layers[i];
    auto& p = weights.layers[i];
    for (size_t c = 0; c < acc.mean.size(); ++c) {
      p.running_mean[c] = static_cast<T>(acc.mean[c]);
      p.running_var[c] = static_cast<T>(acc.m2[c] / acc.count);
    }
  }
  return samples;
}

#define AUTOSLIM_INSTANTIATE(T)                                                                  \
  template BasicWeights<T> init_weights<T>(const NetworkSpec&, const WidthBounds&,               \
                                           std::uint64_t, const ChannelWidths*);                 \
  template BasicGradients<T> zero_gradients<T>(const BasicWeights<T>&);                          \
  template BasicTensor<T> forward<T>(const NetworkSpec&, const BasicWeights<T>&,                 \
                                     const std::vector<int>&, const BasicTensor<T>&, BnMode,     \
                                     BnMoments*);                                                \
  template double softmax_xent<T>(const BasicTensor<T>&, const Targets<T>&, LossKind,            \
                                  BasicTensor<T>*, BasicTensor<T>*);                             \
  template PassResult<T> backward<T>(const NetworkSpec&, const BasicWeights<T>&,                 \
                                     const std::vector<int>&, const BasicTensor<T>&,             \
                                     const Targets<T>&, LossKind, BasicGradients<T>&);           \
  template void sgd_step<T>(BasicWeights<T>&, const BasicGradients<T>&, SgdState<T>&,            \
                            const SgdParams&);                                                   \
  template std::int64_t recalibrate_bn<T>(const NetworkSpec&, BasicWeights<T>&,                  \
                                          const std::vector<int>&, const BatchStream<T>&);

AUTOSLIM_INSTANTIATE(float)
AUTOSLIM_INSTANTIATE(double)

#undef AUTOSLIM_INSTANTIATE

}  // namespace autoslim
