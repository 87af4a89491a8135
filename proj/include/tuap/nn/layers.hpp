#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "tuap/tensor.hpp"

// Layer kinds and their forward/backward kernels.
//
// Image activations are rank-3 tensors laid out H x W x C (channel fastest).
// Dense layers take rank-1 input, so a flatten must precede the first dense
// layer of a convolutional stack. Parameters per layer:
//   dense   W[out][in], b[out]
//   conv2d  W[out][k][k][in], b[out]     (zero padding, square kernel)
//   relu, flatten, maxpool2d: none

namespace tuap::nn {

enum class LayerKind { dense, conv2d, relu, flatten, maxpool2d };

inline std::string_view to_string(LayerKind k) {
  switch (k) {
    case LayerKind::dense: return "dense";
    case LayerKind::conv2d: return "conv2d";
    case LayerKind::relu: return "relu";
    case LayerKind::flatten: return "flatten";
    case LayerKind::maxpool2d: return "maxpool2d";
  }
  return "?";
}

inline LayerKind parse_layer_kind(std::string_view s) {
  for (auto k : {LayerKind::dense, LayerKind::conv2d, LayerKind::relu, LayerKind::flatten, LayerKind::maxpool2d})
    if (to_string(k) == s) return k;
  throw domain_error("unknown layer kind '" + std::string(s) + "'");
}

struct LayerSpec {
  LayerKind kind = LayerKind::relu;
  std::size_t in = 0;   // dense: input width; conv2d: input channels
  std::size_t out = 0;  // dense: output width; conv2d: output channels
  std::size_t kernel = 0;  // conv2d kernel size, maxpool2d window
  std::size_t stride = 1;
  std::size_t padding = 0;

  static LayerSpec dense(std::size_t in, std::size_t out) { return {LayerKind::dense, in, out, 0, 1, 0}; }
  static LayerSpec conv2d(std::size_t in_channels, std::size_t out_channels, std::size_t kernel,
                          std::size_t stride = 1, std::size_t padding = 0) {
    return {LayerKind::conv2d, in_channels, out_channels, kernel, stride, padding};
  }
  static LayerSpec relu() { return {LayerKind::relu}; }
  static LayerSpec flatten() { return {LayerKind::flatten}; }
  static LayerSpec maxpool2d(std::size_t window, std::size_t stride) {
    return {LayerKind::maxpool2d, 0, 0, window, stride, 0};
  }

  bool has_params() const noexcept { return kind == LayerKind::dense || kind == LayerKind::conv2d; }

  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

/// Output shape of `layer` applied to `in`; throws shape_error when they don't compose.
inline Shape output_shape(const LayerSpec& layer, const Shape& in) {
  auto fail = [&](const std::string& why) -> Shape {
    throw shape_error(std::string(to_string(layer.kind)) + " layer cannot take input " + shape_string(in) + ": " +
                      why);
  };
  switch (layer.kind) {
    case LayerKind::dense:
      if (in.size() != 1 || in[0] != layer.in) return fail("expects rank-1 input of width " + std::to_string(layer.in));
      if (layer.out == 0) return fail("output width must be positive");
      return {layer.out};
    case LayerKind::conv2d: {
      if (in.size() != 3 || in[2] != layer.in)
        return fail("expects HxWxC input with C = " + std::to_string(layer.in));
      if (layer.kernel == 0 || layer.stride == 0 || layer.out == 0) return fail("kernel, stride, channels must be > 0");
      auto extent = [&](std::size_t n) -> std::size_t {
        if (n + 2 * layer.padding < layer.kernel) fail("kernel larger than padded input");
        return (n + 2 * layer.padding - layer.kernel) / layer.stride + 1;
      };
      return {extent(in[0]), extent(in[1]), layer.out};
    }
    case LayerKind::relu:
      return in;
    case LayerKind::flatten:
      return {shape_size(in)};
    case LayerKind::maxpool2d: {
      if (in.size() != 3) return fail("expects HxWxC input");
      if (layer.kernel == 0 || layer.stride == 0) return fail("window and stride must be > 0");
      if (in[0] < layer.kernel || in[1] < layer.kernel) return fail("window larger than input");
      return {(in[0] - layer.kernel) / layer.stride + 1, (in[1] - layer.kernel) / layer.stride + 1, in[2]};
    }
  }
  return fail("unknown kind");
}

/// Shapes of the parameter tensors owned by `layer` (weights, then bias).
inline std::vector<Shape> param_shapes(const LayerSpec& layer) {
  switch (layer.kind) {
    case LayerKind::dense: return {{layer.out, layer.in}, {layer.out}};
    case LayerKind::conv2d: return {{layer.out, layer.kernel, layer.kernel, layer.in}, {layer.out}};
    default: return {};
  }
}

/// (fan_in, fan_out) for the uniform initialization bound.
inline std::pair<std::size_t, std::size_t> fans(const LayerSpec& layer) {
  if (layer.kind == LayerKind::conv2d) {
    auto k2 = layer.kernel * layer.kernel;
    return {layer.in * k2, layer.out * k2};
  }
  return {layer.in, layer.out};
}

namespace detail {

// Index of element (r, c, ch) in an HxWxC tensor.
inline std::size_t hwc(const Shape& s, std::size_t r, std::size_t c, std::size_t ch) {
  return (r * s[1] + c) * s[2] + ch;
}

inline Tensor dense_forward(const Tensor& x, const Tensor& w, const Tensor& b) {
  const auto out = w.shape()[0], in = w.shape()[1];
  Tensor y({out});
  const double* px = x.values().data();
  for (std::size_t o = 0; o < out; ++o) {
    const double* row = w.values().data() + o * in;
    // Four fixed partial sums: vectorizable, and the summation order never changes.
    double acc[4] = {0, 0, 0, 0};
    std::size_t i = 0;
    for (; i + 4 <= in; i += 4)
      for (std::size_t l = 0; l < 4; ++l) acc[l] += row[i + l] * px[i + l];
    for (; i < in; ++i) acc[0] += row[i] * px[i];
    y[o] = b[o] + ((acc[0] + acc[1]) + (acc[2] + acc[3]));
  }
  return y;
}

inline Tensor dense_backward(const Tensor& x, const Tensor& w, const Tensor& dy, Tensor* dw, Tensor* db) {
  const auto out = w.shape()[0], in = w.shape()[1];
  Tensor dx({in});
  for (std::size_t o = 0; o < out; ++o) {
    const double g = dy[o];
    if (g == 0.0) continue;
    const double* row = w.values().data() + o * in;
    for (std::size_t i = 0; i < in; ++i) dx[i] += row[i] * g;
    if (dw) {
      double* drow = dw->values().data() + o * in;
      for (std::size_t i = 0; i < in; ++i) drow[i] += g * x[i];
    }
    if (db) (*db)[o] += g;
  }
  return dx;
}

inline Tensor conv2d_forward(const LayerSpec& l, const Tensor& x, const Tensor& w, const Tensor& b) {
  const Shape& xs = x.shape();
  Shape ys = output_shape(l, xs);
  Tensor y(ys);
  const auto k = l.kernel, cin = l.in;
  for (std::size_t r = 0; r < ys[0]; ++r)
    for (std::size_t c = 0; c < ys[1]; ++c)
      for (std::size_t o = 0; o < l.out; ++o) {
        double acc = b[o];
        for (std::size_t kr = 0; kr < k; ++kr) {
          const auto ir = static_cast<std::ptrdiff_t>(r * l.stride + kr) - static_cast<std::ptrdiff_t>(l.padding);
          if (ir < 0 || ir >= static_cast<std::ptrdiff_t>(xs[0])) continue;
          for (std::size_t kc = 0; kc < k; ++kc) {
            const auto ic = static_cast<std::ptrdiff_t>(c * l.stride + kc) - static_cast<std::ptrdiff_t>(l.padding);
            if (ic < 0 || ic >= static_cast<std::ptrdiff_t>(xs[1])) continue;
            const double* px = &x[hwc(xs, ir, ic, 0)];
            const double* pw = &w[((o * k + kr) * k + kc) * cin];
            for (std::size_t ch = 0; ch < cin; ++ch) acc += px[ch] * pw[ch];
          }
        }
        y[hwc(ys, r, c, o)] = acc;
      }
  return y;
}

inline Tensor conv2d_backward(const LayerSpec& l, const Tensor& x, const Tensor& w, const Tensor& dy, Tensor* dw,
                              Tensor* db) {
  const Shape& xs = x.shape();
  const Shape& ys = dy.shape();
  Tensor dx(xs);
  const auto k = l.kernel, cin = l.in;
  for (std::size_t r = 0; r < ys[0]; ++r)
    for (std::size_t c = 0; c < ys[1]; ++c)
      for (std::size_t o = 0; o < l.out; ++o) {
        const double g = dy[hwc(ys, r, c, o)];
        if (g == 0.0) continue;
        if (db) (*db)[o] += g;
        for (std::size_t kr = 0; kr < k; ++kr) {
          const auto ir = static_cast<std::ptrdiff_t>(r * l.stride + kr) - static_cast<std::ptrdiff_t>(l.padding);
          if (ir < 0 || ir >= static_cast<std::ptrdiff_t>(xs[0])) continue;
          for (std::size_t kc = 0; kc < k; ++kc) {
            const auto ic = static_cast<std::ptrdiff_t>(c * l.stride + kc) - static_cast<std::ptrdiff_t>(l.padding);
            if (ic < 0 || ic >= static_cast<std::ptrdiff_t>(xs[1])) continue;
            const auto xi = hwc(xs, ir, ic, 0);
            const auto wi = ((o * k + kr) * k + kc) * cin;
            for (std::size_t ch = 0; ch < cin; ++ch) {
              dx[xi + ch] += w[wi + ch] * g;
              if (dw) (*dw)[wi + ch] += x[xi + ch] * g;
            }
          }
        }
      }
  return dx;
}

inline Tensor relu_forward(Tensor x) {
  for (auto& v : x) v = v > 0 ? v : 0.0;
  return x;
}

inline Tensor relu_backward(const Tensor& x, Tensor dy) {
  for (std::size_t i = 0; i < dy.size(); ++i)
    if (!(x[i] > 0)) dy[i] = 0.0;
  return dy;
}

// Flat index of the winning input for each pooled output; ties go to the first in scan order.
inline std::vector<std::size_t> maxpool_argmax(const LayerSpec& l, const Tensor& x) {
  const Shape& xs = x.shape();
  Shape ys = output_shape(l, xs);
  std::vector<std::size_t> idx(shape_size(ys));
  for (std::size_t r = 0; r < ys[0]; ++r)
    for (std::size_t c = 0; c < ys[1]; ++c)
      for (std::size_t ch = 0; ch < xs[2]; ++ch) {
        std::size_t best = hwc(xs, r * l.stride, c * l.stride, ch);
        for (std::size_t kr = 0; kr < l.kernel; ++kr)
          for (std::size_t kc = 0; kc < l.kernel; ++kc) {
            auto i = hwc(xs, r * l.stride + kr, c * l.stride + kc, ch);
            if (x[i] > x[best]) best = i;
          }
        idx[hwc(ys, r, c, ch)] = best;
      }
  return idx;
}

inline Tensor maxpool_forward(const LayerSpec& l, const Tensor& x) {
  Tensor y(output_shape(l, x.shape()));
  auto idx = maxpool_argmax(l, x);
  for (std::size_t i = 0; i < idx.size(); ++i) y[i] = x[idx[i]];
  return y;
}

inline Tensor maxpool_backward(const LayerSpec& l, const Tensor& x, const Tensor& dy) {
  Tensor dx(x.shape());
  auto idx = maxpool_argmax(l, x);
  for (std::size_t i = 0; i < idx.size(); ++i) dx[idx[i]] += dy[i];
  return dx;
}

}  // namespace detail

}  // namespace tuap::nn
