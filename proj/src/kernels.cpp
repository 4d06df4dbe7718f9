// Copyright (c) 2026 The chanmp Authors. All Rights Reserved.
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

#include "chanmp/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <utility>

#include "chanmp/error.hpp"

namespace chanmp::kernels {

void ExactSum::add(double x) {
  std::size_t i = 0;
  for (double y : partials_) {
    if (std::fabs(x) < std::fabs(y)) std::swap(x, y);
    const double hi = x + y;
    const double lo = y - (hi - x);
    if (lo != 0.0) partials_[i++] = lo;
    x = hi;
  }
  partials_.resize(i);
  partials_.push_back(x);
}

double ExactSum::result() const {
  std::size_t n = partials_.size();
  if (n == 0) return 0.0;
  double hi = partials_[--n];
  double lo = 0.0;
  while (n > 0) {
    const double x = hi;
    const double y = partials_[--n];
    hi = x + y;
    const double yr = hi - x;
    lo = y - yr;
    if (lo != 0.0) break;
  }
  // Round half-even across the boundary between hi and the remaining partials.
  if (n > 0 && ((lo < 0.0 && partials_[n - 1] < 0.0) || (lo > 0.0 && partials_[n - 1] > 0.0))) {
    const double y = lo * 2.0;
    const double x = hi + y;
    const double yr = x - hi;
    if (y == yr) hi = x;
  }
  return hi;
}

std::size_t conv_out_extent(std::size_t in, std::size_t kernel, std::size_t stride,
                            std::size_t padding) {
  if (stride == 0 || in + 2 * padding < kernel) return 0;
  return (in + 2 * padding - kernel) / stride + 1;
}

namespace {

struct ConvDims {
  std::size_t n, cin, h, w, cout, ky, kx, oh, ow;
};

ConvDims check_conv(const Tensor& x, const Tensor& w, const Tensor* bias,
                    const Conv2dGeometry& geom, const std::string& where) {
  expect_rank(x, 4, where + " input");
  expect_rank(w, 4, where + " weight");
  ConvDims d{x.dim(0), x.dim(1), x.dim(2), x.dim(3), w.dim(0), w.dim(2), w.dim(3), 0, 0};
  if (w.dim(1) != d.cin) {
    throw ShapeError(where + ": input has " + std::to_string(d.cin) + " channels, weight expects " +
                     std::to_string(w.dim(1)));
  }
  if (geom.stride == 0) throw ShapeError(where + ": stride must be positive");
  d.oh = conv_out_extent(d.h, d.ky, geom.stride, geom.padding);
  d.ow = conv_out_extent(d.w, d.kx, geom.stride, geom.padding);
  if (d.oh == 0 || d.ow == 0) {
    throw ShapeError(where + ": kernel larger than padded input " + to_string(x.shape));
  }
  if (bias != nullptr && bias->size() != d.cout) {
    throw ShapeError(where + ": bias has " + std::to_string(bias->size()) + " entries, expected " +
                     std::to_string(d.cout));
  }
  return d;
}

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor* bias, const Conv2dGeometry& geom,
              Accumulation accum, const std::string& where) {
  const ConvDims d = check_conv(x, w, bias, geom, where);
  Tensor y({d.n, d.cout, d.oh, d.ow});
  const auto pad = static_cast<std::ptrdiff_t>(geom.padding);
  ExactSum exact;
  for (std::size_t b = 0; b < d.n; ++b) {
    for (std::size_t oc = 0; oc < d.cout; ++oc) {
      for (std::size_t oy = 0; oy < d.oh; ++oy) {
        for (std::size_t ox = 0; ox < d.ow; ++ox) {
          double acc = 0.0;
          exact.clear();
          for (std::size_t ic = 0; ic < d.cin; ++ic) {
            for (std::size_t ky = 0; ky < d.ky; ++ky) {
              const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * geom.stride + ky) - pad;
              if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(d.h)) continue;
              for (std::size_t kx = 0; kx < d.kx; ++kx) {
                const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * geom.stride + kx) - pad;
                if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(d.w)) continue;
                const double prod =
                    x[((b * d.cin + ic) * d.h + static_cast<std::size_t>(iy)) * d.w +
                      static_cast<std::size_t>(ix)] *
                    w[((oc * d.cin + ic) * d.ky + ky) * d.kx + kx];
                if (accum == Accumulation::Exact) {
                  exact.add(prod);
                } else {
                  acc += prod;
                }
              }
            }
          }
          double out;
          if (accum == Accumulation::Exact) {
            if (bias != nullptr) exact.add((*bias)[oc]);
            out = exact.result();
          } else {
            out = bias != nullptr ? acc + (*bias)[oc] : acc;
          }
          y[((b * d.cout + oc) * d.oh + oy) * d.ow + ox] = out;
        }
      }
    }
  }
  return y;
}

void conv2d_backward(const Tensor& x, const Tensor& w, const std::vector<double>& grad_out,
                     const Conv2dGeometry& geom, std::vector<double>* grad_x,
                     std::vector<double>* grad_w, std::vector<double>* grad_b) {
  const ConvDims d = check_conv(x, w, nullptr, geom, "conv2d backward");
  const auto pad = static_cast<std::ptrdiff_t>(geom.padding);
  for (std::size_t b = 0; b < d.n; ++b) {
    for (std::size_t oc = 0; oc < d.cout; ++oc) {
      for (std::size_t oy = 0; oy < d.oh; ++oy) {
        for (std::size_t ox = 0; ox < d.ow; ++ox) {
          const double g = grad_out[((b * d.cout + oc) * d.oh + oy) * d.ow + ox];
          if (g == 0.0) continue;
          if (grad_b != nullptr) (*grad_b)[oc] += g;
          for (std::size_t ic = 0; ic < d.cin; ++ic) {
            for (std::size_t ky = 0; ky < d.ky; ++ky) {
              const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * geom.stride + ky) - pad;
              if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(d.h)) continue;
              for (std::size_t kx = 0; kx < d.kx; ++kx) {
                const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * geom.stride + kx) - pad;
                if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(d.w)) continue;
                const std::size_t xi = ((b * d.cin + ic) * d.h + static_cast<std::size_t>(iy)) *
                                           d.w +
                                       static_cast<std::size_t>(ix);
                const std::size_t wi = ((oc * d.cin + ic) * d.ky + ky) * d.kx + kx;
                if (grad_x != nullptr) (*grad_x)[xi] += g * w[wi];
                if (grad_w != nullptr) (*grad_w)[wi] += g * x[xi];
              }
            }
          }
        }
      }
    }
  }
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor* bias, Accumulation accum,
              const std::string& where) {
  expect_rank(x, 2, where + " input");
  expect_rank(w, 2, where + " weight");
  const std::size_t n = x.dim(0), fin = x.dim(1), fout = w.dim(0);
  if (w.dim(1) != fin) {
    throw ShapeError(where + ": input has " + std::to_string(fin) + " features, weight expects " +
                     std::to_string(w.dim(1)));
  }
  if (bias != nullptr && bias->size() != fout) {
    throw ShapeError(where + ": bias has " + std::to_string(bias->size()) + " entries, expected " +
                     std::to_string(fout));
  }
  Tensor y({n, fout});
  ExactSum exact;
  for (std::size_t b = 0; b < n; ++b) {
    const double* xr = x.data.data() + b * fin;
    for (std::size_t o = 0; o < fout; ++o) {
      const double* wr = w.data.data() + o * fin;
      double out;
      if (accum == Accumulation::Exact) {
        exact.clear();
        for (std::size_t i = 0; i < fin; ++i) exact.add(xr[i] * wr[i]);
        if (bias != nullptr) exact.add((*bias)[o]);
        out = exact.result();
      } else {
        double acc = 0.0;
        for (std::size_t i = 0; i < fin; ++i) acc += xr[i] * wr[i];
        out = bias != nullptr ? acc + (*bias)[o] : acc;
      }
      y[b * fout + o] = out;
    }
  }
  return y;
}

void linear_backward(const Tensor& x, const Tensor& w, const std::vector<double>& grad_out,
                     std::vector<double>* grad_x, std::vector<double>* grad_w,
                     std::vector<double>* grad_b) {
  const std::size_t n = x.dim(0), fin = x.dim(1), fout = w.dim(0);
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t o = 0; o < fout; ++o) {
      const double g = grad_out[b * fout + o];
      if (g == 0.0) continue;
      if (grad_b != nullptr) (*grad_b)[o] += g;
      for (std::size_t i = 0; i < fin; ++i) {
        if (grad_x != nullptr) (*grad_x)[b * fin + i] += g * w[o * fin + i];
        if (grad_w != nullptr) (*grad_w)[o * fin + i] += g * x[b * fin + i];
      }
    }
  }
}

Tensor relu(const Tensor& x) {
  Tensor y(x.shape);
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] > 0.0 ? x[i] : 0.0;
  return y;
}

Tensor add(const Tensor& a, const Tensor& b, const std::string& where) {
  if (a.shape != b.shape) {
    throw ShapeError(where + ": operand shapes " + to_string(a.shape) + " and " +
                     to_string(b.shape) + " differ");
  }
  Tensor y(a.shape);
  for (std::size_t i = 0; i < a.size(); ++i) y[i] = a[i] + b[i];
  return y;
}

namespace {

struct PoolDims {
  std::size_t n, c, h, w, oh, ow;
};

PoolDims check_pool(const Tensor& x, const PoolGeometry& geom, const std::string& where) {
  expect_rank(x, 4, where);
  if (geom.window == 0 || geom.stride == 0) throw ShapeError(where + ": window and stride must be positive");
  PoolDims d{x.dim(0), x.dim(1), x.dim(2), x.dim(3), 0, 0};
  d.oh = conv_out_extent(d.h, geom.window, geom.stride, 0);
  d.ow = conv_out_extent(d.w, geom.window, geom.stride, 0);
  if (d.oh == 0 || d.ow == 0) throw ShapeError(where + ": window larger than input " + to_string(x.shape));
  return d;
}

}  // namespace

Tensor avgpool2d(const Tensor& x, const PoolGeometry& geom, const std::string& where) {
  const PoolDims d = check_pool(x, geom, where);
  Tensor y({d.n, d.c, d.oh, d.ow});
  const double inv = 1.0 / static_cast<double>(geom.window * geom.window);
  for (std::size_t p = 0; p < d.n * d.c; ++p) {
    for (std::size_t oy = 0; oy < d.oh; ++oy) {
      for (std::size_t ox = 0; ox < d.ow; ++ox) {
        double acc = 0.0;
        for (std::size_t ky = 0; ky < geom.window; ++ky) {
          for (std::size_t kx = 0; kx < geom.window; ++kx) {
            acc += x[(p * d.h + oy * geom.stride + ky) * d.w + ox * geom.stride + kx];
          }
        }
        y[(p * d.oh + oy) * d.ow + ox] = acc * inv;
      }
    }
  }
  return y;
}

Tensor maxpool2d(const Tensor& x, const PoolGeometry& geom, std::vector<std::size_t>* argmax,
                 const std::string& where) {
  const PoolDims d = check_pool(x, geom, where);
  Tensor y({d.n, d.c, d.oh, d.ow});
  if (argmax != nullptr) argmax->assign(y.size(), 0);
  for (std::size_t p = 0; p < d.n * d.c; ++p) {
    for (std::size_t oy = 0; oy < d.oh; ++oy) {
      for (std::size_t ox = 0; ox < d.ow; ++ox) {
        double best = -std::numeric_limits<double>::infinity();
        std::size_t best_i = 0;
        for (std::size_t ky = 0; ky < geom.window; ++ky) {
          for (std::size_t kx = 0; kx < geom.window; ++kx) {
            const std::size_t i = (p * d.h + oy * geom.stride + ky) * d.w + ox * geom.stride + kx;
            if (x[i] > best) {
              best = x[i];
              best_i = i;
            }
          }
        }
        const std::size_t o = (p * d.oh + oy) * d.ow + ox;
        y[o] = best;
        if (argmax != nullptr) (*argmax)[o] = best_i;
      }
    }
  }
  return y;
}

Tensor flatten(const Tensor& x) {
  if (x.rank() < 1) throw ShapeError("flatten: scalar input");
  Tensor y = x;
  y.grad.clear();
  y.shape = {x.dim(0), x.dim(0) == 0 ? 0 : x.size() / x.dim(0)};
  return y;
}

Tensor concat_channels(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  const Tensor& first = parts.front();
  if (first.rank() < 2) throw ShapeError("concat: inputs need a channel axis");
  const std::size_t n = first.dim(0);
  const std::size_t inner = first.size() / (n * first.dim(1));
  std::size_t total = 0;
  for (const Tensor& t : parts) {
    if (t.rank() != first.rank() || t.dim(0) != n || t.size() / (n * t.dim(1)) != inner) {
      throw ShapeError("concat: incompatible part " + to_string(t.shape));
    }
    total += t.dim(1);
  }
  Shape shape = first.shape;
  shape[1] = total;
  Tensor y(shape);
  for (std::size_t b = 0; b < n; ++b) {
    std::size_t offset = 0;
    for (const Tensor& t : parts) {
      const std::size_t block = t.dim(1) * inner;
      std::copy_n(t.data.begin() + static_cast<std::ptrdiff_t>(b * block), block,
                  y.data.begin() + static_cast<std::ptrdiff_t>(b * total * inner + offset));
      offset += block;
    }
  }
  return y;
}

}  // namespace chanmp::kernels
