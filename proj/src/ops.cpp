#include "fap/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <string>

#include "fap/error.hpp"

namespace fap::ops {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapC = Eigen::Map<const RowMat>;
using MapM = Eigen::Map<RowMat>;

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  }
}

void require_rank(const char* op, const Tensor& a, std::size_t rank) {
  if (a.rank() != rank) {
    throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                     shape_str(a.shape()));
  }
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape("add", a, b);
  auto av = a.values(), bv = b.values();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i];
  return Tensor::make_result("add", a.shape(), std::move(out), {a, b},
                             [](std::span<const double> g, std::span<double* const> gi) {
                               for (double* dst : gi) {
                                 if (!dst) continue;
                                 for (std::size_t i = 0; i < g.size(); ++i) dst[i] += g[i];
                               }
                             });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape("sub", a, b);
  auto av = a.values(), bv = b.values();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] - bv[i];
  return Tensor::make_result("sub", a.shape(), std::move(out), {a, b},
                             [](std::span<const double> g, std::span<double* const> gi) {
                               if (gi[0])
                                 for (std::size_t i = 0; i < g.size(); ++i) gi[0][i] += g[i];
                               if (gi[1])
                                 for (std::size_t i = 0; i < g.size(); ++i) gi[1][i] -= g[i];
                             });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape("mul", a, b);
  auto av = a.values(), bv = b.values();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
  return Tensor::make_result("mul", a.shape(), std::move(out), {a, b},
                             [a, b](std::span<const double> g, std::span<double* const> gi) {
                               auto av = a.values(), bv = b.values();
                               if (gi[0])
                                 for (std::size_t i = 0; i < g.size(); ++i) gi[0][i] += g[i] * bv[i];
                               if (gi[1])
                                 for (std::size_t i = 0; i < g.size(); ++i) gi[1][i] += g[i] * av[i];
                             });
}

Tensor scale(const Tensor& a, double factor) {
  auto av = a.values();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * factor;
  return Tensor::make_result("scale", a.shape(), std::move(out), {a},
                             [factor](std::span<const double> g, std::span<double* const> gi) {
                               for (std::size_t i = 0; i < g.size(); ++i) gi[0][i] += g[i] * factor;
                             });
}

Tensor sum(const Tensor& a) {
  double total = 0.0;
  for (double v : a.values()) total += v;
  return Tensor::make_result("sum", {}, {total}, {a},
                             [n = a.numel()](std::span<const double> g, std::span<double* const> gi) {
                               for (std::size_t i = 0; i < n; ++i) gi[0][i] += g[0];
                             });
}

Tensor mean(const Tensor& a) {
  if (a.numel() == 0) throw ShapeError("mean: empty tensor");
  return scale(sum(a), 1.0 / static_cast<double>(a.numel()));
}

Tensor relu(const Tensor& a) {
  auto av = a.values();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] > 0.0 ? av[i] : 0.0;
  return Tensor::make_result("relu", a.shape(), std::move(out), {a},
                             [a](std::span<const double> g, std::span<double* const> gi) {
                               auto av = a.values();
                               for (std::size_t i = 0; i < g.size(); ++i)
                                 if (av[i] > 0.0) gi[0][i] += g[i];
                             });
}

Tensor log(const Tensor& a) {
  auto av = a.values();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (!(av[i] > 0.0)) throw NumericError("log: non-positive argument");
    out[i] = std::log(av[i]);
  }
  return Tensor::make_result("log", a.shape(), std::move(out), {a},
                             [a](std::span<const double> g, std::span<double* const> gi) {
                               auto av = a.values();
                               for (std::size_t i = 0; i < g.size(); ++i) gi[0][i] += g[i] / av[i];
                             });
}

Tensor clamp_min(const Tensor& a, double floor) {
  auto av = a.values();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::max(av[i], floor);
  return Tensor::make_result("clamp_min", a.shape(), std::move(out), {a},
                             [a, floor](std::span<const double> g, std::span<double* const> gi) {
                               auto av = a.values();
                               for (std::size_t i = 0; i < g.size(); ++i)
                                 if (av[i] > floor) gi[0][i] += g[i];
                             });
}

Tensor reshape(const Tensor& a, Shape shape) {
  if (shape_numel(shape) != a.numel()) {
    throw ShapeError("reshape: cannot view " + shape_str(a.shape()) + " as " + shape_str(shape));
  }
  auto av = a.values();
  return Tensor::make_result("reshape", std::move(shape), std::vector<double>(av.begin(), av.end()),
                             {a}, [](std::span<const double> g, std::span<double* const> gi) {
                               for (std::size_t i = 0; i < g.size(); ++i) gi[0][i] += g[i];
                             });
}

Tensor flatten(const Tensor& a) {
  if (a.rank() < 1) throw ShapeError("flatten: scalar input");
  const std::size_t batch = a.dim(0);
  return reshape(a, {batch, batch == 0 ? 0 : a.numel() / batch});
}

Tensor concat(std::span<const Tensor> parts, std::size_t axis) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  const Shape& first = parts[0].shape();
  if (axis >= first.size()) throw ShapeError("concat: axis out of range for " + shape_str(first));
  Shape out_shape = first;
  out_shape[axis] = 0;
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    bool ok = s.size() == first.size();
    for (std::size_t d = 0; ok && d < s.size(); ++d) ok = d == axis || s[d] == first[d];
    if (!ok) throw ShapeError("concat: incompatible " + shape_str(s) + " vs " + shape_str(first));
    out_shape[axis] += s[axis];
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t d = 0; d < axis; ++d) outer *= first[d];
  for (std::size_t d = axis + 1; d < first.size(); ++d) inner *= first[d];

  std::vector<std::size_t> chunk(parts.size());
  for (std::size_t p = 0; p < parts.size(); ++p) chunk[p] = parts[p].dim(axis) * inner;
  const std::size_t row = out_shape[axis] * inner;

  std::vector<double> out(shape_numel(out_shape));
  std::size_t offset = 0;
  for (std::size_t p = 0; p < parts.size(); ++p) {
    auto pv = parts[p].values();
    for (std::size_t o = 0; o < outer; ++o)
      std::copy_n(pv.begin() + o * chunk[p], chunk[p], out.begin() + o * row + offset);
    offset += chunk[p];
  }
  std::vector<Tensor> inputs(parts.begin(), parts.end());
  return Tensor::make_result(
      "concat", std::move(out_shape), std::move(out), inputs,
      [chunk, outer, row](std::span<const double> g, std::span<double* const> gi) {
        std::size_t offset = 0;
        for (std::size_t p = 0; p < gi.size(); ++p) {
          if (gi[p]) {
            for (std::size_t o = 0; o < outer; ++o)
              for (std::size_t i = 0; i < chunk[p]; ++i)
                gi[p][o * chunk[p] + i] += g[o * row + offset + i];
          }
          offset += chunk[p];
        }
      });
}

Tensor slice(const Tensor& a, std::size_t begin, std::size_t end) {
  if (a.rank() < 1 || begin > end || end > a.dim(0)) {
    throw ShapeError("slice: rows [" + std::to_string(begin) + "," + std::to_string(end) +
                     ") invalid for " + shape_str(a.shape()));
  }
  const std::size_t row = a.dim(0) == 0 ? 0 : a.numel() / a.dim(0);
  Shape shape = a.shape();
  shape[0] = end - begin;
  auto av = a.values();
  std::vector<double> out(av.begin() + begin * row, av.begin() + end * row);
  return Tensor::make_result("slice", std::move(shape), std::move(out), {a},
                             [off = begin * row](std::span<const double> g, std::span<double* const> gi) {
                               for (std::size_t i = 0; i < g.size(); ++i) gi[0][off + i] += g[i];
                             });
}

Tensor index_rows(const Tensor& a, std::span<const std::size_t> rows) {
  if (a.rank() < 1) throw ShapeError("index_rows: scalar input");
  const std::size_t n = a.dim(0);
  const std::size_t row = n == 0 ? 0 : a.numel() / n;
  std::vector<std::size_t> idx(rows.begin(), rows.end());
  for (auto r : idx)
    if (r >= n) throw ShapeError("index_rows: row " + std::to_string(r) + " out of range");
  Shape shape = a.shape();
  shape[0] = idx.size();
  auto av = a.values();
  std::vector<double> out(idx.size() * row);
  for (std::size_t i = 0; i < idx.size(); ++i)
    std::copy_n(av.begin() + idx[i] * row, row, out.begin() + i * row);
  return Tensor::make_result("index_rows", std::move(shape), std::move(out), {a},
                             [idx, row](std::span<const double> g, std::span<double* const> gi) {
                               for (std::size_t i = 0; i < idx.size(); ++i)
                                 for (std::size_t j = 0; j < row; ++j) gi[0][idx[i] * row + j] += g[i * row + j];
                             });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank("matmul", a, 2);
  require_rank("matmul", b, 2);
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) {
    throw ShapeError("matmul: inner extents differ " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  }
  std::vector<double> out(m * n);
  MapM(out.data(), m, n).noalias() = MapC(a.values().data(), m, k) * MapC(b.values().data(), k, n);
  return Tensor::make_result("matmul", {m, n}, std::move(out), {a, b},
                             [a, b, m, k, n](std::span<const double> g, std::span<double* const> gi) {
                               MapC G(g.data(), m, n);
                               if (gi[0]) MapM(gi[0], m, k).noalias() += G * MapC(b.values().data(), k, n).transpose();
                               if (gi[1]) MapM(gi[1], k, n).noalias() += MapC(a.values().data(), m, k).transpose() * G;
                             });
}

Tensor dense(const Tensor& x, const Tensor& w, const Tensor& bias) {
  require_rank("dense", x, 2);
  require_rank("dense", w, 2);
  require_rank("dense", bias, 1);
  if (bias.dim(0) != w.dim(1)) {
    throw ShapeError("dense: bias " + shape_str(bias.shape()) + " does not match weight " + shape_str(w.shape()));
  }
  Tensor prod = matmul(x, w);
  return add_channel_bias(prod, bias);
}

Tensor add_channel_bias(const Tensor& x, const Tensor& bias) {
  require_rank("add_channel_bias", bias, 1);
  if (x.rank() < 2 || x.dim(1) != bias.dim(0)) {
    throw ShapeError("add_channel_bias: bias " + shape_str(bias.shape()) + " vs input " + shape_str(x.shape()));
  }
  const std::size_t batch = x.dim(0), channels = x.dim(1);
  const std::size_t inner = channels == 0 || batch == 0 ? 0 : x.numel() / (batch * channels);
  auto xv = x.values();
  auto bv = bias.values();
  std::vector<double> out(xv.begin(), xv.end());
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t c = 0; c < channels; ++c) {
      double* p = out.data() + (b * channels + c) * inner;
      for (std::size_t i = 0; i < inner; ++i) p[i] += bv[c];
    }
  return Tensor::make_result(
      "add_channel_bias", x.shape(), std::move(out), {x, bias},
      [batch, channels, inner](std::span<const double> g, std::span<double* const> gi) {
        if (gi[0])
          for (std::size_t i = 0; i < g.size(); ++i) gi[0][i] += g[i];
        if (gi[1])
          for (std::size_t b = 0; b < batch; ++b)
            for (std::size_t c = 0; c < channels; ++c) {
              const double* p = g.data() + (b * channels + c) * inner;
              double acc = 0.0;
              for (std::size_t i = 0; i < inner; ++i) acc += p[i];
              gi[1][c] += acc;
            }
      });
}

namespace {

std::size_t last_extent(const char* op, const Tensor& a) {
  if (a.rank() < 1 || a.shape().back() == 0) throw ShapeError(std::string(op) + ": needs a non-empty last axis");
  return a.shape().back();
}

}  // namespace

Tensor softmax(const Tensor& a) {
  const std::size_t n = last_extent("softmax", a);
  const std::size_t rows = a.numel() / n;
  auto av = a.values();
  std::vector<double> out(av.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* x = av.data() + r * n;
    double* y = out.data() + r * n;
    const double mx = *std::max_element(x, x + n);
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) total += (y[i] = std::exp(x[i] - mx));
    for (std::size_t i = 0; i < n; ++i) y[i] /= total;
  }
  auto saved = std::make_shared<const std::vector<double>>(out);
  return Tensor::make_result("softmax", a.shape(), std::move(out), {a},
                             [saved, rows, n](std::span<const double> g, std::span<double* const> gi) {
                               const auto& y = *saved;
                               for (std::size_t r = 0; r < rows; ++r) {
                                 double dot = 0.0;
                                 for (std::size_t i = 0; i < n; ++i) dot += g[r * n + i] * y[r * n + i];
                                 for (std::size_t i = 0; i < n; ++i)
                                   gi[0][r * n + i] += y[r * n + i] * (g[r * n + i] - dot);
                               }
                             });
}

Tensor log_softmax(const Tensor& a) {
  const std::size_t n = last_extent("log_softmax", a);
  const std::size_t rows = a.numel() / n;
  auto av = a.values();
  std::vector<double> out(av.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* x = av.data() + r * n;
    const double mx = *std::max_element(x, x + n);
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) total += std::exp(x[i] - mx);
    const double lse = mx + std::log(total);
    for (std::size_t i = 0; i < n; ++i) out[r * n + i] = x[i] - lse;
  }
  auto saved = std::make_shared<const std::vector<double>>(out);
  return Tensor::make_result("log_softmax", a.shape(), std::move(out), {a},
                             [saved, rows, n](std::span<const double> g, std::span<double* const> gi) {
                               const auto& y = *saved;
                               for (std::size_t r = 0; r < rows; ++r) {
                                 double total = 0.0;
                                 for (std::size_t i = 0; i < n; ++i) total += g[r * n + i];
                                 for (std::size_t i = 0; i < n; ++i)
                                   gi[0][r * n + i] += g[r * n + i] - std::exp(y[r * n + i]) * total;
                               }
                             });
}

Tensor nll_loss(const Tensor& logp, std::span<const int> labels) {
  require_rank("nll_loss", logp, 2);
  const std::size_t q = logp.dim(0), n = logp.dim(1);
  if (labels.size() != q) {
    throw ShapeError("nll_loss: " + std::to_string(labels.size()) + " labels for " + std::to_string(q) + " rows");
  }
  if (q == 0) throw ShapeError("nll_loss: no rows");
  std::vector<int> y(labels.begin(), labels.end());
  for (int label : y)
    if (label < 0 || static_cast<std::size_t>(label) >= n)
      throw ShapeError("nll_loss: label " + std::to_string(label) + " outside [0," + std::to_string(n) + ")");
  auto lv = logp.values();
  double total = 0.0;
  for (std::size_t i = 0; i < q; ++i) total -= lv[i * n + static_cast<std::size_t>(y[i])];
  return Tensor::make_result("nll_loss", {}, {total / static_cast<double>(q)}, {logp},
                             [y, q, n](std::span<const double> g, std::span<double* const> gi) {
                               const double w = g[0] / static_cast<double>(q);
                               for (std::size_t i = 0; i < q; ++i) gi[0][i * n + static_cast<std::size_t>(y[i])] -= w;
                             });
}

Tensor pairwise_sq_dist(const Tensor& a, const Tensor& b) {
  require_rank("pairwise_sq_dist", a, 2);
  require_rank("pairwise_sq_dist", b, 2);
  const std::size_t q = a.dim(0), n = b.dim(0), d = a.dim(1);
  if (b.dim(1) != d) {
    throw ShapeError("pairwise_sq_dist: feature extents differ " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
  auto av = a.values(), bv = b.values();
  std::vector<double> out(q * n);
  for (std::size_t i = 0; i < q; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t k = 0; k < d; ++k) {
        const double diff = av[i * d + k] - bv[j * d + k];
        acc += diff * diff;
      }
      out[i * n + j] = acc;
    }
  return Tensor::make_result("pairwise_sq_dist", {q, n}, std::move(out), {a, b},
                             [a, b, q, n, d](std::span<const double> g, std::span<double* const> gi) {
                               auto av = a.values(), bv = b.values();
                               for (std::size_t i = 0; i < q; ++i)
                                 for (std::size_t j = 0; j < n; ++j) {
                                   const double w = 2.0 * g[i * n + j];
                                   for (std::size_t k = 0; k < d; ++k) {
                                     const double diff = av[i * d + k] - bv[j * d + k];
                                     if (gi[0]) gi[0][i * d + k] += w * diff;
                                     if (gi[1]) gi[1][j * d + k] -= w * diff;
                                   }
                                 }
                             });
}

Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v) {
  require_rank("attention", q, 4);
  require_same_shape("attention", q, k);
  require_same_shape("attention", q, v);
  const std::size_t batch = q.dim(0), c = q.dim(1), t = q.dim(2) * q.dim(3);
  if (c == 0 || t == 0) throw ShapeError("attention: empty channel or spatial extent");
  const double inv_sqrt_c = 1.0 / std::sqrt(static_cast<double>(c));
  const std::size_t plane = c * t;
  using RowVec = Eigen::Matrix<double, 1, Eigen::Dynamic>;

  // Row r of the attention weights for one batch item. Everything works one
  // row at a time: the [t,t] matrix is never formed, and a general GEMM is
  // very slow when c is tiny.
  auto weights_row = [=](const double* qb, const MapC& keys, std::size_t r, RowVec& row) {
    row = keys.row(0) * (qb[r] * inv_sqrt_c);
    for (std::size_t ch = 1; ch < c; ++ch) row += keys.row(ch) * (qb[ch * t + r] * inv_sqrt_c);
    row.array() -= row.maxCoeff();
    row = row.array().exp().matrix();
    row /= row.sum();
  };

  std::vector<double> out(q.numel());
  {
    auto qv = q.values(), kv = k.values(), vv = v.values();
    RowVec p(t);
    for (std::size_t b = 0; b < batch; ++b) {
      const MapC keys(kv.data() + b * plane, c, t);
      const MapC vals(vv.data() + b * plane, c, t);
      double* ob = out.data() + b * plane;
      for (std::size_t r = 0; r < t; ++r) {
        weights_row(qv.data() + b * plane, keys, r, p);
        for (std::size_t ch = 0; ch < c; ++ch) ob[ch * t + r] = vals.row(ch).dot(p);
      }
    }
  }
  return Tensor::make_result(
      "attention", q.shape(), std::move(out), {q, k, v},
      [q, k, v, weights_row, batch, c, t, plane, inv_sqrt_c](std::span<const double> g, std::span<double* const> gi) {
        auto qv = q.values(), kv = k.values(), vv = v.values();
        RowVec p(t), dp(t), ds(t);
        for (std::size_t b = 0; b < batch; ++b) {
          const std::size_t off = b * plane;
          const double* qb = qv.data() + off;
          const MapC keys(kv.data() + off, c, t);
          const MapC vals(vv.data() + off, c, t);
          const double* gb = g.data() + off;
          for (std::size_t r = 0; r < t; ++r) {
            weights_row(qb, keys, r, p);
            if (gi[2]) {
              MapM gv(gi[2] + off, c, t);
              for (std::size_t ch = 0; ch < c; ++ch) gv.row(ch) += gb[ch * t + r] * p;
            }
            if (!gi[0] && !gi[1]) continue;
            dp = vals.row(0) * gb[r];
            for (std::size_t ch = 1; ch < c; ++ch) dp += vals.row(ch) * gb[ch * t + r];
            const double row_dot = dp.dot(p);
            ds = (p.array() * (dp.array() - row_dot)).matrix() * inv_sqrt_c;
            if (gi[0]) {
              for (std::size_t ch = 0; ch < c; ++ch) gi[0][off + ch * t + r] += keys.row(ch).dot(ds);
            }
            if (gi[1]) {
              MapM gk(gi[1] + off, c, t);
              for (std::size_t ch = 0; ch < c; ++ch) gk.row(ch) += qb[ch * t + r] * ds;
            }
          }
        }
      });
}

}  // namespace fap::ops
