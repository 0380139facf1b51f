#include "vitlp/ops.hpp"

#include <cblas.h>

#include <algorithm>
#include <cmath>
#include <numbers>

namespace vitlp::ops {

namespace {

using detail::Node;
using BackwardFn = std::function<void(Node&)>;

Tensor make_result(Shape shape, std::vector<double> value, std::initializer_list<Tensor> inputs, BackwardFn fn) {
  Tensor out = Tensor::from(std::move(shape), std::move(value));
  bool track = false;
  if (grad_enabled()) {
    for (const auto& t : inputs) track = track || t.requires_grad();
  }
  if (track) {
    Node* n = out.node();
    n->requires_grad = true;
    for (const auto& t : inputs) n->parents.push_back(t.node_ptr());
    n->backward_fn = std::move(fn);
  }
  return out;
}

Tensor make_result_vec(Shape shape, std::vector<double> value, const std::vector<Tensor>& inputs, BackwardFn fn) {
  Tensor out = Tensor::from(std::move(shape), std::move(value));
  bool track = false;
  if (grad_enabled()) {
    for (const auto& t : inputs) track = track || t.requires_grad();
  }
  if (track) {
    Node* n = out.node();
    n->requires_grad = true;
    for (const auto& t : inputs) n->parents.push_back(t.node_ptr());
    n->backward_fn = std::move(fn);
  }
  return out;
}

// Parent gradient buffer, or nullptr when that parent is not differentiated.
double* pgrad(Node& self, std::size_t i) {
  Node* p = self.parents[i].get();
  return p->requires_grad && !p->grad.empty() ? p->grad.data() : nullptr;
}

const double* pval(Node& self, std::size_t i) { return self.parents[i]->value.data(); }

void require_matrix(const Tensor& t, const char* what) {
  if (t.rank() != 2) throw DimensionError(std::string(what) + " expects a matrix, got " + shape_str(t.shape()));
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(what) + ": shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
}

int as_int(std::size_t v) { return static_cast<int>(v); }

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_matrix(a, "matmul");
  require_matrix(b, "matmul");
  const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  if (b.shape()[0] != k) {
    throw DimensionError("matmul: inner dimensions disagree " + shape_str(a.shape()) + " · " + shape_str(b.shape()));
  }
  std::vector<double> out(m * n);
  cblas_dgemm(CblasRowMajor, CblasNoTrans, CblasNoTrans, as_int(m), as_int(n), as_int(k), 1.0, a.data().data(),
              as_int(k), b.data().data(), as_int(n), 0.0, out.data(), as_int(n));
  return make_result({m, n}, std::move(out), {a, b}, [m, k, n](Node& self) {
    const double* g = self.grad.data();
    if (double* ga = pgrad(self, 0)) {
      cblas_dgemm(CblasRowMajor, CblasNoTrans, CblasTrans, as_int(m), as_int(k), as_int(n), 1.0, g, as_int(n),
                  pval(self, 1), as_int(n), 1.0, ga, as_int(k));
    }
    if (double* gb = pgrad(self, 1)) {
      cblas_dgemm(CblasRowMajor, CblasTrans, CblasNoTrans, as_int(k), as_int(n), as_int(m), 1.0, pval(self, 0),
                  as_int(k), g, as_int(n), 1.0, gb, as_int(n));
    }
  });
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  require_matrix(a, "matmul_nt");
  require_matrix(b, "matmul_nt");
  const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[0];
  if (b.shape()[1] != k) {
    throw DimensionError("matmul_nt: inner dimensions disagree " + shape_str(a.shape()) + " · " +
                         shape_str(b.shape()) + "ᵀ");
  }
  std::vector<double> out(m * n);
  cblas_dgemm(CblasRowMajor, CblasNoTrans, CblasTrans, as_int(m), as_int(n), as_int(k), 1.0, a.data().data(),
              as_int(k), b.data().data(), as_int(k), 0.0, out.data(), as_int(n));
  return make_result({m, n}, std::move(out), {a, b}, [m, k, n](Node& self) {
    const double* g = self.grad.data();
    if (double* ga = pgrad(self, 0)) {
      cblas_dgemm(CblasRowMajor, CblasNoTrans, CblasNoTrans, as_int(m), as_int(k), as_int(n), 1.0, g, as_int(n),
                  pval(self, 1), as_int(k), 1.0, ga, as_int(k));
    }
    if (double* gb = pgrad(self, 1)) {
      cblas_dgemm(CblasRowMajor, CblasTrans, CblasNoTrans, as_int(n), as_int(k), as_int(m), 1.0, g, as_int(n),
                  pval(self, 0), as_int(k), 1.0, gb, as_int(k));
    }
  });
}

Tensor transpose(const Tensor& a) {
  require_matrix(a, "transpose");
  const std::size_t m = a.shape()[0], n = a.shape()[1];
  std::vector<double> out(m * n);
  const auto x = a.data();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = x[i * n + j];
  return make_result({n, m}, std::move(out), {a}, [m, n](Node& self) {
    double* ga = pgrad(self, 0);
    const double* g = self.grad.data();
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) ga[i * n + j] += g[j * m + i];
  });
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  std::vector<double> out(a.size());
  const auto x = a.data(), y = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] + y[i];
  return make_result(a.shape(), std::move(out), {a, b}, [](Node& self) {
    const auto& g = self.grad;
    for (std::size_t p = 0; p < 2; ++p) {
      if (double* gp = pgrad(self, p)) {
        for (std::size_t i = 0; i < g.size(); ++i) gp[i] += g[i];
      }
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  std::vector<double> out(a.size());
  const auto x = a.data(), y = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] - y[i];
  return make_result(a.shape(), std::move(out), {a, b}, [](Node& self) {
    const auto& g = self.grad;
    if (double* ga = pgrad(self, 0))
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    if (double* gb = pgrad(self, 1))
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  std::vector<double> out(a.size());
  const auto x = a.data(), y = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * y[i];
  return make_result(a.shape(), std::move(out), {a, b}, [](Node& self) {
    const auto& g = self.grad;
    const double* x = pval(self, 0);
    const double* y = pval(self, 1);
    if (double* ga = pgrad(self, 0))
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * y[i];
    if (double* gb = pgrad(self, 1))
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * x[i];
  });
}

Tensor scale(const Tensor& a, double s) {
  std::vector<double> out(a.data().begin(), a.data().end());
  for (auto& v : out) v *= s;
  return make_result(a.shape(), std::move(out), {a}, [s](Node& self) {
    double* ga = pgrad(self, 0);
    const auto& g = self.grad;
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += s * g[i];
  });
}

Tensor add_bias(const Tensor& x, const Tensor& bias) {
  const std::size_t n = x.cols();
  if (bias.size() != n) {
    throw DimensionError("add_bias: bias " + shape_str(bias.shape()) + " vs last axis of " + shape_str(x.shape()));
  }
  const std::size_t rows = x.rows();
  std::vector<double> out(x.data().begin(), x.data().end());
  const auto b = bias.data();
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < n; ++c) out[r * n + c] += b[c];
  return make_result(x.shape(), std::move(out), {x, bias}, [rows, n](Node& self) {
    const auto& g = self.grad;
    if (double* gx = pgrad(self, 0))
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
    if (double* gb = pgrad(self, 1))
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < n; ++c) gb[c] += g[r * n + c];
  });
}

Tensor add_constant(const Tensor& x, std::span<const double> constant) {
  if (constant.size() != x.size()) throw DimensionError("add_constant: size mismatch");
  std::vector<double> out(x.data().begin(), x.data().end());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += constant[i];
  return make_result(x.shape(), std::move(out), {x}, [](Node& self) {
    double* gx = pgrad(self, 0);
    const auto& g = self.grad;
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
  });
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_numel(shape) != x.size()) {
    throw DimensionError("reshape: " + shape_str(x.shape()) + " to " + shape_str(shape));
  }
  std::vector<double> out(x.data().begin(), x.data().end());
  return make_result(std::move(shape), std::move(out), {x}, [](Node& self) {
    double* gx = pgrad(self, 0);
    const auto& g = self.grad;
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
  });
}

Tensor gelu(const Tensor& x) {
  const auto in = x.data();
  std::vector<double> out(in.size());
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = 0.5 * in[i] * (1.0 + std::erf(in[i] * std::numbers::sqrt2 / 2.0));
  return make_result(x.shape(), std::move(out), {x}, [](Node& self) {
    double* gx = pgrad(self, 0);
    const double* v = pval(self, 0);
    const auto& g = self.grad;
    const double inv_sqrt_2pi = 0.5 * std::numbers::inv_sqrtpi * std::numbers::sqrt2;
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double cdf = 0.5 * (1.0 + std::erf(v[i] * std::numbers::sqrt2 / 2.0));
      const double pdf = inv_sqrt_2pi * std::exp(-0.5 * v[i] * v[i]);
      gx[i] += g[i] * (cdf + v[i] * pdf);
    }
  });
}

Tensor softmax(const Tensor& x) {
  const std::size_t rows = x.rows(), n = x.cols();
  const auto in = x.data();
  std::vector<double> out(in.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = in.data() + r * n;
    double* o = out.data() + r * n;
    const double mx = *std::max_element(row, row + n);
    double z = 0.0;
    for (std::size_t c = 0; c < n; ++c) z += (o[c] = std::exp(row[c] - mx));
    for (std::size_t c = 0; c < n; ++c) o[c] /= z;
  }
  return make_result(x.shape(), std::move(out), {x}, [rows, n](Node& self) {
    double* gx = pgrad(self, 0);
    const double* y = self.value.data();
    const double* g = self.grad.data();
    for (std::size_t r = 0; r < rows; ++r) {
      double dot = 0.0;
      for (std::size_t c = 0; c < n; ++c) dot += g[r * n + c] * y[r * n + c];
      for (std::size_t c = 0; c < n; ++c) gx[r * n + c] += y[r * n + c] * (g[r * n + c] - dot);
    }
  });
}

Tensor log_softmax(const Tensor& x) {
  const std::size_t rows = x.rows(), n = x.cols();
  const auto in = x.data();
  std::vector<double> out(in.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = in.data() + r * n;
    const double mx = *std::max_element(row, row + n);
    double z = 0.0;
    for (std::size_t c = 0; c < n; ++c) z += std::exp(row[c] - mx);
    const double lse = mx + std::log(z);
    for (std::size_t c = 0; c < n; ++c) out[r * n + c] = row[c] - lse;
  }
  return make_result(x.shape(), std::move(out), {x}, [rows, n](Node& self) {
    double* gx = pgrad(self, 0);
    const double* y = self.value.data();
    const double* g = self.grad.data();
    for (std::size_t r = 0; r < rows; ++r) {
      double total = 0.0;
      for (std::size_t c = 0; c < n; ++c) total += g[r * n + c];
      for (std::size_t c = 0; c < n; ++c) gx[r * n + c] += g[r * n + c] - std::exp(y[r * n + c]) * total;
    }
  });
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
  const std::size_t rows = x.rows(), d = x.cols();
  if (gain.size() != d || bias.size() != d) throw DimensionError("layer_norm: gain/bias must match last axis");
  const auto in = x.data();
  const auto gm = gain.data(), bt = bias.data();
  std::vector<double> out(in.size()), xhat(in.size()), rstd(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = in.data() + r * d;
    double mu = 0.0;
    for (std::size_t c = 0; c < d; ++c) mu += row[c];
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t c = 0; c < d; ++c) var += (row[c] - mu) * (row[c] - mu);
    var /= static_cast<double>(d);
    rstd[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t c = 0; c < d; ++c) {
      xhat[r * d + c] = (row[c] - mu) * rstd[r];
      out[r * d + c] = xhat[r * d + c] * gm[c] + bt[c];
    }
  }
  return make_result(x.shape(), std::move(out), {x, gain, bias},
                     [rows, d, xhat = std::move(xhat), rstd = std::move(rstd)](Node& self) {
                       const double* g = self.grad.data();
                       const double* gm = pval(self, 1);
                       double* gx = pgrad(self, 0);
                       double* gg = pgrad(self, 1);
                       double* gb = pgrad(self, 2);
                       for (std::size_t r = 0; r < rows; ++r) {
                         const double* gr = g + r * d;
                         const double* xh = xhat.data() + r * d;
                         if (gg)
                           for (std::size_t c = 0; c < d; ++c) gg[c] += gr[c] * xh[c];
                         if (gb)
                           for (std::size_t c = 0; c < d; ++c) gb[c] += gr[c];
                         if (gx) {
                           double mean_dxh = 0.0, mean_dxh_xh = 0.0;
                           for (std::size_t c = 0; c < d; ++c) {
                             mean_dxh += gr[c] * gm[c];
                             mean_dxh_xh += gr[c] * gm[c] * xh[c];
                           }
                           mean_dxh /= static_cast<double>(d);
                           mean_dxh_xh /= static_cast<double>(d);
                           for (std::size_t c = 0; c < d; ++c) {
                             gx[r * d + c] += rstd[r] * (gr[c] * gm[c] - mean_dxh - xh[c] * mean_dxh_xh);
                           }
                         }
                       }
                     });
}

Tensor embedding(const Tensor& table, std::span<const int> ids) {
  require_matrix(table, "embedding");
  const std::size_t vocab = table.shape()[0], d = table.shape()[1];
  if (ids.empty()) throw DimensionError("embedding: empty id list");
  std::vector<int> idv(ids.begin(), ids.end());
  std::vector<double> out(idv.size() * d);
  const auto t = table.data();
  for (std::size_t i = 0; i < idv.size(); ++i) {
    if (idv[i] < 0 || static_cast<std::size_t>(idv[i]) >= vocab) {
      throw IndexError("embedding id " + std::to_string(idv[i]) + " outside table of " + std::to_string(vocab));
    }
    std::copy_n(t.data() + static_cast<std::size_t>(idv[i]) * d, d, out.data() + i * d);
  }
  const std::size_t n = idv.size();
  return make_result({n, d}, std::move(out), {table}, [d, idv = std::move(idv)](Node& self) {
    double* gt = pgrad(self, 0);
    const double* g = self.grad.data();
    for (std::size_t i = 0; i < idv.size(); ++i) {
      double* row = gt + static_cast<std::size_t>(idv[i]) * d;
      for (std::size_t c = 0; c < d; ++c) row[c] += g[i * d + c];
    }
  });
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw DimensionError("concat_cols: no inputs");
  const std::size_t rows = parts[0].rows();
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  for (const auto& p : parts) {
    require_matrix(p, "concat_cols");
    if (p.rows() != rows) throw DimensionError("concat_cols: row count mismatch");
    widths.push_back(p.cols());
    total += p.cols();
  }
  std::vector<double> out(rows * total);
  std::size_t off = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const auto v = parts[k].data();
    for (std::size_t r = 0; r < rows; ++r) std::copy_n(v.data() + r * widths[k], widths[k], out.data() + r * total + off);
    off += widths[k];
  }
  return make_result_vec({rows, total}, std::move(out), parts, [rows, total, widths](Node& self) {
    const double* g = self.grad.data();
    std::size_t off = 0;
    for (std::size_t k = 0; k < widths.size(); ++k) {
      if (double* gp = pgrad(self, k)) {
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t c = 0; c < widths[k]; ++c) gp[r * widths[k] + c] += g[r * total + off + c];
      }
      off += widths[k];
    }
  });
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw DimensionError("concat_rows: no inputs");
  const std::size_t cols = parts[0].cols();
  std::vector<std::size_t> sizes;
  std::size_t rows = 0;
  for (const auto& p : parts) {
    if (p.cols() != cols) throw DimensionError("concat_rows: column count mismatch");
    sizes.push_back(p.size());
    rows += p.rows();
  }
  std::vector<double> out;
  out.reserve(rows * cols);
  for (const auto& p : parts) out.insert(out.end(), p.data().begin(), p.data().end());
  return make_result_vec({rows, cols}, std::move(out), parts, [sizes](Node& self) {
    const double* g = self.grad.data();
    std::size_t off = 0;
    for (std::size_t k = 0; k < sizes.size(); ++k) {
      if (double* gp = pgrad(self, k))
        for (std::size_t i = 0; i < sizes[k]; ++i) gp[i] += g[off + i];
      off += sizes[k];
    }
  });
}

Tensor slice_cols(const Tensor& x, std::size_t begin, std::size_t end) {
  require_matrix(x, "slice_cols");
  const std::size_t rows = x.rows(), n = x.cols();
  if (begin >= end || end > n) throw IndexError("slice_cols: bad range");
  const std::size_t w = end - begin;
  std::vector<double> out(rows * w);
  const auto v = x.data();
  for (std::size_t r = 0; r < rows; ++r) std::copy_n(v.data() + r * n + begin, w, out.data() + r * w);
  return make_result({rows, w}, std::move(out), {x}, [rows, n, w, begin](Node& self) {
    double* gx = pgrad(self, 0);
    const double* g = self.grad.data();
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < w; ++c) gx[r * n + begin + c] += g[r * w + c];
  });
}

Tensor slice_rows(const Tensor& x, std::size_t begin, std::size_t end) {
  const std::size_t rows = x.rows(), n = x.cols();
  if (begin >= end || end > rows) throw IndexError("slice_rows: bad range");
  std::vector<double> out(x.data().begin() + static_cast<std::ptrdiff_t>(begin * n),
                          x.data().begin() + static_cast<std::ptrdiff_t>(end * n));
  return make_result({end - begin, n}, std::move(out), {x}, [n, begin](Node& self) {
    double* gx = pgrad(self, 0) + begin * n;
    const auto& g = self.grad;
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
  });
}

Tensor gather_rows(const Tensor& x, std::span<const std::size_t> rows) {
  const std::size_t n = x.cols();
  if (rows.empty()) throw DimensionError("gather_rows: empty index list");
  std::vector<std::size_t> idx(rows.begin(), rows.end());
  std::vector<double> out(idx.size() * n);
  const auto v = x.data();
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] >= x.rows()) throw IndexError("gather_rows: row " + std::to_string(idx[i]));
    std::copy_n(v.data() + idx[i] * n, n, out.data() + i * n);
  }
  const std::size_t count = idx.size();
  return make_result({count, n}, std::move(out), {x}, [n, idx = std::move(idx)](Node& self) {
    double* gx = pgrad(self, 0);
    const double* g = self.grad.data();
    for (std::size_t i = 0; i < idx.size(); ++i)
      for (std::size_t c = 0; c < n; ++c) gx[idx[i] * n + c] += g[i * n + c];
  });
}

Tensor select_cols(const Tensor& x, std::span<const std::size_t> cols) {
  const std::size_t rows = x.rows(), n = x.cols();
  if (cols.empty()) throw DimensionError("select_cols: empty index list");
  std::vector<std::size_t> idx(cols.begin(), cols.end());
  for (auto c : idx)
    if (c >= n) throw IndexError("select_cols: column " + std::to_string(c));
  const std::size_t w = idx.size();
  std::vector<double> out(rows * w);
  const auto v = x.data();
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t j = 0; j < w; ++j) out[r * w + j] = v[r * n + idx[j]];
  return make_result({rows, w}, std::move(out), {x}, [rows, n, w, idx = std::move(idx)](Node& self) {
    double* gx = pgrad(self, 0);
    const double* g = self.grad.data();
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t j = 0; j < w; ++j) gx[r * n + idx[j]] += g[r * w + j];
  });
}

Tensor sum(const Tensor& x) {
  double s = 0.0;
  for (double v : x.data()) s += v;
  return make_result({1}, {s}, {x}, [](Node& self) {
    double* gx = pgrad(self, 0);
    const double g = self.grad[0];
    const std::size_t n = self.parents[0]->value.size();
    for (std::size_t i = 0; i < n; ++i) gx[i] += g;
  });
}

Tensor mean(const Tensor& x) { return scale(sum(x), 1.0 / static_cast<double>(x.size())); }

Tensor cross_entropy(const Tensor& logits, int target) {
  if (target < 0 || static_cast<std::size_t>(target) >= logits.size()) {
    throw IndexError("cross_entropy: target " + std::to_string(target) + " outside " + std::to_string(logits.size()) +
                     " classes");
  }
  Tensor row = logits.rank() == 1 ? reshape(logits, {1, logits.size()}) : logits;
  if (row.rows() != 1) throw DimensionError("cross_entropy expects a single logit vector");
  const int t[1] = {target};
  return cross_entropy_sum(row, t);
}

Tensor cross_entropy_sum(const Tensor& logits, std::span<const int> targets) {
  const std::size_t rows = logits.rows(), n = logits.cols();
  if (targets.size() != rows) throw DimensionError("cross_entropy_sum: one target per row required");
  std::vector<int> tv(targets.begin(), targets.end());
  std::vector<double> probs(rows * n, 0.0);
  const auto in = logits.data();
  double loss = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    if (tv[r] < 0) continue;
    if (static_cast<std::size_t>(tv[r]) >= n) {
      throw IndexError("cross_entropy: target " + std::to_string(tv[r]) + " outside " + std::to_string(n) + " classes");
    }
    const double* row = in.data() + r * n;
    const double mx = *std::max_element(row, row + n);
    double z = 0.0;
    for (std::size_t c = 0; c < n; ++c) z += (probs[r * n + c] = std::exp(row[c] - mx));
    for (std::size_t c = 0; c < n; ++c) probs[r * n + c] /= z;
    loss += -(row[tv[r]] - mx - std::log(z));
  }
  return make_result({1}, {loss}, {logits}, [rows, n, tv = std::move(tv), probs = std::move(probs)](Node& self) {
    double* gx = pgrad(self, 0);
    const double g = self.grad[0];
    for (std::size_t r = 0; r < rows; ++r) {
      if (tv[r] < 0) continue;
      for (std::size_t c = 0; c < n; ++c) gx[r * n + c] += g * probs[r * n + c];
      gx[r * n + static_cast<std::size_t>(tv[r])] -= g;
    }
  });
}

}  // namespace vitlp::ops
