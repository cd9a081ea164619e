#pragma once

#include <algorithm>
#include <cmath>

#include "mcmi/nn/tensor.hpp"

namespace mcmi::nn {

namespace detail {
template <class S>
void check_same_shape(const Tensor<S>& a, const Tensor<S>& b, const char* op) {
  if (a.shape() != b.shape())
    throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                                " vs " + shape_str(b.shape()));
}
}  // namespace detail

template <class S>
Tensor<S> add(const Tensor<S>& a, const Tensor<S>& b) {
  detail::check_same_shape(a, b, "add");
  std::vector<S> v(a.size());
  for (std::int64_t i = 0; i < a.size(); ++i) v[i] = a.data()[i] + b.data()[i];
  return make_op<S>(a.shape(), std::move(v), {a, b}, [](Node<S>& n) {
    for (int k = 0; k < 2; ++k) {
      auto& in = *n.inputs[k];
      if (!in.needs) continue;
      for (std::size_t i = 0; i < n.grad.size(); ++i) in.grad[i] += n.grad[i];
    }
  });
}

template <class S>
Tensor<S> sub(const Tensor<S>& a, const Tensor<S>& b) {
  detail::check_same_shape(a, b, "sub");
  std::vector<S> v(a.size());
  for (std::int64_t i = 0; i < a.size(); ++i) v[i] = a.data()[i] - b.data()[i];
  return make_op<S>(a.shape(), std::move(v), {a, b}, [](Node<S>& n) {
    if (n.inputs[0]->needs)
      for (std::size_t i = 0; i < n.grad.size(); ++i) n.inputs[0]->grad[i] += n.grad[i];
    if (n.inputs[1]->needs)
      for (std::size_t i = 0; i < n.grad.size(); ++i) n.inputs[1]->grad[i] -= n.grad[i];
  });
}

template <class S>
Tensor<S> mul(const Tensor<S>& a, const Tensor<S>& b) {
  detail::check_same_shape(a, b, "mul");
  std::vector<S> v(a.size());
  for (std::int64_t i = 0; i < a.size(); ++i) v[i] = a.data()[i] * b.data()[i];
  return make_op<S>(a.shape(), std::move(v), {a, b}, [](Node<S>& n) {
    auto& ia = *n.inputs[0];
    auto& ib = *n.inputs[1];
    if (ia.needs)
      for (std::size_t i = 0; i < n.grad.size(); ++i) ia.grad[i] += n.grad[i] * ib.value[i];
    if (ib.needs)
      for (std::size_t i = 0; i < n.grad.size(); ++i) ib.grad[i] += n.grad[i] * ia.value[i];
  });
}

template <class S>
Tensor<S> scale(const Tensor<S>& a, S c) {
  std::vector<S> v(a.size());
  for (std::int64_t i = 0; i < a.size(); ++i) v[i] = a.data()[i] * c;
  return make_op<S>(a.shape(), std::move(v), {a}, [c](Node<S>& n) {
    auto& in = *n.inputs[0];
    if (!in.needs) return;
    for (std::size_t i = 0; i < n.grad.size(); ++i) in.grad[i] += n.grad[i] * c;
  });
}

template <class S>
Tensor<S> add_scalar(const Tensor<S>& a, S c) {
  std::vector<S> v(a.size());
  for (std::int64_t i = 0; i < a.size(); ++i) v[i] = a.data()[i] + c;
  return make_op<S>(a.shape(), std::move(v), {a}, [](Node<S>& n) {
    auto& in = *n.inputs[0];
    if (!in.needs) return;
    for (std::size_t i = 0; i < n.grad.size(); ++i) in.grad[i] += n.grad[i];
  });
}

template <class S>
Tensor<S> sum(const Tensor<S>& a) {
  S acc = 0;
  for (std::int64_t i = 0; i < a.size(); ++i) acc += a.data()[i];
  return make_op<S>({}, {acc}, {a}, [](Node<S>& n) {
    auto& in = *n.inputs[0];
    if (!in.needs) return;
    for (auto& g : in.grad) g += n.grad[0];
  });
}

template <class S>
Tensor<S> mean(const Tensor<S>& a) {
  if (a.size() == 0) throw std::invalid_argument("mean: empty tensor");
  S acc = 0;
  for (std::int64_t i = 0; i < a.size(); ++i) acc += a.data()[i];
  const S inv = S(1) / static_cast<S>(a.size());
  return make_op<S>({}, {acc * inv}, {a}, [inv](Node<S>& n) {
    auto& in = *n.inputs[0];
    if (!in.needs) return;
    for (auto& g : in.grad) g += n.grad[0] * inv;
  });
}

template <class S>
Tensor<S> abs(const Tensor<S>& a) {
  std::vector<S> v(a.size());
  for (std::int64_t i = 0; i < a.size(); ++i) v[i] = std::abs(a.data()[i]);
  return make_op<S>(a.shape(), std::move(v), {a}, [](Node<S>& n) {
    auto& in = *n.inputs[0];
    if (!in.needs) return;
    for (std::size_t i = 0; i < n.grad.size(); ++i) {
      S x = in.value[i];
      in.grad[i] += n.grad[i] * (x > 0 ? S(1) : (x < 0 ? S(-1) : S(0)));
    }
  });
}

template <class S>
Tensor<S> relu(const Tensor<S>& a) {
  std::vector<S> v(a.size());
  for (std::int64_t i = 0; i < a.size(); ++i) v[i] = a.data()[i] > 0 ? a.data()[i] : S(0);
  return make_op<S>(a.shape(), std::move(v), {a}, [](Node<S>& n) {
    auto& in = *n.inputs[0];
    if (!in.needs) return;
    for (std::size_t i = 0; i < n.grad.size(); ++i)
      if (in.value[i] > 0) in.grad[i] += n.grad[i];
  });
}

template <class S>
Tensor<S> leaky_relu(const Tensor<S>& a, S slope) {
  std::vector<S> v(a.size());
  for (std::int64_t i = 0; i < a.size(); ++i) {
    S x = a.data()[i];
    v[i] = x > 0 ? x : slope * x;
  }
  return make_op<S>(a.shape(), std::move(v), {a}, [slope](Node<S>& n) {
    auto& in = *n.inputs[0];
    if (!in.needs) return;
    for (std::size_t i = 0; i < n.grad.size(); ++i)
      in.grad[i] += n.grad[i] * (in.value[i] > 0 ? S(1) : slope);
  });
}

template <class S>
Tensor<S> tanh(const Tensor<S>& a) {
  std::vector<S> v(a.size());
  for (std::int64_t i = 0; i < a.size(); ++i) v[i] = std::tanh(a.data()[i]);
  return make_op<S>(a.shape(), std::move(v), {a}, [](Node<S>& n) {
    auto& in = *n.inputs[0];
    if (!in.needs) return;
    for (std::size_t i = 0; i < n.grad.size(); ++i) {
      S y = n.value[i];
      in.grad[i] += n.grad[i] * (S(1) - y * y);
    }
  });
}

// mean((a - c)^2); the least-squares GAN criterion against a constant target.
template <class S>
Tensor<S> mean_squared_to(const Tensor<S>& a, S c) {
  S acc = 0;
  for (std::int64_t i = 0; i < a.size(); ++i) {
    S d = a.data()[i] - c;
    acc += d * d;
  }
  const S inv = S(1) / static_cast<S>(a.size());
  return make_op<S>({}, {acc * inv}, {a}, [c, inv](Node<S>& n) {
    auto& in = *n.inputs[0];
    if (!in.needs) return;
    for (std::size_t i = 0; i < in.value.size(); ++i)
      in.grad[i] += n.grad[0] * S(2) * (in.value[i] - c) * inv;
  });
}

template <class S>
Tensor<S> l1_loss(const Tensor<S>& a, const Tensor<S>& b) {
  detail::check_same_shape(a, b, "l1_loss");
  S acc = 0;
  for (std::int64_t i = 0; i < a.size(); ++i) acc += std::abs(a.data()[i] - b.data()[i]);
  const S inv = S(1) / static_cast<S>(a.size());
  return make_op<S>({}, {acc * inv}, {a, b}, [inv](Node<S>& n) {
    auto& ia = *n.inputs[0];
    auto& ib = *n.inputs[1];
    for (std::size_t i = 0; i < ia.value.size(); ++i) {
      S d = ia.value[i] - ib.value[i];
      S s = d > 0 ? S(1) : (d < 0 ? S(-1) : S(0));
      if (ia.needs) ia.grad[i] += n.grad[0] * s * inv;
      if (ib.needs) ib.grad[i] -= n.grad[0] * s * inv;
    }
  });
}

// a: [M, D], b: [N, D]  ->  [M, N] of row dot products.
template <class S>
Tensor<S> matmul_nt(const Tensor<S>& a, const Tensor<S>& b) {
  if (a.shape().size() != 2 || b.shape().size() != 2 || a.shape()[1] != b.shape()[1])
    throw std::invalid_argument("matmul_nt: need [M,D] and [N,D], got " + shape_str(a.shape()) +
                                " and " + shape_str(b.shape()));
  const int m = a.shape()[0], d = a.shape()[1], nn = b.shape()[0];
  std::vector<S> v(static_cast<std::size_t>(m) * nn);
  gemm(false, true, m, nn, d, S(1), a.data(), d, b.data(), d, S(0), v.data());
  return make_op<S>({m, nn}, std::move(v), {a, b}, [m, d, nn](Node<S>& n) {
    auto& ia = *n.inputs[0];
    auto& ib = *n.inputs[1];
    if (ia.needs) gemm(false, false, m, d, nn, S(1), n.grad.data(), nn, ib.value.data(), d, S(1), ia.grad.data(), d);
    if (ib.needs) gemm(true, false, nn, d, m, S(1), n.grad.data(), nn, ia.value.data(), d, S(1), ib.grad.data(), d);
  });
}

// Row-wise L2 normalization of [R, D]; all-zero rows stay zero so degenerate
// embeddings read as "no correlation" rather than dividing by zero.
template <class S>
Tensor<S> row_l2_normalize(const Tensor<S>& a) {
  if (a.shape().size() != 2) throw std::invalid_argument("row_l2_normalize: need [R,D]");
  const int r = a.shape()[0], d = a.shape()[1];
  std::vector<S> v(a.size());
  std::vector<S> norms(r);
  for (int i = 0; i < r; ++i) {
    S s = 0;
    const S* row = a.data() + static_cast<std::size_t>(i) * d;
    for (int j = 0; j < d; ++j) s += row[j] * row[j];
    S nrm = std::sqrt(s);
    norms[i] = nrm;
    S inv = nrm > 0 ? S(1) / nrm : S(0);
    for (int j = 0; j < d; ++j) v[static_cast<std::size_t>(i) * d + j] = row[j] * inv;
  }
  return make_op<S>(a.shape(), std::move(v), {a}, [r, d, norms](Node<S>& n) {
    auto& in = *n.inputs[0];
    if (!in.needs) return;
    for (int i = 0; i < r; ++i) {
      if (norms[i] <= 0) continue;
      const S inv = S(1) / norms[i];
      const S* y = n.value.data() + static_cast<std::size_t>(i) * d;
      const S* gy = n.grad.data() + static_cast<std::size_t>(i) * d;
      S dot = 0;
      for (int j = 0; j < d; ++j) dot += gy[j] * y[j];
      S* gx = in.grad.data() + static_cast<std::size_t>(i) * d;
      for (int j = 0; j < d; ++j) gx[j] += (gy[j] - dot * y[j]) * inv;
    }
  });
}

// Select rows of [R, D] by index (duplicates allowed); backward scatter-adds.
template <class S>
Tensor<S> gather_rows(const Tensor<S>& a, std::vector<int> idx) {
  if (a.shape().size() != 2) throw std::invalid_argument("gather_rows: need [R,D]");
  const int r = a.shape()[0], d = a.shape()[1];
  for (int i : idx)
    if (i < 0 || i >= r) throw std::out_of_range("gather_rows: index out of range");
  std::vector<S> v(idx.size() * static_cast<std::size_t>(d));
  for (std::size_t k = 0; k < idx.size(); ++k)
    std::copy_n(a.data() + static_cast<std::size_t>(idx[k]) * d, d, v.data() + k * d);
  return make_op<S>({static_cast<int>(idx.size()), d}, std::move(v), {a},
                    [d, idx](Node<S>& n) {
                      auto& in = *n.inputs[0];
                      if (!in.needs) return;
                      for (std::size_t k = 0; k < idx.size(); ++k) {
                        const S* g = n.grad.data() + k * d;
                        S* dst = in.grad.data() + static_cast<std::size_t>(idx[k]) * d;
                        for (int j = 0; j < d; ++j) dst[j] += g[j];
                      }
                    });
}

// Concatenate along dim 0; shapes must agree on the remaining dims.
template <class S>
Tensor<S> concat0(const std::vector<Tensor<S>>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat0: no inputs");
  Shape shp = parts[0].shape();
  if (shp.empty()) throw std::invalid_argument("concat0: scalars not supported");
  std::int64_t total = 0;
  for (const auto& p : parts) {
    Shape rest = p.shape();
    if (rest.empty()) throw std::invalid_argument("concat0: scalars not supported");
    Shape a(shp.begin() + 1, shp.end()), b(rest.begin() + 1, rest.end());
    if (a != b) throw std::invalid_argument("concat0: trailing dims mismatch");
    total += p.shape()[0];
  }
  shp[0] = static_cast<int>(total);
  std::vector<S> v;
  v.reserve(numel(shp));
  for (const auto& p : parts) v.insert(v.end(), p.data(), p.data() + p.size());
  std::vector<std::int64_t> sizes;
  for (const auto& p : parts) sizes.push_back(p.size());
  return make_op<S>(std::move(shp), std::move(v), parts, [sizes](Node<S>& n) {
    std::int64_t off = 0;
    for (std::size_t k = 0; k < n.inputs.size(); ++k) {
      auto& in = *n.inputs[k];
      if (in.needs)
        for (std::int64_t i = 0; i < sizes[k]; ++i) in.grad[i] += n.grad[off + i];
      off += sizes[k];
    }
  });
}

// Contiguous slice along dim 0.
template <class S>
Tensor<S> slice0(const Tensor<S>& a, int start, int len) {
  if (a.shape().empty()) throw std::invalid_argument("slice0: scalar input");
  const int n0 = a.shape()[0];
  if (start < 0 || len < 0 || start + len > n0) throw std::out_of_range("slice0: bad range");
  std::int64_t inner = numel(a.shape()) / n0;
  Shape shp = a.shape();
  shp[0] = len;
  std::vector<S> v(a.data() + start * inner, a.data() + (start + len) * inner);
  return make_op<S>(std::move(shp), std::move(v), {a}, [start, inner](Node<S>& n) {
    auto& in = *n.inputs[0];
    if (!in.needs) return;
    for (std::size_t i = 0; i < n.grad.size(); ++i) in.grad[start * inner + i] += n.grad[i];
  });
}

template <class S>
Tensor<S> add_scalars(std::vector<Tensor<S>> terms) {
  if (terms.empty()) return Tensor<S>::scalar(S(0));
  Tensor<S> acc = terms[0];
  for (std::size_t i = 1; i < terms.size(); ++i) acc = add(acc, terms[i]);
  return acc;
}

}  // namespace mcmi::nn
