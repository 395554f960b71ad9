#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "dispdiff/rng.hpp"
#include "dispdiff/tensor.hpp"

// Differentiable primitive set. Every op takes an optional tape; when the
// tape is null or no input is tracked, the op is a plain array computation.
// Reductions run in fixed left-to-right order so repeated evaluation is
// bit-identical.

namespace dispdiff::ops {

namespace detail {

inline bool tracked(Tape* tape, const Tensor& t) { return tape != nullptr && tape->tracks(t); }

inline void check_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (!same_shape(a, b))
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape) + " vs " +
                     shape_str(b.shape));
}

inline void check_2d(const char* op, const Tensor& a) {
  if (a.ndim() != 2) throw ShapeError(std::string(op) + ": expected 2-d tensor, got " + shape_str(a.shape));
}

// Row vector b broadcast over the rows of a; returns the row width.
inline int check_rowvec(const char* op, const Tensor& a, const Tensor& b) {
  check_2d(op, a);
  int f = a.shape[1];
  bool ok = (b.ndim() == 1 && b.shape[0] == f) ||
            (b.ndim() == 2 && b.shape[0] == 1 && b.shape[1] == f);
  if (!ok)
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape) + " vs " +
                     shape_str(b.shape));
  return f;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// elementwise

inline Tensor add(Tape* tape, const Tensor& a, const Tensor& b) {
  detail::check_same_shape("add", a, b);
  Tensor out = Tensor::zeros(a.shape);
  const auto& av = *a.data;
  const auto& bv = *b.data;
  auto& ov = *out.data;
  for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] + bv[i];
  bool ta = detail::tracked(tape, a), tb = detail::tracked(tape, b);
  if (ta || tb) {
    int na = ta ? a.node : -1, nb = tb ? b.node : -1;
    int node = tape->add_node(out.numel(), {na, nb},
                              [na, nb](Tape& tp, const std::vector<double>& dy) {
                                if (na >= 0) {
                                  auto& da = tp.grad_buf(na);
                                  for (std::size_t i = 0; i < dy.size(); ++i) da[i] += dy[i];
                                }
                                if (nb >= 0) {
                                  auto& db = tp.grad_buf(nb);
                                  for (std::size_t i = 0; i < dy.size(); ++i) db[i] += dy[i];
                                }
                              });
    tape->adopt(out, node);
  }
  return out;
}

inline Tensor sub(Tape* tape, const Tensor& a, const Tensor& b) {
  detail::check_same_shape("sub", a, b);
  Tensor out = Tensor::zeros(a.shape);
  const auto& av = *a.data;
  const auto& bv = *b.data;
  auto& ov = *out.data;
  for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] - bv[i];
  bool ta = detail::tracked(tape, a), tb = detail::tracked(tape, b);
  if (ta || tb) {
    int na = ta ? a.node : -1, nb = tb ? b.node : -1;
    int node = tape->add_node(out.numel(), {na, nb},
                              [na, nb](Tape& tp, const std::vector<double>& dy) {
                                if (na >= 0) {
                                  auto& da = tp.grad_buf(na);
                                  for (std::size_t i = 0; i < dy.size(); ++i) da[i] += dy[i];
                                }
                                if (nb >= 0) {
                                  auto& db = tp.grad_buf(nb);
                                  for (std::size_t i = 0; i < dy.size(); ++i) db[i] -= dy[i];
                                }
                              });
    tape->adopt(out, node);
  }
  return out;
}

inline Tensor mul(Tape* tape, const Tensor& a, const Tensor& b) {
  detail::check_same_shape("mul", a, b);
  Tensor out = Tensor::zeros(a.shape);
  const auto& av = *a.data;
  const auto& bv = *b.data;
  auto& ov = *out.data;
  for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] * bv[i];
  bool ta = detail::tracked(tape, a), tb = detail::tracked(tape, b);
  if (ta || tb) {
    int na = ta ? a.node : -1, nb = tb ? b.node : -1;
    auto ad = a.data, bd = b.data;
    int node = tape->add_node(out.numel(), {na, nb},
                              [na, nb, ad, bd](Tape& tp, const std::vector<double>& dy) {
                                if (na >= 0) {
                                  auto& da = tp.grad_buf(na);
                                  for (std::size_t i = 0; i < dy.size(); ++i) da[i] += dy[i] * (*bd)[i];
                                }
                                if (nb >= 0) {
                                  auto& db = tp.grad_buf(nb);
                                  for (std::size_t i = 0; i < dy.size(); ++i) db[i] += dy[i] * (*ad)[i];
                                }
                              });
    tape->adopt(out, node);
  }
  return out;
}

inline Tensor neg(Tape* tape, const Tensor& a) {
  Tensor out = Tensor::zeros(a.shape);
  const auto& av = *a.data;
  auto& ov = *out.data;
  for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = -av[i];
  if (detail::tracked(tape, a)) {
    int na = a.node;
    int node = tape->add_node(out.numel(), {na},
                              [na](Tape& tp, const std::vector<double>& dy) {
                                auto& da = tp.grad_buf(na);
                                for (std::size_t i = 0; i < dy.size(); ++i) da[i] -= dy[i];
                              });
    tape->adopt(out, node);
  }
  return out;
}

// scalar broadcast: out = a * c
inline Tensor scale(Tape* tape, const Tensor& a, double c) {
  Tensor out = Tensor::zeros(a.shape);
  const auto& av = *a.data;
  auto& ov = *out.data;
  for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] * c;
  if (detail::tracked(tape, a)) {
    int na = a.node;
    int node = tape->add_node(out.numel(), {na},
                              [na, c](Tape& tp, const std::vector<double>& dy) {
                                auto& da = tp.grad_buf(na);
                                for (std::size_t i = 0; i < dy.size(); ++i) da[i] += dy[i] * c;
                              });
    tape->adopt(out, node);
  }
  return out;
}

// scalar broadcast: out = a + c
inline Tensor add_scalar(Tape* tape, const Tensor& a, double c) {
  Tensor out = Tensor::zeros(a.shape);
  const auto& av = *a.data;
  auto& ov = *out.data;
  for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] + c;
  if (detail::tracked(tape, a)) {
    int na = a.node;
    int node = tape->add_node(out.numel(), {na},
                              [na](Tape& tp, const std::vector<double>& dy) {
                                auto& da = tp.grad_buf(na);
                                for (std::size_t i = 0; i < dy.size(); ++i) da[i] += dy[i];
                              });
    tape->adopt(out, node);
  }
  return out;
}

// out[i,j] = a[i,j] + b[j]
inline Tensor add_rowvec(Tape* tape, const Tensor& a, const Tensor& b) {
  int f = detail::check_rowvec("add_rowvec", a, b);
  int n = a.shape[0];
  Tensor out = Tensor::zeros(a.shape);
  const auto& av = *a.data;
  const auto& bv = *b.data;
  auto& ov = *out.data;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < f; ++j) ov[std::size_t(i) * f + j] = av[std::size_t(i) * f + j] + bv[std::size_t(j)];
  bool ta = detail::tracked(tape, a), tb = detail::tracked(tape, b);
  if (ta || tb) {
    int na = ta ? a.node : -1, nb = tb ? b.node : -1;
    int node = tape->add_node(out.numel(), {na, nb},
                              [na, nb, n, f](Tape& tp, const std::vector<double>& dy) {
                                if (na >= 0) {
                                  auto& da = tp.grad_buf(na);
                                  for (std::size_t i = 0; i < dy.size(); ++i) da[i] += dy[i];
                                }
                                if (nb >= 0) {
                                  auto& db = tp.grad_buf(nb);
                                  for (int i = 0; i < n; ++i)
                                    for (int j = 0; j < f; ++j) db[std::size_t(j)] += dy[std::size_t(i) * f + j];
                                }
                              });
    tape->adopt(out, node);
  }
  return out;
}

// out[i,j] = a[i,j] * b[j]
inline Tensor mul_rowvec(Tape* tape, const Tensor& a, const Tensor& b) {
  int f = detail::check_rowvec("mul_rowvec", a, b);
  int n = a.shape[0];
  Tensor out = Tensor::zeros(a.shape);
  const auto& av = *a.data;
  const auto& bv = *b.data;
  auto& ov = *out.data;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < f; ++j) ov[std::size_t(i) * f + j] = av[std::size_t(i) * f + j] * bv[std::size_t(j)];
  bool ta = detail::tracked(tape, a), tb = detail::tracked(tape, b);
  if (ta || tb) {
    int na = ta ? a.node : -1, nb = tb ? b.node : -1;
    auto ad = a.data, bd = b.data;
    int node = tape->add_node(out.numel(), {na, nb},
                              [na, nb, n, f, ad, bd](Tape& tp, const std::vector<double>& dy) {
                                if (na >= 0) {
                                  auto& da = tp.grad_buf(na);
                                  for (int i = 0; i < n; ++i)
                                    for (int j = 0; j < f; ++j)
                                      da[std::size_t(i) * f + j] += dy[std::size_t(i) * f + j] * (*bd)[std::size_t(j)];
                                }
                                if (nb >= 0) {
                                  auto& db = tp.grad_buf(nb);
                                  for (int i = 0; i < n; ++i)
                                    for (int j = 0; j < f; ++j)
                                      db[std::size_t(j)] += dy[std::size_t(i) * f + j] * (*ad)[std::size_t(i) * f + j];
                                }
                              });
    tape->adopt(out, node);
  }
  return out;
}

// ---------------------------------------------------------------------------
// unary nonlinearities

inline Tensor exp(Tape* tape, const Tensor& a) {
  Tensor out = Tensor::zeros(a.shape);
  const auto& av = *a.data;
  auto& ov = *out.data;
  for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = std::exp(av[i]);
  if (detail::tracked(tape, a)) {
    int na = a.node;
    auto od = out.data;
    int node = tape->add_node(out.numel(), {na},
                              [na, od](Tape& tp, const std::vector<double>& dy) {
                                auto& da = tp.grad_buf(na);
                                for (std::size_t i = 0; i < dy.size(); ++i) da[i] += dy[i] * (*od)[i];
                              });
    tape->adopt(out, node);
  }
  return out;
}

inline Tensor log(Tape* tape, const Tensor& a) {
  Tensor out = Tensor::zeros(a.shape);
  const auto& av = *a.data;
  auto& ov = *out.data;
  for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = std::log(av[i]);
  if (detail::tracked(tape, a)) {
    int na = a.node;
    auto ad = a.data;
    int node = tape->add_node(out.numel(), {na},
                              [na, ad](Tape& tp, const std::vector<double>& dy) {
                                auto& da = tp.grad_buf(na);
                                for (std::size_t i = 0; i < dy.size(); ++i) da[i] += dy[i] / (*ad)[i];
                              });
    tape->adopt(out, node);
  }
  return out;
}

inline Tensor square(Tape* tape, const Tensor& a) {
  Tensor out = Tensor::zeros(a.shape);
  const auto& av = *a.data;
  auto& ov = *out.data;
  for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] * av[i];
  if (detail::tracked(tape, a)) {
    int na = a.node;
    auto ad = a.data;
    int node = tape->add_node(out.numel(), {na},
                              [na, ad](Tape& tp, const std::vector<double>& dy) {
                                auto& da = tp.grad_buf(na);
                                for (std::size_t i = 0; i < dy.size(); ++i) da[i] += 2.0 * dy[i] * (*ad)[i];
                              });
    tape->adopt(out, node);
  }
  return out;
}

inline Tensor sigmoid(Tape* tape, const Tensor& a) {
  Tensor out = Tensor::zeros(a.shape);
  const auto& av = *a.data;
  auto& ov = *out.data;
  for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = 1.0 / (1.0 + std::exp(-av[i]));
  if (detail::tracked(tape, a)) {
    int na = a.node;
    auto od = out.data;
    int node = tape->add_node(out.numel(), {na},
                              [na, od](Tape& tp, const std::vector<double>& dy) {
                                auto& da = tp.grad_buf(na);
                                for (std::size_t i = 0; i < dy.size(); ++i) {
                                  double s = (*od)[i];
                                  da[i] += dy[i] * s * (1.0 - s);
                                }
                              });
    tape->adopt(out, node);
  }
  return out;
}

inline Tensor silu(Tape* tape, const Tensor& a) {
  Tensor out = Tensor::zeros(a.shape);
  const auto& av = *a.data;
  auto& ov = *out.data;
  for (std::size_t i = 0; i < ov.size(); ++i) {
    double s = 1.0 / (1.0 + std::exp(-av[i]));
    ov[i] = av[i] * s;
  }
  if (detail::tracked(tape, a)) {
    int na = a.node;
    auto ad = a.data;
    int node = tape->add_node(out.numel(), {na},
                              [na, ad](Tape& tp, const std::vector<double>& dy) {
                                auto& da = tp.grad_buf(na);
                                for (std::size_t i = 0; i < dy.size(); ++i) {
                                  double x = (*ad)[i];
                                  double s = 1.0 / (1.0 + std::exp(-x));
                                  da[i] += dy[i] * s * (1.0 + x * (1.0 - s));
                                }
                              });
    tape->adopt(out, node);
  }
  return out;
}

// ---------------------------------------------------------------------------
// matrix / structural

inline Tensor matmul(Tape* tape, const Tensor& a, const Tensor& b) {
  detail::check_2d("matmul", a);
  detail::check_2d("matmul", b);
  if (a.shape[1] != b.shape[0])
    throw ShapeError("matmul: shape mismatch " + shape_str(a.shape) + " vs " + shape_str(b.shape));
  int m = a.shape[0], k = a.shape[1], n = b.shape[1];
  Tensor out = Tensor::zeros({m, n});
  const double* av = a.data->data();
  const double* bv = b.data->data();
  double* ov = out.data->data();
  for (int i = 0; i < m; ++i) {
    for (int p = 0; p < k; ++p) {
      double aip = av[std::size_t(i) * k + p];
      const double* brow = bv + std::size_t(p) * n;
      double* orow = ov + std::size_t(i) * n;
      for (int j = 0; j < n; ++j) orow[j] += aip * brow[j];
    }
  }
  bool ta = detail::tracked(tape, a), tb = detail::tracked(tape, b);
  if (ta || tb) {
    int na = ta ? a.node : -1, nb = tb ? b.node : -1;
    auto ad = a.data, bd = b.data;
    int node = tape->add_node(out.numel(), {na, nb},
                              [na, nb, ad, bd, m, k, n](Tape& tp, const std::vector<double>& dy) {
                                if (na >= 0) {
                                  // dA = dY * B^T
                                  auto& da = tp.grad_buf(na);
                                  const double* bv2 = bd->data();
                                  for (int i = 0; i < m; ++i)
                                    for (int p = 0; p < k; ++p) {
                                      double acc = 0.0;
                                      const double* dyrow = dy.data() + std::size_t(i) * n;
                                      const double* brow = bv2 + std::size_t(p) * n;
                                      for (int j = 0; j < n; ++j) acc += dyrow[j] * brow[j];
                                      da[std::size_t(i) * k + p] += acc;
                                    }
                                }
                                if (nb >= 0) {
                                  // dB = A^T * dY
                                  auto& db = tp.grad_buf(nb);
                                  const double* av2 = ad->data();
                                  for (int i = 0; i < m; ++i)
                                    for (int p = 0; p < k; ++p) {
                                      double aip = av2[std::size_t(i) * k + p];
                                      const double* dyrow = dy.data() + std::size_t(i) * n;
                                      double* dbrow = db.data() + std::size_t(p) * n;
                                      for (int j = 0; j < n; ++j) dbrow[j] += aip * dyrow[j];
                                    }
                                }
                              });
    tape->adopt(out, node);
  }
  return out;
}

inline Tensor transpose(Tape* tape, const Tensor& a) {
  detail::check_2d("transpose", a);
  int m = a.shape[0], n = a.shape[1];
  Tensor out = Tensor::zeros({n, m});
  const auto& av = *a.data;
  auto& ov = *out.data;
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) ov[std::size_t(j) * m + i] = av[std::size_t(i) * n + j];
  if (detail::tracked(tape, a)) {
    int na = a.node;
    int node = tape->add_node(out.numel(), {na},
                              [na, m, n](Tape& tp, const std::vector<double>& dy) {
                                auto& da = tp.grad_buf(na);
                                for (int i = 0; i < m; ++i)
                                  for (int j = 0; j < n; ++j)
                                    da[std::size_t(i) * n + j] += dy[std::size_t(j) * m + i];
                              });
    tape->adopt(out, node);
  }
  return out;
}

// concatenate along the last axis (2-d: columns)
inline Tensor concat_cols(Tape* tape, const Tensor& a, const Tensor& b) {
  detail::check_2d("concat_cols", a);
  detail::check_2d("concat_cols", b);
  if (a.shape[0] != b.shape[0])
    throw ShapeError("concat_cols: shape mismatch " + shape_str(a.shape) + " vs " + shape_str(b.shape));
  int n = a.shape[0], fa = a.shape[1], fb = b.shape[1];
  Tensor out = Tensor::zeros({n, fa + fb});
  const auto& av = *a.data;
  const auto& bv = *b.data;
  auto& ov = *out.data;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < fa; ++j) ov[std::size_t(i) * (fa + fb) + j] = av[std::size_t(i) * fa + j];
    for (int j = 0; j < fb; ++j) ov[std::size_t(i) * (fa + fb) + fa + j] = bv[std::size_t(i) * fb + j];
  }
  bool ta = detail::tracked(tape, a), tb = detail::tracked(tape, b);
  if (ta || tb) {
    int na = ta ? a.node : -1, nb = tb ? b.node : -1;
    int node = tape->add_node(out.numel(), {na, nb},
                              [na, nb, n, fa, fb](Tape& tp, const std::vector<double>& dy) {
                                if (na >= 0) {
                                  auto& da = tp.grad_buf(na);
                                  for (int i = 0; i < n; ++i)
                                    for (int j = 0; j < fa; ++j)
                                      da[std::size_t(i) * fa + j] += dy[std::size_t(i) * (fa + fb) + j];
                                }
                                if (nb >= 0) {
                                  auto& db = tp.grad_buf(nb);
                                  for (int i = 0; i < n; ++i)
                                    for (int j = 0; j < fb; ++j)
                                      db[std::size_t(i) * fb + j] += dy[std::size_t(i) * (fa + fb) + fa + j];
                                }
                              });
    tape->adopt(out, node);
  }
  return out;
}

inline Tensor concat_rows(Tape* tape, const Tensor& a, const Tensor& b) {
  detail::check_2d("concat_rows", a);
  detail::check_2d("concat_rows", b);
  if (a.shape[1] != b.shape[1])
    throw ShapeError("concat_rows: shape mismatch " + shape_str(a.shape) + " vs " + shape_str(b.shape));
  int f = a.shape[1], ra = a.shape[0], rb = b.shape[0];
  Tensor out = Tensor::zeros({ra + rb, f});
  auto& ov = *out.data;
  std::copy(a.data->begin(), a.data->end(), ov.begin());
  std::copy(b.data->begin(), b.data->end(), ov.begin() + static_cast<std::ptrdiff_t>(a.data->size()));
  bool ta = detail::tracked(tape, a), tb = detail::tracked(tape, b);
  if (ta || tb) {
    int na = ta ? a.node : -1, nb = tb ? b.node : -1;
    std::size_t asize = a.data->size();
    int node = tape->add_node(out.numel(), {na, nb},
                              [na, nb, asize](Tape& tp, const std::vector<double>& dy) {
                                if (na >= 0) {
                                  auto& da = tp.grad_buf(na);
                                  for (std::size_t i = 0; i < asize; ++i) da[i] += dy[i];
                                }
                                if (nb >= 0) {
                                  auto& db = tp.grad_buf(nb);
                                  for (std::size_t i = asize; i < dy.size(); ++i) db[i - asize] += dy[i];
                                }
                              });
    tape->adopt(out, node);
  }
  return out;
}

inline Tensor slice_cols(Tape* tape, const Tensor& a, int start, int len) {
  detail::check_2d("slice_cols", a);
  int n = a.shape[0], f = a.shape[1];
  if (start < 0 || len < 0 || start + len > f)
    throw ShapeError("slice_cols: range [" + std::to_string(start) + "," + std::to_string(start + len) +
                     ") out of " + shape_str(a.shape));
  Tensor out = Tensor::zeros({n, len});
  const auto& av = *a.data;
  auto& ov = *out.data;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < len; ++j) ov[std::size_t(i) * len + j] = av[std::size_t(i) * f + start + j];
  if (detail::tracked(tape, a)) {
    int na = a.node;
    int node = tape->add_node(out.numel(), {na},
                              [na, n, f, start, len](Tape& tp, const std::vector<double>& dy) {
                                auto& da = tp.grad_buf(na);
                                for (int i = 0; i < n; ++i)
                                  for (int j = 0; j < len; ++j)
                                    da[std::size_t(i) * f + start + j] += dy[std::size_t(i) * len + j];
                              });
    tape->adopt(out, node);
  }
  return out;
}

inline Tensor slice_rows(Tape* tape, const Tensor& a, int start, int len) {
  detail::check_2d("slice_rows", a);
  int n = a.shape[0], f = a.shape[1];
  if (start < 0 || len < 0 || start + len > n)
    throw ShapeError("slice_rows: range [" + std::to_string(start) + "," + std::to_string(start + len) +
                     ") out of " + shape_str(a.shape));
  Tensor out = Tensor::zeros({len, f});
  const auto& av = *a.data;
  auto& ov = *out.data;
  std::copy(av.begin() + std::size_t(start) * f, av.begin() + std::size_t(start + len) * f, ov.begin());
  if (detail::tracked(tape, a)) {
    int na = a.node;
    int node = tape->add_node(out.numel(), {na},
                              [na, f, start](Tape& tp, const std::vector<double>& dy) {
                                auto& da = tp.grad_buf(na);
                                for (std::size_t i = 0; i < dy.size(); ++i)
                                  da[std::size_t(start) * f + i] += dy[i];
                              });
    tape->adopt(out, node);
  }
  return out;
}

// gather rows by index; duplicate indices accumulate gradient additively
inline Tensor gather_rows(Tape* tape, const Tensor& a, const std::vector<int>& idx) {
  detail::check_2d("gather_rows", a);
  int n = a.shape[0], f = a.shape[1];
  for (int i : idx)
    if (i < 0 || i >= n)
      throw ShapeError("gather_rows: index " + std::to_string(i) + " out of " + shape_str(a.shape));
  Tensor out = Tensor::zeros({static_cast<int>(idx.size()), f});
  const auto& av = *a.data;
  auto& ov = *out.data;
  for (std::size_t r = 0; r < idx.size(); ++r)
    for (int j = 0; j < f; ++j) ov[r * f + j] = av[std::size_t(idx[r]) * f + j];
  if (detail::tracked(tape, a)) {
    int na = a.node;
    int node = tape->add_node(out.numel(), {na},
                              [na, f, idx](Tape& tp, const std::vector<double>& dy) {
                                auto& da = tp.grad_buf(na);
                                for (std::size_t r = 0; r < idx.size(); ++r)
                                  for (int j = 0; j < f; ++j)
                                    da[std::size_t(idx[r]) * f + j] += dy[r * f + j];
                              });
    tape->adopt(out, node);
  }
  return out;
}

// ---------------------------------------------------------------------------
// reductions

inline Tensor sum(Tape* tape, const Tensor& a) {
  double acc = 0.0;
  for (double v : *a.data) acc += v;
  Tensor out = Tensor::scalar(acc);
  if (detail::tracked(tape, a)) {
    int na = a.node;
    std::size_t n = a.data->size();
    int node = tape->add_node(1, {na},
                              [na, n](Tape& tp, const std::vector<double>& dy) {
                                auto& da = tp.grad_buf(na);
                                for (std::size_t i = 0; i < n; ++i) da[i] += dy[0];
                              });
    tape->adopt(out, node);
  }
  return out;
}

inline Tensor mean(Tape* tape, const Tensor& a) {
  if (a.numel() == 0) throw ShapeError("mean: empty tensor");
  double acc = 0.0;
  for (double v : *a.data) acc += v;
  double inv = 1.0 / static_cast<double>(a.numel());
  Tensor out = Tensor::scalar(acc * inv);
  if (detail::tracked(tape, a)) {
    int na = a.node;
    std::size_t n = a.data->size();
    int node = tape->add_node(1, {na},
                              [na, n, inv](Tape& tp, const std::vector<double>& dy) {
                                auto& da = tp.grad_buf(na);
                                for (std::size_t i = 0; i < n; ++i) da[i] += dy[0] * inv;
                              });
    tape->adopt(out, node);
  }
  return out;
}

// softmax over the last axis, row by row
inline Tensor softmax(Tape* tape, const Tensor& a) {
  detail::check_2d("softmax", a);
  int n = a.shape[0], f = a.shape[1];
  Tensor out = Tensor::zeros(a.shape);
  const auto& av = *a.data;
  auto& ov = *out.data;
  for (int i = 0; i < n; ++i) {
    const double* row = av.data() + std::size_t(i) * f;
    double mx = row[0];
    for (int j = 1; j < f; ++j) mx = std::max(mx, row[j]);
    double z = 0.0;
    for (int j = 0; j < f; ++j) z += std::exp(row[j] - mx);
    double invz = 1.0 / z;
    for (int j = 0; j < f; ++j) ov[std::size_t(i) * f + j] = std::exp(row[j] - mx) * invz;
  }
  if (detail::tracked(tape, a)) {
    int na = a.node;
    auto od = out.data;
    int node = tape->add_node(out.numel(), {na},
                              [na, od, n, f](Tape& tp, const std::vector<double>& dy) {
                                auto& da = tp.grad_buf(na);
                                for (int i = 0; i < n; ++i) {
                                  const double* p = od->data() + std::size_t(i) * f;
                                  const double* g = dy.data() + std::size_t(i) * f;
                                  double dot = 0.0;
                                  for (int j = 0; j < f; ++j) dot += g[j] * p[j];
                                  for (int j = 0; j < f; ++j)
                                    da[std::size_t(i) * f + j] += p[j] * (g[j] - dot);
                                }
                              });
    tape->adopt(out, node);
  }
  return out;
}

// layer normalization over the last axis (no learned affine); the affine
// form composes with mul_rowvec/add_rowvec
inline constexpr double kLayerNormEps = 1e-5;

inline Tensor layer_norm(Tape* tape, const Tensor& a, double eps = kLayerNormEps) {
  detail::check_2d("layer_norm", a);
  int n = a.shape[0], f = a.shape[1];
  Tensor out = Tensor::zeros(a.shape);
  auto inv_std = std::make_shared<std::vector<double>>(static_cast<std::size_t>(n));
  const auto& av = *a.data;
  auto& ov = *out.data;
  for (int i = 0; i < n; ++i) {
    const double* row = av.data() + std::size_t(i) * f;
    double mu = 0.0;
    for (int j = 0; j < f; ++j) mu += row[j];
    mu /= f;
    double var = 0.0;
    for (int j = 0; j < f; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= f;
    double istd = 1.0 / std::sqrt(var + eps);
    (*inv_std)[std::size_t(i)] = istd;
    for (int j = 0; j < f; ++j) ov[std::size_t(i) * f + j] = (row[j] - mu) * istd;
  }
  if (detail::tracked(tape, a)) {
    int na = a.node;
    auto od = out.data;
    int node = tape->add_node(out.numel(), {na},
                              [na, od, inv_std, n, f](Tape& tp, const std::vector<double>& dy) {
                                auto& da = tp.grad_buf(na);
                                for (int i = 0; i < n; ++i) {
                                  const double* xh = od->data() + std::size_t(i) * f;
                                  const double* g = dy.data() + std::size_t(i) * f;
                                  double mg = 0.0, mgx = 0.0;
                                  for (int j = 0; j < f; ++j) {
                                    mg += g[j];
                                    mgx += g[j] * xh[j];
                                  }
                                  mg /= f;
                                  mgx /= f;
                                  double istd = (*inv_std)[std::size_t(i)];
                                  for (int j = 0; j < f; ++j)
                                    da[std::size_t(i) * f + j] += istd * (g[j] - mg - xh[j] * mgx);
                                }
                              });
    tape->adopt(out, node);
  }
  return out;
}

inline Tensor layer_norm_affine(Tape* tape, const Tensor& a, const Tensor& gamma, const Tensor& beta,
                                double eps = kLayerNormEps) {
  return add_rowvec(tape, mul_rowvec(tape, layer_norm(tape, a, eps), gamma), beta);
}

// Cuts the tape link: same value, treated as a constant downstream.
inline Tensor detach(const Tensor& a) {
  Tensor out;
  out.shape = a.shape;
  out.data = a.data;
  return out;
}

// ---------------------------------------------------------------------------
// gradient verification

// f evaluates a scalar loss from x; a null tape must be honored (plain eval).
using ScalarFn = std::function<Tensor(Tape*, Tensor&)>;

namespace detail {

// Analytic gradient of f at x; a loss that never touched the tape (a
// constant) has an exactly-zero gradient.
inline std::vector<double> analytic_grad(const ScalarFn& f, Tensor& var, Tape& tape) {
  Tensor loss = f(&tape, var);
  if (loss.numel() != 1)
    throw ShapeError("grad_check: f must be scalar-valued, got " + shape_str(loss.shape));
  if (!tape.tracks(loss)) return std::vector<double>(var.data->size(), 0.0);
  tape.backward(loss);
  return tape.grad(var);
}

}  // namespace detail

// Max over components of |analytic - central difference| / max(1, |analytic|).
inline double grad_check(const ScalarFn& f, const Tensor& x, double step) {
  Tensor var = x.clone();
  Tape tape;
  tape.watch(var);
  std::vector<double> analytic = detail::analytic_grad(f, var, tape);

  double worst = 0.0;
  for (std::size_t i = 0; i < var.data->size(); ++i) {
    Tensor xp = x.clone();
    (*xp.data)[i] += step;
    Tensor xm = x.clone();
    (*xm.data)[i] -= step;
    double fp = f(nullptr, xp).value();
    double fm = f(nullptr, xm).value();
    double fd = (fp - fm) / (2.0 * step);
    double err = std::abs(analytic[i] - fd) / std::max(1.0, std::abs(analytic[i]));
    worst = std::max(worst, err);
  }
  return worst;
}

// Same check restricted to a deterministic random subset of components; used
// for large weight tensors where the full sweep is too slow.
inline double grad_check_sampled(const ScalarFn& f, const Tensor& x, double step, int max_components,
                                 std::uint64_t seed) {
  std::size_t n = x.data->size();
  if (max_components <= 0 || static_cast<std::size_t>(max_components) >= n)
    return grad_check(f, x, step);

  Tensor var = x.clone();
  Tape tape;
  tape.watch(var);
  std::vector<double> analytic = detail::analytic_grad(f, var, tape);

  Rng rng(seed);
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  rng.shuffle(idx);
  idx.resize(static_cast<std::size_t>(max_components));

  double worst = 0.0;
  for (std::size_t i : idx) {
    Tensor xp = x.clone();
    (*xp.data)[i] += step;
    Tensor xm = x.clone();
    (*xm.data)[i] -= step;
    double fp = f(nullptr, xp).value();
    double fm = f(nullptr, xm).value();
    double fd = (fp - fm) / (2.0 * step);
    double err = std::abs(analytic[i] - fd) / std::max(1.0, std::abs(analytic[i]));
    worst = std::max(worst, err);
  }
  return worst;
}

}  // namespace dispdiff::ops
