#include "mtnas/autodiff/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "mtnas/errors.hpp"
#include "mtnas/kernels/kernels.hpp"

namespace mtnas::ad {
namespace {

[[noreturn]] void dim_fail(const char* op, const std::string& detail) {
  throw DimensionError(std::string(op) + ": " + detail);
}

void require_rank(const char* op, Var a, std::size_t rank) {
  if (a.rank() != rank) {
    dim_fail(op, "expected rank " + std::to_string(rank) + ", got " + to_string(a.shape()));
  }
}

void require_same(const char* op, Var a, Var b) {
  if (a.shape() != b.shape()) dim_fail(op, to_string(a.shape()) + " vs " + to_string(b.shape()));
}

Tape& tape_of(Var a) { return a.tape(); }

double stable_sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

Var add(Var a, Var b) {
  require_same("add", a, b);
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.at(i) + b.at(i);
  return tape_of(a).record("add", a.shape(), std::move(out), {a.node(), b.node()}, [](Node& n) {
    for (Node* p : n.parents) {
      if (!p->requires_grad) continue;
      for (std::size_t i = 0; i < n.grad.size(); ++i) p->grad[i] += n.grad[i];
    }
  });
}

Var sub(Var a, Var b) {
  require_same("sub", a, b);
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.at(i) - b.at(i);
  return tape_of(a).record("sub", a.shape(), std::move(out), {a.node(), b.node()}, [](Node& n) {
    Node* x = n.parents[0];
    Node* y = n.parents[1];
    for (std::size_t i = 0; i < n.grad.size(); ++i) {
      if (x->requires_grad) x->grad[i] += n.grad[i];
      if (y->requires_grad) y->grad[i] -= n.grad[i];
    }
  });
}

Var mul(Var a, Var b) {
  require_same("mul", a, b);
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.at(i) * b.at(i);
  return tape_of(a).record("mul", a.shape(), std::move(out), {a.node(), b.node()}, [](Node& n) {
    Node* x = n.parents[0];
    Node* y = n.parents[1];
    const auto& k = kernels::active();
    if (x->requires_grad) k.mul_acc(n.grad.size(), n.grad.data(), y->value.data(), x->grad.data());
    if (y->requires_grad) k.mul_acc(n.grad.size(), n.grad.data(), x->value.data(), y->grad.data());
  });
}

Var scale(Var a, double factor) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.at(i) * factor;
  return tape_of(a).record("scale", a.shape(), std::move(out), {a.node()}, [factor](Node& n) {
    kernels::active().axpy(n.grad.size(), factor, n.grad.data(), n.parents[0]->grad.data());
  });
}

Var add_bias(Var a, Var bias) {
  require_rank("add_bias", a, 2);
  require_rank("add_bias", bias, 1);
  const std::size_t m = a.rows();
  const std::size_t cols = a.cols();
  if (bias.size() != cols) dim_fail("add_bias", to_string(a.shape()) + " vs bias " + to_string(bias.shape()));
  std::vector<double> out(a.value().begin(), a.value().end());
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < cols; ++j) out[i * cols + j] += bias.at(j);
  }
  return tape_of(a).record("add_bias", a.shape(), std::move(out), {a.node(), bias.node()},
                           [m, cols](Node& n) {
                             Node* x = n.parents[0];
                             Node* b = n.parents[1];
                             if (x->requires_grad) {
                               for (std::size_t i = 0; i < n.grad.size(); ++i) x->grad[i] += n.grad[i];
                             }
                             if (b->requires_grad) {
                               for (std::size_t i = 0; i < m; ++i) {
                                 for (std::size_t j = 0; j < cols; ++j) b->grad[j] += n.grad[i * cols + j];
                               }
                             }
                           });
}

Var matmul(Var a, Var b) {
  require_rank("matmul", a, 2);
  require_rank("matmul", b, 2);
  const std::size_t m = a.shape()[0];
  const std::size_t k = a.shape()[1];
  const std::size_t n = b.shape()[1];
  if (b.shape()[0] != k) dim_fail("matmul", to_string(a.shape()) + " x " + to_string(b.shape()));
  std::vector<double> out(m * n, 0.0);
  kernels::active().gemm_nn(m, k, n, a.value().data(), b.value().data(), out.data());
  return tape_of(a).record("matmul", {m, n}, std::move(out), {a.node(), b.node()},
                           [m, k, n](Node& node) {
                             Node* x = node.parents[0];
                             Node* y = node.parents[1];
                             const auto& kt = kernels::active();
                             if (x->requires_grad) {
                               kt.gemm_nt(m, k, n, node.grad.data(), y->value.data(), x->grad.data());
                             }
                             if (y->requires_grad) {
                               kt.gemm_tn(m, k, n, x->value.data(), node.grad.data(), y->grad.data());
                             }
                           });
}

Var concat(std::span<const Var> parts) {
  if (parts.empty()) dim_fail("concat", "no operands");
  const std::size_t rank = parts[0].rank();
  const std::size_t m = parts[0].rows();
  std::vector<std::size_t> widths;
  std::vector<Node*> parents;
  std::size_t total = 0;
  for (Var p : parts) {
    if (p.rank() != rank || p.rows() != m) {
      dim_fail("concat", to_string(parts[0].shape()) + " vs " + to_string(p.shape()));
    }
    widths.push_back(p.cols());
    parents.push_back(p.node());
    total += p.cols();
  }
  std::vector<double> out(m * total);
  std::size_t offset = 0;
  for (std::size_t q = 0; q < parts.size(); ++q) {
    const auto v = parts[q].value();
    for (std::size_t i = 0; i < m; ++i) {
      std::copy_n(v.begin() + i * widths[q], widths[q], out.begin() + i * total + offset);
    }
    offset += widths[q];
  }
  Shape shape = rank == 2 ? Shape{m, total} : Shape{total};
  return tape_of(parts[0]).record("concat", std::move(shape), std::move(out), std::move(parents),
                                  [m, total, widths](Node& n) {
                                    std::size_t off = 0;
                                    for (std::size_t q = 0; q < widths.size(); ++q) {
                                      Node* p = n.parents[q];
                                      if (p->requires_grad) {
                                        for (std::size_t i = 0; i < m; ++i) {
                                          for (std::size_t j = 0; j < widths[q]; ++j) {
                                            p->grad[i * widths[q] + j] += n.grad[i * total + off + j];
                                          }
                                        }
                                      }
                                      off += widths[q];
                                    }
                                  });
}

Var slice_cols(Var a, std::size_t begin, std::size_t end) {
  require_rank("slice_cols", a, 2);
  const std::size_t m = a.rows();
  const std::size_t cols = a.cols();
  if (begin >= end || end > cols) {
    dim_fail("slice_cols", "range [" + std::to_string(begin) + "," + std::to_string(end) + ") of " +
                               to_string(a.shape()));
  }
  const std::size_t w = end - begin;
  std::vector<double> out(m * w);
  for (std::size_t i = 0; i < m; ++i) {
    std::copy_n(a.value().begin() + i * cols + begin, w, out.begin() + i * w);
  }
  return tape_of(a).record("slice_cols", {m, w}, std::move(out), {a.node()}, [m, cols, w, begin](Node& n) {
    Node* p = n.parents[0];
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < w; ++j) p->grad[i * cols + begin + j] += n.grad[i * w + j];
    }
  });
}

Var slice_rows(Var a, std::size_t begin, std::size_t end) {
  require_rank("slice_rows", a, 2);
  const std::size_t cols = a.cols();
  if (begin >= end || end > a.rows()) {
    dim_fail("slice_rows", "range [" + std::to_string(begin) + "," + std::to_string(end) + ") of " +
                               to_string(a.shape()));
  }
  std::vector<double> out(a.value().begin() + begin * cols, a.value().begin() + end * cols);
  return tape_of(a).record("slice_rows", {end - begin, cols}, std::move(out), {a.node()},
                           [offset = begin * cols](Node& n) {
                             Node* p = n.parents[0];
                             for (std::size_t i = 0; i < n.grad.size(); ++i) p->grad[offset + i] += n.grad[i];
                           });
}

Var row(Var a, std::size_t r) {
  require_rank("row", a, 2);
  if (r >= a.rows()) throw BoundsError("row: index " + std::to_string(r) + " of " + to_string(a.shape()));
  const std::size_t cols = a.cols();
  std::vector<double> out(a.value().begin() + r * cols, a.value().begin() + (r + 1) * cols);
  return tape_of(a).record("row", {cols}, std::move(out), {a.node()}, [offset = r * cols](Node& n) {
    Node* p = n.parents[0];
    for (std::size_t i = 0; i < n.grad.size(); ++i) p->grad[offset + i] += n.grad[i];
  });
}

Var mean(Var a, std::size_t axis) {
  require_rank("mean", a, 2);
  if (axis > 1) dim_fail("mean", "axis " + std::to_string(axis) + " out of range for rank 2");
  const std::size_t m = a.rows();
  const std::size_t cols = a.cols();
  const std::size_t out_len = axis == 0 ? cols : m;
  const double inv = 1.0 / static_cast<double>(axis == 0 ? m : cols);
  std::vector<double> out(out_len, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < cols; ++j) out[axis == 0 ? j : i] += a.at(i, j);
  }
  for (double& v : out) v *= inv;
  return tape_of(a).record("mean", {out_len}, std::move(out), {a.node()}, [m, cols, axis, inv](Node& n) {
    Node* p = n.parents[0];
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < cols; ++j) p->grad[i * cols + j] += inv * n.grad[axis == 0 ? j : i];
    }
  });
}

Var sum(Var a) {
  double total = 0.0;
  for (double v : a.value()) total += v;
  return tape_of(a).record("sum", {1}, {total}, {a.node()}, [](Node& n) {
    Node* p = n.parents[0];
    for (double& g : p->grad) g += n.grad[0];
  });
}

Var sigmoid(Var a) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = stable_sigmoid(a.at(i));
  return tape_of(a).record("sigmoid", a.shape(), std::move(out), {a.node()}, [](Node& n) {
    Node* p = n.parents[0];
    for (std::size_t i = 0; i < n.grad.size(); ++i) {
      const double s = n.value[i];
      p->grad[i] += n.grad[i] * s * (1.0 - s);
    }
  });
}

Var tanh(Var a) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(a.at(i));
  return tape_of(a).record("tanh", a.shape(), std::move(out), {a.node()}, [](Node& n) {
    Node* p = n.parents[0];
    for (std::size_t i = 0; i < n.grad.size(); ++i) {
      const double t = n.value[i];
      p->grad[i] += n.grad[i] * (1.0 - t * t);
    }
  });
}

namespace {

double row_logsumexp(const double* x, std::size_t n) {
  double hi = -std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < n; ++j) hi = std::max(hi, x[j]);
  if (!std::isfinite(hi)) return hi;
  double acc = 0.0;
  for (std::size_t j = 0; j < n; ++j) acc += std::exp(x[j] - hi);
  return hi + std::log(acc);
}

}  // namespace

Var log_softmax(Var a) {
  if (a.rank() > 2) dim_fail("log_softmax", "rank must be 1 or 2, got " + to_string(a.shape()));
  const std::size_t m = a.rows();
  const std::size_t cols = a.cols();
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < m; ++i) {
    const double* x = a.value().data() + i * cols;
    const double lse = row_logsumexp(x, cols);
    for (std::size_t j = 0; j < cols; ++j) out[i * cols + j] = x[j] - lse;
  }
  return tape_of(a).record("log_softmax", a.shape(), std::move(out), {a.node()}, [m, cols](Node& n) {
    Node* p = n.parents[0];
    for (std::size_t i = 0; i < m; ++i) {
      double gsum = 0.0;
      for (std::size_t j = 0; j < cols; ++j) gsum += n.grad[i * cols + j];
      for (std::size_t j = 0; j < cols; ++j) {
        const std::size_t idx = i * cols + j;
        p->grad[idx] += n.grad[idx] - std::exp(n.value[idx]) * gsum;
      }
    }
  });
}

Var logsumexp(Var a) {
  if (a.rank() > 2) dim_fail("logsumexp", "rank must be 1 or 2, got " + to_string(a.shape()));
  const std::size_t m = a.rows();
  const std::size_t cols = a.cols();
  std::vector<double> out(m);
  for (std::size_t i = 0; i < m; ++i) out[i] = row_logsumexp(a.value().data() + i * cols, cols);
  return tape_of(a).record("logsumexp", {m}, std::move(out), {a.node()}, [m, cols](Node& n) {
    Node* p = n.parents[0];
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < cols; ++j) {
        const std::size_t idx = i * cols + j;
        p->grad[idx] += n.grad[i] * std::exp(p->value[idx] - n.value[i]);
      }
    }
  });
}

Var embedding_gather(Var table, std::span<const int> indices) {
  require_rank("embedding_gather", table, 2);
  if (indices.empty()) dim_fail("embedding_gather", "no indices");
  const std::size_t rows = table.rows();
  const std::size_t dim = table.cols();
  std::vector<int> idx(indices.begin(), indices.end());
  std::vector<double> out(idx.size() * dim);
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] < 0 || static_cast<std::size_t>(idx[i]) >= rows) {
      throw BoundsError("embedding_gather: index " + std::to_string(idx[i]) + " outside table of " +
                        std::to_string(rows) + " rows");
    }
    std::copy_n(table.value().begin() + idx[i] * dim, dim, out.begin() + i * dim);
  }
  const std::size_t count = idx.size();
  return tape_of(table).record("embedding_gather", {count, dim}, std::move(out), {table.node()},
                               [idx = std::move(idx), dim](Node& n) {
                                 Node* p = n.parents[0];
                                 const auto& k = kernels::active();
                                 for (std::size_t i = 0; i < idx.size(); ++i) {
                                   k.axpy(dim, 1.0, n.grad.data() + i * dim, p->grad.data() + idx[i] * dim);
                                 }
                               });
}

Var pick(Var a, std::span<const int> index) {
  require_rank("pick", a, 2);
  const std::size_t m = a.rows();
  const std::size_t cols = a.cols();
  if (index.size() != m) dim_fail("pick", std::to_string(index.size()) + " indices for " + to_string(a.shape()));
  std::vector<int> idx(index.begin(), index.end());
  std::vector<double> out(m);
  for (std::size_t i = 0; i < m; ++i) {
    if (idx[i] < 0 || static_cast<std::size_t>(idx[i]) >= cols) {
      throw BoundsError("pick: index " + std::to_string(idx[i]) + " outside " + std::to_string(cols) + " columns");
    }
    out[i] = a.at(i, idx[i]);
  }
  return tape_of(a).record("pick", {m}, std::move(out), {a.node()}, [idx = std::move(idx), cols](Node& n) {
    Node* p = n.parents[0];
    for (std::size_t i = 0; i < idx.size(); ++i) p->grad[i * cols + idx[i]] += n.grad[i];
  });
}

Var select_rows(std::span<const std::uint8_t> mask, Var on_true, Var on_false) {
  require_rank("select_rows", on_true, 2);
  require_same("select_rows", on_true, on_false);
  const std::size_t m = on_true.rows();
  const std::size_t cols = on_true.cols();
  if (mask.size() != m) dim_fail("select_rows", "mask of " + std::to_string(mask.size()) + " for " + std::to_string(m) + " rows");
  std::vector<std::uint8_t> keep(mask.begin(), mask.end());
  std::vector<double> out(m * cols);
  for (std::size_t i = 0; i < m; ++i) {
    const auto src = keep[i] ? on_true.value() : on_false.value();
    std::copy_n(src.begin() + i * cols, cols, out.begin() + i * cols);
  }
  return tape_of(on_true).record("select_rows", on_true.shape(), std::move(out),
                                 {on_true.node(), on_false.node()}, [keep = std::move(keep), cols](Node& n) {
                                   for (std::size_t i = 0; i < keep.size(); ++i) {
                                     Node* p = n.parents[keep[i] ? 0 : 1];
                                     if (!p->requires_grad) continue;
                                     for (std::size_t j = 0; j < cols; ++j) p->grad[i * cols + j] += n.grad[i * cols + j];
                                   }
                                 });
}

Var masked_time_mean(std::span<const Var> steps, std::span<const std::size_t> lengths) {
  if (steps.empty()) throw ContractError("masked_time_mean: empty sequence");
  const std::size_t b = steps[0].rows();
  const std::size_t d = steps[0].cols();
  if (lengths.size() != b) dim_fail("masked_time_mean", std::to_string(lengths.size()) + " lengths for batch of " + std::to_string(b));
  std::vector<Node*> parents;
  for (Var s : steps) {
    if (s.rank() != 2 || s.rows() != b || s.cols() != d) {
      dim_fail("masked_time_mean", to_string(steps[0].shape()) + " vs " + to_string(s.shape()));
    }
    parents.push_back(s.node());
  }
  std::vector<std::size_t> len(lengths.begin(), lengths.end());
  for (std::size_t l : len) {
    if (l == 0) throw ContractError("masked_time_mean: empty sequence in batch");
    if (l > steps.size()) dim_fail("masked_time_mean", "length " + std::to_string(l) + " exceeds " + std::to_string(steps.size()) + " steps");
  }
  std::vector<double> out(b * d, 0.0);
  for (std::size_t i = 0; i < b; ++i) {
    for (std::size_t t = 0; t < len[i]; ++t) {
      const double* x = steps[t].value().data() + i * d;
      for (std::size_t j = 0; j < d; ++j) out[i * d + j] += x[j];
    }
    const double inv = 1.0 / static_cast<double>(len[i]);
    for (std::size_t j = 0; j < d; ++j) out[i * d + j] *= inv;
  }
  return tape_of(steps[0]).record("masked_time_mean", {b, d}, std::move(out), std::move(parents),
                                  [len = std::move(len), d](Node& n) {
                                    for (std::size_t i = 0; i < len.size(); ++i) {
                                      const double inv = 1.0 / static_cast<double>(len[i]);
                                      for (std::size_t t = 0; t < len[i]; ++t) {
                                        Node* p = n.parents[t];
                                        if (!p->requires_grad) continue;
                                        for (std::size_t j = 0; j < d; ++j) p->grad[i * d + j] += inv * n.grad[i * d + j];
                                      }
                                    }
                                  });
}

Var linear_combination(std::span<const Var> terms, Var coeffs) {
  if (terms.empty()) dim_fail("linear_combination", "no terms");
  if (coeffs.rank() != 1 || coeffs.size() != terms.size()) {
    dim_fail("linear_combination", std::to_string(terms.size()) + " terms vs coefficients " + to_string(coeffs.shape()));
  }
  std::vector<Node*> parents{coeffs.node()};
  for (Var t : terms) {
    require_same("linear_combination", terms[0], t);
    parents.push_back(t.node());
  }
  std::vector<double> out(terms[0].size(), 0.0);
  for (std::size_t q = 0; q < terms.size(); ++q) {
    const double c = coeffs.at(q);
    const auto v = terms[q].value();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += c * v[i];
  }
  return tape_of(coeffs).record("linear_combination", terms[0].shape(), std::move(out), std::move(parents),
                                [](Node& n) {
                                  Node* c = n.parents[0];
                                  const auto& k = kernels::active();
                                  for (std::size_t q = 1; q < n.parents.size(); ++q) {
                                    Node* t = n.parents[q];
                                    if (c->requires_grad) c->grad[q - 1] += k.dot(n.grad.size(), n.grad.data(), t->value.data());
                                    if (t->requires_grad) k.axpy(n.grad.size(), c->value[q - 1], n.grad.data(), t->grad.data());
                                  }
                                });
}

Var lstm_cell(Var gates, Var cell) {
  require_rank("lstm_cell", gates, 2);
  require_rank("lstm_cell", cell, 2);
  const std::size_t b = gates.rows();
  const std::size_t h = cell.cols();
  if (cell.rows() != b || gates.cols() != 4 * h) {
    dim_fail("lstm_cell", "gates " + to_string(gates.shape()) + " vs cell " + to_string(cell.shape()));
  }
  // Saved activations per row: i, f, g, o, tanh(c').
  std::vector<double> act(b * 5 * h);
  std::vector<double> out(b * 2 * h);
  for (std::size_t r = 0; r < b; ++r) {
    const double* z = gates.value().data() + r * 4 * h;
    const double* c = cell.value().data() + r * h;
    double* a = act.data() + r * 5 * h;
    for (std::size_t j = 0; j < h; ++j) {
      const double ig = stable_sigmoid(z[j]);
      const double fg = stable_sigmoid(z[h + j]);
      const double gg = std::tanh(z[2 * h + j]);
      const double og = stable_sigmoid(z[3 * h + j]);
      const double cn = fg * c[j] + ig * gg;
      const double tc = std::tanh(cn);
      a[j] = ig;
      a[h + j] = fg;
      a[2 * h + j] = gg;
      a[3 * h + j] = og;
      a[4 * h + j] = tc;
      out[r * 2 * h + j] = og * tc;
      out[r * 2 * h + h + j] = cn;
    }
  }
  return tape_of(gates).record("lstm_cell", {b, 2 * h}, std::move(out), {gates.node(), cell.node()},
                               [act = std::move(act), b, h](Node& n) {
                                 Node* gz = n.parents[0];
                                 Node* gc = n.parents[1];
                                 for (std::size_t r = 0; r < b; ++r) {
                                   const double* a = act.data() + r * 5 * h;
                                   const double* c = gc->value.data() + r * h;
                                   const double* dout = n.grad.data() + r * 2 * h;
                                   for (std::size_t j = 0; j < h; ++j) {
                                     const double ig = a[j], fg = a[h + j], gg = a[2 * h + j], og = a[3 * h + j], tc = a[4 * h + j];
                                     const double dh = dout[j];
                                     const double dc = dout[h + j] + dh * og * (1.0 - tc * tc);
                                     if (gz->requires_grad) {
                                       double* dz = gz->grad.data() + r * 4 * h;
                                       dz[j] += dc * gg * ig * (1.0 - ig);
                                       dz[h + j] += dc * c[j] * fg * (1.0 - fg);
                                       dz[2 * h + j] += dc * ig * (1.0 - gg * gg);
                                       dz[3 * h + j] += dh * tc * og * (1.0 - og);
                                     }
                                     if (gc->requires_grad) gc->grad[r * h + j] += dc * fg;
                                   }
                                 }
                               });
}

}  // namespace mtnas::ad
