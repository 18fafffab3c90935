#pragma once

// Minimal reverse-mode autodiff on dense 2-D double tensors.
//
// A Tape records every tracked tensor as a node; ops append result nodes whose
// backward closures scatter upstream gradients into their inputs. Nodes are
// append-only, so a single reverse-order sweep from the loss node visits the
// graph in valid topological order. Ops called on untracked (constant) tensors
// run forward-only, which lets inference share the same code path with no tape.

#include <cmath>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "debias/common.hpp"

namespace debias {

class Tape;

struct Tensor {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::shared_ptr<std::vector<double>> data;
  int node = -1;  // index into the tape; -1 marks a constant
  Tape* tape = nullptr;

  std::size_t size() const { return rows * cols; }
  double& at(std::size_t r, std::size_t c) { return (*data)[r * cols + c]; }
  double at(std::size_t r, std::size_t c) const { return (*data)[r * cols + c]; }
  double scalar() const {
    if (size() != 1) throw ValidationError("Tensor::scalar on tensor of size " + std::to_string(size()));
    return (*data)[0];
  }
};

namespace detail {
inline void require_finite(const std::vector<double>& vals, const char* where) {
  for (double v : vals)
    if (!std::isfinite(v)) throw ValidationError(std::string(where) + ": tensor contains non-finite values");
}
}  // namespace detail

inline Tensor constant(std::size_t rows, std::size_t cols, std::vector<double> vals) {
  if (vals.size() != rows * cols) throw ValidationError("constant: data size does not match shape");
  detail::require_finite(vals, "tensor");
  Tensor t;
  t.rows = rows;
  t.cols = cols;
  t.data = std::make_shared<std::vector<double>>(std::move(vals));
  return t;
}

inline Tensor zeros(std::size_t rows, std::size_t cols) {
  return constant(rows, cols, std::vector<double>(rows * cols, 0.0));
}

// Gradient buffers indexed by tape node, produced by backward().
class Gradients {
 public:
  explicit Gradients(std::vector<std::vector<double>> by_node) : by_node_(std::move(by_node)) {}

  const std::vector<double>& of(const Tensor& t) const {
    if (t.node < 0) throw ValidationError("Gradients::of: tensor is not tracked on a tape");
    return by_node_[static_cast<std::size_t>(t.node)];
  }
  double scalar_of(const Tensor& t) const {
    const auto& g = of(t);
    if (g.size() != 1) throw ValidationError("Gradients::scalar_of: gradient is not a scalar");
    return g[0];
  }

 private:
  std::vector<std::vector<double>> by_node_;
};

class Tape {
 public:
  using BackFn = std::function<void(const std::vector<double>& upstream, std::vector<std::vector<double>>& grads)>;

  struct Node {
    std::size_t size = 0;
    BackFn back;  // empty for leaves
  };

  // Wrap existing storage as a tracked leaf; updates through the returned
  // tensor (e.g. SGD) mutate the caller's buffer in place.
  Tensor var(std::size_t rows, std::size_t cols, std::shared_ptr<std::vector<double>> data) {
    if (!data || data->size() != rows * cols) throw ValidationError("Tape::var: data size does not match shape");
    detail::require_finite(*data, "Tape::var");
    Tensor t;
    t.rows = rows;
    t.cols = cols;
    t.data = std::move(data);
    t.node = append(rows * cols, BackFn{});
    t.tape = this;
    return t;
  }

  Tensor var(std::size_t rows, std::size_t cols, std::vector<double> vals) {
    return var(rows, cols, std::make_shared<std::vector<double>>(std::move(vals)));
  }

  int append(std::size_t size, BackFn back) {
    nodes_.push_back(Node{size, std::move(back)});
    return static_cast<int>(nodes_.size()) - 1;
  }

  const std::vector<Node>& nodes() const { return nodes_; }

 private:
  std::vector<Node> nodes_;
};

namespace detail {

// The one tape shared by an op's inputs, or nullptr when all are constants.
inline Tape* tape_of(std::initializer_list<const Tensor*> inputs) {
  Tape* t = nullptr;
  for (const Tensor* in : inputs) {
    if (!in->tape) continue;
    if (t && t != in->tape) throw ValidationError("op inputs belong to different tapes");
    t = in->tape;
  }
  return t;
}

inline Tensor make_result(std::size_t rows, std::size_t cols, std::vector<double> vals, Tape* tape,
                          Tape::BackFn back) {
  Tensor out = constant(rows, cols, std::move(vals));
  if (tape) {
    out.node = tape->append(out.size(), std::move(back));
    out.tape = tape;
  }
  return out;
}

inline void require(bool ok, const std::string& msg) {
  if (!ok) throw ValidationError(msg);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise and shape ops.

inline Tensor add(const Tensor& a, const Tensor& b) {
  detail::require(a.rows == b.rows && a.cols == b.cols, "add: shape mismatch");
  std::vector<double> vals(a.size());
  for (std::size_t i = 0; i < vals.size(); ++i) vals[i] = (*a.data)[i] + (*b.data)[i];
  Tape* tape = detail::tape_of({&a, &b});
  const int an = a.node, bn = b.node;
  return detail::make_result(a.rows, a.cols, std::move(vals), tape,
                             [an, bn](const std::vector<double>& g, std::vector<std::vector<double>>& grads) {
                               for (std::size_t i = 0; i < g.size(); ++i) {
                                 if (an >= 0) grads[static_cast<std::size_t>(an)][i] += g[i];
                                 if (bn >= 0) grads[static_cast<std::size_t>(bn)][i] += g[i];
                               }
                             });
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
  detail::require(a.rows == b.rows && a.cols == b.cols, "sub: shape mismatch");
  std::vector<double> vals(a.size());
  for (std::size_t i = 0; i < vals.size(); ++i) vals[i] = (*a.data)[i] - (*b.data)[i];
  Tape* tape = detail::tape_of({&a, &b});
  const int an = a.node, bn = b.node;
  return detail::make_result(a.rows, a.cols, std::move(vals), tape,
                             [an, bn](const std::vector<double>& g, std::vector<std::vector<double>>& grads) {
                               for (std::size_t i = 0; i < g.size(); ++i) {
                                 if (an >= 0) grads[static_cast<std::size_t>(an)][i] += g[i];
                                 if (bn >= 0) grads[static_cast<std::size_t>(bn)][i] -= g[i];
                               }
                             });
}

inline Tensor scale(const Tensor& a, double c) {
  std::vector<double> vals(a.size());
  for (std::size_t i = 0; i < vals.size(); ++i) vals[i] = (*a.data)[i] * c;
  Tape* tape = detail::tape_of({&a});
  const int an = a.node;
  return detail::make_result(a.rows, a.cols, std::move(vals), tape,
                             [an, c](const std::vector<double>& g, std::vector<std::vector<double>>& grads) {
                               if (an < 0) return;
                               auto& ga = grads[static_cast<std::size_t>(an)];
                               for (std::size_t i = 0; i < g.size(); ++i) ga[i] += c * g[i];
                             });
}

inline Tensor add_const(const Tensor& a, double c) {
  std::vector<double> vals(a.size());
  for (std::size_t i = 0; i < vals.size(); ++i) vals[i] = (*a.data)[i] + c;
  Tape* tape = detail::tape_of({&a});
  const int an = a.node;
  return detail::make_result(a.rows, a.cols, std::move(vals), tape,
                             [an](const std::vector<double>& g, std::vector<std::vector<double>>& grads) {
                               if (an < 0) return;
                               auto& ga = grads[static_cast<std::size_t>(an)];
                               for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
                             });
}

inline Tensor tanh_act(const Tensor& a) {
  std::vector<double> vals(a.size());
  for (std::size_t i = 0; i < vals.size(); ++i) vals[i] = std::tanh((*a.data)[i]);
  Tape* tape = detail::tape_of({&a});
  const int an = a.node;
  auto saved = std::make_shared<std::vector<double>>(vals);
  return detail::make_result(a.rows, a.cols, std::move(vals), tape,
                             [an, saved](const std::vector<double>& g, std::vector<std::vector<double>>& grads) {
                               if (an < 0) return;
                               auto& ga = grads[static_cast<std::size_t>(an)];
                               for (std::size_t i = 0; i < g.size(); ++i)
                                 ga[i] += g[i] * (1.0 - (*saved)[i] * (*saved)[i]);
                             });
}

// Subgradient at 0 is 0: only strictly positive inputs pass gradient.
inline Tensor relu(const Tensor& a) {
  std::vector<double> vals(a.size());
  for (std::size_t i = 0; i < vals.size(); ++i) vals[i] = std::max(0.0, (*a.data)[i]);
  Tape* tape = detail::tape_of({&a});
  const int an = a.node;
  auto in = a.data;
  return detail::make_result(a.rows, a.cols, std::move(vals), tape,
                             [an, in](const std::vector<double>& g, std::vector<std::vector<double>>& grads) {
                               if (an < 0) return;
                               auto& ga = grads[static_cast<std::size_t>(an)];
                               for (std::size_t i = 0; i < g.size(); ++i)
                                 if ((*in)[i] > 0.0) ga[i] += g[i];
                             });
}

inline Tensor sum_all(const Tensor& a) {
  double s = 0.0;
  for (double v : *a.data) s += v;
  Tape* tape = detail::tape_of({&a});
  const int an = a.node;
  const std::size_t n = a.size();
  return detail::make_result(1, 1, {s}, tape,
                             [an, n](const std::vector<double>& g, std::vector<std::vector<double>>& grads) {
                               if (an < 0) return;
                               auto& ga = grads[static_cast<std::size_t>(an)];
                               for (std::size_t i = 0; i < n; ++i) ga[i] += g[0];
                             });
}

// Scalar dot with a fixed weight vector; the test scalarizer for non-scalar ops.
inline Tensor weighted_sum(const Tensor& a, std::vector<double> weights) {
  detail::require(weights.size() == a.size(), "weighted_sum: weight count does not match tensor size");
  double s = 0.0;
  for (std::size_t i = 0; i < weights.size(); ++i) s += (*a.data)[i] * weights[i];
  Tape* tape = detail::tape_of({&a});
  const int an = a.node;
  auto w = std::make_shared<std::vector<double>>(std::move(weights));
  return detail::make_result(1, 1, {s}, tape,
                             [an, w](const std::vector<double>& g, std::vector<std::vector<double>>& grads) {
                               if (an < 0) return;
                               auto& ga = grads[static_cast<std::size_t>(an)];
                               for (std::size_t i = 0; i < w->size(); ++i) ga[i] += g[0] * (*w)[i];
                             });
}

// Stack [1 x d] (or generally [r_i x d]) tensors into one matrix, row blocks
// in argument order.
inline Tensor stack_rows(const std::vector<Tensor>& parts) {
  detail::require(!parts.empty(), "stack_rows: no tensors given");
  const std::size_t cols = parts.front().cols;
  std::size_t rows = 0;
  for (const Tensor& p : parts) {
    detail::require(p.cols == cols, "stack_rows: column mismatch");
    rows += p.rows;
  }
  std::vector<double> vals;
  vals.reserve(rows * cols);
  Tape* tape = nullptr;
  std::vector<int> ids;
  std::vector<std::size_t> sizes;
  for (const Tensor& p : parts) {
    vals.insert(vals.end(), p.data->begin(), p.data->end());
    if (p.tape) {
      if (tape && tape != p.tape) throw ValidationError("stack_rows: tensors belong to different tapes");
      tape = p.tape;
    }
    ids.push_back(p.node);
    sizes.push_back(p.size());
  }
  return detail::make_result(rows, cols, std::move(vals), tape,
                             [ids, sizes](const std::vector<double>& g, std::vector<std::vector<double>>& grads) {
                               std::size_t off = 0;
                               for (std::size_t k = 0; k < ids.size(); ++k) {
                                 if (ids[k] >= 0) {
                                   auto& gp = grads[static_cast<std::size_t>(ids[k])];
                                   for (std::size_t i = 0; i < sizes[k]; ++i) gp[i] += g[off + i];
                                 }
                                 off += sizes[k];
                               }
                             });
}

// Concatenate two matrices side by side (same row count).
inline Tensor concat_cols(const Tensor& a, const Tensor& b) {
  detail::require(a.rows == b.rows, "concat_cols: row mismatch");
  const std::size_t rows = a.rows, ca = a.cols, cb = b.cols;
  std::vector<double> vals(rows * (ca + cb));
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < ca; ++c) vals[r * (ca + cb) + c] = a.at(r, c);
    for (std::size_t c = 0; c < cb; ++c) vals[r * (ca + cb) + ca + c] = b.at(r, c);
  }
  Tape* tape = detail::tape_of({&a, &b});
  const int an = a.node, bn = b.node;
  return detail::make_result(rows, ca + cb, std::move(vals), tape,
                             [an, bn, rows, ca, cb](const std::vector<double>& g,
                                                    std::vector<std::vector<double>>& grads) {
                               for (std::size_t r = 0; r < rows; ++r) {
                                 if (an >= 0)
                                   for (std::size_t c = 0; c < ca; ++c)
                                     grads[static_cast<std::size_t>(an)][r * ca + c] += g[r * (ca + cb) + c];
                                 if (bn >= 0)
                                   for (std::size_t c = 0; c < cb; ++c)
                                     grads[static_cast<std::size_t>(bn)][r * cb + c] += g[r * (ca + cb) + ca + c];
                               }
                             });
}

// ---------------------------------------------------------------------------
// Core layers.

// y = x * w + b with x:[n,d], w:[d,m], b:[1,m] broadcast over rows.
inline Tensor linear_forward(const Tensor& x, const Tensor& w, const Tensor& b) {
  detail::require(x.cols == w.rows, "linear_forward: x cols (" + std::to_string(x.cols) + ") != w rows (" +
                                        std::to_string(w.rows) + ")");
  detail::require(b.rows == 1 && b.cols == w.cols, "linear_forward: bias shape must be [1 x w cols]");
  const std::size_t n = x.rows, d = x.cols, m = w.cols;
  std::vector<double> vals(n * m);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < m; ++c) {
      double s = b.at(0, c);
      for (std::size_t k = 0; k < d; ++k) s += x.at(r, k) * w.at(k, c);
      vals[r * m + c] = s;
    }
  Tape* tape = detail::tape_of({&x, &w, &b});
  const int xn = x.node, wn = w.node, bn = b.node;
  auto xd = x.data, wd = w.data;
  return detail::make_result(
      n, m, std::move(vals), tape,
      [xn, wn, bn, xd, wd, n, d, m](const std::vector<double>& g, std::vector<std::vector<double>>& grads) {
        if (xn >= 0) {
          auto& gx = grads[static_cast<std::size_t>(xn)];
          for (std::size_t r = 0; r < n; ++r)
            for (std::size_t k = 0; k < d; ++k) {
              double s = 0.0;
              for (std::size_t c = 0; c < m; ++c) s += g[r * m + c] * (*wd)[k * m + c];
              gx[r * d + k] += s;
            }
        }
        if (wn >= 0) {
          auto& gw = grads[static_cast<std::size_t>(wn)];
          for (std::size_t k = 0; k < d; ++k)
            for (std::size_t c = 0; c < m; ++c) {
              double s = 0.0;
              for (std::size_t r = 0; r < n; ++r) s += (*xd)[r * d + k] * g[r * m + c];
              gw[k * m + c] += s;
            }
        }
        if (bn >= 0) {
          auto& gb = grads[static_cast<std::size_t>(bn)];
          for (std::size_t c = 0; c < m; ++c) {
            double s = 0.0;
            for (std::size_t r = 0; r < n; ++r) s += g[r * m + c];
            gb[c] += s;
          }
        }
      });
}

// Mean of embedding rows selected by ids; duplicate ids accumulate gradient.
// The sum is aggregated over sorted (id, count) pairs, a canonical order that
// makes the mean exactly invariant to id permutations, and — because doubling
// every count scales numerator and denominator by the same power of two —
// exactly invariant to duplicating the whole id list.
inline Tensor embedding_mean(const std::vector<std::size_t>& ids, const Tensor& embed) {
  detail::require(!ids.empty(), "embedding_mean: empty id list");
  const std::size_t v = embed.rows, d = embed.cols, k = ids.size();
  auto counts = std::make_shared<std::map<std::size_t, std::size_t>>();
  for (std::size_t id : ids) {
    detail::require(id < v, "embedding_mean: id " + std::to_string(id) + " out of range (vocab " +
                                std::to_string(v) + ")");
    ++(*counts)[id];
  }
  std::vector<double> vals(d, 0.0);
  for (const auto& [id, count] : *counts)
    for (std::size_t c = 0; c < d; ++c) vals[c] += static_cast<double>(count) * embed.at(id, c);
  for (std::size_t c = 0; c < d; ++c) vals[c] /= static_cast<double>(k);
  Tape* tape = detail::tape_of({&embed});
  const int en = embed.node;
  return detail::make_result(1, d, std::move(vals), tape,
                             [en, counts, d, k](const std::vector<double>& g,
                                                std::vector<std::vector<double>>& grads) {
                               if (en < 0) return;
                               auto& ge = grads[static_cast<std::size_t>(en)];
                               const double inv = 1.0 / static_cast<double>(k);
                               for (const auto& [id, count] : *counts)
                                 for (std::size_t c = 0; c < d; ++c)
                                   ge[id * d + c] += static_cast<double>(count) * (g[c] * inv);
                             });
}

// Each row divided by its L2 norm; all-zero rows pass through unchanged with
// subgradient 0 (the same kink convention as euclidean_distance).
inline Tensor l2_normalize_rows(const Tensor& a) {
  const std::size_t n = a.rows, d = a.cols;
  std::vector<double> vals(a.size());
  auto norms = std::make_shared<std::vector<double>>(n, 0.0);
  for (std::size_t r = 0; r < n; ++r) {
    double sq = 0.0;
    for (std::size_t c = 0; c < d; ++c) sq += a.at(r, c) * a.at(r, c);
    (*norms)[r] = std::sqrt(sq);
    for (std::size_t c = 0; c < d; ++c)
      vals[r * d + c] = (*norms)[r] > 0.0 ? a.at(r, c) / (*norms)[r] : 0.0;
  }
  Tape* tape = detail::tape_of({&a});
  const int an = a.node;
  auto y = std::make_shared<std::vector<double>>(vals);
  return detail::make_result(n, d, std::move(vals), tape,
                             [an, norms, y, n, d](const std::vector<double>& g,
                                                  std::vector<std::vector<double>>& grads) {
                               if (an < 0) return;
                               auto& ga = grads[static_cast<std::size_t>(an)];
                               for (std::size_t r = 0; r < n; ++r) {
                                 const double nr = (*norms)[r];
                                 if (nr == 0.0) continue;
                                 double dot = 0.0;
                                 for (std::size_t c = 0; c < d; ++c) dot += g[r * d + c] * (*y)[r * d + c];
                                 for (std::size_t c = 0; c < d; ++c)
                                   ga[r * d + c] += (g[r * d + c] - dot * (*y)[r * d + c]) / nr;
                               }
                             });
}

// Mean cross-entropy over rows of logits with integer targets.
// Gradient per row: (softmax - onehot) / n.
inline Tensor softmax_cross_entropy(const Tensor& logits, const std::vector<std::size_t>& targets) {
  detail::require(logits.rows == targets.size(),
                  "softmax_cross_entropy: " + std::to_string(logits.rows) + " rows but " +
                      std::to_string(targets.size()) + " targets");
  detail::require(logits.cols >= 2, "softmax_cross_entropy: need at least 2 classes");
  const std::size_t n = logits.rows, c = logits.cols;
  for (std::size_t t : targets)
    detail::require(t < c, "softmax_cross_entropy: target " + std::to_string(t) + " out of range");
  auto probs = std::make_shared<std::vector<double>>(n * c);
  double total = 0.0;
  for (std::size_t r = 0; r < n; ++r) {
    double m = logits.at(r, 0);
    for (std::size_t j = 1; j < c; ++j) m = std::max(m, logits.at(r, j));
    double s = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      const double e = std::exp(logits.at(r, j) - m);
      (*probs)[r * c + j] = e;
      s += e;
    }
    for (std::size_t j = 0; j < c; ++j) (*probs)[r * c + j] /= s;
    total += std::log(s) - (logits.at(r, targets[r]) - m);
  }
  total /= static_cast<double>(n);
  Tape* tape = detail::tape_of({&logits});
  const int ln = logits.node;
  auto tgt = std::make_shared<std::vector<std::size_t>>(targets);
  return detail::make_result(1, 1, {total}, tape,
                             [ln, probs, tgt, n, c](const std::vector<double>& g,
                                                    std::vector<std::vector<double>>& grads) {
                               if (ln < 0) return;
                               auto& gl = grads[static_cast<std::size_t>(ln)];
                               const double inv = g[0] / static_cast<double>(n);
                               for (std::size_t r = 0; r < n; ++r)
                                 for (std::size_t j = 0; j < c; ++j) {
                                   double p = (*probs)[r * c + j];
                                   if (j == (*tgt)[r]) p -= 1.0;
                                   gl[r * c + j] += p * inv;
                                 }
                             });
}

// Euclidean distance between two same-shape tensors viewed as flat vectors.
// At distance exactly 0 the subgradient used is 0.
inline Tensor euclidean_distance(const Tensor& u, const Tensor& v) {
  detail::require(u.rows == v.rows && u.cols == v.cols, "euclidean_distance: shape mismatch");
  auto diff = std::make_shared<std::vector<double>>(u.size());
  double sq = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    (*diff)[i] = (*u.data)[i] - (*v.data)[i];
    sq += (*diff)[i] * (*diff)[i];
  }
  const double dist = std::sqrt(sq);
  Tape* tape = detail::tape_of({&u, &v});
  const int un = u.node, vn = v.node;
  return detail::make_result(1, 1, {dist}, tape,
                             [un, vn, diff, dist](const std::vector<double>& g,
                                                  std::vector<std::vector<double>>& grads) {
                               if (dist == 0.0) return;  // subgradient 0 at the kink
                               const double s = g[0] / dist;
                               for (std::size_t i = 0; i < diff->size(); ++i) {
                                 if (un >= 0) grads[static_cast<std::size_t>(un)][i] += s * (*diff)[i];
                                 if (vn >= 0) grads[static_cast<std::size_t>(vn)][i] -= s * (*diff)[i];
                               }
                             });
}

// Identity forward; backward multiplies the upstream gradient by -lambda.
// Exact contract: output gradient element = (lambda == 0) ? 0.0 : -(lambda * g),
// so lambda = 1 yields a bit-exact negation of the upstream gradient.
inline Tensor gradient_reversal(const Tensor& a, double lambda) {
  detail::require(lambda >= 0.0, "gradient_reversal: lambda must be >= 0");
  std::vector<double> vals(*a.data);  // bit-exact copy
  Tape* tape = detail::tape_of({&a});
  const int an = a.node;
  return detail::make_result(a.rows, a.cols, std::move(vals), tape,
                             [an, lambda](const std::vector<double>& g, std::vector<std::vector<double>>& grads) {
                               if (an < 0) return;
                               auto& ga = grads[static_cast<std::size_t>(an)];
                               for (std::size_t i = 0; i < g.size(); ++i)
                                 ga[i] += (lambda == 0.0) ? 0.0 : -(lambda * g[i]);
                             });
}

// ---------------------------------------------------------------------------
// Backward pass and the SGD update.

inline Gradients backward(const Tensor& loss) {
  if (!loss.tape || loss.node < 0) throw ValidationError("backward: loss tensor is not on a tape");
  if (loss.size() != 1) throw ValidationError("backward: loss must be a scalar");
  const auto& nodes = loss.tape->nodes();
  std::vector<std::vector<double>> grads(nodes.size());
  for (std::size_t i = 0; i < nodes.size(); ++i) grads[i].assign(nodes[i].size, 0.0);
  grads[static_cast<std::size_t>(loss.node)][0] = 1.0;
  for (int i = loss.node; i >= 0; --i) {
    const auto& n = nodes[static_cast<std::size_t>(i)];
    if (n.back) n.back(grads[static_cast<std::size_t>(i)], grads);
  }
  return Gradients(std::move(grads));
}

// One named parameter inside an optimizer group.
struct NamedParam {
  std::string name;
  Tensor tensor;
};

// Global-norm gradient clipping over one parameter group, then the SGD update
// p -= lr * g, in place. Returns the pre-clip global norm.
inline double sgd_step(const std::vector<NamedParam>& params, const Gradients& grads, double lr, double clip) {
  if (!(lr > 0.0)) throw ValidationError("sgd_step: lr must be > 0");
  if (!(clip > 0.0)) throw ValidationError("sgd_step: clip must be > 0");
  double sq = 0.0;
  for (const NamedParam& p : params) {
    const auto& g = grads.of(p.tensor);
    for (double v : g) {
      if (!std::isfinite(v)) throw Error("sgd_step: non-finite gradient for parameter " + p.name);
      sq += v * v;
    }
  }
  const double norm = std::sqrt(sq);
  const double scl = norm > clip ? clip / norm : 1.0;
  for (const NamedParam& p : params) {
    const auto& g = grads.of(p.tensor);
    for (std::size_t i = 0; i < g.size(); ++i) (*p.tensor.data)[i] -= lr * scl * g[i];
  }
  return norm;
}

}  // namespace debias
