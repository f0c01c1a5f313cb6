#pragma once

#include <functional>
#include <memory>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "mp/param_store.hpp"
#include "mp/tensor.hpp"

namespace mp::ad {

/// When enabled (diagnostic reruns), every op validates its output for
/// non-finite values and reports the op where they first appeared.
inline bool& finite_checks() {
  thread_local bool enabled = false;
  return enabled;
}

template <class S>
struct Node {
  Tensor<S> value;
  Tensor<S> grad;
  bool requires_grad = false;
  bool grad_ready = false;
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;

  void accumulate(const Tensor<S>& g) {
    if (!requires_grad) return;
    if (!grad_ready) {
      grad = g;
      grad_ready = true;
    } else {
      grad.map() += g.map();
    }
  }
};

/// Handle to a node in the dynamically recorded computation graph. Values are
/// computed eagerly; backward closures are only attached when an input
/// requires gradients.
template <class S>
class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node<S>> n) : node_(std::move(n)) {}

  static Var leaf(Tensor<S> value, bool requires_grad, const char* op = "leaf") {
    auto n = std::make_shared<Node<S>>();
    n->value = std::move(value);
    n->requires_grad = requires_grad;
    n->op = op;
    return Var(std::move(n));
  }

  const Tensor<S>& value() const { return node_->value; }
  bool requires_grad() const { return node_ && node_->requires_grad; }
  bool valid() const { return node_ != nullptr; }
  std::shared_ptr<Node<S>> node() const { return node_; }

  std::int64_t rows() const { return node_->value.rows(); }
  std::int64_t cols() const { return node_->value.cols(); }

 private:
  std::shared_ptr<Node<S>> node_;
};

namespace detail {

template <class S>
Var<S> make_op(const char* op, Tensor<S> value, std::vector<Var<S>> inputs,
               std::function<void(Node<S>&)> backward) {
  if (finite_checks() && !value.all_finite()) {
    throw NumericalError(std::string("non-finite values produced by op '") + op + "'");
  }
  auto n = std::make_shared<Node<S>>();
  n->value = std::move(value);
  n->op = op;
  for (const auto& in : inputs) {
    if (in.requires_grad()) {
      n->requires_grad = true;
      break;
    }
  }
  if (n->requires_grad) {
    n->parents.reserve(inputs.size());
    for (const auto& in : inputs) n->parents.push_back(in.node());
    n->backward = std::move(backward);
  }
  return Var<S>(std::move(n));
}

}  // namespace detail

template <class S>
Var<S> constant(Tensor<S> value) {
  return Var<S>::leaf(std::move(value), false, "constant");
}

template <class S>
Var<S> add(const Var<S>& a, const Var<S>& b) {
  return detail::make_op<S>("add", mp::add(a.value(), b.value()), {a, b}, [](Node<S>& n) {
    n.parents[0]->accumulate(n.grad);
    n.parents[1]->accumulate(n.grad);
  });
}

template <class S>
Var<S> sub(const Var<S>& a, const Var<S>& b) {
  return detail::make_op<S>("sub", mp::sub(a.value(), b.value()), {a, b}, [](Node<S>& n) {
    n.parents[0]->accumulate(n.grad);
    if (n.parents[1]->requires_grad) n.parents[1]->accumulate(mp::scale(n.grad, S(-1)));
  });
}

template <class S>
Var<S> scale(const Var<S>& a, S s) {
  return detail::make_op<S>("scale", mp::scale(a.value(), s), {a}, [s](Node<S>& n) {
    n.parents[0]->accumulate(mp::scale(n.grad, s));
  });
}

template <class S>
Var<S> matmul(const Var<S>& a, const Var<S>& b) {
  return detail::make_op<S>("matmul", mp::matmul(a.value(), b.value()), {a, b}, [](Node<S>& n) {
    if (n.parents[0]->requires_grad) n.parents[0]->accumulate(mp::matmul_nt(n.grad, n.parents[1]->value));
    if (n.parents[1]->requires_grad) n.parents[1]->accumulate(mp::matmul_tn(n.parents[0]->value, n.grad));
  });
}

/// a * b^T; used for attention scores.
template <class S>
Var<S> matmul_nt(const Var<S>& a, const Var<S>& b) {
  return detail::make_op<S>("matmul_nt", mp::matmul_nt(a.value(), b.value()), {a, b}, [](Node<S>& n) {
    if (n.parents[0]->requires_grad) n.parents[0]->accumulate(mp::matmul(n.grad, n.parents[1]->value));
    if (n.parents[1]->requires_grad) n.parents[1]->accumulate(mp::matmul_tn(n.grad, n.parents[0]->value));
  });
}

template <class S>
Var<S> add_rowvec(const Var<S>& a, const Var<S>& row) {
  return detail::make_op<S>("add_rowvec", mp::add_rowvec(a.value(), row.value()), {a, row},
                            [](Node<S>& n) {
                              n.parents[0]->accumulate(n.grad);
                              if (n.parents[1]->requires_grad) n.parents[1]->accumulate(mp::colsum(n.grad));
                            });
}

template <class S>
Var<S> hadamard(const Var<S>& a, const Var<S>& b) {
  return detail::make_op<S>("hadamard", mp::hadamard(a.value(), b.value()), {a, b}, [](Node<S>& n) {
    if (n.parents[0]->requires_grad) n.parents[0]->accumulate(mp::hadamard(n.grad, n.parents[1]->value));
    if (n.parents[1]->requires_grad) n.parents[1]->accumulate(mp::hadamard(n.grad, n.parents[0]->value));
  });
}

template <class S>
Var<S> gelu(const Var<S>& a) {
  return detail::make_op<S>("gelu", mp::gelu(a.value()), {a}, [](Node<S>& n) {
    const Tensor<S>& x = n.parents[0]->value;
    Tensor<S> dx(x.rows(), x.cols());
    for (std::size_t i = 0; i < x.size(); ++i) {
      dx.raw()[i] = n.grad.raw()[i] * gelu_grad_scalar(x.raw()[i]);
    }
    n.parents[0]->accumulate(dx);
  });
}

template <class S>
Var<S> softmax_rows(const Var<S>& a) {
  Tensor<S> y = mp::softmax_rows(a.value());
  return detail::make_op<S>("softmax_rows", y, {a}, [](Node<S>& n) {
    const Tensor<S>& y2 = n.value;
    Tensor<S> dx(y2.rows(), y2.cols());
    for (std::int64_t r = 0; r < y2.rows(); ++r) {
      S dot = 0;
      for (std::int64_t c = 0; c < y2.cols(); ++c) dot += n.grad(r, c) * y2(r, c);
      for (std::int64_t c = 0; c < y2.cols(); ++c) dx(r, c) = y2(r, c) * (n.grad(r, c) - dot);
    }
    n.parents[0]->accumulate(dx);
  });
}

/// Per-row layer normalization over the feature dimension with learnable
/// gain/bias (both 1xD).
template <class S>
Var<S> layer_norm_rows(const Var<S>& x, const Var<S>& gain, const Var<S>& bias, S eps) {
  const Tensor<S>& xv = x.value();
  const std::int64_t rows = xv.rows(), cols = xv.cols();
  auto xhat = std::make_shared<Tensor<S>>(rows, cols);
  auto inv_std = std::make_shared<std::vector<S>>(static_cast<std::size_t>(rows));
  Tensor<S> out(rows, cols);
  for (std::int64_t r = 0; r < rows; ++r) {
    S mean = 0;
    for (std::int64_t c = 0; c < cols; ++c) mean += xv(r, c);
    mean /= static_cast<S>(cols);
    S var = 0;
    for (std::int64_t c = 0; c < cols; ++c) {
      const S d = xv(r, c) - mean;
      var += d * d;
    }
    var /= static_cast<S>(cols);
    const S inv = S(1) / std::sqrt(var + eps);
    (*inv_std)[static_cast<std::size_t>(r)] = inv;
    for (std::int64_t c = 0; c < cols; ++c) {
      const S xh = (xv(r, c) - mean) * inv;
      (*xhat)(r, c) = xh;
      out(r, c) = xh * gain.value()(0, c) + bias.value()(0, c);
    }
  }
  return detail::make_op<S>("layer_norm_rows", std::move(out), {x, gain, bias},
                            [xhat, inv_std](Node<S>& n) {
    const std::int64_t rows = n.value.rows(), cols = n.value.cols();
    Node<S>& px = *n.parents[0];
    Node<S>& pgain = *n.parents[1];
    Node<S>& pbias = *n.parents[2];
    if (pgain.requires_grad) {
      Tensor<S> dg(1, cols);
      for (std::int64_t r = 0; r < rows; ++r)
        for (std::int64_t c = 0; c < cols; ++c) dg(0, c) += n.grad(r, c) * (*xhat)(r, c);
      pgain.accumulate(dg);
    }
    if (pbias.requires_grad) pbias.accumulate(mp::colsum(n.grad));
    if (px.requires_grad) {
      Tensor<S> dx(rows, cols);
      const Tensor<S>& gainv = pgain.value;
      for (std::int64_t r = 0; r < rows; ++r) {
        // dxhat = g * gain; dx = inv_std * (dxhat - mean(dxhat) - xhat * mean(dxhat*xhat))
        S m1 = 0, m2 = 0;
        for (std::int64_t c = 0; c < cols; ++c) {
          const S dxh = n.grad(r, c) * gainv(0, c);
          m1 += dxh;
          m2 += dxh * (*xhat)(r, c);
        }
        m1 /= static_cast<S>(cols);
        m2 /= static_cast<S>(cols);
        const S inv = (*inv_std)[static_cast<std::size_t>(r)];
        for (std::int64_t c = 0; c < cols; ++c) {
          const S dxh = n.grad(r, c) * gainv(0, c);
          dx(r, c) = inv * (dxh - m1 - (*xhat)(r, c) * m2);
        }
      }
      px.accumulate(dx);
    }
  });
}

template <class S>
Var<S> concat_rows(const Var<S>& a, const Var<S>& b) {
  const std::int64_t ra = a.rows();
  return detail::make_op<S>("concat_rows", mp::concat_rows(a.value(), b.value()), {a, b},
                            [ra](Node<S>& n) {
    if (n.parents[0]->requires_grad) n.parents[0]->accumulate(mp::slice_rows(n.grad, 0, ra));
    if (n.parents[1]->requires_grad)
      n.parents[1]->accumulate(mp::slice_rows(n.grad, ra, n.grad.rows() - ra));
  });
}

template <class S>
Var<S> slice_rows(const Var<S>& a, std::int64_t start, std::int64_t count) {
  return detail::make_op<S>("slice_rows", mp::slice_rows(a.value(), start, count), {a},
                            [start, count](Node<S>& n) {
    Node<S>& p = *n.parents[0];
    Tensor<S> dx(p.value.rows(), p.value.cols());
    for (std::int64_t r = 0; r < count; ++r)
      for (std::int64_t c = 0; c < dx.cols(); ++c) dx(start + r, c) = n.grad(r, c);
    p.accumulate(dx);
  });
}

template <class S>
Var<S> slice_cols(const Var<S>& a, std::int64_t start, std::int64_t count) {
  return detail::make_op<S>("slice_cols", mp::slice_cols(a.value(), start, count), {a},
                            [start, count](Node<S>& n) {
    Node<S>& p = *n.parents[0];
    Tensor<S> dx(p.value.rows(), p.value.cols());
    for (std::int64_t r = 0; r < dx.rows(); ++r)
      for (std::int64_t c = 0; c < count; ++c) dx(r, start + c) = n.grad(r, c);
    p.accumulate(dx);
  });
}

template <class S>
Var<S> concat_cols(const Var<S>& a, const Var<S>& b) {
  const std::int64_t ca = a.cols();
  return detail::make_op<S>("concat_cols", mp::concat_cols(a.value(), b.value()), {a, b},
                            [ca](Node<S>& n) {
    if (n.parents[0]->requires_grad) n.parents[0]->accumulate(mp::slice_cols(n.grad, 0, ca));
    if (n.parents[1]->requires_grad)
      n.parents[1]->accumulate(mp::slice_cols(n.grad, ca, n.grad.cols() - ca));
  });
}

template <class S>
Var<S> log(const Var<S>& a) {
  Tensor<S> out(a.rows(), a.cols());
  for (std::size_t i = 0; i < a.value().size(); ++i) out.raw()[i] = std::log(a.value().raw()[i]);
  return detail::make_op<S>("log", std::move(out), {a}, [](Node<S>& n) {
    const Tensor<S>& x = n.parents[0]->value;
    Tensor<S> dx(x.rows(), x.cols());
    for (std::size_t i = 0; i < x.size(); ++i) dx.raw()[i] = n.grad.raw()[i] / x.raw()[i];
    n.parents[0]->accumulate(dx);
  });
}

/// Clamp with pass-through gradient strictly inside [lo, hi], zero outside.
template <class S>
Var<S> clamp(const Var<S>& a, S lo, S hi) {
  Tensor<S> out(a.rows(), a.cols());
  for (std::size_t i = 0; i < a.value().size(); ++i) {
    out.raw()[i] = std::min(hi, std::max(lo, a.value().raw()[i]));
  }
  return detail::make_op<S>("clamp", std::move(out), {a}, [lo, hi](Node<S>& n) {
    const Tensor<S>& x = n.parents[0]->value;
    Tensor<S> dx(x.rows(), x.cols());
    for (std::size_t i = 0; i < x.size(); ++i) {
      dx.raw()[i] = (x.raw()[i] >= lo && x.raw()[i] <= hi) ? n.grad.raw()[i] : S(0);
    }
    n.parents[0]->accumulate(dx);
  });
}

template <class S>
Var<S> sum_all(const Var<S>& a) {
  Tensor<S> out(1, 1);
  for (S v : a.value().raw()) out(0, 0) += v;
  return detail::make_op<S>("sum_all", std::move(out), {a}, [](Node<S>& n) {
    Node<S>& p = *n.parents[0];
    p.accumulate(Tensor<S>::full(p.value.rows(), p.value.cols(), n.grad(0, 0)));
  });
}

template <class S>
Var<S> mean_all(const Var<S>& a) {
  const S inv = S(1) / static_cast<S>(a.value().size());
  Tensor<S> out(1, 1);
  for (S v : a.value().raw()) out(0, 0) += v;
  out(0, 0) *= inv;
  return detail::make_op<S>("mean_all", std::move(out), {a}, [inv](Node<S>& n) {
    Node<S>& p = *n.parents[0];
    p.accumulate(Tensor<S>::full(p.value.rows(), p.value.cols(), n.grad(0, 0) * inv));
  });
}

/// Runs reverse-mode accumulation from a scalar (1x1) output.
template <class S>
void backward(const Var<S>& loss) {
  if (loss.rows() != 1 || loss.cols() != 1) {
    throw ConfigError("backward: output must be 1x1, got " + loss.value().shape_str());
  }
  if (!loss.requires_grad()) return;

  // Post-order DFS, then reverse for the topological sweep.
  std::vector<Node<S>*> topo;
  std::unordered_set<Node<S>*> visited;
  struct Frame {
    Node<S>* node;
    std::size_t next_parent;
  };
  std::vector<Frame> stack;
  stack.push_back({loss.node().get(), 0});
  visited.insert(loss.node().get());
  while (!stack.empty()) {
    Frame& f = stack.back();
    if (f.next_parent < f.node->parents.size()) {
      Node<S>* p = f.node->parents[f.next_parent++].get();
      if (p->requires_grad && !visited.count(p)) {
        visited.insert(p);
        stack.push_back({p, 0});
      }
    } else {
      topo.push_back(f.node);
      stack.pop_back();
    }
  }

  loss.node()->accumulate(Tensor<S>::full(1, 1, S(1)));
  for (auto it = topo.rbegin(); it != topo.rend(); ++it) {
    Node<S>* n = *it;
    if (n->backward && n->grad_ready) n->backward(*n);
  }
}

/// Gradients of a scalar computation with respect to the trainable
/// parameters it touched. Frozen parameters never receive an entry.
template <class S>
struct GradTape {
  std::vector<std::string> names;
  std::unordered_map<std::string, Tensor<S>> grads;

  const Tensor<S>& at(const std::string& name) const {
    auto it = grads.find(name);
    if (it == grads.end()) throw ConfigError("no gradient recorded for: " + name);
    return it->second;
  }
  bool has(const std::string& name) const { return grads.count(name) != 0; }
};

/// Evaluation context binding a ParamStore to graph leaves. Each parameter
/// name maps to one shared leaf per context, so repeated uses accumulate
/// into a single gradient.
template <class S>
class Graph {
 public:
  Graph(const ParamStore<S>& store, bool enable_grad)
      : store_(&store), grad_(enable_grad) {}

  Var<S> param(const std::string& name) {
    auto it = leaves_.find(name);
    if (it != leaves_.end()) return it->second;
    const Parameter<S>& p = store_->param(name);
    Var<S> v = Var<S>::leaf(p.value, grad_ && p.trainable, "param");
    leaves_.emplace(name, v);
    return v;
  }

  Var<S> constant(Tensor<S> value) { return ad::constant(std::move(value)); }

  bool grad_enabled() const { return grad_; }
  const ParamStore<S>& store() const { return *store_; }

  GradTape<S> collect() const {
    GradTape<S> tape;
    for (const auto& name : store_->names()) {
      const Parameter<S>& p = store_->param(name);
      if (!p.trainable) continue;
      tape.names.push_back(name);
      auto it = leaves_.find(name);
      if (it != leaves_.end() && it->second.node()->grad_ready) {
        tape.grads.emplace(name, it->second.node()->grad);
      } else {
        tape.grads.emplace(name, Tensor<S>(p.value.rows(), p.value.cols()));
      }
    }
    return tape;
  }

 private:
  const ParamStore<S>* store_;
  bool grad_;
  std::unordered_map<std::string, Var<S>> leaves_;
};

template <class S>
using ComputeFn = std::function<Var<S>(Graph<S>&)>;

/// Forward-only evaluation of a scalar computation.
template <class S>
S eval_scalar(const ParamStore<S>& store, const ComputeFn<S>& fn) {
  Graph<S> g(store, false);
  Var<S> out = fn(g);
  if (out.rows() != 1 || out.cols() != 1) {
    throw ConfigError("eval_scalar: output must be 1x1");
  }
  return out.value()(0, 0);
}

/// Loss value plus gradients for every trainable parameter. A non-finite
/// loss triggers a diagnostic rerun that names the op where non-finite
/// values first appeared.
template <class S>
std::pair<S, GradTape<S>> value_and_grad(const ParamStore<S>& store, const ComputeFn<S>& fn) {
  Graph<S> g(store, true);
  Var<S> loss = fn(g);
  if (loss.rows() != 1 || loss.cols() != 1) {
    throw ConfigError("value_and_grad: computation must produce a 1x1 loss");
  }
  const S value = loss.value()(0, 0);
  if (!std::isfinite(static_cast<double>(value))) {
    finite_checks() = true;
    try {
      Graph<S> g2(store, false);
      fn(g2);
    } catch (const NumericalError&) {
      finite_checks() = false;
      throw;
    }
    finite_checks() = false;
    throw NumericalError("non-finite loss value");
  }
  backward(loss);
  return {value, g.collect()};
}

struct FiniteDiffReport {
  double max_rel_error = 0.0;
  std::size_t entries_checked = 0;
  std::string worst_param;
  std::int64_t worst_index = -1;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
};

/// Central-difference gradient check (64-bit only). Reports the max over
/// sampled entries of |analytic - fd| / max(|analytic|, |fd|, 1e-12).
/// The numeric side only uses forward evaluations, independent of the
/// reverse-mode path it validates.
inline FiniteDiffReport finite_diff_report(const ParamStore<double>& params,
                                           const ComputeFn<double>& fn, double h = 1e-5,
                                           std::size_t max_entries_per_param = SIZE_MAX) {
  FiniteDiffReport report;
  auto [loss, tape] = value_and_grad<double>(params, fn);
  (void)loss;
  ParamStore<double> work = params;
  for (const auto& name : tape.names) {
    Tensor<double>& w = work.value(name);
    const Tensor<double>& analytic = tape.at(name);
    const std::size_t n = w.size();
    const std::size_t step = n <= max_entries_per_param ? 1 : (n + max_entries_per_param - 1) / max_entries_per_param;
    for (std::size_t i = 0; i < n; i += step) {
      const double orig = w.raw()[i];
      w.raw()[i] = orig + h;
      const double up = eval_scalar<double>(work, fn);
      w.raw()[i] = orig - h;
      const double down = eval_scalar<double>(work, fn);
      w.raw()[i] = orig;
      const double fd = (up - down) / (2.0 * h);
      const double a = analytic.raw()[i];
      const double denom = std::max({std::abs(a), std::abs(fd), 1e-12});
      const double rel = std::abs(a - fd) / denom;
      ++report.entries_checked;
      if (rel > report.max_rel_error) {
        report.max_rel_error = rel;
        report.worst_param = name;
        report.worst_index = static_cast<std::int64_t>(i);
        report.worst_analytic = a;
        report.worst_numeric = fd;
      }
    }
  }
  return report;
}

inline double finite_diff_check(const ParamStore<double>& params, const ComputeFn<double>& fn,
                                double h = 1e-5, std::size_t max_entries_per_param = SIZE_MAX) {
  return finite_diff_report(params, fn, h, max_entries_per_param).max_rel_error;
}

}  // namespace mp::ad
