#include "ssllanes/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace ssllanes::ad {

std::int64_t numel(const Shape& shape) {
  std::int64_t n = 1;
  for (int d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ",";
    os << shape[i];
  }
  os << "]";
  return os.str();
}

namespace {

[[noreturn]] void fail(const std::string& op, const std::string& detail) {
  throw std::invalid_argument(op + ": " + detail);
}

void check_graph(const char* op, const Var& a) {
  if (!a.defined()) fail(op, "undefined operand");
}

void check_same_graph(const char* op, const Var& a, const Var& b) {
  check_graph(op, a);
  check_graph(op, b);
  if (a.graph() != b.graph()) fail(op, "operands belong to different graphs");
}

void check_same_shape(const char* op, const Var& a, const Var& b) {
  if (a.shape() != b.shape())
    fail(op, std::string("shape mismatch ") + shape_str(a.shape()) + " vs " +
                 shape_str(b.shape()));
}

bool any_requires(const Var& a, const Var& b) {
  return a.requires_grad() || b.requires_grad();
}

}  // namespace

const Shape& Var::shape() const { return graph_->node(id_).shape; }
const std::vector<double>& Var::value() const { return graph_->node(id_).value; }
const std::vector<double>& Var::grad() const { return graph_->node(id_).grad; }
bool Var::requires_grad() const { return graph_->node(id_).needs_grad; }

double Var::scalar() const {
  const auto& v = value();
  if (v.size() != 1) fail("scalar", "tensor has " + std::to_string(v.size()) + " elements");
  return v[0];
}

Var Graph::make(Shape shape, std::vector<double> value, bool requires_grad_flag,
                std::function<void(Graph&)> backward) {
  if (numel(shape) != static_cast<std::int64_t>(value.size()))
    fail("make", "value size does not match shape " + shape_str(shape));
  Node n;
  n.shape = std::move(shape);
  n.value = std::move(value);
  n.needs_grad = requires_grad_flag;
  n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Graph::constant(Shape shape, std::vector<double> values) {
  return make(std::move(shape), std::move(values), false, nullptr);
}

Var Graph::constant_scalar(double v) { return constant({1}, {v}); }

Var Graph::leaf(Shape shape, std::vector<double> values, bool requires_grad) {
  return make(std::move(shape), std::move(values), requires_grad, nullptr);
}

void Graph::backward(const Var& loss, double seed) {
  if (loss.graph() != this) fail("backward", "loss from another graph");
  if (numel(loss.shape()) != 1)
    fail("backward", "loss must be scalar, got " + shape_str(loss.shape()));
  for (auto& n : nodes_) {
    if (n.needs_grad) n.grad.assign(n.value.size(), 0.0);
  }
  Node& ln = node(loss.id());
  if (!ln.needs_grad) return;  // loss does not depend on any differentiable leaf
  ln.grad[0] = seed;
  for (int i = loss.id(); i >= 0; --i) {
    Node& n = node(i);
    if (n.needs_grad && n.backward) n.backward(*this);
  }
}

namespace {

// Creates the output node and then attaches a backward closure that knows the
// output id. `fn(g, out_id)` must add into the parents' grad buffers.
template <typename F>
Var attach(Graph& g, Shape shape, std::vector<double> value, bool requires_grad_flag, F fn) {
  Var out = g.make(std::move(shape), std::move(value), requires_grad_flag, nullptr);
  if (requires_grad_flag) {
    const int oid = out.id();
    g.node(oid).backward = [fn = std::move(fn), oid](Graph& gg) { fn(gg, oid); };
  }
  return out;
}

std::vector<double>* grad_if_needed(Graph& g, int id) {
  auto& n = g.node(id);
  return n.needs_grad ? &n.grad : nullptr;
}

}  // namespace

// ---- linear algebra ---------------------------------------------------------

Var matmul(Var a, Var b) {
  check_same_graph("matmul", a, b);
  const auto& sa = a.shape();
  const auto& sb = b.shape();
  if (sa.size() != 2 || sb.size() != 2 || sa[1] != sb[0])
    fail("matmul", "incompatible shapes " + shape_str(sa) + " x " + shape_str(sb));
  const int m = sa[0], k = sa[1], n = sb[1];
  Graph& g = *a.graph();
  std::vector<double> out(static_cast<std::size_t>(m) * n, 0.0);
  {
    const auto& av = a.value();
    const auto& bv = b.value();
    for (int i = 0; i < m; ++i) {
      double* orow = &out[static_cast<std::size_t>(i) * n];
      for (int p = 0; p < k; ++p) {
        const double aip = av[static_cast<std::size_t>(i) * k + p];
        if (aip == 0.0) continue;
        const double* brow = &bv[static_cast<std::size_t>(p) * n];
        for (int j = 0; j < n; ++j) orow[j] += aip * brow[j];
      }
    }
  }
  const int aid = a.id(), bid = b.id();
  return attach(g, {m, n}, std::move(out), any_requires(a, b),
                [aid, bid, m, k, n](Graph& gg, int oid) {
    const auto& dout = gg.node(oid).grad;
    const auto& av = gg.node(aid).value;
    const auto& bv = gg.node(bid).value;
    if (auto* da = grad_if_needed(gg, aid)) {
      // dA = dC . B^T
      for (int i = 0; i < m; ++i) {
        const double* drow = &dout[static_cast<std::size_t>(i) * n];
        for (int p = 0; p < k; ++p) {
          const double* brow = &bv[static_cast<std::size_t>(p) * n];
          double acc = 0.0;
          for (int j = 0; j < n; ++j) acc += drow[j] * brow[j];
          (*da)[static_cast<std::size_t>(i) * k + p] += acc;
        }
      }
    }
    if (auto* db = grad_if_needed(gg, bid)) {
      // dB = A^T . dC
      for (int i = 0; i < m; ++i) {
        const double* drow = &dout[static_cast<std::size_t>(i) * n];
        for (int p = 0; p < k; ++p) {
          const double aip = av[static_cast<std::size_t>(i) * k + p];
          if (aip == 0.0) continue;
          double* brow = &(*db)[static_cast<std::size_t>(p) * n];
          for (int j = 0; j < n; ++j) brow[j] += aip * drow[j];
        }
      }
    }
  });
}

// ---- elementwise ------------------------------------------------------------

Var add(Var a, Var b) {
  check_same_graph("add", a, b);
  check_same_shape("add", a, b);
  Graph& g = *a.graph();
  std::vector<double> out = a.value();
  const auto& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
  const int aid = a.id(), bid = b.id();
  return attach(g, a.shape(), std::move(out), any_requires(a, b),
                [aid, bid](Graph& gg, int oid) {
    const auto& dout = gg.node(oid).grad;
    if (auto* da = grad_if_needed(gg, aid))
      for (std::size_t i = 0; i < dout.size(); ++i) (*da)[i] += dout[i];
    if (auto* db = grad_if_needed(gg, bid))
      for (std::size_t i = 0; i < dout.size(); ++i) (*db)[i] += dout[i];
  });
}

Var sub(Var a, Var b) {
  check_same_graph("sub", a, b);
  check_same_shape("sub", a, b);
  Graph& g = *a.graph();
  std::vector<double> out = a.value();
  const auto& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
  const int aid = a.id(), bid = b.id();
  return attach(g, a.shape(), std::move(out), any_requires(a, b),
                [aid, bid](Graph& gg, int oid) {
    const auto& dout = gg.node(oid).grad;
    if (auto* da = grad_if_needed(gg, aid))
      for (std::size_t i = 0; i < dout.size(); ++i) (*da)[i] += dout[i];
    if (auto* db = grad_if_needed(gg, bid))
      for (std::size_t i = 0; i < dout.size(); ++i) (*db)[i] -= dout[i];
  });
}

Var mul(Var a, Var b) {
  check_same_graph("mul", a, b);
  check_same_shape("mul", a, b);
  Graph& g = *a.graph();
  std::vector<double> out = a.value();
  const auto& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  const int aid = a.id(), bid = b.id();
  return attach(g, a.shape(), std::move(out), any_requires(a, b),
                [aid, bid](Graph& gg, int oid) {
    const auto& dout = gg.node(oid).grad;
    const auto& av = gg.node(aid).value;
    const auto& bv2 = gg.node(bid).value;
    if (auto* da = grad_if_needed(gg, aid))
      for (std::size_t i = 0; i < dout.size(); ++i) (*da)[i] += dout[i] * bv2[i];
    if (auto* db = grad_if_needed(gg, bid))
      for (std::size_t i = 0; i < dout.size(); ++i) (*db)[i] += dout[i] * av[i];
  });
}

Var mul_scalar(Var a, double c) {
  check_graph("mul_scalar", a);
  Graph& g = *a.graph();
  std::vector<double> out = a.value();
  for (double& v : out) v *= c;
  const int aid = a.id();
  return attach(g, a.shape(), std::move(out), a.requires_grad(),
                [aid, c](Graph& gg, int oid) {
    const auto& dout = gg.node(oid).grad;
    if (auto* da = grad_if_needed(gg, aid))
      for (std::size_t i = 0; i < dout.size(); ++i) (*da)[i] += c * dout[i];
  });
}

Var add_scalar(Var a, double c) {
  check_graph("add_scalar", a);
  Graph& g = *a.graph();
  std::vector<double> out = a.value();
  for (double& v : out) v += c;
  const int aid = a.id();
  return attach(g, a.shape(), std::move(out), a.requires_grad(),
                [aid](Graph& gg, int oid) {
    const auto& dout = gg.node(oid).grad;
    if (auto* da = grad_if_needed(gg, aid))
      for (std::size_t i = 0; i < dout.size(); ++i) (*da)[i] += dout[i];
  });
}

Var add_const(Var a, const std::vector<double>& c) {
  check_graph("add_const", a);
  if (a.value().size() != c.size()) fail("add_const", "constant size mismatch");
  Graph& g = *a.graph();
  std::vector<double> out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += c[i];
  const int aid = a.id();
  return attach(g, a.shape(), std::move(out), a.requires_grad(),
                [aid](Graph& gg, int oid) {
    const auto& dout = gg.node(oid).grad;
    if (auto* da = grad_if_needed(gg, aid))
      for (std::size_t i = 0; i < dout.size(); ++i) (*da)[i] += dout[i];
  });
}

Var mul_const(Var a, const std::vector<double>& c) {
  check_graph("mul_const", a);
  if (a.value().size() != c.size()) fail("mul_const", "constant size mismatch");
  Graph& g = *a.graph();
  std::vector<double> out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= c[i];
  const int aid = a.id();
  return attach(g, a.shape(), std::move(out), a.requires_grad(),
                [aid, c](Graph& gg, int oid) {
    const auto& dout = gg.node(oid).grad;
    if (auto* da = grad_if_needed(gg, aid))
      for (std::size_t i = 0; i < dout.size(); ++i) (*da)[i] += c[i] * dout[i];
  });
}

// ---- structural -------------------------------------------------------------

Var concat(const std::vector<Var>& xs, int axis) {
  if (xs.empty()) fail("concat", "no inputs");
  Graph& g = *xs[0].graph();
  for (const auto& x : xs) check_same_graph("concat", xs[0], x);
  const auto& s0 = xs[0].shape();
  bool needs = false;
  for (const auto& x : xs) needs = needs || x.requires_grad();

  if (s0.size() == 1) {
    if (axis != 0) fail("concat", "1-D input requires axis 0");
    int total = 0;
    std::vector<double> out;
    std::vector<int> ids, sizes;
    for (const auto& x : xs) {
      if (x.shape().size() != 1) fail("concat", "rank mismatch");
      total += x.shape()[0];
      out.insert(out.end(), x.value().begin(), x.value().end());
      ids.push_back(x.id());
      sizes.push_back(x.shape()[0]);
    }
    return attach(g, {total}, std::move(out), needs,
                  [ids, sizes](Graph& gg, int oid) {
      const auto& dout = gg.node(oid).grad;
      std::size_t off = 0;
      for (std::size_t t = 0; t < ids.size(); ++t) {
        if (auto* dx = grad_if_needed(gg, ids[t]))
          for (int i = 0; i < sizes[t]; ++i) (*dx)[i] += dout[off + i];
        off += static_cast<std::size_t>(sizes[t]);
      }
    });
  }

  if (s0.size() != 2 || (axis != 0 && axis != 1)) fail("concat", "expected 2-D input, axis 0 or 1");
  std::vector<int> ids;
  for (const auto& x : xs) {
    if (x.shape().size() != 2) fail("concat", "rank mismatch");
    ids.push_back(x.id());
  }
  if (axis == 0) {
    const int cols = s0[1];
    int rows = 0;
    std::vector<double> out;
    std::vector<int> rcounts;
    for (const auto& x : xs) {
      if (x.shape()[1] != cols) fail("concat", "column mismatch");
      rows += x.shape()[0];
      rcounts.push_back(x.shape()[0]);
      out.insert(out.end(), x.value().begin(), x.value().end());
    }
    return attach(g, {rows, cols}, std::move(out), needs,
                  [ids, rcounts, cols](Graph& gg, int oid) {
      const auto& dout = gg.node(oid).grad;
      std::size_t off = 0;
      for (std::size_t t = 0; t < ids.size(); ++t) {
        const std::size_t cnt = static_cast<std::size_t>(rcounts[t]) * cols;
        if (auto* dx = grad_if_needed(gg, ids[t]))
          for (std::size_t i = 0; i < cnt; ++i) (*dx)[i] += dout[off + i];
        off += cnt;
      }
    });
  }
  // axis == 1
  const int rows = s0[0];
  int cols = 0;
  std::vector<int> ccounts;
  for (const auto& x : xs) {
    if (x.shape()[0] != rows) fail("concat", "row mismatch");
    cols += x.shape()[1];
    ccounts.push_back(x.shape()[1]);
  }
  std::vector<double> out(static_cast<std::size_t>(rows) * cols);
  {
    int coff = 0;
    for (const auto& x : xs) {
      const int c = x.shape()[1];
      const auto& xv = x.value();
      for (int r = 0; r < rows; ++r)
        for (int j = 0; j < c; ++j)
          out[static_cast<std::size_t>(r) * cols + coff + j] =
              xv[static_cast<std::size_t>(r) * c + j];
      coff += c;
    }
  }
  return attach(g, {rows, cols}, std::move(out), needs,
                [ids, ccounts, rows, cols](Graph& gg, int oid) {
    const auto& dout = gg.node(oid).grad;
    int coff = 0;
    for (std::size_t t = 0; t < ids.size(); ++t) {
      const int c = ccounts[t];
      if (auto* dx = grad_if_needed(gg, ids[t]))
        for (int r = 0; r < rows; ++r)
          for (int j = 0; j < c; ++j)
            (*dx)[static_cast<std::size_t>(r) * c + j] +=
                dout[static_cast<std::size_t>(r) * cols + coff + j];
      coff += c;
    }
  });
}

Var gather_rows(Var x, std::vector<int> rows) {
  check_graph("gather_rows", x);
  const auto& s = x.shape();
  if (s.size() != 2) fail("gather_rows", "expected 2-D input, got " + shape_str(s));
  const int cols = s[1];
  for (int r : rows)
    if (r < 0 || r >= s[0]) fail("gather_rows", "row index out of range");
  Graph& g = *x.graph();
  std::vector<double> out(rows.size() * static_cast<std::size_t>(cols));
  const auto& xv = x.value();
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (int j = 0; j < cols; ++j)
      out[i * cols + j] = xv[static_cast<std::size_t>(rows[i]) * cols + j];
  const int xid = x.id();
  const int n_rows = static_cast<int>(rows.size());
  return attach(g, {n_rows, cols}, std::move(out),
                x.requires_grad(), [xid, rows = std::move(rows), cols](Graph& gg, int oid) {
    const auto& dout = gg.node(oid).grad;
    if (auto* dx = grad_if_needed(gg, xid))
      for (std::size_t i = 0; i < rows.size(); ++i)
        for (int j = 0; j < cols; ++j)
          (*dx)[static_cast<std::size_t>(rows[i]) * cols + j] += dout[i * cols + j];
  });
}

Var scatter_add_rows(Var x, std::vector<int> rows, int out_rows) {
  check_graph("scatter_add_rows", x);
  const auto& s = x.shape();
  if (s.size() != 2) fail("scatter_add_rows", "expected 2-D input, got " + shape_str(s));
  if (static_cast<int>(rows.size()) != s[0])
    fail("scatter_add_rows", "index count does not match input rows");
  const int cols = s[1];
  for (int r : rows)
    if (r < 0 || r >= out_rows) fail("scatter_add_rows", "row index out of range");
  Graph& g = *x.graph();
  std::vector<double> out(static_cast<std::size_t>(out_rows) * cols, 0.0);
  const auto& xv = x.value();
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (int j = 0; j < cols; ++j)
      out[static_cast<std::size_t>(rows[i]) * cols + j] += xv[i * cols + j];
  const int xid = x.id();
  return attach(g, {out_rows, cols}, std::move(out), x.requires_grad(),
                [xid, rows = std::move(rows), cols](Graph& gg, int oid) {
    const auto& dout = gg.node(oid).grad;
    if (auto* dx = grad_if_needed(gg, xid))
      for (std::size_t i = 0; i < rows.size(); ++i)
        for (int j = 0; j < cols; ++j)
          (*dx)[i * cols + j] += dout[static_cast<std::size_t>(rows[i]) * cols + j];
  });
}

Var tile_rows(Var row, int n) {
  check_graph("tile_rows", row);
  const auto& s = row.shape();
  int f = 0;
  if (s.size() == 1) f = s[0];
  else if (s.size() == 2 && s[0] == 1) f = s[1];
  else fail("tile_rows", "expected [f] or [1,f], got " + shape_str(s));
  Graph& g = *row.graph();
  std::vector<double> out(static_cast<std::size_t>(n) * f);
  const auto& rv = row.value();
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < f; ++j) out[static_cast<std::size_t>(i) * f + j] = rv[j];
  const int rid = row.id();
  return attach(g, {n, f}, std::move(out), row.requires_grad(),
                [rid, n, f](Graph& gg, int oid) {
    const auto& dout = gg.node(oid).grad;
    if (auto* dr = grad_if_needed(gg, rid))
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < f; ++j) (*dr)[j] += dout[static_cast<std::size_t>(i) * f + j];
  });
}

Var select_index(Var x, int i) {
  check_graph("select_index", x);
  if (x.shape().size() != 1) fail("select_index", "expected 1-D input");
  if (i < 0 || i >= x.shape()[0]) fail("select_index", "index out of range");
  Graph& g = *x.graph();
  const int xid = x.id();
  return attach(g, {1}, {x.value()[static_cast<std::size_t>(i)]}, x.requires_grad(),
                [xid, i](Graph& gg, int oid) {
    const auto& dout = gg.node(oid).grad;
    if (auto* dx = grad_if_needed(gg, xid)) (*dx)[static_cast<std::size_t>(i)] += dout[0];
  });
}

Var reshape(Var x, Shape shape) {
  check_graph("reshape", x);
  if (numel(shape) != numel(x.shape()))
    fail("reshape", "cannot reshape " + shape_str(x.shape()) + " to " + shape_str(shape));
  Graph& g = *x.graph();
  const int xid = x.id();
  return attach(g, std::move(shape), x.value(), x.requires_grad(),
                [xid](Graph& gg, int oid) {
    const auto& dout = gg.node(oid).grad;
    if (auto* dx = grad_if_needed(gg, xid))
      for (std::size_t i = 0; i < dout.size(); ++i) (*dx)[i] += dout[i];
  });
}

// ---- nonlinearities ----------------------------------------------------------

Var relu(Var x) {
  check_graph("relu", x);
  Graph& g = *x.graph();
  std::vector<double> out = x.value();
  for (double& v : out) v = v > 0.0 ? v : 0.0;
  const int xid = x.id();
  return attach(g, x.shape(), std::move(out), x.requires_grad(),
                [xid](Graph& gg, int oid) {
    const auto& dout = gg.node(oid).grad;
    const auto& xv = gg.node(xid).value;
    if (auto* dx = grad_if_needed(gg, xid))
      for (std::size_t i = 0; i < dout.size(); ++i)
        if (xv[i] > 0.0) (*dx)[i] += dout[i];
  });
}

Var sigmoid(Var x) {
  check_graph("sigmoid", x);
  Graph& g = *x.graph();
  std::vector<double> out = x.value();
  for (double& v : out) v = 1.0 / (1.0 + std::exp(-v));
  const int xid = x.id();
  Var o = attach(g, x.shape(), std::move(out), x.requires_grad(),
                 [xid](Graph& gg, int oid) {
    const auto& dout = gg.node(oid).grad;
    const auto& ov = gg.node(oid).value;
    if (auto* dx = grad_if_needed(gg, xid))
      for (std::size_t i = 0; i < dout.size(); ++i)
        (*dx)[i] += dout[i] * ov[i] * (1.0 - ov[i]);
  });
  return o;
}

namespace {

// Rows-of-features view used by layer_norm: [n_rows x feat], with an
// arbitrary stride between consecutive features of a row.
struct NormLayout {
  int n_rows = 0;
  int feat = 0;
  // element index of feature j of row r
  std::function<std::size_t(int, int)> at;
};

NormLayout norm_layout(const Shape& s) {
  NormLayout lay;
  if (s.size() == 1) {
    lay.n_rows = 1;
    lay.feat = s[0];
    lay.at = [](int, int j) { return static_cast<std::size_t>(j); };
  } else if (s.size() == 2) {
    const int cols = s[1];
    lay.n_rows = s[0];
    lay.feat = cols;
    lay.at = [cols](int r, int j) { return static_cast<std::size_t>(r) * cols + j; };
  } else if (s.size() == 3) {
    // [n, c, l]: normalize across channels per (n, l) position
    const int c = s[1], l = s[2];
    lay.n_rows = s[0] * l;
    lay.feat = c;
    lay.at = [c, l](int r, int j) {
      const int n = r / l, t = r % l;
      return (static_cast<std::size_t>(n) * c + j) * l + t;
    };
  } else {
    fail("layer_norm", "unsupported rank " + shape_str(s));
  }
  return lay;
}

}  // namespace

Var layer_norm(Var x, Var gain, Var bias, double eps) {
  check_same_graph("layer_norm", x, gain);
  check_same_graph("layer_norm", x, bias);
  const NormLayout lay = norm_layout(x.shape());
  if (gain.shape() != Shape{lay.feat} || bias.shape() != Shape{lay.feat})
    fail("layer_norm", "gain/bias must be [" + std::to_string(lay.feat) + "]");
  Graph& g = *x.graph();
  const auto& xv = x.value();
  const auto& gv = gain.value();
  const auto& bv = bias.value();
  std::vector<double> out(xv.size());
  for (int r = 0; r < lay.n_rows; ++r) {
    double mean = 0.0;
    for (int j = 0; j < lay.feat; ++j) mean += xv[lay.at(r, j)];
    mean /= lay.feat;
    double var = 0.0;
    for (int j = 0; j < lay.feat; ++j) {
      const double d = xv[lay.at(r, j)] - mean;
      var += d * d;
    }
    var /= lay.feat;
    const double inv = 1.0 / std::sqrt(var + eps);
    for (int j = 0; j < lay.feat; ++j) {
      const std::size_t idx = lay.at(r, j);
      out[idx] = gv[j] * (xv[idx] - mean) * inv + bv[j];
    }
  }
  const int xid = x.id(), gid = gain.id(), bid = bias.id();
  const Shape xshape = x.shape();
  bool req = x.requires_grad() || gain.requires_grad() || bias.requires_grad();
  return attach(g, x.shape(), std::move(out), req,
                [xid, gid, bid, xshape, eps](Graph& gg, int oid) {
    const NormLayout lay2 = norm_layout(xshape);
    const auto& dout = gg.node(oid).grad;
    const auto& xv2 = gg.node(xid).value;
    const auto& gv2 = gg.node(gid).value;
    auto* dx = grad_if_needed(gg, xid);
    auto* dg = grad_if_needed(gg, gid);
    auto* db = grad_if_needed(gg, bid);
    const int f = lay2.feat;
    std::vector<double> xhat(static_cast<std::size_t>(f));
    for (int r = 0; r < lay2.n_rows; ++r) {
      double mean = 0.0;
      for (int j = 0; j < f; ++j) mean += xv2[lay2.at(r, j)];
      mean /= f;
      double var = 0.0;
      for (int j = 0; j < f; ++j) {
        const double d = xv2[lay2.at(r, j)] - mean;
        var += d * d;
      }
      var /= f;
      const double inv = 1.0 / std::sqrt(var + eps);
      double sum_h = 0.0, sum_hx = 0.0;
      for (int j = 0; j < f; ++j) {
        const std::size_t idx = lay2.at(r, j);
        xhat[static_cast<std::size_t>(j)] = (xv2[idx] - mean) * inv;
        const double h = gv2[j] * dout[idx];
        sum_h += h;
        sum_hx += h * xhat[static_cast<std::size_t>(j)];
      }
      for (int j = 0; j < f; ++j) {
        const std::size_t idx = lay2.at(r, j);
        const double h = gv2[j] * dout[idx];
        if (dx)
          (*dx)[idx] += inv * (h - sum_h / f - xhat[static_cast<std::size_t>(j)] * sum_hx / f);
        if (dg) (*dg)[j] += dout[idx] * xhat[static_cast<std::size_t>(j)];
        if (db) (*db)[j] += dout[idx];
      }
    }
  });
}

Var softmax(Var x) {
  check_graph("softmax", x);
  if (x.shape().size() != 1) fail("softmax", "expected 1-D input, got " + shape_str(x.shape()));
  Graph& g = *x.graph();
  const auto& xv = x.value();
  double mx = xv[0];
  for (double v : xv) mx = std::max(mx, v);
  std::vector<double> out(xv.size());
  double z = 0.0;
  for (std::size_t i = 0; i < xv.size(); ++i) {
    out[i] = std::exp(xv[i] - mx);
    z += out[i];
  }
  for (double& v : out) v /= z;
  const int xid = x.id();
  return attach(g, x.shape(), std::move(out), x.requires_grad(),
                [xid](Graph& gg, int oid) {
    const auto& dout = gg.node(oid).grad;
    const auto& ov = gg.node(oid).value;
    if (auto* dx = grad_if_needed(gg, xid)) {
      double dotp = 0.0;
      for (std::size_t i = 0; i < dout.size(); ++i) dotp += dout[i] * ov[i];
      for (std::size_t i = 0; i < dout.size(); ++i)
        (*dx)[i] += ov[i] * (dout[i] - dotp);
    }
  });
}

// ---- temporal convolution -----------------------------------------------------

Var conv1d(Var x, Var w, Var b, int stride, int pad) {
  check_same_graph("conv1d", x, w);
  const auto& sx = x.shape();
  const auto& sw = w.shape();
  if (sx.size() != 3 || sw.size() != 3 || sx[1] != sw[1])
    fail("conv1d", "incompatible shapes " + shape_str(sx) + " * " + shape_str(sw));
  if (stride < 1) fail("conv1d", "stride must be >= 1");
  const int n = sx[0], ci = sx[1], l = sx[2];
  const int co = sw[0], k = sw[2];
  const int lo = (l + 2 * pad - k) / stride + 1;
  if (lo < 1) fail("conv1d", "output length < 1");
  bool has_bias = b.defined();
  if (has_bias) {
    check_same_graph("conv1d", x, b);
    if (b.shape() != Shape{co}) fail("conv1d", "bias must be [co]");
  }
  Graph& g = *x.graph();
  std::vector<double> out(static_cast<std::size_t>(n) * co * lo, 0.0);
  const auto& xv = x.value();
  const auto& wv = w.value();
  for (int in = 0; in < n; ++in) {
    for (int oc = 0; oc < co; ++oc) {
      const double bias = has_bias ? b.value()[static_cast<std::size_t>(oc)] : 0.0;
      for (int t = 0; t < lo; ++t) {
        double acc = bias;
        for (int icd = 0; icd < ci; ++icd) {
          const double* xrow = &xv[(static_cast<std::size_t>(in) * ci + icd) * l];
          const double* wrow = &wv[(static_cast<std::size_t>(oc) * ci + icd) * k];
          for (int dk = 0; dk < k; ++dk) {
            const int u = t * stride + dk - pad;
            if (u >= 0 && u < l) acc += wrow[dk] * xrow[u];
          }
        }
        out[(static_cast<std::size_t>(in) * co + oc) * lo + t] = acc;
      }
    }
  }
  const int xid = x.id(), wid = w.id(), bid = has_bias ? b.id() : -1;
  const bool req = x.requires_grad() || w.requires_grad() || (has_bias && b.requires_grad());
  return attach(g, {n, co, lo}, std::move(out), req,
                [xid, wid, bid, n, ci, l, co, k, lo, stride, pad](Graph& gg, int oid) {
    const auto& dout = gg.node(oid).grad;
    const auto& xv2 = gg.node(xid).value;
    const auto& wv2 = gg.node(wid).value;
    auto* dx = grad_if_needed(gg, xid);
    auto* dw = grad_if_needed(gg, wid);
    auto* db = bid >= 0 ? grad_if_needed(gg, bid) : nullptr;
    for (int in = 0; in < n; ++in) {
      for (int oc = 0; oc < co; ++oc) {
        const double* drow = &dout[(static_cast<std::size_t>(in) * co + oc) * lo];
        if (db) for (int t = 0; t < lo; ++t) (*db)[oc] += drow[t];
        for (int icd = 0; icd < ci; ++icd) {
          const double* xrow = &xv2[(static_cast<std::size_t>(in) * ci + icd) * l];
          const double* wrow = &wv2[(static_cast<std::size_t>(oc) * ci + icd) * k];
          for (int t = 0; t < lo; ++t) {
            const double d = drow[t];
            if (d == 0.0) continue;
            for (int dk = 0; dk < k; ++dk) {
              const int u = t * stride + dk - pad;
              if (u < 0 || u >= l) continue;
              if (dx) (*dx)[(static_cast<std::size_t>(in) * ci + icd) * l + u] += d * wrow[dk];
              if (dw) (*dw)[(static_cast<std::size_t>(oc) * ci + icd) * k + dk] += d * xrow[u];
            }
          }
        }
      }
    }
  });
}

Var upsample_nearest(Var x, int out_len) {
  check_graph("upsample_nearest", x);
  const auto& s = x.shape();
  if (s.size() != 3) fail("upsample_nearest", "expected [n,c,l]");
  if (out_len < 1) fail("upsample_nearest", "output length < 1");
  const int n = s[0], c = s[1], l = s[2];
  Graph& g = *x.graph();
  std::vector<double> out(static_cast<std::size_t>(n) * c * out_len);
  const auto& xv = x.value();
  std::vector<int> src(static_cast<std::size_t>(out_len));
  for (int t = 0; t < out_len; ++t)
    src[static_cast<std::size_t>(t)] = std::min(l - 1, t * l / out_len);
  for (int in = 0; in < n; ++in)
    for (int ic = 0; ic < c; ++ic)
      for (int t = 0; t < out_len; ++t)
        out[(static_cast<std::size_t>(in) * c + ic) * out_len + t] =
            xv[(static_cast<std::size_t>(in) * c + ic) * l + src[static_cast<std::size_t>(t)]];
  const int xid = x.id();
  return attach(g, {n, c, out_len}, std::move(out), x.requires_grad(),
                [xid, n, c, l, out_len, src = std::move(src)](Graph& gg, int oid) {
    const auto& dout = gg.node(oid).grad;
    if (auto* dx = grad_if_needed(gg, xid))
      for (int in = 0; in < n; ++in)
        for (int ic = 0; ic < c; ++ic)
          for (int t = 0; t < out_len; ++t)
            (*dx)[(static_cast<std::size_t>(in) * c + ic) * l + src[static_cast<std::size_t>(t)]] +=
                dout[(static_cast<std::size_t>(in) * c + ic) * out_len + t];
  });
}

Var select_time(Var x, int t) {
  check_graph("select_time", x);
  const auto& s = x.shape();
  if (s.size() != 3) fail("select_time", "expected [n,c,l]");
  const int n = s[0], c = s[1], l = s[2];
  if (t < 0) t += l;
  if (t < 0 || t >= l) fail("select_time", "time index out of range");
  Graph& g = *x.graph();
  std::vector<double> out(static_cast<std::size_t>(n) * c);
  const auto& xv = x.value();
  for (int in = 0; in < n; ++in)
    for (int ic = 0; ic < c; ++ic)
      out[static_cast<std::size_t>(in) * c + ic] =
          xv[(static_cast<std::size_t>(in) * c + ic) * l + t];
  const int xid = x.id();
  return attach(g, {n, c}, std::move(out), x.requires_grad(),
                [xid, n, c, l, t](Graph& gg, int oid) {
    const auto& dout = gg.node(oid).grad;
    if (auto* dx = grad_if_needed(gg, xid))
      for (int in = 0; in < n; ++in)
        for (int ic = 0; ic < c; ++ic)
          (*dx)[(static_cast<std::size_t>(in) * c + ic) * l + t] +=
              dout[static_cast<std::size_t>(in) * c + ic];
  });
}

Var linear(Var x, Var w, Var b) {
  Var y = matmul(x, w);
  if (!b.defined()) return y;
  check_same_graph("linear", x, b);
  if (b.shape() != Shape{y.shape()[1]}) fail("linear", "bias must match output columns");
  // row-broadcast bias add
  Graph& g = *x.graph();
  const int rows = y.shape()[0], cols = y.shape()[1];
  std::vector<double> out = y.value();
  const auto& bv = b.value();
  for (int r = 0; r < rows; ++r)
    for (int j = 0; j < cols; ++j) out[static_cast<std::size_t>(r) * cols + j] += bv[j];
  const int yid = y.id(), bid = b.id();
  return attach(g, y.shape(), std::move(out), y.requires_grad() || b.requires_grad(),
                [yid, bid, rows, cols](Graph& gg, int oid) {
    const auto& dout = gg.node(oid).grad;
    if (auto* dy = grad_if_needed(gg, yid))
      for (std::size_t i = 0; i < dout.size(); ++i) (*dy)[i] += dout[i];
    if (auto* db = grad_if_needed(gg, bid))
      for (int r = 0; r < rows; ++r)
        for (int j = 0; j < cols; ++j) (*db)[j] += dout[static_cast<std::size_t>(r) * cols + j];
  });
}

Var cumsum_rows(Var x) {
  check_graph("cumsum_rows", x);
  const auto& s = x.shape();
  if (s.size() != 2) fail("cumsum_rows", "expected 2-D input");
  const int rows = s[0], cols = s[1];
  Graph& g = *x.graph();
  std::vector<double> out = x.value();
  for (int r = 1; r < rows; ++r)
    for (int j = 0; j < cols; ++j)
      out[static_cast<std::size_t>(r) * cols + j] +=
          out[static_cast<std::size_t>(r - 1) * cols + j];
  const int xid = x.id();
  return attach(g, x.shape(), std::move(out), x.requires_grad(),
                [xid, rows, cols](Graph& gg, int oid) {
    const auto& dout = gg.node(oid).grad;
    if (auto* dx = grad_if_needed(gg, xid)) {
      std::vector<double> suffix(static_cast<std::size_t>(cols), 0.0);
      for (int r = rows - 1; r >= 0; --r) {
        for (int j = 0; j < cols; ++j) {
          suffix[static_cast<std::size_t>(j)] += dout[static_cast<std::size_t>(r) * cols + j];
          (*dx)[static_cast<std::size_t>(r) * cols + j] += suffix[static_cast<std::size_t>(j)];
        }
      }
    }
  });
}

// ---- reductions & losses -------------------------------------------------------

Var sum(Var x) {
  check_graph("sum", x);
  Graph& g = *x.graph();
  double acc = 0.0;
  for (double v : x.value()) acc += v;
  const int xid = x.id();
  return attach(g, {1}, {acc}, x.requires_grad(), [xid](Graph& gg, int oid) {
    const double d = gg.node(oid).grad[0];
    if (auto* dx = grad_if_needed(gg, xid))
      for (double& v : *dx) v += d;
  });
}

Var mean_all(Var x) {
  const double n = static_cast<double>(x.value().size());
  return mul_scalar(sum(x), 1.0 / n);
}

Var masked_mean(Var x, const std::vector<bool>& row_mask) {
  check_graph("masked_mean", x);
  const auto& s = x.shape();
  const int rows = s[0];
  const int row_elems = static_cast<int>(numel(s)) / rows;
  if (static_cast<int>(row_mask.size()) != rows)
    fail("masked_mean", "mask size does not match rows");
  std::int64_t kept = 0;
  for (bool b : row_mask) kept += b ? 1 : 0;
  if (kept == 0) fail("masked_mean", "mask selects no rows");
  const double count = static_cast<double>(kept * row_elems);
  Graph& g = *x.graph();
  const auto& xv = x.value();
  double acc = 0.0;
  for (int r = 0; r < rows; ++r) {
    if (!row_mask[static_cast<std::size_t>(r)]) continue;
    for (int j = 0; j < row_elems; ++j) acc += xv[static_cast<std::size_t>(r) * row_elems + j];
  }
  const int xid = x.id();
  return attach(g, {1}, {acc / count}, x.requires_grad(),
                [xid, row_mask, rows, row_elems, count](Graph& gg, int oid) {
    const double d = gg.node(oid).grad[0] / count;
    if (auto* dx = grad_if_needed(gg, xid))
      for (int r = 0; r < rows; ++r) {
        if (!row_mask[static_cast<std::size_t>(r)]) continue;
        for (int j = 0; j < row_elems; ++j)
          (*dx)[static_cast<std::size_t>(r) * row_elems + j] += d;
      }
  });
}

Var norm2(Var a, Var b) {
  check_same_graph("norm2", a, b);
  check_same_shape("norm2", a, b);
  Graph& g = *a.graph();
  const auto& av = a.value();
  const auto& bv = b.value();
  double acc = 0.0;
  for (std::size_t i = 0; i < av.size(); ++i) {
    const double d = av[i] - bv[i];
    acc += d * d;
  }
  const double dist = std::sqrt(acc);
  const int aid = a.id(), bid = b.id();
  return attach(g, {1}, {dist}, any_requires(a, b), [aid, bid](Graph& gg, int oid) {
    const double d = gg.node(oid).grad[0];
    const double dist2 = gg.node(oid).value[0];
    if (dist2 <= 0.0) return;  // gradient undefined at coincidence; use 0
    const auto& av2 = gg.node(aid).value;
    const auto& bv2 = gg.node(bid).value;
    auto* da = grad_if_needed(gg, aid);
    auto* db = grad_if_needed(gg, bid);
    for (std::size_t i = 0; i < av2.size(); ++i) {
      const double gi = d * (av2[i] - bv2[i]) / dist2;
      if (da) (*da)[i] += gi;
      if (db) (*db)[i] -= gi;
    }
  });
}

Var smooth_l1(Var pred, Var target, double beta) {
  check_same_graph("smooth_l1", pred, target);
  check_same_shape("smooth_l1", pred, target);
  Graph& g = *pred.graph();
  const auto& pv = pred.value();
  const auto& tv = target.value();
  const double n = static_cast<double>(pv.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < pv.size(); ++i) {
    const double d = std::abs(pv[i] - tv[i]);
    acc += d < beta ? 0.5 * d * d / beta : d - 0.5 * beta;
  }
  const int pid = pred.id(), tid = target.id();
  return attach(g, {1}, {acc / n}, any_requires(pred, target),
                [pid, tid, beta, n](Graph& gg, int oid) {
    const double dup = gg.node(oid).grad[0] / n;
    const auto& pv2 = gg.node(pid).value;
    const auto& tv2 = gg.node(tid).value;
    auto* dp = grad_if_needed(gg, pid);
    auto* dt = grad_if_needed(gg, tid);
    for (std::size_t i = 0; i < pv2.size(); ++i) {
      const double d = pv2[i] - tv2[i];
      const double gi = dup * (std::abs(d) < beta ? d / beta : (d > 0.0 ? 1.0 : -1.0));
      if (dp) (*dp)[i] += gi;
      if (dt) (*dt)[i] -= gi;
    }
  });
}

Var mse(Var pred, Var target) {
  check_same_graph("mse", pred, target);
  check_same_shape("mse", pred, target);
  Graph& g = *pred.graph();
  const auto& pv = pred.value();
  const auto& tv = target.value();
  const double n = static_cast<double>(pv.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < pv.size(); ++i) {
    const double d = pv[i] - tv[i];
    acc += d * d;
  }
  const int pid = pred.id(), tid = target.id();
  return attach(g, {1}, {acc / n}, any_requires(pred, target),
                [pid, tid, n](Graph& gg, int oid) {
    const double dup = gg.node(oid).grad[0] / n;
    const auto& pv2 = gg.node(pid).value;
    const auto& tv2 = gg.node(tid).value;
    auto* dp = grad_if_needed(gg, pid);
    auto* dt = grad_if_needed(gg, tid);
    for (std::size_t i = 0; i < pv2.size(); ++i) {
      const double gi = dup * 2.0 * (pv2[i] - tv2[i]);
      if (dp) (*dp)[i] += gi;
      if (dt) (*dt)[i] -= gi;
    }
  });
}

Var cross_entropy(Var logits, const std::vector<int>& labels) {
  check_graph("cross_entropy", logits);
  Shape s = logits.shape();
  int n = 1, c = 0;
  if (s.size() == 1) {
    c = s[0];
  } else if (s.size() == 2) {
    n = s[0];
    c = s[1];
  } else {
    fail("cross_entropy", "expected [c] or [n,c]");
  }
  if (static_cast<int>(labels.size()) != n)
    fail("cross_entropy", "label count does not match rows");
  for (int y : labels)
    if (y < 0 || y >= c) fail("cross_entropy", "label out of range");
  Graph& g = *logits.graph();
  const auto& zv = logits.value();
  double acc = 0.0;
  for (int r = 0; r < n; ++r) {
    const double* row = &zv[static_cast<std::size_t>(r) * c];
    double mx = row[0];
    for (int j = 1; j < c; ++j) mx = std::max(mx, row[j]);
    double z = 0.0;
    for (int j = 0; j < c; ++j) z += std::exp(row[j] - mx);
    acc += std::log(z) + mx - row[labels[static_cast<std::size_t>(r)]];
  }
  const int zid = logits.id();
  return attach(g, {1}, {acc / n}, logits.requires_grad(),
                [zid, labels, n, c](Graph& gg, int oid) {
    const double dup = gg.node(oid).grad[0] / n;
    const auto& zv2 = gg.node(zid).value;
    if (auto* dz = grad_if_needed(gg, zid)) {
      for (int r = 0; r < n; ++r) {
        const double* row = &zv2[static_cast<std::size_t>(r) * c];
        double mx = row[0];
        for (int j = 1; j < c; ++j) mx = std::max(mx, row[j]);
        double z = 0.0;
        for (int j = 0; j < c; ++j) z += std::exp(row[j] - mx);
        for (int j = 0; j < c; ++j) {
          const double p = std::exp(row[j] - mx) / z;
          const double gi = p - (j == labels[static_cast<std::size_t>(r)] ? 1.0 : 0.0);
          (*dz)[static_cast<std::size_t>(r) * c + j] += dup * gi;
        }
      }
    }
  });
}

namespace {

double softplus(double z) {
  // log(1 + e^z), stable for large |z|
  if (z > 30.0) return z;
  if (z < -30.0) return std::exp(z);
  return std::log1p(std::exp(z));
}

}  // namespace

Var focal_loss(Var logits, const std::vector<int>& labels, double gamma, double alpha) {
  check_graph("focal_loss", logits);
  if (logits.shape().size() != 1) fail("focal_loss", "expected 1-D logits");
  const int n = logits.shape()[0];
  if (static_cast<int>(labels.size()) != n)
    fail("focal_loss", "label count does not match logits");
  for (int y : labels)
    if (y != 0 && y != 1) fail("focal_loss", "labels must be 0 or 1");
  Graph& g = *logits.graph();
  const auto& zv = logits.value();
  double acc = 0.0;
  for (int i = 0; i < n; ++i) {
    const double z = zv[static_cast<std::size_t>(i)];
    const bool pos = labels[static_cast<std::size_t>(i)] == 1;
    const double log_pt = pos ? -softplus(-z) : -softplus(z);
    const double pt = std::exp(log_pt);
    acc += -alpha * std::pow(1.0 - pt, gamma) * log_pt;
  }
  const int zid = logits.id();
  return attach(g, {1}, {acc / n}, logits.requires_grad(),
                [zid, labels, gamma, alpha, n](Graph& gg, int oid) {
    const double dup = gg.node(oid).grad[0] / n;
    const auto& zv2 = gg.node(zid).value;
    if (auto* dz = grad_if_needed(gg, zid)) {
      for (int i = 0; i < n; ++i) {
        const double z = zv2[static_cast<std::size_t>(i)];
        const bool pos = labels[static_cast<std::size_t>(i)] == 1;
        const double log_pt = pos ? -softplus(-z) : -softplus(z);
        const double pt = std::exp(log_pt);
        // d loss / d pt, then chain through d pt / d z = +-pt(1-pt)
        double dldpt;
        if (gamma == 0.0) {
          dldpt = -alpha / pt;
        } else {
          dldpt = -alpha * (-gamma * std::pow(1.0 - pt, gamma - 1.0) * log_pt +
                            std::pow(1.0 - pt, gamma) / pt);
        }
        const double dptdz = (pos ? 1.0 : -1.0) * pt * (1.0 - pt);
        (*dz)[static_cast<std::size_t>(i)] += dup * dldpt * dptdz;
      }
    }
  });
}

}  // namespace ssllanes::ad
