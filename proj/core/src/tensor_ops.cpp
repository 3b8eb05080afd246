#include <algorithm>
#include <cmath>
#include <limits>

#include "tensor_internal.hpp"

namespace abacus {

namespace {

using detail::InPull;
using detail::record_op;
using detail::untracked;

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

std::vector<std::size_t> row_strides(const Shape& s) {
  std::vector<std::size_t> st(s.size());
  std::size_t acc = 1;
  for (std::size_t i = s.size(); i-- > 0;) {
    st[i] = acc;
    acc *= s[i];
  }
  return st;
}

// Strides of `in` right-aligned to `out`, zero where `in` broadcasts.
std::vector<std::size_t> aligned_strides(const Shape& in, const Shape& out) {
  auto ist = row_strides(in);
  std::vector<std::size_t> st(out.size(), 0);
  std::size_t off = out.size() - in.size();
  for (std::size_t i = 0; i < in.size(); ++i) {
    st[off + i] = (in[i] == 1 && out[off + i] != 1) ? 0 : ist[i];
  }
  return st;
}

template <class F>
Tensor raw_ew1(const Tensor& a, F f) {
  std::vector<double> out(a.size());
  auto ad = a.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(ad[i]);
  return Tensor(a.shape(), std::move(out));
}

template <class F>
Tensor raw_ew2(const Tensor& a, const Tensor& b, F f) {
  auto ad = a.data();
  auto bd = b.data();
  if (a.shape() == b.shape()) {
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(ad[i], bd[i]);
    return Tensor(a.shape(), std::move(out));
  }
  Shape os = broadcast_shape(a.shape(), b.shape());
  std::size_t n = shape_size(os);
  std::vector<double> out(n);
  if (b.size() == 1 && os == a.shape()) {
    double b0 = bd[0];
    for (std::size_t i = 0; i < n; ++i) out[i] = f(ad[i], b0);
    return Tensor(std::move(os), std::move(out));
  }
  if (a.size() == 1 && os == b.shape()) {
    double a0 = ad[0];
    for (std::size_t i = 0; i < n; ++i) out[i] = f(a0, bd[i]);
    return Tensor(std::move(os), std::move(out));
  }
  auto sa = aligned_strides(a.shape(), os);
  auto sb = aligned_strides(b.shape(), os);
  std::vector<std::size_t> idx(os.size(), 0);
  std::size_t ia = 0, ib = 0;
  for (std::size_t k = 0; k < n; ++k) {
    out[k] = f(ad[ia], bd[ib]);
    for (std::size_t d = os.size(); d-- > 0;) {
      ++idx[d];
      ia += sa[d];
      ib += sb[d];
      if (idx[d] < os[d]) break;
      idx[d] = 0;
      ia -= sa[d] * os[d];
      ib -= sb[d] * os[d];
    }
  }
  return Tensor(std::move(os), std::move(out));
}

double k_sigmoid(double x) {
  if (x >= 0.0) {
    double e = std::exp(-x);
    return 1.0 / (1.0 + e);
  }
  double e = std::exp(x);
  return e / (1.0 + e);
}

double k_softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

Tensor raw_broadcast_to(const Tensor& a, const Shape& out_shape) {
  if (a.shape() == out_shape) return untracked(a);
  if (broadcast_shape(a.shape(), out_shape) != out_shape) {
    throw ShapeError("cannot broadcast " + shape_str(a.shape()) + " to " + shape_str(out_shape));
  }
  std::size_t n = shape_size(out_shape);
  std::vector<double> out(n);
  auto ad = a.data();
  auto sa = aligned_strides(a.shape(), out_shape);
  std::vector<std::size_t> idx(out_shape.size(), 0);
  std::size_t ia = 0;
  for (std::size_t k = 0; k < n; ++k) {
    out[k] = ad[ia];
    for (std::size_t d = out_shape.size(); d-- > 0;) {
      ++idx[d];
      ia += sa[d];
      if (idx[d] < out_shape[d]) break;
      idx[d] = 0;
      ia -= sa[d] * out_shape[d];
    }
  }
  return Tensor(out_shape, std::move(out));
}

Tensor raw_reshape(const Tensor& a, Shape shape) {
  if (shape_size(shape) != a.size()) {
    throw ShapeError("cannot reshape " + shape_str(a.shape()) + " to " + shape_str(shape));
  }
  return Tensor(std::move(shape), std::vector<double>(a.data().begin(), a.data().end()));
}

// Reduction with a bool mask over input axes; always two-pass for LogSumExp.
Tensor raw_reduce_mask(ReduceKind kind, const Tensor& a, const std::vector<bool>& red,
                       bool keep_dims) {
  const Shape& s = a.shape();
  Shape keep_shape(s.size());
  std::size_t count = 1;
  for (std::size_t d = 0; d < s.size(); ++d) {
    keep_shape[d] = red[d] ? 1 : s[d];
    if (red[d]) count *= s[d];
  }
  Shape out_shape;
  for (std::size_t d = 0; d < s.size(); ++d) {
    if (!red[d]) {
      out_shape.push_back(s[d]);
    } else if (keep_dims) {
      out_shape.push_back(1);
    }
  }
  std::size_t out_n = shape_size(keep_shape);
  auto kst = row_strides(keep_shape);
  std::vector<std::size_t> ost(s.size());
  for (std::size_t d = 0; d < s.size(); ++d) ost[d] = red[d] ? 0 : kst[d];

  auto ad = a.data();
  auto sweep = [&](auto init, auto step) {
    std::vector<double> acc(out_n, init);
    std::vector<std::size_t> idx(s.size(), 0);
    std::size_t oi = 0;
    for (std::size_t k = 0; k < a.size(); ++k) {
      step(acc[oi], ad[k]);
      for (std::size_t d = s.size(); d-- > 0;) {
        ++idx[d];
        oi += ost[d];
        if (idx[d] < s[d]) break;
        idx[d] = 0;
        oi -= ost[d] * s[d];
      }
    }
    return acc;
  };

  std::vector<double> result;
  switch (kind) {
    case ReduceKind::Sum:
      result = sweep(0.0, [](double& acc, double v) { acc += v; });
      break;
    case ReduceKind::Mean: {
      result = sweep(0.0, [](double& acc, double v) { acc += v; });
      for (auto& v : result) v /= static_cast<double>(count);
      break;
    }
    case ReduceKind::Max:
      result = sweep(kNegInf, [](double& acc, double v) { acc = std::max(acc, v); });
      break;
    case ReduceKind::LogSumExp: {
      auto m = sweep(kNegInf, [](double& acc, double v) { acc = std::max(acc, v); });
      std::vector<double> acc(out_n, 0.0);
      std::vector<std::size_t> idx(s.size(), 0);
      std::size_t oi = 0;
      for (std::size_t k = 0; k < a.size(); ++k) {
        if (m[oi] != kNegInf) acc[oi] += std::exp(ad[k] - m[oi]);
        for (std::size_t d = s.size(); d-- > 0;) {
          ++idx[d];
          oi += ost[d];
          if (idx[d] < s[d]) break;
          idx[d] = 0;
          oi -= ost[d] * s[d];
        }
      }
      result.resize(out_n);
      for (std::size_t i = 0; i < out_n; ++i) {
        result[i] = m[i] == kNegInf ? kNegInf : m[i] + std::log(acc[i]);
      }
      break;
    }
  }
  return Tensor(std::move(out_shape), std::move(result));
}

std::vector<bool> normalize_axes(const Shape& s, std::vector<int> axes) {
  std::vector<bool> red(s.size(), false);
  if (axes.empty()) {
    red.assign(s.size(), true);
    return red;
  }
  for (int ax : axes) {
    int a = ax < 0 ? ax + static_cast<int>(s.size()) : ax;
    if (a < 0 || a >= static_cast<int>(s.size())) {
      throw ShapeError("axis " + std::to_string(ax) + " out of range for shape " + shape_str(s));
    }
    if (red[a]) throw ShapeError("duplicate reduction axis " + std::to_string(ax));
    red[a] = true;
  }
  return red;
}

// Sums `g` down to `target` (inverse of broadcasting `target` up to g's shape).
Tensor raw_reduce_to_shape(const Tensor& g, const Shape& target) {
  if (g.shape() == target) return untracked(g);
  std::size_t off = g.rank() - target.size();
  std::vector<bool> red(g.rank(), false);
  for (std::size_t d = 0; d < off; ++d) red[d] = true;
  for (std::size_t i = 0; i < target.size(); ++i) {
    if (target[i] == 1 && g.shape()[off + i] != 1) red[off + i] = true;
  }
  Tensor s = raw_reduce_mask(ReduceKind::Sum, g, red, true);
  return raw_reshape(s, target);
}

Tensor raw_matmul(const Tensor& a, const Tensor& b, bool ta, bool tb) {
  if (a.rank() < 2 || b.rank() < 2) {
    throw ShapeError("matmul needs rank >= 2 operands, got " + shape_str(a.shape()) + " and " +
                     shape_str(b.shape()));
  }
  std::size_t ra0 = a.shape()[a.rank() - 2], ra1 = a.shape()[a.rank() - 1];
  std::size_t rb0 = b.shape()[b.rank() - 2], rb1 = b.shape()[b.rank() - 1];
  std::size_t m = ta ? ra1 : ra0, ka = ta ? ra0 : ra1;
  std::size_t kb = tb ? rb1 : rb0, n = tb ? rb0 : rb1;
  if (ka != kb) {
    throw ShapeError("matmul inner dimensions disagree: " + shape_str(a.shape()) + " x " +
                     shape_str(b.shape()));
  }
  Shape batch_a(a.shape().begin(), a.shape().end() - 2);
  Shape batch_b(b.shape().begin(), b.shape().end() - 2);
  Shape batch = broadcast_shape(batch_a, batch_b);
  Shape out_shape = batch;
  out_shape.push_back(m);
  out_shape.push_back(n);

  std::size_t mat_a = ra0 * ra1, mat_b = rb0 * rb1, mat_o = m * n;
  std::size_t nbatch = shape_size(batch);
  auto sa = aligned_strides(batch_a, batch);
  auto sb = aligned_strides(batch_b, batch);
  std::vector<double> out(nbatch * mat_o);
  auto ad = a.data();
  auto bd = b.data();

  std::vector<std::size_t> idx(batch.size(), 0);
  std::size_t ia = 0, ib = 0;
  for (std::size_t bi = 0; bi < nbatch; ++bi) {
    const double* ap = ad.data() + ia * mat_a;
    const double* bp = bd.data() + ib * mat_b;
    double* op = out.data() + bi * mat_o;
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        double acc = 0.0;
        for (std::size_t l = 0; l < ka; ++l) {
          double va = ap[ta ? l * ra1 + i : i * ra1 + l];
          double vb = bp[tb ? j * rb1 + l : l * rb1 + j];
          acc += va * vb;
        }
        op[i * n + j] = acc;
      }
    }
    for (std::size_t d = batch.size(); d-- > 0;) {
      ++idx[d];
      ia += sa[d];
      ib += sb[d];
      if (idx[d] < batch[d]) break;
      idx[d] = 0;
      ia -= sa[d] * batch[d];
      ib -= sb[d] * batch[d];
    }
  }
  return Tensor(std::move(out_shape), std::move(out));
}

template <class F>
Tensor ew2_op(const Tensor& a, const Tensor& b, F f,
              std::function<Tensor(const Tensor&)> pull_a,
              std::function<Tensor(const Tensor&)> pull_b) {
  Tensor v = raw_ew2(a, b, f);
  return record_op(std::move(v), {{&a, std::move(pull_a)}, {&b, std::move(pull_b)}});
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  Shape as = a.shape(), bs = b.shape();
  return ew2_op(
      a, b, [](double x, double y) { return x + y; },
      [as](const Tensor& g) { return raw_reduce_to_shape(g, as); },
      [bs](const Tensor& g) { return raw_reduce_to_shape(g, bs); });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  Shape as = a.shape(), bs = b.shape();
  return ew2_op(
      a, b, [](double x, double y) { return x - y; },
      [as](const Tensor& g) { return raw_reduce_to_shape(g, as); },
      [bs](const Tensor& g) {
        return raw_reduce_to_shape(raw_ew1(g, [](double v) { return -v; }), bs);
      });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  if (!a.has_node() && !b.has_node()) {
    return raw_ew2(a, b, [](double x, double y) { return x * y; });
  }
  Shape as = a.shape(), bs = b.shape();
  Tensor ac = untracked(a), bc = untracked(b);
  return ew2_op(
      a, b, [](double x, double y) { return x * y; },
      [as, bc](const Tensor& g) {
        return raw_reduce_to_shape(raw_ew2(g, bc, [](double gv, double y) { return gv * y; }), as);
      },
      [bs, ac](const Tensor& g) {
        return raw_reduce_to_shape(raw_ew2(g, ac, [](double gv, double x) { return gv * x; }), bs);
      });
}

Tensor div(const Tensor& a, const Tensor& b) {
  if (!a.has_node() && !b.has_node()) {
    return raw_ew2(a, b, [](double x, double y) { return x / y; });
  }
  Shape as = a.shape(), bs = b.shape();
  Tensor ac = untracked(a), bc = untracked(b);
  return ew2_op(
      a, b, [](double x, double y) { return x / y; },
      [as, bc](const Tensor& g) {
        return raw_reduce_to_shape(raw_ew2(g, bc, [](double gv, double y) { return gv / y; }), as);
      },
      [bs, ac, bc](const Tensor& g) {
        Tensor t = raw_ew2(g, ac, [](double gv, double x) { return gv * x; });
        t = raw_ew2(t, bc, [](double v, double y) { return -v / (y * y); });
        return raw_reduce_to_shape(t, bs);
      });
}

namespace {

template <class F, class PullOf>
Tensor ew1_op(const Tensor& a, F f, PullOf make_pull) {
  Tensor v = raw_ew1(a, f);
  if (!a.has_node()) return v;
  auto pull = make_pull(untracked(a), untracked(v));
  return record_op(std::move(v), {{&a, std::move(pull)}});
}

}  // namespace

Tensor neg(const Tensor& a) {
  return ew1_op(
      a, [](double x) { return -x; },
      [](Tensor, Tensor) {
        return [](const Tensor& g) { return raw_ew1(g, [](double v) { return -v; }); };
      });
}

Tensor exp(const Tensor& a) {
  return ew1_op(
      a, [](double x) { return std::exp(x); },
      [](Tensor, Tensor r) {
        return [r](const Tensor& g) {
          return raw_ew2(g, r, [](double gv, double rv) { return gv * rv; });
        };
      });
}

Tensor log(const Tensor& a) {
  for (double v : a.data()) {
    if (v < 0.0) throw DomainError("log of negative value " + std::to_string(v));
  }
  return ew1_op(
      a, [](double x) { return std::log(x); },
      [](Tensor ac, Tensor) {
        return [ac](const Tensor& g) {
          return raw_ew2(g, ac, [](double gv, double x) { return gv / x; });
        };
      });
}

Tensor sigmoid(const Tensor& a) {
  return ew1_op(
      a, [](double x) { return k_sigmoid(x); },
      [](Tensor, Tensor r) {
        return [r](const Tensor& g) {
          return raw_ew2(g, r, [](double gv, double s) { return gv * s * (1.0 - s); });
        };
      });
}

Tensor tanh(const Tensor& a) {
  return ew1_op(
      a, [](double x) { return std::tanh(x); },
      [](Tensor, Tensor r) {
        return [r](const Tensor& g) {
          return raw_ew2(g, r, [](double gv, double t) { return gv * (1.0 - t * t); });
        };
      });
}

Tensor softplus(const Tensor& a) {
  return ew1_op(
      a, [](double x) { return k_softplus(x); },
      [](Tensor ac, Tensor) {
        return [ac](const Tensor& g) {
          return raw_ew2(g, ac, [](double gv, double x) { return gv * k_sigmoid(x); });
        };
      });
}

Tensor square(const Tensor& a) {
  return ew1_op(
      a, [](double x) { return x * x; },
      [](Tensor ac, Tensor) {
        return [ac](const Tensor& g) {
          return raw_ew2(g, ac, [](double gv, double x) { return gv * 2.0 * x; });
        };
      });
}

Tensor sqrt(const Tensor& a) {
  for (double v : a.data()) {
    if (v < 0.0) throw DomainError("sqrt of negative value " + std::to_string(v));
  }
  return ew1_op(
      a, [](double x) { return std::sqrt(x); },
      [](Tensor, Tensor r) {
        return [r](const Tensor& g) {
          return raw_ew2(g, r, [](double gv, double rv) { return gv / (2.0 * rv); });
        };
      });
}

bool elementwise_is_unary(EwKind kind) {
  switch (kind) {
    case EwKind::Add:
    case EwKind::Sub:
    case EwKind::Mul:
    case EwKind::Div:
      return false;
    default:
      return true;
  }
}

Tensor elementwise(EwKind kind, const Tensor& a) {
  switch (kind) {
    case EwKind::Neg:
      return neg(a);
    case EwKind::Exp:
      return exp(a);
    case EwKind::Log:
      return log(a);
    case EwKind::Sigmoid:
      return sigmoid(a);
    case EwKind::Tanh:
      return tanh(a);
    case EwKind::Softplus:
      return softplus(a);
    case EwKind::Square:
      return square(a);
    case EwKind::Sqrt:
      return sqrt(a);
    default:
      throw ContractError("elementwise: binary kind needs two operands");
  }
}

Tensor elementwise(EwKind kind, const Tensor& a, const Tensor& b) {
  switch (kind) {
    case EwKind::Add:
      return add(a, b);
    case EwKind::Sub:
      return sub(a, b);
    case EwKind::Mul:
      return mul(a, b);
    case EwKind::Div:
      return div(a, b);
    default:
      throw ContractError("elementwise: unary kind takes one operand");
  }
}

Tensor reduce(ReduceKind kind, const Tensor& a, std::vector<int> axes, bool keep_dims) {
  auto red = normalize_axes(a.shape(), axes);
  Tensor v = raw_reduce_mask(kind, a, red, keep_dims);
  if (!a.has_node()) return v;

  Shape in_shape = a.shape();
  Shape keep_shape(in_shape.size());
  std::size_t count = 1;
  for (std::size_t d = 0; d < in_shape.size(); ++d) {
    keep_shape[d] = red[d] ? 1 : in_shape[d];
    if (red[d]) count *= in_shape[d];
  }

  std::function<Tensor(const Tensor&)> pull;
  switch (kind) {
    case ReduceKind::Sum:
      pull = [in_shape, keep_shape](const Tensor& g) {
        return raw_broadcast_to(raw_reshape(g, keep_shape), in_shape);
      };
      break;
    case ReduceKind::Mean:
      pull = [in_shape, keep_shape, count](const Tensor& g) {
        Tensor t = raw_broadcast_to(raw_reshape(g, keep_shape), in_shape);
        return raw_ew1(t, [count](double v) { return v / static_cast<double>(count); });
      };
      break;
    case ReduceKind::LogSumExp: {
      Tensor ac = untracked(a), rc = untracked(v);
      pull = [in_shape, keep_shape, ac, rc](const Tensor& g) {
        Tensor ob = raw_broadcast_to(raw_reshape(rc, keep_shape), in_shape);
        Tensor w = raw_ew2(ac, ob, [](double x, double o) {
          return x == kNegInf ? 0.0 : std::exp(x - o);
        });
        Tensor gb = raw_broadcast_to(raw_reshape(g, keep_shape), in_shape);
        return raw_ew2(gb, w, [](double gv, double wv) { return gv * wv; });
      };
      break;
    }
    case ReduceKind::Max: {
      Tensor ac = untracked(a), rc = untracked(v);
      std::vector<bool> red_copy = red;
      pull = [in_shape, keep_shape, ac, rc, red_copy](const Tensor& g) {
        Tensor ob = raw_broadcast_to(raw_reshape(rc, keep_shape), in_shape);
        Tensor mask = raw_ew2(ac, ob, [](double x, double o) { return x == o ? 1.0 : 0.0; });
        Tensor cnt = raw_reduce_mask(ReduceKind::Sum, mask, red_copy, true);
        Tensor cb = raw_broadcast_to(cnt, in_shape);
        Tensor gb = raw_broadcast_to(raw_reshape(g, keep_shape), in_shape);
        Tensor t = raw_ew2(gb, mask, [](double gv, double mv) { return gv * mv; });
        return raw_ew2(t, cb, [](double v, double c) { return c == 0.0 ? 0.0 : v / c; });
      };
      break;
    }
  }
  return record_op(std::move(v), {{&a, std::move(pull)}});
}

Tensor reduce_sum(const Tensor& a, std::vector<int> axes, bool keep_dims) {
  return reduce(ReduceKind::Sum, a, std::move(axes), keep_dims);
}
Tensor reduce_mean(const Tensor& a, std::vector<int> axes, bool keep_dims) {
  return reduce(ReduceKind::Mean, a, std::move(axes), keep_dims);
}
Tensor logsumexp(const Tensor& a, std::vector<int> axes, bool keep_dims) {
  return reduce(ReduceKind::LogSumExp, a, std::move(axes), keep_dims);
}
Tensor reduce_max(const Tensor& a, std::vector<int> axes, bool keep_dims) {
  return reduce(ReduceKind::Max, a, std::move(axes), keep_dims);
}

Tensor reshape(const Tensor& a, Shape shape) {
  Tensor v = raw_reshape(a, std::move(shape));
  Shape orig = a.shape();
  return record_op(std::move(v),
                   {{&a, [orig](const Tensor& g) { return raw_reshape(g, orig); }}});
}

Tensor broadcast_to(const Tensor& a, const Shape& shape) {
  Tensor v = raw_broadcast_to(a, shape);
  Shape orig = a.shape();
  return record_op(std::move(v),
                   {{&a, [orig](const Tensor& g) { return raw_reduce_to_shape(g, orig); }}});
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  Tensor v = raw_matmul(a, b, false, false);
  if (!a.has_node() && !b.has_node()) return v;
  Shape as = a.shape(), bs = b.shape();
  Tensor ac = untracked(a), bc = untracked(b);
  return record_op(
      std::move(v),
      {{&a,
        [as, bc](const Tensor& g) { return raw_reduce_to_shape(raw_matmul(g, bc, false, true), as); }},
       {&b,
        [bs, ac](const Tensor& g) {
          return raw_reduce_to_shape(raw_matmul(ac, g, true, false), bs);
        }}});
}

Tensor gather_last(const Tensor& a, const Tensor& indices) {
  if (a.rank() < 1) throw ShapeError("gather_last needs rank >= 1 input");
  Shape lead(a.shape().begin(), a.shape().end() - 1);
  if (indices.shape() != lead) {
    throw ShapeError("gather_last: index shape " + shape_str(indices.shape()) +
                     " must equal leading shape " + shape_str(lead) + " of " +
                     shape_str(a.shape()));
  }
  std::size_t k = a.shape().back();
  std::size_t rows = indices.size();
  std::vector<double> out(rows);
  std::vector<std::size_t> picks(rows);
  auto ad = a.data();
  auto id = indices.data();
  for (std::size_t i = 0; i < rows; ++i) {
    double raw = id[i];
    if (!(raw == std::floor(raw)) || raw < 0.0 || raw >= static_cast<double>(k)) {
      throw DomainError("gather_last: index " + std::to_string(raw) + " outside {0.." +
                        std::to_string(k - 1) + "}");
    }
    picks[i] = static_cast<std::size_t>(raw);
    out[i] = ad[i * k + picks[i]];
  }
  Tensor v(lead, std::move(out));
  Shape as = a.shape();
  return record_op(std::move(v), {{&a, [as, k, picks](const Tensor& g) {
                                     Tensor z = Tensor::zeros(as);
                                     auto zd = z.mutable_data();
                                     auto gd = g.data();
                                     for (std::size_t i = 0; i < picks.size(); ++i) {
                                       zd[i * k + picks[i]] += gd[i];
                                     }
                                     return z;
                                   }}});
}

Tensor stop_gradient(const Tensor& a) { return untracked(a); }

}  // namespace abacus
