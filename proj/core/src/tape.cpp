#include <atomic>
#include <cmath>
#include <sstream>

#include "tensor_internal.hpp"

namespace abacus {

std::size_t shape_size(const Shape& s) {
  std::size_t n = 1;
  for (auto d : s) n *= d;
  return n;
}

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) os << ',';
    os << s[i];
  }
  os << ']';
  return os.str();
}

Shape broadcast_shape(const Shape& a, const Shape& b) {
  std::size_t r = std::max(a.size(), b.size());
  Shape out(r);
  for (std::size_t i = 0; i < r; ++i) {
    std::size_t da = i < r - a.size() ? 1 : a[i - (r - a.size())];
    std::size_t db = i < r - b.size() ? 1 : b[i - (r - b.size())];
    if (da == db || db == 1) {
      out[i] = da;
    } else if (da == 1) {
      out[i] = db;
    } else {
      throw ShapeError("cannot broadcast " + shape_str(a) + " with " + shape_str(b));
    }
  }
  return out;
}

Tensor::Tensor(Shape shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (data_.size() != shape_size(shape_)) {
    throw ShapeError("data length " + std::to_string(data_.size()) + " does not fill shape " +
                     shape_str(shape_));
  }
}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)) {
  data_.assign(shape_size(shape_), fill);
}

double Tensor::item() const {
  if (data_.size() != 1) {
    throw ContractError("item() on tensor of shape " + shape_str(shape_));
  }
  return data_[0];
}

bool Tensor::all_finite() const {
  for (double v : data_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

namespace detail {

Tensor TensorAccess::make(Shape shape, std::vector<double> data,
                          std::shared_ptr<TapeState> tape, int node) {
  Tensor t(std::move(shape), std::move(data));
  t.tape_ = std::move(tape);
  t.node_ = node;
  return t;
}

void TensorAccess::link(Tensor& t, std::shared_ptr<TapeState> tape, int node) {
  t.tape_ = std::move(tape);
  t.node_ = node;
}

Tensor untracked(const Tensor& t) {
  return Tensor(t.shape(), std::vector<double>(t.data().begin(), t.data().end()));
}

Tensor record_op(Tensor value, std::vector<InPull> ins) {
  std::shared_ptr<TapeState> tape;
  for (const auto& ip : ins) {
    if (!ip.input->has_node()) continue;
    const auto& tp = TensorAccess::tape(*ip.input);
    if (!tape) {
      tape = tp;
    } else if (tape != tp) {
      throw ContractError("operands recorded on different tapes");
    }
  }
  if (!tape) return value;

  TapeState::Node node;
  node.shape = value.shape();
  for (auto& ip : ins) {
    if (!ip.input->has_node()) continue;
    node.parents.push_back(ip.input->node());
    node.pulls.push_back(std::move(ip.pull));
  }
  int id = static_cast<int>(tape->nodes.size());
  tape->nodes.push_back(std::move(node));
  TensorAccess::link(value, std::move(tape), id);
  return value;
}

}  // namespace detail

namespace {
std::atomic<std::uint64_t> g_tape_counter{1};
}

Tape::Tape() : state_(std::make_shared<detail::TapeState>()) {
  state_->uid = g_tape_counter.fetch_add(1);
}

Tensor Tape::leaf(const Tensor& value) {
  detail::TapeState::Node node;
  node.shape = value.shape();
  int id = static_cast<int>(state_->nodes.size());
  state_->nodes.push_back(std::move(node));
  return detail::TensorAccess::make(
      value.shape(), std::vector<double>(value.data().begin(), value.data().end()), state_, id);
}

std::size_t Tape::num_nodes() const { return state_->nodes.size(); }

std::uint64_t Tape::uid() const { return state_->uid; }

namespace {

// Shared reverse sweep. Each target is (node id on the cost's tape, shape);
// node id -1 means "not on this tape" and yields zeros.
std::vector<Tensor> backward_to(const Tensor& cost,
                                const std::vector<std::pair<int, Shape>>& targets) {
  if (cost.size() != 1) {
    throw ContractError("gradients: cost must hold one element, got shape " +
                        shape_str(cost.shape()));
  }
  std::vector<Tensor> out;
  out.reserve(targets.size());
  if (!cost.has_node()) {
    for (const auto& [node, shape] : targets) out.push_back(Tensor::zeros(shape));
    return out;
  }

  const auto& st = *detail::TensorAccess::tape(cost);
  int root = cost.node();
  std::vector<std::optional<Tensor>> adj(static_cast<std::size_t>(root) + 1);
  adj[root] = Tensor(st.nodes[root].shape, 1.0);

  for (int i = root; i >= 0; --i) {
    if (!adj[i]) continue;
    const auto& nd = st.nodes[i];
    for (std::size_t j = 0; j < nd.parents.size(); ++j) {
      Tensor contrib = nd.pulls[j](*adj[i]);
      int p = nd.parents[j];
      if (!adj[p]) {
        adj[p] = std::move(contrib);
      } else {
        auto dst = adj[p]->mutable_data();
        auto src = contrib.data();
        for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += src[k];
      }
    }
  }

  for (const auto& [node, shape] : targets) {
    if (node < 0 || node > root || !adj[node]) {
      out.push_back(Tensor::zeros(shape));
    } else {
      out.push_back(detail::untracked(*adj[node]));
    }
  }
  return out;
}

}  // namespace

std::vector<Tensor> gradients(const Tensor& cost, std::span<const Tensor> leaves) {
  std::vector<std::pair<int, Shape>> targets;
  targets.reserve(leaves.size());
  const auto& cost_tape = detail::TensorAccess::tape(cost);
  for (const auto& leaf : leaves) {
    bool same_tape = leaf.has_node() && cost_tape && detail::TensorAccess::tape(leaf) == cost_tape;
    targets.emplace_back(same_tape ? leaf.node() : -1, leaf.shape());
  }
  return backward_to(cost, targets);
}

Parameter::Parameter(Tensor value, std::string name)
    : value_(std::move(value)),
      adam_m_(Tensor::zeros(value_.shape())),
      adam_v_(Tensor::zeros(value_.shape())),
      name_(std::move(name)) {}

Tensor Parameter::use(Tape& tape) {
  if (used_tape_ == tape.uid() && used_node_ >= 0) {
    // Same tape, same leaf: repeated use() must alias, not fork.
    const auto& st = detail::TensorAccess::state(tape);
    return detail::TensorAccess::make(
        value_.shape(), std::vector<double>(value_.data().begin(), value_.data().end()), st,
        used_node_);
  }
  Tensor leaf = tape.leaf(value_);
  used_tape_ = tape.uid();
  used_node_ = leaf.node();
  return leaf;
}

std::vector<Tensor> gradients(const Tensor& cost, std::span<Parameter* const> params) {
  const auto& cost_tape = detail::TensorAccess::tape(cost);
  std::uint64_t uid = cost_tape ? cost_tape->uid : 0;
  std::vector<std::pair<int, Shape>> targets;
  targets.reserve(params.size());
  for (const Parameter* p : params) {
    bool live = uid != 0 && p->used_tape_ == uid;
    targets.emplace_back(live ? p->used_node_ : -1, p->value().shape());
  }
  return backward_to(cost, targets);
}

void adam_step(std::span<Parameter* const> params, std::span<const Tensor> grads,
               const AdamConfig& cfg) {
  if (params.size() != grads.size()) {
    throw ContractError("adam_step: " + std::to_string(params.size()) + " parameters but " +
                        std::to_string(grads.size()) + " gradients");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    Parameter& p = *params[i];
    const Tensor& g = grads[i];
    if (g.shape() != p.value().shape()) {
      throw ShapeError("adam_step: gradient shape " + shape_str(g.shape()) +
                       " does not match parameter '" + p.name() + "' of shape " +
                       shape_str(p.value().shape()));
    }
    if (!g.all_finite()) {
      throw NumericError("adam_step: non-finite gradient for parameter '" + p.name() + "'");
    }
    p.steps_ += 1;
    double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(p.steps_));
    double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(p.steps_));
    auto v = p.value_.mutable_data();
    auto m = p.adam_m_.mutable_data();
    auto s = p.adam_v_.mutable_data();
    auto gd = g.data();
    for (std::size_t k = 0; k < v.size(); ++k) {
      m[k] = cfg.beta1 * m[k] + (1.0 - cfg.beta1) * gd[k];
      s[k] = cfg.beta2 * s[k] + (1.0 - cfg.beta2) * gd[k] * gd[k];
      double mhat = m[k] / c1;
      double shat = s[k] / c2;
      v[k] -= cfg.lr * mhat / (std::sqrt(shat) + cfg.eps);
    }
  }
}

}  // namespace abacus
