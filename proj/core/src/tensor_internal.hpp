#pragma once

#include <functional>
#include <memory>
#include <utility>
#include <vector>

#include "abacus/tensor.hpp"

namespace abacus::detail {

// One recorded operation. `pulls[j]` maps this node's adjoint to the
// adjoint contribution for `parents[j]`. Pull closures capture untracked
// value copies only; capturing a tape-linked tensor would create a
// shared_ptr cycle through the tape.
struct TapeState {
  struct Node {
    std::vector<int> parents;
    std::vector<std::function<Tensor(const Tensor&)>> pulls;
    Shape shape;
  };
  std::uint64_t uid = 0;
  std::vector<Node> nodes;
};

struct TensorAccess {
  static Tensor make(Shape shape, std::vector<double> data,
                     std::shared_ptr<TapeState> tape, int node);
  static void link(Tensor& t, std::shared_ptr<TapeState> tape, int node);
  static const std::shared_ptr<TapeState>& tape(const Tensor& t) { return t.tape_; }
  static const std::shared_ptr<TapeState>& state(const Tape& t) { return t.state_; }
};

// Shape-and-data copy with no tape linkage, safe to capture in pulls.
Tensor untracked(const Tensor& t);

struct InPull {
  const Tensor* input;
  std::function<Tensor(const Tensor&)> pull;
};

// Links `value` to the common tape of the tracked inputs and registers the
// corresponding pulls. With no tracked input, returns `value` untouched.
Tensor record_op(Tensor value, std::vector<InPull> ins);

}  // namespace abacus::detail
