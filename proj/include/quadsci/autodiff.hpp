#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "quadsci/video_cube.hpp"

namespace quadsci::ad {

class Tape;

/// Handle to a node on a Tape. Cheap to copy; valid while the tape lives.
class Var {
 public:
  Var() = default;

  bool valid() const { return tape_ != nullptr; }
  Tape& tape() const { return *tape_; }
  int id() const { return id_; }
  const VideoCube& value() const;
  const VideoCube::Dims& dims() const { return value().dims(); }
  bool requires_grad() const;

 private:
  friend class Tape;
  Var(Tape* tape, int id) : tape_(tape), id_(id) {}
  Tape* tape_ = nullptr;
  int id_ = -1;
};

using Gradients = std::map<std::string, VideoCube>;

/// Reverse-mode recording of a computation. Parameters are named leaves;
/// backward() returns their gradients keyed by name. Nodes are visited in
/// exact reverse recording order and gradients accumulate additively.
class Tape {
 public:
  /// Called during backward with the node's accumulated output gradient.
  using BackwardFn = std::function<void(Tape&, const VideoCube& grad_out)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(VideoCube value);
  /// Borrows `value`; it must outlive the tape.
  Var parameter(std::string name, const VideoCube& value);

  /// Appends an op result. `fn` is kept only if some input needs a gradient.
  Var record(VideoCube value, std::initializer_list<Var> inputs, BackwardFn fn,
             std::uint64_t flops, std::string_view op);

  const VideoCube& value(int id) const;
  bool requires_grad(int id) const;
  /// Gradient buffer of node `id`, zero-initialized on first use.
  VideoCube& grad(int id);
  /// grad(v) += g (shapes must match). No-op for nodes without gradients.
  void accumulate(Var v, const VideoCube& g);

  /// Reverse pass from a scalar loss; throws ContractError for non-scalar
  /// losses or after clear().
  Gradients backward(Var loss);

  /// Drops all nodes; further backward calls on old handles are errors.
  void clear();

  /// Disables gradient bookkeeping for subsequent records (inference).
  void set_grad_enabled(bool enabled) { grad_enabled_ = enabled; }
  bool grad_enabled() const { return grad_enabled_; }

  std::uint64_t flops() const { return flops_; }
  std::size_t size() const { return nodes_.size(); }
  std::string_view op_name(int id) const { return nodes_.at(static_cast<std::size_t>(id)).op; }

 private:
  struct Node {
    VideoCube owned;
    const VideoCube* borrowed = nullptr;
    VideoCube grad;
    bool has_grad = false;
    bool requires_grad = false;
    BackwardFn backward;
    std::string name;  // parameters only
    std::string op;
  };

  Var push(Node node);
  void check(Var v) const;

  std::deque<Node> nodes_;
  std::uint64_t flops_ = 0;
  bool grad_enabled_ = true;
  bool cleared_ = false;
};

}  // namespace quadsci::ad
