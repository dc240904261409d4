#include "quadsci/autodiff.hpp"

#include "quadsci/error.hpp"

namespace quadsci::ad {

const VideoCube& Var::value() const { return tape_->value(id_); }
bool Var::requires_grad() const { return tape_->requires_grad(id_); }

Var Tape::push(Node node) {
  cleared_ = false;
  nodes_.push_back(std::move(node));
  return Var(this, static_cast<int>(nodes_.size() - 1));
}

void Tape::check(Var v) const {
  if (v.tape_ != this || v.id_ < 0 || static_cast<std::size_t>(v.id_) >= nodes_.size()) {
    throw ContractError("variable does not belong to this tape (or the tape was cleared)");
  }
}

Var Tape::constant(VideoCube value) {
  Node n;
  n.owned = std::move(value);
  n.op = "constant";
  return push(std::move(n));
}

Var Tape::parameter(std::string name, const VideoCube& value) {
  Node n;
  n.borrowed = &value;
  n.requires_grad = grad_enabled_;
  n.name = std::move(name);
  n.op = "parameter";
  return push(std::move(n));
}

Var Tape::record(VideoCube value, std::initializer_list<Var> inputs, BackwardFn fn,
                 std::uint64_t flops, std::string_view op) {
  bool needs = false;
  for (const Var& in : inputs) {
    if (!in.valid()) continue;
    check(in);
    needs = needs || nodes_[static_cast<std::size_t>(in.id_)].requires_grad;
  }
  Node n;
  n.owned = std::move(value);
  n.requires_grad = needs && grad_enabled_;
  if (n.requires_grad) n.backward = std::move(fn);
  n.op = std::string(op);
  flops_ += flops;
  return push(std::move(n));
}

const VideoCube& Tape::value(int id) const {
  const Node& n = nodes_.at(static_cast<std::size_t>(id));
  return n.borrowed != nullptr ? *n.borrowed : n.owned;
}

bool Tape::requires_grad(int id) const { return nodes_.at(static_cast<std::size_t>(id)).requires_grad; }

VideoCube& Tape::grad(int id) {
  Node& n = nodes_.at(static_cast<std::size_t>(id));
  if (!n.has_grad) {
    n.grad = VideoCube(value(id).dims(), 0.0);
    n.has_grad = true;
  }
  return n.grad;
}

void Tape::accumulate(Var v, const VideoCube& g) {
  if (!v.valid()) return;
  check(v);
  if (!nodes_[static_cast<std::size_t>(v.id_)].requires_grad) return;
  VideoCube& dst = grad(v.id_);
  if (dst.size() != g.size()) {
    throw ContractError("gradient size mismatch for node " + std::to_string(v.id_) + " (" +
                        nodes_[static_cast<std::size_t>(v.id_)].op + ")");
  }
  auto out = dst.data();
  auto in = g.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += in[i];
}

Gradients Tape::backward(Var loss) {
  if (cleared_ || nodes_.empty()) throw ContractError("backward on a cleared tape");
  check(loss);
  if (value(loss.id_).size() != 1) {
    throw ContractError("backward needs a scalar loss, got shape " +
                        dims_to_string(value(loss.id_).dims()));
  }
  for (auto& n : nodes_) {
    n.has_grad = false;
    n.grad = VideoCube();
  }
  Gradients out;
  if (!nodes_[static_cast<std::size_t>(loss.id_)].requires_grad) {
    for (const auto& n : nodes_)
      if (!n.name.empty()) out.emplace(n.name, VideoCube(n.borrowed->dims(), 0.0));
    return out;
  }
  grad(loss.id_)[0] = 1.0;
  for (int id = loss.id_; id >= 0; --id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (!n.has_grad || !n.backward) continue;
    n.backward(*this, n.grad);
    if (n.name.empty()) n.grad = VideoCube();  // no longer needed
  }
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    Node& n = nodes_[i];
    if (n.name.empty()) continue;
    VideoCube g = n.has_grad ? n.grad : VideoCube(n.borrowed->dims(), 0.0);
    auto [it, inserted] = out.emplace(n.name, g);
    if (!inserted) {
      for (std::size_t k = 0; k < g.size(); ++k) it->second[k] += g[k];
    }
  }
  return out;
}

void Tape::clear() {
  nodes_.clear();
  flops_ = 0;
  cleared_ = true;
}

}  // namespace quadsci::ad
