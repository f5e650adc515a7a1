// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The spikecsi Authors

#pragma once

#include <cstddef>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "spikecsi/error.hpp"
#include "spikecsi/tensor.hpp"

namespace spikecsi {

/// Reverse-mode tape with one node per layer application.
///
/// Every value produced during a forward pass lives in a slot owned by the
/// tape; `Var` is a handle to such a slot. Nodes are appended in execution
/// order, so reverse append order is a valid topological order for backward.
/// Parameter gradients are not stored on the tape: node closures accumulate
/// them straight into `Parameter::grad`.
///
/// A non-recording tape still stores values (so the same forward code serves
/// inference) but keeps no nodes and refuses `backward`.
template <typename T>
class Tape {
 public:
  struct Var {
    static constexpr std::size_t kNone = std::numeric_limits<std::size_t>::max();
    std::size_t id = kNone;
    bool valid() const noexcept { return id != kNone; }
  };

  /// Reads output gradients through `grad_if_any` and accumulates into inputs
  /// through `grad_buffer`.
  using BackwardFn = std::function<void(Tape&, std::span<const Var> inputs, std::span<const Var> outputs)>;

  explicit Tape(bool recording = true) : recording_(recording) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;
  Tape(Tape&&) noexcept = default;
  Tape& operator=(Tape&&) noexcept = default;

  bool recording() const noexcept { return recording_; }
  std::size_t node_count() const noexcept { return nodes_.size(); }

  Var constant(Tensor<T> value, std::string label = "constant") {
    return push_slot(std::move(value), false, std::move(label));
  }

  /// Leaf whose gradient is kept on the tape (used by gradient checks).
  Var leaf(Tensor<T> value, std::string label = "leaf") {
    return push_slot(std::move(value), recording_, std::move(label));
  }

  const Tensor<T>& value(Var v) const { return slot(v).value; }
  bool requires_grad(Var v) const { return slot(v).requires_grad; }
  const std::string& label(Var v) const { return slot(v).label; }

  std::vector<Var> record(std::string label, std::vector<Tensor<T>> outputs, std::vector<Var> inputs,
                          bool has_parameters, BackwardFn fn) {
    bool needs = recording_ && has_parameters;
    if (recording_) {
      for (Var in : inputs) needs = needs || slot(in).requires_grad;
    }
    std::vector<Var> out_vars;
    out_vars.reserve(outputs.size());
    for (std::size_t i = 0; i < outputs.size(); ++i) {
      out_vars.push_back(push_slot(std::move(outputs[i]), needs, label));
    }
    if (needs) {
      nodes_.push_back(Node{std::move(inputs), out_vars, std::move(fn)});
    }
    return out_vars;
  }

  Var record(std::string label, Tensor<T> output, std::vector<Var> inputs, bool has_parameters, BackwardFn fn) {
    std::vector<Tensor<T>> outs;
    outs.push_back(std::move(output));
    return record(std::move(label), std::move(outs), std::move(inputs), has_parameters, std::move(fn)).front();
  }

  /// Gradient reaching `v` so far, or nullptr when no consumer contributed.
  const Tensor<T>* grad_if_any(Var v) const {
    const Slot& s = slot(v);
    return s.has_grad ? &s.grad : nullptr;
  }

  /// Accumulator for the gradient of `v`, zero-initialized on first use.
  Tensor<T>& grad_buffer(Var v) {
    Slot& s = slot(v);
    if (!s.has_grad) {
      s.grad = Tensor<T>(s.value.shape());
      s.has_grad = true;
    }
    return s.grad;
  }

  void backward(Var output, const Tensor<T>& seed) {
    if (!recording_ || nodes_.empty()) {
      throw StateError("backward called without a recorded tape");
    }
    if (consumed_) {
      throw StateError("backward already ran on this tape");
    }
    Slot& out = slot(output);
    require_shape(seed, out.value.shape(), "backward seed");
    if (!out.requires_grad) {
      throw StateError("backward from a value that does not depend on any parameter");
    }
    grad_buffer(output) = seed;
    consumed_ = true;
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
      bool reached = false;
      for (Var o : it->outputs) reached = reached || slot(o).has_grad;
      if (reached) {
        it->fn(*this, it->inputs, it->outputs);
      }
      it->fn = nullptr;
    }
  }

  /// Gradient of the backward seed with respect to `v`; zeros if unreached.
  Tensor<T> grad(Var v) const {
    const Slot& s = slot(v);
    return s.has_grad ? s.grad : Tensor<T>(s.value.shape());
  }

  /// Label of the first slot, in creation order, holding NaN or Inf.
  std::optional<std::string> first_non_finite() const {
    for (const Slot& s : slots_) {
      if (!s.value.all_finite()) return s.label;
    }
    return std::nullopt;
  }

 private:
  struct Slot {
    Tensor<T> value;
    Tensor<T> grad;
    bool requires_grad = false;
    bool has_grad = false;
    std::string label;
  };
  struct Node {
    std::vector<Var> inputs;
    std::vector<Var> outputs;
    BackwardFn fn;
  };

  Var push_slot(Tensor<T> value, bool requires_grad, std::string label) {
    slots_.push_back(Slot{std::move(value), Tensor<T>(), requires_grad, false, std::move(label)});
    return Var{slots_.size() - 1};
  }

  Slot& slot(Var v) {
    if (v.id >= slots_.size()) throw IndexError("invalid tape variable");
    return slots_[v.id];
  }
  const Slot& slot(Var v) const {
    if (v.id >= slots_.size()) throw IndexError("invalid tape variable");
    return slots_[v.id];
  }

  bool recording_;
  bool consumed_ = false;
  std::vector<Slot> slots_;
  std::vector<Node> nodes_;
};

}  // namespace spikecsi
