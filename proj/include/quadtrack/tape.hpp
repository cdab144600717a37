#pragma once

#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "quadtrack/kernels.hpp"
#include "quadtrack/tensor.hpp"

namespace quadtrack::ad {

using NodeId = int32_t;
inline constexpr NodeId kUntraced = -1;

/// A tensor, optionally bound to a tape node. Ops accept a null tape and
/// then run forward-only with zero recording overhead; the tracker uses
/// exactly that path.
struct Value {
    Tensor v;
    NodeId id = kUntraced;
};

/// Reverse-mode tape over the dense ops of the trainable tracking branch.
/// Records are appended in topological order by construction; backward
/// replays them once, newest first. Single-owner: a tape must not be shared
/// across threads while recording. Independent tapes are fine in parallel.
class Tape {
public:
    using Pull = std::function<void(const Tensor& dout, const Tape& tape, std::vector<Tensor>& grads)>;

    NodeId leaf(const Tensor& t);
    NodeId push(const char* kind, Tensor value, Pull pull);

    const Tensor& value(NodeId id) const { return values_[static_cast<size_t>(id)]; }
    int size() const { return static_cast<int>(values_.size()); }

    // Gradients of a scalar root w.r.t. every node, indexed by node id.
    // Nodes the root does not depend on get zero gradients.
    std::vector<Tensor> backward(NodeId root) const;

private:
    struct Record {
        const char* kind;
        NodeId out;
        Pull pull;
    };
    std::vector<Tensor> values_;
    std::vector<Record> records_;
};

Value leaf(Tape& tape, const Tensor& t);
inline Value constant(Tensor t) { return Value{std::move(t), kUntraced}; }

// Add `g` into the gradient slot of node `id`; composite ops use this from
// their pull-backs.
void accumulate_grad(std::vector<Tensor>& grads, NodeId id, const Tensor& g);

// Elementwise and linear-algebra primitives. Each computes forward with the
// kernels module and, when `tape` is non-null, records the pull-back.
Value add(Tape* tape, Value a, Value b);
Value sub(Tape* tape, Value a, Value b);
Value mul(Tape* tape, Value a, Value b);
Value affine(Tape* tape, Value x, float scale, float shift);
Value matmul(Tape* tape, Value a, Value b);
Value activation(Tape* tape, Value x, kernels::Activation kind);
Value concat(Tape* tape, const std::vector<Value>& parts);  // rank-1 parts
Value sum(Tape* tape, Value x);
Value norm(Tape* tape, Value x);

/// Named parameter tensors with stable iteration order. Shapes are fixed at
/// add() time; set() only replaces values of the same shape.
class ParameterSet {
public:
    void add(const std::string& name, Tensor t);
    bool has(const std::string& name) const;
    Tensor& get(const std::string& name);
    const Tensor& get(const std::string& name) const;
    void set(const std::string& name, const Tensor& t);

    const std::vector<std::pair<std::string, Tensor>>& items() const { return items_; }
    std::vector<std::pair<std::string, Tensor>>& items() { return items_; }
    size_t size() const { return items_.size(); }

private:
    std::vector<std::pair<std::string, Tensor>> items_;
};

}  // namespace quadtrack::ad
