#include "quadtrack/tape.hpp"

#include <cmath>

namespace quadtrack::ad {

void accumulate_grad(std::vector<Tensor>& grads, NodeId id, const Tensor& g) {
    Tensor& slot = grads[static_cast<size_t>(id)];
    if (slot.numel() == 0) {
        slot = g;
        return;
    }
    for (int64_t i = 0; i < slot.numel(); ++i) slot[i] += g[i];
}

namespace {

void accum(std::vector<Tensor>& grads, NodeId id, const Tensor& g) { accumulate_grad(grads, id, g); }

NodeId ensure(Tape* tape, Value& x) {
    if (x.id == kUntraced) x.id = tape->leaf(x.v);
    return x.id;
}

}  // namespace

NodeId Tape::leaf(const Tensor& t) {
    values_.push_back(t);
    return static_cast<NodeId>(values_.size() - 1);
}

NodeId Tape::push(const char* kind, Tensor value, Pull pull) {
    values_.push_back(std::move(value));
    const NodeId out = static_cast<NodeId>(values_.size() - 1);
    records_.push_back(Record{kind, out, std::move(pull)});
    return out;
}

std::vector<Tensor> Tape::backward(NodeId root) const {
    if (root < 0 || root >= size()) throw UsageError("backward: root id out of range");
    if (values_[static_cast<size_t>(root)].numel() != 1) {
        throw UsageError("backward: root must be scalar, got " + values_[static_cast<size_t>(root)].shape_str());
    }
    std::vector<Tensor> grads(values_.size());
    grads[static_cast<size_t>(root)] = Tensor::scalar(1.0f);
    for (auto it = records_.rbegin(); it != records_.rend(); ++it) {
        const Tensor& dout = grads[static_cast<size_t>(it->out)];
        if (dout.numel() == 0) continue;  // root does not depend on this node
        it->pull(dout, *this, grads);
    }
    // unvisited nodes report zero gradients of the node's shape
    for (size_t i = 0; i < grads.size(); ++i) {
        if (grads[i].numel() == 0) grads[i] = Tensor::zeros(values_[i].shape());
    }
    return grads;
}

Value leaf(Tape& tape, const Tensor& t) { return Value{t, tape.leaf(t)}; }

Value add(Tape* tape, Value a, Value b) {
    if (!a.v.same_shape(b.v)) throw ShapeError("add: shape mismatch " + a.v.shape_str() + " vs " + b.v.shape_str());
    Tensor out(a.v.shape());
    for (int64_t i = 0; i < out.numel(); ++i) out[i] = a.v[i] + b.v[i];
    out.require_finite("add");
    if (!tape) return Value{std::move(out)};
    const NodeId ia = ensure(tape, a), ib = ensure(tape, b);
    NodeId id = tape->push("add", std::move(out), [ia, ib](const Tensor& dout, const Tape&, std::vector<Tensor>& g) {
        accum(g, ia, dout);
        accum(g, ib, dout);
    });
    return Value{tape->value(id), id};
}

Value sub(Tape* tape, Value a, Value b) {
    if (!a.v.same_shape(b.v)) throw ShapeError("sub: shape mismatch " + a.v.shape_str() + " vs " + b.v.shape_str());
    Tensor out(a.v.shape());
    for (int64_t i = 0; i < out.numel(); ++i) out[i] = a.v[i] - b.v[i];
    out.require_finite("sub");
    if (!tape) return Value{std::move(out)};
    const NodeId ia = ensure(tape, a), ib = ensure(tape, b);
    NodeId id = tape->push("sub", std::move(out), [ia, ib](const Tensor& dout, const Tape&, std::vector<Tensor>& g) {
        accum(g, ia, dout);
        Tensor neg(dout.shape());
        for (int64_t i = 0; i < neg.numel(); ++i) neg[i] = -dout[i];
        accum(g, ib, neg);
    });
    return Value{tape->value(id), id};
}

Value mul(Tape* tape, Value a, Value b) {
    if (!a.v.same_shape(b.v)) throw ShapeError("mul: shape mismatch " + a.v.shape_str() + " vs " + b.v.shape_str());
    Tensor out(a.v.shape());
    for (int64_t i = 0; i < out.numel(); ++i) out[i] = a.v[i] * b.v[i];
    out.require_finite("mul");
    if (!tape) return Value{std::move(out)};
    const NodeId ia = ensure(tape, a), ib = ensure(tape, b);
    NodeId id = tape->push("mul", std::move(out), [ia, ib](const Tensor& dout, const Tape& t, std::vector<Tensor>& g) {
        const Tensor& av = t.value(ia);
        const Tensor& bv = t.value(ib);
        Tensor da(dout.shape()), db(dout.shape());
        for (int64_t i = 0; i < dout.numel(); ++i) {
            da[i] = dout[i] * bv[i];
            db[i] = dout[i] * av[i];
        }
        accum(g, ia, da);
        accum(g, ib, db);
    });
    return Value{tape->value(id), id};
}

Value affine(Tape* tape, Value x, float scale, float shift) {
    Tensor out(x.v.shape());
    for (int64_t i = 0; i < out.numel(); ++i) out[i] = scale * x.v[i] + shift;
    out.require_finite("affine");
    if (!tape) return Value{std::move(out)};
    const NodeId ix = ensure(tape, x);
    NodeId id = tape->push("affine", std::move(out), [ix, scale](const Tensor& dout, const Tape&, std::vector<Tensor>& g) {
        Tensor dx(dout.shape());
        for (int64_t i = 0; i < dout.numel(); ++i) dx[i] = scale * dout[i];
        accum(g, ix, dx);
    });
    return Value{tape->value(id), id};
}

Value matmul(Tape* tape, Value a, Value b) {
    Tensor out = kernels::matmul(a.v, b.v);
    if (!tape) return Value{std::move(out)};
    const NodeId ia = ensure(tape, a), ib = ensure(tape, b);
    NodeId id = tape->push("matmul", std::move(out), [ia, ib](const Tensor& dout, const Tape& t, std::vector<Tensor>& g) {
        const Tensor& av = t.value(ia);
        const Tensor& bv = t.value(ib);
        const int m = av.dim(0), k = av.dim(1);
        const int n = bv.rank() == 2 ? bv.dim(1) : 1;
        Tensor da({m, k});
        for (int i = 0; i < m; ++i) {
            for (int t2 = 0; t2 < k; ++t2) {
                double acc = 0.0;
                for (int j = 0; j < n; ++j) {
                    acc += static_cast<double>(dout[static_cast<size_t>(i) * n + j]) * bv[static_cast<size_t>(t2) * n + j];
                }
                da.at(i, t2) = static_cast<float>(acc);
            }
        }
        Tensor db(bv.shape());
        for (int t2 = 0; t2 < k; ++t2) {
            for (int j = 0; j < n; ++j) {
                double acc = 0.0;
                for (int i = 0; i < m; ++i) {
                    acc += static_cast<double>(av[static_cast<size_t>(i) * k + t2]) * dout[static_cast<size_t>(i) * n + j];
                }
                db[static_cast<size_t>(t2) * n + j] = static_cast<float>(acc);
            }
        }
        accum(g, ia, da);
        accum(g, ib, db);
    });
    return Value{tape->value(id), id};
}

Value activation(Tape* tape, Value x, kernels::Activation kind) {
    Tensor out = kernels::activation(x.v, kind);
    if (!tape) return Value{std::move(out)};
    const NodeId ix = ensure(tape, x);
    NodeId id = tape->push("activation", std::move(out),
                           [ix, kind](const Tensor& dout, const Tape& t, std::vector<Tensor>& g) {
        const Tensor& xv = t.value(ix);
        Tensor dx(dout.shape());
        for (int64_t i = 0; i < dout.numel(); ++i) {
            float local = 0.0f;
            switch (kind) {
                case kernels::Activation::Sigmoid: {
                    const float s = 1.0f / (1.0f + std::exp(-xv[i]));
                    local = s * (1.0f - s);
                    break;
                }
                case kernels::Activation::Tanh: {
                    const float th = std::tanh(xv[i]);
                    local = 1.0f - th * th;
                    break;
                }
                case kernels::Activation::Relu:
                    local = xv[i] > 0.0f ? 1.0f : 0.0f;
                    break;
            }
            dx[i] = dout[i] * local;
        }
        accum(g, ix, dx);
    });
    return Value{tape->value(id), id};
}

Value concat(Tape* tape, const std::vector<Value>& parts) {
    std::vector<Tensor> raw;
    raw.reserve(parts.size());
    for (const Value& p : parts) {
        if (p.v.rank() != 1) throw ShapeError("ad::concat expects rank-1 parts, got " + p.v.shape_str());
        raw.push_back(p.v);
    }
    Tensor out = kernels::concat(raw, 0);
    if (!tape) return Value{std::move(out)};
    std::vector<NodeId> ids;
    std::vector<int> lens;
    ids.reserve(parts.size());
    for (Value p : parts) {
        ids.push_back(ensure(tape, p));
        lens.push_back(p.v.dim(0));
    }
    NodeId id = tape->push("concat", std::move(out),
                           [ids, lens](const Tensor& dout, const Tape&, std::vector<Tensor>& g) {
        int64_t off = 0;
        for (size_t p = 0; p < ids.size(); ++p) {
            Tensor dp({lens[p]});
            for (int i = 0; i < lens[p]; ++i) dp[i] = dout[off + i];
            accum(g, ids[p], dp);
            off += lens[p];
        }
    });
    return Value{tape->value(id), id};
}

Value sum(Tape* tape, Value x) {
    Tensor out = Tensor::scalar(static_cast<float>(sum64(x.v)));
    if (!tape) return Value{std::move(out)};
    const NodeId ix = ensure(tape, x);
    NodeId id = tape->push("sum", std::move(out), [ix](const Tensor& dout, const Tape& t, std::vector<Tensor>& g) {
        accum(g, ix, Tensor::full(t.value(ix).shape(), dout[0]));
    });
    return Value{tape->value(id), id};
}

Value norm(Tape* tape, Value x) {
    const double n2 = dot64(x.v, x.v);
    Tensor out = Tensor::scalar(static_cast<float>(std::sqrt(n2)));
    if (!tape) return Value{std::move(out)};
    const NodeId ix = ensure(tape, x);
    NodeId id = tape->push("norm", std::move(out), [ix](const Tensor& dout, const Tape& t, std::vector<Tensor>& g) {
        const Tensor& xv = t.value(ix);
        const double n = std::sqrt(dot64(xv, xv));
        Tensor dx(xv.shape());
        if (n > 0.0) {
            for (int64_t i = 0; i < xv.numel(); ++i) dx[i] = static_cast<float>(dout[0] * xv[i] / n);
        }
        accum(g, ix, dx);
    });
    return Value{tape->value(id), id};
}

void ParameterSet::add(const std::string& name, Tensor t) {
    if (has(name)) throw UsageError("parameter name not unique: " + name);
    items_.emplace_back(name, std::move(t));
}

bool ParameterSet::has(const std::string& name) const {
    for (const auto& [n, t] : items_) {
        if (n == name) return true;
    }
    return false;
}

Tensor& ParameterSet::get(const std::string& name) {
    for (auto& [n, t] : items_) {
        if (n == name) return t;
    }
    throw UsageError("unknown parameter: " + name);
}

const Tensor& ParameterSet::get(const std::string& name) const {
    for (const auto& [n, t] : items_) {
        if (n == name) return t;
    }
    throw UsageError("unknown parameter: " + name);
}

void ParameterSet::set(const std::string& name, const Tensor& t) {
    Tensor& dst = get(name);
    if (!dst.same_shape(t)) {
        throw ShapeError("parameter " + name + " shape is fixed at " + dst.shape_str() + ", got " + t.shape_str());
    }
    dst = t;
}

}  // namespace quadtrack::ad
