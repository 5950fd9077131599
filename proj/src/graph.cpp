#include "cgusum/graph.hpp"

namespace cgusum {

const Tensor& Var::value() const { return g->value(*this); }
Tensor Var::grad() const { return g->grad(*this); }
const Shape& Var::shape() const { return g->value(*this).shape(); }

Var Graph::input(Tensor t) {
    if (!t.defined()) throw ShapeError("input: undefined tensor");
    if (!t.all_finite()) throw NumericError("non-finite value fed to graph input");
    Node n;
    n.op = "input";
    n.out = std::move(t);
    return emplace(std::move(n));
}

const Tensor& Graph::value(Var v) const {
    if (v.g != this) throw ShapeError("var does not belong to this graph");
    return value(v.id);
}

const Tensor& Graph::value(int32_t id) const {
    if (id < 0 || static_cast<size_t>(id) >= nodes_.size()) throw ShapeError("bad node id");
    return nodes_[static_cast<size_t>(id)].out;
}

Tensor Graph::grad(Var v) const {
    if (v.g != this) throw ShapeError("var does not belong to this graph");
    const Tensor& g = grads_[static_cast<size_t>(v.id)];
    if (!g.defined()) {
        const Tensor& out = nodes_[static_cast<size_t>(v.id)].out;
        return Tensor::zeros(out.shape(), out.dtype());
    }
    return g;
}

bool Graph::has_grad(Var v) const {
    if (v.g != this) throw ShapeError("var does not belong to this graph");
    return grads_.size() == nodes_.size() && grads_[static_cast<size_t>(v.id)].defined();
}

void Graph::backward(Var loss) {
    if (loss.g != this) throw ShapeError("loss var does not belong to this graph");
    const Tensor& lv = value(loss);
    if (lv.rank() != 0) throw ShapeError("backward requires a scalar loss, got " + shape_str(lv.shape()));
    grads_.assign(nodes_.size(), Tensor());
    grads_[static_cast<size_t>(loss.id)] = Tensor::full({}, lv.dtype(), 1.0);
    for (int32_t id = loss.id; id >= 0; --id) {
        const Tensor& gout = grads_[static_cast<size_t>(id)];
        if (!gout.defined()) continue;
        const Node& n = nodes_[static_cast<size_t>(id)];
        if (n.backward) n.backward(*this, n, gout);
    }
}

Var Graph::emplace(Node n) {
    if (!n.out.all_finite())
        throw NumericError("non-finite output of op '" + n.op + "'");
    nodes_.push_back(std::move(n));
    if (nodes_.size() - 1 > static_cast<size_t>(INT32_MAX)) throw ShapeError("graph too large");
    return Var{this, static_cast<int32_t>(nodes_.size() - 1)};
}

void Graph::accumulate_grad(int32_t id, Tensor delta) {
    Tensor& slot = grads_[static_cast<size_t>(id)];
    if (!slot.defined()) {
        slot = std::move(delta);
    } else {
        slot.add_(delta);
    }
}

}  // namespace cgusum
