#pragma once

#include <functional>
#include <string>
#include <vector>

#include "cgusum/tensor.hpp"

namespace cgusum {

class Graph;

/// Handle to a node in a Graph. Cheap to copy; valid for the graph's lifetime.
struct Var {
    Graph* g = nullptr;
    int32_t id = -1;

    bool valid() const { return g != nullptr && id >= 0; }
    const Tensor& value() const;
    Tensor grad() const;
    const Shape& shape() const;
};

enum class Activation { none, relu };

/// Recorded computation for reverse-mode differentiation. Nodes are appended
/// in execution order, so ids are topologically sorted: a node's inputs always
/// precede it. One graph per forward pass; parameters live outside graphs and
/// enter through input().
class Graph {
public:
    struct Node {
        std::string op;
        std::vector<int32_t> inputs;
        Tensor out;
        // Receives the node, its output gradient, and accumulates into input
        // gradients via accumulate_grad. Null for leaves.
        std::function<void(Graph&, const Node&, const Tensor&)> backward;
    };

    Graph() = default;
    Graph(const Graph&) = delete;
    Graph& operator=(const Graph&) = delete;

    // Leaf node. Rejects non-finite values: NaN/Inf is an error surface.
    Var input(Tensor t);

    const Tensor& value(Var v) const;
    const Tensor& value(int32_t id) const;
    // Gradient of the last backward() loss w.r.t. this node; zeros if the
    // node is unreachable from the loss.
    Tensor grad(Var v) const;
    bool has_grad(Var v) const;

    // Reverse pass from a scalar loss. Visits nodes exactly once in reverse
    // id order and leaves all forward values untouched.
    void backward(Var loss);

    size_t num_nodes() const { return nodes_.size(); }
    const Node& node(int32_t id) const { return nodes_[static_cast<size_t>(id)]; }

    Var emplace(Node n);
    void accumulate_grad(int32_t id, Tensor delta);

private:
    std::vector<Node> nodes_;
    std::vector<Tensor> grads_;
};

// ---- op set -------------------------------------------------------------
// All ops validate dtypes/shapes, record a tape node, and check outputs for
// finiteness.

Var add(Var a, Var b);                    // same shape
Var add_n(const std::vector<Var>& xs);    // n-ary same-shape sum
Var mul(Var a, Var b);                    // elementwise
Var scale(Var a, double c);
Var matmul(Var a, Var b);                 // [n,k] x [k,m] -> [n,m]
Var transpose(Var a);                     // rank 2
Var matvec(Var a, Var x);                 // [n,m] x [m] -> [n]
Var matvec_t(Var a, Var x);               // [n,m]^T x [n] -> [m]
Var concat(const std::vector<Var>& xs);   // rank-1 concatenation
Var concat_cols(const std::vector<Var>& xs);  // rank-2, along columns
Var stack_rows(const std::vector<Var>& xs);   // rank-1 vectors -> [n,d]
Var slice(Var x, int64_t lo, int64_t hi);     // rank-1 half-open range
Var sigmoid(Var x);
Var tanh_op(Var x);
Var relu(Var x);
Var sum_all(Var x);                       // -> scalar (rank 0)

// Softmax along an axis, computed with per-axis max subtraction.
Var softmax(Var x, int64_t axis);
// Rank-1 softmax over unmasked entries only; masked entries get exactly 0.
Var softmax_masked(Var x, const std::vector<bool>& keep);
// Row-wise softmax of a rank-2 tensor with a shared key mask over columns.
Var softmax_rows_masked(Var x, const std::vector<bool>& keep);

// Row lookup into an embedding table [V,d]; gradient scatters into the row.
Var embed_row(Var table, int64_t id);

// 1-D convolution over rows of h [n,d_in] with kernel w [k,d_in,d_out] and
// bias b [d_out]; zero padding of (k-1)/2 on each side keeps the length. k
// must be odd.
Var conv1d_same(Var h, Var w, Var b, Activation act);

// -log softmax(logits)[gold]; scalar output, stable log-sum-exp form.
Var nll_from_logits(Var logits, int64_t gold);

// Zero out rows of a rank-2 tensor where keep is false.
Var zero_rows(Var x, const std::vector<bool>& keep);

}  // namespace cgusum
