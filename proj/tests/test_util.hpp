#pragma once

#include <functional>
#include <vector>

#include "cgusum/graph.hpp"
#include "cgusum/rng.hpp"

namespace cgusum::testutil {

inline Tensor rand_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0,
                          Dtype dt = Dtype::f64) {
    return Tensor::uniform(std::move(shape), dt, rng, lo, hi);
}

// Builds the graph from leaf vars over `inputs` and returns the node to
// check. Non-scalar outputs are contracted against a fixed random tensor so
// every output entry influences the loss.
using BuildFn = std::function<Var(Graph&, const std::vector<Var>&)>;

struct FdReport {
    double max_rel_err = 0.0;
    double max_abs_err = 0.0;
};

// Central-difference gradient check of `build` w.r.t. every entry of every
// input tensor. Relative error is |analytic - fd| / max(1, |analytic|).
inline FdReport fd_check(const BuildFn& build, std::vector<Tensor> inputs, double eps = 1e-6,
                         uint64_t weight_seed = 99) {
    auto loss_of = [&](const std::vector<Tensor>& ins, Graph& g, std::vector<Var>* leaves_out) {
        std::vector<Var> leaves;
        for (const Tensor& t : ins) leaves.push_back(g.input(t));
        Var y = build(g, leaves);
        Var loss = y;
        if (y.value().rank() != 0) {
            Rng wrng(weight_seed);
            Var w = g.input(Tensor::uniform(y.value().shape(), y.value().dtype(), wrng, -1.0, 1.0));
            loss = sum_all(mul(y, w));
        }
        if (leaves_out) *leaves_out = leaves;
        return loss;
    };

    Graph g;
    std::vector<Var> leaves;
    Var loss = loss_of(inputs, g, &leaves);
    g.backward(loss);

    FdReport rep;
    for (size_t k = 0; k < inputs.size(); ++k) {
        const Tensor analytic = g.grad(leaves[k]);
        for (int64_t i = 0; i < inputs[k].numel(); ++i) {
            const double saved = inputs[k].get(i);
            inputs[k].set(i, saved + eps);
            Graph gp;
            const double up = loss_of(inputs, gp, nullptr).value().get(0);
            inputs[k].set(i, saved - eps);
            Graph gm;
            const double down = loss_of(inputs, gm, nullptr).value().get(0);
            inputs[k].set(i, saved);
            const double fd = (up - down) / (2.0 * eps);
            const double a = analytic.get(i);
            rep.max_abs_err = std::max(rep.max_abs_err, std::abs(a - fd));
            rep.max_rel_err = std::max(rep.max_rel_err, std::abs(a - fd) / std::max(1.0, std::abs(a)));
        }
    }
    return rep;
}

}  // namespace cgusum::testutil
