#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "cgusum/graph.hpp"

namespace cgusum {

namespace {

Graph* common_graph(const std::vector<Var>& vs) {
    if (vs.empty()) throw ShapeError("op with no inputs");
    Graph* g = vs[0].g;
    for (const Var& v : vs) {
        if (!v.valid() || v.g != g) throw ShapeError("vars from different graphs");
    }
    return g;
}

void check_same_dtype(const Tensor& a, const Tensor& b, const char* op) {
    if (a.dtype() != b.dtype())
        throw ShapeError(std::string(op) + ": dtype mismatch " + dtype_name(a.dtype()) + " vs " +
                         dtype_name(b.dtype()));
}

template <class T>
T stable_sigmoid(T x) {
    if (x >= T(0)) return T(1) / (T(1) + std::exp(-x));
    const T e = std::exp(x);
    return e / (T(1) + e);
}

}  // namespace

Var add(Var a, Var b) {
    Graph* g = common_graph({a, b});
    const Tensor& ta = g->value(a);
    const Tensor& tb = g->value(b);
    check_same_dtype(ta, tb, "add");
    if (ta.shape() != tb.shape())
        throw ShapeError("add: " + shape_str(ta.shape()) + " vs " + shape_str(tb.shape()));
    Tensor out = Tensor::zeros(ta.shape(), ta.dtype());
    with_dtype(ta.dtype(), [&](auto tag) {
        using T = decltype(tag);
        auto x = ta.data<T>();
        auto y = tb.data<T>();
        auto o = out.data<T>();
        for (size_t i = 0; i < o.size(); ++i) o[i] = x[i] + y[i];
    });
    Graph::Node n;
    n.op = "add";
    n.inputs = {a.id, b.id};
    n.out = std::move(out);
    n.backward = [](Graph& gr, const Graph::Node& self, const Tensor& gout) {
        gr.accumulate_grad(self.inputs[0], gout);
        gr.accumulate_grad(self.inputs[1], gout);
    };
    return g->emplace(std::move(n));
}

Var add_n(const std::vector<Var>& xs) {
    Graph* g = common_graph(xs);
    const Tensor& t0 = g->value(xs[0]);
    Tensor out = Tensor::zeros(t0.shape(), t0.dtype());
    Graph::Node n;
    n.op = "add_n";
    for (const Var& v : xs) {
        const Tensor& t = g->value(v);
        check_same_dtype(t0, t, "add_n");
        if (t.shape() != t0.shape())
            throw ShapeError("add_n: " + shape_str(t0.shape()) + " vs " + shape_str(t.shape()));
        out.add_(t);
        n.inputs.push_back(v.id);
    }
    n.out = std::move(out);
    n.backward = [](Graph& gr, const Graph::Node& self, const Tensor& gout) {
        for (int32_t in : self.inputs) gr.accumulate_grad(in, gout);
    };
    return g->emplace(std::move(n));
}

Var mul(Var a, Var b) {
    Graph* g = common_graph({a, b});
    const Tensor& ta = g->value(a);
    const Tensor& tb = g->value(b);
    check_same_dtype(ta, tb, "mul");
    if (ta.shape() != tb.shape())
        throw ShapeError("mul: " + shape_str(ta.shape()) + " vs " + shape_str(tb.shape()));
    Tensor out = Tensor::zeros(ta.shape(), ta.dtype());
    with_dtype(ta.dtype(), [&](auto tag) {
        using T = decltype(tag);
        auto x = ta.data<T>();
        auto y = tb.data<T>();
        auto o = out.data<T>();
        for (size_t i = 0; i < o.size(); ++i) o[i] = x[i] * y[i];
    });
    Graph::Node n;
    n.op = "mul";
    n.inputs = {a.id, b.id};
    n.out = std::move(out);
    n.backward = [](Graph& gr, const Graph::Node& self, const Tensor& gout) {
        const Tensor& x = gr.value(self.inputs[0]);
        const Tensor& y = gr.value(self.inputs[1]);
        Tensor gx = Tensor::zeros(x.shape(), x.dtype());
        Tensor gy = Tensor::zeros(y.shape(), y.dtype());
        with_dtype(x.dtype(), [&](auto tag) {
            using T = decltype(tag);
            auto xv = x.data<T>();
            auto yv = y.data<T>();
            auto gv = gout.data<T>();
            auto gxv = gx.data<T>();
            auto gyv = gy.data<T>();
            for (size_t i = 0; i < gv.size(); ++i) {
                gxv[i] = gv[i] * yv[i];
                gyv[i] = gv[i] * xv[i];
            }
        });
        gr.accumulate_grad(self.inputs[0], std::move(gx));
        gr.accumulate_grad(self.inputs[1], std::move(gy));
    };
    return g->emplace(std::move(n));
}

Var scale(Var a, double c) {
    Graph* g = common_graph({a});
    const Tensor& ta = g->value(a);
    Tensor out = Tensor::zeros(ta.shape(), ta.dtype());
    with_dtype(ta.dtype(), [&](auto tag) {
        using T = decltype(tag);
        auto x = ta.data<T>();
        auto o = out.data<T>();
        const T k = static_cast<T>(c);
        for (size_t i = 0; i < o.size(); ++i) o[i] = x[i] * k;
    });
    Graph::Node n;
    n.op = "scale";
    n.inputs = {a.id};
    n.out = std::move(out);
    n.backward = [c](Graph& gr, const Graph::Node& self, const Tensor& gout) {
        Tensor gx = gout;
        gx.scale_(c);
        gr.accumulate_grad(self.inputs[0], std::move(gx));
    };
    return g->emplace(std::move(n));
}

Var matmul(Var a, Var b) {
    Graph* g = common_graph({a, b});
    const Tensor& ta = g->value(a);
    const Tensor& tb = g->value(b);
    check_same_dtype(ta, tb, "matmul");
    if (ta.rank() != 2 || tb.rank() != 2 || ta.shape()[1] != tb.shape()[0])
        throw ShapeError("matmul: " + shape_str(ta.shape()) + " x " + shape_str(tb.shape()));
    const int64_t n = ta.shape()[0], k = ta.shape()[1], m = tb.shape()[1];
    Tensor out = Tensor::zeros({n, m}, ta.dtype());
    with_dtype(ta.dtype(), [&](auto tag) {
        using T = decltype(tag);
        auto av = ta.data<T>();
        auto bv = tb.data<T>();
        auto ov = out.data<T>();
        for (int64_t i = 0; i < n; ++i)
            for (int64_t p = 0; p < k; ++p) {
                const T aik = av[static_cast<size_t>(i * k + p)];
                if (aik == T(0)) continue;
                const size_t brow = static_cast<size_t>(p * m);
                const size_t orow = static_cast<size_t>(i * m);
                for (int64_t j = 0; j < m; ++j) ov[orow + j] += aik * bv[brow + j];
            }
    });
    Graph::Node node;
    node.op = "matmul";
    node.inputs = {a.id, b.id};
    node.out = std::move(out);
    node.backward = [n, k, m](Graph& gr, const Graph::Node& self, const Tensor& gout) {
        const Tensor& x = gr.value(self.inputs[0]);
        const Tensor& y = gr.value(self.inputs[1]);
        Tensor gx = Tensor::zeros(x.shape(), x.dtype());
        Tensor gy = Tensor::zeros(y.shape(), y.dtype());
        with_dtype(x.dtype(), [&](auto tag) {
            using T = decltype(tag);
            auto xv = x.data<T>();
            auto yv = y.data<T>();
            auto gv = gout.data<T>();
            auto gxv = gx.data<T>();
            auto gyv = gy.data<T>();
            // gx = gout * y^T ; gy = x^T * gout
            for (int64_t i = 0; i < n; ++i)
                for (int64_t j = 0; j < m; ++j) {
                    const T go = gv[static_cast<size_t>(i * m + j)];
                    if (go == T(0)) continue;
                    for (int64_t p = 0; p < k; ++p) {
                        gxv[static_cast<size_t>(i * k + p)] += go * yv[static_cast<size_t>(p * m + j)];
                        gyv[static_cast<size_t>(p * m + j)] += go * xv[static_cast<size_t>(i * k + p)];
                    }
                }
        });
        gr.accumulate_grad(self.inputs[0], std::move(gx));
        gr.accumulate_grad(self.inputs[1], std::move(gy));
    };
    return g->emplace(std::move(node));
}

Var transpose(Var a) {
    Graph* g = common_graph({a});
    const Tensor& ta = g->value(a);
    if (ta.rank() != 2) throw ShapeError("transpose: rank-2 required, got " + shape_str(ta.shape()));
    const int64_t n = ta.shape()[0], m = ta.shape()[1];
    Tensor out = Tensor::zeros({m, n}, ta.dtype());
    with_dtype(ta.dtype(), [&](auto tag) {
        using T = decltype(tag);
        auto x = ta.data<T>();
        auto o = out.data<T>();
        for (int64_t i = 0; i < n; ++i)
            for (int64_t j = 0; j < m; ++j)
                o[static_cast<size_t>(j * n + i)] = x[static_cast<size_t>(i * m + j)];
    });
    Graph::Node node;
    node.op = "transpose";
    node.inputs = {a.id};
    node.out = std::move(out);
    node.backward = [n, m](Graph& gr, const Graph::Node& self, const Tensor& gout) {
        Tensor gx = Tensor::zeros({n, m}, gout.dtype());
        with_dtype(gout.dtype(), [&](auto tag) {
            using T = decltype(tag);
            auto gv = gout.data<T>();
            auto gxv = gx.data<T>();
            for (int64_t j = 0; j < m; ++j)
                for (int64_t i = 0; i < n; ++i)
                    gxv[static_cast<size_t>(i * m + j)] += gv[static_cast<size_t>(j * n + i)];
        });
        gr.accumulate_grad(self.inputs[0], std::move(gx));
    };
    return g->emplace(std::move(node));
}

Var matvec(Var a, Var x) {
    Graph* g = common_graph({a, x});
    const Tensor& ta = g->value(a);
    const Tensor& tx = g->value(x);
    check_same_dtype(ta, tx, "matvec");
    if (ta.rank() != 2 || tx.rank() != 1 || ta.shape()[1] != tx.shape()[0])
        throw ShapeError("matvec: " + shape_str(ta.shape()) + " x " + shape_str(tx.shape()));
    const int64_t n = ta.shape()[0], m = ta.shape()[1];
    Tensor out = Tensor::zeros({n}, ta.dtype());
    with_dtype(ta.dtype(), [&](auto tag) {
        using T = decltype(tag);
        auto av = ta.data<T>();
        auto xv = tx.data<T>();
        auto ov = out.data<T>();
        for (int64_t i = 0; i < n; ++i) {
            T acc = T(0);
            const size_t row = static_cast<size_t>(i * m);
            for (int64_t j = 0; j < m; ++j) acc += av[row + j] * xv[static_cast<size_t>(j)];
            ov[static_cast<size_t>(i)] = acc;
        }
    });
    Graph::Node node;
    node.op = "matvec";
    node.inputs = {a.id, x.id};
    node.out = std::move(out);
    node.backward = [n, m](Graph& gr, const Graph::Node& self, const Tensor& gout) {
        const Tensor& av = gr.value(self.inputs[0]);
        const Tensor& xv = gr.value(self.inputs[1]);
        Tensor ga = Tensor::zeros(av.shape(), av.dtype());
        Tensor gx = Tensor::zeros(xv.shape(), xv.dtype());
        with_dtype(av.dtype(), [&](auto tag) {
            using T = decltype(tag);
            auto a_ = av.data<T>();
            auto x_ = xv.data<T>();
            auto g_ = gout.data<T>();
            auto ga_ = ga.data<T>();
            auto gx_ = gx.data<T>();
            for (int64_t i = 0; i < n; ++i) {
                const T gi = g_[static_cast<size_t>(i)];
                if (gi == T(0)) continue;
                const size_t row = static_cast<size_t>(i * m);
                for (int64_t j = 0; j < m; ++j) {
                    ga_[row + j] += gi * x_[static_cast<size_t>(j)];
                    gx_[static_cast<size_t>(j)] += gi * a_[row + j];
                }
            }
        });
        gr.accumulate_grad(self.inputs[0], std::move(ga));
        gr.accumulate_grad(self.inputs[1], std::move(gx));
    };
    return g->emplace(std::move(node));
}

Var matvec_t(Var a, Var x) {
    Graph* g = common_graph({a, x});
    const Tensor& ta = g->value(a);
    const Tensor& tx = g->value(x);
    check_same_dtype(ta, tx, "matvec_t");
    if (ta.rank() != 2 || tx.rank() != 1 || ta.shape()[0] != tx.shape()[0])
        throw ShapeError("matvec_t: " + shape_str(ta.shape()) + " x " + shape_str(tx.shape()));
    const int64_t n = ta.shape()[0], m = ta.shape()[1];
    Tensor out = Tensor::zeros({m}, ta.dtype());
    with_dtype(ta.dtype(), [&](auto tag) {
        using T = decltype(tag);
        auto av = ta.data<T>();
        auto xv = tx.data<T>();
        auto ov = out.data<T>();
        for (int64_t i = 0; i < n; ++i) {
            const T xi = xv[static_cast<size_t>(i)];
            if (xi == T(0)) continue;
            const size_t row = static_cast<size_t>(i * m);
            for (int64_t j = 0; j < m; ++j) ov[static_cast<size_t>(j)] += xi * av[row + j];
        }
    });
    Graph::Node node;
    node.op = "matvec_t";
    node.inputs = {a.id, x.id};
    node.out = std::move(out);
    node.backward = [n, m](Graph& gr, const Graph::Node& self, const Tensor& gout) {
        const Tensor& av = gr.value(self.inputs[0]);
        const Tensor& xv = gr.value(self.inputs[1]);
        Tensor ga = Tensor::zeros(av.shape(), av.dtype());
        Tensor gx = Tensor::zeros(xv.shape(), xv.dtype());
        with_dtype(av.dtype(), [&](auto tag) {
            using T = decltype(tag);
            auto a_ = av.data<T>();
            auto x_ = xv.data<T>();
            auto g_ = gout.data<T>();
            auto ga_ = ga.data<T>();
            auto gx_ = gx.data<T>();
            for (int64_t i = 0; i < n; ++i) {
                const size_t row = static_cast<size_t>(i * m);
                T acc = T(0);
                for (int64_t j = 0; j < m; ++j) {
                    const T gj = g_[static_cast<size_t>(j)];
                    ga_[row + j] += x_[static_cast<size_t>(i)] * gj;
                    acc += a_[row + j] * gj;
                }
                gx_[static_cast<size_t>(i)] += acc;
            }
        });
        gr.accumulate_grad(self.inputs[0], std::move(ga));
        gr.accumulate_grad(self.inputs[1], std::move(gx));
    };
    return g->emplace(std::move(node));
}

Var concat(const std::vector<Var>& xs) {
    Graph* g = common_graph(xs);
    int64_t total = 0;
    const Dtype dt = g->value(xs[0]).dtype();
    for (const Var& v : xs) {
        const Tensor& t = g->value(v);
        check_same_dtype(g->value(xs[0]), t, "concat");
        if (t.rank() != 1) throw ShapeError("concat: rank-1 required, got " + shape_str(t.shape()));
        total += t.shape()[0];
    }
    Tensor out = Tensor::zeros({total}, dt);
    Graph::Node node;
    node.op = "concat";
    int64_t off = 0;
    for (const Var& v : xs) {
        const Tensor& t = g->value(v);
        for (int64_t i = 0; i < t.numel(); ++i) out.set(off + i, t.get(i));
        off += t.numel();
        node.inputs.push_back(v.id);
    }
    node.out = std::move(out);
    node.backward = [](Graph& gr, const Graph::Node& self, const Tensor& gout) {
        int64_t off = 0;
        for (int32_t in : self.inputs) {
            const Tensor& t = gr.value(in);
            Tensor gx = Tensor::zeros(t.shape(), t.dtype());
            for (int64_t i = 0; i < t.numel(); ++i) gx.set(i, gout.get(off + i));
            off += t.numel();
            gr.accumulate_grad(in, std::move(gx));
        }
    };
    return g->emplace(std::move(node));
}

Var concat_cols(const std::vector<Var>& xs) {
    Graph* g = common_graph(xs);
    const Tensor& t0 = g->value(xs[0]);
    if (t0.rank() != 2) throw ShapeError("concat_cols: rank-2 required");
    const int64_t n = t0.shape()[0];
    int64_t total_cols = 0;
    for (const Var& v : xs) {
        const Tensor& t = g->value(v);
        check_same_dtype(t0, t, "concat_cols");
        if (t.rank() != 2 || t.shape()[0] != n)
            throw ShapeError("concat_cols: row count mismatch " + shape_str(t.shape()));
        total_cols += t.shape()[1];
    }
    Tensor out = Tensor::zeros({n, total_cols}, t0.dtype());
    Graph::Node node;
    node.op = "concat_cols";
    int64_t col_off = 0;
    for (const Var& v : xs) {
        const Tensor& t = g->value(v);
        const int64_t c = t.shape()[1];
        for (int64_t i = 0; i < n; ++i)
            for (int64_t j = 0; j < c; ++j)
                out.set(i * total_cols + col_off + j, t.get(i * c + j));
        col_off += c;
        node.inputs.push_back(v.id);
    }
    node.out = std::move(out);
    node.backward = [n, total_cols](Graph& gr, const Graph::Node& self, const Tensor& gout) {
        int64_t col_off = 0;
        for (int32_t in : self.inputs) {
            const Tensor& t = gr.value(in);
            const int64_t c = t.shape()[1];
            Tensor gx = Tensor::zeros(t.shape(), t.dtype());
            for (int64_t i = 0; i < n; ++i)
                for (int64_t j = 0; j < c; ++j)
                    gx.set(i * c + j, gout.get(i * total_cols + col_off + j));
            col_off += c;
            gr.accumulate_grad(in, std::move(gx));
        }
    };
    return g->emplace(std::move(node));
}

Var stack_rows(const std::vector<Var>& xs) {
    Graph* g = common_graph(xs);
    const Tensor& t0 = g->value(xs[0]);
    if (t0.rank() != 1) throw ShapeError("stack_rows: rank-1 inputs required");
    const int64_t d = t0.shape()[0];
    const int64_t n = static_cast<int64_t>(xs.size());
    Tensor out = Tensor::zeros({n, d}, t0.dtype());
    Graph::Node node;
    node.op = "stack_rows";
    for (int64_t r = 0; r < n; ++r) {
        const Tensor& t = g->value(xs[static_cast<size_t>(r)]);
        check_same_dtype(t0, t, "stack_rows");
        if (t.rank() != 1 || t.shape()[0] != d)
            throw ShapeError("stack_rows: row shape mismatch " + shape_str(t.shape()));
        for (int64_t j = 0; j < d; ++j) out.set(r * d + j, t.get(j));
        node.inputs.push_back(xs[static_cast<size_t>(r)].id);
    }
    node.out = std::move(out);
    node.backward = [d](Graph& gr, const Graph::Node& self, const Tensor& gout) {
        for (size_t r = 0; r < self.inputs.size(); ++r) {
            Tensor gx = Tensor::zeros({d}, gout.dtype());
            for (int64_t j = 0; j < d; ++j) gx.set(j, gout.get(static_cast<int64_t>(r) * d + j));
            gr.accumulate_grad(self.inputs[r], std::move(gx));
        }
    };
    return g->emplace(std::move(node));
}

Var slice(Var x, int64_t lo, int64_t hi) {
    Graph* g = common_graph({x});
    const Tensor& t = g->value(x);
    if (t.rank() != 1) throw ShapeError("slice: rank-1 required, got " + shape_str(t.shape()));
    if (lo < 0 || hi > t.shape()[0] || lo >= hi)
        throw ShapeError("slice: bad range [" + std::to_string(lo) + ", " + std::to_string(hi) + ")");
    Tensor out = Tensor::zeros({hi - lo}, t.dtype());
    for (int64_t i = lo; i < hi; ++i) out.set(i - lo, t.get(i));
    Graph::Node node;
    node.op = "slice";
    node.inputs = {x.id};
    node.out = std::move(out);
    node.backward = [lo, hi](Graph& gr, const Graph::Node& self, const Tensor& gout) {
        const Tensor& t = gr.value(self.inputs[0]);
        Tensor gx = Tensor::zeros(t.shape(), t.dtype());
        for (int64_t i = lo; i < hi; ++i) gx.set(i, gout.get(i - lo));
        gr.accumulate_grad(self.inputs[0], std::move(gx));
    };
    return g->emplace(std::move(node));
}

Var sigmoid(Var x) {
    Graph* g = common_graph({x});
    const Tensor& t = g->value(x);
    Tensor out = Tensor::zeros(t.shape(), t.dtype());
    with_dtype(t.dtype(), [&](auto tag) {
        using T = decltype(tag);
        auto xv = t.data<T>();
        auto ov = out.data<T>();
        for (size_t i = 0; i < ov.size(); ++i) ov[i] = stable_sigmoid(xv[i]);
    });
    Graph::Node node;
    node.op = "sigmoid";
    node.inputs = {x.id};
    node.out = std::move(out);
    node.backward = [](Graph& gr, const Graph::Node& self, const Tensor& gout) {
        Tensor gx = Tensor::zeros(self.out.shape(), self.out.dtype());
        with_dtype(self.out.dtype(), [&](auto tag) {
            using T = decltype(tag);
            auto y = self.out.data<T>();
            auto gv = gout.data<T>();
            auto gxv = gx.data<T>();
            for (size_t i = 0; i < gxv.size(); ++i) gxv[i] = gv[i] * y[i] * (T(1) - y[i]);
        });
        gr.accumulate_grad(self.inputs[0], std::move(gx));
    };
    return g->emplace(std::move(node));
}

Var tanh_op(Var x) {
    Graph* g = common_graph({x});
    const Tensor& t = g->value(x);
    Tensor out = Tensor::zeros(t.shape(), t.dtype());
    with_dtype(t.dtype(), [&](auto tag) {
        using T = decltype(tag);
        auto xv = t.data<T>();
        auto ov = out.data<T>();
        for (size_t i = 0; i < ov.size(); ++i) ov[i] = std::tanh(xv[i]);
    });
    Graph::Node node;
    node.op = "tanh";
    node.inputs = {x.id};
    node.out = std::move(out);
    node.backward = [](Graph& gr, const Graph::Node& self, const Tensor& gout) {
        Tensor gx = Tensor::zeros(self.out.shape(), self.out.dtype());
        with_dtype(self.out.dtype(), [&](auto tag) {
            using T = decltype(tag);
            auto y = self.out.data<T>();
            auto gv = gout.data<T>();
            auto gxv = gx.data<T>();
            for (size_t i = 0; i < gxv.size(); ++i) gxv[i] = gv[i] * (T(1) - y[i] * y[i]);
        });
        gr.accumulate_grad(self.inputs[0], std::move(gx));
    };
    return g->emplace(std::move(node));
}

Var relu(Var x) {
    Graph* g = common_graph({x});
    const Tensor& t = g->value(x);
    Tensor out = Tensor::zeros(t.shape(), t.dtype());
    with_dtype(t.dtype(), [&](auto tag) {
        using T = decltype(tag);
        auto xv = t.data<T>();
        auto ov = out.data<T>();
        for (size_t i = 0; i < ov.size(); ++i) ov[i] = xv[i] > T(0) ? xv[i] : T(0);
    });
    Graph::Node node;
    node.op = "relu";
    node.inputs = {x.id};
    node.out = std::move(out);
    node.backward = [](Graph& gr, const Graph::Node& self, const Tensor& gout) {
        Tensor gx = Tensor::zeros(self.out.shape(), self.out.dtype());
        with_dtype(self.out.dtype(), [&](auto tag) {
            using T = decltype(tag);
            auto y = self.out.data<T>();
            auto gv = gout.data<T>();
            auto gxv = gx.data<T>();
            for (size_t i = 0; i < gxv.size(); ++i) gxv[i] = y[i] > T(0) ? gv[i] : T(0);
        });
        gr.accumulate_grad(self.inputs[0], std::move(gx));
    };
    return g->emplace(std::move(node));
}

Var sum_all(Var x) {
    Graph* g = common_graph({x});
    const Tensor& t = g->value(x);
    double acc = 0.0;
    with_dtype(t.dtype(), [&](auto tag) {
        using T = decltype(tag);
        T s = T(0);
        for (T v : t.data<T>()) s += v;
        acc = static_cast<double>(s);
    });
    Graph::Node node;
    node.op = "sum_all";
    node.inputs = {x.id};
    node.out = Tensor::scalar(t.dtype(), acc);
    node.backward = [](Graph& gr, const Graph::Node& self, const Tensor& gout) {
        const Tensor& t = gr.value(self.inputs[0]);
        Tensor gx = Tensor::full(t.shape(), t.dtype(), gout.get(0));
        gr.accumulate_grad(self.inputs[0], std::move(gx));
    };
    return g->emplace(std::move(node));
}

namespace {

// Shared softmax lane kernel: softmax over `len` entries with stride
// `stride` starting at `base`, restricted to kept positions.
template <class T>
void softmax_lane(std::span<const T> x, std::span<T> y, size_t base, int64_t len, int64_t stride,
                  const std::vector<bool>* keep) {
    T mx = -std::numeric_limits<T>::infinity();
    for (int64_t i = 0; i < len; ++i) {
        if (keep && !(*keep)[static_cast<size_t>(i)]) continue;
        mx = std::max(mx, x[base + static_cast<size_t>(i * stride)]);
    }
    T denom = T(0);
    for (int64_t i = 0; i < len; ++i) {
        const size_t at = base + static_cast<size_t>(i * stride);
        if (keep && !(*keep)[static_cast<size_t>(i)]) {
            y[at] = T(0);
            continue;
        }
        const T e = std::exp(x[at] - mx);
        y[at] = e;
        denom += e;
    }
    for (int64_t i = 0; i < len; ++i) {
        if (keep && !(*keep)[static_cast<size_t>(i)]) continue;
        y[base + static_cast<size_t>(i * stride)] /= denom;
    }
}

// d/dx of a softmax lane: gx_i = y_i * (g_i - sum_j g_j y_j) over kept entries.
template <class T>
void softmax_lane_backward(std::span<const T> y, std::span<const T> gy, std::span<T> gx, size_t base,
                           int64_t len, int64_t stride, const std::vector<bool>* keep) {
    T dot = T(0);
    for (int64_t i = 0; i < len; ++i) {
        if (keep && !(*keep)[static_cast<size_t>(i)]) continue;
        const size_t at = base + static_cast<size_t>(i * stride);
        dot += gy[at] * y[at];
    }
    for (int64_t i = 0; i < len; ++i) {
        if (keep && !(*keep)[static_cast<size_t>(i)]) continue;
        const size_t at = base + static_cast<size_t>(i * stride);
        gx[at] += y[at] * (gy[at] - dot);
    }
}

void require_finite(const Tensor& t, const char* op) {
    if (!t.all_finite()) throw NumericError(std::string("non-finite input to ") + op);
}

}  // namespace

Var softmax(Var x, int64_t axis) {
    Graph* g = common_graph({x});
    const Tensor& t = g->value(x);
    require_finite(t, "softmax");
    if (axis < 0 || axis >= t.rank())
        throw ShapeError("softmax: axis " + std::to_string(axis) + " invalid for shape " +
                         shape_str(t.shape()));
    const int64_t len = t.shape()[axis];
    int64_t outer = 1, inner = 1;
    for (int64_t i = 0; i < axis; ++i) outer *= t.shape()[i];
    for (int64_t i = axis + 1; i < t.rank(); ++i) inner *= t.shape()[i];
    Tensor out = Tensor::zeros(t.shape(), t.dtype());
    with_dtype(t.dtype(), [&](auto tag) {
        using T = decltype(tag);
        auto xv = t.data<T>();
        auto ov = out.data<T>();
        for (int64_t o = 0; o < outer; ++o)
            for (int64_t in = 0; in < inner; ++in)
                softmax_lane<T>(xv, ov, static_cast<size_t>(o * len * inner + in), len, inner, nullptr);
    });
    Graph::Node node;
    node.op = "softmax";
    node.inputs = {x.id};
    node.out = std::move(out);
    node.backward = [outer, inner, len](Graph& gr, const Graph::Node& self, const Tensor& gout) {
        Tensor gx = Tensor::zeros(self.out.shape(), self.out.dtype());
        with_dtype(self.out.dtype(), [&](auto tag) {
            using T = decltype(tag);
            auto y = self.out.data<T>();
            auto gy = gout.data<T>();
            auto gxv = gx.data<T>();
            for (int64_t o = 0; o < outer; ++o)
                for (int64_t in = 0; in < inner; ++in)
                    softmax_lane_backward<T>(y, gy, gxv, static_cast<size_t>(o * len * inner + in), len,
                                             inner, nullptr);
        });
        gr.accumulate_grad(self.inputs[0], std::move(gx));
    };
    return g->emplace(std::move(node));
}

Var softmax_masked(Var x, const std::vector<bool>& keep) {
    Graph* g = common_graph({x});
    const Tensor& t = g->value(x);
    require_finite(t, "softmax_masked");
    if (t.rank() != 1 || static_cast<size_t>(t.shape()[0]) != keep.size())
        throw ShapeError("softmax_masked: shape " + shape_str(t.shape()) + " vs mask of " +
                         std::to_string(keep.size()));
    if (std::none_of(keep.begin(), keep.end(), [](bool b) { return b; }))
        throw InputError("softmax_masked: all positions masked");
    const int64_t len = t.shape()[0];
    Tensor out = Tensor::zeros(t.shape(), t.dtype());
    with_dtype(t.dtype(), [&](auto tag) {
        using T = decltype(tag);
        softmax_lane<T>(t.data<T>(), out.data<T>(), 0, len, 1, &keep);
    });
    Graph::Node node;
    node.op = "softmax_masked";
    node.inputs = {x.id};
    node.out = std::move(out);
    node.backward = [keep, len](Graph& gr, const Graph::Node& self, const Tensor& gout) {
        Tensor gx = Tensor::zeros(self.out.shape(), self.out.dtype());
        with_dtype(self.out.dtype(), [&](auto tag) {
            using T = decltype(tag);
            softmax_lane_backward<T>(self.out.data<T>(), gout.data<T>(), gx.data<T>(), 0, len, 1, &keep);
        });
        gr.accumulate_grad(self.inputs[0], std::move(gx));
    };
    return g->emplace(std::move(node));
}

Var softmax_rows_masked(Var x, const std::vector<bool>& keep) {
    Graph* g = common_graph({x});
    const Tensor& t = g->value(x);
    require_finite(t, "softmax_rows_masked");
    if (t.rank() != 2 || static_cast<size_t>(t.shape()[1]) != keep.size())
        throw ShapeError("softmax_rows_masked: shape " + shape_str(t.shape()) + " vs mask of " +
                         std::to_string(keep.size()));
    if (std::none_of(keep.begin(), keep.end(), [](bool b) { return b; }))
        throw InputError("softmax_rows_masked: all key positions masked");
    const int64_t n = t.shape()[0], m = t.shape()[1];
    Tensor out = Tensor::zeros(t.shape(), t.dtype());
    with_dtype(t.dtype(), [&](auto tag) {
        using T = decltype(tag);
        for (int64_t i = 0; i < n; ++i)
            softmax_lane<T>(t.data<T>(), out.data<T>(), static_cast<size_t>(i * m), m, 1, &keep);
    });
    Graph::Node node;
    node.op = "softmax_rows_masked";
    node.inputs = {x.id};
    node.out = std::move(out);
    node.backward = [keep, n, m](Graph& gr, const Graph::Node& self, const Tensor& gout) {
        Tensor gx = Tensor::zeros(self.out.shape(), self.out.dtype());
        with_dtype(self.out.dtype(), [&](auto tag) {
            using T = decltype(tag);
            for (int64_t i = 0; i < n; ++i)
                softmax_lane_backward<T>(self.out.data<T>(), gout.data<T>(), gx.data<T>(),
                                         static_cast<size_t>(i * m), m, 1, &keep);
        });
        gr.accumulate_grad(self.inputs[0], std::move(gx));
    };
    return g->emplace(std::move(node));
}

Var embed_row(Var table, int64_t id) {
    Graph* g = common_graph({table});
    const Tensor& t = g->value(table);
    if (t.rank() != 2) throw ShapeError("embed_row: table must be rank 2");
    if (id < 0 || id >= t.shape()[0])
        throw InputError("embed_row: token id " + std::to_string(id) + " out of range [0, " +
                         std::to_string(t.shape()[0]) + ")");
    const int64_t d = t.shape()[1];
    Tensor out = Tensor::zeros({d}, t.dtype());
    with_dtype(t.dtype(), [&](auto tag) {
        using T = decltype(tag);
        auto tv = t.data<T>();
        auto ov = out.data<T>();
        const size_t row = static_cast<size_t>(id * d);
        for (int64_t j = 0; j < d; ++j) ov[static_cast<size_t>(j)] = tv[row + j];
    });
    Graph::Node node;
    node.op = "embed_row";
    node.inputs = {table.id};
    node.out = std::move(out);
    node.backward = [id, d](Graph& gr, const Graph::Node& self, const Tensor& gout) {
        const Tensor& t = gr.value(self.inputs[0]);
        Tensor gx = Tensor::zeros(t.shape(), t.dtype());
        with_dtype(t.dtype(), [&](auto tag) {
            using T = decltype(tag);
            auto gv = gout.data<T>();
            auto gxv = gx.data<T>();
            const size_t row = static_cast<size_t>(id * d);
            for (int64_t j = 0; j < d; ++j) gxv[row + j] += gv[static_cast<size_t>(j)];
        });
        gr.accumulate_grad(self.inputs[0], std::move(gx));
    };
    return g->emplace(std::move(node));
}

Var conv1d_same(Var h, Var w, Var b, Activation act) {
    Graph* g = common_graph({h, w, b});
    const Tensor& th = g->value(h);
    const Tensor& tw = g->value(w);
    const Tensor& tb = g->value(b);
    check_same_dtype(th, tw, "conv1d_same");
    check_same_dtype(th, tb, "conv1d_same");
    if (th.rank() != 2 || tw.rank() != 3 || tb.rank() != 1)
        throw ShapeError("conv1d_same: want h [n,d_in], w [k,d_in,d_out], b [d_out]");
    const int64_t n = th.shape()[0], d_in = th.shape()[1];
    const int64_t k = tw.shape()[0], d_out = tw.shape()[2];
    if (k % 2 == 0) throw ConfigError("conv1d_same: kernel size must be odd, got " + std::to_string(k));
    if (tw.shape()[1] != d_in || tb.shape()[0] != d_out)
        throw ShapeError("conv1d_same: kernel " + shape_str(tw.shape()) + " incompatible with input " +
                         shape_str(th.shape()) + " and bias " + shape_str(tb.shape()));
    const int64_t half = (k - 1) / 2;
    Tensor out = Tensor::zeros({n, d_out}, th.dtype());
    with_dtype(th.dtype(), [&](auto tag) {
        using T = decltype(tag);
        auto hv = th.data<T>();
        auto wv = tw.data<T>();
        auto bv = tb.data<T>();
        auto ov = out.data<T>();
        for (int64_t i = 0; i < n; ++i) {
            const size_t orow = static_cast<size_t>(i * d_out);
            for (int64_t co = 0; co < d_out; ++co) ov[orow + co] = bv[static_cast<size_t>(co)];
            for (int64_t taps = 0; taps < k; ++taps) {
                const int64_t j = i + taps - half;
                if (j < 0 || j >= n) continue;  // zero padding outside [0, n)
                const size_t hrow = static_cast<size_t>(j * d_in);
                const size_t wplane = static_cast<size_t>(taps * d_in * d_out);
                for (int64_t ci = 0; ci < d_in; ++ci) {
                    const T hvji = hv[hrow + ci];
                    if (hvji == T(0)) continue;
                    const size_t wrow = wplane + static_cast<size_t>(ci * d_out);
                    for (int64_t co = 0; co < d_out; ++co) ov[orow + co] += hvji * wv[wrow + co];
                }
            }
            if (act == Activation::relu)
                for (int64_t co = 0; co < d_out; ++co)
                    if (ov[orow + co] < T(0)) ov[orow + co] = T(0);
        }
    });
    Graph::Node node;
    node.op = "conv1d_same";
    node.inputs = {h.id, w.id, b.id};
    node.out = std::move(out);
    node.backward = [n, d_in, k, d_out, half, act](Graph& gr, const Graph::Node& self,
                                                   const Tensor& gout) {
        const Tensor& th = gr.value(self.inputs[0]);
        const Tensor& tw = gr.value(self.inputs[1]);
        Tensor gh = Tensor::zeros(th.shape(), th.dtype());
        Tensor gw = Tensor::zeros(tw.shape(), tw.dtype());
        Tensor gb = Tensor::zeros({d_out}, th.dtype());
        with_dtype(th.dtype(), [&](auto tag) {
            using T = decltype(tag);
            auto hv = th.data<T>();
            auto wv = tw.data<T>();
            auto yv = self.out.data<T>();
            auto gv = gout.data<T>();
            auto ghv = gh.data<T>();
            auto gwv = gw.data<T>();
            auto gbv = gb.data<T>();
            for (int64_t i = 0; i < n; ++i) {
                const size_t orow = static_cast<size_t>(i * d_out);
                for (int64_t co = 0; co < d_out; ++co) {
                    T go = gv[orow + co];
                    if (act == Activation::relu && yv[orow + co] <= T(0)) go = T(0);
                    if (go == T(0)) continue;
                    gbv[static_cast<size_t>(co)] += go;
                    for (int64_t taps = 0; taps < k; ++taps) {
                        const int64_t j = i + taps - half;
                        if (j < 0 || j >= n) continue;
                        const size_t hrow = static_cast<size_t>(j * d_in);
                        const size_t wplane = static_cast<size_t>(taps * d_in * d_out);
                        for (int64_t ci = 0; ci < d_in; ++ci) {
                            const size_t wat = wplane + static_cast<size_t>(ci * d_out + co);
                            ghv[hrow + ci] += go * wv[wat];
                            gwv[wat] += go * hv[hrow + ci];
                        }
                    }
                }
            }
        });
        gr.accumulate_grad(self.inputs[0], std::move(gh));
        gr.accumulate_grad(self.inputs[1], std::move(gw));
        gr.accumulate_grad(self.inputs[2], std::move(gb));
    };
    return g->emplace(std::move(node));
}

Var nll_from_logits(Var logits, int64_t gold) {
    Graph* g = common_graph({logits});
    const Tensor& t = g->value(logits);
    require_finite(t, "nll_from_logits");
    if (t.rank() != 1) throw ShapeError("nll_from_logits: rank-1 logits required");
    if (gold < 0 || gold >= t.shape()[0])
        throw InputError("nll_from_logits: gold id " + std::to_string(gold) + " out of range");
    double nll = 0.0;
    with_dtype(t.dtype(), [&](auto tag) {
        using T = decltype(tag);
        auto z = t.data<T>();
        T mx = z[0];
        for (T v : z) mx = std::max(mx, v);
        T denom = T(0);
        for (T v : z) denom += std::exp(v - mx);
        nll = static_cast<double>((mx + std::log(denom)) - z[static_cast<size_t>(gold)]);
    });
    Graph::Node node;
    node.op = "nll_from_logits";
    node.inputs = {logits.id};
    node.out = Tensor::scalar(t.dtype(), nll);
    node.backward = [gold](Graph& gr, const Graph::Node& self, const Tensor& gout) {
        const Tensor& t = gr.value(self.inputs[0]);
        Tensor gx = Tensor::zeros(t.shape(), t.dtype());
        with_dtype(t.dtype(), [&](auto tag) {
            using T = decltype(tag);
            auto z = t.data<T>();
            auto gxv = gx.data<T>();
            const T go = static_cast<T>(gout.get(0));
            T mx = z[0];
            for (T v : z) mx = std::max(mx, v);
            T denom = T(0);
            for (T v : z) denom += std::exp(v - mx);
            for (size_t i = 0; i < z.size(); ++i) {
                T p = std::exp(z[i] - mx) / denom;
                if (static_cast<int64_t>(i) == gold) p -= T(1);
                gxv[i] += go * p;
            }
        });
        gr.accumulate_grad(self.inputs[0], std::move(gx));
    };
    return g->emplace(std::move(node));
}

Var zero_rows(Var x, const std::vector<bool>& keep) {
    Graph* g = common_graph({x});
    const Tensor& t = g->value(x);
    if (t.rank() != 2 || static_cast<size_t>(t.shape()[0]) != keep.size())
        throw ShapeError("zero_rows: shape " + shape_str(t.shape()) + " vs mask of " +
                         std::to_string(keep.size()));
    const int64_t n = t.shape()[0], d = t.shape()[1];
    Tensor out = Tensor::zeros(t.shape(), t.dtype());
    with_dtype(t.dtype(), [&](auto tag) {
        using T = decltype(tag);
        auto xv = t.data<T>();
        auto ov = out.data<T>();
        for (int64_t i = 0; i < n; ++i) {
            if (!keep[static_cast<size_t>(i)]) continue;
            const size_t row = static_cast<size_t>(i * d);
            for (int64_t j = 0; j < d; ++j) ov[row + j] = xv[row + j];
        }
    });
    Graph::Node node;
    node.op = "zero_rows";
    node.inputs = {x.id};
    node.out = std::move(out);
    node.backward = [keep, n, d](Graph& gr, const Graph::Node& self, const Tensor& gout) {
        Tensor gx = Tensor::zeros(self.out.shape(), self.out.dtype());
        with_dtype(self.out.dtype(), [&](auto tag) {
            using T = decltype(tag);
            auto gv = gout.data<T>();
            auto gxv = gx.data<T>();
            for (int64_t i = 0; i < n; ++i) {
                if (!keep[static_cast<size_t>(i)]) continue;
                const size_t row = static_cast<size_t>(i * d);
                for (int64_t j = 0; j < d; ++j) gxv[row + j] = gv[row + j];
            }
        });
        gr.accumulate_grad(self.inputs[0], std::move(gx));
    };
    return g->emplace(std::move(node));
}

}  // namespace cgusum
