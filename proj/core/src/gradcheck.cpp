#include "hvg/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "hvg/rng.hpp"

namespace hvg {

void GradCheckReport::add(GradCheckCase c) {
    if (!c.pass) all_pass = false;
    if (c.max_rel_err > worst_err) {
        worst_err = c.max_rel_err;
        worst_label = c.label;
    }
    cases.push_back(std::move(c));
}

namespace {

double eval_loss(const std::vector<Tensor>& inputs, const LossBuilder& build) {
    Graph g;
    std::vector<Graph::Id> ids;
    ids.reserve(inputs.size());
    for (const Tensor& t : inputs) ids.push_back(g.leaf(t, true));
    Graph::Id loss = build(g, ids);
    return g.value(loss)[0];
}

}  // namespace

GradCheckCase gradcheck(const std::string& label, const std::vector<Tensor>& inputs, const LossBuilder& build,
                        double h, double tol) {
    Graph g;
    std::vector<Graph::Id> ids;
    ids.reserve(inputs.size());
    for (const Tensor& t : inputs) ids.push_back(g.leaf(t, true));
    Graph::Id loss = build(g, ids);
    g.backward(loss);

    GradCheckCase c;
    c.label = label;
    std::vector<Tensor> work = inputs;
    for (size_t i = 0; i < inputs.size(); ++i) {
        const Tensor& analytic = g.grad(ids[i]);
        for (int64_t j = 0; j < work[i].numel(); ++j) {
            double saved = work[i][j];
            work[i][j] = saved + h;
            double fp = eval_loss(work, build);
            work[i][j] = saved - h;
            double fm = eval_loss(work, build);
            work[i][j] = saved;
            double numeric = (fp - fm) / (2.0 * h);
            double a = analytic[j];
            double err = std::abs(a - numeric) / std::max({1.0, std::abs(a), std::abs(numeric)});
            c.max_rel_err = std::max(c.max_rel_err, err);
        }
    }
    c.pass = c.max_rel_err < tol;
    return c;
}

namespace {

// Weighted-sum loss so the upstream gradient of the op under test is dense
// and non-uniform.
LossBuilder weighted(const Tensor& w, std::function<Graph::Id(Graph&, const std::vector<Graph::Id>&)> op) {
    return [w, op](Graph& g, const std::vector<Graph::Id>& xs) {
        Graph::Id y = op(g, xs);
        Graph::Id wl = g.leaf(w, false);
        return g.sum_all(g.mul(y, wl));
    };
}

std::vector<int64_t> rand_shape(Rng& r, int64_t max_rank, int64_t max_dim) {
    int64_t rank = 1 + r.uniform_int(max_rank);
    std::vector<int64_t> s(static_cast<size_t>(rank));
    for (auto& d : s) d = 1 + r.uniform_int(max_dim);
    return s;
}

// Same shape with a random subset of dims collapsed to 1 (right-aligned
// sub-rank half the time) for broadcasting cases.
std::vector<int64_t> broadcastable(Rng& r, const std::vector<int64_t>& full) {
    std::vector<int64_t> s = full;
    for (auto& d : s) {
        if (r.uniform() < 0.4) d = 1;
    }
    if (!s.empty() && r.uniform() < 0.5) {
        size_t drop = static_cast<size_t>(r.uniform_int(static_cast<int64_t>(s.size())));
        s.erase(s.begin(), s.begin() + static_cast<std::ptrdiff_t>(drop));
    }
    if (s.empty()) s = {1};
    return s;
}

struct OpFamily {
    std::string name;
    std::function<GradCheckCase(Rng&, int, double, double)> make;
};

GradCheckCase check_binary(const char* name, Rng& r, int idx, double h, double tol,
                           Graph::Id (Graph::*op)(Graph::Id, Graph::Id)) {
    auto shape = rand_shape(r, 3, 4);
    auto shape_b = idx % 2 == 0 ? shape : broadcastable(r, shape);
    Tensor a = r.normal_tensor(shape);
    Tensor b = r.normal_tensor(shape_b);
    Tensor w = r.normal_tensor(shape);
    auto build = weighted(w, [op](Graph& g, const std::vector<Graph::Id>& xs) { return (g.*op)(xs[0], xs[1]); });
    return gradcheck(std::string(name) + "/" + std::to_string(idx), {a, b}, build, h, tol);
}

GradCheckCase check_random_chain(Rng& r, int idx, double h, double tol) {
    // Six ops drawn from the full differentiable set, applied to a running
    // value with fresh leaves joined in as needed.
    std::vector<Tensor> inputs;
    int64_t rows = 2 + r.uniform_int(3);
    int64_t cols = 2 + r.uniform_int(3);
    inputs.push_back(r.normal_tensor({rows, cols}));
    std::vector<int> picks;
    std::vector<int64_t> extra_dims;
    for (int step = 0; step < 6; ++step) {
        int pick = static_cast<int>(r.uniform_int(9));
        picks.push_back(pick);
        if (pick == 0 || pick == 1 || pick == 2) {
            inputs.push_back(r.normal_tensor({rows, cols}));  // add/sub/mul partner
        } else if (pick == 3) {
            int64_t n = 2 + r.uniform_int(3);
            extra_dims.push_back(n);
            inputs.push_back(r.normal_tensor({cols, n}));  // matmul rhs
            cols = n;
        } else if (pick == 4) {
            std::swap(rows, cols);  // transpose
        }
        // 5 = softmax, 6 = layer_norm, 7 = gelu, 8 = mul_scalar
    }
    Tensor w = r.normal_tensor({rows, cols});
    double scal = r.uniform(-2.0, 2.0);
    auto build = [picks, w, scal](Graph& g, const std::vector<Graph::Id>& xs) {
        size_t next = 1;
        Graph::Id cur = xs[0];
        for (int pick : picks) {
            switch (pick) {
                case 0: cur = g.add(cur, xs[next++]); break;
                case 1: cur = g.sub(cur, xs[next++]); break;
                case 2: cur = g.mul(cur, xs[next++]); break;
                case 3: cur = g.matmul(cur, xs[next++]); break;
                case 4: cur = g.transpose(cur, 0, 1); break;
                case 5: cur = g.softmax(cur); break;
                case 6: cur = g.layer_norm(cur); break;
                case 7: cur = g.gelu(cur); break;
                default: cur = g.mul_scalar(cur, scal); break;
            }
        }
        Graph::Id wl = g.leaf(w, false);
        return g.sum_all(g.mul(cur, wl));
    };
    return gradcheck("random_chain/" + std::to_string(idx), inputs, build, h, tol);
}

}  // namespace

GradCheckReport run_op_gradchecks(uint64_t seed, int cases_per_op, double h, double tol) {
    GradCheckReport report;
    Rng root(seed, fnv1a64("gradcheck"));

    std::vector<OpFamily> families;
    families.push_back({"add", [](Rng& r, int i, double hh, double tt) {
                            return check_binary("add", r, i, hh, tt, &Graph::add);
                        }});
    families.push_back({"sub", [](Rng& r, int i, double hh, double tt) {
                            return check_binary("sub", r, i, hh, tt, &Graph::sub);
                        }});
    families.push_back({"mul", [](Rng& r, int i, double hh, double tt) {
                            return check_binary("mul", r, i, hh, tt, &Graph::mul);
                        }});
    families.push_back({"add_scalar", [](Rng& r, int i, double hh, double tt) {
                            auto shape = rand_shape(r, 3, 4);
                            Tensor a = r.normal_tensor(shape);
                            Tensor w = r.normal_tensor(shape);
                            double s = r.uniform(-2.0, 2.0);
                            auto build = weighted(w, [s](Graph& g, const std::vector<Graph::Id>& xs) {
                                return g.add_scalar(xs[0], s);
                            });
                            return gradcheck("add_scalar/" + std::to_string(i), {a}, build, hh, tt);
                        }});
    families.push_back({"mul_scalar", [](Rng& r, int i, double hh, double tt) {
                            auto shape = rand_shape(r, 3, 4);
                            Tensor a = r.normal_tensor(shape);
                            Tensor w = r.normal_tensor(shape);
                            double s = r.uniform(-2.0, 2.0);
                            auto build = weighted(w, [s](Graph& g, const std::vector<Graph::Id>& xs) {
                                return g.mul_scalar(xs[0], s);
                            });
                            return gradcheck("mul_scalar/" + std::to_string(i), {a}, build, hh, tt);
                        }});
    families.push_back({"matmul", [](Rng& r, int i, double hh, double tt) {
                            int64_t m = 1 + r.uniform_int(4), k = 1 + r.uniform_int(4), nn = 1 + r.uniform_int(4);
                            bool batched = i % 3 != 0;
                            bool shared = batched && i % 2 == 0;
                            int64_t b = batched ? 2 + r.uniform_int(2) : 0;
                            Tensor a = batched ? r.normal_tensor({b, m, k}) : r.normal_tensor({m, k});
                            Tensor bb = (batched && !shared) ? r.normal_tensor({b, k, nn}) : r.normal_tensor({k, nn});
                            Tensor w = batched ? r.normal_tensor({b, m, nn}) : r.normal_tensor({m, nn});
                            auto build = weighted(w, [](Graph& g, const std::vector<Graph::Id>& xs) {
                                return g.matmul(xs[0], xs[1]);
                            });
                            return gradcheck("matmul/" + std::to_string(i), {a, bb}, build, hh, tt);
                        }});
    families.push_back({"permute", [](Rng& r, int i, double hh, double tt) {
                            auto shape = rand_shape(r, 4, 4);
                            std::vector<int64_t> axes(shape.size());
                            for (size_t j = 0; j < axes.size(); ++j) axes[j] = static_cast<int64_t>(j);
                            for (size_t j = axes.size(); j > 1; --j) {
                                std::swap(axes[j - 1], axes[static_cast<size_t>(r.uniform_int(static_cast<int64_t>(j)))]);
                            }
                            Tensor a = r.normal_tensor(shape);
                            std::vector<int64_t> out_shape(shape.size());
                            for (size_t j = 0; j < shape.size(); ++j) out_shape[j] = shape[static_cast<size_t>(axes[j])];
                            Tensor w = r.normal_tensor(out_shape);
                            auto build = weighted(w, [axes](Graph& g, const std::vector<Graph::Id>& xs) {
                                return g.permute(xs[0], axes);
                            });
                            return gradcheck("permute/" + std::to_string(i), {a}, build, hh, tt);
                        }});
    families.push_back({"reshape", [](Rng& r, int i, double hh, double tt) {
                            int64_t m = 1 + r.uniform_int(4), k = 1 + r.uniform_int(4);
                            Tensor a = r.normal_tensor({m, k});
                            Tensor w = r.normal_tensor({m * k});
                            auto build = weighted(w, [m, k](Graph& g, const std::vector<Graph::Id>& xs) {
                                return g.reshape(xs[0], {m * k});
                            });
                            return gradcheck("reshape/" + std::to_string(i), {a}, build, hh, tt);
                        }});
    families.push_back({"concat", [](Rng& r, int i, double hh, double tt) {
                            int64_t m = 1 + r.uniform_int(3), k1 = 1 + r.uniform_int(3), k2 = 1 + r.uniform_int(3);
                            int64_t axis = i % 2;
                            Tensor a = axis == 0 ? r.normal_tensor({k1, m}) : r.normal_tensor({m, k1});
                            Tensor b = axis == 0 ? r.normal_tensor({k2, m}) : r.normal_tensor({m, k2});
                            Tensor w = axis == 0 ? r.normal_tensor({k1 + k2, m}) : r.normal_tensor({m, k1 + k2});
                            auto build = weighted(w, [axis](Graph& g, const std::vector<Graph::Id>& xs) {
                                return g.concat({xs[0], xs[1]}, axis);
                            });
                            return gradcheck("concat/" + std::to_string(i), {a, b}, build, hh, tt);
                        }});
    families.push_back({"slice", [](Rng& r, int i, double hh, double tt) {
                            int64_t m = 2 + r.uniform_int(4), k = 2 + r.uniform_int(4);
                            int64_t axis = i % 2;
                            int64_t dim = axis == 0 ? m : k;
                            int64_t start = r.uniform_int(dim - 1);
                            int64_t len = 1 + r.uniform_int(dim - start - 1 > 0 ? dim - start - 1 : 1);
                            len = std::min(len, dim - start);
                            Tensor a = r.normal_tensor({m, k});
                            Tensor w = axis == 0 ? r.normal_tensor({len, k}) : r.normal_tensor({m, len});
                            auto build = weighted(w, [axis, start, len](Graph& g, const std::vector<Graph::Id>& xs) {
                                return g.slice(xs[0], axis, start, len);
                            });
                            return gradcheck("slice/" + std::to_string(i), {a}, build, hh, tt);
                        }});
    families.push_back({"split", [](Rng& r, int i, double hh, double tt) {
                            int64_t m = 2 + r.uniform_int(3);
                            int64_t parts = 2 + (i % 2);
                            int64_t k = parts * (1 + r.uniform_int(2));
                            Tensor a = r.normal_tensor({m, k});
                            Tensor w = r.normal_tensor({m, k / parts});
                            int64_t take = r.uniform_int(parts);
                            auto build = weighted(w, [parts, take](Graph& g, const std::vector<Graph::Id>& xs) {
                                auto pieces = g.split(xs[0], 1, parts);
                                return pieces[static_cast<size_t>(take)];
                            });
                            return gradcheck("split/" + std::to_string(i), {a}, build, hh, tt);
                        }});
    families.push_back({"softmax", [](Rng& r, int i, double hh, double tt) {
                            auto shape = rand_shape(r, 3, 5);
                            Tensor a = r.normal_tensor(shape, 0.0, 2.0);
                            Tensor w = r.normal_tensor(shape);
                            auto build = weighted(w, [](Graph& g, const std::vector<Graph::Id>& xs) {
                                return g.softmax(xs[0]);
                            });
                            return gradcheck("softmax/" + std::to_string(i), {a}, build, hh, tt);
                        }});
    families.push_back({"layer_norm", [](Rng& r, int i, double hh, double tt) {
                            auto shape = rand_shape(r, 3, 5);
                            if (shape.back() == 1) shape.back() = 2;
                            Tensor a = r.normal_tensor(shape, 0.0, 2.0);
                            Tensor w = r.normal_tensor(shape);
                            auto build = weighted(w, [](Graph& g, const std::vector<Graph::Id>& xs) {
                                return g.layer_norm(xs[0]);
                            });
                            return gradcheck("layer_norm/" + std::to_string(i), {a}, build, hh, tt);
                        }});
    families.push_back({"gelu", [](Rng& r, int i, double hh, double tt) {
                            auto shape = rand_shape(r, 3, 4);
                            Tensor a = r.normal_tensor(shape, 0.0, 2.0);
                            Tensor w = r.normal_tensor(shape);
                            auto build = weighted(w, [](Graph& g, const std::vector<Graph::Id>& xs) {
                                return g.gelu(xs[0]);
                            });
                            return gradcheck("gelu/" + std::to_string(i), {a}, build, hh, tt);
                        }});
    families.push_back({"attention", [](Rng& r, int i, double hh, double tt) {
                            int64_t sq = 1 + r.uniform_int(3), sk = 1 + r.uniform_int(3), d = 1 + r.uniform_int(3);
                            bool batched = i % 2 == 0;
                            int64_t b = 2 + r.uniform_int(2);
                            Tensor q = batched ? r.normal_tensor({b, sq, d}) : r.normal_tensor({sq, d});
                            Tensor k = batched ? r.normal_tensor({b, sk, d}) : r.normal_tensor({sk, d});
                            Tensor v = batched ? r.normal_tensor({b, sk, d}) : r.normal_tensor({sk, d});
                            Tensor w = batched ? r.normal_tensor({b, sq, d}) : r.normal_tensor({sq, d});
                            auto build = weighted(w, [](Graph& g, const std::vector<Graph::Id>& xs) {
                                return g.attention(xs[0], xs[1], xs[2]);
                            });
                            return gradcheck("attention/" + std::to_string(i), {q, k, v}, build, hh, tt);
                        }});
    families.push_back({"linear", [](Rng& r, int i, double hh, double tt) {
                            int64_t m = 1 + r.uniform_int(4), k = 1 + r.uniform_int(4), nn = 1 + r.uniform_int(4);
                            Tensor x = r.normal_tensor({m, k});
                            Tensor w = r.normal_tensor({k, nn});
                            Tensor b = r.normal_tensor({nn});
                            Tensor lw = r.normal_tensor({m, nn});
                            auto build = weighted(lw, [](Graph& g, const std::vector<Graph::Id>& xs) {
                                return g.linear(xs[0], xs[1], xs[2]);
                            });
                            return gradcheck("linear/" + std::to_string(i), {x, w, b}, build, hh, tt);
                        }});
    families.push_back({"sum_all", [](Rng& r, int i, double hh, double tt) {
                            auto shape = rand_shape(r, 3, 4);
                            Tensor a = r.normal_tensor(shape);
                            auto build = [](Graph& g, const std::vector<Graph::Id>& xs) { return g.sum_all(xs[0]); };
                            return gradcheck("sum_all/" + std::to_string(i), {a}, build, hh, tt);
                        }});
    families.push_back({"mean_all", [](Rng& r, int i, double hh, double tt) {
                            auto shape = rand_shape(r, 3, 4);
                            Tensor a = r.normal_tensor(shape);
                            auto build = [](Graph& g, const std::vector<Graph::Id>& xs) { return g.mean_all(xs[0]); };
                            return gradcheck("mean_all/" + std::to_string(i), {a}, build, hh, tt);
                        }});
    families.push_back({"random_chain", [](Rng& r, int i, double hh, double tt) {
                            return check_random_chain(r, i, hh, tt);
                        }});

    for (auto& fam : families) {
        Rng r = root.split(fam.name);
        for (int i = 0; i < cases_per_op; ++i) {
            report.add(fam.make(r, i, h, tol));
        }
    }
    return report;
}

}  // namespace hvg
