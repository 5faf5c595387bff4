#include "hvg/graph.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <stdexcept>

namespace hvg {

namespace {

constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

[[noreturn]] void shape_error(const char* op, const std::string& detail) {
    throw std::invalid_argument(std::string(op) + ": " + detail);
}

void check_finite(const Tensor& t, const char* op) {
    if (!t.all_finite()) {
        throw std::runtime_error(std::string(op) + " produced non-finite values, shape " + shape_str(t.shape()));
    }
}

// Right-aligned broadcast result shape; dims must match or be 1.
std::vector<int64_t> bcast_shape(const std::vector<int64_t>& a, const std::vector<int64_t>& b, const char* op) {
    size_t nd = std::max(a.size(), b.size());
    std::vector<int64_t> out(nd);
    for (size_t i = 0; i < nd; ++i) {
        int64_t da = i < nd - a.size() ? 1 : a[i - (nd - a.size())];
        int64_t db = i < nd - b.size() ? 1 : b[i - (nd - b.size())];
        if (da != db && da != 1 && db != 1) {
            shape_error(op, "cannot broadcast " + shape_str(a) + " with " + shape_str(b));
        }
        out[i] = std::max(da, db);
    }
    return out;
}

// Strides of `shape` aligned to `out`, zero on broadcast dims.
std::vector<int64_t> bcast_strides(const std::vector<int64_t>& shape, const std::vector<int64_t>& out) {
    std::vector<int64_t> strides(out.size(), 0);
    int64_t s = 1;
    size_t off = out.size() - shape.size();
    for (size_t i = shape.size(); i-- > 0;) {
        strides[off + i] = (shape[i] == 1 && out[off + i] != 1) ? 0 : s;
        s *= shape[i];
    }
    return strides;
}

// Odometer walk over `out` dims calling f(out_flat, a_off, b_off).
template <typename F>
void bcast_for_each(const std::vector<int64_t>& out, const std::vector<int64_t>& sa,
                    const std::vector<int64_t>& sb, F&& f) {
    int64_t n = shape_numel(out);
    size_t nd = out.size();
    std::vector<int64_t> idx(nd, 0);
    int64_t oa = 0, ob = 0;
    for (int64_t i = 0; i < n; ++i) {
        f(i, oa, ob);
        for (size_t d = nd; d-- > 0;) {
            if (++idx[d] < out[d]) {
                oa += sa[d];
                ob += sb[d];
                break;
            }
            idx[d] = 0;
            oa -= sa[d] * (out[d] - 1);
            ob -= sb[d] * (out[d] - 1);
            if (d == 0) break;
        }
    }
}

// C[m,n] (+)= A[m,k] * B[k,n]
void mm_nn(const double* A, const double* B, double* C, int64_t m, int64_t k, int64_t n, bool acc) {
    if (!acc) std::fill(C, C + m * n, 0.0);
    for (int64_t i = 0; i < m; ++i) {
        const double* a_row = A + i * k;
        double* c_row = C + i * n;
        for (int64_t p = 0; p < k; ++p) {
            double a = a_row[p];
            const double* b_row = B + p * n;
            for (int64_t j = 0; j < n; ++j) c_row[j] += a * b_row[j];
        }
    }
}

// C[m,n] (+)= A[m,k] * B[n,k]^T
void mm_nt(const double* A, const double* B, double* C, int64_t m, int64_t k, int64_t n, bool acc) {
    for (int64_t i = 0; i < m; ++i) {
        const double* a_row = A + i * k;
        double* c_row = C + i * n;
        for (int64_t j = 0; j < n; ++j) {
            const double* b_row = B + j * k;
            double s = 0.0;
            for (int64_t p = 0; p < k; ++p) s += a_row[p] * b_row[p];
            c_row[j] = acc ? c_row[j] + s : s;
        }
    }
}

// C[k,n] (+)= A[m,k]^T * B[m,n]
void mm_tn(const double* A, const double* B, double* C, int64_t m, int64_t k, int64_t n, bool acc) {
    if (!acc) std::fill(C, C + k * n, 0.0);
    for (int64_t i = 0; i < m; ++i) {
        const double* a_row = A + i * k;
        const double* b_row = B + i * n;
        for (int64_t p = 0; p < k; ++p) {
            double a = a_row[p];
            double* c_row = C + p * n;
            for (int64_t j = 0; j < n; ++j) c_row[j] += a * b_row[j];
        }
    }
}

void softmax_rows(const double* x, double* y, int64_t rows, int64_t cols) {
    for (int64_t r = 0; r < rows; ++r) {
        const double* xr = x + r * cols;
        double* yr = y + r * cols;
        double mx = xr[0];
        for (int64_t j = 1; j < cols; ++j) mx = std::max(mx, xr[j]);
        double sum = 0.0;
        for (int64_t j = 0; j < cols; ++j) {
            yr[j] = std::exp(xr[j] - mx);
            sum += yr[j];
        }
        double inv = 1.0 / sum;
        for (int64_t j = 0; j < cols; ++j) yr[j] *= inv;
    }
}

// dx = y .* (dy - rowdot(dy, y)), rows of length cols.
void softmax_backward_rows(const double* y, const double* dy, double* dx, int64_t rows, int64_t cols) {
    for (int64_t r = 0; r < rows; ++r) {
        const double* yr = y + r * cols;
        const double* dyr = dy + r * cols;
        double* dxr = dx + r * cols;
        double dot = 0.0;
        for (int64_t j = 0; j < cols; ++j) dot += yr[j] * dyr[j];
        for (int64_t j = 0; j < cols; ++j) dxr[j] += yr[j] * (dyr[j] - dot);
    }
}

}  // namespace

const char* op_name(Op op) {
    switch (op) {
        case Op::Leaf: return "leaf";
        case Op::Add: return "add";
        case Op::Sub: return "sub";
        case Op::Mul: return "mul";
        case Op::AddScalar: return "add_scalar";
        case Op::MulScalar: return "mul_scalar";
        case Op::Matmul: return "matmul";
        case Op::Permute: return "permute";
        case Op::Reshape: return "reshape";
        case Op::Concat: return "concat";
        case Op::Slice: return "slice";
        case Op::Softmax: return "softmax";
        case Op::LayerNorm: return "layer_norm";
        case Op::Gelu: return "gelu";
        case Op::Attention: return "attention";
        case Op::SumAll: return "sum_all";
        case Op::MeanAll: return "mean_all";
    }
    return "?";
}

void Graph::check_id(Id id, const char* op) const {
    if (id < 0 || static_cast<size_t>(id) >= nodes_.size()) {
        shape_error(op, "invalid node id " + std::to_string(id));
    }
}

Graph::Id Graph::push(Node n) {
    nodes_.push_back(std::move(n));
    return static_cast<Id>(nodes_.size() - 1);
}

Graph::Id Graph::leaf(Tensor t) {
    bool rg = t.requires_grad;
    return leaf(std::move(t), rg);
}

Graph::Id Graph::leaf(Tensor t, bool requires_grad) {
    Node n;
    n.op = Op::Leaf;
    n.value = std::move(t);
    n.requires_grad = requires_grad;
    return push(std::move(n));
}

Graph::Id Graph::add(Id a, Id b) {
    check_id(a, "add");
    check_id(b, "add");
    const Tensor& ta = at(a).value;
    const Tensor& tb = at(b).value;
    Node n;
    n.op = Op::Add;
    n.inputs = {a, b};
    n.requires_grad = at(a).requires_grad || at(b).requires_grad;
    if (ta.same_shape(tb)) {
        n.value = Tensor(ta.shape());
        for (int64_t i = 0; i < ta.numel(); ++i) n.value[i] = ta[i] + tb[i];
    } else {
        auto out = bcast_shape(ta.shape(), tb.shape(), "add");
        auto sa = bcast_strides(ta.shape(), out);
        auto sb = bcast_strides(tb.shape(), out);
        n.value = Tensor(out);
        Tensor& v = n.value;
        bcast_for_each(out, sa, sb, [&](int64_t i, int64_t oa, int64_t ob) { v[i] = ta[oa] + tb[ob]; });
    }
    check_finite(n.value, "add");
    return push(std::move(n));
}

Graph::Id Graph::sub(Id a, Id b) {
    check_id(a, "sub");
    check_id(b, "sub");
    const Tensor& ta = at(a).value;
    const Tensor& tb = at(b).value;
    Node n;
    n.op = Op::Sub;
    n.inputs = {a, b};
    n.requires_grad = at(a).requires_grad || at(b).requires_grad;
    if (ta.same_shape(tb)) {
        n.value = Tensor(ta.shape());
        for (int64_t i = 0; i < ta.numel(); ++i) n.value[i] = ta[i] - tb[i];
    } else {
        auto out = bcast_shape(ta.shape(), tb.shape(), "sub");
        auto sa = bcast_strides(ta.shape(), out);
        auto sb = bcast_strides(tb.shape(), out);
        n.value = Tensor(out);
        Tensor& v = n.value;
        bcast_for_each(out, sa, sb, [&](int64_t i, int64_t oa, int64_t ob) { v[i] = ta[oa] - tb[ob]; });
    }
    check_finite(n.value, "sub");
    return push(std::move(n));
}

Graph::Id Graph::mul(Id a, Id b) {
    check_id(a, "mul");
    check_id(b, "mul");
    const Tensor& ta = at(a).value;
    const Tensor& tb = at(b).value;
    Node n;
    n.op = Op::Mul;
    n.inputs = {a, b};
    n.requires_grad = at(a).requires_grad || at(b).requires_grad;
    if (ta.same_shape(tb)) {
        n.value = Tensor(ta.shape());
        for (int64_t i = 0; i < ta.numel(); ++i) n.value[i] = ta[i] * tb[i];
    } else {
        auto out = bcast_shape(ta.shape(), tb.shape(), "mul");
        auto sa = bcast_strides(ta.shape(), out);
        auto sb = bcast_strides(tb.shape(), out);
        n.value = Tensor(out);
        Tensor& v = n.value;
        bcast_for_each(out, sa, sb, [&](int64_t i, int64_t oa, int64_t ob) { v[i] = ta[oa] * tb[ob]; });
    }
    check_finite(n.value, "mul");
    return push(std::move(n));
}

Graph::Id Graph::add_scalar(Id a, double s) {
    check_id(a, "add_scalar");
    Node n;
    n.op = Op::AddScalar;
    n.inputs = {a};
    n.scalar = s;
    n.requires_grad = at(a).requires_grad;
    const Tensor& ta = at(a).value;
    n.value = Tensor(ta.shape());
    for (int64_t i = 0; i < ta.numel(); ++i) n.value[i] = ta[i] + s;
    check_finite(n.value, "add_scalar");
    return push(std::move(n));
}

Graph::Id Graph::mul_scalar(Id a, double s) {
    check_id(a, "mul_scalar");
    Node n;
    n.op = Op::MulScalar;
    n.inputs = {a};
    n.scalar = s;
    n.requires_grad = at(a).requires_grad;
    const Tensor& ta = at(a).value;
    n.value = Tensor(ta.shape());
    for (int64_t i = 0; i < ta.numel(); ++i) n.value[i] = ta[i] * s;
    check_finite(n.value, "mul_scalar");
    return push(std::move(n));
}

Graph::Id Graph::matmul(Id a, Id b) {
    check_id(a, "matmul");
    check_id(b, "matmul");
    const Tensor& ta = at(a).value;
    const Tensor& tb = at(b).value;
    if (ta.ndim() < 2 || tb.ndim() < 2) {
        shape_error("matmul", "operands must have rank >= 2, got " + shape_str(ta.shape()) + " and " +
                                  shape_str(tb.shape()));
    }
    bool shared_b = tb.ndim() == 2 && ta.ndim() > 2;
    if (!shared_b && ta.ndim() != tb.ndim()) {
        shape_error("matmul", "rank mismatch " + shape_str(ta.shape()) + " vs " + shape_str(tb.shape()));
    }
    int64_t m = ta.dim(ta.ndim() - 2), k = ta.dim(ta.ndim() - 1);
    int64_t kb = tb.dim(tb.ndim() - 2), nn = tb.dim(tb.ndim() - 1);
    if (k != kb) {
        shape_error("matmul", "inner dims differ: " + shape_str(ta.shape()) + " x " + shape_str(tb.shape()));
    }
    int64_t batch = 1;
    std::vector<int64_t> out_shape;
    for (int64_t i = 0; i + 2 < ta.ndim(); ++i) {
        if (!shared_b && tb.dim(i) != ta.dim(i)) {
            shape_error("matmul", "batch dims differ: " + shape_str(ta.shape()) + " x " + shape_str(tb.shape()));
        }
        batch *= ta.dim(i);
        out_shape.push_back(ta.dim(i));
    }
    out_shape.push_back(m);
    out_shape.push_back(nn);

    Node n;
    n.op = Op::Matmul;
    n.inputs = {a, b};
    n.requires_grad = at(a).requires_grad || at(b).requires_grad;
    n.value = Tensor(out_shape);
    for (int64_t bi = 0; bi < batch; ++bi) {
        const double* A = ta.data() + bi * m * k;
        const double* B = shared_b ? tb.data() : tb.data() + bi * k * nn;
        mm_nn(A, B, n.value.data() + bi * m * nn, m, k, nn, false);
    }
    check_finite(n.value, "matmul");
    return push(std::move(n));
}

Graph::Id Graph::permute(Id a, std::vector<int64_t> axes) {
    check_id(a, "permute");
    const Tensor& ta = at(a).value;
    if (static_cast<int64_t>(axes.size()) != ta.ndim()) {
        shape_error("permute", "axes size " + std::to_string(axes.size()) + " vs rank " + std::to_string(ta.ndim()));
    }
    std::vector<bool> seen(axes.size(), false);
    for (int64_t ax : axes) {
        if (ax < 0 || ax >= ta.ndim() || seen[static_cast<size_t>(ax)]) {
            shape_error("permute", "invalid permutation for shape " + shape_str(ta.shape()));
        }
        seen[static_cast<size_t>(ax)] = true;
    }
    size_t nd = axes.size();
    std::vector<int64_t> in_strides(nd);
    int64_t s = 1;
    for (size_t i = nd; i-- > 0;) {
        in_strides[i] = s;
        s *= ta.dim(static_cast<int64_t>(i));
    }
    std::vector<int64_t> out_shape(nd), out_src_stride(nd);
    for (size_t i = 0; i < nd; ++i) {
        out_shape[i] = ta.dim(axes[i]);
        out_src_stride[i] = in_strides[static_cast<size_t>(axes[i])];
    }
    Node n;
    n.op = Op::Permute;
    n.inputs = {a};
    n.attrs = axes;
    n.requires_grad = at(a).requires_grad;
    n.value = Tensor(out_shape);
    std::vector<int64_t> idx(nd, 0);
    int64_t src = 0;
    for (int64_t i = 0; i < n.value.numel(); ++i) {
        n.value[i] = ta[src];
        for (size_t d = nd; d-- > 0;) {
            if (++idx[d] < out_shape[d]) {
                src += out_src_stride[d];
                break;
            }
            idx[d] = 0;
            src -= out_src_stride[d] * (out_shape[d] - 1);
            if (d == 0) break;
        }
    }
    return push(std::move(n));
}

Graph::Id Graph::transpose(Id a, int64_t ax0, int64_t ax1) {
    const Tensor& ta = at(a).value;
    std::vector<int64_t> axes(static_cast<size_t>(ta.ndim()));
    for (size_t i = 0; i < axes.size(); ++i) axes[i] = static_cast<int64_t>(i);
    std::swap(axes[static_cast<size_t>(ax0)], axes[static_cast<size_t>(ax1)]);
    return permute(a, axes);
}

Graph::Id Graph::reshape(Id a, std::vector<int64_t> shape) {
    check_id(a, "reshape");
    const Tensor& ta = at(a).value;
    if (shape_numel(shape) != ta.numel()) {
        shape_error("reshape", "cannot reshape " + shape_str(ta.shape()) + " to " + shape_str(shape));
    }
    Node n;
    n.op = Op::Reshape;
    n.inputs = {a};
    n.requires_grad = at(a).requires_grad;
    n.value = Tensor(shape, ta.vec());
    return push(std::move(n));
}

Graph::Id Graph::concat(const std::vector<Id>& parts, int64_t axis) {
    if (parts.empty()) shape_error("concat", "no inputs");
    for (Id p : parts) check_id(p, "concat");
    const Tensor& t0 = at(parts[0]).value;
    if (axis < 0 || axis >= t0.ndim()) shape_error("concat", "axis out of range");
    std::vector<int64_t> out_shape = t0.shape();
    int64_t total = 0;
    for (Id p : parts) {
        const Tensor& t = at(p).value;
        if (t.ndim() != t0.ndim()) shape_error("concat", "rank mismatch");
        for (int64_t d = 0; d < t.ndim(); ++d) {
            if (d != axis && t.dim(d) != t0.dim(d)) {
                shape_error("concat", "shape mismatch " + shape_str(t.shape()) + " vs " + shape_str(t0.shape()));
            }
        }
        total += t.dim(axis);
    }
    out_shape[static_cast<size_t>(axis)] = total;

    Node n;
    n.op = Op::Concat;
    n.inputs = parts;
    n.attrs = {axis};
    for (Id p : parts) n.requires_grad = n.requires_grad || at(p).requires_grad;
    n.value = Tensor(out_shape);

    int64_t outer = 1, inner = 1;
    for (int64_t d = 0; d < axis; ++d) outer *= out_shape[static_cast<size_t>(d)];
    for (int64_t d = axis + 1; d < t0.ndim(); ++d) inner *= out_shape[static_cast<size_t>(d)];
    int64_t out_row = total * inner;
    int64_t off = 0;
    for (Id p : parts) {
        const Tensor& t = at(p).value;
        int64_t len = t.dim(axis) * inner;
        for (int64_t o = 0; o < outer; ++o) {
            std::memcpy(n.value.data() + o * out_row + off, t.data() + o * len,
                        static_cast<size_t>(len) * sizeof(double));
        }
        off += len;
    }
    return push(std::move(n));
}

std::vector<Graph::Id> Graph::split(Id a, int64_t axis, int64_t parts) {
    check_id(a, "split");
    const Tensor& ta = at(a).value;
    if (axis < 0 || axis >= ta.ndim()) shape_error("split", "axis out of range");
    if (parts <= 0 || ta.dim(axis) % parts != 0) {
        shape_error("split", "axis " + std::to_string(axis) + " of " + shape_str(ta.shape()) +
                                 " not divisible into " + std::to_string(parts) + " parts");
    }
    int64_t len = ta.dim(axis) / parts;
    std::vector<Id> out;
    out.reserve(static_cast<size_t>(parts));
    for (int64_t i = 0; i < parts; ++i) out.push_back(slice(a, axis, i * len, len));
    return out;
}

Graph::Id Graph::slice(Id a, int64_t axis, int64_t start, int64_t len) {
    check_id(a, "slice");
    const Tensor& ta = at(a).value;
    if (axis < 0 || axis >= ta.ndim()) shape_error("slice", "axis out of range");
    if (start < 0 || len <= 0 || start + len > ta.dim(axis)) {
        shape_error("slice", "range [" + std::to_string(start) + "," + std::to_string(start + len) +
                                 ") out of bounds for axis " + std::to_string(axis) + " of " + shape_str(ta.shape()));
    }
    std::vector<int64_t> out_shape = ta.shape();
    out_shape[static_cast<size_t>(axis)] = len;
    Node n;
    n.op = Op::Slice;
    n.inputs = {a};
    n.attrs = {axis, start, len};
    n.requires_grad = at(a).requires_grad;
    n.value = Tensor(out_shape);
    int64_t outer = 1, inner = 1;
    for (int64_t d = 0; d < axis; ++d) outer *= ta.dim(d);
    for (int64_t d = axis + 1; d < ta.ndim(); ++d) inner *= ta.dim(d);
    int64_t in_row = ta.dim(axis) * inner;
    int64_t out_row = len * inner;
    for (int64_t o = 0; o < outer; ++o) {
        std::memcpy(n.value.data() + o * out_row, ta.data() + o * in_row + start * inner,
                    static_cast<size_t>(out_row) * sizeof(double));
    }
    return push(std::move(n));
}

Graph::Id Graph::softmax(Id a) {
    check_id(a, "softmax");
    const Tensor& ta = at(a).value;
    if (ta.ndim() < 1) shape_error("softmax", "rank-0 input");
    int64_t cols = ta.dim(ta.ndim() - 1);
    int64_t rows = ta.numel() / cols;
    Node n;
    n.op = Op::Softmax;
    n.inputs = {a};
    n.requires_grad = at(a).requires_grad;
    n.value = Tensor(ta.shape());
    softmax_rows(ta.data(), n.value.data(), rows, cols);
    check_finite(n.value, "softmax");
    return push(std::move(n));
}

Graph::Id Graph::layer_norm(Id a, double eps) {
    check_id(a, "layer_norm");
    const Tensor& ta = at(a).value;
    if (ta.ndim() < 1) shape_error("layer_norm", "rank-0 input");
    int64_t cols = ta.dim(ta.ndim() - 1);
    int64_t rows = ta.numel() / cols;
    Node n;
    n.op = Op::LayerNorm;
    n.inputs = {a};
    n.scalar = eps;
    n.requires_grad = at(a).requires_grad;
    n.value = Tensor(ta.shape());
    Tensor inv_std({rows});
    for (int64_t r = 0; r < rows; ++r) {
        const double* xr = ta.data() + r * cols;
        double* yr = n.value.data() + r * cols;
        double mean = 0.0;
        for (int64_t j = 0; j < cols; ++j) mean += xr[j];
        mean /= static_cast<double>(cols);
        double var = 0.0;
        for (int64_t j = 0; j < cols; ++j) {
            double d = xr[j] - mean;
            var += d * d;
        }
        var /= static_cast<double>(cols);
        double inv = 1.0 / std::sqrt(var + eps);
        inv_std[r] = inv;
        for (int64_t j = 0; j < cols; ++j) yr[j] = (xr[j] - mean) * inv;
    }
    n.saved.push_back(std::move(inv_std));
    check_finite(n.value, "layer_norm");
    return push(std::move(n));
}

Graph::Id Graph::gelu(Id a) {
    check_id(a, "gelu");
    const Tensor& ta = at(a).value;
    Node n;
    n.op = Op::Gelu;
    n.inputs = {a};
    n.requires_grad = at(a).requires_grad;
    n.value = Tensor(ta.shape());
    for (int64_t i = 0; i < ta.numel(); ++i) {
        double x = ta[i];
        n.value[i] = 0.5 * x * (1.0 + std::erf(x * kInvSqrt2));
    }
    check_finite(n.value, "gelu");
    return push(std::move(n));
}

Graph::Id Graph::attention(Id q, Id k, Id v) {
    check_id(q, "attention");
    check_id(k, "attention");
    check_id(v, "attention");
    const Tensor& tq = at(q).value;
    const Tensor& tk = at(k).value;
    const Tensor& tv = at(v).value;
    if (tq.ndim() < 2 || tk.ndim() != tq.ndim() || tv.ndim() != tq.ndim()) {
        shape_error("attention", "rank mismatch: q " + shape_str(tq.shape()) + ", k " + shape_str(tk.shape()) +
                                     ", v " + shape_str(tv.shape()));
    }
    int64_t nd = tq.ndim();
    int64_t sq = tq.dim(nd - 2), d = tq.dim(nd - 1);
    int64_t sk = tk.dim(nd - 2);
    if (tk.dim(nd - 1) != d || tv.dim(nd - 2) != sk || tv.dim(nd - 1) != d) {
        shape_error("attention", "q " + shape_str(tq.shape()) + ", k " + shape_str(tk.shape()) + ", v " +
                                     shape_str(tv.shape()) + " are inconsistent");
    }
    int64_t batch = 1;
    for (int64_t i = 0; i + 2 < nd; ++i) {
        if (tk.dim(i) != tq.dim(i) || tv.dim(i) != tq.dim(i)) {
            shape_error("attention", "batch dims differ");
        }
        batch *= tq.dim(i);
    }
    double scale = 1.0 / std::sqrt(static_cast<double>(d));

    Node n;
    n.op = Op::Attention;
    n.inputs = {q, k, v};
    n.requires_grad = at(q).requires_grad || at(k).requires_grad || at(v).requires_grad;
    n.value = Tensor(tq.shape());
    std::vector<int64_t> p_shape;
    for (int64_t i = 0; i + 2 < nd; ++i) p_shape.push_back(tq.dim(i));
    p_shape.push_back(sq);
    p_shape.push_back(sk);
    Tensor probs(p_shape);
    std::vector<double> scores(static_cast<size_t>(sq * sk));
    for (int64_t b = 0; b < batch; ++b) {
        const double* Q = tq.data() + b * sq * d;
        const double* K = tk.data() + b * sk * d;
        const double* V = tv.data() + b * sk * d;
        mm_nt(Q, K, scores.data(), sq, d, sk, false);
        for (auto& s : scores) s *= scale;
        double* P = probs.data() + b * sq * sk;
        softmax_rows(scores.data(), P, sq, sk);
        mm_nn(P, V, n.value.data() + b * sq * d, sq, sk, d, false);
    }
    n.saved.push_back(std::move(probs));
    check_finite(n.value, "attention");
    return push(std::move(n));
}

Graph::Id Graph::linear(Id x, Id w, Id b) { return add(matmul(x, w), b); }

Graph::Id Graph::sum_all(Id a) {
    check_id(a, "sum_all");
    const Tensor& ta = at(a).value;
    double s = 0.0;
    for (int64_t i = 0; i < ta.numel(); ++i) s += ta[i];
    Node n;
    n.op = Op::SumAll;
    n.inputs = {a};
    n.requires_grad = at(a).requires_grad;
    n.value = Tensor::from_scalar(s);
    check_finite(n.value, "sum_all");
    return push(std::move(n));
}

Graph::Id Graph::mean_all(Id a) {
    check_id(a, "mean_all");
    const Tensor& ta = at(a).value;
    if (ta.numel() == 0) shape_error("mean_all", "empty input");
    double s = 0.0;
    for (int64_t i = 0; i < ta.numel(); ++i) s += ta[i];
    Node n;
    n.op = Op::MeanAll;
    n.inputs = {a};
    n.requires_grad = at(a).requires_grad;
    n.value = Tensor::from_scalar(s / static_cast<double>(ta.numel()));
    check_finite(n.value, "mean_all");
    return push(std::move(n));
}

void Graph::ensure_grad(Id id) {
    Node& n = at(id);
    if (!n.has_grad) {
        n.grad = Tensor(n.value.shape());
        n.has_grad = true;
    }
}

void Graph::accumulate(Id input, const Tensor& g) {
    Node& n = at(input);
    if (!n.requires_grad) return;
    ensure_grad(input);
    for (int64_t i = 0; i < g.numel(); ++i) n.grad[i] += g[i];
}

const Tensor& Graph::grad(Id id) {
    check_id(id, "grad");
    ensure_grad(id);
    return at(id).grad;
}

void Graph::backward(Id loss) {
    check_id(loss, "backward");
    if (at(loss).value.numel() != 1) {
        throw std::invalid_argument("backward: loss must be scalar, got shape " +
                                    shape_str(at(loss).value.shape()));
    }
    ensure_grad(loss);
    at(loss).grad[0] = 1.0;
    for (Id id = loss; id >= 0; --id) {
        Node& n = at(id);
        if (!n.has_grad || !n.requires_grad || n.op == Op::Leaf) continue;
        backward_node(id);
    }
}

void Graph::backward_node(Id id) {
    Node& n = at(id);
    const Tensor& gy = n.grad;
    switch (n.op) {
        case Op::Leaf:
            break;
        case Op::Add:
        case Op::Sub:
        case Op::Mul: {
            Id a = n.inputs[0], b = n.inputs[1];
            const Tensor& ta = at(a).value;
            const Tensor& tb = at(b).value;
            bool need_a = at(a).requires_grad;
            bool need_b = at(b).requires_grad;
            if (need_a) ensure_grad(a);
            if (need_b) ensure_grad(b);
            if (ta.same_shape(tb)) {
                Tensor& ga = at(a).grad;
                Tensor& gb = at(b).grad;
                for (int64_t i = 0; i < gy.numel(); ++i) {
                    double g = gy[i];
                    if (n.op == Op::Mul) {
                        if (need_a) ga[i] += g * tb[i];
                        if (need_b) gb[i] += g * ta[i];
                    } else {
                        if (need_a) ga[i] += g;
                        if (need_b) gb[i] += n.op == Op::Sub ? -g : g;
                    }
                }
            } else {
                auto out = n.value.shape();
                auto sa = bcast_strides(ta.shape(), out);
                auto sb = bcast_strides(tb.shape(), out);
                Tensor& ga = at(a).grad;
                Tensor& gb = at(b).grad;
                Op op = n.op;
                bcast_for_each(out, sa, sb, [&](int64_t i, int64_t oa, int64_t ob) {
                    double g = gy[i];
                    if (op == Op::Mul) {
                        if (need_a) ga[oa] += g * tb[ob];
                        if (need_b) gb[ob] += g * ta[oa];
                    } else {
                        if (need_a) ga[oa] += g;
                        if (need_b) gb[ob] += op == Op::Sub ? -g : g;
                    }
                });
            }
            break;
        }
        case Op::AddScalar:
            accumulate(n.inputs[0], gy);
            break;
        case Op::MulScalar: {
            Id a = n.inputs[0];
            if (!at(a).requires_grad) break;
            ensure_grad(a);
            Tensor& ga = at(a).grad;
            for (int64_t i = 0; i < gy.numel(); ++i) ga[i] += gy[i] * n.scalar;
            break;
        }
        case Op::Matmul: {
            Id a = n.inputs[0], b = n.inputs[1];
            const Tensor& ta = at(a).value;
            const Tensor& tb = at(b).value;
            bool shared_b = tb.ndim() == 2 && ta.ndim() > 2;
            int64_t m = ta.dim(ta.ndim() - 2), k = ta.dim(ta.ndim() - 1);
            int64_t nn = tb.dim(tb.ndim() - 1);
            int64_t batch = ta.numel() / (m * k);
            if (at(a).requires_grad) {
                ensure_grad(a);
                for (int64_t bi = 0; bi < batch; ++bi) {
                    const double* B = shared_b ? tb.data() : tb.data() + bi * k * nn;
                    mm_nt(gy.data() + bi * m * nn, B, at(a).grad.data() + bi * m * k, m, nn, k, true);
                }
            }
            if (at(b).requires_grad) {
                ensure_grad(b);
                for (int64_t bi = 0; bi < batch; ++bi) {
                    double* GB = shared_b ? at(b).grad.data() : at(b).grad.data() + bi * k * nn;
                    mm_tn(ta.data() + bi * m * k, gy.data() + bi * m * nn, GB, m, k, nn, true);
                }
            }
            break;
        }
        case Op::Permute: {
            Id a = n.inputs[0];
            if (!at(a).requires_grad) break;
            ensure_grad(a);
            const std::vector<int64_t>& axes = n.attrs;
            size_t nd = axes.size();
            // walk the output in order, scattering into the permuted source offset
            const Tensor& ta = at(a).value;
            std::vector<int64_t> in_strides(nd);
            int64_t s = 1;
            for (size_t i = nd; i-- > 0;) {
                in_strides[i] = s;
                s *= ta.dim(static_cast<int64_t>(i));
            }
            std::vector<int64_t> out_shape = n.value.shape();
            std::vector<int64_t> out_src_stride(nd);
            for (size_t i = 0; i < nd; ++i) out_src_stride[i] = in_strides[static_cast<size_t>(axes[i])];
            Tensor& ga = at(a).grad;
            std::vector<int64_t> idx(nd, 0);
            int64_t src = 0;
            for (int64_t i = 0; i < gy.numel(); ++i) {
                ga[src] += gy[i];
                for (size_t d = nd; d-- > 0;) {
                    if (++idx[d] < out_shape[d]) {
                        src += out_src_stride[d];
                        break;
                    }
                    idx[d] = 0;
                    src -= out_src_stride[d] * (out_shape[d] - 1);
                    if (d == 0) break;
                }
            }
            break;
        }
        case Op::Reshape: {
            Id a = n.inputs[0];
            if (!at(a).requires_grad) break;
            ensure_grad(a);
            Tensor& ga = at(a).grad;
            for (int64_t i = 0; i < gy.numel(); ++i) ga[i] += gy[i];
            break;
        }
        case Op::Concat: {
            int64_t axis = n.attrs[0];
            const Tensor& ty = n.value;
            int64_t outer = 1, inner = 1;
            for (int64_t d = 0; d < axis; ++d) outer *= ty.dim(d);
            for (int64_t d = axis + 1; d < ty.ndim(); ++d) inner *= ty.dim(d);
            int64_t out_row = ty.dim(axis) * inner;
            int64_t off = 0;
            for (Id p : n.inputs) {
                const Tensor& tp = at(p).value;
                int64_t len = tp.dim(axis) * inner;
                if (at(p).requires_grad) {
                    ensure_grad(p);
                    Tensor& gp = at(p).grad;
                    for (int64_t o = 0; o < outer; ++o) {
                        const double* src = gy.data() + o * out_row + off;
                        double* dst = gp.data() + o * len;
                        for (int64_t i = 0; i < len; ++i) dst[i] += src[i];
                    }
                }
                off += len;
            }
            break;
        }
        case Op::Slice: {
            Id a = n.inputs[0];
            if (!at(a).requires_grad) break;
            ensure_grad(a);
            const Tensor& ta = at(a).value;
            int64_t axis = n.attrs[0], start = n.attrs[1], len = n.attrs[2];
            int64_t outer = 1, inner = 1;
            for (int64_t d = 0; d < axis; ++d) outer *= ta.dim(d);
            for (int64_t d = axis + 1; d < ta.ndim(); ++d) inner *= ta.dim(d);
            int64_t in_row = ta.dim(axis) * inner;
            int64_t out_row = len * inner;
            Tensor& ga = at(a).grad;
            for (int64_t o = 0; o < outer; ++o) {
                const double* src = gy.data() + o * out_row;
                double* dst = ga.data() + o * in_row + start * inner;
                for (int64_t i = 0; i < out_row; ++i) dst[i] += src[i];
            }
            break;
        }
        case Op::Softmax: {
            Id a = n.inputs[0];
            if (!at(a).requires_grad) break;
            ensure_grad(a);
            int64_t cols = n.value.dim(n.value.ndim() - 1);
            int64_t rows = n.value.numel() / cols;
            softmax_backward_rows(n.value.data(), gy.data(), at(a).grad.data(), rows, cols);
            break;
        }
        case Op::LayerNorm: {
            Id a = n.inputs[0];
            if (!at(a).requires_grad) break;
            ensure_grad(a);
            int64_t cols = n.value.dim(n.value.ndim() - 1);
            int64_t rows = n.value.numel() / cols;
            const Tensor& inv_std = n.saved[0];
            Tensor& ga = at(a).grad;
            for (int64_t r = 0; r < rows; ++r) {
                const double* yr = n.value.data() + r * cols;
                const double* gr = gy.data() + r * cols;
                double* gar = ga.data() + r * cols;
                double mg = 0.0, mgy = 0.0;
                for (int64_t j = 0; j < cols; ++j) {
                    mg += gr[j];
                    mgy += gr[j] * yr[j];
                }
                mg /= static_cast<double>(cols);
                mgy /= static_cast<double>(cols);
                double inv = inv_std[r];
                for (int64_t j = 0; j < cols; ++j) gar[j] += inv * (gr[j] - mg - yr[j] * mgy);
            }
            break;
        }
        case Op::Gelu: {
            Id a = n.inputs[0];
            if (!at(a).requires_grad) break;
            ensure_grad(a);
            const Tensor& ta = at(a).value;
            Tensor& ga = at(a).grad;
            for (int64_t i = 0; i < gy.numel(); ++i) {
                double x = ta[i];
                double cdf = 0.5 * (1.0 + std::erf(x * kInvSqrt2));
                double pdf = kInvSqrt2Pi * std::exp(-0.5 * x * x);
                ga[i] += gy[i] * (cdf + x * pdf);
            }
            break;
        }
        case Op::Attention: {
            Id q = n.inputs[0], k = n.inputs[1], v = n.inputs[2];
            const Tensor& tq = at(q).value;
            const Tensor& tk = at(k).value;
            const Tensor& tv = at(v).value;
            const Tensor& probs = n.saved[0];
            int64_t nd = tq.ndim();
            int64_t sq = tq.dim(nd - 2), d = tq.dim(nd - 1);
            int64_t sk = tk.dim(nd - 2);
            int64_t batch = tq.numel() / (sq * d);
            double scale = 1.0 / std::sqrt(static_cast<double>(d));
            bool need_q = at(q).requires_grad, need_k = at(k).requires_grad, need_v = at(v).requires_grad;
            if (need_q) ensure_grad(q);
            if (need_k) ensure_grad(k);
            if (need_v) ensure_grad(v);
            std::vector<double> dp(static_cast<size_t>(sq * sk));
            std::vector<double> ds(static_cast<size_t>(sq * sk), 0.0);
            for (int64_t b = 0; b < batch; ++b) {
                const double* P = probs.data() + b * sq * sk;
                const double* GO = gy.data() + b * sq * d;
                const double* V = tv.data() + b * sk * d;
                if (need_v) {
                    mm_tn(P, GO, at(v).grad.data() + b * sk * d, sq, sk, d, true);
                }
                if (need_q || need_k) {
                    mm_nt(GO, V, dp.data(), sq, d, sk, false);
                    std::fill(ds.begin(), ds.end(), 0.0);
                    softmax_backward_rows(P, dp.data(), ds.data(), sq, sk);
                    for (auto& s : ds) s *= scale;
                    if (need_q) {
                        mm_nn(ds.data(), tk.data() + b * sk * d, at(q).grad.data() + b * sq * d, sq, sk, d, true);
                    }
                    if (need_k) {
                        mm_tn(ds.data(), tq.data() + b * sq * d, at(k).grad.data() + b * sk * d, sq, sk, d, true);
                    }
                }
            }
            break;
        }
        case Op::SumAll: {
            Id a = n.inputs[0];
            if (!at(a).requires_grad) break;
            ensure_grad(a);
            double g = gy[0];
            Tensor& ga = at(a).grad;
            for (int64_t i = 0; i < ga.numel(); ++i) ga[i] += g;
            break;
        }
        case Op::MeanAll: {
            Id a = n.inputs[0];
            if (!at(a).requires_grad) break;
            ensure_grad(a);
            double g = gy[0] / static_cast<double>(at(a).value.numel());
            Tensor& ga = at(a).grad;
            for (int64_t i = 0; i < ga.numel(); ++i) ga[i] += g;
            break;
        }
    }
}

}  // namespace hvg
