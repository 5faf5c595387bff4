#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hvg/tensor.hpp"

namespace hvg {

enum class Op : uint8_t {
    Leaf,
    Add,
    Sub,
    Mul,
    AddScalar,
    MulScalar,
    Matmul,
    Permute,
    Reshape,
    Concat,
    Slice,
    Softmax,
    LayerNorm,
    Gelu,
    Attention,
    SumAll,
    MeanAll,
};

const char* op_name(Op op);

/// Reverse-mode tape. Nodes are appended in topological order by
/// construction (an op can only consume already-existing ids), so backward
/// is a single reverse sweep over creation order.
///
/// Single-threaded by contract; run independent graphs for parallel work.
class Graph {
  public:
    using Id = int32_t;

    struct Node {
        Op op = Op::Leaf;
        std::vector<Id> inputs;
        Tensor value;
        Tensor grad;            // allocated lazily during backward
        bool requires_grad = false;
        bool has_grad = false;
        std::vector<int64_t> attrs;   // op-specific (axis, starts, permutation, ...)
        double scalar = 0.0;          // op-specific (added/multiplied scalar, eps)
        std::vector<Tensor> saved;    // extra activations kept for backward
    };

    Id leaf(Tensor t);                       // requires_grad taken from the tensor
    Id leaf(Tensor t, bool requires_grad);

    // Elementwise with right-aligned broadcasting (dims equal or 1).
    Id add(Id a, Id b);
    Id sub(Id a, Id b);
    Id mul(Id a, Id b);
    Id add_scalar(Id a, double s);
    Id mul_scalar(Id a, double s);

    /// Batched matmul: [..., m, k] x [..., k, n] with equal batch dims, or a
    /// rank-2 rhs shared across the batch.
    Id matmul(Id a, Id b);
    Id permute(Id a, std::vector<int64_t> axes);
    Id transpose(Id a, int64_t ax0, int64_t ax1);
    Id reshape(Id a, std::vector<int64_t> shape);
    Id concat(const std::vector<Id>& parts, int64_t axis);
    std::vector<Id> split(Id a, int64_t axis, int64_t parts);
    Id slice(Id a, int64_t axis, int64_t start, int64_t len);

    Id softmax(Id a);                 // last axis
    Id layer_norm(Id a, double eps = 1e-5);  // last axis, no affine
    Id gelu(Id a);                    // exact erf form

    /// Scaled dot-product attention: q [..., Sq, d], k/v [..., Sk, d].
    /// Full attention, no masking.
    Id attention(Id q, Id k, Id v);

    /// Per-token linear map (the 1x1 "convolution"): x [..., din] * w [din, dout] + b [dout].
    Id linear(Id x, Id w, Id b);

    Id sum_all(Id a);
    Id mean_all(Id a);

    const Tensor& value(Id id) const { return nodes_[static_cast<size_t>(id)].value; }
    bool requires_grad(Id id) const { return nodes_[static_cast<size_t>(id)].requires_grad; }
    /// Gradient of the last backward() loss w.r.t. node id; zero tensor if
    /// the node was not reached.
    const Tensor& grad(Id id);

    /// Reverse sweep from a scalar loss. d(loss)/d(loss) = 1.
    void backward(Id loss);

    size_t num_nodes() const { return nodes_.size(); }

  private:
    std::vector<Node> nodes_;

    Id push(Node n);
    Node& at(Id id) { return nodes_[static_cast<size_t>(id)]; }
    const Node& at(Id id) const { return nodes_[static_cast<size_t>(id)]; }
    void ensure_grad(Id id);
    void accumulate(Id input, const Tensor& g);
    void backward_node(Id id);
    void check_id(Id id, const char* op) const;
};

}  // namespace hvg
