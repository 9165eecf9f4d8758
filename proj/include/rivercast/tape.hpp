#ifndef RIVERCAST_TAPE_HPP
#define RIVERCAST_TAPE_HPP

#include "rivercast/tensor.hpp"

#include <functional>
#include <vector>

namespace rivercast {
namespace ad {

/**
 * Sparse upstream-neighbor structure in CSR form.
 *
 * upstream[offsets[i] .. offsets[i+1]) lists the reaches draining into i;
 * degree(i) = 1 + upstream count. Built once per graph and shared read-only
 * by every tape that convolves over it.
 */
struct SparseAdjacency {
    int n = 0;
    std::vector<int> offsets;  // size n+1
    std::vector<int> upstream; // concatenated neighbor lists

    int degree(int i) const { return 1 + offsets[i + 1] - offsets[i]; }
};

/// Handle to a node on a tape.
struct Var {
    int id = -1;
    bool valid() const { return id >= 0; }
};

enum class Precision { f64, f32 };

/**
 * Reverse-mode differentiation tape.
 *
 * Operations execute eagerly and record a backward closure. backward()
 * replays the closures in exact reverse execution order, accumulating
 * gradients additively across fan-out. A tape belongs to one worker; share
 * nothing mutable between tapes.
 */
class Tape {
public:
    Tape() = default;

    /// Leaf holding externally supplied data (inputs and parameters alike).
    Var input(Tensor value);

    // ---- forward ops ----
    Var matmul(Var a, Var b);
    /// x (N x in) * W^T + b with W stored (out x in), b (1 x out).
    Var linear(Var x, Var w, Var b);
    Var add(Var a, Var b);
    Var sub(Var a, Var b);
    Var hadamard(Var a, Var b);
    Var scale(Var x, double c);
    Var gelu(Var x);
    Var sigmoid(Var x);
    Var tanh(Var x);
    /// Concatenate along axis (0 = rows, 1 = cols).
    Var concat(int axis, const std::vector<Var>& parts);
    /// Columns [c0, c1) of x.
    Var slice_cols(Var x, int c0, int c1);
    /// y = D^-1 (A + I) x using the sparse upstream lists. self_only
    /// replaces the stencil with the identity (each row sees itself).
    Var row_normalize_apply(const SparseAdjacency* adj, Var x, bool self_only = false);
    Var add_n(const std::vector<Var>& parts);
    Var sum(Var x);
    Var mean_square(Var x);
    Var sum_squares(Var x);

    // ---- reverse pass ----
    void backward(Var loss);
    void reset();

    const Tensor& value(Var v) const { return nodes_[v.id].value; }
    const Tensor& grad(Var v) const;

    void set_precision(Precision p) { precision_ = p; }
    Precision precision() const { return precision_; }
    std::size_t n_nodes() const { return nodes_.size(); }

private:
    struct Node {
        Tensor value;
        Tensor grad; // allocated lazily during backward
        std::function<void(Tape&)> back;
    };

    Var push(Tensor value, std::function<void(Tape&)> back);
    Tensor& grad_buf(int id);
    void round_through(Tensor& t) const;

    std::vector<Node> nodes_;
    Precision precision_ = Precision::f64;
    bool backward_done_ = false;
};

} // namespace ad
} // namespace rivercast

#endif
