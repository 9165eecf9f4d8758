#include "rivercast/tape.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <stdexcept>

namespace rivercast {
namespace ad {

namespace {

using EMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Map = Eigen::Map<EMat>;
using CMap = Eigen::Map<const EMat>;

CMap cmap(const Tensor& t) { return CMap(t.data(), t.rows(), t.cols()); }
Map mmap(Tensor& t) { return Map(t.data(), t.rows(), t.cols()); }

[[noreturn]] void shape_error(const char* op, const Tensor& a, const Tensor& b) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch " + a.shape_str() + " vs " + b.shape_str());
}

constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

double gelu_fwd(double x) { return 0.5 * x * (1.0 + std::erf(x * kInvSqrt2)); }
double gelu_dfwd(double x) {
    double cdf = 0.5 * (1.0 + std::erf(x * kInvSqrt2));
    double pdf = kInvSqrt2Pi * std::exp(-0.5 * x * x);
    return cdf + x * pdf;
}

} // namespace

Var Tape::push(Tensor value, std::function<void(Tape&)> back) {
    round_through(value);
    nodes_.push_back(Node{std::move(value), Tensor(), std::move(back)});
    return Var{static_cast<int>(nodes_.size()) - 1};
}

void Tape::round_through(Tensor& t) const {
    if (precision_ != Precision::f32) return;
    for (auto& v : t.values()) v = static_cast<double>(static_cast<float>(v));
}

Tensor& Tape::grad_buf(int id) {
    Node& n = nodes_[id];
    if (n.grad.size() == 0 && n.value.size() != 0)
        n.grad = Tensor::zeros(n.value.rows(), n.value.cols());
    return n.grad;
}

const Tensor& Tape::grad(Var v) const {
    const Node& n = nodes_[v.id];
    if (n.grad.size() == 0)
        throw std::runtime_error("Tape::grad: no gradient recorded (run backward first)");
    return n.grad;
}

Var Tape::input(Tensor value) {
    return push(std::move(value), nullptr);
}

Var Tape::matmul(Var a, Var b) {
    const Tensor& A = nodes_[a.id].value;
    const Tensor& B = nodes_[b.id].value;
    if (A.cols() != B.rows()) shape_error("matmul", A, B);
    Tensor out(A.rows(), B.cols());
    mmap(out).noalias() = cmap(A) * cmap(B);
    int ia = a.id, ib = b.id;
    Var y = push(std::move(out), nullptr);
    int iy = y.id;
    nodes_[iy].back = [ia, ib, iy](Tape& t) {
        const Tensor& gy = t.nodes_[iy].grad;
        mmap(t.grad_buf(ia)).noalias() += cmap(gy) * cmap(t.nodes_[ib].value).transpose();
        mmap(t.grad_buf(ib)).noalias() += cmap(t.nodes_[ia].value).transpose() * cmap(gy);
    };
    return y;
}

Var Tape::linear(Var x, Var w, Var b) {
    const Tensor& X = nodes_[x.id].value;
    const Tensor& W = nodes_[w.id].value;
    const Tensor& B = nodes_[b.id].value;
    if (X.cols() != W.cols()) shape_error("linear", X, W);
    if (B.rows() != 1 || B.cols() != W.rows()) shape_error("linear bias", B, W);
    Tensor out(X.rows(), W.rows());
    mmap(out).noalias() = cmap(X) * cmap(W).transpose();
    mmap(out).rowwise() += cmap(B).row(0);
    int ix = x.id, iw = w.id, ib = b.id;
    Var y = push(std::move(out), nullptr);
    int iy = y.id;
    nodes_[iy].back = [ix, iw, ib, iy](Tape& t) {
        const Tensor& gy = t.nodes_[iy].grad;
        mmap(t.grad_buf(ix)).noalias() += cmap(gy) * cmap(t.nodes_[iw].value);
        mmap(t.grad_buf(iw)).noalias() += cmap(gy).transpose() * cmap(t.nodes_[ix].value);
        mmap(t.grad_buf(ib)).row(0) += cmap(gy).colwise().sum();
    };
    return y;
}

Var Tape::add(Var a, Var b) {
    const Tensor& A = nodes_[a.id].value;
    const Tensor& B = nodes_[b.id].value;
    if (!A.same_shape(B)) shape_error("add", A, B);
    Tensor out(A.rows(), A.cols());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = A[i] + B[i];
    int ia = a.id, ib = b.id;
    Var y = push(std::move(out), nullptr);
    int iy = y.id;
    nodes_[iy].back = [ia, ib, iy](Tape& t) {
        const Tensor& gy = t.nodes_[iy].grad;
        Tensor& ga = t.grad_buf(ia);
        Tensor& gb = t.grad_buf(ib);
        for (std::size_t i = 0; i < gy.size(); ++i) {
            ga[i] += gy[i];
            gb[i] += gy[i];
        }
    };
    return y;
}

Var Tape::sub(Var a, Var b) {
    const Tensor& A = nodes_[a.id].value;
    const Tensor& B = nodes_[b.id].value;
    if (!A.same_shape(B)) shape_error("sub", A, B);
    Tensor out(A.rows(), A.cols());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = A[i] - B[i];
    int ia = a.id, ib = b.id;
    Var y = push(std::move(out), nullptr);
    int iy = y.id;
    nodes_[iy].back = [ia, ib, iy](Tape& t) {
        const Tensor& gy = t.nodes_[iy].grad;
        Tensor& ga = t.grad_buf(ia);
        Tensor& gb = t.grad_buf(ib);
        for (std::size_t i = 0; i < gy.size(); ++i) {
            ga[i] += gy[i];
            gb[i] -= gy[i];
        }
    };
    return y;
}

Var Tape::hadamard(Var a, Var b) {
    const Tensor& A = nodes_[a.id].value;
    const Tensor& B = nodes_[b.id].value;
    if (!A.same_shape(B)) shape_error("hadamard", A, B);
    Tensor out(A.rows(), A.cols());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = A[i] * B[i];
    int ia = a.id, ib = b.id;
    Var y = push(std::move(out), nullptr);
    int iy = y.id;
    nodes_[iy].back = [ia, ib, iy](Tape& t) {
        const Tensor& gy = t.nodes_[iy].grad;
        const Tensor& va = t.nodes_[ia].value;
        const Tensor& vb = t.nodes_[ib].value;
        Tensor& ga = t.grad_buf(ia);
        Tensor& gb = t.grad_buf(ib);
        for (std::size_t i = 0; i < gy.size(); ++i) {
            ga[i] += gy[i] * vb[i];
            gb[i] += gy[i] * va[i];
        }
    };
    return y;
}

Var Tape::scale(Var x, double c) {
    const Tensor& X = nodes_[x.id].value;
    Tensor out(X.rows(), X.cols());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = c * X[i];
    int ix = x.id;
    Var y = push(std::move(out), nullptr);
    int iy = y.id;
    nodes_[iy].back = [ix, iy, c](Tape& t) {
        const Tensor& gy = t.nodes_[iy].grad;
        Tensor& gx = t.grad_buf(ix);
        for (std::size_t i = 0; i < gy.size(); ++i) gx[i] += c * gy[i];
    };
    return y;
}

Var Tape::gelu(Var x) {
    const Tensor& X = nodes_[x.id].value;
    Tensor out(X.rows(), X.cols());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = gelu_fwd(X[i]);
    int ix = x.id;
    Var y = push(std::move(out), nullptr);
    int iy = y.id;
    nodes_[iy].back = [ix, iy](Tape& t) {
        const Tensor& gy = t.nodes_[iy].grad;
        const Tensor& vx = t.nodes_[ix].value;
        Tensor& gx = t.grad_buf(ix);
        for (std::size_t i = 0; i < gy.size(); ++i) gx[i] += gy[i] * gelu_dfwd(vx[i]);
    };
    return y;
}

Var Tape::sigmoid(Var x) {
    const Tensor& X = nodes_[x.id].value;
    Tensor out(X.rows(), X.cols());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = 1.0 / (1.0 + std::exp(-X[i]));
    int ix = x.id;
    Var y = push(std::move(out), nullptr);
    int iy = y.id;
    nodes_[iy].back = [ix, iy](Tape& t) {
        const Tensor& gy = t.nodes_[iy].grad;
        const Tensor& vy = t.nodes_[iy].value;
        Tensor& gx = t.grad_buf(ix);
        for (std::size_t i = 0; i < gy.size(); ++i) gx[i] += gy[i] * vy[i] * (1.0 - vy[i]);
    };
    return y;
}

Var Tape::tanh(Var x) {
    const Tensor& X = nodes_[x.id].value;
    Tensor out(X.rows(), X.cols());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(X[i]);
    int ix = x.id;
    Var y = push(std::move(out), nullptr);
    int iy = y.id;
    nodes_[iy].back = [ix, iy](Tape& t) {
        const Tensor& gy = t.nodes_[iy].grad;
        const Tensor& vy = t.nodes_[iy].value;
        Tensor& gx = t.grad_buf(ix);
        for (std::size_t i = 0; i < gy.size(); ++i) gx[i] += gy[i] * (1.0 - vy[i] * vy[i]);
    };
    return y;
}

Var Tape::concat(int axis, const std::vector<Var>& parts) {
    if (parts.empty()) throw std::invalid_argument("concat: empty part list");
    if (axis != 0 && axis != 1) throw std::invalid_argument("concat: axis must be 0 or 1");
    const Tensor& first = nodes_[parts[0].id].value;
    int rows = axis == 0 ? 0 : first.rows();
    int cols = axis == 1 ? 0 : first.cols();
    for (auto v : parts) {
        const Tensor& p = nodes_[v.id].value;
        if (axis == 1) {
            if (p.rows() != rows) shape_error("concat cols", first, p);
            cols += p.cols();
        } else {
            if (p.cols() != cols) shape_error("concat rows", first, p);
            rows += p.rows();
        }
    }
    Tensor out(rows, cols);
    std::vector<int> ids;
    ids.reserve(parts.size());
    for (auto v : parts) ids.push_back(v.id);

    if (axis == 1) {
        int c0 = 0;
        for (auto id : ids) {
            const Tensor& p = nodes_[id].value;
            for (int r = 0; r < p.rows(); ++r)
                for (int c = 0; c < p.cols(); ++c) out.at(r, c0 + c) = p.at(r, c);
            c0 += p.cols();
        }
    } else {
        int r0 = 0;
        for (auto id : ids) {
            const Tensor& p = nodes_[id].value;
            for (int r = 0; r < p.rows(); ++r)
                for (int c = 0; c < p.cols(); ++c) out.at(r0 + r, c) = p.at(r, c);
            r0 += p.rows();
        }
    }

    Var y = push(std::move(out), nullptr);
    int iy = y.id;
    nodes_[iy].back = [ids, iy, axis](Tape& t) {
        const Tensor& gy = t.nodes_[iy].grad;
        int off = 0;
        for (auto id : ids) {
            Tensor& g = t.grad_buf(id);
            if (axis == 1) {
                for (int r = 0; r < g.rows(); ++r)
                    for (int c = 0; c < g.cols(); ++c) g.at(r, c) += gy.at(r, off + c);
                off += g.cols();
            } else {
                for (int r = 0; r < g.rows(); ++r)
                    for (int c = 0; c < g.cols(); ++c) g.at(r, c) += gy.at(off + r, c);
                off += g.rows();
            }
        }
    };
    return y;
}

Var Tape::slice_cols(Var x, int c0, int c1) {
    const Tensor& X = nodes_[x.id].value;
    if (c0 < 0 || c1 > X.cols() || c0 >= c1)
        throw std::invalid_argument("slice_cols: range [" + std::to_string(c0) + "," + std::to_string(c1) +
                                    ") invalid for shape " + X.shape_str());
    Tensor out(X.rows(), c1 - c0);
    for (int r = 0; r < X.rows(); ++r)
        for (int c = c0; c < c1; ++c) out.at(r, c - c0) = X.at(r, c);
    int ix = x.id;
    Var y = push(std::move(out), nullptr);
    int iy = y.id;
    nodes_[iy].back = [ix, iy, c0](Tape& t) {
        const Tensor& gy = t.nodes_[iy].grad;
        Tensor& gx = t.grad_buf(ix);
        for (int r = 0; r < gy.rows(); ++r)
            for (int c = 0; c < gy.cols(); ++c) gx.at(r, c0 + c) += gy.at(r, c);
    };
    return y;
}

Var Tape::row_normalize_apply(const SparseAdjacency* adj, Var x, bool self_only) {
    const Tensor& X = nodes_[x.id].value;
    if (adj->n != X.rows())
        throw std::invalid_argument("row_normalize_apply: graph has " + std::to_string(adj->n) +
                                    " reaches, tensor shape " + X.shape_str());
    Tensor out(X.rows(), X.cols());
    const int d = X.cols();
    if (self_only) {
        out = X;
    } else {
        for (int i = 0; i < adj->n; ++i) {
            double inv_deg = 1.0 / adj->degree(i);
            for (int c = 0; c < d; ++c) out.at(i, c) = X.at(i, c);
            for (int e = adj->offsets[i]; e < adj->offsets[i + 1]; ++e) {
                int j = adj->upstream[e];
                for (int c = 0; c < d; ++c) out.at(i, c) += X.at(j, c);
            }
            for (int c = 0; c < d; ++c) out.at(i, c) *= inv_deg;
        }
    }
    int ix = x.id;
    Var y = push(std::move(out), nullptr);
    int iy = y.id;
    nodes_[iy].back = [ix, iy, adj, self_only](Tape& t) {
        const Tensor& gy = t.nodes_[iy].grad;
        Tensor& gx = t.grad_buf(ix);
        const int d = gy.cols();
        if (self_only) {
            for (std::size_t i = 0; i < gy.size(); ++i) gx[i] += gy[i];
            return;
        }
        for (int i = 0; i < adj->n; ++i) {
            double inv_deg = 1.0 / adj->degree(i);
            for (int c = 0; c < d; ++c) gx.at(i, c) += inv_deg * gy.at(i, c);
            for (int e = adj->offsets[i]; e < adj->offsets[i + 1]; ++e) {
                int j = adj->upstream[e];
                for (int c = 0; c < d; ++c) gx.at(j, c) += inv_deg * gy.at(i, c);
            }
        }
    };
    return y;
}

Var Tape::add_n(const std::vector<Var>& parts) {
    if (parts.empty()) throw std::invalid_argument("add_n: empty part list");
    const Tensor& first = nodes_[parts[0].id].value;
    Tensor out(first.rows(), first.cols());
    std::vector<int> ids;
    ids.reserve(parts.size());
    for (auto v : parts) {
        const Tensor& p = nodes_[v.id].value;
        if (!p.same_shape(first)) shape_error("add_n", first, p);
        for (std::size_t i = 0; i < out.size(); ++i) out[i] += p[i];
        ids.push_back(v.id);
    }
    Var y = push(std::move(out), nullptr);
    int iy = y.id;
    nodes_[iy].back = [ids, iy](Tape& t) {
        const Tensor& gy = t.nodes_[iy].grad;
        for (auto id : ids) {
            Tensor& g = t.grad_buf(id);
            for (std::size_t i = 0; i < gy.size(); ++i) g[i] += gy[i];
        }
    };
    return y;
}

Var Tape::sum(Var x) {
    const Tensor& X = nodes_[x.id].value;
    double s = 0.0;
    for (std::size_t i = 0; i < X.size(); ++i) s += X[i];
    int ix = x.id;
    Var y = push(Tensor::scalar(s), nullptr);
    int iy = y.id;
    nodes_[iy].back = [ix, iy](Tape& t) {
        double g = t.nodes_[iy].grad[0];
        Tensor& gx = t.grad_buf(ix);
        for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g;
    };
    return y;
}

Var Tape::mean_square(Var x) {
    const Tensor& X = nodes_[x.id].value;
    double s = 0.0;
    for (std::size_t i = 0; i < X.size(); ++i) s += X[i] * X[i];
    double inv_n = 1.0 / static_cast<double>(X.size());
    int ix = x.id;
    Var y = push(Tensor::scalar(s * inv_n), nullptr);
    int iy = y.id;
    nodes_[iy].back = [ix, iy, inv_n](Tape& t) {
        double g = t.nodes_[iy].grad[0];
        const Tensor& vx = t.nodes_[ix].value;
        Tensor& gx = t.grad_buf(ix);
        for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += 2.0 * inv_n * vx[i] * g;
    };
    return y;
}

Var Tape::sum_squares(Var x) {
    const Tensor& X = nodes_[x.id].value;
    double s = 0.0;
    for (std::size_t i = 0; i < X.size(); ++i) s += X[i] * X[i];
    int ix = x.id;
    Var y = push(Tensor::scalar(s), nullptr);
    int iy = y.id;
    nodes_[iy].back = [ix, iy](Tape& t) {
        double g = t.nodes_[iy].grad[0];
        const Tensor& vx = t.nodes_[ix].value;
        Tensor& gx = t.grad_buf(ix);
        for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += 2.0 * vx[i] * g;
    };
    return y;
}

void Tape::backward(Var loss) {
    if (backward_done_)
        throw std::runtime_error("Tape::backward called twice without reset");
    const Tensor& L = nodes_[loss.id].value;
    if (L.size() != 1)
        throw std::invalid_argument("Tape::backward: loss must be scalar, got " + L.shape_str());
    backward_done_ = true;
    grad_buf(loss.id)[0] = 1.0;
    for (int i = loss.id; i >= 0; --i) {
        if (nodes_[i].grad.size() == 0) continue; // nothing flowed here
        if (nodes_[i].back) nodes_[i].back(*this);
    }
    // parameters not on the path keep an all-zero gradient
    for (auto& n : nodes_)
        if (n.grad.size() == 0 && n.value.size() != 0) n.grad = Tensor::zeros(n.value.rows(), n.value.cols());
}

void Tape::reset() {
    nodes_.clear();
    backward_done_ = false;
}

} // namespace ad
} // namespace rivercast
