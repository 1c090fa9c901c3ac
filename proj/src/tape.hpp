#ifndef SMAC_TAPE_HPP
#define SMAC_TAPE_HPP

#include <deque>
#include <functional>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "tensor.hpp"

namespace smac {

// Learnable weight with co-located gradient and SGD momentum buffers.
struct Parameter {
    std::string name;
    Tensor value;
    Tensor grad;
    Tensor momentum;
    bool trainable = true;

    Parameter() = default;
    Parameter(std::string n, Tensor v)
        : name(std::move(n)),
          value(std::move(v)),
          grad(Tensor::zeros(value.shape())),
          momentum(Tensor::zeros(value.shape())) {}

    void zero_grad() { grad.fill(0.0); }
};

// Handle to a node on a tape. Valid only for the tape that produced it.
struct Var {
    int id = -1;
    bool valid() const { return id >= 0; }
};

// Reverse-mode tape. Each forward op appends a node holding the output
// tensor and a VJP closure; backward() replays the closures in reverse
// order and accumulates into the participating Parameters' grads.
// A tape (and the Parameters bound to it) belongs to one training context;
// forward+backward is single-threaded within that context.
class Tape {
public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    Var leaf(Tensor t);
    Var param(Parameter& p); // cached: binding the same Parameter twice returns the same Var

    const Tensor& val(Var v) const { return nodes_[static_cast<size_t>(v.id)].out; }

    // Linear algebra
    Var matmul(Var a, Var b);
    Var transpose2d(Var a);
    Var linear(Var x, Var w, Var b); // x flattened to [n], w:[m x n], b:[m] -> [m]

    // Neural-net primitives on [C x H x W]; convs use "same" padding
    Var conv2d(Var x, Var w, Var b, int stride = 1, int dilation = 1);
    Var maxpool(Var x, int kernel, int stride);
    Var avgpool(Var x, int kernel, int stride);
    Var global_avgpool(Var x);
    Var upsample_bilinear(Var x, int out_h, int out_w);
    Var batchnorm(Var x, Var gamma, Var beta, Tensor& run_mean, Tensor& run_var,
                  bool train, double momentum = 0.1, double eps = 1e-5);
    Var concat_ch(const std::vector<Var>& xs);

    // Pointwise / shape
    Var softmax_rows(Var x);
    Var add(Var a, Var b);
    Var sub(Var a, Var b);
    Var mul(Var a, Var b);
    Var scale(Var x, double c);
    Var scale_by(Var x, Var s); // s is a 1-element tensor; gradient flows into s
    Var relu(Var x);
    Var sigmoid(Var x);
    Var exp(Var x);
    Var reshape(Var x, std::vector<int> shape);

    // Reductions / losses
    Var sum(Var x);                           // scalar
    Var bce_mean(Var pred, const Tensor& gt); // scalar; gt entries must be 0/1

    // Accumulates d(loss)/d(p) into every participating Parameter's grad.
    // Repeated calls accumulate; node-local grads are reset per call.
    void backward(Var loss);

    size_t size() const { return nodes_.size(); }

private:
    struct Node {
        Tensor out;
        Tensor grad; // allocated lazily during backward
        bool touched = false;
        std::function<void()> vjp; // empty for constant leaves
        Parameter* bound = nullptr;
    };

    Var push(Tensor out);
    void set_vjp(Var v, std::function<void()> vjp);
    Tensor& grad_of(int id);
    const Tensor& node_grad(int id) const;

    std::deque<Node> nodes_; // deque: val() references stay valid as nodes are appended
    std::unordered_map<const Parameter*, int> param_cache_;
};

// Raw GEMM helpers shared with conv2d.
void gemm_nn(const double* a, const double* b, double* c, int m, int k, int n); // C += A*B
void gemm_tn(const double* a, const double* b, double* c, int m, int k, int n); // C += A^T*B, A is [k x m]
void gemm_nt(const double* a, const double* b, double* c, int m, int k, int n); // C += A*B^T, B is [n x k]

} // namespace smac

#endif
