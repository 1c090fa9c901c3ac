#ifndef SMAC_LAYERS_HPP
#define SMAC_LAYERS_HPP

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "rng.hpp"
#include "tape.hpp"

namespace smac {

// Flat, construction-ordered registry of every Parameter and stat buffer in
// a model. The order fixes checkpoint layout and optimizer iteration order.
struct ParamRegistry {
    std::vector<Parameter*> params;
    std::vector<std::pair<std::string, Tensor*>> buffers;

    void add(Parameter& p) { params.push_back(&p); }
    void add_buffer(std::string name, Tensor& t) { buffers.emplace_back(std::move(name), &t); }

    Parameter* find(const std::string& name) const {
        for (Parameter* p : params)
            if (p->name == name) return p;
        return nullptr;
    }
};

// Zero-mean uniform with fan-in scaling.
inline Tensor uniform_init(std::vector<int> shape, int fan_in, Rng& rng) {
    Tensor t(std::move(shape));
    const double bound = std::sqrt(6.0 / fan_in);
    for (int64_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform(-bound, bound);
    return t;
}

struct Conv2dLayer {
    Parameter w, b;
    int stride = 1;
    int dilation = 1;
    bool with_bias = true; // convs feeding BN drop the bias (BN beta covers it)

    Conv2dLayer() = default;
    Conv2dLayer(const std::string& name, int c_in, int c_out, int k, int stride_, int dilation_,
                Rng& rng, bool with_bias_ = true)
        : w(name + ".w", uniform_init({c_out, c_in, k, k}, c_in * k * k, rng)),
          b(name + ".b", Tensor::zeros({c_out})),
          stride(stride_),
          dilation(dilation_),
          with_bias(with_bias_) {}

    Var apply(Tape& t, Var x) {
        return t.conv2d(x, t.param(w), with_bias ? t.param(b) : Var{}, stride, dilation);
    }

    void collect(ParamRegistry& r) {
        r.add(w);
        if (with_bias) r.add(b);
    }
};

struct BatchNorm2dLayer {
    Parameter gamma, beta;
    Tensor run_mean, run_var;
    std::string name;

    BatchNorm2dLayer() = default;
    BatchNorm2dLayer(const std::string& name_, int c)
        : gamma(name_ + ".gamma", Tensor::full({c}, 1.0)),
          beta(name_ + ".beta", Tensor::zeros({c})),
          run_mean(Tensor::zeros({c})),
          run_var(Tensor::full({c}, 1.0)),
          name(name_) {}

    Var apply(Tape& t, Var x, bool train) {
        return t.batchnorm(x, t.param(gamma), t.param(beta), run_mean, run_var, train);
    }

    void collect(ParamRegistry& r) {
        r.add(gamma);
        r.add(beta);
        r.add_buffer(name + ".run_mean", run_mean);
        r.add_buffer(name + ".run_var", run_var);
    }
};

// 3x3 (or 1x1) conv -> BN -> ReLU, the standard block of the network.
struct ConvBnRelu {
    Conv2dLayer conv;
    BatchNorm2dLayer bn;

    ConvBnRelu() = default;
    ConvBnRelu(const std::string& name, int c_in, int c_out, int k, int stride, int dilation,
               Rng& rng)
        : conv(name, c_in, c_out, k, stride, dilation, rng, /*with_bias=*/false),
          bn(name + ".bn", c_out) {}

    Var apply(Tape& t, Var x, bool train) { return t.relu(bn.apply(t, conv.apply(t, x), train)); }

    void collect(ParamRegistry& r) {
        conv.collect(r);
        bn.collect(r);
    }
};

struct LinearLayer {
    Parameter w, b;

    LinearLayer() = default;
    LinearLayer(const std::string& name, int in, int out, Rng& rng)
        : w(name + ".w", uniform_init({out, in}, in, rng)), b(name + ".b", Tensor::zeros({out})) {}

    Var apply(Tape& t, Var x) { return t.linear(x, t.param(w), t.param(b)); }

    void collect(ParamRegistry& r) {
        r.add(w);
        r.add(b);
    }
};

} // namespace smac

#endif
