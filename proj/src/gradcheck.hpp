#ifndef SMAC_GRADCHECK_HPP
#define SMAC_GRADCHECK_HPP

#include <functional>
#include <string>
#include <vector>

#include "tape.hpp"

namespace smac {

struct GradCheckReport {
    double max_rel_err = 0.0;
    bool pass = false;
    int64_t n_checked = 0;
    std::string worst; // "param[index]" of the worst element
};

// Central-difference check of reverse-mode gradients.
//
// `run(with_grad)` must rebuild the forward pass from the current values of
// `params` on a fresh tape and return the scalar loss; when `with_grad` is
// true it must also run backward so that each param's grad holds the analytic
// gradient (grads are zeroed here before that call). The finite-difference
// probe perturbs param values in place and restores them.
//
// Relative error uses max(|analytic|, |numeric|, 1e-8) as denominator.
GradCheckReport gradcheck(const std::function<double(bool with_grad)>& run,
                          const std::vector<Parameter*>& params,
                          double h = 1e-6, double tol = 1e-4,
                          int64_t max_elements_per_param = -1);

} // namespace smac

#endif
