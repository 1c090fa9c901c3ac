#include "gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace smac {

GradCheckReport gradcheck(const std::function<double(bool with_grad)>& run,
                          const std::vector<Parameter*>& params,
                          double h, double tol, int64_t max_elements_per_param) {
    for (Parameter* p : params) p->zero_grad();
    run(true);

    std::vector<Tensor> analytic;
    analytic.reserve(params.size());
    for (Parameter* p : params) analytic.push_back(p->grad);

    GradCheckReport report;
    for (size_t pi = 0; pi < params.size(); ++pi) {
        Parameter& p = *params[pi];
        int64_t n = p.value.numel();
        if (max_elements_per_param > 0) n = std::min(n, max_elements_per_param);
        for (int64_t i = 0; i < n; ++i) {
            const double saved = p.value[i];
            p.value[i] = saved + h;
            const double up = run(false);
            p.value[i] = saved - h;
            const double down = run(false);
            p.value[i] = saved;
            const double numeric = (up - down) / (2.0 * h);
            const double a = analytic[pi][i];
            const double denom = std::max({std::fabs(a), std::fabs(numeric), 1e-8});
            const double rel = std::fabs(a - numeric) / denom;
            ++report.n_checked;
            if (rel > report.max_rel_err) {
                report.max_rel_err = rel;
                report.worst = p.name + "[" + std::to_string(i) + "]";
            }
        }
    }
    report.pass = report.max_rel_err < tol;
    return report;
}

} // namespace smac
