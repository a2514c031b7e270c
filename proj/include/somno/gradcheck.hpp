#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "somno/tensor.hpp"

namespace somno {

struct GradCheckReport {
    double max_rel_err = 0.0;
    bool pass = false;
};

/// Compare backward-pass gradients of a scalar-valued function against
/// central finite differences, elementwise over every input that requires
/// grad. Step is scaled per element: h = h_scale * max(1, |x|); relative
/// error = |a - b| / max(1, |a|, |b|).
inline GradCheckReport grad_check(const std::function<Tensor(const std::vector<Tensor>&)>& fn,
                                  std::vector<Tensor>& inputs, double tol = 1e-5,
                                  double h_scale = 1e-5) {
    for (Tensor& t : inputs) t.zero_grad();
    Tensor loss = fn(inputs);
    if (loss.numel() != 1) throw ShapeError("grad_check: function must return a scalar");
    loss.backward();

    std::vector<std::vector<double>> analytic;
    analytic.reserve(inputs.size());
    for (Tensor& t : inputs) analytic.push_back(t.grad());

    GradCheckReport report;
    NoGradGuard guard;
    for (std::size_t ti = 0; ti < inputs.size(); ++ti) {
        Tensor& t = inputs[ti];
        if (!t.requires_grad()) continue;
        auto& data = t.data();
        for (std::size_t i = 0; i < data.size(); ++i) {
            const double x0 = data[i];
            const double h = h_scale * std::max(1.0, std::abs(x0));
            data[i] = x0 + h;
            const double fp = fn(inputs).item();
            data[i] = x0 - h;
            const double fm = fn(inputs).item();
            data[i] = x0;
            const double numeric = (fp - fm) / (2.0 * h);
            const double a = analytic[ti][i];
            const double rel =
                std::abs(a - numeric) / std::max({1.0, std::abs(a), std::abs(numeric)});
            if (rel > report.max_rel_err) report.max_rel_err = rel;
        }
    }
    report.pass = report.max_rel_err <= tol;
    return report;
}

} // namespace somno
