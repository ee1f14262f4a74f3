#include "irgsfda/numerics/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace irgsfda::numerics {

namespace {

double evaluate(const ScalarFn& f, const Tensor& x) {
    Tape tape;
    return f(tape, tape.constant(x)).item();
}

}  // namespace

GradCheckReport finite_diff_check(const ScalarFn& f, const Tensor& x, double step, double kink_tolerance) {
    std::vector<double> analytic;
    {
        Tape tape;
        Var input = tape.leaf(x);
        Var loss = f(tape, input);
        tape.backward(loss);
        analytic = tape.grad(input);
        if (analytic.empty()) analytic.assign(x.size(), 0.0);
    }

    const double f0 = evaluate(f, x);
    GradCheckReport report;
    Tensor probe = x;
    for (std::size_t i = 0; i < x.size(); ++i) {
        probe[i] = x[i] + step;
        const double fp = evaluate(f, probe);
        probe[i] = x[i] - step;
        const double fm = evaluate(f, probe);
        probe[i] = x[i];

        const double central = (fp - fm) / (2.0 * step);
        const double forward = (fp - f0) / step;
        const double backward = (f0 - fm) / step;
        if (std::abs(forward - backward) > kink_tolerance * std::max(1.0, std::abs(central))) {
            ++report.excluded;
            continue;
        }
        ++report.checked;
        const double err = std::abs(analytic[i] - central) / std::max(1e-8, std::abs(central));
        if (err > report.max_rel_error) {
            report.max_rel_error = err;
            report.worst_index = i;
        }
    }
    return report;
}

}  // namespace irgsfda::numerics
