#include "ccml/bce.hpp"

#include "ccml/error.hpp"

#include <algorithm>
#include <cmath>

namespace ccml {

BceReport bce(const Matrix& probabilities, const Matrix& labels) {
    require_shape(labels, probabilities.rows(), probabilities.cols(), "bce labels");
    require_binary(labels, "bce labels");
    const std::size_t n = probabilities.rows();
    const std::size_t V = probabilities.cols();
    const double inv_v = 1.0 / static_cast<double>(V);

    BceReport r;
    r.loss.assign(n, 0.0);
    r.grad_logits = Matrix(n, V);
    for (std::size_t i = 0; i < n; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < V; ++j) {
            const double p = std::clamp(probabilities(i, j), kProbabilityClamp, 1.0 - kProbabilityClamp);
            const double y = labels(i, j);
            s += y == 1.0 ? std::log(p) : std::log(1.0 - p);
            r.grad_logits(i, j) = (probabilities(i, j) - y) * inv_v;
        }
        r.loss[i] = -s * inv_v;
    }
    return r;
}

} // namespace ccml
