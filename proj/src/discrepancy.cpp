#include "ccml/discrepancy.hpp"

#include "ccml/error.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace ccml {

namespace {

double squared_distance(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    return s;
}

Matrix kernel_matrix(const Matrix& a, const Matrix& b, double inv_two_sigma_sq) {
    Matrix k(a.rows(), b.rows());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t t = 0; t < b.rows(); ++t)
            k(i, t) = std::exp(-squared_distance(a.row(i), b.row(t)) * inv_two_sigma_sq);
    return k;
}

// Mean of the row-major and column-major sums. Transposing K swaps the two
// partial sums, and IEEE addition commutes, so the result is bitwise
// identical for K and K^T.
double transpose_invariant_sum(const Matrix& k) {
    double by_rows = 0.0;
    for (std::size_t i = 0; i < k.rows(); ++i)
        for (std::size_t t = 0; t < k.cols(); ++t) by_rows += k(i, t);
    double by_cols = 0.0;
    for (std::size_t t = 0; t < k.cols(); ++t)
        for (std::size_t i = 0; i < k.rows(); ++i) by_cols += k(i, t);
    return 0.5 * (by_rows + by_cols);
}

} // namespace

void KernelSpec::validate() const {
    if (policy == Bandwidth::fixed && !(sigma > 0.0 && std::isfinite(sigma)))
        throw ValidationError("kernel bandwidth sigma must be > 0, got " + std::to_string(sigma));
}

double median_bandwidth(const Matrix& p, const Matrix& q) {
    std::vector<const double*> rows;
    for (std::size_t i = 0; i < p.rows(); ++i) rows.push_back(p.row(i).data());
    for (std::size_t i = 0; i < q.rows(); ++i) rows.push_back(q.row(i).data());
    const std::size_t h = p.cols();
    std::vector<double> dist;
    dist.reserve(rows.size() * (rows.size() - 1) / 2);
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = i + 1; j < rows.size(); ++j)
            dist.push_back(std::sqrt(squared_distance({rows[i], h}, {rows[j], h})));
    if (dist.empty()) return kMinBandwidth;
    const std::size_t n = dist.size();
    const auto mid = dist.begin() + static_cast<std::ptrdiff_t>(n / 2);
    std::nth_element(dist.begin(), mid, dist.end());
    double med = *mid;
    if (n % 2 == 0) med = 0.5 * (*std::max_element(dist.begin(), mid) + med);
    return std::max(med, kMinBandwidth);
}

MmdResult mmd(const Matrix& p, const Matrix& q, const KernelSpec& kernel) {
    kernel.validate();
    if (p.rows() == 0 || p.cols() == 0)
        throw ValidationError("mmd: sample sets must be non-empty, got " + shape_str(p));
    if (!p.same_shape(q))
        throw ValidationError("mmd: sample sets differ in shape: " + shape_str(p) + " vs " +
                              shape_str(q));

    MmdResult r;
    r.sigma = kernel.policy == KernelSpec::Bandwidth::fixed ? kernel.sigma : median_bandwidth(p, q);
    const double sigma_sq = r.sigma * r.sigma;
    const double inv_two_sigma_sq = 1.0 / (2.0 * sigma_sq);

    const Matrix kpp = kernel_matrix(p, p, inv_two_sigma_sq);
    const Matrix kqq = kernel_matrix(q, q, inv_two_sigma_sq);
    const Matrix kpq = kernel_matrix(p, q, inv_two_sigma_sq);

    const std::size_t m = p.rows();
    const double inv_m2 = 1.0 / static_cast<double>(m * m);
    const double within = transpose_invariant_sum(kpp) + transpose_invariant_sum(kqq);
    const double across = transpose_invariant_sum(kpq);
    r.value = std::max(0.0, (within - 2.0 * across) * inv_m2);

    // grad_p[i] = scale * (sum_t kpq[i,t] (p_i - q_t) - sum_t kpp[i,t] (p_i - p_t)), and
    // symmetrically for q, expanded into row sums and kernel-weighted means.
    const std::size_t h = p.cols();
    const double scale = 2.0 * inv_m2 / sigma_sq;
    r.grad_p = Matrix(m, h);
    r.grad_q = Matrix(m, h);
    std::vector<double> acc_p(h), acc_q(h);
    for (std::size_t i = 0; i < m; ++i) {
        double s_pq = 0.0, s_pp = 0.0, s_qp = 0.0, s_qq = 0.0;
        std::fill(acc_p.begin(), acc_p.end(), 0.0);
        std::fill(acc_q.begin(), acc_q.end(), 0.0);
        for (std::size_t t = 0; t < m; ++t) {
            const double wpq = kpq(i, t), wpp = kpp(i, t), wqp = kpq(t, i), wqq = kqq(i, t);
            s_pq += wpq;
            s_pp += wpp;
            s_qp += wqp;
            s_qq += wqq;
            const double* pt = p.row(t).data();
            const double* qt = q.row(t).data();
            for (std::size_t c = 0; c < h; ++c) {
                acc_p[c] += wpp * pt[c] - wpq * qt[c];
                acc_q[c] += wqq * qt[c] - wqp * pt[c];
            }
        }
        const double* pi = p.row(i).data();
        const double* qi = q.row(i).data();
        double* gp = r.grad_p.row(i).data();
        double* gq = r.grad_q.row(i).data();
        for (std::size_t c = 0; c < h; ++c) {
            gp[c] = scale * (pi[c] * (s_pq - s_pp) + acc_p[c]);
            gq[c] = scale * (qi[c] * (s_qp - s_qq) + acc_q[c]);
        }
    }
    return r;
}

} // namespace ccml
