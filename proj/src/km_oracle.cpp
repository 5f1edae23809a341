#include "genweb/km_oracle.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace genweb::km {

void gauss_legendre(int n, std::vector<double>& nodes, std::vector<double>& weights) {
    nodes.resize(static_cast<std::size_t>(n));
    weights.resize(static_cast<std::size_t>(n));
    const double eps = 1e-15;
    const int m = (n + 1) / 2;
    for (int i = 0; i < m; ++i) {
        // Newton iteration from the Chebyshev estimate
        double x = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
        double pp = 0.0;
        for (int it = 0; it < 100; ++it) {
            double p0 = 1.0, p1 = 0.0;
            for (int j = 0; j < n; ++j) {
                double p2 = p1;
                p1 = p0;
                p0 = ((2.0 * j + 1.0) * x * p1 - j * p2) / (j + 1.0);
            }
            pp = n * (x * p0 - p1) / (x * x - 1.0);
            double dx = p0 / pp;
            x -= dx;
            if (std::abs(dx) < eps) break;
        }
        nodes[static_cast<std::size_t>(i)] = -x;
        nodes[static_cast<std::size_t>(n - 1 - i)] = x;
        double w = 2.0 / ((1.0 - x * x) * pp * pp);
        weights[static_cast<std::size_t>(i)] = w;
        weights[static_cast<std::size_t>(n - 1 - i)] = w;
    }
}

namespace {

inline double heat_kernel(double t, double x, double y) {
    const double d = y - x;
    return std::exp(-d * d / (2.0 * t)) / std::sqrt(2.0 * std::numbers::pi * t);
}

double det_small(const double* a, int n) {
    switch (n) {
        case 1:
            return a[0];
        case 2:
            return a[0] * a[3] - a[1] * a[2];
        case 3:
            return a[0] * (a[4] * a[8] - a[5] * a[7]) -
                   a[1] * (a[3] * a[8] - a[5] * a[6]) +
                   a[2] * (a[3] * a[7] - a[4] * a[6]);
        case 4: {
            double out = 0.0;
            for (int c = 0; c < 4; ++c) {
                double minor[9];
                int mi = 0;
                for (int r = 1; r < 4; ++r)
                    for (int cc = 0; cc < 4; ++cc)
                        if (cc != c) minor[mi++] = a[r * 4 + cc];
                double term = a[c] * det_small(minor, 3);
                out += (c % 2 == 0) ? term : -term;
            }
            return out;
        }
        default:
            throw std::invalid_argument("determinant supported for n <= 4");
    }
}

struct RowSpec {
    double x = 0.0;        // start of this path
    double x_minus = 0.0;  // when differenced: p(x, y) - p(x_minus, y)
    bool differenced = false;
};

struct NestedIntegrator {
    std::vector<RowSpec> rows;
    double t = 1.0;
    double lo = 0.0, hi = 0.0;
    std::vector<double> gl_nodes, gl_weights;

    double leaf(const double* y, int n) const {
        double mat[16];
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) {
                double v = heat_kernel(t, rows[static_cast<std::size_t>(i)].x, y[j]);
                if (rows[static_cast<std::size_t>(i)].differenced)
                    v -= heat_kernel(t, rows[static_cast<std::size_t>(i)].x_minus, y[j]);
                mat[i * n + j] = v;
            }
        return det_small(mat, n);
    }

    // integrate y_level over [lo, upper]; level counts down to 1
    double integrate(int level, double upper, double* y, int n) const {
        const double half = 0.5 * (upper - lo);
        const double mid = 0.5 * (upper + lo);
        if (half <= 0.0) return 0.0;
        double acc = 0.0;
        for (std::size_t q = 0; q < gl_nodes.size(); ++q) {
            y[level - 1] = mid + half * gl_nodes[q];
            double inner = (level == 1) ? leaf(y, n) : integrate(level - 1, y[level - 1], y, n);
            acc += gl_weights[q] * inner;
        }
        return acc * half;
    }

    double run(int nodes, int n) {
        gauss_legendre(nodes, gl_nodes, gl_weights);
        double y[4];
        return integrate(n, hi, y, n);
    }
};

KmResult refine(NestedIntegrator& integ, int n, int min_nodes, int max_nodes, double tol) {
    KmResult res;
    int nodes = std::max(8, min_nodes);
    double prev = integ.run(nodes, n);
    res.value = prev;
    res.nodes = nodes;
    while (nodes * 2 <= max_nodes) {
        nodes *= 2;
        double cur = integ.run(nodes, n);
        res.refine_delta = std::abs(cur - prev);
        res.value = cur;
        res.nodes = nodes;
        if (res.refine_delta <= tol) {
            res.converged = true;
            break;
        }
        prev = cur;
    }
    if (res.refine_delta <= tol) res.converged = true;
    return res;
}

}  // namespace

KmResult non_intersection_prob(const KmQuery& q) {
    const int n = static_cast<int>(q.starts.size());
    if (n < 1 || n > 4)
        throw std::invalid_argument("between 1 and 4 starting points supported");
    for (int i = 1; i < n; ++i) {
        if (q.starts[static_cast<std::size_t>(i)] < q.starts[static_cast<std::size_t>(i - 1)])
            throw std::invalid_argument("starts must be nondecreasing");
        if (!q.allow_coincident &&
            q.starts[static_cast<std::size_t>(i)] == q.starts[static_cast<std::size_t>(i - 1)])
            throw std::invalid_argument("starts must be strictly increasing");
    }
    if (q.t <= 0.0) throw std::invalid_argument("time must be positive");
    if (n == 1) {
        KmResult r;
        r.value = 1.0;
        r.converged = true;
        return r;
    }

    NestedIntegrator integ;
    integ.t = q.t;
    const double spread = q.range_mult * std::sqrt(q.t);
    integ.lo = q.starts.front() - spread;
    integ.hi = q.starts.back() + spread;
    for (double x : q.starts) integ.rows.push_back({x, 0.0, false});

    KmResult res = refine(integ, n, q.min_nodes, q.max_nodes, q.refine_tol);
    if (res.value < 0.0 || res.value > 1.0) {
        res.value = std::clamp(res.value, 0.0, 1.0);
        res.clamped = true;
    }
    return res;
}

KmResult two_point_exact(double t, double delta, double probe_width) {
    if (probe_width <= 0.0) throw std::invalid_argument("probe width must be positive");
    if (t <= 0.0) throw std::invalid_argument("time must be positive");

    // D = P(no intersection from {0, p, delta+p}) - P(no intersection from {0, p, delta});
    // by row multilinearity this is one determinant with the third row differenced.
    NestedIntegrator integ;
    integ.t = t;
    const double spread = 6.0 * std::sqrt(t);
    integ.lo = 0.0 - spread;
    integ.hi = delta + probe_width + spread;
    integ.rows.push_back({0.0, 0.0, false});
    integ.rows.push_back({probe_width, 0.0, false});
    integ.rows.push_back({delta + probe_width, delta, true});

    KmResult res = refine(integ, 3, 48, 1024, std::max(1e-10, 1e-5 * probe_width * probe_width));
    return res;
}

}  // namespace genweb::km
