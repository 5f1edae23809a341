#pragma once

#include <vector>

namespace genweb::km {

struct KmQuery {
    std::vector<double> starts;  // strictly increasing, n <= 4
    double t = 1.0;
    double range_mult = 6.0;  // integration range: [min - m*sqrt(t), max + m*sqrt(t)]
    int min_nodes = 32;
    int max_nodes = 1024;
    double refine_tol = 1e-6;
    bool allow_coincident = false;  // degenerate starts, used by tests only
};

struct KmResult {
    double value = 0.0;
    bool converged = false;
    double refine_delta = 0.0;  // last successive-refinement disagreement
    int nodes = 0;
    bool clamped = false;
};

/// Gauss-Legendre nodes and weights on [-1, 1].
void gauss_legendre(int n, std::vector<double>& nodes, std::vector<double>& weights);

/// Probability that n independent Brownian motions started at the query
/// positions stay ordered (never intersect) up to time t, as the integral of
/// the heat-kernel determinant over the ordered simplex. Nested quadrature
/// with node doubling until successive results agree within refine_tol.
KmResult non_intersection_prob(const KmQuery& q);

/// Finite-probe difference of two three-path non-intersection probabilities;
/// divided by probe_width^2 it converges to the constrained two-point density
/// as probe_width -> 0. Evaluated as a single determinant integral with the
/// third row differenced, which keeps the small result well conditioned.
KmResult two_point_exact(double t, double delta, double probe_width);

}  // namespace genweb::km
