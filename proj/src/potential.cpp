#include "crossdiff/potential.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace crossdiff {

PotentialSpec::PotentialSpec() : family_("linear"), coeffs_{0.0, 0.0} {}

PotentialSpec PotentialSpec::linear(double a, double b, double left, double right) {
    PotentialSpec p;
    p.family_ = "linear";
    p.coeffs_ = {a, b};
    p.compute_bounds(left, right);
    return p;
}

PotentialSpec PotentialSpec::quadratic(double a, double b, double c, double left, double right) {
    PotentialSpec p;
    p.family_ = "quadratic";
    p.coeffs_ = {a, b, c};
    p.compute_bounds(left, right);
    return p;
}

PotentialSpec PotentialSpec::piecewise_linear(std::vector<double> xs, std::vector<double> ys,
                                              double left, double right) {
    if (xs.size() < 2 || xs.size() != ys.size())
        throw std::invalid_argument("piecewise_linear: need matching lists with >= 2 nodes");
    for (std::size_t i = 1; i < xs.size(); ++i)
        if (!(xs[i] > xs[i - 1]))
            throw std::invalid_argument("piecewise_linear: breakpoints must be strictly increasing");
    PotentialSpec p;
    p.family_ = "piecewise_linear";
    p.xs_ = std::move(xs);
    p.ys_ = std::move(ys);
    p.compute_bounds(left, right);
    return p;
}

double PotentialSpec::value(double x) const {
    if (family_ == "linear") return coeffs_[0] * x + coeffs_[1];
    if (family_ == "quadratic") return (coeffs_[0] * x + coeffs_[1]) * x + coeffs_[2];
    // piecewise-linear, extrapolating with the boundary segments
    const std::size_t n = xs_.size();
    std::size_t i = std::upper_bound(xs_.begin(), xs_.end(), x) - xs_.begin();
    i = std::clamp<std::size_t>(i, 1, n - 1);
    const double t = (x - xs_[i - 1]) / (xs_[i] - xs_[i - 1]);
    return ys_[i - 1] + t * (ys_[i] - ys_[i - 1]);
}

double PotentialSpec::slope(double x) const {
    if (family_ == "linear") return coeffs_[0];
    if (family_ == "quadratic") return 2.0 * coeffs_[0] * x + coeffs_[1];
    const std::size_t n = xs_.size();
    std::size_t i = std::upper_bound(xs_.begin(), xs_.end(), x) - xs_.begin();
    i = std::clamp<std::size_t>(i, 1, n - 1);
    return (ys_[i] - ys_[i - 1]) / (xs_[i] - xs_[i - 1]);
}

double PotentialSpec::curvature(double x) const {
    if (family_ == "quadratic") return 2.0 * coeffs_[0];
    (void)x;
    return 0.0;
}

void PotentialSpec::compute_bounds(double left, double right) {
    std::vector<double> probes = {left, right};
    if (family_ == "quadratic" && coeffs_[0] != 0.0) {
        const double vertex = -coeffs_[1] / (2.0 * coeffs_[0]);
        if (vertex > left && vertex < right) probes.push_back(vertex);
    }
    for (double bx : xs_)
        if (bx > left && bx < right) probes.push_back(bx);
    sup_norm_ = 0.0;
    slope_sup_norm_ = 0.0;
    for (double x : probes) {
        sup_norm_ = std::max(sup_norm_, std::abs(value(x)));
        slope_sup_norm_ = std::max(slope_sup_norm_, std::abs(slope(x)));
    }
}

}  // namespace crossdiff
