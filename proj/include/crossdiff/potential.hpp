#pragma once

#include <string>
#include <vector>

namespace crossdiff {

/// Drift potential from a closed set of named families (linear, quadratic,
/// piecewise-linear), with exact value/slope/curvature evaluators and sup
/// bounds precomputed on the working interval.
class PotentialSpec {
  public:
    PotentialSpec();  // zero potential on [0, 1]

    static PotentialSpec linear(double a, double b, double left, double right);
    /// a*x^2 + b*x + c, evaluated in Horner form.
    static PotentialSpec quadratic(double a, double b, double c, double left, double right);
    static PotentialSpec piecewise_linear(std::vector<double> xs, std::vector<double> ys,
                                          double left, double right);
    static PotentialSpec zero(double left, double right) { return linear(0.0, 0.0, left, right); }

    double value(double x) const;
    double slope(double x) const;
    double curvature(double x) const;

    double sup_norm() const { return sup_norm_; }
    double slope_sup_norm() const { return slope_sup_norm_; }

    const std::string& family() const { return family_; }
    const std::vector<double>& coefficients() const { return coeffs_; }
    const std::vector<double>& breakpoints_x() const { return xs_; }
    const std::vector<double>& breakpoints_y() const { return ys_; }

  private:
    std::string family_;
    std::vector<double> coeffs_;      // linear: {a, b}; quadratic: {a, b, c}
    std::vector<double> xs_, ys_;     // piecewise-linear nodes
    double sup_norm_ = 0.0;
    double slope_sup_norm_ = 0.0;

    void compute_bounds(double left, double right);
};

}  // namespace crossdiff
