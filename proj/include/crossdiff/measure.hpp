#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

namespace crossdiff {

/// Uniform cell grid on a bounded interval [left, right].
struct Grid {
    double left = 0.0;
    double right = 1.0;
    int n_cells = 2;
    double h = 0.5;

    double x_center(int j) const { return left + (j + 0.5) * h; }
    double x_edge(int j) const { return left + j * h; }
    double length() const { return right - left; }
    /// Index of the cell containing x, clamped to [0, n_cells-1].
    int cell_of(double x) const;
    bool same_domain(const Grid& other) const;
    bool operator==(const Grid& other) const = default;
};

Grid build_grid(double left, double right, int n_cells);

/// Nonnegative cell-averaged density with a declared total mass.
class DensityField {
  public:
    DensityField() = default;
    /// Mass is computed as h * sum(values); values must be nonnegative.
    DensityField(Grid grid, std::vector<double> values);
    /// Validates that h * sum(values) matches `mass` to 1e-12 relative.
    DensityField(Grid grid, std::vector<double> values, double mass);

    const Grid& grid() const { return grid_; }
    const std::vector<double>& values() const { return values_; }
    double value(int j) const { return values_[j]; }
    double mass() const { return mass_; }
    int size() const { return grid_.n_cells; }

    double max_value() const;
    /// L^p norm of the density over Omega (cellwise, exact for p>=1).
    double lp_norm(double p) const;

    static DensityField zero(Grid grid);
    /// Indicator-style block: total `mass` spread uniformly over [a,b] (clipped to cells).
    static DensityField block(Grid grid, double a, double b, double mass);

  private:
    Grid grid_;
    std::vector<double> values_;
    double mass_ = 0.0;
};

/// Ordered pair of densities sharing one grid.
struct DensityPair {
    DensityField rho1;
    DensityField rho2;

    DensityPair() = default;
    DensityPair(DensityField a, DensityField b);
    const Grid& grid() const { return rho1.grid(); }
    std::vector<double> total() const;
    double total_at(int j) const { return rho1.value(j) + rho2.value(j); }
};

/// Piecewise-linear CDF sampled at cell edges; F(left) = 0, F(right) = mass.
class CdfFunction {
  public:
    CdfFunction(Grid grid, std::vector<double> cumulative);
    const Grid& grid() const { return grid_; }
    /// Cumulative mass at edge j, j in [0, n_cells].
    double at_edge(int j) const { return cumulative_[j]; }
    double mass() const { return cumulative_.back(); }
    double evaluate(double x) const;
    const std::vector<double>& edges() const { return cumulative_; }

  private:
    Grid grid_;
    std::vector<double> cumulative_;
};

CdfFunction cdf(const DensityField& rho);

/// Left-continuous generalized inverse of the CDF; Q(0) and Q(mass) are the
/// support endpoints.
double quantile(const DensityField& rho, double s);

/// Scalar field given by per-cell values (potentials, pressures, ...).
struct PotentialField {
    Grid grid;
    std::vector<double> values;

    PotentialField() = default;
    PotentialField(Grid g, std::vector<double> v);
    double value(int j) const { return values[j]; }
};

/// Monotone transport map sampled on a mass-coordinate grid: for s in
/// [s0, s1] the map carries the uniform source sub-block [x0, x1] affinely
/// onto the uniform target sub-block [y0, y1].
struct TransportMap1D {
    struct Slab {
        double s0, s1;  // mass-coordinate interval
        double x0, x1;  // source positions
        double y0, y1;  // target positions
    };
    double source_mass = 0.0;
    std::vector<Slab> slabs;

    /// Evaluate T at a source position (frozen target value across vacuum).
    double apply(double pos) const;
    void validate() const;
};

/// Everything the JKO inner loop needs to know about the transport of `rho`
/// onto `nu`, computed in one exact sweep over the merged mass breakpoints.
struct TransportAnalysis {
    double w2sq = 0.0;
    /// Kantorovich potential (half cost), phi(left) = 0, at cell centers.
    std::vector<double> phi_center;
    /// Exact per-cell averages of the potential (discrete metric gradient).
    std::vector<double> phi_cellavg;
    /// x - T(x) at cell centers (frozen-T continuation on vacuum cells).
    std::vector<double> displacement_center;
    TransportMap1D map;
};

/// Masses must agree to 1e-10 relative and both be positive.
double w2_squared(const DensityField& rho, const DensityField& nu);
double w2_distance(const DensityField& rho, const DensityField& nu);

TransportAnalysis transport_analysis(const DensityField& rho, const DensityField& nu);
TransportMap1D monotone_map(const DensityField& rho, const DensityField& nu);
PotentialField kantorovich_potential(const DensityField& rho, const DensityField& nu);

/// Mass-conservative deposition of `rho` pushed through `map` onto rho's grid.
/// Images outside the domain pile up at the boundary cell.
DensityField pushforward(const DensityField& rho, const TransportMap1D& map);

/// W2 on the product space: sqrt(W2^2(a1,b1) + W2^2(a2,b2)); zero-mass species
/// are skipped (both sides must agree on which species are empty).
double pair_w2_distance(const DensityPair& a, const DensityPair& b);

}  // namespace crossdiff
