#include "crossdiff/measure.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace crossdiff {

namespace {

constexpr double kMassMatchRel = 1e-10;

void require(bool cond, const std::string& msg) {
    if (!cond) throw std::invalid_argument(msg);
}

std::vector<double> cumulative_masses(const DensityField& rho) {
    const Grid& g = rho.grid();
    std::vector<double> cum(g.n_cells + 1);
    cum[0] = 0.0;
    for (int j = 0; j < g.n_cells; ++j) cum[j + 1] = cum[j] + g.h * rho.value(j);
    return cum;
}

/// Leftmost position where the cumulative reaches s (left-continuous inverse).
double quantile_from_cumulative(const Grid& g, const std::vector<double>& values,
                                const std::vector<double>& cum, double s) {
    if (s <= 0.0) {
        for (std::size_t j = 0; j < values.size(); ++j)
            if (values[j] > 0.0) return g.x_edge(static_cast<int>(j));
        return g.left;
    }
    auto it = std::lower_bound(cum.begin(), cum.end(), s);
    if (it == cum.end()) return g.right;
    const int e = static_cast<int>(it - cum.begin());
    if (*it == s || e == 0) return g.x_edge(e);
    return g.x_edge(e - 1) + (s - cum[e - 1]) / values[e - 1];
}

void check_transport_pre(const DensityField& rho, const DensityField& nu) {
    require(rho.grid().same_domain(nu.grid()), "transport: fields live on different domains");
    const double ma = rho.mass(), mb = nu.mass();
    require(ma > 0.0 && mb > 0.0, "transport: zero-mass field rejected");
    require(std::abs(ma - mb) <= kMassMatchRel * std::max(ma, mb),
            "transport: mass mismatch exceeds 1e-10 relative");
}

}  // namespace

int Grid::cell_of(double x) const {
    int j = static_cast<int>(std::floor((x - left) / h));
    return std::clamp(j, 0, n_cells - 1);
}

bool Grid::same_domain(const Grid& other) const {
    return left == other.left && right == other.right;
}

Grid build_grid(double left, double right, int n_cells) {
    require(std::isfinite(left) && std::isfinite(right), "build_grid: bounds must be finite");
    require(left < right, "build_grid: inverted or empty bounds (left >= right)");
    require(n_cells >= 2, "build_grid: n_cells must be at least 2");
    Grid g;
    g.left = left;
    g.right = right;
    g.n_cells = n_cells;
    g.h = (right - left) / n_cells;
    return g;
}

DensityField::DensityField(Grid grid, std::vector<double> values)
    : grid_(grid), values_(std::move(values)) {
    require(static_cast<int>(values_.size()) == grid_.n_cells,
            "DensityField: values size does not match grid");
    double sum = 0.0;
    for (double v : values_) {
        require(v >= 0.0 && std::isfinite(v), "DensityField: values must be finite and nonnegative");
        sum += v;
    }
    mass_ = grid_.h * sum;
}

DensityField::DensityField(Grid grid, std::vector<double> values, double mass)
    : DensityField(grid, std::move(values)) {
    require(std::abs(mass_ - mass) <= 1e-12 * std::max(mass, 1e-300),
            "DensityField: declared mass does not match cell sum");
    mass_ = mass;
}

double DensityField::max_value() const {
    double m = 0.0;
    for (double v : values_) m = std::max(m, v);
    return m;
}

double DensityField::lp_norm(double p) const {
    if (std::isinf(p)) return max_value();
    double acc = 0.0;
    for (double v : values_) acc += std::pow(v, p);
    return std::pow(grid_.h * acc, 1.0 / p);
}

DensityField DensityField::zero(Grid grid) {
    return DensityField(grid, std::vector<double>(grid.n_cells, 0.0));
}

DensityField DensityField::block(Grid grid, double a, double b, double mass) {
    require(a < b, "block: empty interval");
    const double tol = 1e-12 * grid.length();
    require(a >= grid.left - tol && b <= grid.right + tol, "block: interval outside the domain");
    require(mass > 0.0, "block: mass must be positive");
    const double density = mass / (b - a);
    std::vector<double> vals(grid.n_cells, 0.0);
    for (int j = 0; j < grid.n_cells; ++j) {
        const double lo = std::max(a, grid.x_edge(j));
        const double hi = std::min(b, grid.x_edge(j + 1));
        if (hi > lo) vals[j] = density * (hi - lo) / grid.h;
    }
    return DensityField(grid, std::move(vals));
}

DensityPair::DensityPair(DensityField a, DensityField b) : rho1(std::move(a)), rho2(std::move(b)) {
    require(rho1.grid() == rho2.grid(), "DensityPair: species must share one grid");
}

std::vector<double> DensityPair::total() const {
    std::vector<double> t(rho1.values());
    for (int j = 0; j < rho2.size(); ++j) t[j] += rho2.value(j);
    return t;
}

CdfFunction::CdfFunction(Grid grid, std::vector<double> cumulative)
    : grid_(grid), cumulative_(std::move(cumulative)) {
    require(static_cast<int>(cumulative_.size()) == grid_.n_cells + 1,
            "CdfFunction: edge count mismatch");
    require(cumulative_.front() == 0.0, "CdfFunction: F(left) must be 0");
    for (std::size_t i = 1; i < cumulative_.size(); ++i)
        require(cumulative_[i] >= cumulative_[i - 1], "CdfFunction: must be nondecreasing");
}

double CdfFunction::evaluate(double x) const {
    if (x <= grid_.left) return 0.0;
    if (x >= grid_.right) return cumulative_.back();
    const int j = grid_.cell_of(x);
    const double frac = (x - grid_.x_edge(j)) / grid_.h;
    return cumulative_[j] + frac * (cumulative_[j + 1] - cumulative_[j]);
}

CdfFunction cdf(const DensityField& rho) {
    require(rho.mass() > 0.0, "cdf: zero-mass field rejected");
    return CdfFunction(rho.grid(), cumulative_masses(rho));
}

double quantile(const DensityField& rho, double s) {
    require(rho.mass() > 0.0, "quantile: zero-mass field rejected");
    const double tol = 1e-12 * rho.mass();
    require(s >= -tol && s <= rho.mass() + tol, "quantile: s outside [0, mass]");
    s = std::clamp(s, 0.0, rho.mass());
    return quantile_from_cumulative(rho.grid(), rho.values(), cumulative_masses(rho), s);
}

PotentialField::PotentialField(Grid g, std::vector<double> v) : grid(g), values(std::move(v)) {
    require(static_cast<int>(values.size()) == grid.n_cells, "PotentialField: size mismatch");
    for (double x : values) require(std::isfinite(x), "PotentialField: values must be finite");
}

double TransportMap1D::apply(double pos) const {
    if (slabs.empty()) return pos;
    if (pos <= slabs.front().x0) return slabs.front().y0;
    for (const Slab& sl : slabs) {
        if (pos <= sl.x1) {
            if (pos < sl.x0 || sl.x1 <= sl.x0) return sl.y0;
            const double t = (pos - sl.x0) / (sl.x1 - sl.x0);
            return sl.y0 + t * (sl.y1 - sl.y0);
        }
    }
    return slabs.back().y1;
}

void TransportMap1D::validate() const {
    double ps = -std::numeric_limits<double>::infinity();
    double px = ps, py = ps;
    for (const Slab& sl : slabs) {
        const double tol = 1e-9 * (1.0 + std::abs(sl.x1) + std::abs(sl.y1));
        if (!(sl.s1 >= sl.s0 && sl.s0 >= ps - 1e-12 * (1.0 + source_mass)))
            throw std::invalid_argument("TransportMap1D: mass breakpoints not increasing");
        if (sl.x0 < px - tol || sl.x1 < sl.x0 - tol || sl.y0 < py - tol || sl.y1 < sl.y0 - tol)
            throw std::invalid_argument("TransportMap1D: non-monotone map samples");
        ps = sl.s1;
        px = sl.x1;
        py = sl.y1;
    }
}

namespace {

/// Shared sweep over the merged mass breakpoints of (rho, nu). Computes the
/// exact W2^2 and, if `full` is set, the Kantorovich potential data and the
/// monotone map slabs.
TransportAnalysis sweep(const DensityField& rho, const DensityField& nu, bool full) {
    check_transport_pre(rho, nu);
    const Grid& g = rho.grid();
    const Grid& gt = nu.grid();
    const int n = g.n_cells;
    const int nt = gt.n_cells;
    const std::vector<double> A = cumulative_masses(rho);
    const std::vector<double> B = cumulative_masses(nu);
    const double M = std::min(A[n], B[nt]);

    TransportAnalysis out;
    out.map.source_mass = M;
    if (full) {
        out.phi_center.assign(n, 0.0);
        out.phi_cellavg.assign(n, 0.0);
        out.displacement_center.assign(n, 0.0);
        out.map.slabs.reserve(static_cast<std::size_t>(n + nt));
    }

    int k = 0;        // current target cell
    double phi = 0.0; // potential value at the current sweep position
    double s = 0.0;   // processed mass

    for (int j = 0; j < n; ++j) {
        const double xa = g.x_edge(j);
        const double xb = (j + 1 == n) ? g.right : g.x_edge(j + 1);
        const double xc = g.x_center(j);
        const double rj = rho.value(j);
        double x = xa;
        double cell_int = 0.0;
        bool center_done = false;

        // Advance over one affine piece [x, x1] of the integrand u - T(u).
        auto advance = [&](double x1, double d0, double d1) {
            const double w = x1 - x;
            if (w <= 0.0) return;
            if (full) {
                if (!center_done && xc <= x1) {
                    const double dx = xc - x;
                    out.phi_center[j] = phi + d0 * dx + (d1 - d0) * dx * dx / (2.0 * w);
                    out.displacement_center[j] = d0 + (d1 - d0) * dx / w;
                    center_done = true;
                }
                cell_int += phi * w + w * w * (2.0 * d0 + d1) / 6.0;
            }
            phi += w * (d0 + d1) / 2.0;
            x = x1;
        };

        if (rj <= 0.0 || s >= M) {
            // Vacuum cell (or dust past the common mass): T frozen at Q_nu(s).
            const double ystar =
                quantile_from_cumulative(gt, nu.values(), B, std::min(s, B[nt]));
            advance(xb, xa - ystar, xb - ystar);
        } else {
            const double Aj1 = std::min(A[j + 1], M);
            while (s < Aj1) {
                while (k < nt - 1 && B[k + 1] <= s) ++k;
                double s_next = std::min(Aj1, B[k + 1]);
                if (s_next <= s) s_next = Aj1;  // float dust guard
                const double x0 = xa + (s - A[j]) / rj;
                const double x1 = xa + (s_next - A[j]) / rj;
                const double nk = nu.value(k);
                double y0, y1;
                if (nk > 0.0) {
                    y0 = gt.x_edge(k) + (s - B[k]) / nk;
                    y1 = gt.x_edge(k) + (s_next - B[k]) / nk;
                } else {
                    y0 = y1 = quantile_from_cumulative(gt, nu.values(), B, s);
                }
                const double d0 = x0 - y0;
                const double d1 = x1 - y1;
                const double dm = s_next - s;
                out.w2sq += dm * (d0 * d0 + d0 * d1 + d1 * d1) / 3.0;
                if (full) out.map.slabs.push_back({s, s_next, x0, x1, y0, y1});
                advance(x1, d0, d1);
                s = s_next;
            }
            if (x < xb) {
                // Trailing sliver (mass exhausted inside the cell).
                const double ystar =
                    quantile_from_cumulative(gt, nu.values(), B, std::min(s, B[nt]));
                advance(xb, x - ystar, xb - ystar);
            }
        }
        if (full) {
            if (!center_done) {
                out.phi_center[j] = phi;
                out.displacement_center[j] = 0.0;
            }
            out.phi_cellavg[j] = cell_int / g.h;
        }
    }
    return out;
}

}  // namespace

double w2_squared(const DensityField& rho, const DensityField& nu) {
    return sweep(rho, nu, /*full=*/false).w2sq;
}

double w2_distance(const DensityField& rho, const DensityField& nu) {
    return std::sqrt(std::max(0.0, w2_squared(rho, nu)));
}

TransportAnalysis transport_analysis(const DensityField& rho, const DensityField& nu) {
    return sweep(rho, nu, /*full=*/true);
}

TransportMap1D monotone_map(const DensityField& rho, const DensityField& nu) {
    return sweep(rho, nu, /*full=*/true).map;
}

PotentialField kantorovich_potential(const DensityField& rho, const DensityField& nu) {
    return PotentialField(rho.grid(), sweep(rho, nu, /*full=*/true).phi_center);
}

DensityField pushforward(const DensityField& rho, const TransportMap1D& map) {
    map.validate();
    const Grid& g = rho.grid();
    const int n = g.n_cells;
    std::vector<double> vals(n, 0.0);
    const double atom_width = 1e-14 * g.length();
    for (const TransportMap1D::Slab& sl : map.slabs) {
        const double w = sl.s1 - sl.s0;
        if (w <= 0.0) continue;
        const double p = sl.y0;
        const double q = sl.y1;
        if (q - p <= atom_width) {
            vals[g.cell_of(std::clamp(0.5 * (p + q), g.left, g.right))] += w / g.h;
            continue;
        }
        const int c0 = g.cell_of(std::clamp(p, g.left, g.right));
        const int c1 = g.cell_of(std::clamp(q, g.left, g.right));
        for (int c = c0; c <= c1; ++c) {
            const double lo = (c == 0) ? p : std::max(p, g.x_edge(c));
            const double hi = (c == n - 1) ? q : std::min(q, g.x_edge(c + 1));
            if (hi > lo) vals[c] += w * (hi - lo) / (q - p) / g.h;
        }
    }
    return DensityField(g, std::move(vals));
}

double pair_w2_distance(const DensityPair& a, const DensityPair& b) {
    double acc = 0.0;
    const bool has1 = a.rho1.mass() > 0.0 || b.rho1.mass() > 0.0;
    const bool has2 = a.rho2.mass() > 0.0 || b.rho2.mass() > 0.0;
    if (has1) acc += w2_squared(a.rho1, b.rho1);
    if (has2) acc += w2_squared(a.rho2, b.rho2);
    return std::sqrt(std::max(0.0, acc));
}

}  // namespace crossdiff
