#ifndef MEMSID_PLATE_HPP
#define MEMSID_PLATE_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

namespace memsid {

using std::numbers::pi;

/// Thrown when the compressive in-plane load exceeds the first buckling load
/// (squared mode-1 frequency would go non-positive).
struct buckling_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct MaterialProps {
    double youngs_modulus = 169e9;  // Pa; conventional (100)-silicon plate value
    double poisson_ratio = 0.22;
    double density = 2330.0;  // kg/m^3

    void validate() const {
        if (youngs_modulus <= 0.0)
            throw std::invalid_argument("Young's modulus must be positive");
        if (poisson_ratio < 0.0 || poisson_ratio >= 0.5)
            throw std::invalid_argument("Poisson's ratio must be in [0, 0.5)");
        if (density <= 0.0)
            throw std::invalid_argument("density must be positive");
    }
};

struct MembraneGeometry {
    double side_a = 0.0;       // m
    double side_b = 0.0;       // m
    double thickness_z = 0.0;  // m
    double passivation_thickness = 0.0;     // m
    double passivation_density = 2200.0;    // kg/m^3

    void validate() const {
        if (side_a <= 0.0 || side_b <= 0.0 || thickness_z <= 0.0)
            throw std::invalid_argument("membrane sides and thickness must be positive");
        if (passivation_thickness < 0.0 || passivation_density < 0.0)
            throw std::invalid_argument("passivation layer properties must be non-negative");
    }

    bool is_square() const { return side_a == side_b; }
};

/// Passivation film stress; tensile positive. The film enters the plate model
/// as in-plane tension N = s * t_pass plus added areal mass only (its bending
/// stiffness is neglected, thin-layer assumption).
struct StressState {
    double passivation_stress = 0.0;  // Pa
};

struct ModeIndex {
    int m = 1;  // half-waves along side_a
    int n = 1;  // half-waves along side_b

    void validate() const {
        if (m < 1 || n < 1)
            throw std::invalid_argument("mode indices must be >= 1");
    }
    friend bool operator==(const ModeIndex&, const ModeIndex&) = default;
};

struct ModeFrequency {
    ModeIndex mode;
    double frequency = 0.0;  // Hz
};

/// Lumped piezoresistive bridge: V = gain * supply * (sigma_x - sigma_y) at
/// the resistor location. gain absorbs the piezoresistive coefficient and
/// implantation-depth factor (unit 1/Pa). Location is in fractions of the
/// side lengths.
struct PiezoModel {
    double gain = 7e-10;         // 1/Pa
    double supply_voltage = 5.0;  // V
    double resistor_x_rel = 0.1;
    double resistor_y_rel = 0.5;

    void validate() const {
        if (supply_voltage <= 0.0)
            throw std::invalid_argument("supply voltage must be positive");
        if (resistor_x_rel <= 0.0 || resistor_x_rel >= 1.0 ||
            resistor_y_rel <= 0.0 || resistor_y_rel >= 1.0)
            throw std::invalid_argument("resistor location must be strictly inside the membrane");
    }
};

/// One sensor type: nominal geometry, material and bridge description.
struct SensorDesign {
    std::string name;
    MembraneGeometry membrane;
    MaterialProps material;
    PiezoModel piezo;

    void validate() const {
        membrane.validate();
        material.validate();
        piezo.validate();
    }
};

// --- plate quantities ------------------------------------------------------

inline double bending_rigidity(const MembraneGeometry& g, const MaterialProps& m) {
    const double z = g.thickness_z;
    return m.youngs_modulus * z * z * z / (12.0 * (1.0 - m.poisson_ratio * m.poisson_ratio));
}

inline double areal_density(const MembraneGeometry& g, const MaterialProps& m) {
    return m.density * g.thickness_z + g.passivation_density * g.passivation_thickness;
}

inline double membrane_tension(const MembraneGeometry& g, const StressState& s) {
    return s.passivation_stress * g.passivation_thickness;  // N/m
}

/// kappa_mn = (m pi / a)^2 + (n pi / b)^2
inline double mode_wavenumber_sq(const MembraneGeometry& g, int m, int n) {
    const double km = static_cast<double>(m) * pi / g.side_a;
    const double kn = static_cast<double>(n) * pi / g.side_b;
    return km * km + kn * kn;
}

inline void check_buckling(const MembraneGeometry& g, const MaterialProps& mat,
                           const StressState& s) {
    const double tension = membrane_tension(g, s);
    const double limit = -bending_rigidity(g, mat) * mode_wavenumber_sq(g, 1, 1);
    if (tension <= limit)
        throw buckling_error("compressive in-plane load " + std::to_string(tension) +
                             " N/m at or beyond first buckling load " + std::to_string(limit) + " N/m");
}

namespace detail {
inline double mode_frequency_from_kappa(double kappa, double rigidity, double tension,
                                        double rho_area) {
    const double omega_sq = (rigidity * kappa * kappa + tension * kappa) / rho_area;
    return std::sqrt(omega_sq) / (2.0 * pi);
}
}  // namespace detail

/// First k natural frequencies of the simply supported prestressed plate,
///   f_mn = (1/2pi) sqrt( (D kappa^2 + N kappa) / rho_A ),
/// sorted ascending. Degenerate pairs appear as separate entries with equal
/// frequency; ties are ordered by (m, n).
inline std::vector<ModeFrequency> modal_frequencies(const MembraneGeometry& g,
                                                    const MaterialProps& mat,
                                                    const StressState& s, int k) {
    if (k < 1)
        throw std::invalid_argument("mode count must be >= 1");
    g.validate();
    mat.validate();
    check_buckling(g, mat, s);
    const double rigidity = bending_rigidity(g, mat);
    const double tension = membrane_tension(g, s);
    const double rho_area = areal_density(g, mat);

    // The k smallest kappa all have m, n <= k (kappa is monotone in each index).
    const int bound = k;
    std::vector<ModeFrequency> modes;
    modes.reserve(static_cast<std::size_t>(bound) * bound);
    for (int m = 1; m <= bound; ++m)
        for (int n = 1; n <= bound; ++n) {
            const double kappa = mode_wavenumber_sq(g, m, n);
            modes.push_back({{m, n}, detail::mode_frequency_from_kappa(kappa, rigidity, tension, rho_area)});
        }
    std::sort(modes.begin(), modes.end(), [](const ModeFrequency& a, const ModeFrequency& b) {
        if (a.frequency != b.frequency) return a.frequency < b.frequency;
        if (a.mode.m != b.mode.m) return a.mode.m < b.mode.m;
        return a.mode.n < b.mode.n;
    });
    modes.resize(static_cast<std::size_t>(k));
    return modes;
}

/// Distinct-frequency mode positions: degenerate groups collapse into one
/// entry (a measured spectrum shows one peak per group). `groups[i]` lists
/// the (m, n) members sharing `frequencies[i]`.
struct DistinctModes {
    std::vector<double> frequencies;           // Hz, strictly ascending
    std::vector<std::vector<ModeIndex>> groups;
};

inline DistinctModes distinct_mode_frequencies(const MembraneGeometry& g,
                                               const MaterialProps& mat,
                                               const StressState& s, int count,
                                               double rel_tol = 1e-9) {
    // Raw modes overshoot so that `count` distinct groups survive collapsing.
    const int raw = 2 * count + 2;
    auto modes = modal_frequencies(g, mat, s, raw);
    DistinctModes out;
    for (const auto& mf : modes) {
        if (!out.frequencies.empty() &&
            mf.frequency <= out.frequencies.back() * (1.0 + rel_tol)) {
            out.groups.back().push_back(mf.mode);
            continue;
        }
        if (static_cast<int>(out.frequencies.size()) == count) break;
        out.frequencies.push_back(mf.frequency);
        out.groups.push_back({mf.mode});
    }
    if (static_cast<int>(out.frequencies.size()) < count)
        throw std::invalid_argument("could not collect enough distinct mode frequencies");
    return out;
}

/// Mode shape value sin(m pi x / a) sin(n pi y / b) at an absolute point (m).
inline double mode_amplitude_at_point(const ModeIndex& mode, const MembraneGeometry& g,
                                      double x, double y) {
    mode.validate();
    if (x < 0.0 || x > g.side_a || y < 0.0 || y > g.side_b)
        throw std::invalid_argument("point outside membrane");
    return std::sin(mode.m * pi * x / g.side_a) * std::sin(mode.n * pi * y / g.side_b);
}

/// Value of a truncated Navier series together with the order it used.
struct SeriesValue {
    double value = 0.0;
    int truncation_order = 0;
};

inline constexpr int default_series_order = 99;

/// Static deflection under uniform pressure, Navier double-sine series with
/// tension term; odd m, n up to `order`.
inline SeriesValue static_deflection(const MembraneGeometry& g, const MaterialProps& mat,
                                     const StressState& s, double pressure, double x,
                                     double y, int order = default_series_order) {
    if (pressure < 0.0)
        throw std::invalid_argument("pressure must be >= 0");
    if (x < 0.0 || x > g.side_a || y < 0.0 || y > g.side_b)
        throw std::invalid_argument("point outside membrane");
    g.validate();
    check_buckling(g, mat, s);
    const double rigidity = bending_rigidity(g, mat);
    const double tension = membrane_tension(g, s);
    double w = 0.0;
    for (int m = order - (1 - order % 2); m >= 1; m -= 2) {
        const double sx = std::sin(m * pi * x / g.side_a);
        if (sx == 0.0) continue;
        for (int n = order - (1 - order % 2); n >= 1; n -= 2) {
            const double kappa = mode_wavenumber_sq(g, m, n);
            const double amp = 16.0 * pressure /
                               (pi * pi * m * n * (rigidity * kappa * kappa + tension * kappa));
            w += amp * sx * std::sin(n * pi * y / g.side_b);
        }
    }
    return {w, order};
}

/// Surface bending-stress difference sigma_x - sigma_y = 6 (M_x - M_y) / z^2
/// from the series curvatures; antisymmetric under x <-> y on a square plate.
inline SeriesValue surface_stress_difference(const MembraneGeometry& g,
                                             const MaterialProps& mat, const StressState& s,
                                             double pressure, double x, double y,
                                             int order = default_series_order) {
    if (pressure < 0.0)
        throw std::invalid_argument("pressure must be >= 0");
    if (x < 0.0 || x > g.side_a || y < 0.0 || y > g.side_b)
        throw std::invalid_argument("point outside membrane");
    g.validate();
    check_buckling(g, mat, s);
    const double rigidity = bending_rigidity(g, mat);
    const double tension = membrane_tension(g, s);
    const double z = g.thickness_z;
    double sum = 0.0;
    for (int m = order - (1 - order % 2); m >= 1; m -= 2) {
        const double km = m * pi / g.side_a;
        const double sx = std::sin(km * x);
        if (sx == 0.0) continue;
        for (int n = order - (1 - order % 2); n >= 1; n -= 2) {
            const double kn = n * pi / g.side_b;
            const double kappa = km * km + kn * kn;
            const double amp = 16.0 * pressure /
                               (pi * pi * m * n * (rigidity * kappa * kappa + tension * kappa));
            sum += amp * (km * km - kn * kn) * sx * std::sin(kn * y);
        }
    }
    const double value = 6.0 * rigidity * (1.0 - mat.poisson_ratio) / (z * z) * sum;
    return {value, order};
}

/// Bridge output voltage at the piezoresistor location; linear in pressure.
inline double bridge_voltage(const MembraneGeometry& g, const MaterialProps& mat,
                             const StressState& s, const PiezoModel& piezo, double pressure,
                             int order = default_series_order) {
    piezo.validate();
    const double x = piezo.resistor_x_rel * g.side_a;
    const double y = piezo.resistor_y_rel * g.side_b;
    const auto ds = surface_stress_difference(g, mat, s, pressure, x, y, order);
    return piezo.gain * piezo.supply_voltage * ds.value;
}

// --- parameter matrix ------------------------------------------------------

/// Forward-model grid (thickness, stress) -> distinct modal frequencies.
struct ParameterMatrix {
    std::vector<double> thickness_grid;  // m, ascending
    std::vector<double> stress_grid;     // Pa, ascending
    int mode_count = 0;
    std::vector<double> frequencies;     // [iz][is][mode], Hz
    std::vector<std::vector<ModeIndex>> mode_groups;  // per collapsed position

    double at(std::size_t iz, std::size_t is, std::size_t mode) const {
        return frequencies[(iz * stress_grid.size() + is) * static_cast<std::size_t>(mode_count) + mode];
    }

    /// First collapsed position holding more than one (m, n), if any.
    int degenerate_position() const {
        for (std::size_t i = 0; i < mode_groups.size(); ++i)
            if (mode_groups[i].size() > 1) return static_cast<int>(i);
        return -1;
    }

    void validate() const {
        if (thickness_grid.empty() || stress_grid.empty() || mode_count < 1)
            throw std::invalid_argument("parameter matrix grids must be non-empty");
        if (!std::is_sorted(thickness_grid.begin(), thickness_grid.end()) ||
            !std::is_sorted(stress_grid.begin(), stress_grid.end()))
            throw std::invalid_argument("parameter matrix grids must be ascending");
        if (frequencies.size() != thickness_grid.size() * stress_grid.size() *
                                      static_cast<std::size_t>(mode_count))
            throw std::invalid_argument("parameter matrix frequency array size mismatch");
        for (std::size_t iz = 0; iz < thickness_grid.size(); ++iz)
            for (std::size_t is = 0; is < stress_grid.size(); ++is)
                for (int k = 1; k < mode_count; ++k)
                    if (at(iz, is, static_cast<std::size_t>(k)) <=
                        at(iz, is, static_cast<std::size_t>(k - 1)))
                        throw std::invalid_argument("frequencies not strictly increasing along mode axis");
    }
};

/// Sweeps the forward model over (z_grid x s_grid). Buckling anywhere is
/// reported with the offending grid point.
inline ParameterMatrix build_parameter_matrix(const SensorDesign& design,
                                              const std::vector<double>& z_grid,
                                              const std::vector<double>& s_grid,
                                              int mode_count) {
    if (z_grid.size() < 3)
        throw std::invalid_argument("thickness grid needs >= 3 points");
    if (s_grid.empty())
        throw std::invalid_argument("stress grid must be non-empty");
    if (!std::is_sorted(z_grid.begin(), z_grid.end()) ||
        !std::is_sorted(s_grid.begin(), s_grid.end()))
        throw std::invalid_argument("grids must be ascending");
    if (mode_count < 2)
        throw std::invalid_argument("mode count must exceed the parameter count");
    design.validate();

    ParameterMatrix pm;
    pm.thickness_grid = z_grid;
    pm.stress_grid = s_grid;
    pm.mode_count = mode_count;
    pm.frequencies.reserve(z_grid.size() * s_grid.size() * static_cast<std::size_t>(mode_count));
    for (std::size_t iz = 0; iz < z_grid.size(); ++iz) {
        MembraneGeometry g = design.membrane;
        g.thickness_z = z_grid[iz];
        for (std::size_t is = 0; is < s_grid.size(); ++is) {
            StressState st{s_grid[is]};
            try {
                auto dm = distinct_mode_frequencies(g, design.material, st, mode_count);
                pm.frequencies.insert(pm.frequencies.end(), dm.frequencies.begin(),
                                      dm.frequencies.end());
                if (iz == 0 && is == 0) pm.mode_groups = dm.groups;
            } catch (const buckling_error& e) {
                throw buckling_error("buckling at grid point z=" + std::to_string(z_grid[iz]) +
                                     " m, s=" + std::to_string(s_grid[is]) + " Pa: " + e.what());
            }
        }
    }
    pm.validate();
    return pm;
}

}  // namespace memsid

#endif  // MEMSID_PLATE_HPP
