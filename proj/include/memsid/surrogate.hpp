#ifndef MEMSID_SURROGATE_HPP
#define MEMSID_SURROGATE_HPP

#include <memsid/plate.hpp>

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace memsid {

/// Affine map taking a raw frequency onto [-1, 1] over the training range.
/// Fitting on scaled inputs keeps the Vandermonde-style matrix conditioned
/// (raw frequencies span ~1e5..1e6 Hz).
struct AxisScale {
    double center = 0.0;
    double half_width = 1.0;

    double scale(double f) const { return (f - center) / half_width; }
};

/// One polynomial surface: a single identified parameter as a tensor-product
/// polynomial of the d scaled combo frequencies. Coefficient layout: flat
/// index = sum_k e_k * (degree+1)^k for exponent tuple (e_0 .. e_{d-1}).
struct PolySurface {
    std::string target;                 // "thickness" | "stress"
    int degree = 0;
    std::vector<AxisScale> input_scale; // size d
    std::vector<double> coefficients;   // size (degree+1)^d

    std::size_t dim() const { return input_scale.size(); }

    void validate() const {
        if (degree < 0 || input_scale.empty())
            throw std::invalid_argument("polynomial surface needs degree >= 0 and >= 1 axis");
        std::size_t expect = 1;
        for (std::size_t k = 0; k < dim(); ++k) expect *= static_cast<std::size_t>(degree + 1);
        if (coefficients.size() != expect)
            throw std::invalid_argument("coefficient count must be (degree+1)^d");
        for (double c : coefficients)
            if (!std::isfinite(c)) throw std::invalid_argument("non-finite coefficient");
    }

    double evaluate(const std::vector<double>& freqs) const {
        if (freqs.size() != dim())
            throw std::invalid_argument("frequency tuple size does not match surface dimension");
        const std::size_t stride = static_cast<std::size_t>(degree + 1);
        // per-axis powers of the scaled inputs
        std::vector<double> powers(dim() * stride);
        for (std::size_t k = 0; k < dim(); ++k) {
            const double u = input_scale[k].scale(freqs[k]);
            powers[k * stride] = 1.0;
            for (std::size_t e = 1; e < stride; ++e)
                powers[k * stride + e] = powers[k * stride + e - 1] * u;
        }
        double value = 0.0;
        for (std::size_t idx = 0; idx < coefficients.size(); ++idx) {
            double term = coefficients[idx];
            std::size_t rest = idx;
            for (std::size_t k = 0; k < dim(); ++k) {
                term *= powers[k * stride + rest % stride];
                rest /= stride;
            }
            value += term;
        }
        return value;
    }
};

/// A size-d subset of the K measured mode positions, in ascending order.
struct FrequencyCombo {
    int combo_index = 0;
    std::vector<int> mode_positions;
};

enum class FitWarningKind { AccuracyNotReached, Oscillation };

struct FitWarning {
    FitWarningKind kind;
    int combo_index = 0;
    std::string target;        // offending surface, empty for combo-level
    double best_error = 0.0;   // achieved error when accuracy was missed
    std::string message;
};

/// Fitted inverse map: per frequency combination, one polynomial surface per
/// identified parameter. Immutable after fitting.
struct InverseSurrogate {
    int mode_count = 0;                 // K
    int param_count = 0;                // d
    double accuracy = 0.0;              // configured target (scale-relative)
    std::vector<std::string> param_names;
    std::vector<double> param_scale;    // error-metric denominator per parameter
    std::vector<double> thickness_grid; // training grids, SI
    std::vector<double> stress_grid;
    std::vector<FrequencyCombo> combos;
    std::vector<std::vector<PolySurface>> surfaces;          // [combo][param]
    std::vector<int> degrees;                                // selected per combo
    std::vector<double> fit_report;                          // per-combo max error
    std::vector<std::vector<std::array<double, 2>>> frequency_domain;  // [combo][axis]{min,max}
    std::vector<FitWarning> warnings;

    bool accepted() const { return warnings.empty(); }

    struct Evaluation {
        std::vector<double> params;  // SI, param_names order
        bool extrapolated = false;
    };

    Evaluation evaluate(int combo_index, const std::vector<double>& freqs) const {
        if (combo_index < 0 || combo_index >= static_cast<int>(combos.size()))
            throw std::invalid_argument("combo index out of range");
        const auto ci = static_cast<std::size_t>(combo_index);
        Evaluation out;
        out.params.reserve(surfaces[ci].size());
        for (const auto& surf : surfaces[ci]) out.params.push_back(surf.evaluate(freqs));
        for (std::size_t k = 0; k < freqs.size(); ++k)
            if (freqs[k] < frequency_domain[ci][k][0] || freqs[k] > frequency_domain[ci][k][1])
                out.extrapolated = true;
        return out;
    }
};

namespace detail {

/// All C(K, d) ascending index subsets, lexicographic order.
inline std::vector<FrequencyCombo> enumerate_combos(int k, int d) {
    std::vector<FrequencyCombo> combos;
    std::vector<int> pick(static_cast<std::size_t>(d));
    for (int i = 0; i < d; ++i) pick[static_cast<std::size_t>(i)] = i;
    int index = 0;
    while (true) {
        combos.push_back({index++, pick});
        int pos = d - 1;
        while (pos >= 0 && pick[static_cast<std::size_t>(pos)] == k - d + pos) --pos;
        if (pos < 0) break;
        ++pick[static_cast<std::size_t>(pos)];
        for (int j = pos + 1; j < d; ++j)
            pick[static_cast<std::size_t>(j)] = pick[static_cast<std::size_t>(j - 1)] + 1;
    }
    return combos;
}

/// Identified parameters and their per-node values, derived from which grid
/// axes actually vary. d = 1 identifies thickness on a fixed-stress matrix.
struct ParamLayout {
    std::vector<std::string> names;
    std::vector<std::vector<double>> node_values;  // [param][node], node = iz*Ns+is
    std::vector<double> scale;
};

inline ParamLayout param_layout(const ParameterMatrix& pm) {
    ParamLayout layout;
    const std::size_t nz = pm.thickness_grid.size(), ns = pm.stress_grid.size();
    auto add = [&](const std::string& name, bool along_z) {
        std::vector<double> vals(nz * ns);
        for (std::size_t iz = 0; iz < nz; ++iz)
            for (std::size_t is = 0; is < ns; ++is)
                vals[iz * ns + is] = along_z ? pm.thickness_grid[iz] : pm.stress_grid[is];
        double scale = 0.0;
        for (double v : vals) scale = std::max(scale, std::abs(v));
        layout.names.push_back(name);
        layout.node_values.push_back(std::move(vals));
        layout.scale.push_back(scale > 0.0 ? scale : 1.0);
    };
    if (nz > 1) add("thickness", true);
    if (ns > 1) add("stress", false);
    if (layout.names.empty())
        throw std::invalid_argument("parameter matrix has no varying axis to identify");
    return layout;
}

inline Eigen::MatrixXd design_matrix(const std::vector<std::vector<double>>& scaled_inputs,
                                     int degree) {
    const std::size_t n = scaled_inputs.size();
    const std::size_t d = scaled_inputs.front().size();
    const std::size_t stride = static_cast<std::size_t>(degree + 1);
    std::size_t nb = 1;
    for (std::size_t k = 0; k < d; ++k) nb *= stride;
    Eigen::MatrixXd a(n, nb);
    for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t idx = 0; idx < nb; ++idx) {
            double term = 1.0;
            std::size_t rest = idx;
            for (std::size_t k = 0; k < d; ++k) {
                const double u = scaled_inputs[r][k];
                std::size_t e = rest % stride;
                rest /= stride;
                for (std::size_t q = 0; q < e; ++q) term *= u;
            }
            a(r, static_cast<Eigen::Index>(idx)) = term;
        }
    }
    return a;
}

}  // namespace detail

/// Midpoint-overshoot oscillation detector: evaluates the surface at the
/// center of every grid cell (frequency tuple = mean of the corner tuples)
/// and flags values leaving the convex range of the corner parameter values
/// by more than accuracy * parameter scale.
inline bool oscillation_check(const PolySurface& surface, const ParameterMatrix& pm,
                              const FrequencyCombo& combo, double accuracy) {
    surface.validate();
    const auto layout = detail::param_layout(pm);
    std::size_t param = layout.names.size();
    for (std::size_t p = 0; p < layout.names.size(); ++p)
        if (layout.names[p] == surface.target) param = p;
    if (param == layout.names.size())
        throw std::invalid_argument("surface target not identified by this parameter matrix");

    const std::size_t nz = pm.thickness_grid.size(), ns = pm.stress_grid.size();
    const double tol = accuracy * layout.scale[param];
    // cells between adjacent nodes; a single-point axis contributes no extent
    const std::size_t dz = nz > 1 ? 1 : 0, ds = ns > 1 ? 1 : 0;
    const std::size_t cells_z = dz ? nz - 1 : 1, cells_s = ds ? ns - 1 : 1;
    for (std::size_t iz = 0; iz < cells_z; ++iz) {
        for (std::size_t is = 0; is < cells_s; ++is) {
            std::vector<std::array<std::size_t, 2>> corners;
            for (std::size_t a = 0; a <= dz; ++a)
                for (std::size_t b = 0; b <= ds; ++b) corners.push_back({iz + a, is + b});
            std::vector<double> mid(combo.mode_positions.size(), 0.0);
            double lo = std::numeric_limits<double>::infinity(), hi = -lo;
            for (const auto& c : corners) {
                for (std::size_t k = 0; k < mid.size(); ++k)
                    mid[k] += pm.at(c[0], c[1], static_cast<std::size_t>(combo.mode_positions[k]));
                const double v = layout.node_values[param][c[0] * ns + c[1]];
                lo = std::min(lo, v);
                hi = std::max(hi, v);
            }
            for (double& m : mid) m /= static_cast<double>(corners.size());
            const double value = surface.evaluate(mid);
            if (value < lo - tol || value > hi + tol) return true;
        }
    }
    return false;
}

/// Fits the inverse polynomial map from a forward parameter matrix. For each
/// frequency combination the lowest tensor degree <= max_degree whose maximum
/// scale-relative training-node error meets `accuracy` is selected (degrees
/// with more coefficients than nodes are skipped). Least squares via
/// column-pivoted QR on [-1,1]-scaled inputs; never normal equations.
/// Accuracy misses and midpoint oscillation are reported as warnings on the
/// result, not exceptions.
inline InverseSurrogate fit_inverse(const ParameterMatrix& pm, double accuracy, int max_degree,
                                    int mode_count = 0) {
    pm.validate();
    if (accuracy <= 0.0) throw std::invalid_argument("accuracy must be positive");
    if (max_degree < 1) throw std::invalid_argument("max_degree must be >= 1");
    const int k = mode_count > 0 ? mode_count : pm.mode_count;
    if (k > pm.mode_count)
        throw std::invalid_argument("requested more modes than the parameter matrix holds");

    const auto layout = detail::param_layout(pm);
    const int d = static_cast<int>(layout.names.size());
    if (k < d)
        throw std::invalid_argument("mode count must be at least the parameter count");

    InverseSurrogate sur;
    sur.mode_count = k;
    sur.param_count = d;
    sur.accuracy = accuracy;
    sur.param_names = layout.names;
    sur.param_scale = layout.scale;
    sur.thickness_grid = pm.thickness_grid;
    sur.stress_grid = pm.stress_grid;
    sur.combos = detail::enumerate_combos(k, d);

    const std::size_t nz = pm.thickness_grid.size(), ns = pm.stress_grid.size();
    const std::size_t n_nodes = nz * ns;

    for (const auto& combo : sur.combos) {
        // training inputs for this combo and their domain box
        std::vector<std::vector<double>> raw(n_nodes, std::vector<double>(combo.mode_positions.size()));
        std::vector<std::array<double, 2>> domain(
            combo.mode_positions.size(),
            {std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity()});
        for (std::size_t iz = 0; iz < nz; ++iz)
            for (std::size_t is = 0; is < ns; ++is)
                for (std::size_t c = 0; c < combo.mode_positions.size(); ++c) {
                    const double f =
                        pm.at(iz, is, static_cast<std::size_t>(combo.mode_positions[c]));
                    raw[iz * ns + is][c] = f;
                    domain[c][0] = std::min(domain[c][0], f);
                    domain[c][1] = std::max(domain[c][1], f);
                }
        std::vector<AxisScale> scales;
        for (const auto& box : domain) {
            const double half = (box[1] - box[0]) / 2.0;
            scales.push_back({(box[0] + box[1]) / 2.0, half > 0.0 ? half : 1.0});
        }
        std::vector<std::vector<double>> scaled = raw;
        for (auto& row : scaled)
            for (std::size_t c = 0; c < row.size(); ++c) row[c] = scales[c].scale(row[c]);

        double best_error = std::numeric_limits<double>::infinity();
        std::vector<PolySurface> best_surfaces;
        int best_degree = 0;
        bool met = false;

        for (int g = 1; g <= max_degree && !met; ++g) {
            std::size_t nb = 1;
            for (int q = 0; q < d; ++q) nb *= static_cast<std::size_t>(g + 1);
            if (nb > n_nodes) break;  // underdetermined, stop escalating

            Eigen::MatrixXd a = detail::design_matrix(scaled, g);
            Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(a);
            if (qr.rank() < static_cast<Eigen::Index>(nb))
                throw std::runtime_error("rank-deficient design matrix for combo " +
                                         std::to_string(combo.combo_index) + " at degree " +
                                         std::to_string(g));
            std::vector<PolySurface> fitted;
            double err = 0.0;
            for (std::size_t p = 0; p < layout.names.size(); ++p) {
                Eigen::VectorXd y(static_cast<Eigen::Index>(n_nodes));
                for (std::size_t r = 0; r < n_nodes; ++r)
                    y(static_cast<Eigen::Index>(r)) = layout.node_values[p][r];
                Eigen::VectorXd coef = qr.solve(y);
                const double resid = (a * coef - y).cwiseAbs().maxCoeff();
                err = std::max(err, resid / layout.scale[p]);
                PolySurface surf;
                surf.target = layout.names[p];
                surf.degree = g;
                surf.input_scale = scales;
                surf.coefficients.assign(coef.data(), coef.data() + coef.size());
                fitted.push_back(std::move(surf));
            }
            if (err < best_error) {
                best_error = err;
                best_surfaces = fitted;
                best_degree = g;
            }
            met = err <= accuracy;
        }
        if (best_surfaces.empty())
            throw std::invalid_argument("grid too small to fit even degree 1");
        if (!met)
            sur.warnings.push_back({FitWarningKind::AccuracyNotReached, combo.combo_index, "",
                                    best_error,
                                    "required accuracy is not reached (best " +
                                        std::to_string(best_error) + ")"});
        for (const auto& surf : best_surfaces)
            if (oscillation_check(surf, pm, combo, accuracy))
                sur.warnings.push_back(
                    {FitWarningKind::Oscillation, combo.combo_index, surf.target, best_error,
                     "oscillation between reference points; recalculate the parameter matrix "
                     "with closer reference points"});
        sur.surfaces.push_back(std::move(best_surfaces));
        sur.degrees.push_back(best_degree);
        sur.fit_report.push_back(best_error);
        sur.frequency_domain.push_back(std::move(domain));
    }
    return sur;
}

}  // namespace memsid

#endif  // MEMSID_SURROGATE_HPP
