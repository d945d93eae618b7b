#ifndef MEMSID_STATICS_HPP
#define MEMSID_STATICS_HPP

#include <memsid/plate.hpp>
#include <memsid/response.hpp>
#include <memsid/rng.hpp>
#include <memsid/units.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

namespace memsid {

struct StaticSweepSpec {
    std::vector<double> pressures = {0.0, 0.25e5, 0.5e5, 0.75e5, 1e5};  // Pa
    double noise_eta = 0.01;  // relative multiplicative measurement noise

    void validate() const {
        if (pressures.size() < 2)
            throw std::invalid_argument("static sweep needs at least two pressures");
        if (pressures.front() != 0.0)
            throw std::invalid_argument("static sweep must start at zero pressure");
        for (std::size_t i = 1; i < pressures.size(); ++i)
            if (pressures[i] <= pressures[i - 1])
                throw std::invalid_argument("static sweep pressures must be strictly increasing");
        if (noise_eta < 0.0) throw std::invalid_argument("noise level must be >= 0");
    }
};

struct StaticSweep {
    std::vector<double> pressures;    // Pa
    std::vector<double> deflections;  // m, membrane center
    std::vector<double> voltages;     // V, bridge output

    void validate() const {
        if (pressures.empty() || deflections.size() != pressures.size() ||
            voltages.size() != pressures.size())
            throw std::invalid_argument("static sweep columns must have equal nonzero size");
    }
};

/// Simulated pressure sweep of one die: center deflection and bridge voltage
/// at each pressure, with multiplicative measurement noise. The zero-pressure
/// row is exactly zero before noise (and multiplicative noise keeps it zero).
/// A die without membrane produces an all-zero sweep.
inline StaticSweep simulate_static_sweep(const SensorDesign& design, const DieTruth& truth,
                                         const StaticSweepSpec& spec) {
    spec.validate();
    SplitMix64 rng(substream(truth.rng_seed, seed_salt::static_sweep));
    StaticSweep sweep;
    sweep.pressures = spec.pressures;
    const auto geom = effective_geometry(truth);
    for (double p : spec.pressures) {
        double w = 0.0, v = 0.0;
        if (geom && p > 0.0) {
            w = static_deflection(*geom, design.material, truth.stress, p, geom->side_a / 2.0,
                                  geom->side_b / 2.0)
                    .value;
            v = bridge_voltage(*geom, design.material, truth.stress, design.piezo, p);
        }
        // two draws per row in fixed order, also at p = 0, to keep the
        // stream alignment independent of the pressure values
        const double w_noise = 1.0 + spec.noise_eta * rng.normal();
        const double v_noise = 1.0 + spec.noise_eta * rng.normal();
        sweep.deflections.push_back(w * w_noise);
        sweep.voltages.push_back(v * v_noise);
    }
    return sweep;
}

struct CorrelationReport {
    double fitted_gain = 0.0;             // effective piezo gain after adaptation
    double gain_ratio = 0.0;              // fitted / design gain
    double max_rel_voltage_error = 0.0;   // over nonzero pressures, after adaptation
    double sensitivity = 0.0;             // V/Pa at the adapted gain
};

/// Adapts the piezoresistive gain to a measured sweep by least squares
/// through the origin: G = sum(V_meas * V_model) / sum(V_model^2), with the
/// model evaluated at the identified thickness and calibrated stress. The
/// remaining voltage mismatch and the adapted sensitivity are reported.
inline CorrelationReport adapt_gain(const StaticSweep& measured, const SensorDesign& design,
                                    double identified_thickness, double calibrated_stress) {
    measured.validate();
    if (identified_thickness <= 0.0)
        throw std::invalid_argument("identified thickness must be positive");
    bool any_nonzero = false;
    for (double v : measured.voltages) any_nonzero = any_nonzero || v != 0.0;
    if (!any_nonzero)
        throw std::invalid_argument("measured voltages are all zero; nothing to correlate");

    MembraneGeometry geom = design.membrane;
    geom.thickness_z = identified_thickness;
    const StressState stress{calibrated_stress};

    std::vector<double> model(measured.pressures.size(), 0.0);
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < measured.pressures.size(); ++i) {
        if (measured.pressures[i] > 0.0)
            model[i] = bridge_voltage(geom, design.material, stress, design.piezo,
                                      measured.pressures[i]);
        num += measured.voltages[i] * model[i];
        den += model[i] * model[i];
    }
    if (den == 0.0)
        throw std::invalid_argument("model predicts zero voltage over the whole sweep");

    CorrelationReport rep;
    rep.gain_ratio = num / den;
    rep.fitted_gain = rep.gain_ratio * design.piezo.gain;
    for (std::size_t i = 0; i < measured.pressures.size(); ++i) {
        if (measured.pressures[i] <= 0.0) continue;
        if (measured.voltages[i] == 0.0)
            throw std::invalid_argument("zero measured voltage at nonzero pressure");
        const double err =
            std::abs(rep.gain_ratio * model[i] - measured.voltages[i]) /
            std::abs(measured.voltages[i]);
        rep.max_rel_voltage_error = std::max(rep.max_rel_voltage_error, err);
    }
    // the static model is linear in pressure, so one evaluation gives dV/dp
    const double p_ref = measured.pressures.back();
    rep.sensitivity = rep.gain_ratio *
                      bridge_voltage(geom, design.material, stress, design.piezo, p_ref) / p_ref;
    return rep;
}

inline void dump_static_csv(const StaticSweep& sweep, std::ostream& os) {
    sweep.validate();
    os << "pressure_bar,deflection_um,voltage_mV\n";
    char buf[128];
    for (std::size_t i = 0; i < sweep.pressures.size(); ++i) {
        std::snprintf(buf, sizeof(buf), "%.9g,%.9g,%.9g", units::to_bar(sweep.pressures[i]),
                      units::to_um(sweep.deflections[i]), units::to_mv(sweep.voltages[i]));
        os << buf << '\n';
    }
}

inline void dump_static_csv(const StaticSweep& sweep, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot open " + path + " for writing");
    dump_static_csv(sweep, os);
}

}  // namespace memsid

#endif  // MEMSID_STATICS_HPP
