#ifndef MEMSID_WAFER_HPP
#define MEMSID_WAFER_HPP

#include <memsid/identify.hpp>
#include <memsid/peaks.hpp>
#include <memsid/plate.hpp>
#include <memsid/response.hpp>
#include <memsid/rng.hpp>
#include <memsid/statics.hpp>
#include <memsid/surrogate.hpp>
#include <memsid/units.hpp>

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace memsid {

// --- wafer specification ---------------------------------------------------

struct DieOverride {
    int row = 0;
    int col = 0;
    std::optional<double> thickness;  // m
    std::optional<double> stress;     // Pa
    DefectSpec defect;                // Kind::None unless specified
};

/// Full description of a simulated wafer run: the sensor design, the die
/// grid, the process scatter, per-die overrides, and the acquisition,
/// identification and statics settings shared by every die.
struct WaferSpec {
    SensorDesign design;
    int rows = 1;
    int cols = 1;
    std::uint64_t wafer_seed = 0;
    bool has_seed = false;  // the seed must be given explicitly
    double thickness_mean = 0.0;   // m; defaults to the design thickness
    double thickness_sigma = 0.0;  // m
    double stress = 50e6;          // Pa, true passivation stress
    std::vector<DieOverride> overrides;

    AcquisitionSpec acquisition;

    // identification settings
    std::vector<double> thickness_grid;  // m, surrogate training grid
    std::vector<double> stress_grid;     // Pa
    double fit_accuracy = 1e-3;
    int max_degree = 4;
    int modes_characterization = 4;
    int modes_wafer = 3;
    double max_eie = 0.25e-6;  // m, fallback before calibration recommends one
    double max_eie_n = 0.05;
    double split_tolerance = 5e-3;
    double min_snr = 5.0;
    double min_separation = 3e3;  // Hz
    double eie_percentile = 0.95;
    std::vector<std::pair<int, int>> calibration_dies;  // empty -> automatic

    // statics settings
    bool statics_enabled = true;
    StaticSweepSpec statics;
    double max_voltage_error = 0.10;

    void validate() const {
        design.validate();
        if (rows < 1 || cols < 1) throw std::invalid_argument("wafer grid must be at least 1x1");
        if (!has_seed) throw std::invalid_argument("wafer_seed is mandatory");
        if (thickness_mean <= 0.0) throw std::invalid_argument("thickness mean must be positive");
        if (thickness_sigma < 0.0)
            throw std::invalid_argument("thickness sigma must be non-negative");
        if (stress_grid.empty() || thickness_grid.size() < 3)
            throw std::invalid_argument(
                "identification grids need >= 3 thickness and >= 1 stress points");
        acquisition.validate();
        statics.validate();
        if (max_eie <= 0.0 || max_eie_n <= 0.0)
            throw std::invalid_argument("EIE limits must be positive");
        if (min_snr <= 1.0) throw std::invalid_argument("min_snr must exceed 1");
        if (min_separation <= 0.0) throw std::invalid_argument("min_separation must be positive");
        if (eie_percentile <= 0.0 || eie_percentile > 1.0)
            throw std::invalid_argument("eie_percentile must be in (0, 1]");
        if (max_voltage_error <= 0.0)
            throw std::invalid_argument("max_voltage_error must be positive");
        for (const auto& o : overrides) {
            if (o.row < 0 || o.row >= rows || o.col < 0 || o.col >= cols)
                throw std::invalid_argument("override at R" + std::to_string(o.row) + "C" +
                                            std::to_string(o.col) + " lies outside the grid");
            if (o.defect.kind == DefectSpec::Kind::Asymmetry && o.defect.ratio <= 0.0)
                throw std::invalid_argument("asymmetry override needs a positive ratio");
        }
        for (const auto& [r, c] : calibration_dies)
            if (r < 0 || r >= rows || c < 0 || c >= cols)
                throw std::invalid_argument("calibration die outside the grid");
    }
};

namespace detail {

inline void reject_unknown_keys(const nlohmann::json& j, const char* where,
                                std::initializer_list<const char*> allowed) {
    for (const auto& [key, value] : j.items()) {
        bool known = false;
        for (const char* a : allowed) known = known || key == a;
        if (!known)
            throw std::runtime_error(std::string("unknown key \"") + key + "\" in " + where);
    }
}

inline std::vector<double> parse_grid_field(const nlohmann::json& j, const char* key,
                                            const std::string& fallback_spec) {
    if (!j.contains(key)) return units::parse_grid(fallback_spec);
    return units::parse_grid(j.at(key).get<std::string>());
}

inline RelPoint parse_rel_point(const nlohmann::json& j, const char* where) {
    if (!j.is_array() || j.size() != 2)
        throw std::runtime_error(std::string(where) + " must be a [x, y] pair");
    return RelPoint{j[0].get<double>(), j[1].get<double>()};
}

}  // namespace detail

/// Parses a wafer specification from JSON. Unknown keys are rejected and
/// semantic errors name the offending field; defaults follow the production
/// sensor unless overridden.
inline WaferSpec parse_wafer_spec(const nlohmann::json& j) {
    detail::reject_unknown_keys(j, "wafer spec",
                                {"design", "rows", "cols", "wafer_seed", "thickness_mean_um",
                                 "thickness_sigma_um", "stress_MPa", "overrides", "acquisition",
                                 "identification", "statics"});
    WaferSpec spec;

    if (j.contains("design")) {
        const auto& d = j.at("design");
        detail::reject_unknown_keys(d, "design",
                                    {"name", "side_a_um", "side_b_um", "thickness_um",
                                     "passivation_um", "passivation_density", "material",
                                     "piezo"});
        spec.design.name = d.value("name", "unnamed");
        spec.design.membrane.side_a = units::from_um(d.value("side_a_um", 1300.0));
        spec.design.membrane.side_b = units::from_um(d.value("side_b_um", 1300.0));
        spec.design.membrane.thickness_z = units::from_um(d.value("thickness_um", 15.0));
        spec.design.membrane.passivation_thickness = units::from_um(d.value("passivation_um", 4.0));
        spec.design.membrane.passivation_density = d.value("passivation_density", 2200.0);
        if (d.contains("material")) {
            const auto& m = d.at("material");
            detail::reject_unknown_keys(m, "design.material",
                                        {"youngs_modulus_GPa", "poisson_ratio", "density"});
            spec.design.material.youngs_modulus =
                m.value("youngs_modulus_GPa", 169.0) * units::gpa;
            spec.design.material.poisson_ratio = m.value("poisson_ratio", 0.22);
            spec.design.material.density = m.value("density", 2330.0);
        }
        if (d.contains("piezo")) {
            const auto& p = d.at("piezo");
            detail::reject_unknown_keys(
                p, "design.piezo", {"gain", "supply_V", "resistor_x_rel", "resistor_y_rel"});
            spec.design.piezo.gain = p.value("gain", 7e-10);
            spec.design.piezo.supply_voltage = p.value("supply_V", 5.0);
            spec.design.piezo.resistor_x_rel = p.value("resistor_x_rel", 0.1);
            spec.design.piezo.resistor_y_rel = p.value("resistor_y_rel", 0.5);
        }
    } else {
        spec.design.name = "default";
        spec.design.membrane.side_a = 1300e-6;
        spec.design.membrane.side_b = 1300e-6;
        spec.design.membrane.thickness_z = 15e-6;
        spec.design.membrane.passivation_thickness = 4e-6;
    }

    spec.rows = j.value("rows", 1);
    spec.cols = j.value("cols", 1);
    if (j.contains("wafer_seed")) {
        spec.wafer_seed = j.at("wafer_seed").get<std::uint64_t>();
        spec.has_seed = true;
    }
    spec.thickness_mean = j.contains("thickness_mean_um")
                              ? units::from_um(j.at("thickness_mean_um").get<double>())
                              : spec.design.membrane.thickness_z;
    spec.thickness_sigma = units::from_um(j.value("thickness_sigma_um", 0.0));
    spec.stress = units::from_mpa(j.value("stress_MPa", 50.0));

    if (j.contains("overrides")) {
        for (const auto& o : j.at("overrides")) {
            detail::reject_unknown_keys(
                o, "override", {"row", "col", "thickness_um", "stress_MPa", "defect", "ratio"});
            DieOverride d;
            d.row = o.at("row").get<int>();
            d.col = o.at("col").get<int>();
            if (o.contains("thickness_um"))
                d.thickness = units::from_um(o.at("thickness_um").get<double>());
            if (o.contains("stress_MPa"))
                d.stress = units::from_mpa(o.at("stress_MPa").get<double>());
            if (o.contains("defect")) {
                const auto kind = o.at("defect").get<std::string>();
                if (kind == "no_membrane")
                    d.defect.kind = DefectSpec::Kind::NoMembrane;
                else if (kind == "asymmetry") {
                    d.defect.kind = DefectSpec::Kind::Asymmetry;
                    d.defect.ratio = o.value("ratio", 0.02);
                } else if (kind != "none")
                    throw std::runtime_error("unknown defect kind \"" + kind + "\"");
            }
            spec.overrides.push_back(d);
        }
    }

    if (j.contains("acquisition")) {
        const auto& a = j.at("acquisition");
        detail::reject_unknown_keys(a, "acquisition",
                                    {"f_min_kHz", "f_max_kHz", "bin_count", "q_factor",
                                     "noise_floor", "freq_jitter_sigma", "spurious_peak_rate",
                                     "measurement_points", "electrode_position"});
        spec.acquisition.f_min = units::from_khz(a.value("f_min_kHz", 10.0));
        spec.acquisition.f_max = units::from_khz(a.value("f_max_kHz", 1000.0));
        spec.acquisition.bin_count = a.value("bin_count", 4096);
        spec.acquisition.q_factor = a.value("q_factor", 500.0);
        spec.acquisition.noise_floor = a.value("noise_floor", 1e-3);
        spec.acquisition.freq_jitter_sigma = a.value("freq_jitter_sigma", 5e-4);
        spec.acquisition.spurious_peak_rate = a.value("spurious_peak_rate", 2.0);
        if (a.contains("measurement_points")) {
            spec.acquisition.measurement_points.clear();
            for (const auto& p : a.at("measurement_points"))
                spec.acquisition.measurement_points.push_back(
                    detail::parse_rel_point(p, "measurement point"));
        }
        if (a.contains("electrode_position"))
            spec.acquisition.electrode_position =
                detail::parse_rel_point(a.at("electrode_position"), "electrode_position");
    }

    const auto& ident = j.contains("identification") ? j.at("identification") : nlohmann::json::object();
    detail::reject_unknown_keys(ident, "identification",
                                {"thickness_grid", "stress_grid", "fit_accuracy", "max_degree",
                                 "modes_characterization", "modes_wafer", "max_eie_um",
                                 "max_eie_n", "split_tolerance", "min_snr", "min_separation_kHz",
                                 "eie_percentile", "calibration_dies"});
    spec.thickness_grid = detail::parse_grid_field(ident, "thickness_grid", "12:18:0.75um");
    spec.stress_grid = detail::parse_grid_field(ident, "stress_grid", "0:100:12.5MPa");
    spec.fit_accuracy = ident.value("fit_accuracy", 1e-3);
    spec.max_degree = ident.value("max_degree", 4);
    spec.modes_characterization = ident.value("modes_characterization", 4);
    spec.modes_wafer = ident.value("modes_wafer", 3);
    spec.max_eie = units::from_um(ident.value("max_eie_um", 0.25));
    spec.max_eie_n = ident.value("max_eie_n", 0.05);
    spec.split_tolerance = ident.value("split_tolerance", 5e-3);
    spec.min_snr = ident.value("min_snr", 5.0);
    spec.min_separation = units::from_khz(ident.value("min_separation_kHz", 3.0));
    spec.eie_percentile = ident.value("eie_percentile", 0.95);
    if (ident.contains("calibration_dies"))
        for (const auto& rc : ident.at("calibration_dies")) {
            if (!rc.is_array() || rc.size() != 2)
                throw std::runtime_error("calibration_dies entries must be [row, col] pairs");
            spec.calibration_dies.emplace_back(rc[0].get<int>(), rc[1].get<int>());
        }

    if (j.contains("statics")) {
        const auto& s = j.at("statics");
        detail::reject_unknown_keys(s, "statics",
                                    {"enabled", "pressures", "noise_eta", "max_voltage_error"});
        spec.statics_enabled = s.value("enabled", true);
        if (s.contains("pressures"))
            spec.statics.pressures = units::parse_grid(s.at("pressures").get<std::string>());
        spec.statics.noise_eta = s.value("noise_eta", 0.01);
        spec.max_voltage_error = s.value("max_voltage_error", 0.10);
    }

    spec.validate();
    return spec;
}

inline WaferSpec load_wafer_spec(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open wafer spec " + path);
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(is);
    } catch (const nlohmann::json::parse_error& e) {
        throw std::runtime_error("invalid JSON in " + path + ": " + e.what());
    }
    try {
        return parse_wafer_spec(j);
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error("invalid wafer spec " + path + ": " + e.what());
    }
}

// --- die truth -------------------------------------------------------------

inline std::string die_id(int row, int col) {
    return "R" + std::to_string(row) + "C" + std::to_string(col);
}

/// True (simulated) state of one die: thickness drawn from the process
/// distribution through the die's private thickness substream, then any
/// per-die override applied on top.
inline DieTruth make_die_truth(const WaferSpec& spec, int row, int col) {
    if (row < 0 || row >= spec.rows || col < 0 || col >= spec.cols)
        throw std::invalid_argument("die position outside the wafer grid");
    DieTruth truth;
    truth.rng_seed = die_seed(spec.wafer_seed, row, col);
    truth.geometry = spec.design.membrane;
    SplitMix64 thickness_rng(substream(truth.rng_seed, seed_salt::thickness));
    truth.geometry.thickness_z =
        thickness_rng.normal(spec.thickness_mean, spec.thickness_sigma);
    truth.stress.passivation_stress = spec.stress;
    for (const auto& o : spec.overrides) {
        if (o.row != row || o.col != col) continue;
        if (o.thickness) truth.geometry.thickness_z = *o.thickness;
        if (o.stress) truth.stress.passivation_stress = *o.stress;
        truth.defect = o.defect;
    }
    if (truth.geometry.thickness_z <= 0.0)
        throw std::runtime_error("die " + die_id(row, col) + " drew a non-positive thickness");
    return truth;
}

// --- calibration -----------------------------------------------------------

struct CalibrationData {
    double calibrated_stress = 0.0;           // Pa
    std::vector<double> recommended_max_eie;  // [thickness m, stress Pa]
    double percentile = 0.95;
    int die_count = 0;
    int valid_count = 0;
};

inline void save_calibration(const CalibrationData& cal, const std::string& path) {
    nlohmann::json j;
    j["format"] = "memsid-calibration";
    j["version"] = 1;
    j["calibrated_stress_MPa"] = units::to_mpa(cal.calibrated_stress);
    j["recommended_max_eie_um"] =
        cal.recommended_max_eie.empty() ? 0.0 : units::to_um(cal.recommended_max_eie[0]);
    if (cal.recommended_max_eie.size() > 1)
        j["recommended_max_eie_stress_MPa"] = units::to_mpa(cal.recommended_max_eie[1]);
    j["percentile"] = cal.percentile;
    j["die_count"] = cal.die_count;
    j["valid_count"] = cal.valid_count;
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot open " + path + " for writing");
    os << j.dump(2) << '\n';
}

inline CalibrationData load_calibration(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open calibration file " + path);
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(is);
    } catch (const nlohmann::json::parse_error& e) {
        throw std::runtime_error("invalid JSON in " + path + ": " + e.what());
    }
    if (j.value("format", "") != "memsid-calibration")
        throw std::runtime_error(path + " is not a calibration file");
    CalibrationData cal;
    cal.calibrated_stress = units::from_mpa(j.at("calibrated_stress_MPa").get<double>());
    cal.recommended_max_eie = {units::from_um(j.at("recommended_max_eie_um").get<double>())};
    if (j.contains("recommended_max_eie_stress_MPa"))
        cal.recommended_max_eie.push_back(
            units::from_mpa(j.at("recommended_max_eie_stress_MPa").get<double>()));
    cal.percentile = j.value("percentile", 0.95);
    cal.die_count = j.value("die_count", 0);
    cal.valid_count = j.value("valid_count", 0);
    return cal;
}

// --- characterization run --------------------------------------------------

inline InverseSurrogate characterization_surrogate(const WaferSpec& spec) {
    auto pm = build_parameter_matrix(spec.design, spec.thickness_grid, spec.stress_grid,
                                     spec.modes_characterization);
    return fit_inverse(pm, spec.fit_accuracy, spec.max_degree);
}

/// Identification settings for the two-parameter characterization stage.
/// EIE limits are wide open here: characterization *measures* the EIE
/// distribution it will later recommend limits from, so only structural
/// defects (missing peaks, resolved splits, out-of-range) may filter dies.
inline IdentificationConfig characterization_config(const WaferSpec& spec) {
    IdentificationConfig cfg;
    cfg.parameter_ranges = {{spec.thickness_grid.front(), spec.thickness_grid.back()},
                            {spec.stress_grid.front() - 10e6, spec.stress_grid.back() + 10e6}};
    cfg.max_eie = {spec.thickness_grid.back() - spec.thickness_grid.front(),
                   spec.stress_grid.back() - spec.stress_grid.front() + 20e6};
    cfg.max_eie_n = 0.5;
    cfg.mode_count_k = spec.modes_characterization;
    cfg.param_count_d = 2;
    cfg.degenerate_split_tolerance = spec.split_tolerance;
    cfg.mode = IdentifyMode::Characterization;
    return cfg;
}

struct CharacterizationRun {
    CalibrationData calibration;
    std::vector<std::pair<int, int>> dies;
    std::vector<IdentificationResult> results;
};

/// Characterizes the wafer on the calibration dies (explicit list, or the
/// first clean dies in row-major order): two-parameter identification per
/// die, then the median stress and the EIE percentile become the calibration.
inline CharacterizationRun run_characterization(const WaferSpec& spec) {
    spec.validate();
    CharacterizationRun run;
    run.dies = spec.calibration_dies;
    if (run.dies.empty()) {
        for (int r = 0; r < spec.rows && run.dies.size() < 24; ++r)
            for (int c = 0; c < spec.cols && run.dies.size() < 24; ++c) {
                bool overridden = false;
                for (const auto& o : spec.overrides)
                    overridden = overridden || (o.row == r && o.col == c);
                if (!overridden) run.dies.emplace_back(r, c);
            }
    }
    if (run.dies.size() < 12)
        throw std::runtime_error("characterization needs at least 12 calibration dies, found " +
                                 std::to_string(run.dies.size()));

    auto sur = characterization_surrogate(spec);
    auto cfg = characterization_config(spec);
    for (const auto& [r, c] : run.dies) {
        auto truth = make_die_truth(spec, r, c);
        auto resp = synthesize(truth, spec.acquisition, spec.design.material);
        auto peaks = find_peaks(resp, spec.min_snr, spec.min_separation);
        run.results.push_back(assign_and_identify(peaks, sur, cfg));
    }
    auto rep = characterize(run.results, cfg, spec.eie_percentile);
    run.calibration.calibrated_stress = rep.calibrated_stress;
    run.calibration.recommended_max_eie = rep.recommended_max_eie;
    run.calibration.percentile = rep.percentile;
    run.calibration.die_count = rep.die_count;
    run.calibration.valid_count = rep.valid_count;
    return run;
}

// --- wafer test ------------------------------------------------------------

inline InverseSurrogate wafer_surrogate(const WaferSpec& spec, double calibrated_stress) {
    auto pm = build_parameter_matrix(spec.design, spec.thickness_grid, {calibrated_stress},
                                     spec.modes_wafer);
    return fit_inverse(pm, spec.fit_accuracy, spec.max_degree);
}

/// Identification settings for the one-parameter wafer test. The thickness
/// EIE limit comes from the calibration recommendation when available.
inline IdentificationConfig wafer_config(const WaferSpec& spec, const CalibrationData& cal) {
    IdentificationConfig cfg;
    cfg.parameter_ranges = {{spec.thickness_grid.front(), spec.thickness_grid.back()}};
    const double limit = !cal.recommended_max_eie.empty() && cal.recommended_max_eie[0] > 0.0
                             ? cal.recommended_max_eie[0]
                             : spec.max_eie;
    cfg.max_eie = {limit};
    cfg.max_eie_n = spec.max_eie_n;
    cfg.mode_count_k = spec.modes_wafer;
    cfg.param_count_d = 1;
    cfg.degenerate_split_tolerance = spec.split_tolerance;
    cfg.mode = IdentifyMode::WaferTest;
    return cfg;
}

struct DieRow {
    std::string id;
    int row = 0;
    int col = 0;
    std::string status;  // classification name or "error: ..."
    double thickness = std::numeric_limits<double>::quiet_NaN();  // m, identified
    double stress = std::numeric_limits<double>::quiet_NaN();     // Pa, model stress
    double eie = std::numeric_limits<double>::quiet_NaN();        // m, thickness EIE
    std::optional<double> eie_n;
    int n_peaks = 0;
    double static_max_err = std::numeric_limits<double>::quiet_NaN();
    bool failure = true;
    // joined truth for bookkeeping (JSON report only, not in the CSV)
    double truth_thickness = std::numeric_limits<double>::quiet_NaN();
    std::string truth_defect;  // empty, "no_membrane" or "asymmetry"
};

struct WaferSummary {
    int total = 0;
    int valid = 0;
    int type1 = 0;
    int type2 = 0;
    int out_of_range = 0;
    int errors = 0;
    int static_failures = 0;
    double thickness_mean = 0.0;   // m, over valid dies
    double thickness_sigma = 0.0;  // m, sample deviation over valid dies
    int false_positives = 0;       // clean dies flagged
    int false_negatives = 0;       // defective dies not flagged
    int defective_truth = 0;
};

struct WaferReport {
    std::string design_name;
    int rows = 0;
    int cols = 0;
    std::uint64_t wafer_seed = 0;
    double calibrated_stress = 0.0;
    std::vector<DieRow> die_rows;
    WaferSummary summary;
};

namespace detail {

inline std::string sanitize_csv(std::string s) {
    for (char& c : s)
        if (c == ',' || c == '\n' || c == '\r') c = ' ';
    return s;
}

}  // namespace detail

/// Runs the full per-die pipeline for one position: synthesis, peak
/// detection, identification, classification, and (for valid dies) the
/// static pressure correlation. Any per-die error is captured in the row
/// status; it never escapes.
inline DieRow process_die(const WaferSpec& spec, const CalibrationData& cal,
                          const InverseSurrogate& sur, const IdentificationConfig& cfg, int row,
                          int col) {
    DieRow out;
    out.id = die_id(row, col);
    out.row = row;
    out.col = col;
    try {
        auto truth = make_die_truth(spec, row, col);
        out.truth_thickness = truth.geometry.thickness_z;
        if (truth.defect.kind == DefectSpec::Kind::NoMembrane) out.truth_defect = "no_membrane";
        if (truth.defect.kind == DefectSpec::Kind::Asymmetry) out.truth_defect = "asymmetry";

        auto resp = synthesize(truth, spec.acquisition, spec.design.material);
        auto peaks = find_peaks(resp, spec.min_snr, spec.min_separation);
        out.n_peaks = static_cast<int>(peaks.size());
        auto res = assign_and_identify(peaks, sur, cfg);
        out.status = to_string(res.classification);
        out.failure = res.failure_bit;
        if (!res.mean_params.empty()) {
            out.thickness = res.mean_params[0];
            out.stress = cal.calibrated_stress;
            out.eie = res.eie[0];
            out.eie_n = res.eie_n[0];
        }
        if (spec.statics_enabled && res.classification == DieClass::Valid) {
            auto sweep = simulate_static_sweep(spec.design, truth, spec.statics);
            auto corr = adapt_gain(sweep, spec.design, out.thickness, cal.calibrated_stress);
            out.static_max_err = corr.max_rel_voltage_error;
        }
    } catch (const std::exception& e) {
        out.status = detail::sanitize_csv(std::string("error: ") + e.what());
        out.failure = true;
    }
    return out;
}

/// Full wafer test: builds the one-parameter surrogate at the calibrated
/// stress, processes every die in row-major order, and reduces the summary
/// deterministically in the same order.
inline WaferReport run_wafer(const WaferSpec& spec, const CalibrationData& cal) {
    spec.validate();
    WaferReport report;
    report.design_name = spec.design.name;
    report.rows = spec.rows;
    report.cols = spec.cols;
    report.wafer_seed = spec.wafer_seed;
    report.calibrated_stress = cal.calibrated_stress;

    auto sur = wafer_surrogate(spec, cal.calibrated_stress);
    auto cfg = wafer_config(spec, cal);

    auto& s = report.summary;
    double sum = 0.0, sum_sq = 0.0;
    for (int r = 0; r < spec.rows; ++r)
        for (int c = 0; c < spec.cols; ++c) {
            auto row = process_die(spec, cal, sur, cfg, r, c);
            s.total += 1;
            if (row.status == "valid") {
                s.valid += 1;
                sum += row.thickness;
                sum_sq += row.thickness * row.thickness;
            } else if (row.status == "type1_no_membrane")
                s.type1 += 1;
            else if (row.status == "type2_asymmetric")
                s.type2 += 1;
            else if (row.status == "out_of_range")
                s.out_of_range += 1;
            else
                s.errors += 1;
            if (!std::isnan(row.static_max_err) && row.static_max_err > spec.max_voltage_error)
                s.static_failures += 1;
            const bool defective = !row.truth_defect.empty();
            if (defective) s.defective_truth += 1;
            if (defective && !row.failure) s.false_negatives += 1;
            if (!defective && row.failure) s.false_positives += 1;
            report.die_rows.push_back(std::move(row));
        }
    if (s.valid > 0) {
        s.thickness_mean = sum / s.valid;
        if (s.valid > 1)
            s.thickness_sigma =
                std::sqrt(std::max(0.0, (sum_sq - sum * sum / s.valid) / (s.valid - 1)));
    }
    return report;
}

/// Convenience entry: characterize first, then test the whole wafer.
inline WaferReport run_wafer(const WaferSpec& spec) {
    return run_wafer(spec, run_characterization(spec).calibration);
}

// --- report output ---------------------------------------------------------

namespace detail {

inline std::string fmt9(double v) {
    if (std::isnan(v)) return "";
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.9g", v);
    return buf;
}

}  // namespace detail

inline void dump_wafer_csv(const WaferReport& report, std::ostream& os) {
    os << "die_id,row,col,status,thickness_um,stress_MPa,eie_um,eie_n,n_peaks,static_max_err\n";
    for (const auto& r : report.die_rows) {
        os << r.id << ',' << r.row << ',' << r.col << ',' << r.status << ','
           << detail::fmt9(std::isnan(r.thickness) ? r.thickness : units::to_um(r.thickness))
           << ','
           << detail::fmt9(std::isnan(r.stress) ? r.stress : units::to_mpa(r.stress)) << ','
           << detail::fmt9(std::isnan(r.eie) ? r.eie : units::to_um(r.eie)) << ','
           << (r.eie_n ? detail::fmt9(*r.eie_n) : std::string()) << ',' << r.n_peaks << ','
           << detail::fmt9(r.static_max_err) << '\n';
    }
}

inline void dump_wafer_csv(const WaferReport& report, const std::string& path) {
    std::ofstream os(path, std::ios::binary);  // byte-stable line endings everywhere
    if (!os) throw std::runtime_error("cannot open " + path + " for writing");
    dump_wafer_csv(report, os);
}

inline nlohmann::json wafer_report_to_json(const WaferReport& report) {
    nlohmann::json j;
    j["format"] = "memsid-wafer-report";
    j["version"] = 1;
    j["design"] = report.design_name;
    j["rows"] = report.rows;
    j["cols"] = report.cols;
    j["wafer_seed"] = report.wafer_seed;
    j["calibrated_stress_MPa"] = units::to_mpa(report.calibrated_stress);
    auto& dies = j["dies"] = nlohmann::json::array();
    for (const auto& r : report.die_rows) {
        nlohmann::json d;
        d["die_id"] = r.id;
        d["row"] = r.row;
        d["col"] = r.col;
        d["status"] = r.status;
        d["thickness_um"] =
            std::isnan(r.thickness) ? nlohmann::json() : nlohmann::json(units::to_um(r.thickness));
        d["stress_MPa"] =
            std::isnan(r.stress) ? nlohmann::json() : nlohmann::json(units::to_mpa(r.stress));
        d["eie_um"] = std::isnan(r.eie) ? nlohmann::json() : nlohmann::json(units::to_um(r.eie));
        d["eie_n"] = r.eie_n ? nlohmann::json(*r.eie_n) : nlohmann::json();
        d["n_peaks"] = r.n_peaks;
        d["static_max_err"] = std::isnan(r.static_max_err) ? nlohmann::json()
                                                           : nlohmann::json(r.static_max_err);
        d["failure"] = r.failure;
        d["truth_thickness_um"] = std::isnan(r.truth_thickness)
                                      ? nlohmann::json()
                                      : nlohmann::json(units::to_um(r.truth_thickness));
        d["truth_defect"] = r.truth_defect;
        dies.push_back(std::move(d));
    }
    auto& s = j["summary"];
    s["total"] = report.summary.total;
    s["valid"] = report.summary.valid;
    s["type1_no_membrane"] = report.summary.type1;
    s["type2_asymmetric"] = report.summary.type2;
    s["out_of_range"] = report.summary.out_of_range;
    s["errors"] = report.summary.errors;
    s["static_failures"] = report.summary.static_failures;
    s["thickness_mean_um"] = units::to_um(report.summary.thickness_mean);
    s["thickness_sigma_um"] = units::to_um(report.summary.thickness_sigma);
    s["false_positives"] = report.summary.false_positives;
    s["false_negatives"] = report.summary.false_negatives;
    s["defective_truth"] = report.summary.defective_truth;
    return j;
}

inline void save_wafer_report(const WaferReport& report, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot open " + path + " for writing");
    os << wafer_report_to_json(report).dump(2) << '\n';
}

}  // namespace memsid

#endif  // MEMSID_WAFER_HPP
