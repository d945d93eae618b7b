// Command-line front end for the membrane identification pipeline.
//
// Exit codes: 0 on success, 1 when the data fails an acceptance threshold
// (surrogate accuracy, die quality, static correlation), 2 on usage or
// configuration errors.

#include <memsid/memsid.hpp>

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace {

using namespace memsid;

WaferSpec load_spec_or_default(const std::string& path) {
    if (path.empty())
        return parse_wafer_spec(nlohmann::json{{"rows", 1}, {"cols", 1}, {"wafer_seed", 0}});
    return load_wafer_spec(path);
}

CalibrationData calibration_for(const WaferSpec& spec, const std::string& cal_path) {
    if (!cal_path.empty()) return load_calibration(cal_path);
    return run_characterization(spec).calibration;
}

/// Data-stage failures exit 1; configuration problems propagate and exit 2.
struct data_failure : std::runtime_error {
    using std::runtime_error::runtime_error;
};

int cmd_build_surrogate(const std::string& spec_path, const std::string& out,
                        const std::string& stress_str, int modes, double accuracy,
                        int max_degree) {
    auto spec = load_spec_or_default(spec_path);
    if (accuracy > 0.0) spec.fit_accuracy = accuracy;
    if (max_degree > 0) spec.max_degree = max_degree;

    ParameterMatrix pm;
    if (!stress_str.empty()) {
        const double stress = units::parse_quantity(stress_str);
        const int k = modes > 0 ? modes : spec.modes_wafer;
        pm = build_parameter_matrix(spec.design, spec.thickness_grid, {stress}, k);
    } else {
        const int k = modes > 0 ? modes : spec.modes_characterization;
        pm = build_parameter_matrix(spec.design, spec.thickness_grid, spec.stress_grid, k);
    }
    auto sur = fit_inverse(pm, spec.fit_accuracy, spec.max_degree);
    save_surrogate(out, sur);

    std::printf("surrogate: %d modes, %d parameter(s), %zu combination(s) -> %s\n",
                sur.mode_count, sur.param_count, sur.combos.size(), out.c_str());
    for (std::size_t i = 0; i < sur.combos.size(); ++i)
        std::printf("  combo %zu: degree %d, max node error %.3g (accuracy %.3g)\n", i,
                    sur.degrees[i], sur.fit_report[i], sur.accuracy);
    for (const auto& w : sur.warnings) std::printf("warning: %s\n", w.message.c_str());
    if (!sur.warnings.empty()) {
        std::printf("surrogate failed the accuracy target\n");
        return 1;
    }
    return 0;
}

int cmd_characterize(const std::string& spec_path, const std::string& out) {
    auto spec = load_wafer_spec(spec_path);
    CharacterizationRun run;
    try {
        run = run_characterization(spec);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "characterization failed: %s\n", e.what());
        return 1;
    }
    if (!out.empty()) save_calibration(run.calibration, out);
    std::printf("characterized %d dies (%d clean)\n", run.calibration.die_count,
                run.calibration.valid_count);
    std::printf("calibrated stress: %.6g MPa\n", units::to_mpa(run.calibration.calibrated_stress));
    std::printf("recommended max EIE: %.6g um", units::to_um(run.calibration.recommended_max_eie[0]));
    if (run.calibration.recommended_max_eie.size() > 1)
        std::printf(" (stress: %.6g MPa)", units::to_mpa(run.calibration.recommended_max_eie[1]));
    std::printf("\n");
    if (!out.empty()) std::printf("calibration written to %s\n", out.c_str());
    return 0;
}

int cmd_wafer_test(const std::string& spec_path, const std::string& cal_path,
                   const std::string& csv_path, const std::string& json_path) {
    auto spec = load_wafer_spec(spec_path);
    CalibrationData cal;
    try {
        cal = calibration_for(spec, cal_path);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "calibration failed: %s\n", e.what());
        return 1;
    }
    auto report = run_wafer(spec, cal);
    if (!csv_path.empty()) dump_wafer_csv(report, csv_path);
    if (!json_path.empty()) save_wafer_report(report, json_path);

    const auto& s = report.summary;
    std::printf("wafer %s: %dx%d, seed %llu\n", report.design_name.c_str(), report.rows,
                report.cols, static_cast<unsigned long long>(report.wafer_seed));
    std::printf("  valid %d / %d, type1 %d, type2 %d, out-of-range %d, errors %d\n", s.valid,
                s.total, s.type1, s.type2, s.out_of_range, s.errors);
    std::printf("  thickness %.6g um +- %.6g um over valid dies\n",
                units::to_um(s.thickness_mean), units::to_um(s.thickness_sigma));
    if (s.defective_truth > 0 || s.false_positives > 0)
        std::printf("  false positives %d, false negatives %d (defective truth %d)\n",
                    s.false_positives, s.false_negatives, s.defective_truth);
    if (!csv_path.empty()) std::printf("  report written to %s\n", csv_path.c_str());
    return s.errors == 0 ? 0 : 1;
}

int cmd_static_correlate(const std::string& spec_path, const std::string& cal_path,
                         const std::string& dump_dir) {
    auto spec = load_wafer_spec(spec_path);
    spec.statics_enabled = true;
    CalibrationData cal;
    try {
        cal = calibration_for(spec, cal_path);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "calibration failed: %s\n", e.what());
        return 1;
    }
    auto report = run_wafer(spec, cal);

    if (!dump_dir.empty()) std::filesystem::create_directories(dump_dir);
    int checked = 0, over = 0;
    double worst = 0.0;
    for (const auto& row : report.die_rows) {
        if (row.status != "valid" || std::isnan(row.static_max_err)) continue;
        ++checked;
        worst = std::max(worst, row.static_max_err);
        if (row.static_max_err > spec.max_voltage_error) {
            ++over;
            std::printf("  %s: max voltage error %.3g over limit %.3g\n", row.id.c_str(),
                        row.static_max_err, spec.max_voltage_error);
        }
        if (!dump_dir.empty()) {
            auto truth = make_die_truth(spec, row.row, row.col);
            auto sweep = simulate_static_sweep(spec.design, truth, spec.statics);
            dump_static_csv(sweep, dump_dir + "/" + row.id + ".csv");
        }
    }
    std::printf("static correlation over %d valid dies: worst error %.3g (limit %.3g)\n", checked,
                worst, spec.max_voltage_error);
    if (checked == 0) {
        std::fprintf(stderr, "no valid dies to correlate\n");
        return 1;
    }
    return over == 0 ? 0 : 1;
}

int cmd_simulate_response(const std::string& spec_path, int row, int col,
                          const std::string& out) {
    auto spec = load_wafer_spec(spec_path);
    auto truth = make_die_truth(spec, row, col);
    auto resp = synthesize(truth, spec.acquisition, spec.design.material);
    dump_response_csv(resp, out);
    const char* defect = truth.defect.kind == DefectSpec::Kind::NoMembrane ? "no membrane"
                         : truth.defect.kind == DefectSpec::Kind::Asymmetry ? "asymmetry"
                                                                            : "none";
    std::printf("die %s: thickness %.6g um, stress %.6g MPa, defect %s\n",
                die_id(row, col).c_str(), units::to_um(truth.geometry.thickness_z),
                units::to_mpa(truth.stress.passivation_stress), defect);
    std::printf("%d bins x %zu channel(s) written to %s\n", spec.acquisition.bin_count,
                resp.amplitude.size(), out.c_str());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"micromachined pressure-sensor identification pipeline"};
    app.require_subcommand(1);

    std::string spec_path, out_path, cal_path, csv_path, json_path, stress_str, dump_dir;
    int modes = 0, die_row = 0, die_col = 0, max_degree = 0;
    double accuracy = 0.0;

    auto* build = app.add_subcommand("build-surrogate",
                                     "fit the inverse polynomial surrogate and save it as JSON");
    build->add_option("--spec", spec_path, "wafer spec JSON (defaults used when omitted)");
    build->add_option("-o,--output", out_path, "output surrogate JSON")->required();
    build->add_option("--stress", stress_str,
                      "fixed stress (e.g. 50MPa) for a one-parameter surrogate");
    build->add_option("--modes", modes, "number of distinct modes");
    build->add_option("--accuracy", accuracy, "relative fit accuracy target");
    build->add_option("--max-degree", max_degree, "highest polynomial degree tried");

    auto* charc = app.add_subcommand("characterize",
                                     "identify calibration dies and derive stress + EIE limits");
    charc->add_option("spec", spec_path, "wafer spec JSON")->required();
    charc->add_option("-o,--output", out_path, "calibration JSON to write");

    auto* wafer = app.add_subcommand("wafer-test", "run the full wafer-level test");
    wafer->add_option("spec", spec_path, "wafer spec JSON")->required();
    wafer->add_option("--calibration", cal_path, "calibration JSON (else characterize first)");
    wafer->add_option("--csv", csv_path, "per-die report CSV");
    wafer->add_option("--json", json_path, "per-die report JSON");

    auto* stat = app.add_subcommand("static-correlate",
                                    "correlate static sweeps against the identified model");
    stat->add_option("spec", spec_path, "wafer spec JSON")->required();
    stat->add_option("--calibration", cal_path, "calibration JSON (else characterize first)");
    stat->add_option("--dump-dir", dump_dir, "directory for per-die sweep CSVs");

    auto* sim = app.add_subcommand("simulate-response", "synthesize one die's frequency response");
    sim->add_option("spec", spec_path, "wafer spec JSON")->required();
    sim->add_option("--row", die_row, "die row");
    sim->add_option("--col", die_col, "die column");
    sim->add_option("-o,--output", out_path, "response CSV")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    try {
        if (build->parsed())
            return cmd_build_surrogate(spec_path, out_path, stress_str, modes, accuracy,
                                       max_degree);
        if (charc->parsed()) return cmd_characterize(spec_path, out_path);
        if (wafer->parsed()) return cmd_wafer_test(spec_path, cal_path, csv_path, json_path);
        if (stat->parsed()) return cmd_static_correlate(spec_path, cal_path, dump_dir);
        if (sim->parsed()) return cmd_simulate_response(spec_path, die_row, die_col, out_path);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
    return 2;
}
