#ifndef MEMSID_SERIALIZE_HPP
#define MEMSID_SERIALIZE_HPP

#include <memsid/surrogate.hpp>

#include <json.hpp>

#include <fstream>
#include <stdexcept>
#include <string>

namespace memsid {

// JSON adapters for surrogate persistence. nlohmann emits doubles with
// shortest-round-trip decimal form, so save/load reproduces every coefficient
// bit-exactly.

inline void to_json(nlohmann::json& j, const AxisScale& s) {
    j = {{"center", s.center}, {"half_width", s.half_width}};
}
inline void from_json(const nlohmann::json& j, AxisScale& s) {
    j.at("center").get_to(s.center);
    j.at("half_width").get_to(s.half_width);
}

inline void to_json(nlohmann::json& j, const PolySurface& s) {
    j = {{"target", s.target},
         {"degree", s.degree},
         {"input_scale", s.input_scale},
         {"coefficients", s.coefficients}};
}
inline void from_json(const nlohmann::json& j, PolySurface& s) {
    j.at("target").get_to(s.target);
    j.at("degree").get_to(s.degree);
    j.at("input_scale").get_to(s.input_scale);
    j.at("coefficients").get_to(s.coefficients);
    s.validate();
}

inline void to_json(nlohmann::json& j, const FrequencyCombo& c) {
    j = {{"index", c.combo_index}, {"modes", c.mode_positions}};
}
inline void from_json(const nlohmann::json& j, FrequencyCombo& c) {
    j.at("index").get_to(c.combo_index);
    j.at("modes").get_to(c.mode_positions);
}

inline void to_json(nlohmann::json& j, const FitWarning& w) {
    j = {{"kind", w.kind == FitWarningKind::AccuracyNotReached ? "accuracy_not_reached"
                                                               : "oscillation"},
         {"combo", w.combo_index},
         {"target", w.target},
         {"best_error", w.best_error},
         {"message", w.message}};
}
inline void from_json(const nlohmann::json& j, FitWarning& w) {
    const std::string kind = j.at("kind").get<std::string>();
    if (kind == "accuracy_not_reached")
        w.kind = FitWarningKind::AccuracyNotReached;
    else if (kind == "oscillation")
        w.kind = FitWarningKind::Oscillation;
    else
        throw std::runtime_error("unknown fit warning kind '" + kind + "'");
    j.at("combo").get_to(w.combo_index);
    j.at("target").get_to(w.target);
    j.at("best_error").get_to(w.best_error);
    j.at("message").get_to(w.message);
}

inline void to_json(nlohmann::json& j, const InverseSurrogate& s) {
    j = {{"format", "memsid-surrogate"},
         {"version", 1},
         {"mode_count", s.mode_count},
         {"param_count", s.param_count},
         {"accuracy", s.accuracy},
         {"param_names", s.param_names},
         {"param_scale", s.param_scale},
         {"thickness_grid", s.thickness_grid},
         {"stress_grid", s.stress_grid},
         {"combos", s.combos},
         {"surfaces", s.surfaces},
         {"degrees", s.degrees},
         {"fit_report", s.fit_report},
         {"frequency_domain", s.frequency_domain},
         {"warnings", s.warnings}};
}
inline void from_json(const nlohmann::json& j, InverseSurrogate& s) {
    if (j.value("format", "") != "memsid-surrogate")
        throw std::runtime_error("not a surrogate document (missing format tag)");
    j.at("mode_count").get_to(s.mode_count);
    j.at("param_count").get_to(s.param_count);
    j.at("accuracy").get_to(s.accuracy);
    j.at("param_names").get_to(s.param_names);
    j.at("param_scale").get_to(s.param_scale);
    j.at("thickness_grid").get_to(s.thickness_grid);
    j.at("stress_grid").get_to(s.stress_grid);
    j.at("combos").get_to(s.combos);
    j.at("surfaces").get_to(s.surfaces);
    j.at("degrees").get_to(s.degrees);
    j.at("fit_report").get_to(s.fit_report);
    j.at("frequency_domain").get_to(s.frequency_domain);
    j.at("warnings").get_to(s.warnings);
    const auto n = s.combos.size();
    if (s.surfaces.size() != n || s.degrees.size() != n || s.fit_report.size() != n ||
        s.frequency_domain.size() != n)
        throw std::runtime_error("surrogate document arrays are inconsistent");
}

inline void save_surrogate(const std::string& path, const InverseSurrogate& s) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
    out << nlohmann::json(s).dump(2) << '\n';
    if (!out) throw std::runtime_error("write failed for '" + path + "'");
}

inline InverseSurrogate load_surrogate(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open '" + path + "'");
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::parse_error& e) {
        throw std::runtime_error("parse error in '" + path + "': " + e.what());
    }
    return j.get<InverseSurrogate>();
}

}  // namespace memsid

#endif  // MEMSID_SERIALIZE_HPP
