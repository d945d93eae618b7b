#ifndef MEMSID_UNITS_HPP
#define MEMSID_UNITS_HPP

#include <cmath>
#include <cstdlib>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace memsid::units {

// Internal representation is SI throughout (m, Pa, Hz, V, kg/m^3).
// External interfaces accept/emit um, MPa, bar, kHz with explicit suffixes.

inline constexpr double um = 1e-6;
inline constexpr double mpa = 1e6;
inline constexpr double gpa = 1e9;
inline constexpr double bar = 1e5;
inline constexpr double khz = 1e3;
inline constexpr double mv = 1e-3;

inline double from_um(double v) { return v * um; }
inline double to_um(double v) { return v / um; }
inline double from_mpa(double v) { return v * mpa; }
inline double to_mpa(double v) { return v / mpa; }
inline double from_bar(double v) { return v * bar; }
inline double to_bar(double v) { return v / bar; }
inline double from_khz(double v) { return v * khz; }
inline double to_khz(double v) { return v / khz; }
inline double to_mv(double v) { return v / mv; }

/// Parses "<number><suffix>" where suffix is one of um, MPa, bar, kHz, Hz, Pa, m.
/// Returns the value in SI units.
inline double parse_quantity(std::string_view text) {
    struct Suffix { const char* name; double factor; };
    static constexpr Suffix suffixes[] = {
        {"um", um}, {"MPa", mpa}, {"GPa", gpa}, {"bar", bar},
        {"kHz", khz}, {"Hz", 1.0}, {"Pa", 1.0}, {"mV", mv}, {"m", 1.0},
    };
    std::string s(text);
    std::size_t pos = 0;
    double value;
    try {
        value = std::stod(s, &pos);
    } catch (const std::exception&) {
        throw std::invalid_argument("cannot parse quantity '" + s + "'");
    }
    std::string suffix = s.substr(pos);
    if (suffix.empty())
        return value;  // bare number, assume SI
    for (const auto& sf : suffixes)
        if (suffix == sf.name)
            return value * sf.factor;
    throw std::invalid_argument("unknown unit suffix '" + suffix + "' in '" + s + "'");
}

/// Parses a grid spec "start:stop:step<suffix>" (suffix applies to all three,
/// endpoints inclusive), e.g. "12:18:0.5um" or "0:100:10MPa".
inline std::vector<double> parse_grid(std::string_view text) {
    std::string s(text);
    auto c1 = s.find(':');
    auto c2 = s.find(':', c1 == std::string::npos ? c1 : c1 + 1);
    if (c1 == std::string::npos || c2 == std::string::npos)
        throw std::invalid_argument("grid spec must be start:stop:step[unit], got '" + s + "'");
    // unit suffix lives on the last field; extract and apply to all
    std::string step_str = s.substr(c2 + 1);
    std::size_t pos = 0;
    double step_val;
    try {
        step_val = std::stod(step_str, &pos);
    } catch (const std::exception&) {
        throw std::invalid_argument("cannot parse grid step in '" + s + "'");
    }
    std::string suffix = step_str.substr(pos);
    double factor = suffix.empty() ? 1.0 : parse_quantity("1" + suffix);
    double start = std::stod(s.substr(0, c1)) * factor;
    double stop = std::stod(s.substr(c1 + 1, c2 - c1 - 1)) * factor;
    double step = step_val * factor;
    if (step <= 0.0 || stop < start)
        throw std::invalid_argument("grid spec requires stop >= start and step > 0: '" + s + "'");
    auto count = static_cast<long>(std::llround((stop - start) / step));
    if (std::abs(start + static_cast<double>(count) * step - stop) > 1e-9 * (stop - start + step))
        throw std::invalid_argument("grid step does not divide the range evenly: '" + s + "'");
    std::vector<double> values;
    values.reserve(static_cast<std::size_t>(count) + 1);
    for (long i = 0; i <= count; ++i)
        values.push_back(start + static_cast<double>(i) * step);
    return values;
}

}  // namespace memsid::units

#endif  // MEMSID_UNITS_HPP
