#ifndef MEMSID_IDENTIFY_HPP
#define MEMSID_IDENTIFY_HPP

#include <memsid/peaks.hpp>
#include <memsid/surrogate.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace memsid {

enum class DieClass { Valid, Type1NoMembrane, Type2Asymmetric, OutOfRange };

inline std::string to_string(DieClass c) {
    switch (c) {
        case DieClass::Valid: return "valid";
        case DieClass::Type1NoMembrane: return "type1_no_membrane";
        case DieClass::Type2Asymmetric: return "type2_asymmetric";
        case DieClass::OutOfRange: return "out_of_range";
    }
    return "unknown";
}

enum class IdentifyMode { Characterization, WaferTest };

struct IdentificationConfig {
    std::vector<std::array<double, 2>> parameter_ranges;  // SI, [param]{min,max}
    std::vector<double> max_eie;                          // SI, per parameter
    double max_eie_n = 0.05;
    int mode_count_k = 4;
    int param_count_d = 2;
    // a split of the degenerate pair registers when a spare peak sits within
    // (tolerance, window] of the assigned one at comparable amplitude
    double degenerate_split_tolerance = 5e-3;
    double split_window_max = 0.08;
    double split_amp_ratio_min = 0.25;
    double split_amp_ratio_max = 4.0;
    int degenerate_position = 1;  // distinct-mode position of the pair; -1 disables
    IdentifyMode mode = IdentifyMode::Characterization;

    void validate() const {
        if (param_count_d < 1 || mode_count_k < param_count_d)
            throw std::invalid_argument("need mode_count_k >= param_count_d >= 1");
        if (mode_count_k == param_count_d)
            throw std::invalid_argument(
                "mode_count_k must exceed param_count_d (a single combination gives no EIE)");
        if (parameter_ranges.size() != static_cast<std::size_t>(param_count_d))
            throw std::invalid_argument("one parameter range per identified parameter required");
        for (const auto& r : parameter_ranges)
            if (!(r[0] < r[1])) throw std::invalid_argument("parameter range must have min < max");
        if (max_eie.size() != static_cast<std::size_t>(param_count_d))
            throw std::invalid_argument("one max_eie per identified parameter required");
        for (double m : max_eie)
            if (m <= 0.0) throw std::invalid_argument("max_eie limits must be positive");
        if (max_eie_n <= 0.0) throw std::invalid_argument("max_eie_n must be positive");
        if (degenerate_split_tolerance <= 0.0 || split_window_max <= degenerate_split_tolerance)
            throw std::invalid_argument("split window must exceed the split tolerance");
        if (degenerate_position >= mode_count_k)
            throw std::invalid_argument("degenerate position outside the measured modes");
    }
};

struct EieResult {
    std::vector<double> eie;                    // componentwise max - min
    std::vector<std::optional<double>> eie_n;   // eie / mean; absent when mean = 0
};

/// EIE across a set of parameter-estimate tuples.
inline EieResult eie(const std::vector<std::vector<double>>& estimates) {
    if (estimates.size() < 2)
        throw std::invalid_argument("EIE needs at least two estimates");
    const std::size_t d = estimates.front().size();
    EieResult out;
    for (std::size_t p = 0; p < d; ++p) {
        double lo = estimates[0][p], hi = lo, sum = 0.0;
        for (const auto& e : estimates) {
            if (e.size() != d) throw std::invalid_argument("estimate tuples differ in size");
            lo = std::min(lo, e[p]);
            hi = std::max(hi, e[p]);
            sum += e[p];
        }
        const double mean = sum / static_cast<double>(estimates.size());
        out.eie.push_back(hi - lo);
        if (mean == 0.0)
            out.eie_n.push_back(std::nullopt);
        else
            out.eie_n.push_back((hi - lo) / mean);
    }
    return out;
}

struct IdentificationResult {
    std::vector<int> peak_for_mode;               // peak index per mode position; empty if none
    std::vector<std::vector<double>> per_combo_params;  // p_i, [combo][param], SI
    std::vector<double> mean_params;
    std::vector<double> eie;
    std::vector<std::optional<double>> eie_n;
    double objective = std::numeric_limits<double>::infinity();  // scalarized EIE
    bool extrapolated = false;
    bool failure_bit = false;
    DieClass classification = DieClass::Valid;
};

namespace detail {

inline bool limits_exceeded(const IdentificationResult& r, const IdentificationConfig& cfg) {
    for (std::size_t p = 0; p < r.eie.size(); ++p) {
        if (r.eie[p] > cfg.max_eie[p]) return true;
        if (r.eie_n[p] && std::abs(*r.eie_n[p]) > cfg.max_eie_n) return true;
    }
    return false;
}

}  // namespace detail

/// Classification rules, applied after the assignment attempt:
/// fewer peaks than expected modes -> Type1 (missing membrane signature);
/// no in-range assignment -> OutOfRange; resolved degenerate-pair split or
/// EIE limit violation -> Type2; otherwise Valid.
inline DieClass classify(const IdentificationResult& result, const std::vector<Peak>& peaks,
                         const IdentificationConfig& cfg) {
    if (static_cast<int>(peaks.size()) < cfg.mode_count_k) return DieClass::Type1NoMembrane;
    if (result.peak_for_mode.empty()) return DieClass::OutOfRange;

    if (cfg.degenerate_position >= 0) {
        const auto pos = static_cast<std::size_t>(cfg.degenerate_position);
        const auto assigned = static_cast<std::size_t>(result.peak_for_mode[pos]);
        const double f_a = peaks[assigned].frequency;
        const double amp_a = peaks[assigned].amplitude;
        for (std::size_t j = 0; j < peaks.size(); ++j) {
            if (std::find(result.peak_for_mode.begin(), result.peak_for_mode.end(),
                          static_cast<int>(j)) != result.peak_for_mode.end())
                continue;  // peaks assigned to other modes are legitimate neighbors
            const double split = std::abs(peaks[j].frequency - f_a) / f_a;
            const double ratio = peaks[j].amplitude / amp_a;
            if (split > cfg.degenerate_split_tolerance && split <= cfg.split_window_max &&
                ratio >= cfg.split_amp_ratio_min && ratio <= cfg.split_amp_ratio_max)
                return DieClass::Type2Asymmetric;
        }
    }
    if (detail::limits_exceeded(result, cfg)) return DieClass::Type2Asymmetric;
    for (std::size_t p = 0; p < result.mean_params.size(); ++p)
        if (result.mean_params[p] < cfg.parameter_ranges[p][0] ||
            result.mean_params[p] > cfg.parameter_ranges[p][1])
            return DieClass::OutOfRange;
    return DieClass::Valid;
}

/// Assigns detected peaks to the K expected modes and identifies parameters.
/// The search enumerates every order-preserving injective assignment (each
/// K-subset of the peaks, kept in frequency order; skipped peaks are treated
/// as spurious), evaluates all C(K, d) frequency combinations through the
/// surrogate, drops candidates with any estimate outside parameter_ranges,
/// and keeps the assignment minimizing the summed EIE_N. Exhaustive search is
/// cheap at this scale and cannot miss the global minimum.
inline IdentificationResult assign_and_identify(const std::vector<Peak>& peaks_in,
                                                const InverseSurrogate& surrogate,
                                                const IdentificationConfig& cfg) {
    cfg.validate();
    if (surrogate.mode_count != cfg.mode_count_k)
        throw std::invalid_argument("surrogate mode count does not match the configuration");
    if (surrogate.param_count != cfg.param_count_d)
        throw std::invalid_argument("surrogate parameter count does not match the configuration");

    // keep the strongest 20 peaks: beyond that only pathological spectra,
    // and the subset enumeration stays trivially cheap
    std::vector<Peak> peaks = peaks_in;
    if (peaks.size() > 20) {
        std::sort(peaks.begin(), peaks.end(),
                  [](const Peak& a, const Peak& b) { return a.amplitude > b.amplitude; });
        peaks.resize(20);
    }
    std::sort(peaks.begin(), peaks.end(),
              [](const Peak& a, const Peak& b) { return a.frequency < b.frequency; });

    IdentificationResult best;
    const int p_count = static_cast<int>(peaks.size());
    const int k = cfg.mode_count_k;
    if (p_count >= k) {
        std::vector<int> pick(static_cast<std::size_t>(k));
        for (int i = 0; i < k; ++i) pick[static_cast<std::size_t>(i)] = i;
        while (true) {
            // evaluate this candidate assignment
            std::vector<std::vector<double>> estimates;
            bool feasible = true;
            bool extrapolated = false;
            for (const auto& combo : surrogate.combos) {
                std::vector<double> freqs;
                freqs.reserve(combo.mode_positions.size());
                for (int pos : combo.mode_positions)
                    freqs.push_back(
                        peaks[static_cast<std::size_t>(pick[static_cast<std::size_t>(pos)])]
                            .frequency);
                auto ev = surrogate.evaluate(combo.combo_index, freqs);
                extrapolated = extrapolated || ev.extrapolated;
                for (std::size_t p = 0; p < ev.params.size() && feasible; ++p)
                    if (ev.params[p] < cfg.parameter_ranges[p][0] ||
                        ev.params[p] > cfg.parameter_ranges[p][1])
                        feasible = false;
                if (!feasible) break;
                estimates.push_back(std::move(ev.params));
            }
            if (feasible) {
                auto spread = eie(estimates);
                double objective = 0.0;
                for (std::size_t p = 0; p < spread.eie.size(); ++p)
                    objective += spread.eie_n[p]
                                     ? std::abs(*spread.eie_n[p])
                                     : spread.eie[p] / surrogate.param_scale[p];
                if (objective < best.objective) {
                    best.objective = objective;
                    best.peak_for_mode = pick;
                    best.per_combo_params = std::move(estimates);
                    best.eie = std::move(spread.eie);
                    best.eie_n = std::move(spread.eie_n);
                    best.extrapolated = extrapolated;
                }
            }
            // next K-subset in lexicographic order
            int pos = k - 1;
            while (pos >= 0 && pick[static_cast<std::size_t>(pos)] == p_count - k + pos) --pos;
            if (pos < 0) break;
            ++pick[static_cast<std::size_t>(pos)];
            for (int j = pos + 1; j < k; ++j)
                pick[static_cast<std::size_t>(j)] = pick[static_cast<std::size_t>(j - 1)] + 1;
        }
    }
    if (!best.peak_for_mode.empty()) {
        best.mean_params.assign(best.per_combo_params.front().size(), 0.0);
        for (const auto& e : best.per_combo_params)
            for (std::size_t p = 0; p < e.size(); ++p) best.mean_params[p] += e[p];
        for (double& m : best.mean_params)
            m /= static_cast<double>(best.per_combo_params.size());
    }
    best.classification = classify(best, peaks, cfg);
    best.failure_bit =
        best.classification != DieClass::Valid || detail::limits_exceeded(best, cfg);
    return best;
}

struct CharacterizationReport {
    double calibrated_stress = 0.0;             // Pa, median over clean dies
    std::vector<double> recommended_max_eie;    // per parameter, percentile over clean dies
    double percentile = 0.95;
    int die_count = 0;
    int valid_count = 0;
};

namespace detail {

inline double median_of(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

inline double percentile_of(std::vector<double> v, double q) {
    std::sort(v.begin(), v.end());
    auto rank = static_cast<std::size_t>(std::ceil(q * static_cast<double>(v.size())));
    rank = std::clamp<std::size_t>(rank, 1, v.size());
    return v[rank - 1];
}

}  // namespace detail

/// Characterization reduction over >= 12 calibration dies identified at
/// d = 2: the calibrated (constant) stress is the median of the per-die
/// stress estimates, and the recommended EIE limits are a percentile of the
/// observed EIE, both over dies without defect flags.
inline CharacterizationReport characterize(const std::vector<IdentificationResult>& results,
                                           const IdentificationConfig& cfg,
                                           double percentile = 0.95) {
    cfg.validate();
    if (cfg.param_count_d != 2)
        throw std::invalid_argument("characterization expects d = 2 (thickness and stress)");
    if (percentile <= 0.0 || percentile > 1.0)
        throw std::invalid_argument("percentile must be in (0, 1]");
    constexpr std::size_t min_dies = 12;
    if (results.size() < min_dies)
        throw std::invalid_argument("characterization needs at least 12 calibration dies, got " +
                                    std::to_string(results.size()));
    std::vector<double> stresses;
    std::vector<std::vector<double>> eies(static_cast<std::size_t>(cfg.param_count_d));
    for (const auto& r : results) {
        if (r.failure_bit) continue;
        stresses.push_back(r.mean_params[1]);  // parameter order: thickness, stress
        for (std::size_t p = 0; p < eies.size(); ++p) eies[p].push_back(r.eie[p]);
    }
    if (stresses.size() < min_dies)
        throw std::invalid_argument("characterization needs at least 12 clean dies, only " +
                                    std::to_string(stresses.size()) + " without defect flags");
    CharacterizationReport rep;
    rep.die_count = static_cast<int>(results.size());
    rep.valid_count = static_cast<int>(stresses.size());
    rep.percentile = percentile;
    rep.calibrated_stress = detail::median_of(stresses);
    for (auto& e : eies) rep.recommended_max_eie.push_back(detail::percentile_of(e, percentile));
    return rep;
}

}  // namespace memsid

#endif  // MEMSID_IDENTIFY_HPP
