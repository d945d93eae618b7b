#ifndef MEMSID_RESPONSE_HPP
#define MEMSID_RESPONSE_HPP

#include <memsid/plate.hpp>
#include <memsid/rng.hpp>

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace memsid {

/// Relative position on the die: fractions of side_a / side_b. The prober
/// aligns to the die outline, so scan points track an asymmetric membrane.
struct RelPoint {
    double x = 0.5;
    double y = 0.5;

    void validate() const {
        if (x <= 0.0 || x >= 1.0 || y <= 0.0 || y >= 1.0)
            throw std::invalid_argument("relative point must be strictly inside (0,1)^2");
    }
};

struct DefectSpec {
    enum class Kind { None, NoMembrane, Asymmetry };
    Kind kind = Kind::None;
    double ratio = 0.0;  // epsilon for Asymmetry

    void validate() const {
        if (kind == Kind::Asymmetry && ratio <= 0.0)
            throw std::invalid_argument("asymmetry defect requires ratio > 0");
    }
};

/// Ground truth for one simulated die.
struct DieTruth {
    MembraneGeometry geometry;
    StressState stress;
    DefectSpec defect;
    std::uint64_t rng_seed = 0;

    void validate() const {
        defect.validate();
        if (defect.kind != DefectSpec::Kind::NoMembrane) geometry.validate();
    }
};

struct AcquisitionSpec {
    double f_min = 10e3;            // Hz
    double f_max = 1e6;             // Hz
    int bin_count = 4096;
    double q_factor = 500.0;        // per-mode quality factor
    double noise_floor = 1e-3;      // relative to the largest peak
    double freq_jitter_sigma = 5e-4;  // relative peak-frequency noise
    double spurious_peak_rate = 2.0;  // expected spurious count (Poisson)
    std::vector<RelPoint> measurement_points = {{0.25, 0.25}, {0.6, 0.35}};
    RelPoint electrode_position = {0.3, 0.4};

    void validate() const {
        if (!(f_min < f_max) || f_min <= 0.0)
            throw std::invalid_argument("acquisition needs 0 < f_min < f_max");
        if (bin_count < 2) throw std::invalid_argument("bin_count must be >= 2");
        if (q_factor <= 0.0) throw std::invalid_argument("Q must be positive");
        if (noise_floor < 0.0 || freq_jitter_sigma < 0.0 || spurious_peak_rate < 0.0)
            throw std::invalid_argument("noise settings must be non-negative");
        if (measurement_points.empty())
            throw std::invalid_argument("need at least one measurement point");
        for (const auto& p : measurement_points) p.validate();
        electrode_position.validate();
    }

    double bin_width() const { return (f_max - f_min) / (bin_count - 1); }
};

/// Synthetic measured spectrum: one amplitude channel per measurement point
/// over a shared frequency grid.
struct FrequencyResponse {
    std::vector<double> freqs;                    // ascending, Hz
    std::vector<std::vector<double>> amplitude;   // [point][bin]

    void validate() const {
        if (freqs.empty() || amplitude.empty())
            throw std::invalid_argument("empty frequency response");
        for (const auto& ch : amplitude) {
            if (ch.size() != freqs.size())
                throw std::invalid_argument("channel length mismatch");
            for (double a : ch)
                if (!std::isfinite(a) || a < 0.0)
                    throw std::invalid_argument("amplitudes must be finite and >= 0");
        }
    }
};

/// Defect-adjusted geometry. Asymmetry stretches side_a by (1+eps) and
/// shrinks side_b by the same factor (area preserving); a missing membrane
/// has no geometry at all.
inline std::optional<MembraneGeometry> effective_geometry(const DieTruth& truth) {
    truth.validate();
    switch (truth.defect.kind) {
        case DefectSpec::Kind::NoMembrane:
            return std::nullopt;
        case DefectSpec::Kind::Asymmetry: {
            MembraneGeometry g = truth.geometry;
            g.side_a *= 1.0 + truth.defect.ratio;
            g.side_b /= 1.0 + truth.defect.ratio;
            return g;
        }
        case DefectSpec::Kind::None:
        default:
            return truth.geometry;
    }
}

namespace detail {

struct SynthMode {
    ModeIndex mode;
    double frequency;
};

/// All raw modes (degenerate pairs kept separate) with f <= f_max,
/// enumeration order (m, n) ascending — the fixed RNG draw order.
inline std::vector<SynthMode> modes_in_band(const MembraneGeometry& g, const MaterialProps& mat,
                                            const StressState& s, double f_min, double f_max) {
    check_buckling(g, mat, s);
    const double rigidity = bending_rigidity(g, mat);
    const double tension = membrane_tension(g, s);
    const double rho_area = areal_density(g, mat);
    std::vector<SynthMode> out;
    for (int m = 1;; ++m) {
        const double f_m1 = mode_frequency_from_kappa(mode_wavenumber_sq(g, m, 1), rigidity,
                                                      tension, rho_area);
        if (f_m1 > f_max) break;
        for (int n = 1;; ++n) {
            const double f = mode_frequency_from_kappa(mode_wavenumber_sq(g, m, n), rigidity,
                                                      tension, rho_area);
            if (f > f_max) break;
            if (f >= f_min) out.push_back({{m, n}, f});
        }
    }
    return out;
}

}  // namespace detail

/// Synthesizes the measured spectrum for one die. Deterministic in
/// truth.rng_seed; the draw order is fixed as jitter (one normal per mode),
/// then spurious peaks, then additive bin noise, so identical truths always
/// produce identical responses regardless of caller context.
inline FrequencyResponse synthesize(const DieTruth& truth, const AcquisitionSpec& acq,
                                    const MaterialProps& mat = {}) {
    acq.validate();
    truth.validate();
    SplitMix64 rng(substream(truth.rng_seed, seed_salt::acquisition));

    FrequencyResponse resp;
    resp.freqs.resize(static_cast<std::size_t>(acq.bin_count));
    const double df = acq.bin_width();
    for (int i = 0; i < acq.bin_count; ++i)
        resp.freqs[static_cast<std::size_t>(i)] = acq.f_min + df * i;
    resp.amplitude.assign(acq.measurement_points.size(),
                          std::vector<double>(static_cast<std::size_t>(acq.bin_count), 0.0));

    const auto geom = effective_geometry(truth);
    double a_ref = 1.0;  // amplitude scale for noise when no peaks exist
    if (geom) {
        auto modes = detail::modes_in_band(*geom, mat, truth.stress, acq.f_min, acq.f_max);
        struct Line {
            double f0, gamma;
            std::vector<double> amp;  // per channel
        };
        std::vector<Line> lines;
        double max_amp = 0.0;
        for (const auto& sm : modes) {
            const double jitter = 1.0 + rng.normal(0.0, acq.freq_jitter_sigma);
            Line line;
            line.f0 = sm.frequency * jitter;
            line.gamma = line.f0 / (2.0 * acq.q_factor);
            const double excite = std::abs(mode_amplitude_at_point(
                sm.mode, *geom, acq.electrode_position.x * geom->side_a,
                acq.electrode_position.y * geom->side_b));
            for (const auto& p : acq.measurement_points) {
                const double pickup = std::abs(mode_amplitude_at_point(
                    sm.mode, *geom, p.x * geom->side_a, p.y * geom->side_b));
                line.amp.push_back(excite * pickup);
                max_amp = std::max(max_amp, excite * pickup);
            }
            lines.push_back(std::move(line));
        }
        if (max_amp > 0.0) a_ref = max_amp;
        for (const auto& line : lines)
            for (std::size_t ch = 0; ch < resp.amplitude.size(); ++ch)
                for (std::size_t i = 0; i < resp.freqs.size(); ++i) {
                    const double x = (resp.freqs[i] - line.f0) / line.gamma;
                    resp.amplitude[ch][i] += line.amp[ch] / (1.0 + x * x);
                }
        // spurious narrow peaks: same artifact in every channel
        const int n_spurious = rng.poisson(acq.spurious_peak_rate);
        for (int sp = 0; sp < n_spurious; ++sp) {
            const double f_sp = rng.uniform(acq.f_min, acq.f_max);
            const double amp_sp = rng.uniform(2.0, 20.0) * acq.noise_floor * a_ref;
            const double gamma_sp = 1.5 * df;  // ~3 bins FWHM
            for (auto& ch : resp.amplitude)
                for (std::size_t i = 0; i < resp.freqs.size(); ++i) {
                    const double x = (resp.freqs[i] - f_sp) / gamma_sp;
                    ch[i] += amp_sp / (1.0 + x * x);
                }
        }
    }
    // additive uniform noise floor, channel-major order
    if (acq.noise_floor > 0.0)
        for (auto& ch : resp.amplitude)
            for (double& v : ch) v += rng.uniform(0.0, acq.noise_floor * a_ref);
    return resp;
}

/// CSV dump: freq_hz, one amplitude column per measurement point.
inline void dump_response_csv(const FrequencyResponse& resp, std::ostream& out) {
    resp.validate();
    out << "freq_hz";
    for (std::size_t ch = 0; ch < resp.amplitude.size(); ++ch) out << ",amp_point" << ch + 1;
    out << '\n';
    char buf[64];
    for (std::size_t i = 0; i < resp.freqs.size(); ++i) {
        std::snprintf(buf, sizeof buf, "%.9g", resp.freqs[i]);
        out << buf;
        for (const auto& ch : resp.amplitude) {
            std::snprintf(buf, sizeof buf, "%.9g", ch[i]);
            out << ',' << buf;
        }
        out << '\n';
    }
}

inline void dump_response_csv(const FrequencyResponse& resp, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
    dump_response_csv(resp, out);
    if (!out) throw std::runtime_error("write failed for '" + path + "'");
}

}  // namespace memsid

#endif  // MEMSID_RESPONSE_HPP
