#ifndef MEMSID_PEAKS_HPP
#define MEMSID_PEAKS_HPP

#include <memsid/response.hpp>

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

namespace memsid {

struct Peak {
    double frequency = 0.0;  // Hz
    double amplitude = 0.0;
    double width = 0.0;      // HWHM, Hz; meaningful when refined
    bool refined = false;
};

namespace detail {

/// Channels collapsed by pointwise maximum: a mode visible at any scan point
/// stays detectable.
inline std::vector<double> combine_channels(const FrequencyResponse& resp) {
    std::vector<double> combined = resp.amplitude.front();
    for (std::size_t ch = 1; ch < resp.amplitude.size(); ++ch)
        for (std::size_t i = 0; i < combined.size(); ++i)
            combined[i] = std::max(combined[i], resp.amplitude[ch][i]);
    return combined;
}

inline double median(std::vector<double> v) {
    const std::size_t mid = v.size() / 2;
    std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
    return v[mid];
}

}  // namespace detail

/// Local-maximum peak picking over the max-combined spectrum. A sample is a
/// peak when it is a strict local maximum, exceeds min_snr times the noise
/// floor (median of the spectrum), and is strictly the largest sample within
/// +-min_separation. Results are ascending in frequency and pairwise
/// separated by more than min_separation by construction.
inline std::vector<Peak> find_peaks(const FrequencyResponse& resp, double min_snr,
                                    double min_separation) {
    resp.validate();
    if (min_snr <= 1.0) throw std::invalid_argument("min_snr must exceed 1");
    const double df = resp.freqs.size() > 1 ? resp.freqs[1] - resp.freqs[0] : 0.0;
    if (min_separation < df)
        throw std::invalid_argument("min_separation must be at least one bin width");

    const auto spectrum = detail::combine_channels(resp);
    const double floor = detail::median(spectrum);
    const double threshold = min_snr * floor;
    const std::size_t n = spectrum.size();
    // samples within +-min_separation of bin i
    const auto window = static_cast<std::size_t>(min_separation / df + 1e-9);

    std::vector<Peak> peaks;
    for (std::size_t i = 1; i + 1 < n; ++i) {
        if (spectrum[i] <= threshold) continue;
        if (!(spectrum[i] > spectrum[i - 1] && spectrum[i] > spectrum[i + 1])) continue;
        const std::size_t lo = i > window ? i - window : 0;
        const std::size_t hi = std::min(n - 1, i + window);
        bool dominant = true;
        for (std::size_t j = lo; j <= hi && dominant; ++j)
            if (j != i && spectrum[j] >= spectrum[i]) dominant = false;
        if (dominant) peaks.push_back({resp.freqs[i], spectrum[i], 0.0, false});
    }
    return peaks;
}

/// Damped (Levenberg-style) least squares fit of
///   A / (1 + ((f - f0)/gamma)^2) + c
/// over a window of bins around the detected peak. On divergence, a center
/// that leaves the window, or unphysical (A, gamma), the original peak is
/// returned unchanged with the refined flag unset.
inline Peak refine_lorentzian(const FrequencyResponse& resp, const Peak& peak,
                              int window_bins) {
    resp.validate();
    const auto spectrum = detail::combine_channels(resp);
    const std::size_t n = spectrum.size();
    if (window_bins < 2)
        throw std::invalid_argument("refinement window must span at least 5 bins");
    const double df = resp.freqs[1] - resp.freqs[0];
    auto center = static_cast<std::ptrdiff_t>(
        std::llround((peak.frequency - resp.freqs.front()) / df));
    center = std::clamp<std::ptrdiff_t>(center, 0, static_cast<std::ptrdiff_t>(n - 1));
    const std::size_t lo = static_cast<std::size_t>(std::max<std::ptrdiff_t>(0, center - window_bins));
    const std::size_t hi = std::min(n - 1, static_cast<std::size_t>(center + window_bins));
    const std::size_t m = hi - lo + 1;
    if (m < 5) throw std::invalid_argument("refinement window must span at least 5 bins");

    const double f_lo = resp.freqs[lo], f_hi = resp.freqs[hi];
    double base = spectrum[lo];
    for (std::size_t i = lo; i <= hi; ++i) base = std::min(base, spectrum[i]);

    // parameters p = (A, f0, gamma, c)
    Eigen::Vector4d p(std::max(peak.amplitude - base, 1e-12), peak.frequency,
                      2.0 * df, base);
    auto residuals = [&](const Eigen::Vector4d& q, Eigen::VectorXd& r, Eigen::MatrixXd* jac) {
        for (std::size_t i = lo; i <= hi; ++i) {
            const double x = (resp.freqs[i] - q(1)) / q(2);
            const double den = 1.0 + x * x;
            const double model = q(0) / den + q(3);
            const auto row = static_cast<Eigen::Index>(i - lo);
            r(row) = model - spectrum[i];
            if (jac) {
                (*jac)(row, 0) = 1.0 / den;
                (*jac)(row, 1) = q(0) * 2.0 * x / (den * den * q(2));
                (*jac)(row, 2) = q(0) * 2.0 * x * x / (den * den * q(2));
                (*jac)(row, 3) = 1.0;
            }
        }
    };

    Eigen::VectorXd r(static_cast<Eigen::Index>(m));
    Eigen::MatrixXd jac(static_cast<Eigen::Index>(m), 4);
    residuals(p, r, &jac);
    double cost = r.squaredNorm();
    double lambda = 1e-3;
    bool ok = true;
    for (int it = 0; it < 100; ++it) {
        Eigen::Matrix4d h = jac.transpose() * jac;
        h.diagonal() += lambda * h.diagonal().cwiseMax(1e-12);
        Eigen::Vector4d step = h.ldlt().solve(jac.transpose() * r);
        Eigen::Vector4d trial = p - step;
        if (!trial.allFinite()) {
            ok = false;
            break;
        }
        Eigen::VectorXd rt(static_cast<Eigen::Index>(m));
        residuals(trial, rt, nullptr);
        const double trial_cost = rt.squaredNorm();
        if (trial_cost < cost) {
            const double rel_drop = (cost - trial_cost) / (cost > 0.0 ? cost : 1.0);
            p = trial;
            cost = trial_cost;
            lambda = std::max(lambda * 0.3, 1e-12);
            residuals(p, r, &jac);
            if (rel_drop < 1e-12) break;
        } else {
            lambda *= 10.0;
            if (lambda > 1e12) break;
        }
    }
    // success requires a physical line that stands above the residual misfit;
    // a window of bare noise fits with A comparable to the residual and is
    // rejected here, honoring the fallback contract
    const double rms = std::sqrt(cost / static_cast<double>(m));
    if (!ok || !p.allFinite() || p(0) <= 0.0 || p(2) <= 0.0 || p(2) > (f_hi - f_lo) ||
        p(1) < f_lo || p(1) > f_hi || p(0) < 3.0 * rms)
        return peak;  // fallback: keep the local-max estimate

    Peak out;
    out.frequency = p(1);
    out.amplitude = p(0) + p(3);
    out.width = p(2);
    out.refined = true;
    return out;
}

}  // namespace memsid

#endif  // MEMSID_PEAKS_HPP
