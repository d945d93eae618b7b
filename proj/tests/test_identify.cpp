#include <catch2/catch_amalgamated.hpp>

#include <memsid/identify.hpp>
#include <memsid/plate.hpp>
#include <memsid/response.hpp>
#include <memsid/rng.hpp>
#include <memsid/surrogate.hpp>

#include <algorithm>
#include <cmath>
#include <vector>

using namespace memsid;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

SensorDesign default_design() {
    SensorDesign d;
    d.name = "default";
    d.membrane.side_a = 1300e-6;
    d.membrane.side_b = 1300e-6;
    d.membrane.thickness_z = 15e-6;
    d.membrane.passivation_thickness = 4e-6;
    d.membrane.passivation_density = 2200.0;
    return d;
}

std::vector<double> linspace(double lo, double hi, int n) {
    std::vector<double> v(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i)
        v[static_cast<std::size_t>(i)] = lo + (hi - lo) * i / (n - 1);
    return v;
}

/// Two-parameter surrogate over the standard 9x9 training matrix.
InverseSurrogate surrogate_d2() {
    auto pm = build_parameter_matrix(default_design(), linspace(12e-6, 18e-6, 9),
                                     linspace(0.0, 100e6, 9), 4);
    return fit_inverse(pm, 1e-3, 4);
}

/// One-parameter surrogate: thickness only, stress pinned at 50 MPa.
InverseSurrogate surrogate_d1() {
    auto pm = build_parameter_matrix(default_design(), linspace(12e-6, 18e-6, 9),
                                     {50e6}, 3);
    return fit_inverse(pm, 1e-3, 4);
}

IdentificationConfig config_d2() {
    IdentificationConfig cfg;
    cfg.parameter_ranges = {{12e-6, 18e-6}, {-10e6, 110e6}};
    cfg.max_eie = {0.25e-6, 20e6};
    cfg.max_eie_n = 0.05;
    cfg.mode_count_k = 4;
    cfg.param_count_d = 2;
    return cfg;
}

IdentificationConfig config_d1() {
    IdentificationConfig cfg;
    cfg.parameter_ranges = {{12e-6, 18e-6}};
    cfg.max_eie = {0.25e-6};
    cfg.max_eie_n = 0.05;
    cfg.mode_count_k = 3;
    cfg.param_count_d = 1;
    cfg.mode = IdentifyMode::WaferTest;
    return cfg;
}

/// Exact distinct-mode frequencies of a die turned into an ideal peak list.
std::vector<Peak> exact_peaks(const MembraneGeometry& g, double stress, int k) {
    auto dm = distinct_mode_frequencies(g, MaterialProps{}, StressState{stress}, k);
    std::vector<Peak> peaks;
    for (double f : dm.frequencies) peaks.push_back({f, 1.0, f / 1000.0, true});
    return peaks;
}

}  // namespace

TEST_CASE("EIE arithmetic matches the worked example", "[identify]") {
    // thickness estimates in micrometers; units cancel in EIE_N
    std::vector<std::vector<double>> est = {{15.0}, {15.2}, {14.9}, {15.1}, {15.05}, {14.95}};
    auto r = eie(est);
    REQUIRE(r.eie.size() == 1);
    CHECK_THAT(r.eie[0], WithinRel(0.3, 1e-12));
    REQUIRE(r.eie_n[0].has_value());
    CHECK_THAT(*r.eie_n[0], WithinRel(0.0199557, 1e-4));
}

TEST_CASE("EIE componentwise over multi-parameter tuples", "[identify]") {
    std::vector<std::vector<double>> est = {{14.0, 40e6}, {15.0, 50e6}, {16.0, 45e6}};
    auto r = eie(est);
    REQUIRE(r.eie.size() == 2);
    CHECK_THAT(r.eie[0], WithinRel(2.0, 1e-12));
    CHECK_THAT(r.eie[1], WithinRel(10e6, 1e-12));
    CHECK_THAT(*r.eie_n[0], WithinRel(2.0 / 15.0, 1e-12));
    CHECK_THAT(*r.eie_n[1], WithinRel(10.0 / 45.0, 1e-12));
}

TEST_CASE("EIE of identical estimates is zero and zero-mean has no EIE_N", "[identify]") {
    auto same = eie({{7.0}, {7.0}, {7.0}});
    CHECK(same.eie[0] == 0.0);
    CHECK_THAT(*same.eie_n[0], WithinAbs(0.0, 1e-15));

    auto centred = eie({{1.0}, {-1.0}});
    CHECK(centred.eie[0] == 2.0);
    CHECK_FALSE(centred.eie_n[0].has_value());
}

TEST_CASE("EIE is invariant under translation", "[identify]") {
    // binary-exact values keep the identity exact in floating point
    std::vector<std::vector<double>> a = {{1.25}, {1.5}, {1.75}, {1.375}};
    std::vector<std::vector<double>> b = a;
    for (auto& e : b) e[0] += 100.0;
    CHECK(eie(a).eie[0] == eie(b).eie[0]);
}

TEST_CASE("EIE rejects degenerate input", "[identify]") {
    CHECK_THROWS_AS(eie({{1.0}}), std::invalid_argument);
    CHECK_THROWS_AS(eie({{1.0}, {1.0, 2.0}}), std::invalid_argument);
}

TEST_CASE("noiseless closed loop recovers the true parameters", "[identify]") {
    auto sur = surrogate_d2();
    auto cfg = config_d2();
    auto g = default_design().membrane;
    g.thickness_z = 14.3e-6;
    const double stress = 43e6;
    auto peaks = exact_peaks(g, stress, 4);
    REQUIRE(peaks.size() == 4);

    auto res = assign_and_identify(peaks, sur, cfg);
    CHECK(res.classification == DieClass::Valid);
    CHECK_FALSE(res.failure_bit);
    CHECK_FALSE(res.extrapolated);
    REQUIRE(res.peak_for_mode == std::vector<int>{0, 1, 2, 3});
    REQUIRE(res.per_combo_params.size() == 6);
    CHECK_THAT(res.mean_params[0], WithinAbs(14.3e-6, 20e-9));
    CHECK_THAT(res.mean_params[1], WithinAbs(43e6, 0.2e6));
    // every single-combination estimate is close on its own
    for (const auto& p : res.per_combo_params) {
        CHECK_THAT(p[0], WithinAbs(14.3e-6, 40e-9));
        CHECK_THAT(p[1], WithinAbs(43e6, 0.5e6));
    }
    CHECK(res.eie[0] < 80e-9);
    CHECK(res.eie[1] < 1e6);
    CHECK(res.objective < 0.05);
}

TEST_CASE("one-parameter closed loop at the calibrated stress", "[identify]") {
    auto sur = surrogate_d1();
    REQUIRE(sur.param_count == 1);
    REQUIRE(sur.combos.size() == 3);
    auto cfg = config_d1();
    auto g = default_design().membrane;
    g.thickness_z = 14.7e-6;
    auto peaks = exact_peaks(g, 50e6, 3);

    auto res = assign_and_identify(peaks, sur, cfg);
    CHECK(res.classification == DieClass::Valid);
    REQUIRE(res.per_combo_params.size() == 3);
    CHECK_THAT(res.mean_params[0], WithinAbs(14.7e-6, 20e-9));
    CHECK(res.eie[0] < 80e-9);
}

TEST_CASE("spurious peaks are skipped by the assignment", "[identify]") {
    auto sur = surrogate_d2();
    auto cfg = config_d2();
    auto g = default_design().membrane;
    g.thickness_z = 14.3e-6;
    auto peaks = exact_peaks(g, 43e6, 4);
    // two artifacts far from any modal line, weak amplitude
    peaks.push_back({120e3, 0.02, 500.0, true});
    peaks.push_back({300e3, 0.02, 500.0, true});
    std::sort(peaks.begin(), peaks.end(),
              [](const Peak& a, const Peak& b) { return a.frequency < b.frequency; });

    auto res = assign_and_identify(peaks, sur, cfg);
    CHECK(res.classification == DieClass::Valid);
    // the chosen peaks are exactly the four modal ones
    std::vector<double> chosen;
    for (int idx : res.peak_for_mode)
        chosen.push_back(peaks[static_cast<std::size_t>(idx)].frequency);
    auto truth = exact_peaks(g, 43e6, 4);
    REQUIRE(chosen.size() == 4);
    for (std::size_t i = 0; i < 4; ++i)
        CHECK_THAT(chosen[i], WithinRel(truth[i].frequency, 1e-12));
    CHECK_THAT(res.mean_params[0], WithinAbs(14.3e-6, 20e-9));
}

TEST_CASE("selected assignment is the exhaustive optimum", "[identify]") {
    auto sur = surrogate_d2();
    auto cfg = config_d2();
    auto g = default_design().membrane;
    g.thickness_z = 15.8e-6;
    auto peaks = exact_peaks(g, 60e6, 4);
    peaks.push_back({110e3, 0.5, 500.0, true});
    peaks.push_back({430e3, 0.5, 500.0, true});
    std::sort(peaks.begin(), peaks.end(),
              [](const Peak& a, const Peak& b) { return a.frequency < b.frequency; });

    auto res = assign_and_identify(peaks, sur, cfg);
    REQUIRE_FALSE(res.peak_for_mode.empty());

    // brute-force reference: every 4-subset of the 6 peaks, in order
    double best_obj = std::numeric_limits<double>::infinity();
    std::vector<int> best_pick;
    std::vector<int> idx = {0, 1, 2, 3, 4, 5};
    std::vector<bool> mask = {true, true, true, true, false, false};
    std::sort(mask.begin(), mask.end());
    do {
        std::vector<int> pick;
        for (std::size_t i = 0; i < mask.size(); ++i)
            if (mask[i]) pick.push_back(idx[i]);
        bool feasible = true;
        std::vector<std::vector<double>> est;
        for (const auto& combo : sur.combos) {
            std::vector<double> freqs;
            for (int pos : combo.mode_positions)
                freqs.push_back(peaks[static_cast<std::size_t>(pick[static_cast<std::size_t>(pos)])]
                                    .frequency);
            auto ev = sur.evaluate(combo.combo_index, freqs);
            for (std::size_t p = 0; p < ev.params.size(); ++p)
                if (ev.params[p] < cfg.parameter_ranges[p][0] ||
                    ev.params[p] > cfg.parameter_ranges[p][1])
                    feasible = false;
            if (!feasible) break;
            est.push_back(ev.params);
        }
        if (!feasible) continue;
        auto spread = eie(est);
        double obj = 0.0;
        for (std::size_t p = 0; p < spread.eie.size(); ++p)
            obj += spread.eie_n[p] ? std::abs(*spread.eie_n[p])
                                   : spread.eie[p] / sur.param_scale[p];
        if (obj < best_obj) {
            best_obj = obj;
            best_pick = pick;
        }
    } while (std::next_permutation(mask.begin(), mask.end()));

    REQUIRE_FALSE(best_pick.empty());
    CHECK_THAT(res.objective, WithinRel(best_obj, 1e-12));
    CHECK(res.peak_for_mode == best_pick);
}

TEST_CASE("missing membrane signature classifies as type 1", "[identify]") {
    auto sur = surrogate_d2();
    auto cfg = config_d2();

    auto empty = assign_and_identify({}, sur, cfg);
    CHECK(empty.classification == DieClass::Type1NoMembrane);
    CHECK(empty.failure_bit);
    CHECK(empty.peak_for_mode.empty());
    CHECK(empty.per_combo_params.empty());

    std::vector<Peak> two = {{80e3, 1.0, 100.0, true}, {200e3, 1.0, 100.0, true}};
    auto few = assign_and_identify(two, sur, cfg);
    CHECK(few.classification == DieClass::Type1NoMembrane);
    CHECK(few.failure_bit);
}

TEST_CASE("thickness far outside the window classifies as out of range", "[identify]") {
    auto sur = surrogate_d2();
    auto cfg = config_d2();
    auto g = default_design().membrane;
    g.thickness_z = 20e-6;  // beyond the 12-18 um identification window
    auto peaks = exact_peaks(g, 50e6, 4);

    auto res = assign_and_identify(peaks, sur, cfg);
    CHECK(res.classification == DieClass::OutOfRange);
    CHECK(res.failure_bit);
    CHECK(res.peak_for_mode.empty());
}

TEST_CASE("resolved degenerate split classifies as type 2", "[identify]") {
    auto sur = surrogate_d2();
    auto cfg = config_d2();
    // limits and ranges wide open so only the split rule can flag the die:
    // the asymmetric spectrum is inconsistent with the square model, so tight
    // ranges would discard every assignment before the split check runs
    cfg.parameter_ranges = {{8e-6, 25e-6}, {-300e6, 400e6}};
    cfg.max_eie = {1.0, 1e12};
    cfg.max_eie_n = 1e6;

    DieTruth truth;
    truth.geometry = default_design().membrane;
    truth.stress.passivation_stress = 50e6;
    truth.defect = {DefectSpec::Kind::Asymmetry, 0.02};
    auto geom_eff = *effective_geometry(truth);
    auto modes = modal_frequencies(geom_eff, MaterialProps{}, truth.stress, 6);
    std::vector<Peak> peaks;
    for (const auto& m : modes) peaks.push_back({m.frequency, 1.0, m.frequency / 1000.0, true});
    std::sort(peaks.begin(), peaks.end(),
              [](const Peak& a, const Peak& b) { return a.frequency < b.frequency; });

    auto res = assign_and_identify(peaks, sur, cfg);
    CHECK(res.classification == DieClass::Type2Asymmetric);
    CHECK(res.failure_bit);
}

TEST_CASE("split below tolerance or at artifact amplitude stays valid", "[identify]") {
    auto sur = surrogate_d2();
    auto cfg = config_d2();
    auto g = default_design().membrane;
    g.thickness_z = 15e-6;
    auto base = exact_peaks(g, 50e6, 4);
    const double f_pair = base[1].frequency;

    SECTION("spare peak within the tolerance band") {
        auto peaks = base;
        peaks.push_back({f_pair * 1.004, 1.0, f_pair / 1000.0, true});
        std::sort(peaks.begin(), peaks.end(),
                  [](const Peak& a, const Peak& b) { return a.frequency < b.frequency; });
        auto res = assign_and_identify(peaks, sur, cfg);
        CHECK(res.classification == DieClass::Valid);
        CHECK_FALSE(res.failure_bit);
    }
    SECTION("spare peak at artifact amplitude") {
        auto peaks = base;
        peaks.push_back({f_pair * 1.02, 0.02, f_pair / 1000.0, true});
        std::sort(peaks.begin(), peaks.end(),
                  [](const Peak& a, const Peak& b) { return a.frequency < b.frequency; });
        auto res = assign_and_identify(peaks, sur, cfg);
        CHECK(res.classification == DieClass::Valid);
    }
    SECTION("spare peak at comparable amplitude beyond tolerance") {
        auto peaks = base;
        peaks.push_back({f_pair * 1.02, 0.8, f_pair / 1000.0, true});
        std::sort(peaks.begin(), peaks.end(),
                  [](const Peak& a, const Peak& b) { return a.frequency < b.frequency; });
        auto res = assign_and_identify(peaks, sur, cfg);
        CHECK(res.classification == DieClass::Type2Asymmetric);
    }
}

TEST_CASE("EIE limit violation flags the die", "[identify]") {
    auto sur = surrogate_d2();
    auto cfg = config_d2();
    cfg.max_eie_n = 1e-12;  // any nonzero spread trips the limit
    auto g = default_design().membrane;
    auto peaks = exact_peaks(g, 50e6, 4);

    auto res = assign_and_identify(peaks, sur, cfg);
    CHECK(res.classification == DieClass::Type2Asymmetric);
    CHECK(res.failure_bit);
}

TEST_CASE("failure bit mirrors classification and limits", "[identify]") {
    auto sur = surrogate_d2();
    auto cfg = config_d2();
    auto g = default_design().membrane;
    for (double z : {13e-6, 15e-6, 17e-6}) {
        g.thickness_z = z;
        auto res = assign_and_identify(exact_peaks(g, 50e6, 4), sur, cfg);
        const bool expect =
            res.classification != DieClass::Valid || detail::limits_exceeded(res, cfg);
        CHECK(res.failure_bit == expect);
        CHECK(res.classification == DieClass::Valid);
    }
}

TEST_CASE("mean EIE grows with frequency jitter", "[identify]") {
    auto sur = surrogate_d1();
    auto cfg = config_d1();
    cfg.max_eie = {1.0};  // keep every die in the statistics
    cfg.max_eie_n = 1e6;

    AcquisitionSpec acq;
    std::vector<double> mean_eie;
    for (double sigma : {1e-4, 5e-4, 2e-3}) {
        acq.freq_jitter_sigma = sigma;
        double sum = 0.0;
        int n = 0;
        for (int die = 0; die < 60; ++die) {
            DieTruth truth;
            truth.geometry = default_design().membrane;
            truth.stress.passivation_stress = 50e6;
            truth.rng_seed = die_seed(71, 0, die);
            auto resp = synthesize(truth, acq);
            auto peaks = find_peaks(resp, 5.0, 3e3);
            auto res = assign_and_identify(peaks, sur, cfg);
            if (res.classification != DieClass::Valid) continue;
            sum += res.eie[0];
            ++n;
        }
        REQUIRE(n > 40);
        mean_eie.push_back(sum / n);
    }
    CHECK(mean_eie[0] <= mean_eie[1]);
    CHECK(mean_eie[1] <= mean_eie[2]);
}

TEST_CASE("characterization reduces clean dies to stress and EIE limits", "[identify]") {
    auto cfg = config_d2();
    std::vector<IdentificationResult> results;
    // 15 clean dies with known stress estimates and EIE, plus 3 flagged ones
    std::vector<double> stresses = {48e6, 52e6, 50e6, 49e6, 51e6, 47e6, 53e6, 50.5e6,
                                    49.5e6, 50.2e6, 49.8e6, 51.5e6, 48.5e6, 50.1e6, 49.9e6};
    for (std::size_t i = 0; i < stresses.size(); ++i) {
        IdentificationResult r;
        r.mean_params = {15e-6, stresses[i]};
        r.eie = {double(i + 1) * 1e-8, double(i + 1) * 1e5};
        r.eie_n = {r.eie[0] / 15e-6, r.eie[1] / stresses[i]};
        r.classification = DieClass::Valid;
        r.failure_bit = false;
        results.push_back(r);
    }
    for (int i = 0; i < 3; ++i) {
        IdentificationResult r;
        r.mean_params = {15e-6, 500e6};  // nonsense, must be ignored
        r.eie = {1e-3, 1e9};
        r.eie_n = {1.0, 2.0};
        r.classification = DieClass::Type2Asymmetric;
        r.failure_bit = true;
        results.push_back(r);
    }

    auto rep = characterize(results, cfg);
    CHECK(rep.die_count == 18);
    CHECK(rep.valid_count == 15);
    CHECK_THAT(rep.calibrated_stress, WithinRel(50e6, 1e-12));  // median of the 15
    // nearest-rank 95th percentile of 15 samples is the largest one
    CHECK_THAT(rep.recommended_max_eie[0], WithinRel(15e-8, 1e-12));
    CHECK_THAT(rep.recommended_max_eie[1], WithinRel(15e5, 1e-12));

    auto rep50 = characterize(results, cfg, 0.5);
    CHECK_THAT(rep50.recommended_max_eie[0], WithinRel(8e-8, 1e-12));
}

TEST_CASE("characterization rejects thin samples", "[identify]") {
    auto cfg = config_d2();
    std::vector<IdentificationResult> results(11);
    for (auto& r : results) {
        r.mean_params = {15e-6, 50e6};
        r.eie = {1e-8, 1e5};
        r.eie_n = {1e-3, 1e-3};
    }
    CHECK_THROWS_AS(characterize(results, cfg), std::invalid_argument);

    results.resize(13);
    for (auto& r : results) {
        r.mean_params = {15e-6, 50e6};
        r.eie = {1e-8, 1e5};
        r.eie_n = {1e-3, 1e-3};
    }
    results[0].failure_bit = true;
    results[1].failure_bit = true;
    CHECK_THROWS_AS(characterize(results, cfg), std::invalid_argument);

    auto cfg1 = config_d1();
    std::vector<IdentificationResult> ok(12);
    for (auto& r : ok) {
        r.mean_params = {15e-6, 50e6};
        r.eie = {1e-8, 1e5};
        r.eie_n = {1e-3, 1e-3};
    }
    CHECK_THROWS_AS(characterize(ok, cfg1), std::invalid_argument);
}

TEST_CASE("identification configuration is validated", "[identify]") {
    auto cfg = config_d2();
    auto sur = surrogate_d2();

    SECTION("K = d leaves no spread to measure") {
        cfg.mode_count_k = 2;
        CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    }
    SECTION("range count must match d") {
        cfg.parameter_ranges.pop_back();
        CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    }
    SECTION("inverted range") {
        cfg.parameter_ranges[0] = {18e-6, 12e-6};
        CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    }
    SECTION("nonpositive limits") {
        cfg.max_eie[0] = 0.0;
        CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    }
    SECTION("split window must exceed tolerance") {
        cfg.split_window_max = cfg.degenerate_split_tolerance;
        CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    }
    SECTION("degenerate position outside mode list") {
        cfg.degenerate_position = 4;
        CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    }
    SECTION("surrogate and configuration must agree") {
        cfg.mode_count_k = 3;
        CHECK_THROWS_AS(assign_and_identify({}, sur, cfg), std::invalid_argument);
    }
}
