import math

import numpy as np
import pytest
from scipy import integrate, stats

from pollenqpi import features as F
from pollenqpi.field import GridSpec, PhaseMap
from pollenqpi.holosim import CLASS_PARAMS, PollenPhantom, Profile, phantom_phase

G = GridSpec(256, 256)


def iou(a, b):
    return np.logical_and(a, b).sum() / np.logical_or(a, b).sum()


def record(mp, label="unknown"):
    return F.FeatureRecord("g", mp, 1.0, 1.0, mp, mp, label)


class TestSegment:
    @pytest.mark.parametrize("profile, peak", [(Profile.HEMISPHERE, 9.0), (Profile.PLATEAU, 3.9)])
    def test_iou_against_generating_disc(self, profile, peak):
        ph = PollenPhantom(profile, radius=90, peak_phase=peak)
        mask = F.segment(phantom_phase(ph, G))
        assert iou(mask.membership, ph.support(G)) >= 0.95

    def test_all_zero_map(self):
        with pytest.raises(F.NoGrainFound):
            F.segment(PhaseMap(G, np.zeros(G.shape), wrapped=False))

    def test_noise_only_map(self, rng):
        with pytest.raises(F.NoGrainFound):
            F.segment(PhaseMap(G, rng.normal(0, 0.05, G.shape), wrapped=False))

    def test_noisy_grain(self, rng):
        ph = PollenPhantom(Profile.PLATEAU, radius=80, peak_phase=2.0)
        noisy = phantom_phase(ph, G).values + rng.normal(0, 0.1, G.shape)
        mask = F.segment(PhaseMap(G, noisy, wrapped=False))
        assert iou(mask.membership, ph.support(G)) >= 0.95

    def test_largest_component_with_holes_filled(self):
        v = np.zeros(G.shape)
        v[50:150, 50:150] = 5.0
        v[90:100, 90:100] = 0.0   # hole
        v[200:210, 200:210] = 5.0  # small second blob
        mask = F.segment(PhaseMap(G, v, wrapped=False), level=1.0)
        assert mask.area_px == 100 * 100
        assert mask.membership[95, 95]
        assert not mask.membership[205, 205]

    def test_mask_invariants(self):
        m = np.zeros((8, 8), bool)
        m[1, 1] = m[5, 5] = True
        with pytest.raises(ValueError):
            F.PollenMask.from_membership(GridSpec(8, 8), m)
        m[5, 5] = False
        mask = F.PollenMask.from_membership(GridSpec(8, 8), m)
        assert (mask.area_px, mask.perimeter_px) == (1, 4)

    def test_perimeter_of_square(self):
        m = np.zeros((20, 20), bool)
        m[3:10, 4:15] = True
        assert F.perimeter_edges(m) == 2 * (7 + 11)


class TestMeasures:
    def test_plateau_mean(self):
        ph = PollenPhantom(Profile.PLATEAU, radius=60, peak_phase=3.9, rim_softness=0.0)
        p = phantom_phase(ph, G)
        assert F.mean_phase(p, F.segment(p)) == pytest.approx(3.90, abs=1e-12)

    def test_hemisphere_mean_matches_quadrature(self):
        # disc average of sqrt(1 - r^2): integral over the unit disc divided by pi
        val, _ = integrate.quad(lambda r: 2 * np.pi * r * np.sqrt(1 - r * r), 0, 1)
        assert val / np.pi == pytest.approx(2 / 3, rel=1e-10)
        ph = PollenPhantom(Profile.HEMISPHERE, radius=100, peak_phase=9.0, rim_softness=0.0)
        p = phantom_phase(ph, G)
        mask = F.PollenMask.from_membership(G, ph.support(G))
        assert F.mean_phase(p, mask) == pytest.approx(9.0 * val / np.pi, rel=0.005)

    def test_optical_volume_plateau(self):
        g = GridSpec(128, 128, pixel_pitch=0.3)
        ph = PollenPhantom(Profile.PLATEAU, radius=40, peak_phase=2.5, rim_softness=0.0)
        p = phantom_phase(ph, g)
        mask = F.PollenMask.from_membership(g, ph.support(g))
        assert F.optical_volume(p, mask) == pytest.approx(2.5 * mask.area_px * 0.09, rel=1e-12)

    def test_optical_volume_hemisphere_quadrature(self):
        g = GridSpec(128, 128, pixel_pitch=0.1)
        ph = PollenPhantom(Profile.HEMISPHERE, radius=50, peak_phase=9.0, rim_softness=0.0)
        p = phantom_phase(ph, g)
        mask = F.PollenMask.from_membership(g, ph.support(g))
        R = 50 * 0.1
        val, _ = integrate.quad(lambda r: 2 * np.pi * r * 9.0 * np.sqrt(1 - (r / R) ** 2), 0, R)
        assert F.optical_volume(p, mask) == pytest.approx(val, rel=0.005)

    def test_identity_mean_equals_volume_over_area(self):
        ph = PollenPhantom(Profile.HEMISPHERE, radius=70, peak_phase=8.0)
        fr = F.extract_features(phantom_phase(ph, G), "x")
        assert fr.mean_phase == pytest.approx(fr.optical_volume / fr.area_um2, rel=1e-9)
        assert fr.area_um2 == fr.area_px * 0.25 ** 2
        assert fr.max_phase == pytest.approx(8.0, rel=1e-3)

    def test_mean_phase_background_invariance(self):
        ph = PollenPhantom(Profile.HEMISPHERE, radius=70, peak_phase=8.0)
        p = phantom_phase(ph, G)
        shifted = F.flatten_background(PhaseMap(G, p.values + 1.7, wrapped=False))
        a = F.extract_features(p).mean_phase
        b = F.extract_features(shifted).mean_phase
        assert b == pytest.approx(a, abs=1e-9)

    def test_flatten_removes_tilt(self):
        x, y = G.coordinates()
        ph = PollenPhantom(Profile.PLATEAU, radius=60, peak_phase=3.0)
        p = phantom_phase(ph, G).values
        out = F.flatten_background(PhaseMap(G, p + 0.01 * x - 0.02 * y + 3, wrapped=False))
        np.testing.assert_allclose(out.values, p, atol=1e-9)

    def test_empty_mask(self):
        mask = F.PollenMask(GridSpec(8, 8), np.zeros((8, 8), bool), 0, 0)
        with pytest.raises(F.NoGrainFound):
            F.mean_phase(PhaseMap(GridSpec(8, 8), np.zeros((8, 8)), wrapped=False), mask)


class TestClassify:
    def test_default_threshold_is_midpoint(self):
        assert F.DEFAULT_THRESHOLD == pytest.approx((3.90 + 9.01) / 2)
        assert F.DEFAULT_THRESHOLD == pytest.approx(6.455)

    def test_unstained_examples(self):
        assert F.classify(8.72) == "viable"
        assert F.classify(4.26) == "nonviable"

    def test_tie_is_viable(self):
        assert F.classify(6.455, 6.455) == "viable"
        assert F.classify(math.nextafter(6.455, 0), 6.455) == "nonviable"

    def test_rejects_non_finite(self):
        with pytest.raises(ValueError):
            F.classify(float("nan"))

    def test_threshold_sweep_monotone(self):
        for t in np.linspace(0, 12, 49):
            labels = [F.classify(v, t) for v in np.linspace(0, 12, 97)]
            first = labels.index("viable") if "viable" in labels else len(labels)
            assert all(lab == "nonviable" for lab in labels[:first])
            assert all(lab == "viable" for lab in labels[first:])


class TestStats:
    def test_two_records(self):
        s = F.population_stats([record(3.0, "a"), record(5.0, "a")])["a"]
        assert (s.n, s.mean) == (2, 4.0)
        assert s.std == pytest.approx(math.sqrt(2))

    def test_identical_values(self):
        s = F.class_stats("a", [2.0] * 5)
        assert s.std == 0.0

    def test_needs_two(self):
        with pytest.raises(F.StatsError):
            F.population_stats([record(3.0, "a"), record(5.0, "b"), record(6.0, "b")])

    def test_explicit_labels_and_unknown_skipped(self):
        recs = [record(1.0), record(2.0), record(8.0), record(9.0), record(4.0)]
        out = F.population_stats(recs, ["x", "x", "y", "y", "unknown"])
        assert set(out) == {"x", "y"} and out["x"].mean == 1.5

    def test_monte_carlo_class_params(self):
        rng = np.random.default_rng(2023)
        for label, (mu, sd, n) in CLASS_PARAMS.items():
            s = F.class_stats(label, rng.normal(mu, sd, n))
            assert abs(s.mean - mu) < 3 * sd / math.sqrt(n)


class TestWelch:
    def test_identical(self):
        a = F.PopulationStats("a", 10, 4.0, 1.0)
        r = F.welch_t(a, a)
        assert (r.t, r.p) == (0.0, 1.0)

    def test_class_params_against_closed_form_and_scipy(self):
        a = F.PopulationStats("nonviable", 256, 3.90, 1.24)
        b = F.PopulationStats("viable", 252, 9.01, 2.17)
        r = F.welch_t(a, b)
        t_closed = (9.01 - 3.90) / math.sqrt(1.24 ** 2 / 256 + 2.17 ** 2 / 252)
        assert r.t == pytest.approx(t_closed, rel=1e-12)
        assert r.t == pytest.approx(32.52, abs=0.01)
        ref = stats.ttest_ind_from_stats(9.01, 2.17, 252, 3.90, 1.24, 256, equal_var=False)
        assert r.t == pytest.approx(ref.statistic, rel=1e-12)
        assert r.p == pytest.approx(ref.pvalue, rel=1e-6, abs=1e-300)
        # a normal tail bounds the t tail from below at this many dof
        assert r.p < 0.05 and r.p < 1e-10
        assert 2 * stats.norm.sf(r.t) <= r.p or r.p == 0.0

    def test_antisymmetric(self):
        a = F.PopulationStats("a", 12, 3.0, 1.1)
        b = F.PopulationStats("b", 9, 4.2, 0.7)
        ab, ba = F.welch_t(a, b), F.welch_t(b, a)
        assert ab.t == -ba.t and ab.p == ba.p and ab.dof == ba.dof

    def test_more_samples_larger_t(self):
        a = F.PopulationStats("a", 12, 3.0, 1.1)
        b = F.PopulationStats("b", 9, 4.2, 0.7)
        a2, b2 = F.PopulationStats("a", 24, 3.0, 1.1), F.PopulationStats("b", 18, 4.2, 0.7)
        assert abs(F.welch_t(a2, b2).t) > abs(F.welch_t(a, b).t)

    def test_degenerate(self):
        a = F.PopulationStats("a", 5, 1.0, 0.0)
        with pytest.raises(F.StatsError):
            F.welch_t(a, F.PopulationStats("b", 5, 2.0, 0.0))
        with pytest.raises(F.StatsError):
            F.welch_t(F.PopulationStats("c", 1, 1.0, 1.0), a)


class TestHistogram:
    def test_single_value(self):
        h = F.histogram([2.3], 0.5)
        assert h.edges[0] == 0.0
        assert h.density.max() == pytest.approx(2.0)
        assert np.count_nonzero(h.density) == 1

    def test_uniform_in_one_bin(self, rng):
        h = F.histogram(rng.uniform(3.0, 3.999, 100), 1.0)
        assert h.density[3] == 1.0 and h.density.sum() == 1.0

    def test_normalized_and_covers_max(self, rng):
        v = rng.gamma(3.0, 2.0, 500)
        h = F.histogram(v, 0.7)
        assert np.sum(h.density) * h.bin_width == pytest.approx(1.0, abs=1e-9)
        assert h.edges[0] == 0.0 and h.edges[-1] > v.max()

    def test_negative_values_extend_left(self):
        h = F.histogram([-1.2, 0.5, 2.0], 1.0)
        assert h.edges[0] == -2.0
        assert np.sum(h.density) == pytest.approx(1.0)

    def test_bimodal_modes(self):
        rng = np.random.default_rng(7)
        (m0, s0, n0), (m1, s1, n1) = CLASS_PARAMS["nonviable"], CLASS_PARAMS["viable"]
        a, b = rng.normal(m0, s0, n0), rng.normal(m1, s1, n1)
        edges = F.histogram_edges(np.concatenate([a, b]), 1.0)
        assert abs(F.histogram(a, 1.0, edges).mode() - 3.90) <= 1.0
        assert abs(F.histogram(b, 1.0, edges).mode() - 9.01) <= 1.0

    def test_errors(self):
        with pytest.raises(F.StatsError):
            F.histogram([], 1.0)
        with pytest.raises(ValueError):
            F.histogram([1.0], 0.0)
