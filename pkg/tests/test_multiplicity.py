"""Tests for separated-family overlap statistics."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from homoeoid import geometry as geo
from homoeoid.multiplicity import (
    EllipsoidFamily,
    direct_overlap_l2,
    generate_family,
    multiplicity_scan,
    neighbour_counts,
    overlap_l2,
    refined_shell_volume,
)
from homoeoid.volumes import intersection_volume, shell_volume


def lattice_family(delta: float, axis: int = 0, seed: int = 0) -> EllipsoidFamily:
    return generate_family(axis, delta, int(math.floor(2.0 / delta)) + 1, seed)


class TestEllipsoidFamily:
    def test_centres_lie_on_the_axis_line(self):
        fam = generate_family(1, 2**-4, 6, seed=3)
        direction = geo.axis_direction(3, 1)
        assert np.allclose(fam.centres, fam.offsets[:, None] * direction)
        assert np.all(fam.centres[:, 1] == 0.0)

    def test_member_and_spec_accessors(self):
        fam = generate_family(2, 2**-4, 4, seed=5)
        ell = fam.member(1)
        assert isinstance(ell, geo.Ellipsoid)
        assert np.array_equal(ell.radii, fam.radii[1])
        refined = fam.spec(1)
        assert isinstance(refined, geo.RefinedAnnulusSpec)
        assert refined.axis == 2 and refined.cut == fam.cut
        plain = fam.spec(1, refined=False)
        assert isinstance(plain, geo.AnnulusSpec)
        assert plain.delta == fam.delta
        assert len(fam) == 4

    def test_validation(self):
        lo, hi = geo.restricted_radii_box(3)
        radii = np.tile(lo, (2, 1))
        good = dict(axis=0, delta=0.25, offsets=np.array([-0.5, 0.5]), radii=radii)
        EllipsoidFamily(**good)
        with pytest.raises(ValueError):
            EllipsoidFamily(**{**good, "axis": 3})
        with pytest.raises(ValueError):
            EllipsoidFamily(**{**good, "delta": 0.6})
        with pytest.raises(ValueError):
            EllipsoidFamily(**{**good, "offsets": np.array([-1.5, 0.5])})
        with pytest.raises(ValueError):
            EllipsoidFamily(**{**good, "offsets": np.array([0.0, 0.1])})
        with pytest.raises(ValueError):
            EllipsoidFamily(**{**good, "radii": np.tile(hi + 0.1, (2, 1))})
        with pytest.raises(ValueError):
            EllipsoidFamily(**{**good, "offsets": np.array([0.5])})

    def test_capacity_cap(self):
        delta = 0.25
        offsets = -1.0 + delta * np.arange(10)
        radii = np.ones((10, 3))
        with pytest.raises(ValueError):
            EllipsoidFamily(axis=0, delta=delta, offsets=offsets, radii=radii)


class TestGenerateFamily:
    def test_maximal_count_is_the_exact_lattice(self):
        delta = 2**-6
        fam = lattice_family(delta)
        assert len(fam) == 129
        assert np.array_equal(fam.offsets, -1.0 + delta * np.arange(129))

    def test_radii_inside_restricted_box(self):
        fam = generate_family(0, 2**-5, 20, seed=7)
        lo, hi = geo.restricted_radii_box(3)
        assert np.all(fam.radii >= lo) and np.all(fam.radii <= hi)

    def test_deterministic_and_seed_sensitive(self):
        a = generate_family(0, 2**-5, 12, seed=1)
        b = generate_family(0, 2**-5, 12, seed=1)
        c = generate_family(0, 2**-5, 12, seed=2)
        assert np.array_equal(a.offsets, b.offsets)
        assert np.array_equal(a.radii, b.radii)
        assert not np.array_equal(a.offsets, c.offsets)

    @settings(deadline=None, max_examples=40)
    @given(
        seed=st.integers(min_value=0, max_value=2**32),
        count=st.integers(min_value=1, max_value=33),
        level=st.integers(min_value=5, max_value=7),
    )
    def test_random_families_are_separated_and_in_range(self, seed, count, level):
        delta = 2.0**-level
        fam = generate_family(0, delta, count, seed)
        assert np.all(np.abs(fam.offsets) <= 1.0)
        if count > 1:
            assert np.min(np.diff(fam.offsets)) >= delta - 1e-12

    def test_validation(self):
        with pytest.raises(ValueError):
            generate_family(0, 2**-4, 0)
        with pytest.raises(ValueError):
            generate_family(0, 2**-4, 34)
        with pytest.raises(ValueError):
            generate_family(0, 0.0, 3)
        generate_family(0, 2**-4, 33)


class TestRefinedShellVolume:
    def test_matches_dimension_three_closed_form(self):
        rng = np.random.default_rng(4)
        lo, hi = geo.restricted_radii_box(3)
        for delta in (0.5, 2**-4, 2**-7):
            r = lo + (hi - lo) * rng.random(3)
            got = refined_shell_volume(r, delta, 0)
            h = (2.0 * geo.default_refinement_cut(3)) ** (1.0 / 3.0)
            s_lo, s_hi = math.sqrt(1.0 - delta), math.sqrt(1.0 + delta)
            want = (
                4.0
                * math.pi
                * float(np.prod(r))
                * ((s_hi**3 - s_lo**3) / 3.0 - h * (s_hi**2 - s_lo**2) / 2.0)
            )
            assert got == pytest.approx(want, rel=1e-10)

    def test_matches_monte_carlo_route(self):
        fam = generate_family(0, 2**-5, 1, seed=3)
        spec = fam.spec(0)
        est = intersection_volume(spec, spec, 400_000, seed=9)
        got = refined_shell_volume(fam.radii[0], fam.delta, 0)
        assert abs(got - est.value) < 4.0 * est.std_error

    def test_refinements_cover_the_shell(self):
        r = np.array([1.01, 1.0, 1.005, 1.012])
        delta = 2**-4
        total = sum(refined_shell_volume(r, delta, k) for k in range(4))
        plain = shell_volume(r, delta)
        assert total >= plain
        assert refined_shell_volume(r, delta, 0) < plain

    def test_monotone_in_cut(self):
        r = np.ones(3)
        small = refined_shell_volume(r, 2**-4, 0, cut=0.005)
        large = refined_shell_volume(r, 2**-4, 0, cut=0.02)
        assert small > large > 0.0

    def test_validation(self):
        with pytest.raises(ValueError):
            refined_shell_volume(np.ones(3), 2**-4, 3)
        with pytest.raises(ValueError):
            refined_shell_volume(np.ones(3), 0.6, 0)
        with pytest.raises(ValueError):
            refined_shell_volume(np.ones(3), 2**-4, 0, cut=0.0)


class TestOverlapL2:
    def test_single_member_is_exact(self):
        fam = generate_family(0, 2**-5, 1, seed=3)
        plain = overlap_l2(fam, refined=False)
        assert plain.value == math.sqrt(shell_volume(fam.radii[0], fam.delta))
        assert plain.std_error == 0.0 and plain.n_samples == 0
        refined = overlap_l2(fam)
        assert refined.value == math.sqrt(refined_shell_volume(fam.radii[0], fam.delta, 0))

    def test_two_distant_members_add_in_square(self):
        lo, hi = geo.restricted_radii_box(3)
        radii = np.tile(0.5 * (lo + hi), (2, 1))
        fam = EllipsoidFamily(axis=0, delta=2**-6, offsets=np.array([-0.5, 0.5]), radii=radii)
        est = overlap_l2(fam, 8192, seed=2, refined=False)
        want = math.sqrt(2.0 * shell_volume(radii[0], fam.delta))
        assert est.value == pytest.approx(want, rel=1e-2)

    def test_refined_never_exceeds_plain(self):
        for seed in (0, 4, 9):
            fam = generate_family(0, 2**-4, 8, seed=seed)
            refined = overlap_l2(fam, 2048, seed=seed)
            plain = overlap_l2(fam, 2048, seed=seed, refined=False)
            assert refined.value <= plain.value

    def test_norm_dominates_diagonal(self):
        fam = generate_family(1, 2**-4, 8, seed=11)
        est = overlap_l2(fam, 2048, seed=5)
        diag = sum(refined_shell_volume(r, fam.delta, 1) for r in fam.radii)
        assert est.value >= math.sqrt(diag)

    def test_deterministic(self):
        fam = generate_family(0, 2**-4, 6, seed=8)
        a = overlap_l2(fam, 1024, seed=3)
        b = overlap_l2(fam, 1024, seed=3)
        assert (a.value, a.std_error, a.n_samples) == (b.value, b.std_error, b.n_samples)

    def test_matches_direct_space_sampling(self):
        fam = generate_family(0, 2**-4, 8, seed=11)
        for refined in (True, False):
            pairwise = overlap_l2(fam, 4096, seed=5, refined=refined)
            direct = direct_overlap_l2(fam, 1 << 21, seed=5, refined=refined)
            sigma = math.hypot(pairwise.std_error, direct.std_error)
            assert abs(pairwise.value - direct.value) < 3.5 * sigma

    def test_diagonal_floor_scales_linearly(self):
        ratios = []
        for delta in (2**-4, 2**-6, 2**-8):
            count = int(1.0 / delta)
            fam = generate_family(0, delta, count, seed=2)
            diag = sum(refined_shell_volume(r, delta, 0) for r in fam.radii)
            ratios.append(diag / (count * delta))
        assert all(4.0 <= ratio <= 16.0 for ratio in ratios)
        assert max(ratios) / min(ratios) < 1.05

    def test_validation(self):
        fam = generate_family(0, 2**-4, 2, seed=0)
        with pytest.raises(ValueError):
            overlap_l2(fam, 32)


class TestDirectOverlapL2:
    def test_deterministic(self):
        fam = generate_family(0, 2**-4, 3, seed=6)
        a = direct_overlap_l2(fam, 1 << 18, seed=1)
        b = direct_overlap_l2(fam, 1 << 18, seed=1)
        assert (a.value, a.std_error) == (b.value, b.std_error)

    def test_refined_below_plain_within_error(self):
        fam = generate_family(0, 2**-4, 4, seed=6)
        refined = direct_overlap_l2(fam, 1 << 19, seed=1)
        plain = direct_overlap_l2(fam, 1 << 19, seed=1, refined=False)
        sigma = math.hypot(refined.std_error, plain.std_error)
        assert refined.value <= plain.value + 3.0 * sigma

    def test_single_member_matches_closed_form(self):
        fam = generate_family(0, 2**-4, 1, seed=2)
        est = direct_overlap_l2(fam, 1 << 20, seed=3, refined=False)
        want = math.sqrt(shell_volume(fam.radii[0], fam.delta))
        assert abs(est.value - want) < 4.0 * est.std_error


class TestNeighbourCounts:
    def test_lattice_counts_at_one_step(self):
        fam = lattice_family(2**-5)
        counts = neighbour_counts(fam, fam.delta)
        assert np.all(counts[1:-1] == 2)
        assert counts[0] == 1 and counts[-1] == 1

    def test_separation_caps_counts(self):
        fam = generate_family(0, 2**-6, 100, seed=13)
        for mult_ in (1.0, 2.0, 4.0, 8.0):
            tau = mult_ * fam.delta
            cap = 2 * math.floor(tau / fam.delta * (1.0 + 1e-9))
            assert np.all(neighbour_counts(fam, tau) <= cap)

    def test_no_members_strictly_inside_the_separation_radius(self):
        fam = generate_family(0, 2**-5, 40, seed=3)
        counts = neighbour_counts(fam, fam.delta * (1.0 - 1e-9))
        assert np.all(counts == 0)

    def test_validation(self):
        fam = generate_family(0, 2**-4, 2, seed=0)
        with pytest.raises(ValueError):
            neighbour_counts(fam, 0.0)


class TestMultiplicityScan:
    DELTAS = (2**-4, 2**-5, 2**-6)

    def test_rows_schema_and_worst_tables(self):
        scan = multiplicity_scan(0, self.DELTAS, trials=2, m=1024, seed=3)
        assert len(scan.rows) == len(self.DELTAS) * 2 * 2
        keys = {"delta", "trial_seed", "N", "norm", "std_error", "bound", "C", "refined"}
        assert all(set(row) == keys for row in scan.rows)
        assert set(scan.worst) == set(self.DELTAS) == set(scan.worst_plain)
        assert all(row["C"] > 0.0 for row in scan.rows)
        assert all(row["N"] == int(1.0 / row["delta"]) for row in scan.rows)
        assert scan.drift >= 1.0

    def test_plain_constant_dominates_refined(self):
        scan = multiplicity_scan(0, self.DELTAS, trials=2, m=1024, seed=3)
        assert all(scan.worst_plain[d] >= scan.worst[d] for d in self.DELTAS)

    def test_rows_are_reproducible_from_their_seed(self):
        scan = multiplicity_scan(0, self.DELTAS, trials=2, m=1024, seed=3)
        row = scan.rows[0]
        fam = generate_family(0, row["delta"], row["N"], row["trial_seed"])
        est = overlap_l2(fam, 1024, seed=row["trial_seed"], refined=row["refined"])
        assert est.value == row["norm"]
        assert row["norm"] / row["bound"] == row["C"]

    def test_custom_count_rule(self):
        scan = multiplicity_scan(0, self.DELTAS, count_rule=lambda d: 4, trials=1, m=512, seed=0)
        assert all(row["N"] == 4 for row in scan.rows)

    def test_deterministic(self):
        a = multiplicity_scan(0, self.DELTAS, trials=1, m=512, seed=5)
        b = multiplicity_scan(0, self.DELTAS, trials=1, m=512, seed=5)
        assert a.rows == b.rows

    def test_validation(self):
        with pytest.raises(ValueError):
            multiplicity_scan(0, (2**-4, 2**-5), trials=1)
        with pytest.raises(ValueError):
            multiplicity_scan(0, (2**-5, 2**-4, 2**-6), trials=1)
        with pytest.raises(ValueError):
            multiplicity_scan(0, self.DELTAS, trials=0)
