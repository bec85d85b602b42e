from fractions import Fraction
from itertools import permutations

import pytest

from tensor_rlct import ModelSpec, reference_bounds, rrr_rlct, tensor_rlct_bound
from tensor_rlct.rlct_bounds import format_fraction

GRID_NM = range(1, 31)
GRID_H = range(0, 61)

TABLE1_BOUNDS = {
    2: [3, 7, 11, Fraction(29, 2), 18],
    3: [5, 11, 17, 23, 29],
    4: [7, 15, 23, 31, 39],
}


def interior(N, M, H):
    num = 2 * (N * M + M * H + H * N) - (N * N + M * M + H * H)
    return Fraction(num + (H + M - N) % 2, 8)


class TestRrrRlct:
    @pytest.mark.parametrize("args, expected", [
        ((4, 2, 2), 2),
        ((9, 3, 1), Fraction(3, 2)),
        ((4, 2, 3), 3),
    ])
    def test_examples(self, args, expected):
        assert rrr_rlct(*args) == expected

    @pytest.mark.parametrize("N, M", [(1, 1), (4, 2), (2, 9), (30, 30)])
    def test_zero_rank(self, N, M):
        assert rrr_rlct(N, M, 0) == 0

    @pytest.mark.parametrize("args", [(0, 1, 1), (1, 0, 1), (1, 1, -1), (1.5, 1, 1)])
    def test_domain(self, args):
        with pytest.raises(ValueError):
            rrr_rlct(*args)

    def test_symmetry(self):
        for N in GRID_NM:
            for M in GRID_NM:
                for H in GRID_H:
                    assert rrr_rlct(N, M, H) == rrr_rlct(M, N, H)

    def test_boundary_agreement(self):
        for N in GRID_NM:
            for M in GRID_NM:
                lo, hi = abs(N - M), N + M
                assert interior(N, M, lo) == Fraction(min(N, M) * lo, 2)
                assert interior(N, M, hi) == Fraction(N * M, 2)

    def test_monotone_and_saturating(self):
        for N in GRID_NM:
            for M in GRID_NM:
                values = [rrr_rlct(N, M, H) for H in GRID_H]
                assert all(a <= b for a, b in zip(values, values[1:]))
                for H in GRID_H:
                    if H >= N + M:
                        assert values[H] == Fraction(N * M, 2)

    def test_cap_and_eighths(self):
        for N in GRID_NM:
            for M in GRID_NM:
                for H in GRID_H:
                    v = rrr_rlct(N, M, H)
                    assert v >= 0
                    assert (v * 8).denominator == 1
                    caps = [N * M] + ([N * H, M * H] if H >= 1 else [])
                    assert v <= Fraction(min(caps), 2)


class TestTensorBound:
    @pytest.mark.parametrize("dims, H, H0, expected", [
        (2, 2, 1, 3), (2, 8, 4, Fraction(29, 2)), (4, 10, 5, 39),
    ])
    def test_examples(self, dims, H, H0, expected):
        assert tensor_rlct_bound(ModelSpec(dims, dims, dims, H, H0)).bound == expected

    def test_full_rank_model(self):
        b = tensor_rlct_bound(ModelSpec(3, 3, 3, 2, 2))
        assert b.bound == 8
        assert b.m1 == b.m2 == b.m3 == 0

    def test_table1_exact(self):
        for d, row in TABLE1_BOUNDS.items():
            for h0, expected in enumerate(row, start=1):
                assert tensor_rlct_bound(ModelSpec(d, d, d, 2 * h0, h0)).bound == expected

    def test_components(self):
        b = tensor_rlct_bound(ModelSpec(2, 3, 4, 5, 2))
        assert b.core_term == Fraction(2 * 9 - 2, 2)
        assert (b.m1, b.m2, b.m3) == (rrr_rlct(6, 4, 3), rrr_rlct(12, 2, 3), rrr_rlct(8, 3, 3))
        assert b.bound == b.core_term + min(b.m1, b.m2, b.m3)

    def test_rejects_zero_truth_rank(self):
        with pytest.raises(ValueError, match="H0"):
            tensor_rlct_bound(ModelSpec(2, 2, 2, 2, 0))

    def test_permutation_invariance_and_half_params(self):
        for I in range(1, 7):
            for J in range(1, 7):
                for K in range(1, 7):
                    for H in range(1, 9):
                        for H0 in range(1, H + 1):
                            spec = ModelSpec(I, J, K, H, H0)
                            b = tensor_rlct_bound(spec)
                            assert b.bound <= b.half_params
                            for p in permutations((I, J, K)):
                                assert tensor_rlct_bound(ModelSpec(*p, H, H0)).bound == b.bound


class TestReferenceBounds:
    def test_examples(self):
        assert reference_bounds(ModelSpec(2, 2, 2, 2, 1)) == (6, 3)
        assert reference_bounds(ModelSpec(4, 4, 4, 10, 5)) == (60, 30)

    def test_equal_ranks(self):
        half, obvious = reference_bounds(ModelSpec(3, 2, 5, 3, 3))
        assert half == obvious

    def test_populated_on_bound(self):
        b = tensor_rlct_bound(ModelSpec(2, 2, 2, 2, 1))
        assert (b.half_params, b.obvious_lambda1) == (6, 3)


def test_format_fraction():
    assert format_fraction(Fraction(7)) == "7"
    assert format_fraction(Fraction(29, 2)) == "14.5"
    assert format_fraction(Fraction(3, 8)) == "0.375"
