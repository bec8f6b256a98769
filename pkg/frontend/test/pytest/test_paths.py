# Copyright 2023 The hypou developers

# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at

#     http://www.apache.org/licenses/LICENSE-2.0

# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.
"""Unit tests for paths of symmetric non-negative matrices."""

import numpy as np
import pytest

from hypou.paths import (
    ConjugatedPath,
    ConstantPath,
    DirectionalPath,
    SampledPath,
    SinusoidalPath,
    SumPath,
    VanishingRankOnePath,
    direction_sampler,
    max_direction_norm,
    path_from_dict,
    zero_path,
)
from hypou.utils.exceptions import DimensionError

M = np.array([[2.0, 1.0], [1.0, 1.0]])
KOLMOGOROV_A = np.array([[0.0, 0.0], [1.0, 0.0]])


def all_kinds():
    """One path of every serializable kind."""
    v = np.array([0.6, 0.8])
    return [
        ConstantPath(M),
        SampledPath([0.0, 0.5, 1.0], [np.zeros((2, 2)), M, np.eye(2)]),
        SinusoidalPath(np.eye(2), M, 0.5),
        VanishingRankOnePath(v, 1.0),
        ConjugatedPath(KOLMOGOROV_A, ConstantPath(np.diag([1.0, 0.0]))),
        SumPath([ConstantPath(np.eye(2)), VanishingRankOnePath(v, 1.0)]),
        DirectionalPath(ConstantPath(M), 1),
    ]


class TestConstantPath:
    """Constant paths and PSD validation."""

    def test_rejects_negative(self):
        """Genuinely negative eigenvalues are rejected."""
        with pytest.raises(ValueError, match="not positive semi-definite"):
            ConstantPath([[1.0, 0.0], [0.0, -1.0]])

    def test_clamps_rounding(self):
        """Rounding-level negative eigenvalues are clamped at zero."""
        path = ConstantPath([[1.0, 0.0], [0.0, -1e-13]])
        assert np.linalg.eigvalsh(path.evaluate(0.3))[0] >= -1e-15

    def test_rectangular(self):
        """Non-square matrices are rejected."""
        with pytest.raises(DimensionError, match="square"):
            ConstantPath(np.zeros((2, 3)))

    def test_zero(self):
        """The zero path is recognised and sums build SumPath."""
        assert zero_path(3).is_zero()
        assert not ConstantPath(M).is_zero()
        total = ConstantPath(M) + zero_path(2)
        assert isinstance(total, SumPath)
        np.testing.assert_allclose(total.evaluate(0.7), M)


class TestSampledPath:
    """Piecewise-linear sampled paths."""

    def test_interpolation(self):
        """Values are interpolated linearly and held outside the samples."""
        path = SampledPath([0.0, 1.0], [np.zeros((2, 2)), M])
        np.testing.assert_allclose(path.evaluate(0.25), 0.25 * M)
        np.testing.assert_allclose(path.evaluate(3.0), M)
        assert path.T == 1.0

    def test_kinks(self):
        """Interior sample times are kinks."""
        path = SampledPath([0.0, 0.3, 0.7, 1.0], [np.eye(2)] * 4)
        assert path.kinks() == (0.3, 0.7)
        assert path.kinks(0.3, 1.0) == (0.7,)

    @pytest.mark.parametrize(
        "times, matrices, error",
        [
            ([0.0], [np.eye(2)], ValueError),
            ([0.0, 0.0], [np.eye(2), np.eye(2)], ValueError),
            ([0.0, 1.0], [np.eye(2)], DimensionError),
        ],
    )
    def test_invalid(self, times, matrices, error):
        """Sample times must increase and match the matrices."""
        with pytest.raises(error):
            SampledPath(times, matrices)


class TestPeriodicPaths:
    """Sinusoidal and time-vanishing rank-one paths."""

    def test_sinusoidal(self):
        """``Q(0) = M0 + M1 / 2`` and the path oscillates between M0 and M0 + M1."""
        path = SinusoidalPath(np.eye(2), M, 1.0)
        np.testing.assert_allclose(path.evaluate(0.0), np.eye(2) + 0.5 * M)
        np.testing.assert_allclose(path.evaluate(0.25), np.eye(2) + M)
        np.testing.assert_allclose(path.evaluate(0.75), np.eye(2), atol=1e-14)

    def test_vanishing(self):
        """The rank-one path vanishes on the second half of each period."""
        v = np.array([1.0, 2.0])
        path = VanishingRankOnePath(v, 1.0)
        np.testing.assert_allclose(path.evaluate(0.25), np.outer(v, v))
        np.testing.assert_array_equal(path.evaluate(0.6), np.zeros((2, 2)))
        assert path.kinks(0.0, 2.0) == pytest.approx((0.5, 1.0, 1.5))

    def test_period(self):
        """Periods must be positive."""
        with pytest.raises(ValueError, match="Period must be positive"):
            VanishingRankOnePath([1.0, 0.0], 0.0)

    def test_continuity(self):
        """Continuous paths have small sampled jumps; infinite horizons need a T."""
        path = SinusoidalPath(np.zeros((2, 2)), M, 1.0)
        assert path.continuity_certificate(T=1.0, n=1001) < 0.02
        with pytest.raises(ValueError, match="finite horizon"):
            path.continuity_certificate()


class TestComposedPaths:
    """Conjugated, summed and directional paths."""

    def test_conjugated(self):
        """``e^{tA} e1 e1^T e^{tA*} = [[1, t], [t, t^2]]`` for the Kolmogorov drift."""
        path = ConjugatedPath(KOLMOGOROV_A, ConstantPath(np.diag([1.0, 0.0])))
        t = 0.7
        np.testing.assert_allclose(path.evaluate(t), [[1.0, t], [t, t * t]], atol=1e-14)

    def test_conjugated_shape(self):
        """The drift must match the path size."""
        with pytest.raises(DimensionError, match="does not match"):
            ConjugatedPath(np.zeros((3, 3)), ConstantPath(M))

    def test_sum(self):
        """Sums add values and merge kinks."""
        a = SampledPath([0.0, 0.4, 1.0], [np.eye(2)] * 3)
        b = VanishingRankOnePath([1.0, 0.0], 1.0)
        total = SumPath([a, b])
        np.testing.assert_allclose(total.evaluate(0.25), np.eye(2) + np.diag([1.0, 0.0]))
        assert total.kinks(0.0, 1.0) == pytest.approx((0.4, 0.5))
        assert SumPath([zero_path(2), zero_path(2)]).is_zero()

    def test_sum_errors(self):
        """Empty sums and size mismatches are rejected."""
        with pytest.raises(ValueError, match="at least one"):
            SumPath([])
        with pytest.raises(DimensionError, match="differ in size"):
            SumPath([zero_path(2), zero_path(3)])

    def test_directional_decomposition(self):
        """Directional paths sum back to the inner path."""
        inner = SinusoidalPath(np.eye(2), M, 1.0)
        total = SumPath([DirectionalPath(inner, k) for k in range(2)])
        for t in (0.0, 0.3, 0.8):
            np.testing.assert_allclose(total.evaluate(t), inner.evaluate(t), atol=1e-12)

    def test_direction_sampler(self):
        """The constant shortcut agrees with the general sampler."""
        times = np.array([0.0, 0.5, 1.0])
        fast = direction_sampler(ConstantPath(M), 0)(times)
        slow = direction_sampler(SumPath([ConstantPath(M)]), 0)(times)
        assert fast.shape == (3, 2)
        np.testing.assert_allclose(fast, slow, atol=1e-14)

    def test_max_direction_norm(self):
        """The largest direction of ``diag(4, 1)`` has length 2."""
        assert max_direction_norm([ConstantPath(np.diag([4.0, 1.0]))], 1.0) == pytest.approx(2.0)


class TestDescriptors:
    """JSON descriptors of paths."""

    @pytest.mark.parametrize("index", range(7))
    def test_round_trip(self, index):
        """Paths rebuilt from their descriptors take the same values."""
        path = all_kinds()[index]
        rebuilt = path_from_dict(path.to_dict())
        assert rebuilt.kind == path.kind
        for t in (0.0, 0.2, 0.55, 0.9):
            np.testing.assert_allclose(rebuilt.evaluate(t), path.evaluate(t), atol=1e-14)

    def test_unknown_kind(self):
        """Unknown kinds and missing keys are reported."""
        with pytest.raises(ValueError, match="Unknown path kind"):
            path_from_dict({"kind": "spline"})
        with pytest.raises(ValueError, match="misses key"):
            path_from_dict({"kind": "constant"})


if __name__ == "__main__":
    pytest.main(["-x", __file__])
