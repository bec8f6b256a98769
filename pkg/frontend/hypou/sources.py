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
"""Source terms ``f(t, z)``: compactly supported in space, piecewise continuous in time.

Sources evaluate on arrays of points of shape ``(..., N)`` at a scalar time and know their
support radius, their time breakpoints, a bound on ``sup |f|`` and sampled bounds on their
spatial derivatives up to order four.
"""

from functools import lru_cache
from typing import Callable, Dict, Optional, Sequence, Tuple

import jax
import jax.numpy as jnp
import numpy as np

from hypou.linalg import matrix_exp, spectral_norm
from hypou.utils.exceptions import DimensionError

DERIVATIVE_ORDERS = 5


class TimeProfile:
    """Scalar time factor of a source.

    Kinds:
        ``constant``: ``value``
        ``linear``: ``a + b t``
        ``sine``: ``a + b sin(2 pi t / period)``
        ``step``: ``before`` for ``t < breakpoint``, ``after`` from ``breakpoint`` on
    """

    KINDS = ("constant", "linear", "sine", "step")

    def __init__(self, kind: str = "constant", **params):
        if kind not in self.KINDS:
            raise ValueError(f"Unknown time profile '{kind}', expected one of {self.KINDS}")
        defaults = {
            "constant": {"value": 1.0},
            "linear": {"a": 1.0, "b": 0.0},
            "sine": {"a": 1.0, "b": 0.5, "period": 1.0},
            "step": {"before": 1.0, "after": 0.0, "breakpoint": 0.5},
        }[kind]
        unknown = set(params) - set(defaults)
        if unknown:
            raise ValueError(f"Unknown parameters {sorted(unknown)} for time profile '{kind}'")
        self.kind = kind
        self.params = {**defaults, **{k: float(v) for k, v in params.items()}}

    def __call__(self, t):
        p, t = self.params, np.asarray(t, dtype=float)
        if self.kind == "constant":
            return np.full_like(t, p["value"])
        if self.kind == "linear":
            return p["a"] + p["b"] * t
        if self.kind == "sine":
            return p["a"] + p["b"] * np.sin(2.0 * np.pi * t / p["period"])
        return np.where(t < p["breakpoint"], p["before"], p["after"])

    @property
    def breakpoints(self) -> Tuple[float, ...]:
        """Discontinuity times."""
        return (self.params["breakpoint"],) if self.kind == "step" else ()

    def sup(self, T: float) -> float:
        """``sup |g|`` over ``[0, T]``."""
        p = self.params
        if self.kind == "constant":
            return abs(p["value"])
        if self.kind == "linear":
            return max(abs(p["a"]), abs(p["a"] + p["b"] * T))
        if self.kind == "sine":
            return abs(p["a"]) + abs(p["b"])
        if p["breakpoint"] > T:
            return abs(p["before"])
        return max(abs(p["before"]), abs(p["after"])) if p["breakpoint"] > 0 else abs(p["after"])

    def to_dict(self) -> Dict:
        """JSON descriptor."""
        return {"kind": self.kind, **self.params}


class SourceFunction:
    """Base class of sources.

    Args:
        dim (int): space dimension ``N``.
    """

    kind = "abstract"

    def __init__(self, dim: int):
        if dim < 1:
            raise DimensionError(f"Space dimension must be positive, got {dim}")
        self.dim = int(dim)

    def evaluate(self, t: float, z) -> np.ndarray:
        """Values at time ``t`` on points ``z`` of shape ``(..., N)``."""
        raise NotImplementedError()

    def __call__(self, t, z):
        return self.evaluate(t, z)

    def _check_points(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        if z.shape[-1] != self.dim:
            raise DimensionError(f"Points must have {self.dim} coordinates, got {z.shape[-1]}")
        return z

    @property
    def support_radius(self) -> float:
        """Radius of a ball around the origin containing the spatial support for all times."""
        return np.inf

    @property
    def time_breakpoints(self) -> Tuple[float, ...]:
        """Times at which ``t -> f(t, z)`` may jump."""
        return ()

    def sup_bound(self, T: float) -> float:
        """Upper bound of ``sup |f|`` over ``[0, T] x R^N``."""
        raise NotImplementedError()

    def derivative_bounds(self, T: float) -> Optional[Tuple[float, ...]]:
        """Sampled sup-norms over ``[0, T]`` of the spatial derivatives of orders 0..4.

        The m-th entry bounds the Frobenius norm of the derivative tensor ``D^m f``; ``None`` when
        the source cannot tell.
        """
        return None

    def pullback(self, A, T: float) -> "LinearMapSource":
        """``(t, z) -> f(t, e^{-tA} z)``, the source of the drift-free problem."""
        return LinearMapSource(self, A, -1.0, T)

    def pushforward(self, A, T: float) -> "LinearMapSource":
        """``(t, z) -> f(t, e^{tA} z)``."""
        return LinearMapSource(self, A, 1.0, T)

    def shifted(
        self,
        displacement: Callable[[float], np.ndarray],
        breakpoints: Sequence[float] = (),
        max_shift: float = 0.0,
    ) -> "ShiftedSource":
        """``(t, z) -> f(t, z - d(t))``."""
        return ShiftedSource(self, displacement, breakpoints, max_shift)

    def to_dict(self) -> Dict:
        """JSON descriptor."""
        raise NotImplementedError()

    def __add__(self, other: "SourceFunction") -> "LinearCombinationSource":
        return LinearCombinationSource([(1.0, self), (1.0, other)])

    def __mul__(self, scalar: float) -> "LinearCombinationSource":
        return LinearCombinationSource([(float(scalar), self)])

    __rmul__ = __mul__


def _bump_profile(xi):
    """``psi(xi) = exp(1 - 1/(1 - |xi|^2))`` inside the unit ball, 0 outside (jax version)."""
    s = jnp.sum(xi**2, axis=-1)
    inside = s < 1.0
    safe = jnp.where(inside, s, 0.0)
    return jnp.where(inside, jnp.exp(1.0 - 1.0 / (1.0 - safe)), 0.0)


@lru_cache(maxsize=None)
def _bump_derivative_sups(dim: int, per_axis: int) -> Tuple[float, ...]:
    """Sampled sup of the Frobenius norm of ``D^m psi`` for ``m = 0..4`` on the unit ball."""
    axis = np.linspace(-1.0, 1.0, per_axis)
    mesh = np.stack(np.meshgrid(*([axis] * dim), indexing="ij"), axis=-1).reshape(-1, dim)
    mesh = jnp.asarray(mesh[np.sum(mesh**2, axis=1) < 1.0])
    sups = []
    fn = _bump_profile
    for _ in range(DERIVATIVE_ORDERS):
        values = jax.vmap(fn)(mesh)
        flat = values.reshape(values.shape[0], -1)
        sups.append(float(jnp.max(jnp.linalg.norm(flat, axis=1))))
        fn = jax.jacfwd(fn)
    return tuple(sups)


class BumpSource(SourceFunction):
    """``f(t, z) = amplitude * g(t) * psi((z - center) / radius)`` with the C-infinity bump ``psi``.

    Args:
        center (array_like): centre of the bump.
        radius (float): support radius around the centre.
        amplitude (float): peak value at constant profile 1.
        profile (TimeProfile): time factor ``g``.
    """

    kind = "bump"

    def __init__(
        self,
        center,
        radius: float,
        amplitude: float = 1.0,
        profile: Optional[TimeProfile] = None,
    ):
        center = np.asarray(center, dtype=float).ravel()
        super().__init__(center.size)
        if radius <= 0:
            raise ValueError("Bump radius must be positive")
        self.center, self.radius, self.amplitude = center, float(radius), float(amplitude)
        self.profile = profile if profile is not None else TimeProfile()

    def evaluate(self, t, z):
        z = self._check_points(z)
        s = np.sum(((z - self.center) / self.radius) ** 2, axis=-1)
        out = np.zeros(s.shape)
        inside = s < 1.0
        out[inside] = np.exp(1.0 - 1.0 / (1.0 - s[inside]))
        return self.amplitude * float(self.profile(t)) * out

    @property
    def support_radius(self):
        return float(np.linalg.norm(self.center)) + self.radius

    @property
    def time_breakpoints(self):
        return self.profile.breakpoints

    def sup_bound(self, T):
        return abs(self.amplitude) * self.profile.sup(T)

    def derivative_bounds(self, T):
        sups = _bump_derivative_sups(self.dim, {1: 401, 2: 81, 3: 25}.get(self.dim, 11))
        scale = abs(self.amplitude) * self.profile.sup(T)
        return tuple(scale * s / self.radius**m for m, s in enumerate(sups))

    def to_dict(self):
        return {
            "kind": self.kind,
            "center": self.center.tolist(),
            "radius": self.radius,
            "amplitude": self.amplitude,
            "profile": self.profile.to_dict(),
        }


class UniformSource(SourceFunction):
    """Spatially constant source ``f(t, z) = g(t)``; its support is all of space."""

    kind = "uniform"

    def __init__(self, dim: int, profile: Optional[TimeProfile] = None):
        super().__init__(dim)
        self.profile = profile if profile is not None else TimeProfile()

    def evaluate(self, t, z):
        z = self._check_points(z)
        return np.full(z.shape[:-1], float(self.profile(t)))

    @property
    def time_breakpoints(self):
        return self.profile.breakpoints

    def sup_bound(self, T):
        return self.profile.sup(T)

    def derivative_bounds(self, T):
        return (self.profile.sup(T),) + (0.0,) * (DERIVATIVE_ORDERS - 1)

    def to_dict(self):
        return {"kind": self.kind, "dim": self.dim, "profile": self.profile.to_dict()}


class CallableSource(SourceFunction):
    """Wrap a vectorized callable ``fn(t, z)``."""

    kind = "callable"

    # pylint: disable=too-many-arguments
    def __init__(
        self,
        fn: Callable,
        dim: int,
        support_radius: float = np.inf,
        breakpoints: Sequence[float] = (),
        sup: Optional[float] = None,
        derivative_bounds: Optional[Sequence[float]] = None,
    ):
        super().__init__(dim)
        self.fn = fn
        self._radius = float(support_radius)
        self._breakpoints = tuple(float(b) for b in breakpoints)
        self._sup = sup
        self._derivatives = None if derivative_bounds is None else tuple(derivative_bounds)

    def evaluate(self, t, z):
        z = self._check_points(z)
        return np.broadcast_to(np.asarray(self.fn(t, z), dtype=float), z.shape[:-1])

    @property
    def support_radius(self):
        return self._radius

    @property
    def time_breakpoints(self):
        return self._breakpoints

    def sup_bound(self, T):
        if self._sup is None:
            raise ValueError("No sup bound was declared for this callable source")
        return float(self._sup)

    def derivative_bounds(self, T):
        return self._derivatives

    def to_dict(self):
        raise ValueError("Callable sources have no JSON descriptor")


class LinearCombinationSource(SourceFunction):
    """``sum_j c_j f_j``."""

    kind = "sum"

    def __init__(self, terms: Sequence[Tuple[float, SourceFunction]]):
        terms = [(float(c), f) for c, f in terms]
        if not terms:
            raise ValueError("A linear combination needs at least one term")
        if len({f.dim for _, f in terms}) != 1:
            raise DimensionError("Combined sources differ in dimension")
        super().__init__(terms[0][1].dim)
        self.terms = terms

    def evaluate(self, t, z):
        total = self.terms[0][0] * self.terms[0][1].evaluate(t, z)
        for c, f in self.terms[1:]:
            total = total + c * f.evaluate(t, z)
        return total

    @property
    def support_radius(self):
        return max((f.support_radius for c, f in self.terms if c != 0.0), default=0.0)

    @property
    def time_breakpoints(self):
        return tuple(sorted({b for _, f in self.terms for b in f.time_breakpoints}))

    def sup_bound(self, T):
        return sum(abs(c) * f.sup_bound(T) for c, f in self.terms)

    def derivative_bounds(self, T):
        bounds = [f.derivative_bounds(T) for _, f in self.terms]
        if any(b is None for b in bounds):
            return None
        return tuple(
            sum(abs(c) * b[m] for (c, _), b in zip(self.terms, bounds))
            for m in range(DERIVATIVE_ORDERS)
        )

    def to_dict(self):
        return {
            "kind": self.kind,
            "terms": [{"coef": c, "source": f.to_dict()} for c, f in self.terms],
        }


class LinearMapSource(SourceFunction):
    """``(t, z) -> f(t, e^{sign t A} z)`` on ``[0, T]``.

    The support radius and the derivative bounds are inflated by the largest sampled norm of the
    matrix exponentials involved.
    """

    kind = "linear-map"

    def __init__(self, inner: SourceFunction, A, sign: float, T: float, samples: int = 65):
        A = np.asarray(A, dtype=float)
        if A.shape != (inner.dim, inner.dim):
            raise DimensionError(f"Matrix of shape {A.shape} does not act on dimension {inner.dim}")
        super().__init__(inner.dim)
        self.inner, self.A, self.sign, self.T = inner, A, float(sign), float(T)
        times = np.linspace(0.0, self.T, samples)
        self._inverse_norm = 1.01 * max(spectral_norm(matrix_exp(A, -sign * t)) for t in times)
        self._forward_norm = 1.01 * max(spectral_norm(matrix_exp(A, sign * t)) for t in times)

    def evaluate(self, t, z):
        z = self._check_points(z)
        E = matrix_exp(self.A, self.sign * t)
        return self.inner.evaluate(t, z @ E.T)

    @property
    def support_radius(self):
        return self.inner.support_radius * self._inverse_norm

    @property
    def time_breakpoints(self):
        return self.inner.time_breakpoints

    def sup_bound(self, T):
        return self.inner.sup_bound(T)

    def derivative_bounds(self, T):
        inner = self.inner.derivative_bounds(T)
        if inner is None:
            return None
        return tuple(b * self._forward_norm**m for m, b in enumerate(inner))

    def to_dict(self):
        return {
            "kind": self.kind,
            "inner": self.inner.to_dict(),
            "A": self.A.tolist(),
            "sign": self.sign,
            "T": self.T,
        }


class ShiftedSource(SourceFunction):
    """``(t, z) -> f(t, z - d(t))`` for a bounded piecewise-constant displacement ``d``."""

    kind = "shifted"

    def __init__(self, inner: SourceFunction, displacement, breakpoints=(), max_shift=0.0):
        super().__init__(inner.dim)
        self.inner, self.displacement = inner, displacement
        self._breakpoints = tuple(float(b) for b in breakpoints)
        self.max_shift = float(max_shift)

    def evaluate(self, t, z):
        z = self._check_points(z)
        return self.inner.evaluate(t, z - np.asarray(self.displacement(t), dtype=float))

    @property
    def support_radius(self):
        return self.inner.support_radius + self.max_shift

    @property
    def time_breakpoints(self):
        return tuple(sorted(set(self.inner.time_breakpoints) | set(self._breakpoints)))

    def sup_bound(self, T):
        return self.inner.sup_bound(T)

    def derivative_bounds(self, T):
        return self.inner.derivative_bounds(T)

    def to_dict(self):
        raise ValueError("Shifted sources depend on a random path and have no JSON descriptor")


def source_from_dict(desc: Dict, dim: Optional[int] = None) -> SourceFunction:
    """Build a source from its JSON descriptor."""
    kind = desc.get("kind")
    try:
        if kind == "bump":
            profile = TimeProfile(**desc.get("profile", {"kind": "constant"}))
            source = BumpSource(desc["center"], desc["radius"], desc.get("amplitude", 1.0), profile)
        elif kind == "uniform":
            profile = TimeProfile(**desc.get("profile", {"kind": "constant"}))
            source = UniformSource(desc.get("dim", dim), profile)
        elif kind == "sum":
            source = LinearCombinationSource(
                [(t["coef"], source_from_dict(t["source"], dim)) for t in desc["terms"]]
            )
        else:
            raise ValueError(f"Unknown source kind '{kind}', expected bump, uniform or sum")
    except (KeyError, TypeError) as e:
        raise ValueError(f"Malformed source descriptor of kind '{kind}': {e}") from e
    if dim is not None and source.dim != dim:
        raise DimensionError(f"Source has dimension {source.dim}, expected {dim}")
    return source
