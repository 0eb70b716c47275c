"""Polynomial distortion functions ``f(u, v, x, y)`` and ``g(u, v, x, y)``.

Each function is a sum of monomials ``c * x**i * y**j * u**m * v**n`` with
``i + j >= 1``, so both vanish for a source at the reference point (0, 0)
and the reference PSF there is left unwarped.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "MonomialTerm",
    "DistortionPolynomial",
    "DfcViolation",
    "DEFAULT_MONOMIALS",
    "ThetaVector",
    "eval_f",
    "eval_g",
    "validate_dfc",
    "theta_to_polynomial",
    "polynomial_to_theta",
    "polynomial_from_config",
    "polynomial_to_config",
]


@dataclass(frozen=True)
class MonomialTerm:
    """``coefficient * x**i * y**j * u**m * v**n``."""

    i: int
    j: int
    m: int
    n: int
    coefficient: float = 0.0

    def __post_init__(self):
        for name in "ijmn":
            if int(getattr(self, name)) < 0:
                raise ValueError(f"negative exponent {name}={getattr(self, name)}")

    @property
    def exponents(self) -> tuple[int, int, int, int]:
        return (self.i, self.j, self.m, self.n)

    def monomial(self, u, v, x, y):
        return x ** self.i * y ** self.j * u ** self.m * v ** self.n

    def label(self) -> str:
        parts = []
        for sym, p in (("u", self.m), ("v", self.n), ("x", self.i), ("y", self.j)):
            if p == 1:
                parts.append(sym)
            elif p > 1:
                parts.append(f"{sym}^{p}")
        return "".join(parts) or "1"


@dataclass(frozen=True)
class DistortionPolynomial:
    f_terms: tuple[MonomialTerm, ...] = ()
    g_terms: tuple[MonomialTerm, ...] = ()
    reference_point: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        object.__setattr__(self, "f_terms", tuple(self.f_terms))
        object.__setattr__(self, "g_terms", tuple(self.g_terms))

    def __add__(self, other: "DistortionPolynomial") -> "DistortionPolynomial":
        return DistortionPolynomial(self.f_terms + other.f_terms,
                                    self.g_terms + other.g_terms,
                                    self.reference_point)


@dataclass(frozen=True)
class DfcViolation:
    function: str
    index: int
    term: MonomialTerm


def _eval_terms(terms, u, v, x, y):
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    out = np.zeros(np.broadcast_shapes(u.shape, v.shape, x.shape, y.shape))
    for t in terms:
        if t.coefficient != 0.0:
            out = out + t.coefficient * t.monomial(u, v, x, y)
    return out if out.ndim else float(out)


def _relative(poly, x, y):
    x0, y0 = poly.reference_point
    return np.asarray(x, dtype=np.float64) - x0, np.asarray(y, dtype=np.float64) - y0


def eval_f(poly: DistortionPolynomial, u, v, x, y):
    """Evaluate ``f``; broadcasts over array arguments."""
    xr, yr = _relative(poly, x, y)
    return _eval_terms(poly.f_terms, u, v, xr, yr)


def eval_g(poly: DistortionPolynomial, u, v, x, y):
    xr, yr = _relative(poly, x, y)
    return _eval_terms(poly.g_terms, u, v, xr, yr)


def validate_dfc(poly: DistortionPolynomial) -> list[DfcViolation]:
    """Terms breaking ``i + j >= 1``; an empty list means the polynomial is valid."""
    bad = []
    for name, terms in (("f", poly.f_terms), ("g", poly.g_terms)):
        for k, t in enumerate(terms):
            if t.i + t.j < 1:
                bad.append(DfcViolation(name, k, t))
    return bad


# Six monomials shared by f and g in the default 12-parameter basis,
# as (i, j, m, n): ux, vx, u^2 x, v^2 x, u x^2, v x^2.  The g half reuses
# the x-monomials exactly as printed; build a y-based basis explicitly if wanted.
DEFAULT_MONOMIALS: tuple[tuple[int, int, int, int], ...] = (
    (1, 0, 1, 0),
    (1, 0, 0, 1),
    (1, 0, 2, 0),
    (1, 0, 0, 2),
    (2, 0, 1, 0),
    (2, 0, 0, 1),
)


def theta_to_polynomial(theta, monomials=DEFAULT_MONOMIALS,
                        reference_point=(0.0, 0.0)) -> DistortionPolynomial:
    """Map ``theta[:k]`` onto f and ``theta[k:]`` onto g over ``monomials``."""
    theta = np.asarray(theta, dtype=np.float64).ravel()
    k = len(monomials)
    if theta.size != 2 * k:
        raise ValueError(f"expected {2 * k} parameters, got {theta.size}")
    f = tuple(MonomialTerm(*e, float(c)) for e, c in zip(monomials, theta[:k]))
    g = tuple(MonomialTerm(*e, float(c)) for e, c in zip(monomials, theta[k:]))
    return DistortionPolynomial(f, g, tuple(reference_point))


def polynomial_to_theta(poly: DistortionPolynomial,
                        monomials=DEFAULT_MONOMIALS) -> np.ndarray:
    """Inverse of :func:`theta_to_polynomial`.

    Raises if the polynomial uses monomials outside the basis. Repeated
    monomials are summed.
    """
    index = {e: k for k, e in enumerate(monomials)}
    k = len(monomials)
    theta = np.zeros(2 * k)
    for offset, terms in ((0, poly.f_terms), (k, poly.g_terms)):
        for t in terms:
            if t.exponents not in index:
                raise ValueError(f"term {t.label()} not in basis")
            theta[offset + index[t.exponents]] += t.coefficient
    return theta


def _terms_from_config(items):
    return tuple(MonomialTerm(int(d.get("i", 0)), int(d.get("j", 0)),
                              int(d.get("m", 0)), int(d.get("n", 0)),
                              float(d["c"])) for d in items)


def polynomial_from_config(cfg: dict) -> DistortionPolynomial:
    """Build from ``{"theta": [...]}`` or ``{"f_terms": [...], "g_terms": [...]}``."""
    ref = tuple(cfg.get("reference_point", (0.0, 0.0)))
    if "theta" in cfg:
        return theta_to_polynomial(cfg["theta"], reference_point=ref)
    if "f_terms" not in cfg and "g_terms" not in cfg:
        raise ValueError("distortion config needs 'theta' or 'f_terms'/'g_terms'")
    return DistortionPolynomial(_terms_from_config(cfg.get("f_terms", [])),
                                _terms_from_config(cfg.get("g_terms", [])), ref)


def polynomial_to_config(poly: DistortionPolynomial) -> dict:
    def dump(terms):
        return [{"i": t.i, "j": t.j, "m": t.m, "n": t.n, "c": t.coefficient}
                for t in terms]
    return {"f_terms": dump(poly.f_terms), "g_terms": dump(poly.g_terms),
            "reference_point": list(poly.reference_point)}


@dataclass(frozen=True)
class ThetaVector:
    """Coefficients of the default 12-term basis (f terms first, then g)."""

    theta: tuple[float, ...]

    def __post_init__(self):
        vals = tuple(float(t) for t in np.asarray(self.theta, dtype=np.float64).ravel())
        if len(vals) != 2 * len(DEFAULT_MONOMIALS):
            raise ValueError(f"ThetaVector needs {2 * len(DEFAULT_MONOMIALS)} values")
        object.__setattr__(self, "theta", vals)

    def __array__(self, dtype=None, copy=None):
        return np.array(self.theta, dtype=dtype)

    def to_polynomial(self) -> DistortionPolynomial:
        return theta_to_polynomial(self.theta)

    @classmethod
    def from_polynomial(cls, poly: DistortionPolynomial) -> "ThetaVector":
        return cls(polynomial_to_theta(poly))
