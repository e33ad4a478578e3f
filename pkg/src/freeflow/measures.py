"""Finite positive measures on the real line: atoms plus density pieces.

A measure is a tuple of point masses and absolutely continuous pieces.
Unbounded pieces carry a tail exponent p, meaning density ~ |u|^(-p) as
|u| -> infinity, which makes moment finiteness decidable before any
quadrature is attempted.
"""
from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import MissingTailMetadata
from .quadrature import DEFAULT_ABS_TOL, quad_interval

_TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class Atom:
    position: float
    mass: float

    def __post_init__(self):
        if not (self.mass > 0):
            raise ValueError(f"atom mass must be positive, got {self.mass}")
        if not np.isfinite(self.position):
            raise ValueError("atom position must be finite")


@dataclass(frozen=True)
class DensityPiece:
    """Absolutely continuous piece supported on [lo, hi].

    density must accept ndarray input and return nonnegative values of the
    same shape.  tail_exponent is required for moment queries whenever the
    support is unbounded.
    """
    lo: float
    hi: float
    density: Callable[[np.ndarray], np.ndarray]
    tail_exponent: float | None = None
    label: str | None = None

    def __post_init__(self):
        if not self.lo < self.hi:
            raise ValueError(f"need lo < hi, got [{self.lo}, {self.hi}]")

    @property
    def unbounded(self) -> bool:
        return np.isinf(self.lo) or np.isinf(self.hi)


@dataclass(frozen=True)
class Measure:
    atoms: tuple[Atom, ...] = ()
    pieces: tuple[DensityPiece, ...] = ()

    def __post_init__(self):
        atoms = tuple(a if isinstance(a, Atom) else Atom(*a) for a in self.atoms)
        object.__setattr__(self, "atoms", atoms)
        object.__setattr__(self, "pieces", tuple(self.pieces))
        positions = [a.position for a in atoms]
        if len(set(positions)) != len(positions):
            raise ValueError("atom positions must be pairwise distinct")

    # -- integration ----------------------------------------------------

    def integrate(self, f, *, abs_tol: float = DEFAULT_ABS_TOL):
        """Return sum_atoms mass*f(u) + sum_pieces int f(u) density(u) du.

        f maps an abscissa array to values with the abscissa axis last, so
        vector-valued integrands (a grid of transforms) work in one pass.
        """
        total = None
        if self.atoms:
            pos = np.array([a.position for a in self.atoms])
            w = np.array([a.mass for a in self.atoms])
            vals = np.asarray(f(pos))
            total = np.tensordot(vals, w, axes=([-1], [0]))
        n = max(1, len(self.pieces))
        for piece in self.pieces:
            dens = piece.density

            def g(u, _d=dens, _f=f):
                return np.asarray(_f(u)) * np.asarray(_d(u))

            part = quad_interval(g, piece.lo, piece.hi, abs_tol=abs_tol / n)
            total = part if total is None else total + part
        if total is None:
            return 0.0
        return total

    def total_mass(self, *, abs_tol: float = DEFAULT_ABS_TOL) -> float:
        val = self.integrate(lambda u: np.ones_like(u), abs_tol=abs_tol)
        return float(np.real(val))

    def moment(self, k: int, positive_part_only: bool = False,
               *, abs_tol: float = DEFAULT_ABS_TOL) -> float:
        """k-th moment, k in {0, 1, 2}; +/-inf when tail metadata says so."""
        if k not in (0, 1, 2):
            raise ValueError("only moments k in {0, 1, 2} are supported")
        plus_inf = False
        minus_inf = False
        finite = 0.0
        for a in self.atoms:
            if positive_part_only and a.position <= 0:
                continue
            finite += a.mass * a.position ** k
        for piece in self.pieces:
            lo, hi = piece.lo, piece.hi
            if positive_part_only:
                if hi <= 0:
                    continue
                lo = max(lo, 0.0)
            for side, unbounded in ((-1, np.isinf(lo)), (+1, np.isinf(hi))):
                if not unbounded:
                    continue
                if piece.tail_exponent is None:
                    raise MissingTailMetadata(
                        f"piece [{piece.lo}, {piece.hi}] has no tail exponent")
                if piece.tail_exponent <= k + 1:
                    if k % 2 == 1 and side < 0:
                        minus_inf = True
                    else:
                        plus_inf = True
            if plus_inf or minus_inf:
                continue
            dens = piece.density

            def g(u, _d=dens, _k=k):
                return u ** _k * np.asarray(_d(u))

            finite += float(np.real(quad_interval(g, lo, hi, abs_tol=abs_tol)))
        if plus_inf and minus_inf:
            raise ValueError("moment is indeterminate: both tails diverge")
        if plus_inf:
            return math.inf
        if minus_inf:
            return -math.inf
        return finite

    # -- convenience -----------------------------------------------------

    def scaled(self, c: float) -> "Measure":
        if not c > 0:
            raise ValueError("scale factor must be positive")
        atoms = tuple(Atom(a.position, c * a.mass) for a in self.atoms)
        pieces = tuple(
            DensityPiece(p.lo, p.hi,
                         (lambda u, _d=p.density, _c=c: _c * np.asarray(_d(u))),
                         p.tail_exponent, None)
            for p in self.pieces)
        return Measure(atoms, pieces)

    def support_hull(self) -> tuple[float, float]:
        lo, hi = math.inf, -math.inf
        for a in self.atoms:
            lo, hi = min(lo, a.position), max(hi, a.position)
        for p in self.pieces:
            lo, hi = min(lo, p.lo), max(hi, p.hi)
        return lo, hi

    @property
    def is_empty(self) -> bool:
        return not self.atoms and not self.pieces

    # -- serialization ---------------------------------------------------

    def to_json_dict(self) -> dict:
        ac = []
        for p in self.pieces:
            if p.label is None:
                raise ValueError(
                    "only labelled density pieces can be serialized")
            entry: dict = {"lo": _num_out(p.lo), "hi": _num_out(p.hi),
                           "density": p.label}
            if p.tail_exponent is not None:
                entry["tailExponent"] = p.tail_exponent
            if p.label == "table":
                entry["points"] = getattr(p.density, "table_points")
            ac.append(entry)
        return {"atoms": [{"u": a.position, "mass": a.mass} for a in self.atoms],
                "ac": ac}

    @classmethod
    def from_json_dict(cls, data: dict) -> "Measure":
        atoms = tuple(Atom(float(d["u"]), float(d["mass"]))
                      for d in data.get("atoms", ()))
        pieces = []
        for entry in data.get("ac", ()):
            pieces.append(_piece_from_json(entry))
        return cls(atoms, tuple(pieces))

    @classmethod
    def from_json(cls, text: str) -> "Measure":
        return cls.from_json_dict(json.loads(text))


def _num_out(x: float):
    if x == math.inf:
        return "inf"
    if x == -math.inf:
        return "-inf"
    return x


def _num_in(x) -> float:
    if isinstance(x, str):
        s = x.strip().lower()
        if s in ("inf", "+inf", "infinity"):
            return math.inf
        if s == "-inf":
            return -math.inf
        return float(s)
    return float(x)


# -- builtin densities ----------------------------------------------------

def semicircle_density(t: float = 1.0):
    """Wigner semicircle of variance t on [-2 sqrt t, 2 sqrt t]."""
    def dens(u):
        u = np.asarray(u)
        return np.sqrt(np.clip(4.0 * t - u * u, 0.0, None)) / (_TWO_PI * t)
    return dens


def _sqrt_neg(u):
    u = np.asarray(u)
    return np.sqrt(np.clip(-u, 0.0, None)) / (_TWO_PI * (1.0 + u * u))


def _inv_sqrt_neg(u):
    u = np.asarray(u, dtype=float)
    return 1.0 / (_TWO_PI * np.sqrt(np.clip(-u, 1e-300, None)) * (1.0 + u * u))


def table_density(points: Sequence[Sequence[float]]):
    """Piecewise-linear density through (u, value) pairs; zero outside."""
    pts = sorted((float(u), float(v)) for u, v in points)
    us = np.array([p[0] for p in pts])
    vs = np.array([p[1] for p in pts])
    if np.any(vs < 0):
        raise ValueError("table density values must be nonnegative")

    def dens(u):
        return np.interp(np.asarray(u), us, vs, left=0.0, right=0.0)

    dens.table_points = [[float(a), float(b)] for a, b in pts]
    return dens


_NAME_RE = re.compile(r"^\s*([A-Za-z_]\w*)\s*(?:\((.*)\))?\s*$")


def _piece_from_json(entry: dict) -> DensityPiece:
    lo = _num_in(entry["lo"])
    hi = _num_in(entry["hi"])
    tail = entry.get("tailExponent")
    tail = None if tail is None else float(tail)
    name = entry["density"]
    m = _NAME_RE.match(name)
    if not m:
        raise ValueError(f"unrecognized density spec {name!r}")
    base, args = m.group(1), m.group(2)
    if base == "semicircle":
        t = float(args) if args else 1.0
        return DensityPiece(lo, hi, semicircle_density(t), tail,
                            f"semicircle({t:g})")
    if base == "sqrtNeg":
        return DensityPiece(lo, hi, _sqrt_neg, tail if tail is not None else 1.5,
                            "sqrtNeg")
    if base == "invSqrtNeg":
        return DensityPiece(lo, hi, _inv_sqrt_neg,
                            tail if tail is not None else 2.5, "invSqrtNeg")
    if base == "table":
        dens = table_density(entry["points"])
        return DensityPiece(lo, hi, dens, tail, "table")
    raise ValueError(f"unknown builtin density {base!r}")


# -- constructors used throughout the package -----------------------------

def dirac(position: float, mass: float = 1.0) -> Measure:
    return Measure(atoms=(Atom(position, mass),))


def atomic(pairs: Sequence[tuple[float, float]]) -> Measure:
    return Measure(atoms=tuple(Atom(u, m) for u, m in pairs))


def semicircle_measure(t: float = 1.0) -> Measure:
    r = 2.0 * math.sqrt(t)
    return Measure(pieces=(DensityPiece(-r, r, semicircle_density(t),
                                        None, f"semicircle({t:g})"),))


def cauchy_law(scale: float = 1.0) -> Measure:
    """Cauchy law with density scale / (pi (scale^2 + u^2))."""
    def dens(u):
        u = np.asarray(u)
        return scale / (math.pi * (scale * scale + u * u))
    return Measure(pieces=(DensityPiece(-math.inf, math.inf, dens, 2.0, None),))
