"""Nevanlinna functions: analytic maps of C+ into the closed lower half-plane.

Convention used throughout the package: a Nevanlinna function phi maps the
open upper half-plane into C- union R and has the canonical form

    phi(z) = alpha z + beta + int (1 + u z)/(z - u) nu(du),

with alpha <= 0, beta real and nu a finite positive measure.  The measure is
recovered from boundary values as

    nu(du) = lim_eps  -Im phi(u + i eps) / (pi (1 + u^2)) du,

with a 1/pi weight: the 1/(2 pi) sometimes quoted is inconsistent with the
canonical form above, as the identity phi(i) = alpha i + beta - i nu(R)
shows (take phi = -i, whose nu is the standard Cauchy law of total mass 1).
"""
from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import (DomainError, EvaluatorFailure, ExtrapolationUnstable,
                     NotNevanlinna)
from .measures import Atom, DensityPiece, Measure, cauchy_law, table_density
from .quadrature import DEFAULT_ABS_TOL


# ---------------------------------------------------------------------------
# representations
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class NevanlinnaSpec:
    """Canonical triple (alpha, beta, nu)."""
    alpha: float
    beta: float
    nu: Measure

    def __post_init__(self):
        if self.alpha > 0:
            raise ValueError(f"alpha must be <= 0, got {self.alpha}")

    def evaluate(self, z: complex, *, abs_tol: float = DEFAULT_ABS_TOL) -> complex:
        z = complex(z)
        if z.imag <= 0:
            raise DomainError(f"evaluation requires Im z > 0, got {z}")
        acc = self.alpha * z + self.beta
        if not self.nu.is_empty:
            acc += self.nu.integrate(lambda u: (1.0 + u * z) / (z - u),
                                     abs_tol=abs_tol)
        return complex(acc)

    def eval_grid(self, zs, *, abs_tol: float = DEFAULT_ABS_TOL) -> np.ndarray:
        """Evaluate on an array of points in one adaptive quadrature pass."""
        zs = np.asarray(zs, dtype=complex)
        flat = zs.ravel()
        if np.any(flat.imag <= 0):
            raise DomainError("evaluation requires Im z > 0 for every point")
        acc = self.alpha * flat + self.beta
        if not self.nu.is_empty:
            def kernel(u):
                u = np.asarray(u)
                return (1.0 + flat[:, None] * u[None, :]) / (flat[:, None] - u[None, :])
            acc = acc + self.nu.integrate(kernel, abs_tol=abs_tol)
        return acc.reshape(zs.shape)


@dataclass(frozen=True)
class RationalNevanlinna:
    """a z + b + sum_k residues[k] / (z - poles[k]) with a <= 0, residues > 0."""
    a: float
    b: float
    poles: tuple[float, ...] = ()
    residues: tuple[float, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "poles", tuple(float(p) for p in self.poles))
        object.__setattr__(self, "residues",
                           tuple(float(r) for r in self.residues))
        if self.a > 0:
            raise ValueError(f"leading coefficient must be <= 0, got {self.a}")
        if len(self.poles) != len(self.residues):
            raise ValueError("poles and residues must have equal length")
        if any(r <= 0 for r in self.residues):
            raise ValueError("residues must be strictly positive")
        if any(q <= p for p, q in zip(self.poles, self.poles[1:])):
            raise ValueError("poles must be strictly increasing")

    def evaluate(self, z):
        z = np.asarray(z, dtype=complex)
        acc = self.a * z + self.b
        for xi, al in zip(self.poles, self.residues):
            acc = acc + al / (z - xi)
        return acc if acc.shape else complex(acc)

    def derivative(self, z):
        z = np.asarray(z, dtype=complex)
        acc = self.a * np.ones_like(z)
        for xi, al in zip(self.poles, self.residues):
            acc = acc - al / (z - xi) ** 2
        return acc if acc.shape else complex(acc)


@dataclass(frozen=True)
class PowerForm:
    """psi(z) = coeff * z**exponent with the principal branch on C \\ (-inf, 0].

    Nevanlinna cases: coeff < 0 with exponent in (0, 1], and coeff > 0 with
    exponent in (-1, 0).
    """
    coeff: float
    exponent: float

    def __post_init__(self):
        c, p = self.coeff, self.exponent
        ok = (c < 0 and 0 < p <= 1) or (c > 0 and -1 < p < 0)
        if not ok:
            raise ValueError(
                f"coeff={c}, exponent={p} is not a Nevanlinna power form")

    def evaluate(self, z):
        z = np.asarray(z, dtype=complex)
        val = self.coeff * np.power(z, self.exponent)
        return val if val.shape else complex(val)

    def derivative(self, z):
        z = np.asarray(z, dtype=complex)
        val = self.coeff * self.exponent * np.power(z, self.exponent - 1.0)
        return val if val.shape else complex(val)

    def canonical_spec(self) -> NevanlinnaSpec:
        """Exact canonical triple of the power form.

        For exponent p in (-1, 1), p != 0: alpha = 0, beta = coeff cos(pi p/2)
        and nu has density |coeff sin(pi p)| |u|^p / (pi (1 + u^2)) on u < 0
        (tail exponent 2 - p).  For psi = coeff z the triple is (coeff, 0, 0).
        """
        c, p = self.coeff, self.exponent
        if p == 1.0:
            return NevanlinnaSpec(c, 0.0, Measure())
        beta = c * math.cos(0.5 * math.pi * p)
        amp = abs(c * math.sin(math.pi * p)) / math.pi

        def dens(u, _amp=amp, _p=p):
            u = np.asarray(u, dtype=float)
            mag = np.clip(-u, 1e-300, None)
            return _amp * mag ** _p / (1.0 + u * u)

        piece = DensityPiece(-math.inf, 0.0, dens, tail_exponent=2.0 - p)
        return NevanlinnaSpec(0.0, beta, Measure(pieces=(piece,)))


def constant_spec(c: complex) -> NevanlinnaSpec:
    """Canonical triple of a constant Nevanlinna function (Im c <= 0)."""
    c = complex(c)
    if c.imag > 0:
        raise ValueError("a Nevanlinna constant needs Im c <= 0")
    if c.imag == 0:
        return NevanlinnaSpec(0.0, c.real, Measure())
    return NevanlinnaSpec(0.0, c.real, cauchy_law().scaled(-c.imag))


# ---------------------------------------------------------------------------
# black-box analytic functions
# ---------------------------------------------------------------------------

@dataclass
class AnalyticFn:
    """Carrier for a black-box analytic function on a declared domain."""
    evaluator: Callable
    domain: str = "upper-half-plane"
    derivative: Callable | None = None
    vectorized: bool = False
    batch_evaluator: Callable | None = None
    name: str | None = None

    def __call__(self, z: complex) -> complex:
        return complex(self.evaluator(z))

    def eval_array(self, zs) -> np.ndarray:
        zs = np.asarray(zs, dtype=complex)
        if self.batch_evaluator is not None:
            return np.asarray(self.batch_evaluator(zs), dtype=complex)
        if self.vectorized:
            return np.asarray(self.evaluator(zs), dtype=complex)
        flat = zs.ravel()
        out = np.array([complex(self.evaluator(z)) for z in flat])
        return out.reshape(zs.shape)

    def diff(self, z: complex, h: float = 1e-6) -> complex:
        if self.derivative is not None:
            return complex(self.derivative(z))
        step = h * max(1.0, abs(z))
        return (self(z + step) - self(z - step)) / (2.0 * step)


def const_fn(c: complex) -> AnalyticFn:
    c = complex(c)
    return AnalyticFn(lambda z: c * np.ones_like(np.asarray(z, dtype=complex)),
                      derivative=lambda z: 0.0 * np.asarray(z, dtype=complex),
                      vectorized=True, name=f"const({c.real:g},{c.imag:g})")


def neg_pow(rho: float) -> AnalyticFn:
    form = PowerForm(-1.0, float(rho))
    return AnalyticFn(form.evaluate, derivative=form.derivative,
                      vectorized=True, name=f"negPow({rho:g})")


def pow_fn(theta: float) -> AnalyticFn:
    form = PowerForm(1.0, float(theta))
    return AnalyticFn(form.evaluate, derivative=form.derivative,
                      vectorized=True, name=f"pow({theta:g})")


def rational_fn(r: RationalNevanlinna) -> AnalyticFn:
    return AnalyticFn(r.evaluate, derivative=r.derivative, vectorized=True,
                      name="rational")


def spec_fn(spec: NevanlinnaSpec, *, abs_tol: float = DEFAULT_ABS_TOL) -> AnalyticFn:
    return AnalyticFn(lambda z: spec.evaluate(z, abs_tol=abs_tol),
                      batch_evaluator=lambda zs: spec.eval_grid(zs, abs_tol=abs_tol),
                      name="nevanlinna-spec")


def to_analytic(obj) -> AnalyticFn:
    """Coerce any supported function description to an AnalyticFn."""
    if isinstance(obj, AnalyticFn):
        return obj
    if isinstance(obj, PowerForm):
        return AnalyticFn(obj.evaluate, derivative=obj.derivative,
                          vectorized=True,
                          name=f"power({obj.coeff:g},{obj.exponent:g})")
    if isinstance(obj, RationalNevanlinna):
        return rational_fn(obj)
    if isinstance(obj, NevanlinnaSpec):
        return spec_fn(obj)
    if isinstance(obj, (int, float, complex)):
        return const_fn(complex(obj))
    if callable(obj):
        return AnalyticFn(obj)
    raise TypeError(f"cannot interpret {obj!r} as an analytic function")


# ---------------------------------------------------------------------------
# operations
# ---------------------------------------------------------------------------

def eval_nevanlinna(spec: NevanlinnaSpec, z: complex,
                    *, abs_tol: float = DEFAULT_ABS_TOL) -> complex:
    return spec.evaluate(z, abs_tol=abs_tol)


def rational_to_canonical(r: RationalNevanlinna) -> NevanlinnaSpec:
    """Change of representation: residue alpha_k at xi_k becomes an atom of
    mass alpha_k / (1 + xi_k^2), with beta = b - sum m_k xi_k."""
    atoms = []
    beta = r.b
    for xi, al in zip(r.poles, r.residues):
        m = al / (1.0 + xi * xi)
        atoms.append(Atom(xi, m))
        beta -= m * xi
    return NevanlinnaSpec(r.a, beta, Measure(atoms=tuple(atoms)))


def halfplane_grid(n_r: int = 64, n_theta: int = 64, r_min: float = 1e-3,
                   r_max: float = 1e3) -> np.ndarray:
    """Log-polar sampling of C+ refined toward the real axis."""
    radii = np.logspace(math.log10(r_min), math.log10(r_max), n_r)
    base = math.pi * (np.arange(n_theta) + 0.5) / n_theta
    near_axis = []
    for k in (1e-2, 1e-3, 1e-4):
        near_axis.extend([math.pi * k, math.pi * (1.0 - k)])
    thetas = np.sort(np.concatenate([base, near_axis]))
    z = radii[:, None] * np.exp(1j * thetas[None, :])
    return z.ravel()


@dataclass(frozen=True)
class Verdict:
    """Outcome of a numeric falsifier: pass / fail(witness) / inconclusive."""
    status: str
    witness: complex | None = None
    t: float | None = None
    detail: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.status == "pass"

    @property
    def failed(self) -> bool:
        return self.status == "fail"


def is_nevanlinna_numeric(f, grid=None, *, im_tol: float = 1e-9) -> Verdict:
    """Sample Im f over C+; fail carries a witness, pass is necessary-only."""
    fn = to_analytic(f)
    zs = halfplane_grid() if grid is None else np.asarray(grid, dtype=complex)
    try:
        vals = fn.eval_array(zs)
    except Exception as exc:  # pinpoint the offending z for the caller
        for z in zs:
            try:
                fn(z)
            except Exception:
                raise EvaluatorFailure(f"evaluator failed at {z}", point=z) from exc
        raise EvaluatorFailure(str(exc)) from exc
    finite = np.isfinite(vals)
    nan_frac = 1.0 - float(np.count_nonzero(finite)) / vals.size
    imag = np.where(finite, vals.imag, -np.inf)
    worst = int(np.argmax(imag))
    if imag[worst] > im_tol:
        return Verdict("fail", witness=complex(zs[worst]),
                       detail={"im": float(imag[worst]), "nanFraction": nan_frac})
    if nan_frac > 0.05:
        return Verdict("inconclusive", detail={"nanFraction": nan_frac})
    return Verdict("pass", detail={"certificate": "necessary-condition-only",
                                   "points": int(vals.size),
                                   "maxIm": float(imag[worst]),
                                   "nanFraction": nan_frac})


def default_recovery_grid() -> np.ndarray:
    """Dense core with logarithmic tails out to |u| = 1e4."""
    core = np.linspace(-8.0, 8.0, 961)
    tail = np.logspace(math.log10(8.02), 4.0, 64)
    return np.concatenate([-tail[::-1], core, tail])


@dataclass(frozen=True)
class RecoveryResult:
    alpha: float
    beta: float
    nu: Measure
    grid: np.ndarray
    density: np.ndarray
    mass: float
    implied_mass: float
    mass_deficit: float
    flags: tuple[str, ...] = ()


def recover_parameters(f, *, u_grid=None, eps: float = 1e-3,
                       v_ladder=None, probe_tol: float = 1e-9) -> RecoveryResult:
    """Recover (alpha, beta, nu) of a black-box Nevanlinna function.

    alpha comes from a Richardson-extrapolated f(iv)/(iv) ladder, the density
    of nu from boundary values -Im f(u + i eps)/(pi (1 + u^2)) extrapolated
    over (eps, eps/2), and beta from Re f(i) minus the (purely imaginary, so
    vanishing) contribution of the recovered table at i.  Atoms are not
    resolved; they surface as a mass deficit plus a warning flag.
    """
    fn = to_analytic(f)
    _probe_nevanlinna(fn, probe_tol)
    fi = fn(1j)
    if abs(fi.imag) < 1e-12:
        # a Nevanlinna function attaining a real value is that constant
        return RecoveryResult(0.0, fi.real, Measure(), np.array([]),
                              np.array([]), 0.0, 0.0, 0.0,
                              flags=("real-constant",))

    if v_ladder is None:
        v_ladder = 2.0 ** np.arange(6, 21)
    ratios = fn.eval_array(1j * np.asarray(v_ladder)) / (1j * np.asarray(v_ladder))
    ext = 2.0 * ratios[1:] - ratios[:-1]
    tail_jump = abs(ext[-1] - ext[-2])
    if not np.isfinite(tail_jump) or tail_jump > 1e-4 * max(1.0, abs(ext[-1])):
        raise ExtrapolationUnstable(
            f"alpha ladder did not settle (last jump {tail_jump:.3g})")
    alpha_hat = min(float(ext[-1].real), 0.0)

    grid = default_recovery_grid() if u_grid is None else np.asarray(u_grid, float)
    weight = math.pi * (1.0 + grid * grid)
    d_full = -fn.eval_array(grid + 1j * eps).imag / weight
    d_half = -fn.eval_array(grid + 1j * (eps / 2.0)).imag / weight
    density = 2.0 * d_half - d_full

    mass = float(np.trapezoid(density, grid))
    implied = alpha_hat - fi.imag
    deficit = implied - mass

    kernel_i = (1.0 + grid * 1j) / (1j - grid)
    table_at_i = np.trapezoid(kernel_i * density, grid)
    beta_hat = float(fi.real - table_at_i.real)

    flags = []
    if abs(deficit) > max(0.02, 0.05 * abs(implied)):
        flags.append("unresolved-mass")
    clipped = np.clip(density, 0.0, None)
    nu_hat = Measure(pieces=(DensityPiece(
        float(grid[0]), float(grid[-1]),
        table_density(list(zip(grid.tolist(), clipped.tolist()))),
        None, "table"),))
    return RecoveryResult(alpha_hat, beta_hat, nu_hat, grid, density, mass,
                          implied, deficit, tuple(flags))


def _probe_nevanlinna(fn: AnalyticFn, tol: float):
    zs = halfplane_grid(n_r=10, n_theta=8)
    vals = fn.eval_array(zs)
    finite = np.isfinite(vals)
    imag = np.where(finite, vals.imag, -np.inf)
    worst = int(np.argmax(imag))
    if imag[worst] > tol:
        raise NotNevanlinna(
            f"Im f = {imag[worst]:.3g} > {tol:g} at z = {zs[worst]}",
            witness=complex(zs[worst]))


def validate_derivative(fn: AnalyticFn, rng: np.random.Generator,
                        n: int = 20, rel_tol: float = 1e-5) -> bool:
    """Check a declared derivative against central differences."""
    if fn.derivative is None:
        return True
    for _ in range(n):
        z = complex(rng.uniform(-3, 3), rng.uniform(0.3, 3))
        h = 1e-5 * max(1.0, abs(z))
        fd = (fn(z + h) - fn(z - h)) / (2 * h)
        dv = complex(fn.derivative(z))
        if abs(dv - fd) > rel_tol * max(1.0, abs(dv)):
            return False
    return True


# ---------------------------------------------------------------------------
# parsing of named function specs (CLI surface)
# ---------------------------------------------------------------------------

_CALL_RE = re.compile(r"^\s*([A-Za-z_]\w*)\s*\((.*)\)\s*$", re.S)


def _split_args(text: str) -> list[str]:
    parts, depth, cur = [], 0, []
    for ch in text:
        if ch in "[(":
            depth += 1
        elif ch in "])":
            depth -= 1
        if ch == "," and depth == 0:
            parts.append("".join(cur))
            cur = []
        else:
            cur.append(ch)
    if cur:
        parts.append("".join(cur))
    return [p.strip() for p in parts if p.strip()]


def parse_named_form(text: str):
    """Parse 'negPow(r)', 'pow(t)', 'const(re,im)', 'rational(...)' or JSON.

    JSON objects are dispatched on their keys: alpha/beta/nu gives a
    NevanlinnaSpec, a/b/poles/residues a RationalNevanlinna.
    """
    text = text.strip()
    if text.startswith("@"):
        with open(text[1:], "r", encoding="utf-8") as fh:
            text = fh.read().strip()
    if text.startswith("{"):
        data = json.loads(text)
        return form_from_json(data)
    m = _CALL_RE.match(text)
    if not m:
        raise ValueError(f"unrecognized function spec {text!r}")
    head, body = m.group(1), m.group(2)
    if head == "negPow":
        return PowerForm(-1.0, float(body))
    if head == "pow":
        return PowerForm(1.0, float(body))
    if head == "const":
        re_part, im_part = (float(v) for v in _split_args(body))
        return complex(re_part, im_part)
    if head == "rational":
        kwargs = {}
        for item in _split_args(body):
            key, _, val = item.partition("=")
            kwargs[key.strip()] = json.loads(val)
        return RationalNevanlinna(
            float(kwargs.get("a", 0.0)), float(kwargs.get("b", 0.0)),
            tuple(kwargs.get("poles", ())), tuple(kwargs.get("residues", ())))
    raise ValueError(f"unknown function constructor {head!r}")


def form_from_json(data: dict):
    if "alpha" in data:
        return NevanlinnaSpec(float(data["alpha"]), float(data["beta"]),
                              Measure.from_json_dict(data["nu"]))
    if "poles" in data or "a" in data:
        return RationalNevanlinna(float(data.get("a", 0.0)),
                                  float(data.get("b", 0.0)),
                                  tuple(data.get("poles", ())),
                                  tuple(data.get("residues", ())))
    raise ValueError("JSON object is neither a NevanlinnaSpec nor a "
                     "RationalNevanlinna")


def spec_to_json_dict(obj) -> dict:
    if isinstance(obj, NevanlinnaSpec):
        return {"alpha": obj.alpha, "beta": obj.beta,
                "nu": obj.nu.to_json_dict()}
    if isinstance(obj, RationalNevanlinna):
        return {"a": obj.a, "b": obj.b, "poles": list(obj.poles),
                "residues": list(obj.residues)}
    raise TypeError(f"cannot serialize {type(obj).__name__}")
