"""Special functions, adaptive quadrature, and the seeded RNG substrate.

Everything downstream (densities, samplers, the trainer, the Monte Carlo
harness) draws randomness through :class:`RngStream`, so a single 64-bit
seed pins the entire pipeline bit-for-bit on a given build.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import special as _sp

from .errors import DomainError, NumericError

__all__ = [
    "RngStream",
    "ln_gamma",
    "digamma",
    "student_t_logpdf",
    "normal_logpdf",
    "normal_cdf",
    "integrate",
    "sample_normal",
    "sample_uniform",
    "sample_gamma",
    "sample_student_t",
    "sample_exponential",
]


# ---------------------------------------------------------------------------
# Special functions
# ---------------------------------------------------------------------------

def ln_gamma(x: float) -> float:
    """log of the gamma function for x > 0.

    Relative error is a few ulp over [0.5, 1e6] (delegates to the C
    library's Lanczos-class implementation).
    """
    if not np.isfinite(x) or x <= 0.0:
        raise DomainError(f"ln_gamma requires x > 0, got {x!r}")
    return math.lgamma(x)


def digamma(x: float) -> float:
    """Derivative of ln_gamma; needed for degrees-of-freedom gradients."""
    if not np.isfinite(x) or x <= 0.0:
        raise DomainError(f"digamma requires x > 0, got {x!r}")
    return float(_sp.digamma(x))


def _t_log_norm_const(delta: float) -> float:
    """log normalizing constant of the Student-t density with delta dof."""
    return (
        ln_gamma((delta + 1.0) / 2.0)
        - ln_gamma(delta / 2.0)
        - 0.5 * math.log(delta * math.pi)
    )


def student_t_logpdf(x, delta: float):
    """Log density of the standard Student-t with delta > 2 dof.

    The mode is 0 and the variance is delta / (delta - 2); delta <= 2 is
    rejected because the error model requires a finite variance.
    Accepts scalars or arrays in ``x``.
    """
    if not np.isfinite(delta) or delta <= 2.0:
        raise DomainError(f"student_t_logpdf requires delta > 2, got {delta!r}")
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        raise DomainError("student_t_logpdf requires finite x")
    out = _t_log_norm_const(delta) - 0.5 * (delta + 1.0) * np.log1p(x * x / delta)
    return float(out) if out.ndim == 0 else out


def normal_logpdf(x):
    """Log density of the standard normal."""
    x = np.asarray(x, dtype=float)
    out = -0.5 * math.log(2.0 * math.pi) - 0.5 * x * x
    return float(out) if out.ndim == 0 else out


def normal_cdf(x):
    """Standard normal CDF, absolute error below 1e-12 for finite x."""
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        raise DomainError("normal_cdf requires finite x")
    out = _sp.ndtr(x)
    return float(out) if out.ndim == 0 else out


# ---------------------------------------------------------------------------
# Adaptive quadrature
# ---------------------------------------------------------------------------

def integrate(f, a: float, b: float, tol: float = 1e-9, max_segments: int = 100_000) -> float:
    """Integrate f over [a, b] by adaptive Simpson subdivision.

    ``f`` must accept numpy arrays elementwise.  Segments whose local
    Simpson refinement disagrees by more than their share of ``tol`` are
    halved; exceeding ``max_segments`` raises NumericError.
    """
    if not (np.isfinite(a) and np.isfinite(b)) or not a < b:
        raise DomainError(f"integrate requires finite a < b, got [{a!r}, {b!r}]")
    if tol <= 0:
        raise DomainError("integrate requires tol > 0")

    lo = np.array([a], dtype=float)
    hi = np.array([b], dtype=float)
    flo = np.asarray(f(lo), dtype=float)
    fhi = np.asarray(f(hi), dtype=float)
    mid = 0.5 * (lo + hi)
    fmid = np.asarray(f(mid), dtype=float)
    if not (np.all(np.isfinite(flo)) and np.all(np.isfinite(fhi)) and np.all(np.isfinite(fmid))):
        raise DomainError("integrate requires f finite on [a, b]")
    coarse = (hi - lo) / 6.0 * (flo + 4.0 * fmid + fhi)

    total = 0.0
    width = b - a
    while lo.size:
        if lo.size > max_segments:
            raise NumericError(
                f"integrate failed to converge within {max_segments} segments"
            )
        m = 0.5 * (lo + hi)
        lm = 0.5 * (lo + m)
        rm = 0.5 * (m + hi)
        flm = np.asarray(f(lm), dtype=float)
        frm = np.asarray(f(rm), dtype=float)
        if not (np.all(np.isfinite(flm)) and np.all(np.isfinite(frm))):
            raise DomainError("integrate requires f finite on [a, b]")
        left = (m - lo) / 6.0 * (flo + 4.0 * flm + fmid)
        right = (hi - m) / 6.0 * (fmid + 4.0 * frm + fhi)
        fine = left + right
        err = np.abs(fine - coarse)
        # Local budget proportional to segment width, with the standard
        # 1/15 Richardson factor for Simpson's rule.
        ok = err <= 15.0 * tol * np.maximum((hi - lo) / width, 1e-300)
        total += float(np.sum(fine[ok] + (fine[ok] - coarse[ok]) / 15.0))

        bad = ~ok
        lo = np.concatenate([lo[bad], m[bad]])
        hi = np.concatenate([m[bad], hi[bad]])
        flo = np.concatenate([flo[bad], fmid[bad]])
        fhi = np.concatenate([fmid[bad], fhi[bad]])
        fmid = np.concatenate([flm[bad], frm[bad]])
        coarse = np.concatenate([left[bad], right[bad]])
    return total


# ---------------------------------------------------------------------------
# Seeded RNG substrate
# ---------------------------------------------------------------------------

@dataclass
class RngStream:
    """Deterministic random stream keyed by (seed, stream-id path).

    Identical (seed, path) pairs reproduce the same draw sequence on any
    platform for a given numpy build.  Streams are single-owner: never
    share one between concurrent tasks; derive substreams instead.
    """

    seed: int
    path: tuple[int, ...] = ()
    _gen: np.random.Generator = field(init=False, repr=False, default=None)

    def __post_init__(self):
        if not (0 <= int(self.seed) < 2 ** 64):
            raise DomainError("seed must fit in 64 unsigned bits")
        self.seed = int(self.seed)
        self.path = tuple(int(p) for p in self.path)
        ss = np.random.SeedSequence(entropy=self.seed, spawn_key=self.path)
        self._gen = np.random.Generator(np.random.PCG64(ss))

    def substream(self, stream_id: int) -> "RngStream":
        """Derive an independent stream; never shares state with self."""
        return RngStream(self.seed, self.path + (int(stream_id),))

    @property
    def generator(self) -> np.random.Generator:
        return self._gen

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(n)


def sample_normal(rng: RngStream, size=None):
    """Standard normal draw(s)."""
    out = rng.generator.standard_normal(size)
    return float(out) if size is None else out


def sample_uniform(rng: RngStream, a: float, b: float, size=None):
    """Uniform draw(s) on [a, b]; a == b is allowed and degenerate."""
    if not (np.isfinite(a) and np.isfinite(b)) or a > b:
        raise DomainError(f"sample_uniform requires a <= b, got [{a!r}, {b!r}]")
    if a == b:
        return float(a) if size is None else np.full(size, float(a))
    out = rng.generator.uniform(a, b, size)
    return float(out) if size is None else out


def sample_gamma(rng: RngStream, shape: float, scale: float, size=None):
    """Gamma draw(s) via the Marsaglia-Tsang squeeze (numpy's generator)."""
    if shape <= 0 or scale <= 0:
        raise DomainError("sample_gamma requires shape > 0 and scale > 0")
    out = rng.generator.gamma(shape, scale, size)
    return float(out) if size is None else out


def sample_student_t(rng: RngStream, delta: float, size=None):
    """Student-t draw(s) as Z / sqrt(V / delta) with V ~ chi-square(delta)."""
    if not np.isfinite(delta) or delta <= 2.0:
        raise DomainError(f"sample_student_t requires delta > 2, got {delta!r}")
    z = rng.generator.standard_normal(size)
    v = rng.generator.gamma(delta / 2.0, 2.0, size)
    out = z / np.sqrt(v / delta)
    return float(out) if size is None else out


def sample_exponential(rng: RngStream, scale: float, size=None):
    """Exponential draw(s) with the given scale (1 / rate)."""
    if scale <= 0:
        raise DomainError("sample_exponential requires scale > 0")
    out = rng.generator.exponential(scale, size)
    return float(out) if size is None else out
