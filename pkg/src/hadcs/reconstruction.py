"""Sparse recovery: FISTA-LASSO, dictionary-coded recovery and thresholding."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import TYPE_CHECKING

import numpy as np

from .channel import Image, MeasurementVector
from .sensing import SensingMatrix

if TYPE_CHECKING:
    from .dictionary import DictionaryStack

MAX_ITERS_LIMIT = 1_000_000
DEFAULT_LAMBDA_FRACTION = 0.05
POWER_ITERS = 20


@dataclass(frozen=True)
class SolverConfig:
    """LASSO solver settings.

    ``lam=None`` selects ``0.05 * ||A^T t||_inf`` for the operator ``A``
    actually being inverted. ``step=None`` uses ``1 / Lipschitz`` from a
    power-iteration estimate of ``||A||_2**2``.
    """

    lam: float | None = None
    max_iters: int = 2000
    tol: float = 1e-10
    step: float | None = None

    def __post_init__(self):
        if self.lam is not None and self.lam < 0:
            raise ValueError("lam must be nonnegative")
        if not 0 < self.tol < 1:
            raise ValueError("tol must lie in (0, 1)")
        if not 1 <= self.max_iters <= MAX_ITERS_LIMIT:
            raise ValueError(f"max_iters must lie in [1, {MAX_ITERS_LIMIT}]")
        if self.step is not None and not self.step > 0:
            raise ValueError("step must be positive")


@dataclass(frozen=True, eq=False)
class ReconResult:
    image: Image
    iters_used: int
    objective_trace: list[float] = field(repr=False)
    converged: bool
    codes: np.ndarray | None = field(default=None, repr=False)


def soft_threshold(x, t):
    """``sign(x) * max(|x| - t, 0)``, elementwise for arrays."""
    if np.ndim(x) == 0:
        x = float(x)
        return math.copysign(max(abs(x) - t, 0.0), x) if abs(x) > t else 0.0
    x = np.asarray(x, dtype=np.float64)
    return np.sign(x) * np.maximum(np.abs(x) - t, 0.0)


def spectral_norm_sq(A: np.ndarray, iters: int = POWER_ITERS, seed: int = 0) -> float:
    """Power-iteration estimate of ``||A||_2**2`` (largest eigenvalue of A^T A)."""
    A = np.asarray(A, dtype=np.float64)
    if not A.size:
        return 0.0
    v = np.random.default_rng(seed).standard_normal(A.shape[1])
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(iters):
        w = A.T @ (A @ v)
        lam = float(np.linalg.norm(w))
        if lam == 0.0:
            return 0.0
        v = w / lam
    # Rayleigh quotient: a lower bound on the true value, callers pad it
    return float(v @ (A.T @ (A @ v)))


def fista(A: np.ndarray, t: np.ndarray, lam: float, cfg: SolverConfig, z0=None):
    """Monotone FISTA for ``min 0.5||A z - t||^2 + lam ||z||_1``.

    A candidate that raises the objective is rejected and momentum is
    reset, so the returned trace is non-increasing. ``A @ v`` is carried
    alongside each iterate so one forward and one adjoint product are
    needed per step.

    Returns ``(z, trace, iters, converged)``.
    """
    A = np.asarray(A, dtype=np.float64)
    t = np.asarray(t, dtype=np.float64)
    n = A.shape[1]
    if cfg.step is not None:
        step = cfg.step
    else:
        lip = spectral_norm_sq(A) * 1.02
        step = 1.0 / lip if lip > 0 else 1.0
    x = np.zeros(n) if z0 is None else np.array(z0, dtype=np.float64)
    Ax = A @ x

    def value(Av, v):
        r = Av - t
        return 0.5 * float(r @ r) + lam * float(np.abs(v).sum())

    f = value(Ax, x)
    trace = [f]
    y, Ay = x.copy(), Ax.copy()
    tk = 1.0
    converged = False
    restarted = False
    it = 0
    for it in range(1, cfg.max_iters + 1):
        z = y - step * (A.T @ (Ay - t))
        z = np.sign(z) * np.maximum(np.abs(z) - step * lam, 0.0)
        Az = A @ z
        fz = value(Az, z)
        if fz > f:
            # restart from the last accepted iterate; a failed plain step
            # means the Lipschitz estimate was low
            if restarted:
                step *= 0.5
            y, Ay = x.copy(), Ax.copy()
            tk = 1.0
            restarted = True
            trace.append(f)
            continue
        restarted = False
        t_next = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * tk * tk))
        mom = (tk - 1.0) / t_next
        y = z + mom * (z - x)
        Ay = Az + mom * (Az - Ax)
        tk = t_next
        rel = (f - fz) / max(abs(f), 1e-300)
        x, Ax, f = z, Az, fz
        trace.append(f)
        if rel < cfg.tol:
            converged = True
            break
    return x, trace, it, converged


def _check_dims(s: SensingMatrix, t: MeasurementVector):
    if len(t) != s.rows:
        raise ValueError(f"measurement length {len(t)} != sensing rows {s.rows}")


def _shape_for(s: SensingMatrix, n: int) -> tuple[int, int]:
    if s.source is not None and s.source.p * s.source.q == n:
        return s.source.p, s.source.q
    return 1, n


def lasso_fista(
    s: SensingMatrix,
    t: MeasurementVector,
    basis: np.ndarray | None = None,
    cfg: SolverConfig | None = None,
    z0=None,
) -> ReconResult:
    """Minimise ``0.5||S B z - t||^2 + lam ||z||_1`` and return ``B z``.

    Without ``basis`` the image itself is the sparse variable.
    """
    cfg = cfg or SolverConfig()
    _check_dims(s, t)
    S = s.as_float()
    if basis is not None:
        basis = np.asarray(basis, dtype=np.float64)
        if basis.shape[0] != s.cols:
            raise ValueError(f"basis has {basis.shape[0]} rows, sensing matrix {s.cols} columns")
        A = S @ basis
    else:
        A = S
    tv = t.values
    lam = cfg.lam if cfg.lam is not None else DEFAULT_LAMBDA_FRACTION * float(np.max(np.abs(A.T @ tv)))
    z, trace, iters, conv = fista(A, tv, lam, cfg, z0)
    x = basis @ z if basis is not None else z
    p, q = _shape_for(s, s.cols)
    return ReconResult(Image.from_flat(x, p, q), iters, trace, conv, z)


def reconstruct_dl(
    s: SensingMatrix,
    t: MeasurementVector,
    stack: "DictionaryStack",
    cfg: SolverConfig | None = None,
    alphas=None,
    gamma: float = 1.0,
) -> ReconResult:
    """Recover an image through a frozen dictionary stack.

    Solves ``gamma ||S D z - t||^2 + alpha_K ||z||_1`` over the top-layer
    code ``z`` (``D`` the chained dictionary product), i.e. LASSO with
    ``lam = alpha_K / (2 gamma)``. The intermediate-layer codes are fixed
    functions of ``z`` and their l1 terms are not optimised here. FISTA
    starts from the stack's encoding of the back-projection
    ``S^T t / ||S||^2``.
    """
    from .dictionary import encode_array

    cfg = cfg or SolverConfig()
    _check_dims(s, t)
    if stack.layer_dims[0] != s.cols:
        raise ValueError(f"stack input dim {stack.layer_dims[0]} != sensing columns {s.cols}")
    if not gamma > 0:
        raise ValueError("gamma must be positive at inference")
    alphas = list(stack.default_alphas() if alphas is None else alphas)
    S = s.as_float()
    B = stack.product()
    backproj = S.T @ t.values
    snorm = spectral_norm_sq(S)
    if snorm > 0:
        backproj = backproj / snorm
    z0 = encode_array(stack, backproj[:, None], alphas, iters=50)[-1][:, 0]
    lam = alphas[-1] / (2.0 * gamma) if cfg.lam is None else cfg.lam
    inner = SolverConfig(lam=lam, max_iters=cfg.max_iters, tol=cfg.tol, step=cfg.step)
    return lasso_fista(s, t, B, inner, z0=z0)


def binary_threshold(img: Image, theta: float = 0.5) -> Image:
    return Image((img.pixels >= theta).astype(np.float64), img.label)


def save_trace(result: ReconResult, path) -> None:
    with open(path, "w") as fh:
        fh.write("iter,objective\n")
        for i, v in enumerate(result.objective_trace):
            fh.write(f"{i},{float(v)!r}\n")
