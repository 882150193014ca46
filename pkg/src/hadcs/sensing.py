"""Hadamard-family masks, shifted-mask sensing matrices and mutual coherence.

Index conventions
-----------------
A twin-prime S-matrix of order ``n = p*q`` is generated by a single
{0,1} sequence ``s`` on the cyclic group Z_n. The 2-D aperture pixel
``(a, b)`` (``0 <= a < p`` rows, ``0 <= b < q`` cols) sits at 1-D cyclic
index ``crt(a, b)``, the unique ``i`` in ``[0, n)`` with ``i = a (mod p)``
and ``i = b (mod q)``. Shifting the mask by ``t`` advances that cyclic
index, which is the same as translating the 2-D pattern cyclically by
``(t mod p, t mod q)``::

    mask_t[a, b] = s[(crt(a, b) + t) mod n]

Sensing rows are ``mask_t`` flattened row-major (pixel ``a*q + b``), and
row ``t`` of :attr:`MaskMatrix.entries` is exactly that vector.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import kernels
from .provenance import strip_header

MAX_SYLVESTER_K = 14
MAX_TWIN_PRIME_ORDER = 10_000


class CapacityError(ValueError):
    """Requested construction exceeds the supported size."""


class MaskKind(str, enum.Enum):
    SYLVESTER = "SylvesterHadamard"
    TWIN_PRIME = "TwinPrimeS"


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class MaskMatrix:
    """Square mask matrix; row ``t`` is the aperture pattern at shift ``t``."""

    kind: MaskKind
    entries: np.ndarray
    p: int
    q: int

    @property
    def order(self) -> int:
        return self.entries.shape[0]

    @property
    def convention(self) -> str:
        return "pm1" if self.kind is MaskKind.SYLVESTER else "01"

    def pattern(self, shift: int = 0) -> np.ndarray:
        """Aperture pattern at ``shift`` as a ``p x q`` array."""
        return self.entries[shift].reshape(self.p, self.q)


@dataclass(frozen=True, eq=False)
class SensingMatrix:
    entries: np.ndarray
    shifts: tuple[int, ...]
    source: MaskMatrix | None = field(default=None, repr=False)

    @property
    def rows(self) -> int:
        return self.entries.shape[0]

    @property
    def cols(self) -> int:
        return self.entries.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.entries.shape

    def as_float(self) -> np.ndarray:
        return self.entries.astype(np.float64)


@dataclass(frozen=True)
class CoherenceReport:
    mu: float
    worst_pair: tuple[int, int]
    gram_offdiag_max: float
    zero_columns: tuple[int, ...] = ()


# --------------------------------------------------------------------------
# constructions
# --------------------------------------------------------------------------


def sylvester_hadamard(k: int) -> MaskMatrix:
    """Order ``2**k`` Sylvester Hadamard matrix with +/-1 entries."""
    k = int(k)
    if k < 0:
        raise ValueError(f"k must be nonnegative, got {k}")
    if k > MAX_SYLVESTER_K:
        raise CapacityError(f"k={k} exceeds limit {MAX_SYLVESTER_K}")
    H = np.ones((1, 1), dtype=np.int8)
    block = np.array([[1, 1], [1, -1]], dtype=np.int8)
    for _ in range(k):
        H = np.kron(H, block)
    p = 2 ** (k // 2)
    q = 2 ** (k - k // 2)
    return MaskMatrix(MaskKind.SYLVESTER, _frozen(H), p, q)


def is_prime(n: int) -> bool:
    if n < 2:
        return False
    if n < 4:
        return True
    if n % 2 == 0:
        return False
    f = 3
    while f * f <= n:
        if n % f == 0:
            return False
        f += 2
    return True


def _legendre_table(p: int) -> np.ndarray:
    """chi[x] for x in [0, p): +1 on nonzero squares, -1 on non-squares, 0 at 0."""
    chi = -np.ones(p, dtype=np.int64)
    chi[0] = 0
    chi[(np.arange(1, p) ** 2) % p] = 1
    return chi


def crt_index(p: int, q: int) -> np.ndarray:
    """``p x q`` array whose ``[a, b]`` entry is the cyclic index ``crt(a, b)``."""
    n = p * q
    i = np.arange(n)
    out = np.empty((p, q), dtype=np.int64)
    out[i % p, i % q] = i
    return out


def twin_prime_sequence(p: int, q: int) -> np.ndarray:
    """Generating {0,1} sequence of length ``p*q`` for the cyclic S-matrix.

    The twin-prime difference set is ``{(x, 0)} U {(x, y): x, y != 0,
    chi_p(x) chi_q(y) = 1}`` over Z_p x Z_q, of size ``(n-1)/2``. The
    S-matrix marks its complement, giving ``(n+1)/2`` ones per row.
    """
    n = p * q
    i = np.arange(n)
    a = i % p
    b = i % q
    chi_p = _legendre_table(p)
    chi_q = _legendre_table(q)
    in_set = (b == 0) | ((a != 0) & (chi_p[a] * chi_q[b] == 1))
    return (~in_set).astype(np.int8)


def twin_prime_smatrix(p: int, q: int) -> MaskMatrix:
    """Cyclic {0,1} S-matrix of order ``p*q`` for twin primes ``q = p + 2``."""
    p, q = int(p), int(q)
    if q != p + 2 or not (is_prime(p) and is_prime(q)):
        raise ValueError(f"({p}, {q}) is not a twin-prime pair with q = p + 2")
    n = p * q
    if n > MAX_TWIN_PRIME_ORDER:
        raise CapacityError(f"order {n} exceeds limit {MAX_TWIN_PRIME_ORDER}")
    seq = twin_prime_sequence(p, q)
    pix = crt_index(p, q).ravel()
    shifts = np.arange(n)[:, None]
    entries = seq[(pix[None, :] + shifts) % n]
    return MaskMatrix(MaskKind.TWIN_PRIME, _frozen(entries), p, q)


def make_mask(kind: str | MaskKind, p: int, q: int) -> MaskMatrix:
    kind = MaskKind(kind)
    if kind is MaskKind.TWIN_PRIME:
        return twin_prime_smatrix(p, q)
    n = int(p) * int(q)
    k = n.bit_length() - 1
    if n < 1 or 2**k != n:
        raise ValueError(f"Sylvester order p*q={n} must be a power of two")
    mask = sylvester_hadamard(k)
    return MaskMatrix(mask.kind, mask.entries, int(p), int(q))


def build_sensing_matrix(mask: MaskMatrix, shifts: Sequence[int]) -> SensingMatrix:
    shifts = tuple(int(s) for s in shifts)
    n = mask.order
    if not shifts:
        raise ValueError("at least one shift is required")
    bad = [s for s in shifts if not 0 <= s < n]
    if bad:
        raise ValueError(f"shifts out of range [0, {n}): {bad[:5]}")
    if len(set(shifts)) != len(shifts):
        raise ValueError("shifts must be distinct")
    rows = mask.entries[list(shifts)]
    return SensingMatrix(_frozen(rows), shifts, mask)


# --------------------------------------------------------------------------
# coherence
# --------------------------------------------------------------------------


def _dense(m) -> np.ndarray:
    if isinstance(m, SensingMatrix):
        return m.as_float()
    return np.asarray(m, dtype=np.float64)


def coherence_of_gram(G: np.ndarray) -> CoherenceReport:
    G = np.ascontiguousarray(G, dtype=np.float64)
    if G.shape[0] < 2:
        raise ValueError("coherence needs at least 2 columns")
    diag = np.diag(G)
    zero = tuple(int(i) for i in np.flatnonzero(np.sqrt(np.clip(diag, 0, None)) < kernels.ZERO_NORM))
    mu, i, j = kernels.gram_coherence(G)
    if i < 0:
        # fewer than two usable columns
        return CoherenceReport(0.0, (-1, -1), 0.0, zero)
    return CoherenceReport(float(mu), (int(i), int(j)), float(abs(G[i, j])), zero)


def mutual_coherence(m) -> CoherenceReport:
    """Largest normalised absolute inner product between distinct columns.

    Columns with norm below 1e-12 are skipped and listed in
    ``zero_columns``. ``gram_offdiag_max`` is the unnormalised
    ``|<c_i, c_j>|`` of the worst pair.
    """
    A = _dense(m)
    if A.ndim != 2 or A.shape[1] < 2:
        raise ValueError("coherence needs a 2-D matrix with at least 2 columns")
    return coherence_of_gram(A.T @ A)


# --------------------------------------------------------------------------
# text serialisation
# --------------------------------------------------------------------------

_SYMBOLS = {"01": ("0", "1"), "pm1": ("-", "+")}


def _header(kind: MaskKind, n: int, p: int, q: int, convention: str, rows: int, extra=""):
    return f"# hadcs-matrix kind={kind.value} n={n} p={p} q={q} convention={convention} rows={rows}{extra}\n"


def _encode_rows(entries: np.ndarray, convention: str) -> list[str]:
    lo, hi = _SYMBOLS[convention]
    chars = np.where(np.asarray(entries) == 1, ord(hi), ord(lo)).astype(np.uint8)
    return [row.tobytes().decode() + "\n" for row in chars]


def _parse_header(line: str) -> dict[str, str]:
    if not line.startswith("# hadcs-matrix"):
        raise ValueError("not a hadcs matrix file")
    fields = {}
    for tok in line.split()[2:]:
        key, _, val = tok.partition("=")
        fields[key] = val
    return fields


def _decode_rows(lines: list[str], convention: str, ncols: int) -> np.ndarray:
    lo, hi = _SYMBOLS[convention]
    low_val = 0 if convention == "01" else -1
    out = np.empty((len(lines), ncols), dtype=np.int8)
    for r, line in enumerate(lines):
        line = line.strip()
        if len(line) != ncols or set(line) - {lo, hi}:
            raise ValueError(f"malformed matrix row {r}")
        out[r] = np.where(np.frombuffer(line.encode(), dtype=np.uint8) == ord(hi), 1, low_val)
    return out


def save_mask(mask: MaskMatrix, path) -> None:
    with open(path, "w") as fh:
        fh.write(_header(mask.kind, mask.order, mask.p, mask.q, mask.convention, mask.order))
        fh.writelines(_encode_rows(mask.entries, mask.convention))


def load_mask(path) -> MaskMatrix:
    lines = strip_header(Path(path).read_text().splitlines())
    h = _parse_header(lines[0])
    n = int(h["n"])
    entries = _decode_rows(lines[1 : 1 + int(h["rows"])], h["convention"], n)
    if entries.shape != (n, n):
        raise ValueError("mask file is truncated")
    return MaskMatrix(MaskKind(h["kind"]), _frozen(entries), int(h["p"]), int(h["q"]))


def format_shifts(shifts: Sequence[int]) -> str:
    return ",".join(str(int(s)) for s in shifts)


def parse_shifts(text: str) -> list[int]:
    text = text.strip()
    return [int(t) for t in text.split(",")] if text else []


def save_sensing_matrix(s: SensingMatrix, path) -> None:
    src = s.source
    kind = src.kind if src is not None else MaskKind.TWIN_PRIME
    conv = src.convention if src is not None else ("pm1" if s.entries.min() < 0 else "01")
    p, q = (src.p, src.q) if src is not None else (1, s.cols)
    with open(path, "w") as fh:
        fh.write(_header(kind, s.cols, p, q, conv, s.rows, f" shifts={format_shifts(s.shifts)}"))
        fh.writelines(_encode_rows(s.entries, conv))


def load_sensing_matrix(path) -> SensingMatrix:
    lines = strip_header(Path(path).read_text().splitlines())
    h = _parse_header(lines[0])
    entries = _decode_rows(lines[1 : 1 + int(h["rows"])], h["convention"], int(h["n"]))
    return SensingMatrix(_frozen(entries), tuple(parse_shifts(h["shifts"])), None)
