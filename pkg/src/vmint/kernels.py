"""Step-law objects for lattice random walks and voter dynamics.

A kernel is a finitely supported probability mass function p on the integers
with p(0) = 0 and a support that generates the whole lattice.  Everything
downstream (walk simulation, exterior-rate bookkeeping, exact solvers) reads
the kernel through the dense tail tables built here, so all tail and
double-tail sums are exact finite sums, not asymptotic stand-ins.
"""

from __future__ import annotations

import math
import re
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

__all__ = [
    "Kernel",
    "KernelPart",
    "KernelSpec",
    "build_kernel",
    "moment",
    "parse_kernel_spec",
    "sample_step",
    "save_table",
    "split_at",
    "symmetrize",
    "tail_mass",
]

MASS_TOL = 1e-12
# geometric tails below this are beyond float64 resolution, so truncation
# there leaves moments and tails exact to working precision
GEOMETRIC_FLOOR = 1e-18
GEOMETRIC_SUPPORT_CAP = 10**6


@dataclass(frozen=True)
class KernelSpec:
    """Recipe for a kernel: family name, family parameters, centering flag."""

    family: str
    params: tuple = ()
    center: bool = False


class Kernel:
    """Immutable step law with cached cdf and tail tables.

    Attributes
    ----------
    sites : int64 array, sorted, the support
    masses : float64 array aligned with sites, sums to 1
    family : human-readable tag of the generating family
    cdf : cumulative masses, last entry forced to exactly 1.0
    tail_pos[m] : sum of p(x) over x >= m, for m in 0..radius+1
    tail_neg[m] : sum of p(x) over x <= -m, same indexing
    dtail_pos[m], dtail_neg[m] : double tails, sum of tail over j >= m,
        for m in 0..radius+2
    """

    __slots__ = (
        "sites",
        "masses",
        "family",
        "radius",
        "cdf",
        "tail_pos",
        "tail_neg",
        "dtail_pos",
        "dtail_neg",
        "alias_cut",
        "alias_idx",
    )

    def __init__(self, sites: np.ndarray, masses: np.ndarray, family: str):
        sites = np.asarray(sites, dtype=np.int64)
        masses = np.asarray(masses, dtype=np.float64)
        if sites.ndim != 1 or sites.shape != masses.shape:
            raise ValueError("sites and masses must be aligned 1-d arrays")
        if sites.size == 0:
            raise ValueError("kernel support is empty")
        if np.any(masses < 0):
            raise ValueError("kernel has negative mass")
        order = np.argsort(sites)
        sites = sites[order]
        masses = masses[order]
        if np.any(np.diff(sites) == 0):
            raise ValueError("duplicate sites in kernel support")
        keep = masses > 0
        if np.any(sites[keep] == 0):
            raise ValueError("kernel puts mass at the origin; drop it first")
        sites = sites[keep]
        masses = masses[keep]
        total = masses.sum()
        if total <= 0:
            raise ValueError("kernel has no positive mass")
        if abs(total - 1.0) > MASS_TOL:
            # normalize only when actually needed so that saved tables
            # round-trip bit-exactly
            masses = masses / total
        if abs(masses.sum() - 1.0) > MASS_TOL:
            raise ValueError("kernel mass does not normalize to 1")
        g = 0
        for s in np.abs(sites):
            g = math.gcd(g, int(s))
        if g != 1:
            raise ValueError(
                f"kernel support generates {g}*Z, not Z; dynamics would be reducible"
            )
        self.sites = sites
        self.masses = masses
        self.family = family
        self.radius = int(np.max(np.abs(sites)))
        cdf = np.cumsum(masses)
        cdf[-1] = 1.0
        self.cdf = cdf
        self.tail_pos, self.dtail_pos = _tail_tables(sites, masses, self.radius)
        self.tail_neg, self.dtail_neg = _tail_tables(-sites, masses, self.radius)
        self.alias_cut, self.alias_idx = _alias_tables(masses)

    def mean(self) -> float:
        return float(np.dot(self.sites, self.masses))

    def mass_at(self, x: int) -> float:
        i = np.searchsorted(self.sites, x)
        if i < self.sites.size and self.sites[i] == x:
            return float(self.masses[i])
        return 0.0

    def __repr__(self) -> str:  # pragma: no cover - debugging aid
        return f"Kernel({self.family}, radius={self.radius}, support={self.sites.size})"


def _tail_tables(sites: np.ndarray, masses: np.ndarray, radius: int):
    """Dense suffix sums: tail[m] = sum of mass at sites >= m, m in 0..radius+1."""
    dense = np.zeros(radius + 2)
    pos = sites >= 0
    dense[sites[pos]] = masses[pos]
    tail = np.zeros(radius + 2)
    tail[:-1] = np.cumsum(dense[::-1])[::-1][:-1]
    # m = 0 and m = 1 coincide because p(0) = 0
    dtail = np.zeros(radius + 3)
    dtail[:-1] = np.cumsum(tail[::-1])[::-1]
    return tail, dtail


def _alias_tables(masses: np.ndarray):
    """Walker alias tables for O(1) step sampling (two reads per draw)."""
    n = masses.size
    cut = np.ones(n)
    idx = np.arange(n, dtype=np.int64)
    scaled = masses * n
    small = [i for i in range(n) if scaled[i] < 1.0]
    large = [i for i in range(n) if scaled[i] >= 1.0]
    while small and large:
        s = small.pop()
        l = large.pop()
        cut[s] = scaled[s]
        idx[s] = l
        scaled[l] -= 1.0 - scaled[s]
        (small if scaled[l] < 1.0 else large).append(l)
    return cut, idx


@dataclass
class KernelPart:
    """One side of a pointwise kernel split; total_mass is the rate of the
    compound-Poisson jump process built from it (per unit jump rate)."""

    sites: np.ndarray
    masses: np.ndarray
    total_mass: float
    _cdf: np.ndarray | None = field(default=None, repr=False)

    def sample(self, rng: np.random.Generator, size=None):
        """Draw jumps from the normalized part."""
        if self.total_mass <= 0:
            raise ValueError("cannot sample from an empty kernel part")
        if self._cdf is None:
            c = np.cumsum(self.masses) / self.total_mass
            c[-1] = 1.0
            self._cdf = c
        idx = np.searchsorted(self._cdf, rng.random(size), side="right")
        out = self.sites[idx]
        return int(out) if size is None else out

    def moment(self, order: int) -> float:
        return float(np.sum(np.abs(self.sites, dtype=np.float64) ** order * self.masses))


def build_kernel(spec: KernelSpec) -> Kernel:
    """Construct and validate a kernel from its spec."""
    fam = spec.family
    if fam == "nearest_neighbor":
        k = Kernel(np.array([-1, 1]), np.array([0.5, 0.5]), "nearest_neighbor")
    elif fam == "uniform_range":
        (R,) = spec.params
        R = int(R)
        if R < 1:
            raise ValueError("uniform_range needs R >= 1")
        sites = np.concatenate([np.arange(-R, 0), np.arange(1, R + 1)])
        k = Kernel(sites, np.full(2 * R, 1.0 / (2 * R)), f"uniform_range({R})")
    elif fam == "geometric":
        (q,) = spec.params
        q = float(q)
        if not 0.0 < q < 1.0:
            raise ValueError("geometric needs q in (0, 1)")
        m_star = min(
            GEOMETRIC_SUPPORT_CAP,
            max(1, math.ceil(math.log(GEOMETRIC_FLOOR) / math.log(q))),
        )
        x = np.arange(1, m_star + 1, dtype=np.int64)
        w = q**x.astype(np.float64)
        sites = np.concatenate([-x[::-1], x])
        masses = np.concatenate([w[::-1], w])
        k = Kernel(sites, masses, f"geometric({q})")
    elif fam == "power_law":
        alpha, cutoff = spec.params
        alpha = float(alpha)
        cutoff = int(cutoff)
        if alpha <= 0:
            raise ValueError("power_law needs alpha > 0")
        if cutoff < 1:
            raise ValueError("power_law needs cutoff >= 1")
        x = np.arange(1, cutoff + 1, dtype=np.int64)
        w = x.astype(np.float64) ** -(1.0 + alpha)
        sites = np.concatenate([-x[::-1], x])
        masses = np.concatenate([w[::-1], w])
        k = Kernel(sites, masses, f"power_law({alpha}, {cutoff})")
    elif fam == "table":
        (path,) = spec.params
        sites, masses = _load_table(Path(path))
        k = Kernel(sites, masses, f"table({Path(path).name})")
    else:
        raise ValueError(f"unknown kernel family: {fam!r}")

    if spec.center and abs(k.mean()) > 1e-9:
        raise ValueError(
            f"kernel mean is {k.mean():.3g}, not zero; no lattice-preserving shift "
            "exists, symmetrize() it instead"
        )
    return k


def _load_table(path: Path):
    sites, masses = [], []
    for lineno, raw in enumerate(path.read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 2:
            raise ValueError(f"{path}:{lineno}: expected 'site mass', got {raw!r}")
        try:
            x = int(parts[0])
            m = float(parts[1])
        except ValueError as e:
            raise ValueError(f"{path}:{lineno}: {e}") from None
        sites.append(x)
        masses.append(m)
    if not sites:
        raise ValueError(f"{path}: empty kernel table")
    sites = np.array(sites, dtype=np.int64)
    masses = np.array(masses, dtype=np.float64)
    at_zero = sites == 0
    if np.any(at_zero) and masses[at_zero].sum() > 0:
        warnings.warn(
            f"{path}: dropping mass {masses[at_zero].sum():.3g} at the origin "
            "and renormalizing",
            stacklevel=2,
        )
        masses = masses[~at_zero]
        sites = sites[~at_zero]
    return sites, masses


def save_table(kernel: Kernel, path) -> None:
    """Serialize a kernel as a two-column text table (round-trips exactly)."""
    lines = [f"# {kernel.family}"]
    for x, m in zip(kernel.sites.tolist(), kernel.masses.tolist()):
        lines.append(f"{x} {m!r}")
    Path(path).write_text("\n".join(lines) + "\n")


def sample_step(kernel: Kernel, rng: np.random.Generator, size=None):
    """Inverse-transform draw(s) from the kernel. Scalar int when size is None."""
    idx = np.searchsorted(kernel.cdf, rng.random(size), side="right")
    out = kernel.sites[idx]
    return int(out) if size is None else out


def moment(kernel: Kernel, order: int) -> float:
    """Absolute moment: sum over x of |x|^order * p(x), an exact finite sum."""
    return float(np.sum(np.abs(kernel.sites, dtype=np.float64) ** order * kernel.masses))


def tail_mass(kernel: Kernel, m: int, side: str = "two") -> float:
    """Exact tail sums.

    side="pos": sum of p(x) over x >= m; side="neg": over x <= -m;
    side="two": over |x| >= m.  Any integer m is accepted; out-of-support
    tails are 0 (or the full one-sided mass for m below the support).
    """
    if side == "two":
        if m <= 0:
            return 1.0
        return _tail_lookup(kernel.tail_pos, m) + _tail_lookup(kernel.tail_neg, m)
    if side == "pos":
        if m <= -kernel.radius:
            return float(kernel.masses.sum())
        if m <= 0:
            # everything except the strictly-below-m left tail
            return 1.0 - _tail_lookup(kernel.tail_neg, 1 - m)
        return _tail_lookup(kernel.tail_pos, m)
    if side == "neg":
        if m <= -kernel.radius:
            return float(kernel.masses.sum())
        if m <= 0:
            return 1.0 - _tail_lookup(kernel.tail_pos, 1 - m)
        return _tail_lookup(kernel.tail_neg, m)
    raise ValueError(f"side must be 'two', 'pos' or 'neg', got {side!r}")


def _tail_lookup(tail: np.ndarray, m: int) -> float:
    if m >= tail.size:
        return 0.0
    return float(tail[m])


def symmetrize(kernel: Kernel) -> Kernel:
    """Return the symmetric step law q(x) = (p(x) + p(-x)) / 2."""
    dense: dict[int, float] = {}
    for x, m in zip(kernel.sites.tolist(), kernel.masses.tolist()):
        dense[x] = dense.get(x, 0.0) + 0.5 * m
        dense[-x] = dense.get(-x, 0.0) + 0.5 * m
    sites = np.array(sorted(dense), dtype=np.int64)
    masses = np.array([dense[x] for x in sites.tolist()])
    return Kernel(sites, masses, f"symmetrized({kernel.family})")


def split_at(kernel: Kernel, threshold: int) -> tuple[KernelPart, KernelPart]:
    """Pointwise split into the short part (|x| <= threshold) and the far part
    (|x| > threshold).  Masses are copied, so the parts partition the kernel
    exactly; each part keeps its unnormalized total as its jump rate."""
    if threshold < 0:
        raise ValueError("threshold must be >= 0")
    near = np.abs(kernel.sites) <= threshold
    low = KernelPart(
        kernel.sites[near], kernel.masses[near], float(kernel.masses[near].sum())
    )
    high = KernelPart(
        kernel.sites[~near], kernel.masses[~near], float(kernel.masses[~near].sum())
    )
    return low, high


_SPEC_RE = re.compile(r"^\s*([a-z_]+)\s*(?:\(\s*(.*?)\s*\))?\s*$")


def parse_kernel_spec(text: str, center: bool = False) -> KernelSpec:
    """Parse 'nearest_neighbor', 'uniform_range(2)', 'power_law(1.2, 100000)',
    'geometric(0.5)' or 'table(path)' into a KernelSpec."""
    m = _SPEC_RE.match(text)
    if not m:
        raise ValueError(f"cannot parse kernel spec {text!r}")
    fam, argstr = m.group(1), m.group(2)
    if fam == "nearest_neighbor":
        if argstr:
            raise ValueError("nearest_neighbor takes no parameters")
        return KernelSpec("nearest_neighbor", (), center)
    if argstr is None:
        raise ValueError(f"kernel family {fam!r} needs parameters")
    args = [a.strip() for a in argstr.split(",") if a.strip()]
    if fam == "uniform_range":
        return KernelSpec(fam, (int(args[0]),), center)
    if fam == "geometric":
        return KernelSpec(fam, (float(args[0]),), center)
    if fam == "power_law":
        return KernelSpec(fam, (float(args[0]), int(float(args[1]))), center)
    if fam == "table":
        return KernelSpec(fam, (argstr,), center)
    raise ValueError(f"unknown kernel family: {fam!r}")
