"""Units, bundled FMO parameter tables, Hamiltonians and initial states.

Energies are kept in cm^-1 everywhere in this module; conversion to angular
frequency (rad/ps, hbar = 1) happens once, at propagation time.

Site indexing of the trimer: monomer A, B, C in blocks of eight, BChl 1..8
inside each block, so ``index(monomer, bchl) = 8 * m + (bchl - 1)`` with
m = 0, 1, 2.  BChl 8 belongs to the monomer of the BChl 1 it couples to
strongly; that choice lives entirely in this map.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

#: speed of light in cm/ps
SPEED_OF_LIGHT_CM_PS = 0.0299792458
#: rad/ps per cm^-1
CM_TO_RAD_PS = 2.0 * math.pi * SPEED_OF_LIGHT_CM_PS
#: Boltzmann constant in cm^-1/K
KB_CM_PER_K = 0.6950348

MONOMERS = ("A", "B", "C")
N_BCHL = 8
N_SITES = 3 * N_BCHL

_DATA_FILES = {
    "OLB": "energies_olb.dat",
    "SAB": "energies_sab.dat",
    "intra": "couplings_intra.dat",
    "inter": "couplings_inter.dat",
}


class ParameterError(ValueError):
    """Invalid parameter table, energy set or state specification."""


def cm_to_angfreq(x):
    """Convert cm^-1 to angular frequency in rad/ps."""
    return np.asarray(x) * CM_TO_RAD_PS if np.ndim(x) else float(x) * CM_TO_RAD_PS


def site_index(monomer: str, bchl: int) -> int:
    m = monomer.upper()
    if m not in MONOMERS:
        raise ParameterError(f"unknown monomer {monomer!r}; expected one of A, B, C")
    if not 1 <= int(bchl) <= N_BCHL:
        raise ParameterError(f"BChl index {bchl} outside 1..{N_BCHL}")
    return N_BCHL * MONOMERS.index(m) + int(bchl) - 1


def site_label(index: int) -> str:
    m, b = divmod(int(index), N_BCHL)
    return f"{MONOMERS[m]}{b + 1}"


SITE_LABELS = tuple(site_label(i) for i in range(N_SITES))


# --------------------------------------------------------------------------
# parameter files
# --------------------------------------------------------------------------

def read_table(path) -> np.ndarray:
    """Read a whitespace-separated numeric table, skipping ``#`` comments.

    A single row is returned as a 1-D array.
    """
    rows = []
    for line in Path(path).read_text().splitlines():
        line = line.split("#", 1)[0].strip()
        if line:
            try:
                rows.append([float(tok) for tok in line.split()])
            except ValueError as exc:
                raise ParameterError(f"{path}: non-numeric entry in {line!r}") from exc
    if not rows:
        raise ParameterError(f"{path}: no numeric rows")
    if len({len(r) for r in rows}) != 1:
        raise ParameterError(f"{path}: ragged rows")
    arr = np.array(rows)
    return arr[0] if arr.shape[0] == 1 else arr


def write_table(path, values, header: str = "") -> None:
    values = np.atleast_2d(np.asarray(values, dtype=float))
    lines = [f"# {h}" for h in header.splitlines()] if header else []
    lines += [" ".join(f"{v:.10g}" for v in row) for row in values]
    Path(path).write_text("\n".join(lines) + "\n")


def _data_path(name: str) -> Path:
    return Path(str(resources.files("fmotrimer") / "data" / name))


def file_checksum(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def bundled_checksums() -> dict[str, str]:
    """SHA-256 of every bundled table, keyed by file name."""
    return {fn: file_checksum(_data_path(fn)) for fn in _DATA_FILES.values()}


def verify_bundled_data() -> None:
    """Compare bundled tables against the shipped ``SHA256SUMS`` manifest."""
    expected = {}
    for line in _data_path("SHA256SUMS").read_text().splitlines():
        if line.strip():
            digest, name = line.split()
            expected[name] = digest
    for name, digest in bundled_checksums().items():
        if expected.get(name) != digest:
            raise ParameterError(f"checksum mismatch for bundled table {name}")


# --------------------------------------------------------------------------
# domain types
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class EnergySet:
    """Eight site energies (cm^-1) of one monomer, lowest entry zero."""

    label: str
    energies: tuple[float, ...]

    def __post_init__(self):
        e = np.asarray(self.energies, dtype=float)
        if e.shape != (N_BCHL,):
            raise ParameterError(f"energy set needs {N_BCHL} values, got {e.size}")
        if not np.all(np.isfinite(e)):
            raise ParameterError("energy set contains non-finite values")
        if e.min() != 0.0:
            raise ParameterError("energy set must be shifted so that its minimum is 0")
        object.__setattr__(self, "energies", tuple(float(x) for x in e))

    @property
    def array(self) -> np.ndarray:
        return np.array(self.energies)


@dataclass(frozen=True)
class IntraCouplingTable:
    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.shape != (N_BCHL, N_BCHL):
            raise ParameterError("intra-monomer coupling table must be 8x8")
        if not np.array_equal(v, v.T):
            raise ParameterError("intra-monomer coupling table must be symmetric")
        if np.any(np.diag(v) != 0.0):
            raise ParameterError("intra-monomer coupling table must have zero diagonal")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)


@dataclass(frozen=True)
class InterCouplingTable:
    """Inter-monomer couplings as printed.

    ``raw[i, j]`` couples BChl i+1 of one monomer to BChl j+1 of the next
    monomer in the cyclic order A -> B -> C -> A, rows on the first monomer.
    The upper triangle (with diagonal) is read directly in that convention;
    the lower triangle, printed as A-C / B-A / C-B couplings with the row on
    the second-named monomer, lands on the same forward block.
    """

    raw: np.ndarray

    def __post_init__(self):
        w = np.array(self.raw, dtype=float)
        if w.shape != (N_BCHL, N_BCHL):
            raise ParameterError("inter-monomer coupling table must be 8x8")
        w.setflags(write=False)
        object.__setattr__(self, "raw", w)

    @property
    def forward_block(self) -> np.ndarray:
        return self.raw


def load_energy_set(label) -> EnergySet:
    """Bundled ``"OLB"``/``"SAB"`` energies, a table file path, or a custom 8-vector."""
    if isinstance(label, str):
        key = label.strip().upper()
        if key in ("OLB", "SAB"):
            return EnergySet(key, tuple(read_table(_data_path(_DATA_FILES[key]))))
        path = Path(label)
        if path.is_file():
            return EnergySet("custom", tuple(np.ravel(read_table(path))))
        raise ParameterError(f"unknown energy set {label!r}")
    values = np.ravel(np.asarray(label, dtype=float))
    if values.size != N_BCHL:
        raise ParameterError(f"custom energy set needs {N_BCHL} values, got {values.size}")
    return EnergySet("custom", tuple(values))


def load_intra_couplings(path=None) -> IntraCouplingTable:
    return IntraCouplingTable(read_table(path or _data_path(_DATA_FILES["intra"])))


def load_inter_couplings(path=None) -> InterCouplingTable:
    return InterCouplingTable(read_table(path or _data_path(_DATA_FILES["inter"])))


# --------------------------------------------------------------------------
# Hamiltonians
# --------------------------------------------------------------------------

def build_monomer_hamiltonian(e: EnergySet, v: IntraCouplingTable) -> np.ndarray:
    return np.diag(e.array) + np.asarray(v.values)


@dataclass(frozen=True)
class TrimerHamiltonian:
    """24x24 one-exciton Hamiltonian in cm^-1 (see module doc for indexing)."""

    matrix: np.ndarray
    energy_label: str = "custom"

    def __post_init__(self):
        h = np.array(self.matrix, dtype=float)
        if h.ndim != 2 or h.shape[0] != h.shape[1]:
            raise ParameterError("Hamiltonian must be a square matrix")
        if not np.allclose(h, h.T, rtol=0, atol=1e-12):
            raise ParameterError("Hamiltonian must be real symmetric")
        h.setflags(write=False)
        object.__setattr__(self, "matrix", h)

    @property
    def size(self) -> int:
        return self.matrix.shape[0]

    def index(self, monomer: str, bchl: int) -> int:
        return site_index(monomer, bchl)

    def element(self, a: str, b: str) -> float:
        """Matrix element between two site labels such as ``"A1"``, ``"C5"``."""
        return float(self.matrix[parse_site(a), parse_site(b)])

    def block(self, m1: str, m2: str) -> np.ndarray:
        i, j = MONOMERS.index(m1), MONOMERS.index(m2)
        return self.matrix[8 * i:8 * i + 8, 8 * j:8 * j + 8]

    def without_inter_couplings(self) -> "TrimerHamiltonian":
        h = np.zeros_like(self.matrix)
        for m in range(3):
            s = slice(8 * m, 8 * m + 8)
            h[s, s] = self.matrix[s, s]
        return TrimerHamiltonian(h, self.energy_label)


def build_trimer_hamiltonian(
    e: EnergySet,
    v: IntraCouplingTable | None = None,
    w: InterCouplingTable | None = None,
) -> TrimerHamiltonian:
    """Assemble the C3-symmetric trimer Hamiltonian.

    Diagonal blocks are the monomer Hamiltonian.  The forward blocks
    (A,B), (B,C), (C,A) all equal ``w.forward_block``; the backward blocks are
    their transposes, so the result is symmetric and commutes with the cyclic
    monomer permutation by construction.
    """
    v = v if v is not None else load_intra_couplings()
    w = w if w is not None else load_inter_couplings()
    mono = build_monomer_hamiltonian(e, v)
    fwd = np.asarray(w.forward_block)
    h = np.zeros((N_SITES, N_SITES))
    for m in range(3):
        s = slice(8 * m, 8 * m + 8)
        t = slice(8 * ((m + 1) % 3), 8 * ((m + 1) % 3) + 8)
        h[s, s] = mono
        h[s, t] = fwd
        h[t, s] = fwd.T
    return TrimerHamiltonian(h, e.label)


def c3_permutation(n_sites: int = N_SITES) -> np.ndarray:
    """Permutation matrix P with P|A_k> = |B_k>, P|B_k> = |C_k>, P|C_k> = |A_k>."""
    if n_sites % 3:
        raise ParameterError("C3 permutation needs a multiple of three sites")
    blk = n_sites // 3
    p = np.zeros((n_sites, n_sites))
    for i in range(n_sites):
        p[(i + blk) % n_sites, i] = 1.0
    return p


def exciton_spectrum(h) -> np.ndarray:
    """Ascending eigenvalues (cm^-1) of a symmetric Hamiltonian."""
    mat = h.matrix if isinstance(h, TrimerHamiltonian) else np.asarray(h, dtype=float)
    return np.linalg.eigvalsh(mat)


def effective_energy_spread(e: EnergySet, exclude: Sequence[int] = (7,)) -> float:
    """Range of site energies ignoring the listed BChls (1-based)."""
    keep = [x for i, x in enumerate(e.energies, start=1) if i not in exclude]
    return max(keep) - min(keep)


# --------------------------------------------------------------------------
# initial states
# --------------------------------------------------------------------------

def parse_site(label: str) -> int:
    label = label.strip()
    if len(label) < 2:
        raise ParameterError(f"bad site label {label!r}")
    try:
        bchl = int(label[1:])
    except ValueError as exc:
        raise ParameterError(f"bad site label {label!r}") from exc
    return site_index(label[0], bchl)


@dataclass(frozen=True)
class StateSpec:
    """Pure initial state as a list of (monomer, bchl, amplitude)."""

    amplitudes: tuple[tuple[str, int, complex], ...]
    normalize: bool = True

    def __post_init__(self):
        entries = tuple((str(m).upper(), int(b), complex(a)) for m, b, a in self.amplitudes)
        for m, b, _ in entries:
            site_index(m, b)
        object.__setattr__(self, "amplitudes", entries)

    @classmethod
    def localized(cls, site: str) -> "StateSpec":
        idx = parse_site(site)
        lab = site_label(idx)
        return cls(((lab[0], int(lab[1:]), 1.0),))

    @classmethod
    def parse(cls, text: str) -> "StateSpec":
        """Parse ``"A1:0.707,B1:0.707@90"`` (amplitude, optional phase in degrees)."""
        entries = []
        for item in filter(None, (s.strip() for s in text.split(","))):
            site, _, rest = item.partition(":")
            amp_s, _, phase_s = (rest or "1").partition("@")
            try:
                amp = float(amp_s)
                phase = math.radians(float(phase_s)) if phase_s else 0.0
            except ValueError as exc:
                raise ParameterError(f"bad init entry {item!r}") from exc
            lab = site_label(parse_site(site))
            entries.append((lab[0], int(lab[1:]), amp * complex(math.cos(phase), math.sin(phase))))
        if not entries:
            raise ParameterError("empty init spec")
        return cls(tuple(entries))

    def format(self) -> str:
        parts = []
        for m, b, a in self.amplitudes:
            parts.append(f"{m}{b}:{abs(a):.12g}@{math.degrees(math.atan2(a.imag, a.real)):.12g}")
        return ",".join(parts)

    def vector(self, n_sites: int = N_SITES) -> np.ndarray:
        psi = np.zeros(n_sites, dtype=complex)
        for m, b, a in self.amplitudes:
            psi[site_index(m, b)] += a
        norm = np.linalg.norm(psi)
        if norm == 0.0:
            raise ParameterError("initial state has no nonzero amplitude")
        return psi / norm if self.normalize else psi

    def permuted(self, steps: int = 1) -> "StateSpec":
        """Apply the C3 rotation A -> B -> C -> A ``steps`` times."""
        out = []
        for m, b, a in self.amplitudes:
            out.append((MONOMERS[(MONOMERS.index(m) + steps) % 3], b, a))
        return StateSpec(tuple(out), self.normalize)

    def with_phase(self, k: int, phase: float) -> "StateSpec":
        """Multiply amplitude ``k`` by ``exp(i phase)``."""
        amps = list(self.amplitudes)
        m, b, a = amps[k]
        amps[k] = (m, b, a * complex(math.cos(phase), math.sin(phase)))
        return StateSpec(tuple(amps), self.normalize)

    def nonzero_count(self) -> int:
        return sum(1 for *_, a in self.amplitudes if a != 0)


def init_state(spec: StateSpec | Iterable, n_sites: int = N_SITES) -> np.ndarray:
    """Pure-state density matrix |psi><psi| for a state specification."""
    if not isinstance(spec, StateSpec):
        spec = StateSpec(tuple(spec))
    psi = spec.vector(n_sites)
    return np.outer(psi, psi.conj())
