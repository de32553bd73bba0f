"""Explicit i.i.d. server attacks and the exact conditional entropy they induce.

An attack is the server's source amplitudes (alpha, beta, gamma) over the
paths {Alice, Bob, vacuum} together with an isometry U from the returning
path to (message register) x (ancilla).  U is written as nine ancilla
vectors: ``e_m`` is the ancilla attached to message m when the photon came
back along Alice's path, ``f_m`` for Bob's path and ``g_m`` for vacuum.

The accepted-round state of Alice, Bob and the server is a mixture of
unnormalized product pure states.  Its entropies follow from Gram matrices of
those states, so nothing larger than 12 x 12 is ever diagonalized.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Union

import numpy as np

from msqkd.channel import Observables, normalization
from msqkd.entropy import EntropyTerm, pairwise_entropy_bound
from msqkd.errors import DegenerateSampleError, InvalidParameterError, NoAcceptedRoundsError
from msqkd.keyrate import (
    InnerProductBounds,
    Variant,
    bound_s0t0,
    bound_s1t1,
    entropy_lower_bound_3term,
    entropy_lower_bound_6term,
)

VECTOR_NAMES = ("e0", "e1", "ev", "f0", "f1", "fv", "g0", "g1", "gv")
_TOL = 1e-10
_EIG_ZERO = 1e-14
_MAX_RETRIES = 16


@dataclass
class AttackSpec:
    alpha: float
    beta: float
    gamma: float
    vectors: dict[str, np.ndarray]

    def __post_init__(self):
        missing = set(VECTOR_NAMES) - set(self.vectors)
        if missing:
            raise InvalidParameterError(f"missing attack vectors: {sorted(missing)}")
        self.vectors = {k: np.asarray(self.vectors[k], dtype=complex).ravel() for k in VECTOR_NAMES}
        dims = {v.shape[0] for v in self.vectors.values()}
        if len(dims) != 1:
            raise InvalidParameterError(f"attack vectors have mixed dimensions {sorted(dims)}")

    @property
    def d(self) -> int:
        return self.vectors["e0"].shape[0]

    def column(self, which: str) -> np.ndarray:
        """Image of one input path under U, laid out as (msg 0, msg 1, msg v) blocks."""
        return np.concatenate([self.vectors[which + m] for m in ("0", "1", "v")])

    def to_json(self) -> dict:
        doc = {"alpha": self.alpha, "beta": self.beta, "gamma": self.gamma, "d": self.d}
        for name in VECTOR_NAMES:
            doc[name] = [[float(z.real), float(z.imag)] for z in self.vectors[name]]
        return doc

    @classmethod
    def from_json(cls, doc: dict) -> "AttackSpec":
        try:
            vectors = {
                name: np.array([complex(re, im) for re, im in doc[name]]) for name in VECTOR_NAMES
            }
            spec = cls(float(doc["alpha"]), float(doc["beta"]), float(doc["gamma"]), vectors)
        except (KeyError, TypeError, ValueError) as exc:
            raise InvalidParameterError(f"malformed attack document: {exc}") from exc
        if "d" in doc and int(doc["d"]) != spec.d:
            raise InvalidParameterError(f"declared d={doc['d']} but vectors have length {spec.d}")
        return spec

    def save(self, path: Union[str, Path]) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=2) + "\n")

    @classmethod
    def load(cls, path: Union[str, Path]) -> "AttackSpec":
        try:
            doc = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise InvalidParameterError(f"{path}: not valid JSON ({exc})") from exc
        return cls.from_json(doc)


@dataclass(frozen=True)
class Violation:
    constraint: str
    residual: float

    def __str__(self):
        return f"{self.constraint}: residual {self.residual:.3g}"


def validate_attack(spec: AttackSpec) -> list[Violation]:
    out = []
    amp = spec.alpha**2 + spec.beta**2 + spec.gamma**2
    if abs(amp - 1) > _TOL:
        out.append(Violation("amplitude normalization alpha^2+beta^2+gamma^2=1", abs(amp - 1)))
    if min(spec.alpha, spec.beta, spec.gamma) < 0:
        out.append(Violation("amplitudes must be non-negative reals", -min(spec.alpha, spec.beta, spec.gamma)))
    cols = {c: spec.column(c) for c in "efg"}
    for c, col in cols.items():
        res = abs(np.vdot(col, col).real - 1)
        if res > _TOL:
            out.append(Violation(f"{c}-column normalization", res))
    for a, b in (("e", "f"), ("e", "g"), ("f", "g")):
        res = abs(np.vdot(cols[a], cols[b]))
        if res > _TOL:
            out.append(Violation(f"{a}-{b} column orthogonality", res))
    return out


def _from_columns(amps, cols: np.ndarray, d: int) -> AttackSpec:
    vectors = {}
    for c, col in zip("efg", cols):
        for k, m in enumerate(("0", "1", "v")):
            vectors[c + m] = col[k * d:(k + 1) * d].copy()
    return AttackSpec(float(amps[0]), float(amps[1]), float(amps[2]), vectors)


def _honest_columns(d: int, theta: float = 0.0) -> np.ndarray:
    cols = np.zeros((3, 3 * d), dtype=complex)
    h = 1 / math.sqrt(2)
    cols[0, 0], cols[0, d] = h, h
    cols[1, 0], cols[1, d] = h * np.exp(1j * theta), -h * np.exp(1j * theta)
    cols[2, 2 * d] = 1.0
    return cols


def honest_attack(p_l: float = 0.0) -> AttackSpec:
    """The calibrated lossless server: both-reflect always yields message "0"."""
    if p_l != 0:
        raise InvalidParameterError("honest_attack only models the lossless server (p_l = 0)")
    h = 1 / math.sqrt(2)
    return _from_columns((h, h, 0.0), _honest_columns(1), 1)


def phase_noisy_attack(phi: float, d: int = 1) -> AttackSpec:
    """Honest server whose Bob arm carries a relative phase theta, sin^2(theta/2) = phi.

    Reproduces the lossless symmetric channel with phase error ``phi``.
    """
    if not 0 <= phi <= 1:
        raise InvalidParameterError(f"phi must lie in [0, 1], got {phi}")
    theta = 2 * math.asin(math.sqrt(phi))
    h = 1 / math.sqrt(2)
    return _from_columns((h, h, 0.0), _honest_columns(d, theta), d)


def gram_schmidt(vecs: np.ndarray, tol: float = 1e-8) -> np.ndarray:
    """Modified Gram-Schmidt on the rows of ``vecs`` (complex inner product)."""
    out = np.array(vecs, dtype=complex)
    for j in range(out.shape[0]):
        for i in range(j):
            out[j] -= np.vdot(out[i], out[j]) * out[i]
        norm = np.linalg.norm(out[j])
        if norm < tol:
            raise DegenerateSampleError(f"row {j} is numerically dependent (norm {norm:.2e})")
        out[j] /= norm
    return out


def random_attack(d: int, seed: int, bias: Optional[float] = None) -> AttackSpec:
    """Seeded random isometry and source amplitudes.

    With ``bias`` in [0, 1] the random columns and amplitudes are mixed with
    the honest ones (embedded in dimension ``d``) before re-orthonormalizing;
    ``bias=1`` returns the honest attack exactly.
    """
    if d < 1:
        raise InvalidParameterError(f"ancilla dimension must be >= 1, got {d}")
    if bias is not None and not 0 <= bias <= 1:
        raise InvalidParameterError(f"bias must lie in [0, 1], got {bias}")
    rng = np.random.default_rng(seed)
    honest_amps = np.array([1 / math.sqrt(2), 1 / math.sqrt(2), 0.0])
    for _ in range(_MAX_RETRIES):
        raw = rng.normal(size=(3, 3 * d)) + 1j * rng.normal(size=(3, 3 * d))
        amps = np.abs(rng.normal(size=3))
        if bias is not None:
            raw = (1 - bias) * raw / np.linalg.norm(raw, axis=1, keepdims=True) + bias * _honest_columns(d)
            amps = (1 - bias) * amps / np.linalg.norm(amps) + bias * honest_amps
        if np.linalg.norm(amps) < 1e-8:
            continue
        try:
            cols = gram_schmidt(raw)
        except DegenerateSampleError:
            continue
        return _from_columns(amps / np.linalg.norm(amps), cols, d)
    raise DegenerateSampleError(f"could not draw a non-degenerate attack after {_MAX_RETRIES} tries")


@dataclass
class DerivedVectors:
    """The composite ancilla vectors r/s/t (and bare g) for each message."""

    vectors: dict[str, np.ndarray]

    def norm(self, name: str) -> float:
        v = self.vectors[name]
        return float(np.vdot(v, v).real)

    def overlap(self, a: str, b: str) -> complex:
        """<a|b>, antilinear in the first argument."""
        return complex(np.vdot(self.vectors[a], self.vectors[b]))


def derived_vectors(spec: AttackSpec) -> DerivedVectors:
    a, b, c = spec.alpha, spec.beta, spec.gamma
    v = spec.vectors
    out = {}
    for m in ("0", "1"):
        out["r" + m] = a * v["e" + m] + b * v["f" + m] + c * v["g" + m]
        out["s" + m] = b * v["f" + m] + c * v["g" + m]
        out["t" + m] = a * v["e" + m] + c * v["g" + m]
        out["g" + m] = v["g" + m].copy()
    return DerivedVectors(out)


def observables_from_attack(spec: AttackSpec) -> Observables:
    dv = derived_vectors(spec)
    fields = {}
    for letter, pair in (("r", "rr"), ("s", "mr"), ("t", "rm"), ("g", "mm")):
        for m in ("0", "1"):
            fields[f"p{m}_{pair}"] = min(max(dv.norm(letter + m), 0.0), 1.0)
    return Observables(
        **fields, alpha2=spec.alpha**2, beta2=spec.beta**2, gamma2=spec.gamma**2
    )


# A conditional branch state |m1, x, tail> where tail is the untouched
# sub-round-2 placeholder (None) or a second (message, vector) pair.
_Branch = tuple[int, str, Optional[tuple[int, str]]]

_A0_BRANCHES: list[_Branch] = [
    (1, "t1", None), (0, "t0", (0, "s0")), (0, "t0", (1, "s1")),
    (1, "r1", None), (0, "r0", (0, "g0")), (0, "r0", (1, "g1")),
]
_A1_BRANCHES: list[_Branch] = [
    (1, "s1", None), (0, "s0", (0, "t0")), (0, "s0", (1, "t1")),
    (1, "g1", None), (0, "g0", (0, "r0")), (0, "g0", (1, "r1")),
]
PAIR_LABELS = ("t1|s1", "t0s0|s0t0", "t0s1|s0t1", "r1|g1", "r0g0|g0r0", "r0g1|g0r1")


def _branch_overlap(dv: DerivedVectors, x: _Branch, y: _Branch) -> complex:
    if x[0] != y[0]:
        return 0.0
    first = dv.overlap(x[1], y[1])
    if x[2] is None or y[2] is None:
        # the placeholder is normalized and orthogonal to every second-sub-round branch
        return first if x[2] is None and y[2] is None else 0.0
    if x[2][0] != y[2][0]:
        return 0.0
    return first * dv.overlap(x[2][1], y[2][1])


def _gram(dv: DerivedVectors, branches: list[_Branch]) -> np.ndarray:
    n = len(branches)
    G = np.empty((n, n), dtype=complex)
    for i in range(n):
        for j in range(n):
            G[i, j] = _branch_overlap(dv, branches[i], branches[j])
    return G


def mixture_eigenvalues(gram: np.ndarray) -> np.ndarray:
    """Spectrum of sum_i |v_i><v_i| from the Gram matrix G_ij = <v_i|v_j>."""
    eig = np.linalg.eigvalsh((gram + gram.conj().T) / 2)
    eig[eig < _EIG_ZERO] = 0.0
    return eig


def _entropy_bits(eigs: np.ndarray) -> float:
    p = eigs[eigs > 0]
    return float(-(p * np.log2(p)).sum())


@dataclass
class ExactState:
    """Exact accepted-round state data for one attack."""

    N: float
    h_ae: float
    eig_ae: np.ndarray
    eig_e: np.ndarray
    pair_norms: list[tuple[float, float]]
    pair_overlaps: list[float]


def exact_state(spec: AttackSpec) -> ExactState:
    dv = derived_vectors(spec)
    G0 = _gram(dv, _A0_BRANCHES)
    G1 = _gram(dv, _A1_BRANCHES)
    G_all = _gram(dv, _A0_BRANCHES + _A1_BRANCHES)
    N = float(np.trace(G_all).real)
    if N <= 0:
        raise NoAcceptedRoundsError("attack never produces an accepted round (N = 0)")
    eig_ae = np.concatenate([mixture_eigenvalues(G0), mixture_eigenvalues(G1)]) / N
    eig_e = mixture_eigenvalues(G_all) / N
    h = _entropy_bits(eig_ae) - _entropy_bits(eig_e)
    norms = [(G0[i, i].real, G1[i, i].real) for i in range(6)]
    overlaps = [abs(_branch_overlap(dv, x, y)) for x, y in zip(_A0_BRANCHES, _A1_BRANCHES)]
    return ExactState(N, h, eig_ae, eig_e, norms, overlaps)


def exact_conditional_entropy(spec: AttackSpec) -> float:
    """H(A|E) in bits of the accepted-round state, Eve holding both message registers."""
    return exact_state(spec).h_ae


def exact_inner_products(spec: AttackSpec) -> InnerProductBounds:
    dv = derived_vectors(spec)
    return InnerProductBounds(
        s1t1=abs(dv.overlap("s1", "t1")),
        s0t0=abs(dv.overlap("s0", "t0")),
        r0g0=abs(dv.overlap("r0", "g0")),
        r1g1=abs(dv.overlap("r1", "g1")),
    )


@dataclass
class SoundnessReport:
    exact: float
    six_term_exact: float
    three_term_exact: float
    three_term_estimated: float
    six_term_sound: bool
    three_term_exact_sound: bool
    three_term_estimated_sound: bool
    three_le_six: bool
    s1t1_bound_sound: bool
    s0t0_bound_sound: bool
    pipeline_consistent: bool

    @property
    def sound(self) -> bool:
        return self.six_term_sound and self.three_term_exact_sound and self.three_le_six

    def as_dict(self) -> dict:
        d = dict(self.__dict__)
        d["sound"] = self.sound
        return d


def soundness_report(spec: AttackSpec, variant: Variant = "printed", tol: float = 1e-9) -> SoundnessReport:
    """Compare the pairwise bounds against the exact H(A|E) for one attack.

    The six-term value with exact overlaps is computed twice, directly from
    the branch states and through the key-rate pipeline; the direct one is
    reported and ``pipeline_consistent`` records whether they agree.
    """
    state = exact_state(spec)
    direct = [EntropyTerm(nE, nF, ov) for (nE, nF), ov in zip(state.pair_norms, state.pair_overlaps)]
    six = pairwise_entropy_bound(direct, state.N)
    three = pairwise_entropy_bound(direct[:3], state.N)
    obs = observables_from_attack(spec)
    exact_ipb = exact_inner_products(spec)
    est = InnerProductBounds(s1t1=bound_s1t1(obs), s0t0=bound_s0t0(obs, variant))
    three_est, _ = entropy_lower_bound_3term(obs, est)
    # pipeline factorization must reproduce the direct branch evaluation
    six_pipe, _ = entropy_lower_bound_6term(obs, exact_ipb)
    return SoundnessReport(
        exact=float(state.h_ae),
        six_term_exact=float(six),
        three_term_exact=float(three),
        three_term_estimated=float(three_est),
        six_term_sound=bool(six <= state.h_ae + tol),
        three_term_exact_sound=bool(three <= state.h_ae + tol),
        three_term_estimated_sound=bool(three_est <= state.h_ae + tol),
        three_le_six=bool(three <= six + tol),
        s1t1_bound_sound=bool(est.s1t1 <= exact_ipb.s1t1 + tol),
        s0t0_bound_sound=bool(est.s0t0 <= exact_ipb.s0t0 + tol),
        pipeline_consistent=bool(abs(six_pipe - six) <= 1e-9 and abs(normalization(obs) - state.N) <= 1e-9),
    )
