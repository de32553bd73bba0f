"""Symmetric-channel statistics for the mediated semi-quantum protocol.

The channel is described by a phase error rate ``phi``, a one-directional
loss probability ``p_l`` and a server dark-count rate ``p_d``.  From those we
derive the observable quantities Alice and Bob can estimate: for each pair of
actions (Reflect/Measure) the probability that the server announces "0" or
"1" jointly with the measuring party not seeing the photon.

Action pairs are written Alice-first: ``rm`` means Alice reflects and Bob
measures.
"""
from __future__ import annotations

from dataclasses import dataclass, fields

from msqkd.errors import InvalidParameterError

_TOL = 1e-12

ACTION_PAIRS = ("rr", "mr", "rm", "mm")


@dataclass(frozen=True)
class ChannelParams:
    phi: float = 0.0
    p_l: float = 0.0
    p_d: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.phi <= 0.5:
            raise InvalidParameterError(f"phi must lie in [0, 1/2], got {self.phi}")
        for name in ("p_l", "p_d"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise InvalidParameterError(f"{name} must lie in [0, 1], got {value}")


@dataclass(frozen=True)
class Observables:
    """Sufficient statistics for the key-rate bound.

    ``p{i}_{xy}`` is Pr(server says i, measuring party silent | actions xy).
    The bracket quantities of the analysis map onto these as
    <r_i> = p{i}_rr, <s_i> = p{i}_mr, <t_i> = p{i}_rm, <g_i> = p{i}_mm.
    """

    p1_rr: float
    p0_rr: float
    p1_mr: float
    p0_mr: float
    p1_rm: float
    p0_rm: float
    p1_mm: float
    p0_mm: float
    alpha2: float
    beta2: float
    gamma2: float

    def __post_init__(self):
        problems = self.violations()
        if problems:
            raise InvalidParameterError("; ".join(problems))

    def violations(self) -> list[str]:
        out = []
        for f in fields(self):
            v = getattr(self, f.name)
            if not (-_TOL <= v <= 1 + _TOL):
                out.append(f"{f.name}={v} outside [0, 1]")
        total = self.alpha2 + self.beta2 + self.gamma2
        if abs(total - 1.0) > _TOL:
            out.append(f"alpha2+beta2+gamma2={total} != 1")
        for xy in ACTION_PAIRS:
            s = self.p(1, xy) + self.p(0, xy)
            if s > 1 + _TOL:
                out.append(f"p1_{xy}+p0_{xy}={s} > 1")
        return out

    def p(self, message: int, pair: str) -> float:
        return getattr(self, f"p{message}_{pair}")

    # bracket aliases used throughout the key-rate algebra
    @property
    def r0(self): return self.p0_rr
    @property
    def r1(self): return self.p1_rr
    @property
    def s0(self): return self.p0_mr
    @property
    def s1(self): return self.p1_mr
    @property
    def t0(self): return self.p0_rm
    @property
    def t1(self): return self.p1_rm
    @property
    def g0(self): return self.p0_mm
    @property
    def g1(self): return self.p1_mm

    def as_dict(self) -> dict[str, float]:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    @classmethod
    def zeros(cls) -> "Observables":
        """All-zero message statistics (every round lost)."""
        return cls(0, 0, 0, 0, 0, 0, 0, 0, 0.0, 0.0, 1.0)


def observables_from_channel(params: ChannelParams) -> Observables:
    phi, pl, pd = params.phi, params.p_l, params.p_d
    dark = pl * pd / 2
    survive = 1 - pl
    single = dark + survive / 2 * (dark + survive / 2)
    return Observables(
        p1_rr=dark + survive * (dark + survive * phi),
        p0_rr=dark + survive * (dark + survive * (1 - phi)),
        p1_mr=single,
        p0_mr=single,
        p1_rm=single,
        p0_rm=single,
        p1_mm=dark,
        p0_mm=dark,
        alpha2=survive / 2,
        beta2=survive / 2,
        gamma2=pl,
    )


def block_weights(obs: Observables) -> dict[str, float]:
    """Unnormalized weights of the four (A, B) key blocks of an accepted round.

    Keys are ``"00"``, ``"11"``, ``"01"``, ``"10"`` (Alice's bit first).  Each
    weight is the sub-round-1 "1" probability plus the "0"-then-sub-round-2
    products with inverted actions.
    """
    o = obs
    return {
        "00": o.t1 + o.t0 * o.s0 + o.t0 * o.s1,
        "11": o.s1 + o.s0 * o.t0 + o.s0 * o.t1,
        "01": o.r1 + o.r0 * o.g0 + o.r0 * o.g1,
        "10": o.g1 + o.g0 * o.r0 + o.g0 * o.r1,
    }


def normalization(obs: Observables) -> float:
    return sum(block_weights(obs).values())


def acceptance_probability(obs: Observables) -> float:
    # the 1/4 is the probability of any particular action pair
    return normalization(obs) / 4


def subround2_probability(params: ChannelParams) -> float:
    """Probability that the server answers "0" in sub-round 1 (closed form)."""
    phi, pl, pd = params.phi, params.p_l, params.p_d
    return 0.25 * (2 * pl * pd + (1 - pl) * (pl * pd + (1 - pl) / 2 + (1 - pl) * (1 - phi)))


def subround2_probability_from_observables(obs: Observables) -> float:
    """Average over action pairs of Pr("0" and no detection).

    Agrees with :func:`subround2_probability` on the symmetric channel and
    gives a p0 for arbitrary observables.
    """
    return (obs.p0_rr + obs.p0_mr + obs.p0_rm + obs.p0_mm) / 4
