"""Asymptotic key rate of the two-sub-round mediated protocol.

The pipeline is

    observables -> inner-product lower bounds -> H(A|E) lower bound
                -> r = H(A|E) - H(A|B) -> r_eff = N / (4 (1 + p0)) * r

together with two reference rates: the single-sub-round original protocol
and BB84 under the same phase error.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Literal, Optional

from msqkd.channel import (
    ChannelParams,
    Observables,
    block_weights,
    normalization,
    observables_from_channel,
    subround2_probability,
    subround2_probability_from_observables,
)
from msqkd.entropy import (
    EntropyTerm,
    binary_entropy,
    shannon_entropy,
    term_contribution,
)
from msqkd.errors import InvalidParameterError, NoAcceptedRoundsError

Mode = Literal["3term", "6term"]
Variant = Literal["printed", "index-consistent"]

MODES = ("3term", "6term")
VARIANTS = ("printed", "index-consistent")


@dataclass(frozen=True)
class InnerProductBounds:
    """Lower bounds on overlap magnitudes that the observables cannot fix directly.

    ``r0g0`` and ``r1g1`` have no non-trivial estimate; ``None`` means the
    adversary's preferred value, zero.
    """

    s1t1: float
    s0t0: float
    r0g0: Optional[float] = None
    r1g1: Optional[float] = None


@dataclass
class KeyRateReport:
    N: float
    p_acc: float
    p0: float
    h_ae_lower: float
    h_ab: float
    r: float
    r_eff: float
    mode: str
    term_breakdown: list[tuple[str, float, float]] = field(default_factory=list)
    r_old: Optional[float] = None
    r_eff_old: Optional[float] = None
    bb84: Optional[float] = None

    def as_dict(self) -> dict:
        return asdict(self)


def _amplitudes(obs: Observables) -> tuple[float, float, float]:
    return math.sqrt(obs.alpha2), math.sqrt(obs.beta2), math.sqrt(obs.gamma2)


def _clamp(value: float, cap: float) -> float:
    return min(max(value, 0.0), cap)


def _g_penalty(obs: Observables, g: float) -> float:
    alpha, beta, gamma = _amplitudes(obs)
    return 1.5 * g + (alpha * gamma + beta * gamma) * math.sqrt(g)


def bound_s1t1(obs: Observables) -> float:
    """Lower bound on |<s1|t1>| via the reverse triangle inequality."""
    raw = (obs.t1 + obs.s1 - obs.r1) / 2 - _g_penalty(obs, obs.g1)
    return _clamp(raw, math.sqrt(obs.s1 * obs.t1))


def bound_s0t0(obs: Observables, variant: Variant = "printed") -> float:
    """Lower bound on |<s0|t0>|.

    ``"printed"`` mixes in the index-1 quantities <r1> and <g1>.
    ``"index-consistent"`` redoes the same derivation for index 0, where
    Re<s0|t0> = (<r0> - <t0> - <s0>)/2 + O(<g0>), hence the absolute value.
    """
    if variant == "printed":
        raw = (obs.t0 + obs.s0 - obs.r1) / 2 - _g_penalty(obs, obs.g1)
    elif variant == "index-consistent":
        raw = abs(obs.t0 + obs.s0 - obs.r0) / 2 - _g_penalty(obs, obs.g0)
    else:
        raise InvalidParameterError(f"unknown bound variant {variant!r}")
    return _clamp(raw, math.sqrt(obs.s0 * obs.t0))


def estimate_inner_products(obs: Observables, variant: Variant = "printed") -> InnerProductBounds:
    return InnerProductBounds(s1t1=bound_s1t1(obs), s0t0=bound_s0t0(obs, variant))


def _require_positive(N: float) -> None:
    if N <= 0:
        raise NoAcceptedRoundsError("no accepted rounds (N = 0)")


def conditional_entropy_AB(obs: Observables) -> float:
    """H(A|B) in bits for the accepted-round key distribution."""
    w = block_weights(obs)
    N = sum(w.values())
    _require_positive(N)
    p = {k: v / N for k, v in w.items()}
    h_ab = shannon_entropy(p.values())
    h_b = shannon_entropy([p["00"] + p["10"], p["01"] + p["11"]])
    return max(h_ab - h_b, 0.0)


def _terms_3(obs: Observables, ipb: InnerProductBounds) -> list[tuple[str, EntropyTerm]]:
    o = obs
    ts = o.t0 * o.s0
    return [
        ("t1|s1", EntropyTerm(o.t1, o.s1, ipb.s1t1)),
        ("t0s0|s0t0", EntropyTerm(ts, ts, ipb.s0t0**2)),
        ("t0s1|s0t1", EntropyTerm(o.t0 * o.s1, o.s0 * o.t1, ipb.s0t0 * ipb.s1t1)),
    ]


def _terms_6(obs: Observables, ipb: InnerProductBounds) -> list[tuple[str, EntropyTerm]]:
    o = obs
    r0g0 = ipb.r0g0 or 0.0
    r1g1 = ipb.r1g1 or 0.0
    rg = o.r0 * o.g0
    return _terms_3(obs, ipb) + [
        ("r1|g1", EntropyTerm(o.r1, o.g1, r1g1)),
        ("r0g0|g0r0", EntropyTerm(rg, rg, r0g0**2)),
        ("r0g1|g0r1", EntropyTerm(o.r0 * o.g1, o.g0 * o.r1, r0g0 * r1g1)),
    ]


def _evaluate(terms, N: float) -> tuple[float, list[tuple[str, float, float]]]:
    _require_positive(N)
    breakdown = [(label, t.weight / N, term_contribution(t, N)) for label, t in terms]
    return sum(c for _, _, c in breakdown), breakdown


def entropy_lower_bound_3term(obs: Observables, ipb: InnerProductBounds):
    """Returns ``(bound, breakdown)`` using the three t/s pairs only."""
    return _evaluate(_terms_3(obs, ipb), normalization(obs))


def entropy_lower_bound_6term(obs: Observables, ipb: InnerProductBounds):
    """Returns ``(bound, breakdown)`` including the three r/g pairs."""
    return _evaluate(_terms_6(obs, ipb), normalization(obs))


def original_protocol_keyrate(obs: Observables) -> tuple[float, float]:
    """Key rate and effective key rate when only sub-round 1 exists.

    Raw key is kept only on the message "1", so one pair (t1, s1) feeds the
    entropy bound and each round uses exactly one photon.
    """
    w = {"00": obs.t1, "11": obs.s1, "01": obs.r1, "10": obs.g1}
    N_old = sum(w.values())
    _require_positive(N_old)
    h_ae = term_contribution(EntropyTerm(obs.t1, obs.s1, bound_s1t1(obs)), N_old)
    p = {k: v / N_old for k, v in w.items()}
    h_ab = shannon_entropy(p.values()) - shannon_entropy([p["00"] + p["10"], p["01"] + p["11"]])
    r_old = h_ae - max(h_ab, 0.0)
    return r_old, N_old / 4 * r_old


def bb84_keyrate(phi: float) -> float:
    if not -1e-12 <= phi <= 0.5 + 1e-12:
        raise InvalidParameterError(f"phi must lie in [0, 1/2], got {phi}")
    return 1 - 2 * binary_entropy(phi)


def keyrate(
    obs: Observables,
    ipb: Optional[InnerProductBounds] = None,
    mode: Mode = "3term",
    p0: Optional[float] = None,
    variant: Variant = "printed",
    phi: Optional[float] = None,
) -> KeyRateReport:
    """Full key-rate report.

    ``p0`` (probability of running sub-round 2) defaults to the value implied by
    the observables; ``phi`` only feeds the BB84 reference rate.
    """
    if mode not in MODES:
        raise InvalidParameterError(f"unknown mode {mode!r}")
    N = normalization(obs)
    _require_positive(N)
    if ipb is None:
        ipb = estimate_inner_products(obs, variant)
    if p0 is None:
        p0 = subround2_probability_from_observables(obs)
    if mode == "3term":
        h_ae, breakdown = entropy_lower_bound_3term(obs, ipb)
    else:
        h_ae, breakdown = entropy_lower_bound_6term(obs, ipb)
    h_ab = conditional_entropy_AB(obs)
    r = h_ae - h_ab
    try:
        r_old, r_eff_old = original_protocol_keyrate(obs)
    except NoAcceptedRoundsError:
        r_old = r_eff_old = None
    return KeyRateReport(
        N=N,
        p_acc=N / 4,
        p0=p0,
        h_ae_lower=h_ae,
        h_ab=h_ab,
        r=r,
        r_eff=N / (4 * (1 + p0)) * r,
        mode=mode,
        term_breakdown=breakdown,
        r_old=r_old,
        r_eff_old=r_eff_old,
        bb84=None if phi is None else bb84_keyrate(phi),
    )


def channel_keyrate(
    params: ChannelParams, mode: Mode = "3term", variant: Variant = "printed"
) -> KeyRateReport:
    """Key-rate report for the symmetric channel, p0 from its closed form."""
    obs = observables_from_channel(params)
    return keyrate(
        obs,
        mode=mode,
        p0=subround2_probability(params),
        variant=variant,
        phi=params.phi,
    )


def noise_tolerance(
    rate: Callable[[float], float], lo: float = 0.0, hi: float = 0.2, width: float = 1e-4
) -> float:
    """Bisection for the phase error where ``rate`` changes sign.

    Requires ``rate(lo) > 0 >= rate(hi)``; returns the bracket midpoint once
    the bracket is narrower than ``width``.
    """
    if not rate(lo) > 0:
        raise InvalidParameterError(f"rate is not positive at lower end {lo}")
    if rate(hi) > 0:
        raise InvalidParameterError(f"rate is still positive at upper end {hi}")
    while hi - lo > width:
        mid = (lo + hi) / 2
        if rate(mid) > 0:
            lo = mid
        else:
            hi = mid
    return (lo + hi) / 2
