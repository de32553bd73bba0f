"""Event-level Monte Carlo of the two-sub-round protocol with an honest server.

One sub-round follows this event tree (every branch maps onto a term of the
closed-form observables in :mod:`msqkd.channel`):

* the photon is lost on the way out with probability ``p_l``; the server then
  sees vacuum and announces "0" or "1" with probability ``p_d/2`` each
  (``p_l p_d / 2`` terms), else "vac";
* otherwise each measuring party intercepts it with probability 1/2 (both
  measuring means it is always intercepted); an intercepted photon flags the
  sub-round for discard and the server again sees vacuum;
* a photon heading back to the server is lost with probability ``p_l``, giving
  the ``(1-p_l) p_l p_d / 2`` dark-count terms;
* a returning photon from both arms interferes and yields "1" with probability
  ``phi``; a photon from a single arm yields "0" or "1" with probability 1/2.

Rounds are processed in fixed-size blocks, each with its own seed derived
from ``(seed, block index)``, so results do not depend on how many workers
run the blocks.
"""
from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from msqkd.channel import (
    ACTION_PAIRS,
    ChannelParams,
    Observables,
    acceptance_probability,
    block_weights,
    observables_from_channel,
    subround2_probability,
)
from msqkd.errors import InsufficientDataError, InvalidParameterError

BLOCK_SIZE = 1 << 16
MESSAGES = ("0", "1", "vac")
DETECTIONS = ("none", "alice", "bob")
VAC = 2
Z_LIMIT = 4.0


@dataclass(frozen=True)
class SimConfig:
    rounds: int
    seed: int = 0
    channel: ChannelParams = field(default_factory=ChannelParams)

    def __post_init__(self):
        if self.rounds < 1:
            raise InvalidParameterError(f"rounds must be >= 1, got {self.rounds}")


@dataclass
class SimStats:
    """Raw outcome of a simulation run.

    ``counts[pair, subround, message, detection]`` with pair index
    ``alice_measures + 2 * bob_measures`` (order rr, mr, rm, mm).
    ``key_blocks[a, b]`` counts accepted rounds with Alice bit a, Bob bit b.
    """

    config: SimConfig
    counts: np.ndarray
    accepted: int
    subround2_used: int
    alice_key: np.ndarray
    bob_key: np.ndarray
    key_blocks: np.ndarray
    # accepted rounds whose sub-round-1 message was "1", split by whether the
    # sub-round-1 actions were opposite
    accepted_on_one: int = 0
    accepted_on_one_opposite: int = 0

    @property
    def rounds(self) -> int:
        return self.config.rounds

    @property
    def p_acc(self) -> float:
        return self.accepted / self.rounds

    @property
    def p0(self) -> float:
        return self.subround2_used / self.rounds

    @property
    def qber(self) -> float:
        if self.accepted == 0:
            return 0.0
        return float(np.count_nonzero(self.alice_key != self.bob_key)) / self.accepted

    def counts_rows(self):
        for p, pair in enumerate(ACTION_PAIRS):
            for sr in (0, 1):
                for m, msg in enumerate(MESSAGES):
                    for d, det in enumerate(DETECTIONS):
                        yield pair, sr + 1, msg, det, int(self.counts[p, sr, m, d])

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["actions", "subround", "message", "detection", "count"])
        w.writerows(self.counts_rows())
        return buf.getvalue()

    def summary(self) -> dict:
        return {
            "rounds": self.rounds,
            "seed": self.config.seed,
            "channel": {"phi": self.config.channel.phi, "p_l": self.config.channel.p_l, "p_d": self.config.channel.p_d},
            "accepted": self.accepted,
            "subround2_used": self.subround2_used,
            "p_acc": self.p_acc,
            "p0": self.p0,
            "qber": self.qber,
            "keys_identical": bool(np.array_equal(self.alice_key, self.bob_key)),
            "key_blocks": {f"{a}{b}": int(self.key_blocks[a, b]) for a in (0, 1) for b in (0, 1)},
        }


def _pair_index(alice_m: np.ndarray, bob_m: np.ndarray) -> np.ndarray:
    return alice_m.astype(np.int64) + 2 * bob_m.astype(np.int64)


def _subround(rng: np.random.Generator, alice_m: np.ndarray, bob_m: np.ndarray, ch: ChannelParams):
    """Vectorized sub-round; returns (message, detection) code arrays."""
    n = alice_m.shape[0]
    lost_out = rng.random(n) < ch.p_l
    in_bob_arm = rng.random(n) < 0.5
    alice_hit = ~lost_out & alice_m & ~in_bob_arm
    bob_hit = ~lost_out & bob_m & in_bob_arm
    detected = alice_hit | bob_hit
    lost_back = rng.random(n) < ch.p_l
    returns = ~lost_out & ~detected & ~lost_back

    u_dark = rng.random(n)
    message = np.full(n, VAC, dtype=np.int8)
    message[u_dark < ch.p_d] = 1
    message[u_dark < ch.p_d / 2] = 0

    u_int = rng.random(n)
    both_reflect = ~alice_m & ~bob_m
    flip = np.where(both_reflect, u_int < ch.phi, u_int < 0.5)
    message[returns] = flip[returns].astype(np.int8)

    detection = np.zeros(n, dtype=np.int8)
    detection[alice_hit] = 1
    detection[bob_hit] = 2
    return message, detection


def _tally(counts, sr, pair, message, detection):
    flat = ((pair * 2 + sr) * 3 + message.astype(np.int64)) * 3 + detection
    counts += np.bincount(flat, minlength=counts.size).reshape(counts.shape)


def _run_block(seed: int, index: int, n: int, ch: ChannelParams):
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(index,)))
    alice_m = rng.random(n) < 0.5
    bob_m = rng.random(n) < 0.5
    counts = np.zeros((4, 2, 3, 3), dtype=np.int64)

    msg1, det1 = _subround(rng, alice_m, bob_m, ch)
    _tally(counts, 0, _pair_index(alice_m, bob_m), msg1, det1)
    accept1 = (msg1 == 1) & (det1 == 0)
    go2 = (msg1 == 0) & (det1 == 0)

    idx2 = np.flatnonzero(go2)
    a2, b2 = ~alice_m[idx2], ~bob_m[idx2]
    msg2, det2 = _subround(rng, a2, b2, ch)
    _tally(counts, 1, _pair_index(a2, b2), msg2, det2)
    accept2 = np.zeros(n, dtype=bool)
    accept2[idx2] = (msg2 != VAC) & (det2 == 0)

    accepted = accept1 | accept2
    alice_key = alice_m[accepted].astype(np.uint8)
    bob_key = (~bob_m[accepted]).astype(np.uint8)
    blocks = np.zeros((2, 2), dtype=np.int64)
    np.add.at(blocks, (alice_key, bob_key), 1)
    on_one = int(accept1.sum())
    opposite = int((accept1 & (alice_m != bob_m)).sum())
    return counts, int(go2.sum()), alice_key, bob_key, blocks, on_one, opposite


def run_simulation(cfg: SimConfig, workers: int = 1) -> SimStats:
    sizes = [BLOCK_SIZE] * (cfg.rounds // BLOCK_SIZE)
    if cfg.rounds % BLOCK_SIZE:
        sizes.append(cfg.rounds % BLOCK_SIZE)
    jobs = [(cfg.seed, i, n, cfg.channel) for i, n in enumerate(sizes)]
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(lambda job: _run_block(*job), jobs))
    else:
        parts = [_run_block(*job) for job in jobs]

    alice_key = np.concatenate([p[2] for p in parts])
    return SimStats(
        config=cfg,
        counts=sum(p[0] for p in parts),
        accepted=int(alice_key.shape[0]),
        subround2_used=sum(p[1] for p in parts),
        alice_key=alice_key,
        bob_key=np.concatenate([p[3] for p in parts]),
        key_blocks=sum(p[4] for p in parts),
        accepted_on_one=sum(p[5] for p in parts),
        accepted_on_one_opposite=sum(p[6] for p in parts),
    )


@dataclass
class Estimate:
    successes: int
    trials: int

    @property
    def value(self) -> float:
        return self.successes / self.trials

    @property
    def stderr(self) -> float:
        p = self.value
        return math.sqrt(p * (1 - p) / self.trials)


_binomial = Estimate


def empirical_estimates(stats: SimStats) -> dict[str, Estimate]:
    """Frequency estimates of every observable, pooled over both sub-rounds.

    Sub-rounds are i.i.d. given the action pair, so sub-round-2 events are as
    good as sub-round-1 events for parameter estimation.
    """
    per_pair = stats.counts.sum(axis=1)  # pair, message, detection
    out = {}
    for p, pair in enumerate(ACTION_PAIRS):
        trials = int(per_pair[p].sum())
        if trials == 0:
            raise InsufficientDataError(f"no sub-rounds with actions {pair}")
        for m in (0, 1):
            out[f"p{m}_{pair}"] = _binomial(int(per_pair[p, m, 0]), trials)
    mm = per_pair[3].sum(axis=0)
    trials = int(mm.sum())
    out["alpha2"] = _binomial(int(mm[1]), trials)
    out["beta2"] = _binomial(int(mm[2]), trials)
    out["gamma2"] = _binomial(int(mm[0]), trials)
    return out


def empirical_observables(stats: SimStats) -> tuple[Observables, dict[str, float]]:
    """Observables estimated from the run, plus their binomial standard errors."""
    est = empirical_estimates(stats)
    obs = Observables(**{k: e.value for k, e in est.items()})
    return obs, {k: e.stderr for k, e in est.items()}


@dataclass
class ZScore:
    name: str
    empirical: float
    analytic: float
    stderr: float
    z: float

    @property
    def flagged(self) -> bool:
        return abs(self.z) > Z_LIMIT


def _z(name: str, successes: int, trials: int, analytic: float) -> ZScore:
    emp = successes / trials
    # standard error under the analytic value, so zero-probability cells are testable
    se = math.sqrt(max(analytic * (1 - analytic), 0.0) / trials)
    if se == 0:
        z = 0.0 if emp == analytic else math.inf
    else:
        z = (emp - analytic) / se
    return ZScore(name, emp, analytic, se, z)


def compare_to_analytic(stats: SimStats, params: ChannelParams) -> list[ZScore]:
    """z-scores of every simulated frequency against its closed form.

    Covers the eight message observables, the three path probabilities,
    p_acc, p0 and the four (A, B) key-block frequencies per round.
    """
    analytic = observables_from_channel(params)
    est = empirical_estimates(stats)
    out = []
    for name, e in est.items():
        out.append(_z(name, e.successes, e.trials, getattr(analytic, name)))
    out.append(_z("p_acc", stats.accepted, stats.rounds, acceptance_probability(analytic)))
    out.append(_z("p0", stats.subround2_used, stats.rounds, subround2_probability(params)))
    weights = block_weights(analytic)
    for a in (0, 1):
        for b in (0, 1):
            out.append(_z(f"block_{a}{b}", int(stats.key_blocks[a, b]), stats.rounds, weights[f"{a}{b}"] / 4))
    return out


def mm_alternative_reading(stats: SimStats, params: ChannelParams) -> dict[str, float]:
    """P(message i | both measure, nobody detects) next to the joint reading.

    Informational only: the closed form p_l p_d / 2 matches the joint
    probability; the conditional one converges to p_d / 2.
    """
    mm = stats.counts[3].sum(axis=0)
    silent = int(mm[:, 0].sum())
    total = int(mm.sum())
    out = {"closed_form": params.p_l * params.p_d / 2}
    for m in (0, 1):
        out[f"p{m}_mm_joint"] = mm[m, 0] / total if total else math.nan
        out[f"p{m}_mm_given_silent"] = mm[m, 0] / silent if silent else math.nan
    return out


def report_json(stats: SimStats, zscores: list[ZScore] | None = None) -> str:
    doc = stats.summary()
    if zscores is not None:
        doc["zscores"] = [
            {"name": z.name, "empirical": z.empirical, "analytic": z.analytic, "stderr": z.stderr,
             "z": z.z if math.isfinite(z.z) else str(z.z), "flagged": z.flagged}
            for z in zscores
        ]
        doc["mm_readings"] = {k: float(v) for k, v in mm_alternative_reading(stats, stats.config.channel).items()}
    return json.dumps(doc, indent=2, sort_keys=True)
