"""Key-rate analysis and simulation for the two-sub-round mediated SQKD protocol."""
from msqkd.attack import (
    AttackSpec,
    exact_conditional_entropy,
    honest_attack,
    observables_from_attack,
    phase_noisy_attack,
    random_attack,
    soundness_report,
    validate_attack,
)
from msqkd.channel import (
    ChannelParams,
    Observables,
    acceptance_probability,
    normalization,
    observables_from_channel,
    subround2_probability,
)
from msqkd.entropy import EntropyTerm, binary_entropy, lambda_of, pairwise_entropy_bound
from msqkd.keyrate import (
    InnerProductBounds,
    KeyRateReport,
    bb84_keyrate,
    channel_keyrate,
    keyrate,
    original_protocol_keyrate,
)
from msqkd.simulate import SimConfig, compare_to_analytic, empirical_observables, run_simulation

__version__ = "0.1.0"
