import math

import numpy as np
import pytest

from msqkd.channel import ChannelParams, Observables, observables_from_channel
from msqkd.errors import InvalidParameterError, NoAcceptedRoundsError
from msqkd.keyrate import (
    InnerProductBounds,
    bb84_keyrate,
    bound_s0t0,
    bound_s1t1,
    channel_keyrate,
    conditional_entropy_AB,
    entropy_lower_bound_3term,
    entropy_lower_bound_6term,
    estimate_inner_products,
    keyrate,
    noise_tolerance,
    original_protocol_keyrate,
)

IDEAL = observables_from_channel(ChannelParams(0, 0, 0))
NOISY = observables_from_channel(ChannelParams(0.05, 0, 0))


def _h(x):
    return 0.0 if x in (0.0, 1.0) else -x * math.log2(x) - (1 - x) * math.log2(1 - x)


def _oracle_lossless(phi):
    """Three-term rate for p_l = p_d = 0 written out by hand.

    With no loss <t_i> = <s_i> = 1/4, <r_1> = phi, <g_i> = 0, the overlap bound
    is (1/2 - phi)/2 and N = 3/4 + phi.
    """
    N = 0.75 + phi
    ov = max((0.5 - phi) / 2, 0.0)
    lam1 = 0.5 * (1 + 2 * ov / 0.5)
    lam2 = 0.5 * (1 + ov**2 / (1 / 16))
    t1 = 0.5 / N * (1 - _h(lam1))
    t2 = (2 / 16) / N * (1 - _h(lam2))
    h_ae = t1 + 2 * max(t2, 0.0)
    p = np.array([0.375, 0.375, phi, 0.0]) / N  # 00, 11, 01, 10
    pb1 = p[1] + p[2]
    h_ab = pb1 * _h(p[2] / pb1)
    return h_ae, h_ab


def test_inner_product_bounds_examples():
    assert bound_s1t1(IDEAL) == pytest.approx(0.25)
    assert bound_s0t0(IDEAL) == pytest.approx(0.25)
    assert bound_s1t1(NOISY) == pytest.approx(0.225)
    assert bound_s0t0(NOISY) == pytest.approx(0.225)
    lost = observables_from_channel(ChannelParams(0.1, 1, 0))
    assert bound_s1t1(lost) == 0 and bound_s0t0(lost) == 0


def test_index_consistent_variant():
    assert bound_s0t0(IDEAL, "index-consistent") == pytest.approx(0.25)
    lossy = observables_from_channel(ChannelParams(0.05, 0.5, 1e-3))
    assert bound_s0t0(lossy, "index-consistent") != pytest.approx(bound_s0t0(lossy))
    with pytest.raises(InvalidParameterError):
        bound_s0t0(IDEAL, "bogus")


def test_conditional_entropy_ab():
    assert conditional_entropy_AB(IDEAL) == 0
    assert conditional_entropy_AB(NOISY) == pytest.approx(0.2776, abs=1e-4)
    assert conditional_entropy_AB(NOISY) == pytest.approx(_oracle_lossless(0.05)[1], abs=1e-12)
    # equal block weights: p(0,0)=p(1,1)=p(0,1)=p(1,0)
    uniform = Observables(
        p1_rr=0.25, p0_rr=0.0, p1_mr=0.25, p0_mr=0.0, p1_rm=0.25, p0_rm=0.0,
        p1_mm=0.25, p0_mm=0.0, alpha2=1 / 3, beta2=1 / 3, gamma2=1 / 3,
    )
    assert conditional_entropy_AB(uniform) == pytest.approx(1.0)
    with pytest.raises(NoAcceptedRoundsError):
        conditional_entropy_AB(Observables.zeros())


def test_three_term_ideal():
    value, breakdown = entropy_lower_bound_3term(IDEAL, estimate_inner_products(IDEAL))
    assert value == pytest.approx(1.0, abs=1e-12)
    assert [c for _, _, c in breakdown] == pytest.approx([2 / 3, 1 / 6, 1 / 6])


def test_three_term_noisy():
    value, breakdown = entropy_lower_bound_3term(NOISY, estimate_inner_products(NOISY))
    assert value == pytest.approx(0.617, abs=1e-3)
    assert value == pytest.approx(_oracle_lossless(0.05)[0], abs=1e-12)
    assert [c for _, _, c in breakdown] == pytest.approx([0.446, 0.0855, 0.0855], abs=5e-4)


def test_three_term_orthogonal_overlaps():
    value, breakdown = entropy_lower_bound_3term(IDEAL, InnerProductBounds(0, 0))
    # every lambda is 1/2 or equals the norm ratio: nothing survives the floor
    assert value == pytest.approx(0.0, abs=1e-15)
    assert all(c >= 0 for _, _, c in breakdown)


@pytest.mark.parametrize("obs", [IDEAL, NOISY, observables_from_channel(ChannelParams(0.03, 0.4, 0.01))])
def test_six_term_defaults_match_three_term(obs):
    ipb = estimate_inner_products(obs)
    three, _ = entropy_lower_bound_3term(obs, ipb)
    six, breakdown = entropy_lower_bound_6term(obs, ipb)
    assert len(breakdown) == 6
    assert six >= three
    assert six == pytest.approx(three, abs=1e-12)


def test_six_term_uses_r_g_overlaps():
    obs = observables_from_channel(ChannelParams(0.03, 0.4, 0.05))
    ipb = estimate_inner_products(obs)
    cap01 = math.sqrt(obs.r0 * obs.g0)
    cap11 = math.sqrt(obs.r1 * obs.g1)
    richer = InnerProductBounds(ipb.s1t1, ipb.s0t0, r0g0=cap01, r1g1=cap11)
    assert entropy_lower_bound_6term(obs, richer)[0] > entropy_lower_bound_3term(obs, ipb)[0]


def test_keyrate_ideal():
    rep = keyrate(IDEAL, p0=3 / 8)
    assert rep.N == pytest.approx(0.75)
    assert rep.h_ab == 0
    assert rep.r == pytest.approx(1.0, abs=1e-12)
    assert rep.r_eff == pytest.approx(3 / 22, abs=1e-12)
    assert rep.r_old == pytest.approx(1.0)
    assert rep.r_eff_old == pytest.approx(1 / 8)


def test_keyrate_noisy():
    rep = channel_keyrate(ChannelParams(0.05, 0, 0))
    h_ae, h_ab = _oracle_lossless(0.05)
    assert rep.r == pytest.approx(h_ae - h_ab, abs=1e-12)
    assert rep.r == pytest.approx(0.339, abs=1e-3)
    assert rep.r_eff == pytest.approx(0.8 / (4 * 1.3625) * rep.r)
    assert rep.bb84 == pytest.approx(bb84_keyrate(0.05))


def test_keyrate_sign_change_near_ten_percent():
    assert channel_keyrate(ChannelParams(0.097, 0, 0)).r > 0
    assert channel_keyrate(ChannelParams(0.099, 0, 0)).r < 0


def test_keyrate_default_p0_matches_closed_form():
    params = ChannelParams(0.04, 0.3, 1e-3)
    obs = observables_from_channel(params)
    assert keyrate(obs).r_eff == pytest.approx(channel_keyrate(params).r_eff, rel=1e-14)


def test_keyrate_errors():
    with pytest.raises(NoAcceptedRoundsError):
        keyrate(Observables.zeros())
    with pytest.raises(InvalidParameterError):
        keyrate(IDEAL, mode="7term")


def test_original_protocol():
    assert original_protocol_keyrate(IDEAL) == pytest.approx((1.0, 0.125))
    r_old, _ = original_protocol_keyrate(observables_from_channel(ChannelParams(0.089, 0, 0)))
    assert abs(r_old) < 0.01
    with pytest.raises(NoAcceptedRoundsError):
        original_protocol_keyrate(observables_from_channel(ChannelParams(0, 1, 0)))


@pytest.mark.parametrize("phi, rate", [(0, 1.0), (0.25, -0.6225562489)])
def test_bb84(phi, rate):
    assert bb84_keyrate(phi) == pytest.approx(rate, abs=1e-9)


def test_bb84_threshold_and_domain():
    assert abs(bb84_keyrate(0.11)) < 5e-4
    with pytest.raises(InvalidParameterError):
        bb84_keyrate(0.6)


def test_noise_tolerance_bisection():
    root = noise_tolerance(lambda x: 0.0731 - x, lo=0, hi=0.2, width=1e-4)
    assert abs(root - 0.0731) < 1e-4
    with pytest.raises(InvalidParameterError):
        noise_tolerance(lambda x: -1.0)
