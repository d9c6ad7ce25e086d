import math

import numpy as np
import pytest
import torch
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from intentraj.losses import (LossBreakdown, TrainingAbort, default_threshold, dispersion,
                              distance_errors, intention_ce, inconsistency, kl_unit_gaussian,
                              penetration, range_penalty, recon_loglik, recon_loglik_from_log_probs,
                              soft_argmax, total_loss, velocities_from_points)

finite = st.floats(-5, 5, allow_nan=False)


def test_kl_examples():
    assert kl_unit_gaussian([0.0], [0.0]).item() == 0.0
    assert kl_unit_gaussian([1.0], [0.0]).item() == pytest.approx(0.5)


def test_kl_matches_monte_carlo():
    g = torch.Generator().manual_seed(5)
    mu = torch.randn(4, generator=g, dtype=torch.float64)
    logvar = 0.5 * torch.randn(4, generator=g, dtype=torch.float64)
    std = (0.5 * logvar).exp()
    z = mu + std * torch.randn(10 ** 6, 4, generator=g, dtype=torch.float64)
    log_q = (-0.5 * ((z - mu) / std) ** 2 - torch.log(std) - 0.5 * math.log(2 * math.pi)).sum(-1)
    log_p = (-0.5 * z ** 2 - 0.5 * math.log(2 * math.pi)).sum(-1)
    mc = (log_q - log_p).mean().item()
    exact = kl_unit_gaussian(mu, logvar).item()
    assert abs(mc - exact) / exact < 0.01


@given(arrays(np.float64, 6, elements=finite), arrays(np.float64, 6, elements=finite))
def test_kl_nonnegative(mu, logvar):
    assert kl_unit_gaussian(mu, logvar).item() >= -1e-12


def test_recon_examples():
    t = torch.zeros(3, 4, 5, dtype=torch.float64)
    t[:, 1, 2] = 1.0
    assert recon_loglik(t, t).item() == pytest.approx(0.0, abs=1e-10)
    uni = torch.full_like(t, 1 / 20)
    assert recon_loglik(uni, t).item() == pytest.approx(-3 * math.log(20))
    p = torch.softmax(torch.randn(3, 20, dtype=torch.float64), -1).view(3, 4, 5)
    perm = torch.randperm(20)
    swap = lambda x: x.reshape(3, 20)[:, perm].reshape(3, 4, 5)
    assert recon_loglik(swap(p), swap(t)).item() == pytest.approx(recon_loglik(p, t).item())
    assert recon_loglik_from_log_probs(p.log(), t).item() == pytest.approx(recon_loglik(p, t).item())
    with pytest.raises(ValueError):
        recon_loglik(p, t[:2])


def test_intention_ce_examples():
    assert intention_ce([0, 1.0, 0, 0, 0], 2).item() == pytest.approx(0.0)
    assert intention_ce([0.2] * 5, 4).item() == pytest.approx(math.log(5))
    assert intention_ce([0.25, 0.75, 0, 0, 0], 1).item() == pytest.approx(math.log(4))
    with pytest.raises(ValueError):
        intention_ce([0.2] * 5, 6)


def test_penetration_examples():
    H = torch.zeros(1, 4, 4, dtype=torch.float64)
    H[0, 0, 0] = H[0, 1, 1] = H[0, 2, 2] = 1 / 3
    D = torch.zeros(4, 4, dtype=torch.float64)
    assert penetration(H, D).item() == 0.0  # everything drivable
    D[0, 0] = D[1, 1] = D[2, 2] = 1.0
    assert penetration(H, D).item() == 3.0
    on_road = torch.ones(4, 4, dtype=torch.float64)
    on_road[0, 0] = on_road[1, 1] = on_road[2, 2] = 0.0
    assert penetration(H, on_road).item() == 0.0
    assert default_threshold((160, 160)) == 1 / (2 * 160 * 160)


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, (2, 5, 6), elements=st.floats(0, 1)),
       arrays(np.int8, (5, 6), elements=st.integers(0, 1)))
def test_penetration_partition(h, d):
    h = torch.as_tensor(h / max(h.sum(), 1e-9))
    D = torch.as_tensor(d, dtype=torch.float64)
    whole = penetration(h, torch.ones_like(D))
    assert (penetration(h, D) + penetration(h, 1 - D)).item() == pytest.approx(whole.item())
    soft = penetration(h, D, hard=False)
    assert soft.item() >= -1e-12


@pytest.mark.parametrize("a, x, b, expected", [(2, 2, 2, 0), (1, 3, 2, 1), (3, 1, 2, 1), (5, 1, 1, 0)])
def test_range_penalty_examples(a, x, b, expected):
    assert range_penalty(a, x, b).item() == expected


def test_inconsistency_examples():
    assert inconsistency([1.0, 2.0, 3.0, 4.0]).item() == 0.0
    assert inconsistency([2.0, 2.0, 2.0]).item() == 0.0
    assert inconsistency([2.0, 2.0, 5.0, 2.0]).item() == pytest.approx(1.5)
    with pytest.raises(ValueError):
        inconsistency([1.0, 2.0])


@given(arrays(np.float64, 6, elements=st.floats(0, 20)))
def test_inconsistency_nonnegative(v):
    assert inconsistency(v).item() >= 0.0


def test_dispersion_examples():
    assert dispersion([2.0, 2.0, 2.0]).item() == 0.0
    assert dispersion([1.0, 3.0]).item() == pytest.approx(1.0)
    assert dispersion([0.0, 0.0, 3.0]).item() == pytest.approx(2.0)


@given(arrays(np.float64, 5, elements=st.floats(0, 50)))
def test_dispersion_is_variance(d):
    assert dispersion(d).item() == pytest.approx(float(np.var(d)), abs=1e-9)


def test_total_loss_examples():
    zero = {k: 0.0 for k in LossBreakdown.TERMS}
    assert total_loss(zero).item() == 0.0
    parts = dict(kl=1.0, elbo_recon=-2.0, ce=0.5, penetration=2.0, inconsistency=1.0, dispersion=10.0)
    assert total_loss(parts).item() == pytest.approx(5.7)
    import inspect
    sig = inspect.signature(total_loss).parameters
    assert (sig["zeta"].default, sig["eta"].default, sig["mu"].default) == (1.0, 0.1, 0.01)


def test_total_loss_aborts_naming_term():
    parts = dict(kl=1.0, elbo_recon=-2.0, ce=float("nan"), penetration=0.0, inconsistency=0.0,
                 dispersion=0.0)
    with pytest.raises(TrainingAbort, match="'ce'") as err:
        total_loss(parts, step=7)
    assert err.value.term == "ce" and err.value.step == 7


def test_breakdown_log_line():
    t = lambda v: torch.tensor(v)
    b = LossBreakdown(t(-1.0), t(0.5), t(0.2), t(0.0), t(0.1), t(0.3))
    total_loss(b)
    line = b.log_line(3, 12.4)
    assert line.startswith("step=3 elbo_recon=-1 kl=0.5")
    assert line.endswith("total=1.713 ms=12")


def test_velocity_examples():
    last = torch.tensor([2.0, 2.0])
    assert not velocities_from_points(last, last.expand(4, 2)).any()
    line = torch.tensor([[0.8 * k, 0.0] for k in range(1, 5)])
    torch.testing.assert_close(velocities_from_points(torch.zeros(2), line), torch.full((4,), 0.8))
    v = velocities_from_points(torch.zeros(2), torch.tensor([[1.0, 0.0], [3.0, 0.0]]))
    torch.testing.assert_close(v, torch.tensor([1.0, 2.0]))
    v = velocities_from_points(torch.zeros(2), torch.tensor([[1.0, 0.0]]), previous=torch.tensor([-3.0, 0.0]))
    torch.testing.assert_close(v, torch.tensor([3.0, 1.0]))


def test_distance_errors_and_soft_argmax():
    d = distance_errors(torch.tensor([[3.0, 4.0]]), torch.zeros(1, 2))
    assert d.item() == pytest.approx(5.0)
    p = torch.zeros(1, 4, 6, dtype=torch.float64)
    p[0, 2, 5] = 1.0
    torch.testing.assert_close(soft_argmax(p, 0.5), torch.tensor([[2.75, 1.25]], dtype=torch.float64))
