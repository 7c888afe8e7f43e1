import itertools
import math

import pytest
import torch
import torch.nn.functional as F
from torch.autograd import gradcheck

from inkvae.config import VaeLossWeights
from inkvae.gmm import GmmParams, gmm_nll, sample_trajectory
from inkvae.losses import (ctc_feasible, ctc_greedy_decode, ctc_loss, ctc_losses, kl_loss, pen_class_alpha,
                           pen_focal_loss, style_ce, vae_total_loss)
from inkvae.types import LatentPosterior
from utils.exceptions import NumericError, ShapeError

LN_2PI = math.log(2 * math.pi)


def _random_params(seed, batch=2, steps=5, components=3, dtype=torch.float64):
    gen = torch.Generator().manual_seed(seed)
    output = torch.randn(batch, steps, 6 * components + 3, generator=gen, dtype=dtype) * 0.5
    return output, torch.randn(batch, steps, 2, generator=gen, dtype=dtype)


# --- mixture likelihood ------------------------------------------------------

def test_gmm_standard_normal_at_mean():
    params = GmmParams.from_output(torch.zeros(1, 1, 9, dtype=torch.float64), 1)
    nll = gmm_nll(params, torch.zeros(1, 1, 2, dtype=torch.float64), torch.ones(1, 1))
    assert float(nll) == pytest.approx(LN_2PI, abs=1e-9)
    assert float(nll) == pytest.approx(1.837877, abs=1e-6)


def test_gmm_identical_components_collapse():
    single = GmmParams.from_output(torch.zeros(1, 1, 9, dtype=torch.float64), 1)
    double = GmmParams.from_output(torch.zeros(1, 1, 15, dtype=torch.float64), 2)
    target = torch.tensor([[[0.3, -0.2]]], dtype=torch.float64)
    mask = torch.ones(1, 1)
    assert float(gmm_nll(double, target, mask)) == pytest.approx(float(gmm_nll(single, target, mask)), abs=1e-12)


def test_gmm_component_permutation_invariance():
    output, targets = _random_params(0, components=4)
    params = GmmParams.from_output(output, 4)
    perm = torch.tensor([2, 0, 3, 1])
    shuffled = GmmParams(*(t[..., perm] for t in params.tensors()[:6]), params.pen_logits)
    mask = torch.ones(2, 5)
    assert float(gmm_nll(shuffled, targets, mask)) == pytest.approx(float(gmm_nll(params, targets, mask)), abs=1e-12)


def test_gmm_ignores_padded_targets():
    output, targets = _random_params(1)
    params = GmmParams.from_output(output, 3)
    mask = torch.tensor([[1, 1, 1, 0, 0], [1, 1, 1, 1, 1]])
    perturbed = targets.clone()
    perturbed[0, 3:] += 100.0
    assert float(gmm_nll(params, perturbed, mask)) == float(gmm_nll(params, targets, mask))


def test_gmm_padded_steps_get_no_gradient():
    output, targets = _random_params(2)
    output.requires_grad_(True)
    mask = torch.tensor([[1, 1, 0, 0, 0], [1, 1, 1, 1, 1]])
    gmm_nll(GmmParams.from_output(output, 3), targets, mask).backward()
    assert torch.all(output.grad[0, 2:] == 0)


def test_gmm_rejects_bad_width_and_non_finite():
    with pytest.raises(ShapeError):
        GmmParams.from_output(torch.zeros(1, 1, 10), 1)
    params = GmmParams.from_output(torch.full((1, 1, 9), float("nan")), 1)
    with pytest.raises(NumericError):
        gmm_nll(params, torch.zeros(1, 1, 2), torch.ones(1, 1))


def test_gmm_all_padding_is_zero():
    params = GmmParams.from_output(torch.zeros(1, 2, 9), 1)
    assert float(gmm_nll(params, torch.zeros(1, 2, 2), torch.zeros(1, 2))) == 0.0


# --- pen focal loss ----------------------------------------------------------

def test_focal_without_focusing_is_cross_entropy():
    gen = torch.Generator().manual_seed(0)
    logits = torch.randn(2, 6, 3, generator=gen)
    labels = torch.randint(0, 3, (2, 6), generator=gen)
    expected = F.cross_entropy(logits.reshape(-1, 3), labels.reshape(-1))
    actual = pen_focal_loss(logits, F.one_hot(labels, 3).float(), alpha=None, gamma=0.0)
    assert float(actual) == pytest.approx(float(expected), rel=1e-6)


def test_focal_confident_correct_is_zero():
    logits = torch.tensor([[[50.0, 0.0, 0.0]]])
    assert float(pen_focal_loss(logits, torch.tensor([[[1.0, 0.0, 0.0]]]))) == pytest.approx(0.0, abs=1e-12)


def test_focal_half_confidence_value():
    logits = torch.log(torch.tensor([[[2.0, 1.0, 1.0]]], dtype=torch.float64))
    loss = pen_focal_loss(logits, torch.tensor([[[1.0, 0.0, 0.0]]], dtype=torch.float64), gamma=2.0)
    assert float(loss) == pytest.approx(0.25 * math.log(2), abs=1e-9)
    assert float(loss) == pytest.approx(0.173287, abs=1e-6)


def test_focal_covers_padded_steps():
    logits = torch.zeros(1, 4, 3)
    targets = F.one_hot(torch.tensor([[0, 1, 2, 2]]), 3).float()
    changed = targets.clone()
    changed[0, 3] = torch.tensor([0.0, 1.0, 0.0])
    logits[0, 3, 2] = 3.0
    assert float(pen_focal_loss(logits, targets)) != float(pen_focal_loss(logits, changed))


def test_pen_class_alpha_has_unit_mean():
    alpha = pen_class_alpha([90, 5, 5])
    assert float(alpha.mean()) == pytest.approx(1.0, rel=1e-6)
    assert alpha[1] > alpha[0]
    assert float(alpha[1]) == pytest.approx(float(alpha[2]))


# --- KL -----------------------------------------------------------------------

@pytest.mark.parametrize("mu,logvar,expected", [
    (0.0, 0.0, 0.0),
    (1.0, 0.0, 0.5),
    (0.0, math.log(2.0), 0.5 * (2 - 1 - math.log(2))),
])
def test_kl_closed_form(mu, logvar, expected):
    posterior = LatentPosterior(mu=torch.full((1, 1, 1), mu, dtype=torch.float64),
                                logvar=torch.full((1, 1, 1), logvar, dtype=torch.float64))
    assert float(kl_loss(posterior)) == pytest.approx(expected, abs=1e-9)


def test_kl_masks_padded_latents():
    mu = torch.zeros(1, 3, 2)
    mu[0, 2] = 10.0
    posterior = LatentPosterior(mu=mu, logvar=torch.zeros(1, 3, 2))
    assert float(kl_loss(posterior, torch.tensor([[True, True, False]]))) == 0.0
    assert float(kl_loss(posterior)) > 0.0


# --- CTC ----------------------------------------------------------------------

def _collapse(path, blank):
    out, prev = [], None
    for idx in path:
        if idx != prev and idx != blank:
            out.append(idx)
        prev = idx
    return tuple(out)


def _brute_force_ctc(logits):
    """Exact label probabilities by enumerating every alignment path"""
    T, classes = logits.shape
    probs = F.softmax(logits, dim=-1)
    totals = {}
    for path in itertools.product(range(classes), repeat=T):
        label = _collapse(path, classes - 1)
        p = 1.0
        for t, c in enumerate(path):
            p *= float(probs[t, c])
        totals[label] = totals.get(label, 0.0) + p
    return totals


def test_ctc_uniform_three_frames():
    loss = ctc_losses(torch.zeros(1, 3, 3, dtype=torch.float64), [[0, 1]], torch.tensor([3]))
    assert float(loss[0]) == pytest.approx(math.log(27 / 5), abs=1e-9)
    assert float(loss[0]) == pytest.approx(1.686399, abs=1e-6)


def test_ctc_single_forced_path():
    logits = torch.tensor([[[100.0, -100.0]]], dtype=torch.float64)
    assert float(ctc_losses(logits, [[0]], torch.tensor([1]))[0]) == pytest.approx(0.0, abs=1e-9)


def test_ctc_repeat_without_room_for_blank_is_infeasible():
    losses = ctc_losses(torch.zeros(1, 2, 2, dtype=torch.float64), [[0, 0]], torch.tensor([2]))
    assert math.isinf(float(losses[0]))


def test_ctc_drop_infeasible():
    logits = torch.zeros(2, 2, 2, dtype=torch.float64)
    loss = ctc_loss(logits, [[0, 0], [0]], torch.tensor([2, 2]), drop_infeasible=True)
    feasible = ctc_losses(logits[1:], [[0]], torch.tensor([2]))
    assert float(loss) == pytest.approx(float(feasible[0]))
    assert math.isinf(float(ctc_loss(logits, [[0, 0], [0]], torch.tensor([2, 2]))))


@pytest.mark.parametrize("T,K", [(t, k) for t in range(1, 6) for k in range(1, 4)])
def test_ctc_matches_path_enumeration(T, K):
    logits = torch.randn(T, K + 1, generator=torch.Generator().manual_seed(T * 10 + K), dtype=torch.float64)
    oracle = _brute_force_ctc(logits)
    assert () in oracle
    labels = sorted(oracle)
    batch = logits.unsqueeze(0).expand(len(labels), T, K + 1).contiguous()
    losses = ctc_losses(batch, [list(label) for label in labels], torch.full((len(labels),), T))
    for label, loss in zip(labels, losses.tolist()):
        assert loss == pytest.approx(-math.log(oracle[label]), abs=1e-6)


@pytest.mark.parametrize("T,K", [(t, k) for t in range(1, 5) for k in range(1, 3)])
def test_ctc_feasibility_matches_path_enumeration(T, K):
    reachable = set(_brute_force_ctc(torch.zeros(T, K + 1, dtype=torch.float64)))
    labels = [label for n in range(T + 2) for label in itertools.product(range(K), repeat=n)]
    feasible = ctc_feasible([list(label) for label in labels], torch.full((len(labels),), T))
    for label, ok in zip(labels, feasible.tolist()):
        assert ok == (label in reachable), label


def test_ctc_drop_infeasible_keeps_gradients_finite():
    logits = torch.randn(2, 2, 3, generator=torch.Generator().manual_seed(1), dtype=torch.float64,
                         requires_grad=True)
    ctc_loss(logits, [[0, 0, 1], [1]], torch.tensor([2, 2]), drop_infeasible=True).backward()
    assert torch.isfinite(logits.grad).all()
    assert torch.all(logits.grad[0] == 0)


def test_ctc_respects_valid_length():
    logits = torch.randn(1, 6, 3, generator=torch.Generator().manual_seed(4), dtype=torch.float64)
    short = ctc_losses(logits, [[1]], torch.tensor([3]))
    noisy = logits.clone()
    noisy[0, 3:] = 50.0
    assert float(ctc_losses(noisy, [[1]], torch.tensor([3]))[0]) == pytest.approx(float(short[0]), abs=1e-12)


def test_ctc_greedy_decode_collapses_and_drops_blank():
    frames = [0, 0, 2, 0, 1, 1, 2, 2]
    logits = F.one_hot(torch.tensor([frames]), 3).float()
    assert ctc_greedy_decode(logits, torch.tensor([8])) == [[0, 0, 1]]
    assert ctc_greedy_decode(logits, torch.tensor([2])) == [[0]]


# --- style and total -----------------------------------------------------------

def test_style_ce_values():
    assert float(style_ce(torch.zeros(1, 8), torch.tensor([3]))) == pytest.approx(math.log(8), abs=1e-6)
    confident = torch.full((1, 8), -100.0)
    confident[0, 5] = 100.0
    assert float(style_ce(confident, torch.tensor([5]))) == pytest.approx(0.0, abs=1e-9)


def test_total_loss_weighting():
    zero = torch.tensor(0.0)
    one = torch.tensor(1.0)
    assert vae_total_loss(zero, zero, zero, zero, zero, VaeLossWeights()).total == 0.0
    assert vae_total_loss(one, one, zero, zero, zero, VaeLossWeights()).total == pytest.approx(3.0)


def test_zero_weight_removes_term():
    weights = VaeLossWeights(ocr=0.0, sty=0.0)
    report = vae_total_loss(torch.tensor(1.0), torch.tensor(0.5), torch.tensor(0.0),
                            torch.tensor(float("inf")), torch.tensor(float("nan")), weights)
    assert report.finite
    assert report.total == pytest.approx(2.0)
    assert set(report.to_dict()) == {"gmm_nll", "pen_focal", "kl", "ocr_ctc", "style_ce", "total"}


def test_non_finite_total_is_reported():
    report = vae_total_loss(torch.tensor(float("inf")), torch.tensor(0.0), torch.tensor(0.0),
                            torch.tensor(0.0), torch.tensor(0.0), VaeLossWeights())
    assert not report.finite


# --- gradients ----------------------------------------------------------------

SEEDS = range(50)


@pytest.mark.parametrize("seed", SEEDS)
def test_gmm_nll_gradient(seed):
    output, targets = _random_params(seed, batch=1, steps=3, components=2)
    mask = torch.tensor([[1, 1, 0]])
    fn = lambda out: gmm_nll(GmmParams.from_output(out, 2), targets, mask)  # noqa: E731
    assert gradcheck(fn, (output.requires_grad_(True),), eps=1e-5, atol=1e-6, rtol=1e-4)


@pytest.mark.parametrize("seed", SEEDS)
def test_pen_focal_gradient(seed):
    gen = torch.Generator().manual_seed(seed)
    logits = torch.randn(1, 4, 3, generator=gen, dtype=torch.float64, requires_grad=True)
    targets = F.one_hot(torch.randint(0, 3, (1, 4), generator=gen), 3).double()
    alpha = torch.tensor([0.5, 1.5, 1.0], dtype=torch.float64)
    assert gradcheck(lambda x: pen_focal_loss(x, targets, alpha, 2.0), (logits,), eps=1e-5, atol=1e-6, rtol=1e-4)


@pytest.mark.parametrize("seed", SEEDS)
def test_kl_gradient(seed):
    gen = torch.Generator().manual_seed(seed)
    mu = torch.randn(1, 3, 4, generator=gen, dtype=torch.float64, requires_grad=True)
    logvar = torch.randn(1, 3, 4, generator=gen, dtype=torch.float64, requires_grad=True)
    mask = torch.tensor([[True, True, False]])
    assert gradcheck(lambda m, v: kl_loss(LatentPosterior(m, v), mask), (mu, logvar), eps=1e-5, atol=1e-6,
                     rtol=1e-4)


@pytest.mark.parametrize("seed", SEEDS)
def test_ctc_gradient(seed):
    gen = torch.Generator().manual_seed(seed)
    logits = torch.randn(2, 5, 4, generator=gen, dtype=torch.float64, requires_grad=True)
    labels = [[0, 1], [2, 2]]
    assert gradcheck(lambda x: ctc_loss(x, labels, torch.tensor([5, 4])), (logits,), eps=1e-5, atol=1e-6,
                     rtol=1e-4)


# --- point sampling -------------------------------------------------------------

def _two_component_params():
    output = torch.zeros(4, 15)
    output[:, 0] = 2.0                       # component 0 dominates
    output[:, 2] = torch.arange(4.0)         # mu_x of component 0
    output[:, 4] = -torch.arange(4.0)        # mu_y of component 0
    output[:, 12 + 2] = 5.0                  # EndOfChar everywhere
    return GmmParams.from_output(output, 2)


def test_greedy_emits_component_mean():
    traj = sample_trajectory(_two_component_params(), mode="greedy")
    assert traj.xy[:, 0].tolist() == [0.0, 1.0, 2.0, 3.0]
    assert traj.xy[:, 1].tolist() == [0.0, -1.0, -2.0, -3.0]


def test_zero_temperature_sampling_is_greedy():
    params = _two_component_params()
    greedy = sample_trajectory(params, mode="greedy")
    cold = sample_trajectory(params, mode="sample", temperature=1e-9, seed=7)
    assert (cold.xy == greedy.xy).all()
    assert (cold.pen == greedy.pen).all()


def test_sampling_is_seeded():
    params = _two_component_params()
    a = sample_trajectory(params, mode="sample", temperature=1.0, seed=3)
    b = sample_trajectory(params, mode="sample", temperature=1.0, seed=3)
    c = sample_trajectory(params, mode="sample", temperature=1.0, seed=4)
    assert (a.xy == b.xy).all()
    assert not (a.xy == c.xy).all()


def test_sampling_truncates_at_expected_chars():
    traj = sample_trajectory(_two_component_params(), expected_chars=2)
    assert len(traj.xy) == 2
    assert traj.pen.tolist() == [2, 2]


def test_sampling_requires_unbatched_params():
    with pytest.raises(ShapeError):
        sample_trajectory(GmmParams.from_output(torch.zeros(1, 4, 9), 1))
