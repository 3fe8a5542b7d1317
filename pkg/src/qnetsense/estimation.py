"""Shot sampling, maximum-likelihood estimation and the adaptive control loop."""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Protocol, Sequence

import numpy as np
from scipy.optimize import minimize
from scipy.stats import qmc

from .fisher import qfim_overlap
from .protocols import PROB_FLOOR, Strategy
from .qcore import OutcomeDistribution

MAX_ROUNDS = 40
GRAD_TOL = 1e-7
MAX_ITER = 500
FD_STEP = 1e-6
UPDATE_TOL = 1e-4


class DistributionModel(Protocol):
    strategy: Strategy

    @property
    def labels(self) -> tuple[str, ...]: ...

    def probabilities(self, xs, xc=None) -> np.ndarray: ...


@dataclass(frozen=True)
class ShotRecord:
    labels: tuple[str, ...]
    counts: np.ndarray
    n: int
    seed: int | None = None

    def __post_init__(self):
        counts = np.asarray(self.counts, dtype=np.int64)
        if counts.min(initial=0) < 0 or counts.sum() != self.n:
            raise ValueError("counts must be nonnegative and sum to n")
        counts.setflags(write=False)
        object.__setattr__(self, "counts", counts)
        object.__setattr__(self, "labels", tuple(self.labels))

    @property
    def frequencies(self) -> np.ndarray:
        return self.counts / self.n


def sample_shots(dist, n: int, seed: int | np.random.Generator | None = None) -> ShotRecord:
    """Multinomial draw of ``n`` single-shot outcomes."""
    if n < 1:
        raise ValueError("need at least one shot")
    probs = np.asarray(getattr(dist, "probs", dist), dtype=float)
    labels = getattr(dist, "labels", tuple(str(i) for i in range(probs.size)))
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    counts = rng.multinomial(n, probs / probs.sum())
    return ShotRecord(labels, counts, n, seed if isinstance(seed, (int, np.integer)) else None)


def log_likelihood(record: ShotRecord, model: DistributionModel, x, x_c=None) -> float:
    """sum_i f_i ln max(P_i(x, x_c), 1e-12) with empirical frequencies f_i."""
    p = model.probabilities(np.asarray(x, dtype=float), x_c)[0]
    return float(record.frequencies @ np.log(np.maximum(p, PROB_FLOOR)))


# ---------------------------------------------------------------------------
# Bounded multi-start maximization


@dataclass(frozen=True)
class Estimate:
    x_est: np.ndarray
    log_likelihood: float
    converged: bool
    starts_used: int
    iterations: int = 0


def default_bounds(strategy: Strategy) -> np.ndarray:
    """Box for each parameter, shape (p, 2)."""
    per_axis = {
        "B": (1e-6, 2.0),
        "theta": (0.0, math.pi),
        "phi": (-math.pi, math.pi),
        "grad": (-1.0, 1.0),
        "sum": (-4.0, 4.0),
    }
    rows = []
    for axis in strategy.axes:
        key = axis.rstrip("12").split("_")[0]
        rows.append(per_axis[key])
    return np.array(rows, dtype=float)


def local_bounds(center, half_widths, outer=None) -> np.ndarray:
    """Box center +- half_widths, intersected with ``outer`` when given."""
    center = np.asarray(center, dtype=float)
    hw = np.broadcast_to(np.asarray(half_widths, dtype=float), center.shape)
    box = np.stack([center - hw, center + hw], axis=1)
    if outer is not None:
        outer = np.asarray(outer, dtype=float)
        box[:, 0] = np.maximum(box[:, 0], outer[:, 0])
        box[:, 1] = np.minimum(box[:, 1], outer[:, 1])
    return box


def matched_qfim(model, x):
    """Numeric QFIM of the model's state family with the control held at ``x``."""
    x = np.asarray(x, dtype=float)
    return qfim_overlap(lambda y: model.states(y, x)[0], x, labels=model.strategy.axes)


def fisher_scales(model, x) -> np.ndarray:
    """1 / sqrt(F_jj) of the matched-control QFIM: one statistical unit per axis."""
    F = matched_qfim(model, x).entries
    return 1.0 / np.sqrt(np.maximum(np.diag(F), 1e-300))


def offset_control(model, x, kappa: float, direction=None) -> np.ndarray:
    """Control displaced from ``x`` by ``kappa`` statistical units along ``direction``.

    A moderate offset keeps every outcome probability away from zero, which
    keeps reflected likelihood maxima far from the truth.
    """
    x = np.asarray(x, dtype=float)
    d = np.ones_like(x) if direction is None else np.asarray(direction, dtype=float)
    return x + kappa * d * fisher_scales(model, x)


def balanced_control(model, x, kappa: float, candidates: int = 256) -> np.ndarray:
    """Control ``kappa`` statistical units from ``x`` whose rarest live outcome is most likely.

    Directions are deterministic low-discrepancy points on the unit sphere.
    """
    x = np.asarray(x, dtype=float)
    scales = fisher_scales(model, x)
    u = qmc.Halton(d=x.size, scramble=False).random(candidates + 1)[1:] * 2.0 - 1.0
    u /= np.linalg.norm(u, axis=1, keepdims=True)
    cands = x + kappa * u * scales
    probs = np.array([model.probabilities(x, xc)[0] for xc in cands])
    # outcomes that vanish for every candidate are structurally dead
    live = probs.max(axis=0) > 1e-9
    return cands[int(np.argmax(probs[:, live].min(axis=1)))]


def localization_bounds(model, center, width: float, outer=None) -> np.ndarray:
    """Box of +- ``width`` statistical units around ``center``."""
    outer = default_bounds(model.strategy) if outer is None else outer
    return local_bounds(center, width * fisher_scales(model, center), outer)


def hits_bounds(estimates, bounds, rtol: float = 1e-6) -> np.ndarray:
    """Boolean mask of estimates sitting on a face of the box."""
    est = np.atleast_2d(estimates)
    b = np.asarray(bounds, dtype=float)
    tol = rtol * (b[:, 1] - b[:, 0])
    return np.any((est - b[:, 0] <= tol) | (b[:, 1] - est <= tol), axis=1)


class _JointObjective:
    """Sum over rounds of sum_i f_i ln P_i(x, x_c^(m)), evaluated in batches."""

    def __init__(self, model, controls: Sequence, freqs: Sequence[np.ndarray]):
        self.model = model
        self.controls = list(controls)
        self.freqs = np.array(freqs, dtype=float)
        self.multi = hasattr(model, "probabilities_multi") and all(c is not None for c in self.controls)

    def values(self, xs: np.ndarray) -> np.ndarray:
        if self.multi and len(self.controls) > 1:
            p = self.model.probabilities_multi(xs, np.array(self.controls))
            return np.einsum("kmo,mo->k", np.log(np.maximum(p, PROB_FLOOR)), self.freqs)
        total = np.zeros(xs.shape[0])
        for xc, f in zip(self.controls, self.freqs):
            total += np.log(np.maximum(self.model.probabilities(xs, xc), PROB_FLOOR)) @ f
        return total

    def per_round(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)[None, :]
        return np.array(
            [np.log(np.maximum(self.model.probabilities(x, xc)[0], PROB_FLOOR)) @ f for xc, f in zip(self.controls, self.freqs)]
        )

    def value_and_gradient(self, x: np.ndarray, h: float = FD_STEP) -> tuple[float, np.ndarray]:
        p = x.size
        pts = np.vstack([x, x + h * np.eye(p), x - h * np.eye(p)])
        vals = self.values(pts)
        grad = (vals[1 : p + 1] - vals[p + 1 :]) / (2.0 * h)
        return float(vals[0]), grad


def quasi_random_starts(bounds: np.ndarray, count: int, first=None) -> np.ndarray:
    """Deterministic low-discrepancy start points; ``first`` (clipped) leads."""
    bounds = np.asarray(bounds, dtype=float)
    pts = []
    if first is not None:
        pts.append(np.clip(np.asarray(first, dtype=float), bounds[:, 0], bounds[:, 1]))
    extra = count - len(pts)
    if extra > 0:
        unit = qmc.Halton(d=bounds.shape[0], scramble=False).random(extra + 1)[1:]
        pts.extend(qmc.scale(unit, bounds[:, 0], bounds[:, 1]))
    return np.array(pts[:count])


def _maximize(objective: _JointObjective, start: np.ndarray, bounds: np.ndarray):
    res = minimize(
        lambda x: tuple(-v for v in objective.value_and_gradient(x)),
        start,
        jac=True,
        method="L-BFGS-B",
        bounds=[tuple(b) for b in bounds],
        options={"maxiter": MAX_ITER, "gtol": GRAD_TOL, "ftol": 1e-15},
    )
    return res


def maximize_joint(objective: _JointObjective, x_c, starts: int, bounds: np.ndarray) -> Estimate:
    if starts < 1:
        raise ValueError("need at least one start")
    best = None
    any_converged = False
    total_iter = 0
    for s in quasi_random_starts(bounds, starts, first=x_c):
        res = _maximize(objective, s, bounds)
        total_iter += int(res.nit)
        ok = bool(res.success) and np.all(np.isfinite(res.x))
        any_converged |= ok
        if np.isfinite(res.fun) and (best is None or -res.fun > best[1]):
            best = (res.x.copy(), float(-res.fun))
    if best is None:
        return Estimate(np.full(bounds.shape[0], np.nan), float("-inf"), False, starts, total_iter)
    return Estimate(best[0], best[1], any_converged, starts, total_iter)


def mle(record: ShotRecord, model: DistributionModel, x_c=None, starts: int = 10, bounds=None) -> Estimate:
    """Best of ``starts`` bounded quasi-Newton ascents of the log-likelihood.

    The first start is ``x_c`` itself; the others are Halton points in the box.
    """
    bounds = default_bounds(model.strategy) if bounds is None else np.asarray(bounds, dtype=float)
    objective = _JointObjective(model, [x_c], [record.frequencies])
    return maximize_joint(objective, x_c, starts, bounds)


# ---------------------------------------------------------------------------
# Adaptive control updates


@dataclass
class AdaptiveState:
    r_iter: int = MAX_ROUNDS
    history: list = field(default_factory=list)
    estimates: list = field(default_factory=list)
    update_norms: list = field(default_factory=list)
    costs: list = field(default_factory=list)

    def __post_init__(self):
        if not 1 <= self.r_iter <= MAX_ROUNDS:
            raise ValueError(f"round cap must lie in [1, {MAX_ROUNDS}]")

    @property
    def round(self) -> int:
        return len(self.history)

    @property
    def converged(self) -> bool:
        return bool(self.update_norms) and self.update_norms[-1] < UPDATE_TOL


def adaptive_estimate(
    model: DistributionModel,
    truth,
    x_c0,
    n: int = 600,
    r_iter: int = MAX_ROUNDS,
    seed: int = 0,
    starts: int = 10,
    bounds=None,
    simulator: DistributionModel | None = None,
) -> tuple[Estimate, AdaptiveState]:
    """Sample under the current control, re-fit on all rounds, move the control.

    Each fit maximizes the sum of per-round log-likelihoods, which is the log
    of the product of the rounds' likelihoods. The recorded cost is
    (-1)^m times the product of the per-round average log-likelihoods at the
    current estimate.
    """
    state = AdaptiveState(r_iter)
    bounds = default_bounds(model.strategy) if bounds is None else np.asarray(bounds, dtype=float)
    simulator = simulator or model
    rng = np.random.default_rng(seed)
    truth = np.asarray(truth, dtype=float)
    x_c = np.clip(np.asarray(x_c0, dtype=float), bounds[:, 0], bounds[:, 1])
    estimate = None
    for m in range(r_iter):
        dist = simulator.probabilities(truth, x_c)[0]
        record = sample_shots(OutcomeDistribution(model.labels, dist / dist.sum()), n, rng)
        state.history.append((x_c.copy(), record))
        objective = _JointObjective(model, [h[0] for h in state.history], [h[1].frequencies for h in state.history])
        estimate = maximize_joint(objective, x_c, starts, bounds)
        state.costs.append((-1) ** (m + 1) * float(np.prod(objective.per_round(estimate.x_est))))
        update = float(np.linalg.norm(estimate.x_est - x_c))
        state.estimates.append(estimate.x_est.copy())
        state.update_norms.append(update)
        x_c = estimate.x_est.copy()
        if update < UPDATE_TOL:
            break
    return estimate, state


# ---------------------------------------------------------------------------
# Statistics over repeated trials


@dataclass(frozen=True)
class PrecisionStats:
    mean: np.ndarray
    std: np.ndarray
    bias: np.ndarray
    variance_sum: float
    M: int

    def __post_init__(self):
        if self.M < 2:
            raise ValueError("need at least two trials")


def precision_stats(estimates, truth, axes: Sequence[int] | None = None) -> PrecisionStats:
    """Sample mean, unbiased std, bias and variance sum over selected axes."""
    est = np.atleast_2d(np.asarray(estimates, dtype=float))
    truth = np.asarray(truth, dtype=float)
    if est.shape[0] < 2:
        raise ValueError("need at least two trials")
    mean = est.mean(axis=0)
    std = est.std(axis=0, ddof=1)
    idx = list(range(est.shape[1])) if axes is None else list(axes)
    return PrecisionStats(mean, std, mean - truth, float(np.sum(std[idx] ** 2)), est.shape[0])


def gain_db(a: float, b: float) -> float:
    """10 log10(a / b): positive when b is the smaller variance."""
    return 10.0 * math.log10(a / b)


def trial_seed(base: int, index: int) -> int:
    return int(base) ^ int(index)


def _mitigated(freqs: np.ndarray, confusion: np.ndarray) -> np.ndarray:
    raw = np.clip(np.linalg.solve(confusion, freqs), 0.0, None)
    return raw / raw.sum()


def _one_trial(args) -> np.ndarray:
    model, simulator, truth, x_c, n, seed, starts, bounds, confusion = args
    dist = simulator.probabilities(truth, x_c)[0]
    record = sample_shots(OutcomeDistribution(model.labels, dist / dist.sum()), n, seed)
    if confusion is None:
        return mle(record, model, x_c, starts, bounds).x_est
    objective = _JointObjective(model, [x_c], [_mitigated(record.frequencies, confusion)])
    return maximize_joint(objective, x_c, starts, bounds).x_est


def run_trials(
    model: DistributionModel,
    truth,
    x_c,
    n: int,
    M: int,
    seed: int = 0,
    starts: int = 10,
    bounds=None,
    jobs: int = 1,
    simulator: DistributionModel | None = None,
    mitigation: np.ndarray | None = None,
) -> np.ndarray:
    """M independent sample-then-fit trials, returned in trial order, shape (M, p).

    Shots come from ``simulator`` (default: the fitted model). With a
    ``mitigation`` confusion matrix the frequencies are corrected by inversion
    before fitting.
    """
    bounds = default_bounds(model.strategy) if bounds is None else np.asarray(bounds, dtype=float)
    truth = np.asarray(truth, dtype=float)
    x_c = None if x_c is None else np.asarray(x_c, dtype=float)
    simulator = simulator or model
    tasks = [(model, simulator, truth, x_c, n, trial_seed(seed, i), starts, bounds, mitigation) for i in range(M)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return np.array(list(pool.map(_one_trial, tasks, chunksize=max(1, M // (4 * jobs)))))
    return np.array([_one_trial(t) for t in tasks])


# ---------------------------------------------------------------------------
# Gradient estimation with equal resources per strategy


def truth_parameters(strategy: Strategy, f1, f2=None) -> np.ndarray:
    """Parameter vector for module fields ``f1`` and ``f2`` (default: equal fields).

    For RS the vector describes module 1 only; module 2 runs separately.
    """
    from .protocols import parameters_from_fields

    f2 = f1 if f2 is None else f2
    if strategy.family == "RS":
        return parameters_from_fields(strategy, f1)
    return parameters_from_fields(strategy, (f1, f2))


def cartesian_from_estimates(strategy: Strategy, estimates) -> np.ndarray:
    """Per-module Cartesian field estimates, shape (M, modules, components)."""
    from .protocols import qubit_vectors_batch

    vecs = qubit_vectors_batch(strategy, np.atleast_2d(estimates))
    c = strategy.components
    if strategy.family == "RS":
        return vecs[:, :1, :c]
    return vecs[:, [0, 2], :c]


@dataclass(frozen=True)
class GradientTrials:
    """Per-trial gradient estimates and the raw parameter estimates behind them."""

    gradients: np.ndarray
    truth: np.ndarray
    raw: tuple[np.ndarray, ...]

    @property
    def variance_sum(self) -> float:
        return float(np.sum(np.var(self.gradients, axis=0, ddof=1)))

    @property
    def squared_errors(self) -> np.ndarray:
        return np.sum((self.gradients - self.truth) ** 2, axis=1)


def gradient_trials(
    strategy: Strategy,
    f1,
    f2,
    T: float,
    N: int,
    n: int,
    M: int,
    seed: int = 0,
    starts: int = 10,
    offset: float = 1.5,
    window: float = 0.3,
    noise=None,
    jobs: int = 1,
    noise_aware: bool = True,
    mitigate: bool = False,
) -> GradientTrials:
    """Monte-Carlo gradient estimates with two sensors per module for every strategy.

    NLE estimates the gradient directly. LE_bell and LE_opt estimate each
    module's field and subtract. RS runs two sensor-ancilla pairs per module,
    averages them and subtracts the module means. Controls sit ``offset``
    statistical units from the truth and fits are confined to ``window``
    units around it.

    Shots always include ``noise``. With ``noise_aware`` the fit uses the
    noisy model; otherwise the ideal one, optionally after readout mitigation.
    """
    from .fields import EncodingConfig
    from .noise import NoisyProtocolModel
    from .protocols import ProtocolModel

    f2 = f1 if f2 is None else f2
    enc = EncodingConfig(T, N)
    c = strategy.components
    g_true = (f1.cartesian - f2.cartesian)[:c]

    def fit(model, truth, seed_base):
        xc = balanced_control(model, truth, offset)
        bounds = localization_bounds(model, truth, window)
        noisy = model if noise is None or noise.is_noiseless else NoisyProtocolModel(model, noise)
        fitted = noisy if noise_aware else model
        conf = None
        if mitigate and noise is not None:
            conf = noise.confusion_for(len(model.labels[0]))
        return run_trials(fitted, truth, xc, n, M, seed_base, starts, bounds, jobs, simulator=noisy, mitigation=conf)

    if strategy.family == "RS":
        runs = []
        for k, f in enumerate((f1, f1, f2, f2)):
            truth = truth_parameters(strategy, f)
            model = ProtocolModel(strategy, enc)
            # distinct streams for the four pairs
            runs.append(fit(model, truth, seed + k * 0x9E3779B1))
        cart = [cartesian_from_estimates(strategy, r)[:, 0] for r in runs]
        grads = (cart[0] + cart[1]) / 2.0 - (cart[2] + cart[3]) / 2.0
        return GradientTrials(grads, g_true, tuple(runs))

    truth = truth_parameters(strategy, f1, f2)
    guess = truth if strategy.tag == "LE_opt" else None
    model = ProtocolModel(strategy, enc, probe_guess=guess)
    est = fit(model, truth, seed)
    if strategy.family == "NLE":
        grads = est[:, :c]
    else:
        cart = cartesian_from_estimates(strategy, est)
        grads = cart[:, 0] - cart[:, 1]
    return GradientTrials(grads, g_true, (est,))


def readout_mitigation_trials(model, x, x_c, confusion, n: int, M: int, seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Per-trial distribution MSE against the ideal distribution, raw and mitigated.

    ``confusion`` is a per-bit 2x2 matrix, a stack of them, or the full
    C[read, true] matrix over all outcome bits.
    """
    from .noise import _full_confusion

    confusion = _full_confusion(confusion, len(model.labels[0]))
    ideal = model.probabilities(x, x_c)[0]
    noisy = confusion @ ideal
    raw, mit = np.empty(M), np.empty(M)
    for i in range(M):
        f = sample_shots(noisy, n, trial_seed(seed, i)).frequencies
        raw[i] = np.mean((f - ideal) ** 2)
        mit[i] = np.mean((_mitigated(f, confusion) - ideal) ** 2)
    return raw, mit
