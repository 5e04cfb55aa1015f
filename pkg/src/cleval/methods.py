"""Continual-learning update rules built on one gradient decomposition.

Every method applies ``grad = alpha * grad_plasticity + (1 - alpha) *
grad_stability`` where the plasticity term is plain cross-entropy on the new
batch and the stability term is method specific: a replay-batch gradient (ER),
a projection correction (GEM), a distillation gradient against a frozen
teacher (LwF), or a quadratic parameter penalty (EWC). Each step also reports
a probe with both partial losses and gradient norms.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .nn import (
    Batch,
    Gradient,
    ModelState,
    OptimizerState,
    _forward_cached,
    distill_loss_and_grad,
    loss_and_grad,
    sgd_step,
    softmax,
)
from .streams import Dataset, TaskSpec, TaskStream

__all__ = [
    "StepProbe",
    "ReplayBuffer",
    "reservoir_update",
    "GemMemory",
    "GemSolverError",
    "LwfState",
    "EwcState",
    "finetune_step",
    "er_step",
    "gem_project",
    "gem_step",
    "lwf_step",
    "ewc_step",
    "ewc_penalty",
    "fisher_estimate",
    "probe_gradients",
    "MethodConfig",
    "build_method",
    "METHOD_NAMES",
]

METHOD_NAMES = ("finetune", "er", "gem", "lwf", "ewc")


@dataclass(frozen=True)
class StepProbe:
    """Partial losses and gradient L2-norms for one training step."""

    loss_plasticity: float
    loss_stability: float
    norm_grad_plasticity: float
    norm_grad_stability: float

    def __post_init__(self) -> None:
        vals = (
            self.loss_plasticity,
            self.loss_stability,
            self.norm_grad_plasticity,
            self.norm_grad_stability,
        )
        if not all(np.isfinite(v) and v >= 0.0 for v in vals):
            raise ValueError(f"probe values must be finite and >= 0, got {vals}")


def _check_alpha(alpha: float) -> None:
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must be in [0, 1], got {alpha}")


# ---------------------------------------------------------------------------
# finetune


def finetune_step(
    model: ModelState, opt: OptimizerState, batch: Batch
) -> tuple[ModelState, OptimizerState, StepProbe]:
    """One plain SGD step on the new batch; the stability term is zero."""
    loss, grad = loss_and_grad(model, batch)
    model, opt = sgd_step(model, opt, grad)
    return model, opt, StepProbe(loss, 0.0, grad.norm(), 0.0)


# ---------------------------------------------------------------------------
# experience replay


class ReplayBuffer:
    """Class-based reservoir: per-class slots of capacity_total / #classes-seen.

    Every sample of a class has retention probability capacity/seen within its
    slot. When a new class appears, per-class capacities shrink and over-full
    slots evict uniformly at random.
    """

    def __init__(self, capacity_total: int) -> None:
        if capacity_total < 1:
            raise ValueError(f"capacity_total must be >= 1, got {capacity_total}")
        self.capacity_total = capacity_total
        self._slots: dict[int, list[tuple[np.ndarray, int]]] = {}
        self._seen: dict[int, int] = {}

    @property
    def capacity_per_class(self) -> int:
        if not self._slots:
            return self.capacity_total
        return max(1, self.capacity_total // len(self._slots))

    def __len__(self) -> int:
        return sum(len(s) for s in self._slots.values())

    def seen_count(self, cls: int) -> int:
        return self._seen.get(cls, 0)

    def stored_count(self, cls: int) -> int:
        return len(self._slots.get(cls, ()))

    def classes(self) -> list[int]:
        return list(self._slots)

    def add(self, x: np.ndarray, y: int, rng: np.random.Generator) -> None:
        y = int(y)
        if y not in self._slots:
            self._slots[y] = []
            self._seen[y] = 0
            cap = self.capacity_per_class
            for slot in self._slots.values():
                while len(slot) > cap:
                    slot.pop(int(rng.integers(0, len(slot))))
        self._seen[y] += 1
        slot = self._slots[y]
        cap = self.capacity_per_class
        if len(slot) < cap:
            slot.append((np.asarray(x, dtype=np.float64).copy(), y))
        else:
            j = int(rng.integers(0, self._seen[y]))
            if j < cap:
                slot[j] = (np.asarray(x, dtype=np.float64).copy(), y)

    def sample(self, n: int, rng: np.random.Generator) -> Batch:
        """Uniform draw over all stored samples (without replacement if possible)."""
        stored = [item for slot in self._slots.values() for item in slot]
        if not stored:
            raise ValueError("cannot sample from an empty buffer")
        idx = rng.choice(len(stored), size=n, replace=n > len(stored))
        xs = np.stack([stored[i][0] for i in idx])
        ys = np.array([stored[i][1] for i in idx])
        return Batch(xs, ys)


def reservoir_update(buffer: ReplayBuffer, sample: np.ndarray, cls: int, rng: np.random.Generator) -> ReplayBuffer:
    buffer.add(sample, cls, rng)
    return buffer


def er_step(
    model: ModelState,
    opt: OptimizerState,
    new_batch: Batch,
    buffer: ReplayBuffer,
    alpha: float,
    rng: np.random.Generator,
) -> tuple[ModelState, OptimizerState, StepProbe]:
    """Replay step: alpha-weighted new-batch and memory-batch gradients.

    With an empty buffer (first task) this is exactly a finetune step.
    """
    _check_alpha(alpha)
    if len(buffer) == 0:
        return finetune_step(model, opt, new_batch)
    loss_new, g_new = loss_and_grad(model, new_batch)
    mem_batch = buffer.sample(len(new_batch), rng)
    loss_mem, g_mem = loss_and_grad(model, mem_batch)
    combined = Gradient(alpha * g_new.values + (1.0 - alpha) * g_mem.values)
    model, opt = sgd_step(model, opt, combined)
    return model, opt, StepProbe(loss_new, loss_mem, g_new.norm(), g_mem.norm())


# ---------------------------------------------------------------------------
# GEM


class GemSolverError(RuntimeError):
    """Dual QP did not reach the residual tolerance."""

    def __init__(self, residual: float, max_iter: int) -> None:
        super().__init__(f"dual solver residual {residual:.3e} after {max_iter} iterations")
        self.residual = residual


@dataclass
class GemMemory:
    """Equally sized per-task buffers plus the projection margin."""

    margin: float = 0.5
    per_task: list[Batch] = field(default_factory=list)

    def __post_init__(self) -> None:
        if self.margin < 0:
            raise ValueError(f"margin must be >= 0, got {self.margin}")

    def add_task_buffer(self, batch: Batch) -> None:
        self.per_task.append(batch)


def gem_project(
    g_t: Gradient,
    task_grads: list[Gradient],
    margin: float = 0.0,
    tol: float = 1e-8,
    max_iter: int = 10_000,
    solver_tol: float = 1e-10,
) -> tuple[Gradient, Gradient]:
    """Project g_t onto {g : <g, g_n> >= 0 for all n}, returning (g~, g~ - g_t).

    If no constraint is violated the input passes through untouched and the
    correction is exactly zero. Otherwise the dual QP
    ``min 0.5 v^T P v + q^T v`` with ``P = G G^T`` and ``q = G g_t`` is solved
    by accelerated projected gradient descent (step 1/trace(P), adaptive
    restart) with the margin as a lower bound on the dual variables, and
    ``g~ = g_t + G^T v``. The lower bound is how the margin enters the
    reconstruction; at margin 0 it coincides with plain non-negativity.

    The constraint slacks on g~ equal ``P v + q``, so convergence is judged in
    the cheap dual space with a KKT residual: slacks non-negative, and zero
    where the bound is inactive. Acceleration matters because near-parallel
    task gradients make P badly conditioned. If after max_iter the returned
    g~ would violate a constraint by more than ``tol`` (scaled by the
    constraint and output norms), the solver raises instead of returning.
    """
    if margin < 0:
        raise ValueError(f"margin must be >= 0, got {margin}")
    if not task_grads:
        return Gradient(g_t.values.copy()), Gradient(np.zeros_like(g_t.values))
    g = g_t.values
    G = np.stack([tg.values for tg in task_grads])
    if G.shape[1] != g.shape[0]:
        raise ValueError(f"constraint gradients of length {G.shape[1]} vs g_t {g.shape[0]}")
    dots = G @ g
    if (dots >= 0.0).all():
        return Gradient(g.copy()), Gradient(np.zeros_like(g))
    P = G @ G.T
    q = dots
    lipschitz = float(np.trace(P))  # >= largest eigenvalue of PSD P
    step = 1.0 / lipschitz
    scale = max(1.0, float(np.abs(q).max()))

    def kkt_residual(vec: np.ndarray) -> float:
        slack = P @ vec + q
        infeas = max(0.0, float(-slack.min()))
        free = vec > margin  # clipping makes bound hits exact
        stationarity = float(np.abs(slack[free]).max()) if free.any() else 0.0
        return max(infeas, stationarity)

    v = np.full(len(task_grads), margin)
    y = v.copy()
    theta = 1.0
    fval = np.inf
    for it in range(max_iter):
        v_new = np.maximum(y - step * (P @ y + q), margin)
        fval_new = float(0.5 * v_new @ P @ v_new + q @ v_new)
        if fval_new > fval:  # restart the momentum when the objective rises
            theta = 1.0
            y = v_new.copy()
        else:
            theta_new = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * theta * theta))
            y = v_new + ((theta - 1.0) / theta_new) * (v_new - v)
            theta = theta_new
        v = v_new
        fval = fval_new
        if it % 10 == 0 and kkt_residual(v) <= solver_tol * scale:
            break
    g_proj = g + G.T @ v
    slack = G @ g_proj
    feas_scale = max(
        1.0, float(np.linalg.norm(G, axis=1).max()) * float(np.linalg.norm(g_proj))
    )
    worst = float(slack.min())
    if worst < -tol * feas_scale:
        raise GemSolverError(-worst, max_iter)
    return Gradient(g_proj), Gradient(g_proj - g)


def gem_step(
    model: ModelState,
    opt: OptimizerState,
    new_batch: Batch,
    mem: GemMemory,
    tol: float = 1e-8,
) -> tuple[ModelState, OptimizerState, StepProbe]:
    """Step with the new-batch gradient projected against per-task constraints."""
    if not mem.per_task:
        return finetune_step(model, opt, new_batch)
    loss_new, g_t = loss_and_grad(model, new_batch)
    task_grads = []
    mem_losses = []
    for buf in mem.per_task:
        loss_b, g_b = loss_and_grad(model, buf)
        task_grads.append(g_b)
        mem_losses.append(loss_b)
    g_proj, g_stab = gem_project(g_t, task_grads, mem.margin, tol)
    model, opt = sgd_step(model, opt, g_proj)
    probe = StepProbe(loss_new, float(np.mean(mem_losses)), g_t.norm(), g_stab.norm())
    return model, opt, probe


# ---------------------------------------------------------------------------
# LwF


@dataclass
class LwfState:
    """Frozen previous-task model used as the distillation teacher."""

    temperature: float = 2.0
    teacher: ModelState | None = None

    def __post_init__(self) -> None:
        if self.temperature <= 0:
            raise ValueError(f"temperature must be > 0, got {self.temperature}")


def lwf_step(
    model: ModelState,
    opt: OptimizerState,
    new_batch: Batch,
    lwf: LwfState,
    alpha: float,
) -> tuple[ModelState, OptimizerState, StepProbe]:
    """Cross-entropy plus distillation against the frozen teacher on the same inputs."""
    _check_alpha(alpha)
    if lwf.teacher is None:
        return finetune_step(model, opt, new_batch)
    loss_new, g_new = loss_and_grad(model, new_batch)
    loss_dist, g_dist = distill_loss_and_grad(model, lwf.teacher, new_batch.inputs, lwf.temperature)
    combined = Gradient(alpha * g_new.values + (1.0 - alpha) * g_dist.values)
    model, opt = sgd_step(model, opt, combined)
    return model, opt, StepProbe(loss_new, loss_dist, g_new.norm(), g_dist.norm())


# ---------------------------------------------------------------------------
# EWC


@dataclass
class EwcState:
    """Anchor parameters and accumulated diagonal Fisher weights."""

    lam: float = 1.0
    anchor: np.ndarray | None = None
    fisher: np.ndarray | None = None

    def __post_init__(self) -> None:
        if self.lam < 0:
            raise ValueError(f"lambda must be >= 0, got {self.lam}")


def ewc_penalty(params: np.ndarray, ewc: EwcState) -> tuple[float, np.ndarray]:
    """lam * sum(fisher * (params - anchor)^2) and its gradient."""
    if ewc.anchor is None or ewc.fisher is None:
        raise ValueError("EWC anchor/fisher not set; no boundary passed yet")
    d = params - ewc.anchor
    loss = float(ewc.lam * np.sum(ewc.fisher * d * d))
    grad = 2.0 * ewc.lam * ewc.fisher * d
    return loss, grad


def ewc_step(
    model: ModelState,
    opt: OptimizerState,
    new_batch: Batch,
    ewc: EwcState,
    alpha: float,
) -> tuple[ModelState, OptimizerState, StepProbe]:
    """Cross-entropy plus the quadratic parameter penalty around the anchor."""
    _check_alpha(alpha)
    if ewc.anchor is None:
        return finetune_step(model, opt, new_batch)
    loss_new, g_new = loss_and_grad(model, new_batch)
    pen, g_pen = ewc_penalty(model.params, ewc)
    combined = Gradient(alpha * g_new.values + (1.0 - alpha) * g_pen)
    model, opt = sgd_step(model, opt, combined)
    probe = StepProbe(loss_new, pen, g_new.norm(), float(np.linalg.norm(g_pen)))
    return model, opt, probe


def fisher_estimate(
    model: ModelState, data: Dataset, n_samples: int, rng: np.random.Generator
) -> np.ndarray:
    """Diagonal empirical Fisher with labels sampled from the model's softmax.

    Per-sample weight gradients are outer products a_i * dz_j, so the mean of
    their squares is computed exactly from the squared factors without ever
    materializing per-sample gradients.
    """
    if n_samples < 1:
        raise ValueError(f"n_samples must be >= 1, got {n_samples}")
    if n_samples <= len(data):
        idx = rng.choice(len(data), size=n_samples, replace=False)
    else:
        idx = rng.integers(0, len(data), size=n_samples)
    inputs = data.inputs[idx]
    logits, acts, zs = _forward_cached(model, inputs)
    probs = softmax(logits)
    u = rng.random((n_samples, 1))
    sampled = (probs.cumsum(axis=1) < u).sum(axis=1)
    sampled = np.minimum(sampled, model.out_dim - 1)
    delta = probs
    delta[np.arange(n_samples), sampled] -= 1.0

    layers = model.layers()
    fisher = np.empty_like(model.params)
    off = model.params.shape[0]
    for i in range(len(layers) - 1, -1, -1):
        w, _, s = layers[i]
        fw = (acts[i] ** 2).T @ (delta**2) / n_samples
        fb = (delta**2).mean(axis=0)
        off -= s.out_dim
        fisher[off : off + s.out_dim] = fb
        off -= s.in_dim * s.out_dim
        fisher[off : off + s.in_dim * s.out_dim] = fw.ravel()
        if i > 0:
            da = delta @ w.T
            delta = da * (zs[i - 1] > 0.0) if layers[i - 1][2].activation == "relu" else da
    return fisher


# ---------------------------------------------------------------------------
# probe logging


def probe_gradients(method: str, probes):
    """Rows (t, method, loss_p, loss_s, norm_p, norm_s), one per training step."""
    for t, probe in probes:
        yield (
            t,
            method,
            probe.loss_plasticity,
            probe.loss_stability,
            probe.norm_grad_plasticity,
            probe.norm_grad_stability,
        )


# ---------------------------------------------------------------------------
# method drivers for the training loop


@dataclass(frozen=True)
class MethodConfig:
    name: str = "finetune"
    alpha: float = 0.5
    buffer_capacity: int = 1000
    gem_margin: float = 0.5
    lwf_temperature: float = 2.0
    ewc_lambda: float = 1.0
    fisher_samples: int = 1024

    def __post_init__(self) -> None:
        if self.name not in METHOD_NAMES:
            raise ValueError(f"unknown method {self.name!r}")
        _check_alpha(self.alpha)


class Finetune:
    name = "finetune"

    def step(self, model, opt, batch, rng):
        return finetune_step(model, opt, batch)

    def on_boundary(self, model, task: TaskSpec, rng) -> None:
        pass


class ExperienceReplay:
    name = "er"

    def __init__(self, alpha: float, capacity: int) -> None:
        _check_alpha(alpha)
        self.alpha = alpha
        self.buffer = ReplayBuffer(capacity)

    def step(self, model, opt, batch, rng):
        return er_step(model, opt, batch, self.buffer, self.alpha, rng)

    def on_boundary(self, model, task: TaskSpec, rng) -> None:
        # completed task's samples become visible to replay from the next task on
        for x, y in zip(task.train.inputs, task.train.labels):
            self.buffer.add(x, int(y), rng)


class Gem:
    name = "gem"

    def __init__(self, margin: float, capacity: int, n_tasks: int) -> None:
        self.memory = GemMemory(margin=margin)
        self.per_task_size = max(1, capacity // n_tasks)

    def step(self, model, opt, batch, rng):
        return gem_step(model, opt, batch, self.memory)

    def on_boundary(self, model, task: TaskSpec, rng) -> None:
        n = min(self.per_task_size, len(task.train))
        idx = rng.choice(len(task.train), size=n, replace=False)
        self.memory.add_task_buffer(Batch(task.train.inputs[idx], task.train.labels[idx]))


class Lwf:
    name = "lwf"

    def __init__(self, alpha: float, temperature: float) -> None:
        _check_alpha(alpha)
        self.alpha = alpha
        self.state = LwfState(temperature=temperature)

    def step(self, model, opt, batch, rng):
        return lwf_step(model, opt, batch, self.state, self.alpha)

    def on_boundary(self, model, task: TaskSpec, rng) -> None:
        self.state.teacher = model.clone()


class Ewc:
    name = "ewc"

    def __init__(self, alpha: float, lam: float, fisher_samples: int) -> None:
        _check_alpha(alpha)
        self.alpha = alpha
        self.fisher_samples = fisher_samples
        self.state = EwcState(lam=lam)

    def step(self, model, opt, batch, rng):
        return ewc_step(model, opt, batch, self.state, self.alpha)

    def on_boundary(self, model, task: TaskSpec, rng) -> None:
        new_fisher = fisher_estimate(model, task.train, self.fisher_samples, rng)
        if self.state.fisher is None:
            self.state.fisher = new_fisher
        else:
            self.state.fisher = self.state.fisher + new_fisher
        self.state.anchor = model.params.copy()


def build_method(cfg: MethodConfig, stream: TaskStream):
    if cfg.name == "finetune":
        return Finetune()
    if cfg.name == "er":
        return ExperienceReplay(cfg.alpha, cfg.buffer_capacity)
    if cfg.name == "gem":
        return Gem(cfg.gem_margin, cfg.buffer_capacity, len(stream.tasks))
    if cfg.name == "lwf":
        return Lwf(cfg.alpha, cfg.lwf_temperature)
    if cfg.name == "ewc":
        return Ewc(cfg.alpha, cfg.ewc_lambda, cfg.fisher_samples)
    raise ValueError(f"unknown method {cfg.name!r}")
