"""Episodic task sampling and the bi-level (inner/outer) optimizer.

The inner loop adapts a functional copy of the parameters on a task's
support set; the outer loop updates the real parameters from the adapted
copies' query losses. In second-order mode the inner gradient computation
stays on the tape, so the outer gradient differentiates through the
adaptation; first-order mode detaches the inner gradients, which makes the
outer gradient the query gradient evaluated at the adapted point.

The loss is pluggable: ``loss_fn(params, x, y) -> scalar Tensor``. The
harness wires in the classification-plus-alignment objective; tests use
closed-form toy losses.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import tensor as T
from .errors import CapacityError, ContractError, NumericError

LossFn = Callable[[T.ParamSet, np.ndarray, np.ndarray], T.Tensor]


@dataclass
class EpisodeTask:
    """Support/query split for one episode, with remapped labels."""

    support_x: np.ndarray
    support_y: np.ndarray
    query_x: np.ndarray
    query_y: np.ndarray
    class_map: dict[int, int] = field(default_factory=dict)  # original -> episode


@dataclass
class MetaConfig:
    inner_lr: float = 0.01
    outer_lr: float = 0.001
    inner_steps: int = 1
    order: str = "first"  # "first" | "second"
    tasks_per_batch: int = 4
    n_way: int = 3
    k_shot: int = 5
    n_query: int = 15
    inner_lr_overrides: dict[str, float] = field(default_factory=dict)
    outer_lr_overrides: dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if self.inner_lr < 0 or self.outer_lr < 0:
            raise ContractError("learning rates must be >= 0")
        if self.inner_steps < 1 or self.tasks_per_batch < 1:
            raise ContractError("inner_steps and tasks_per_batch must be >= 1")
        if self.order not in ("first", "second"):
            raise ContractError(f"unknown order {self.order!r}")
        if self.n_way < 2 or self.k_shot < 1 or self.n_query < 1:
            raise ContractError("episodes need n_way >= 2, k_shot >= 1, q >= 1")

    def _lr(self, name: str, base: float, overrides: dict[str, float]) -> float:
        best = ""
        lr = base
        for prefix, value in overrides.items():
            if name.startswith(prefix) and len(prefix) >= len(best):
                best = prefix
                lr = value
        return lr

    def inner_rate(self, name: str) -> float:
        return self._lr(name, self.inner_lr, self.inner_lr_overrides)

    def outer_rate(self, name: str) -> float:
        return self._lr(name, self.outer_lr, self.outer_lr_overrides)


# ---------------------------------------------------------------------------
# task sampling


def sample_tasks(dataset, n_way: int, k_shot: int, n_query: int, count: int, seed):
    """Draw ``count`` episodes from a labeled window dataset.

    Classes are drawn without replacement within a task; support and query
    items are disjoint. Deterministic for a given seed.
    """
    labels = np.asarray(dataset.labels)
    classes = sorted(int(c) for c in np.unique(labels) if c >= 0)
    if len(classes) < n_way:
        raise CapacityError(
            f"dataset has {len(classes)} labeled classes, task needs {n_way}"
        )
    per_class = {c: np.flatnonzero(labels == c) for c in classes}
    need = k_shot + n_query
    for c, idx in per_class.items():
        if idx.size < need:
            raise CapacityError(
                f"class {c} has {idx.size} samples, episodes need {need}"
            )
    rng = np.random.default_rng(seed)
    tasks = []
    for _ in range(count):
        chosen = rng.choice(np.asarray(classes), size=n_way, replace=False)
        sup_x, sup_y, qry_x, qry_y = [], [], [], []
        class_map = {}
        for episode_label, c in enumerate(int(c) for c in chosen):
            class_map[c] = episode_label
            picked = rng.choice(per_class[c], size=need, replace=False)
            sup_x.append(dataset.windows[picked[:k_shot]])
            qry_x.append(dataset.windows[picked[k_shot:]])
            sup_y.append(np.full(k_shot, episode_label))
            qry_y.append(np.full(n_query, episode_label))
        tasks.append(
            EpisodeTask(
                support_x=np.concatenate(sup_x),
                support_y=np.concatenate(sup_y),
                query_x=np.concatenate(qry_x),
                query_y=np.concatenate(qry_y),
                class_map=class_map,
            )
        )
    return tasks


# ---------------------------------------------------------------------------
# bi-level updates


def _check_finite(loss: T.Tensor, params: T.ParamSet) -> None:
    if np.all(np.isfinite(loss.data)):
        return
    for name, p in params.items():
        if not np.all(np.isfinite(p.data)):
            raise NumericError(f"non-finite loss; parameter {name!r} is non-finite")
    raise NumericError("loss is non-finite (parameters are finite)")


def inner_adapt(
    params: T.ParamSet,
    support: tuple[np.ndarray, np.ndarray],
    cfg: MetaConfig,
    loss_fn: LossFn,
) -> T.ParamSet:
    """Adapted copy theta' = theta - lr * grad, repeated ``inner_steps`` times.

    Never mutates ``params``; the returned set shares untouched tensors. In
    second-order mode the adapted tensors stay on the tape.
    """
    x, y = support
    if len(x) == 0:
        raise ContractError("support set is empty")
    create_graph = cfg.order == "second"
    adapted = params
    names = params.names()
    for _ in range(cfg.inner_steps):
        loss = loss_fn(adapted, x, y)
        _check_finite(loss, adapted)
        grads = T.grad(
            loss, [adapted[n] for n in names], create_graph=create_graph, allow_unused=True
        )
        updates = {}
        for name, g in zip(names, grads):
            if g is None:
                continue
            if not create_graph:
                g = g.detach()
            updates[name] = T.sub(adapted[name], T.scale(g, cfg.inner_rate(name)))
        adapted = adapted.replace(updates)
    return adapted


def outer_update(
    params: T.ParamSet,
    tasks: list[EpisodeTask],
    cfg: MetaConfig,
    loss_fn: LossFn,
    count_correct: Callable[[T.ParamSet, np.ndarray, np.ndarray], int] | None = None,
) -> dict:
    """One meta step: theta <- theta - beta * grad(sum of query losses).

    Inner adaptations run per task against the frozen ``params``; their query
    gradients are reduced in task order before the single write. Returns the
    summed query loss (and query accuracy when ``count_correct`` is given).
    """
    if not tasks:
        raise ContractError("outer update needs at least one task")
    total = None
    correct = 0
    n_query = 0
    for task in tasks:
        adapted = inner_adapt(params, (task.support_x, task.support_y), cfg, loss_fn)
        qloss = loss_fn(adapted, task.query_x, task.query_y)
        _check_finite(qloss, adapted)
        total = qloss if total is None else T.add(total, qloss)
        if count_correct is not None:
            correct += count_correct(adapted, task.query_x, task.query_y)
            n_query += len(task.query_y)
    names = params.names()
    grads = T.grad(total, [params[n] for n in names], allow_unused=True)
    for name, g in zip(names, grads):
        if g is None:
            continue
        params[name].data -= cfg.outer_rate(name) * g.data
    out = {"query_loss": total.item(), "query_accuracy": None}
    if count_correct is not None and n_query:
        out["query_accuracy"] = correct / n_query
    return out


def meta_train(
    dataset,
    params: T.ParamSet,
    cfg: MetaConfig,
    iterations: int,
    loss_fn: LossFn,
    seed: int = 0,
    count_correct: Callable[[T.ParamSet, np.ndarray, np.ndarray], int] | None = None,
) -> list[dict]:
    """Run the episodic loop; ``params`` is updated in place.

    Returns one history entry per iteration with the summed query loss and,
    when ``count_correct`` is given, the query accuracy across the batch
    (measured on the adapted copies just before the outer write).
    """
    history = []
    for it in range(iterations):
        tasks = sample_tasks(
            dataset,
            cfg.n_way,
            cfg.k_shot,
            cfg.n_query,
            cfg.tasks_per_batch,
            seed=np.random.SeedSequence([seed, it]),
        )
        entry = outer_update(params, tasks, cfg, loss_fn, count_correct)
        entry["iteration"] = it
        history.append(entry)
    return history
