"""Block-structured nonlinear least squares with Levenberg-Marquardt.

Cost convention: ``0.5 * sum(r**2)`` over all residual blocks.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import SingularSystem

log = logging.getLogger(__name__)

ResidualFn = Callable[..., np.ndarray]
JacobianFn = Callable[..., Sequence[np.ndarray]]


@dataclass
class ParameterBlock:
    name: str
    value: np.ndarray
    frozen: bool = False

    @property
    def size(self) -> int:
        return len(self.value)


@dataclass
class ResidualBlock:
    blocks: tuple[str, ...]
    fn: ResidualFn
    jac: JacobianFn | None = None
    kind: str = ""


@dataclass
class SolverConfig:
    param_tol: float = 5e-8
    cost_tol: float = 1e-6
    max_iterations: int = 20
    initial_damping: float = 1e-4
    damping_up: float = 10.0
    damping_down: float = 0.5
    max_damping: float = 1e12

    def __post_init__(self):
        if self.param_tol <= 0 or self.cost_tol <= 0:
            raise ValueError("tolerances must be positive")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")


@dataclass
class SolveReport:
    initial_cost: float
    final_cost: float
    iterations: int
    termination: str
    trace: list[float] = field(default_factory=list)

    def to_json(self) -> dict:
        return {
            "initial_cost": self.initial_cost,
            "final_cost": self.final_cost,
            "iterations": self.iterations,
            "termination": self.termination,
            "trace": list(self.trace),
        }


def numeric_jacobian(fn: ResidualFn, values: list[np.ndarray], k: int, step: float | None = None) -> np.ndarray:
    """Central differences of ``fn`` w.r.t. argument ``k``."""
    x = values[k]
    cols = []
    for i in range(len(x)):
        h = step if step is not None else 1e-7 * (1.0 + abs(x[i]))
        xp = x.copy()
        xm = x.copy()
        xp[i] += h
        xm[i] -= h
        vp = list(values)
        vm = list(values)
        vp[k] = xp
        vm[k] = xm
        cols.append((np.asarray(fn(*vp), float) - np.asarray(fn(*vm), float)) / (2 * h))
    return np.column_stack(cols) if cols else np.zeros((0, 0))


class ResidualProblem:
    def __init__(self):
        self.params: dict[str, ParameterBlock] = {}
        self.residuals: list[ResidualBlock] = []

    def add_parameter(self, name: str, value, frozen: bool = False) -> None:
        if name in self.params:
            raise ValueError(f"duplicate parameter block {name!r}")
        self.params[name] = ParameterBlock(name, np.array(value, dtype=float).reshape(-1), frozen)

    def set_frozen(self, name: str, frozen: bool = True) -> None:
        self.params[name].frozen = frozen

    def add_residual(self, blocks, fn: ResidualFn, jac: JacobianFn | None = None, kind: str = "") -> None:
        blocks = tuple(blocks)
        for b in blocks:
            if b not in self.params:
                raise KeyError(f"residual references unknown block {b!r}")
        self.residuals.append(ResidualBlock(blocks, fn, jac, kind))

    def value(self, name: str) -> np.ndarray:
        return self.params[name].value.copy()

    def _args(self, rb: ResidualBlock) -> list[np.ndarray]:
        return [self.params[b].value for b in rb.blocks]

    def evaluate(self, rb: ResidualBlock) -> np.ndarray:
        return np.asarray(rb.fn(*self._args(rb)), dtype=float).reshape(-1)

    def block_jacobians(self, rb: ResidualBlock) -> list[np.ndarray]:
        args = self._args(rb)
        if rb.jac is not None:
            return [np.asarray(j, dtype=float).reshape(-1, len(a)) for j, a in zip(rb.jac(*args), args)]
        return [numeric_jacobian(rb.fn, args, k) for k in range(len(args))]

    def cost(self, kind: str | None = None) -> float:
        total = 0.0
        for rb in self.residuals:
            if kind is None or rb.kind == kind:
                r = self.evaluate(rb)
                total += 0.5 * float(r @ r)
        return total

    def free_blocks(self) -> list[ParameterBlock]:
        return [p for p in self.params.values() if not p.frozen]

    def _layout(self):
        offsets = {}
        n = 0
        for p in self.free_blocks():
            offsets[p.name] = n
            n += p.size
        return offsets, n

    def _residual_and_jacobian(self, offsets, n):
        rs, js = [], []
        for rb in self.residuals:
            r = self.evaluate(rb)
            jac = np.zeros((len(r), n))
            if any(b in offsets for b in rb.blocks):
                for b, jb in zip(rb.blocks, self.block_jacobians(rb)):
                    if b in offsets:
                        jac[:, offsets[b]:offsets[b] + jb.shape[1]] += jb
            rs.append(r)
            js.append(jac)
        if not rs:
            return np.zeros(0), np.zeros((0, n))
        return np.concatenate(rs), np.vstack(js)

    def _get_x(self, offsets) -> np.ndarray:
        return np.concatenate([self.params[b].value for b in offsets]) if offsets else np.zeros(0)

    def _set_x(self, offsets, x) -> None:
        for b, o in offsets.items():
            p = self.params[b]
            p.value = x[o:o + p.size].copy()


def solve(problem: ResidualProblem, config: SolverConfig | None = None) -> SolveReport:
    """Minimize the problem in place; parameters hold the best accepted point."""
    cfg = config or SolverConfig()
    offsets, n = problem._layout()
    cost = problem.cost()
    trace = [cost]
    if n == 0:
        return SolveReport(cost, cost, 0, "param_tol", trace)
    x = problem._get_x(offsets)
    mu = cfg.initial_damping
    reason = "max_iter"
    it = 0
    need_jac = True
    r = jac = None
    while it < cfg.max_iterations:
        if cost <= 1e-30:
            reason = "cost_tol"
            break
        if need_jac:
            r, jac = problem._residual_and_jacobian(offsets, n)
            a = jac.T @ jac
            g = jac.T @ r
            diag = np.diag(a).copy()
            floor = 1e-12 * max(float(diag.max()), 1e-300)
            diag = np.maximum(diag, floor)
            need_jac = False
        it += 1
        step = None
        for _ in range(11):
            try:
                chol = np.linalg.cholesky(a + mu * np.diag(diag))
                cand = -np.linalg.solve(chol.T, np.linalg.solve(chol, g))
                if not np.all(np.isfinite(cand)):
                    raise np.linalg.LinAlgError
                step = cand
                break
            except np.linalg.LinAlgError:
                mu *= 2.0
        if step is None:
            problem._set_x(offsets, x)
            raise SingularSystem("damped normal matrix not positive definite")
        x_new = x + step
        problem._set_x(offsets, x_new)
        new_cost = problem.cost()
        if np.isfinite(new_cost) and new_cost < cost:
            rel = (cost - new_cost) / cost
            x, cost = x_new, new_cost
            trace.append(cost)
            mu = max(mu * cfg.damping_down, 1e-300)
            need_jac = True
            if np.abs(step).max() < cfg.param_tol:
                reason = "param_tol"
                break
            if rel < cfg.cost_tol:
                reason = "cost_tol"
                break
        else:
            problem._set_x(offsets, x)
            mu *= cfg.damping_up
            if mu > cfg.max_damping or np.abs(step).max() < 1e-15:
                reason = "stalled"
                break
    problem._set_x(offsets, x)
    log.debug("LM %s after %d iterations, cost %.3e -> %.3e", reason, it, trace[0], cost)
    return SolveReport(trace[0], cost, it, reason, trace)


def check_jacobian(problem: ResidualProblem, block: str, eps: float = 1e-6) -> float:
    """Largest |analytic - central difference| over residuals touching ``block``."""
    if block not in problem.params:
        raise KeyError(block)
    worst = 0.0
    for rb in problem.residuals:
        if block not in rb.blocks:
            continue
        args = problem._args(rb)
        analytic = problem.block_jacobians(rb)
        for k, b in enumerate(rb.blocks):
            if b != block:
                continue
            fd = numeric_jacobian(rb.fn, [a.copy() for a in args], k, step=eps)
            worst = max(worst, float(np.abs(analytic[k] - fd).max(initial=0.0)))
    return worst
