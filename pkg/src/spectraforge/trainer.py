"""Alternating adversarial training of the function and density networks.

Outer loop ``k = 1..K`` holds the constraint weights fixed; each of its ``R``
inner iterations (one *epoch*) takes ``T_u`` Adam steps on ``theta_u`` with
the density frozen, then ``T_rho`` steps on ``theta_rho`` with ``u`` frozen.
After every outer loop the weights advance::

    lam <- lam + 2 mu h(theta_rho)      (augmented Lagrangian only)
    mu  <- min(beta mu, S)
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import fields as fl
from . import geometry as geo
from . import loss as ls
from .autodiff import ParamTape
from .config import RunConfig
from .errors import DegenerateFieldError, NonFiniteError
from .jet import Jet2
from .network import AdamState, NetworkLayout, ParamVector, adam_step, forward, init_xavier

log = logging.getLogger(__name__)

__all__ = [
    "ConstraintSchedule",
    "Problem",
    "TrainLog",
    "TrainResult",
    "TrainerConfig",
    "TrainingAborted",
    "evaluate",
    "train",
]

LOG_COLUMNS = ("epoch", "L_sum", "L_in", "L_w", "L_b", "lambda", "mass", "mu", "lambda_mult", "seconds")


@dataclass(frozen=True)
class TrainerConfig:
    K: int
    R: int
    T_u: int
    T_rho: int
    eta_u: float
    eta_rho: float
    seed: int = 0

    def __post_init__(self):
        if min(self.K, self.R, self.T_u, self.T_rho) < 1:
            raise ValueError("loop counts must be >= 1")
        if self.eta_u <= 0 or self.eta_rho <= 0:
            raise ValueError("learning rates must be positive")

    @property
    def epochs(self) -> int:
        return self.K * self.R


@dataclass
class ConstraintSchedule:
    mu0: float
    beta: float = 2.0
    S: float = 1000.0
    method: str = "aug_lagrangian"
    mu: float | None = None
    lam: float = 0.0

    def __post_init__(self):
        if self.mu0 <= 0 or self.S <= 0:
            raise ValueError("mu0 and S must be positive")
        if self.beta <= 1:
            raise ValueError("beta must exceed 1")
        if self.mu is None:
            self.mu = min(self.mu0, self.S)

    def advance(self, h: float) -> None:
        """End-of-outer-loop update using the outgoing ``mu``."""
        if self.method == "aug_lagrangian":
            self.lam = self.lam + 2.0 * self.mu * h
        self.mu = min(self.beta * self.mu, self.S)


@dataclass
class TrainLog:
    rows: list[dict] = field(default_factory=list)

    def append(self, row: dict) -> None:
        self.rows.append(row)

    def column(self, name: str) -> np.ndarray:
        return np.array([r[name] for r in self.rows], dtype=np.float64)

    def __len__(self) -> int:
        return len(self.rows)


class TrainingAborted(RuntimeError):
    """Training stopped on a non-finite or degenerate state; carries the last good checkpoint."""

    def __init__(self, cause: Exception, checkpoint: dict):
        super().__init__(f"training aborted: {cause}")
        self.cause = cause
        self.checkpoint = checkpoint


class Problem:
    """Everything about a run that is fixed once the config is read.

    Holds the domain, the sample set, the constructions with their
    precomputed point factors and the loss specification.
    """

    def __init__(self, cfg: RunConfig):
        self.cfg = cfg
        p = cfg.section("problem")
        self.domain = geo.domain_from_config(cfg.section("domain"))
        f = cfg.section("fields")
        literal = bool(f["literal_paper_forms"])
        self.u_con = fl.build_preset(f["u_construction"], self.domain, direction=p["direction"], literal=literal).u
        rho_preset = fl.build_preset(f["rho_construction"], self.domain, direction=p["direction"], literal=literal)
        self.rho_con = rho_preset.rho
        self.notes = rho_preset.notes
        self.layout_u = NetworkLayout(self.domain.dim, **cfg.section("network_u"))
        self.layout_rho = NetworkLayout(self.domain.dim, **cfg.section("network_rho"))

        b = cfg.section("boundary")
        A1 = p["A1"] if p["A1"] is not None else self.domain.measure
        A2 = p["A2"] if p["A2"] is not None else self.domain.boundary_measure
        self.spec = ls.LossSpec(
            operator=p["operator"],
            direction=p["direction"],
            alpha=p["alpha"],
            nu=p["nu"],
            A1=A1,
            A2=A2,
            S1=p["S1"],
            boundary_mode=b["mode"],
            penalty_M=b["penalty_M"],
            constraint=cfg.section("constraint")["method"],
            c_mean=p["c_mean"],
            rho_lo=p["rho_lo"],
            rho_hi=p["rho_hi"],
            max_u_phase_sign=float(p["max_u_phase_sign"]),
        )
        # first-order jets suffice when no loss term needs a Laplacian
        self.order = 1 if self.spec.operator == "second_order" else 2

        s = cfg.section("sampling")
        self.samples = geo.sample_interior(self.domain, s["grid"])
        self.x = self.samples.points
        self.u_prep = self.u_con.prepare(self.x, self.order)
        self.rho_prep = self.rho_con.prepare(self.x)
        self.boundary = None
        if self.spec.operator == "supported" or self.spec.boundary_mode == "half":
            self.boundary = geo.sample_boundary(self.domain, s["n_boundary"])
            self.ub_prep = self.u_con.prepare(self.boundary.points, 2)

    # -- building blocks -------------------------------------------------------
    def init_params(self, seed: int) -> tuple[ParamVector, ParamVector]:
        su, sr = np.random.SeedSequence(seed).generate_state(2)
        return init_xavier(self.layout_u, int(su)), init_xavier(self.layout_rho, int(sr))

    def rho_values(self, theta_rho, x=None) -> np.ndarray:
        """Density at the sample points (or at ``x``), value-only."""
        tape = ParamTape()
        if x is None:
            H = forward(tape, self.layout_rho, theta_rho, self.x, jet=False, trainable=False)
            prep = self.rho_prep
        else:
            H = forward(tape, self.layout_rho, theta_rho, x, jet=False, trainable=False)
            prep = self.rho_con.prepare(np.atleast_2d(x))
        return self.rho_con.values(H.value, prep)

    def _rayleigh(self, tape, u, rho, u_b):
        spec = self.spec
        if spec.operator == "second_order":
            return ls.rayleigh_second_order(tape, u, rho, spec.alpha)
        if spec.operator == "clamped":
            return ls.rayleigh_clamped(tape, u, rho)
        b = self.boundary
        return ls.rayleigh_supported(tape, u, rho, u_b, b.normals, b.curvature, spec.nu, spec.A1, spec.A2, spec.S1)

    def _boundary_term(self, tape, u_b):
        if self.spec.boundary_mode != "half":
            return None
        b = self.boundary
        return ls.boundary_loss(tape, u_b, b.normals, b.curvature, self.spec.nu, self.spec.penalty_M)

    def _u_graph(self, tape, theta_u, trainable):
        """``u`` at interior and boundary points sharing one set of parameter leaves."""
        pts = self.x if self.boundary is None else np.vstack([self.x, self.boundary.points])
        order = self.order if self.boundary is None else 2
        H = forward(tape, self.layout_u, theta_u, pts, jet=True, order=order, trainable=trainable)
        if self.boundary is None:
            return self.u_con.build(tape, H, self.u_prep), None
        n = self.x.shape[0]
        u_all = self.u_con.build(tape, H, _concat_jets(self.u_prep, self.ub_prep))
        return tape.take(u_all, slice(0, n)), tape.take(u_all, slice(n, None))

    # -- phase losses ------------------------------------------------------------
    def u_phase(self, theta_u, rho: np.ndarray, sched: ConstraintSchedule):
        tape = ParamTape()
        u, u_b = self._u_graph(tape, theta_u, True)
        L_in = self._rayleigh(tape, u, rho, u_b)
        L_b = self._boundary_term(tape, u_b)
        total, bd = ls.total_loss(tape, self.spec, "u_phase", L_in, None, L_b, float(np.mean(rho)))
        return tape.backward(total, self.layout_u.n_params), bd

    def rho_phase(self, theta_rho, theta_u, sched: ConstraintSchedule):
        tape = ParamTape()
        u, u_b = self._u_graph(tape, theta_u, False)
        H = forward(tape, self.layout_rho, theta_rho, self.x, jet=False, trainable=True)
        rho = self.rho_con.build(tape, H, self.rho_prep)
        L_in = self._rayleigh(tape, u, rho, u_b)
        h = ls.mass_residual(tape, rho, self.spec.c_mean)
        L_w = ls.constraint_loss(tape, h, sched.mu, sched.lam, self.spec.constraint)
        L_b = self._boundary_term(tape, u_b)
        mass = float(np.mean(rho.value))
        total, bd = ls.total_loss(tape, self.spec, "rho_phase", L_in, L_w, L_b, mass)
        return tape.backward(total, self.layout_rho.n_params), bd

    def breakdown(self, theta_u, theta_rho, sched: ConstraintSchedule) -> ls.LossBreakdown:
        """Density-phase loss values without gradients."""
        tape = ParamTape()
        u, u_b = self._u_graph(tape, theta_u, False)
        rho = self.rho_values(theta_rho)
        L_in = self._rayleigh(tape, u, rho, u_b)
        h = ls.mass_residual(tape, rho, self.spec.c_mean)
        L_w = ls.constraint_loss(tape, h, sched.mu, sched.lam, self.spec.constraint)
        L_b = self._boundary_term(tape, u_b)
        return ls.total_loss(tape, self.spec, "rho_phase", L_in, L_w, L_b, float(np.mean(rho)))[1]


def _concat_jets(a: Jet2, b: Jet2) -> Jet2:
    return Jet2(np.concatenate([a.data, b.data], axis=1), a.dim, a.order)


@dataclass
class TrainResult:
    theta_u: ParamVector
    theta_rho: ParamVector
    log: TrainLog
    schedule: ConstraintSchedule
    final: ls.LossBreakdown
    wall_time: float
    timing: list[float] = field(default_factory=list)


def train(
    cfg: RunConfig,
    *,
    checkpoint: Callable[[dict], None] | None = None,
    timing: bool = False,
    progress: Callable[[dict], None] | None = None,
    problem: Problem | None = None,
) -> TrainResult:
    """Run the alternating scheme; deterministic for a fixed config and seed.

    ``checkpoint`` receives a state dict after every outer loop and once more
    with the last good state when the run aborts.  Log rows carry wall-clock
    seconds only when ``timing`` is set, so histories stay byte-comparable.
    """
    prob = problem or Problem(cfg)
    t = cfg.section("training")
    tc = TrainerConfig(t["K"], t["R"], t["T_u"], t["T_rho"], t["eta_u"], t["eta_rho"], t["seed"])
    c = cfg.section("constraint")
    sched = ConstraintSchedule(c["mu0"], c["beta"], c["S"], c["method"])
    pu, pr = prob.init_params(tc.seed)
    theta_u, theta_rho = pu.values.copy(), pr.values.copy()
    adam_u = AdamState.zeros(theta_u.size)
    adam_r = AdamState.zeros(theta_rho.size)
    tlog = TrainLog()
    times: list[float] = []
    start = time.perf_counter()

    def state(k):
        return {
            "outer": k,
            "theta_u": ParamVector(prob.layout_u, theta_u.copy()),
            "theta_rho": ParamVector(prob.layout_rho, theta_rho.copy()),
            "mu": sched.mu,
            "lam": sched.lam,
            "epoch": len(tlog),
        }

    good = state(0)
    epoch = 0
    try:
        for k in range(tc.K):
            for _ in range(tc.R):
                t0 = time.perf_counter()
                rho = prob.rho_values(theta_rho)
                for _ in range(tc.T_u):
                    g, _ = prob.u_phase(theta_u, rho, sched)
                    theta_u, adam_u = adam_step(theta_u, g, adam_u, tc.eta_u)
                for _ in range(tc.T_rho):
                    g, bd = prob.rho_phase(theta_rho, theta_u, sched)
                    theta_rho, adam_r = adam_step(theta_rho, g, adam_r, tc.eta_rho)
                epoch += 1
                dt = time.perf_counter() - t0
                times.append(dt)
                row = {"epoch": epoch, **bd.row(), "mu": sched.mu, "lambda_mult": sched.lam}
                row["seconds"] = dt if timing else float("nan")
                tlog.append(row)
                if progress is not None:
                    progress(row)
            h = float(np.mean(prob.rho_values(theta_rho))) - prob.spec.c_mean
            sched.advance(h)
            good = state(k + 1)
            if checkpoint is not None:
                checkpoint(good)
    except (NonFiniteError, DegenerateFieldError) as exc:
        log.error("aborting at epoch %d: %s", epoch + 1, exc)
        if checkpoint is not None:
            checkpoint({**good, "aborted": str(exc)})
        raise TrainingAborted(exc, good) from exc

    final = prob.breakdown(theta_u, theta_rho, sched)
    return TrainResult(
        ParamVector(prob.layout_u, theta_u),
        ParamVector(prob.layout_rho, theta_rho),
        tlog,
        sched,
        final,
        time.perf_counter() - start,
        times,
    )


@dataclass
class Evaluation:
    breakdown: ls.LossBreakdown
    grid_points: np.ndarray
    inside: np.ndarray
    rho: np.ndarray
    grid_shape: tuple[int, ...]


def evaluate(cfg: RunConfig, theta_u, theta_rho, sched: ConstraintSchedule | None = None, problem: Problem | None = None) -> Evaluation:
    """Loss breakdown at the sample points and the density on the full bounding-box grid."""
    prob = problem or Problem(cfg)
    if sched is None:
        c = cfg.section("constraint")
        sched = ConstraintSchedule(c["mu0"], c["beta"], c["S"], c["method"])
    tu = theta_u.values if isinstance(theta_u, ParamVector) else theta_u
    tr = theta_rho.values if isinstance(theta_rho, ParamVector) else theta_rho
    bd = prob.breakdown(tu, tr, sched)
    grid = prob.samples.grid_shape
    pts = geo.grid_points(prob.domain, grid)
    inside = prob.domain.contains(pts)
    rho = prob.rho_values(tr, pts)
    return Evaluation(bd, pts, inside, rho, grid)
