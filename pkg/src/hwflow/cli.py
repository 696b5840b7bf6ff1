"""Experiment runner: TOML config in, ``report.csv`` and ``manifest.json`` out."""
import argparse
import csv
import datetime
import json
import math
import os
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.integrate import quad
from scipy.special import ndtr
from scipy.stats import beta as beta_dist

from . import __version__, seeding
from ._backend import BACKEND, core
from .environment import (
    net_to_environment,
    sample_alpha,
    sample_environment,
    sample_net_environment,
)
from .errors import ConfigError, GateFailure, HWFlowError
from .estimators import (
    PiecewiseLinear,
    density_estimate,
    invariant_family,
    invariant_moment_estimate,
    relevant_count_estimate,
    speed_estimate,
)
from .lattice import LatticeWindow
from .measures import (
    FlowParams,
    flow_from_theta,
    measure_from_dict,
    mu_k_net_family,
    stickiness_and_speeds,
    theta_from_flow,
)
from .mp_oracle import IndexSet, ResidualAccumulator, apply_A_theta, random_flow, random_theta
from .nets import (
    density_exact,
    density_plateau,
    net_flow_kernel,
    psi_continuum,
    reachable_brute_force,
    reachable_set,
    relevant_continuum,
    relevant_expected,
    sample_web_in_net,
)
from .walks import MassProfile, kernel_matrix, kernel_row, npoint_paths, split_probability
from .webs import dual_path, first_passage_cdf, forward_path

OUT_DIR_ENV = "HWFLOW_OUT_DIR"
REPORT_HEADER = ["experiment", "parameter_json", "mean", "stderr", "n", "target", "z"]
_REQUIRED = object()


# config access ---------------------------------------------------------------------

class Params:
    """Read-only view of one config table; errors name the full key."""

    def __init__(self, data, prefix=""):
        self.data = data
        self.prefix = prefix

    def key(self, name):
        return f"{self.prefix}{name}"

    def raw(self, name, default=_REQUIRED):
        if name in self.data:
            return self.data[name]
        if default is _REQUIRED:
            raise ConfigError(self.key(name), "missing")
        return default

    def num(self, name, default=_REQUIRED):
        v = self.raw(name, default)
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise ConfigError(self.key(name), f"expected a number, got {v!r}")
        return float(v)

    def int(self, name, default=_REQUIRED, minimum=None):
        v = self.raw(name, default)
        if isinstance(v, bool) or not isinstance(v, int):
            raise ConfigError(self.key(name), f"expected an integer, got {v!r}")
        if minimum is not None and v < minimum:
            raise ConfigError(self.key(name), f"must be >= {minimum}")
        return v

    def str(self, name, default=_REQUIRED, choices=None):
        v = self.raw(name, default)
        if not isinstance(v, str):
            raise ConfigError(self.key(name), f"expected a string, got {v!r}")
        if choices is not None and v not in choices:
            raise ConfigError(self.key(name), f"{v!r} not one of {sorted(choices)}")
        return v

    def nums(self, name, default=_REQUIRED):
        v = self.raw(name, default)
        if isinstance(v, (int, float)) and not isinstance(v, bool):
            return [float(v)]
        if not isinstance(v, list) or not v:
            raise ConfigError(self.key(name), f"expected a nonempty list of numbers, got {v!r}")
        out = []
        for i, item in enumerate(v):
            if isinstance(item, bool) or not isinstance(item, (int, float)):
                raise ConfigError(f"{self.key(name)}[{i}]", f"expected a number, got {item!r}")
            out.append(float(item))
        return out

    def measure(self, name):
        return measure_from_dict(self.raw(name), self.key(name))

    def flow(self):
        drift = self.num("drift", 0.0)
        nu = self.measure("nu") if "nu" in self.data else measure_from_dict({}, self.key("nu"))
        return FlowParams(drift, nu)

    def used(self, names):
        return {k: self.data[k] for k in names if k in self.data}


@dataclass
class Gate:
    nsigma: float = 3.0
    misspec: float = 0.1
    min_power: float = 0.9


@dataclass
class Row:
    experiment: str
    params: dict
    mean: float
    stderr: float
    n: int
    target: float
    check: tuple = None  # ("sigma", nsigma, ref) | ("rel", tol) | ("abs", tol) | None
    power: float = math.nan
    passed: bool = None

    @property
    def z(self):
        if math.isnan(self.target):
            return math.nan
        if self.stderr > 0.0:
            return (self.mean - self.target) / self.stderr
        if self.mean == self.target:
            return 0.0
        return math.copysign(math.inf, self.mean - self.target)


def power_at(ref, stderr, gate):
    """P[|Z| > nsigma] when the truth is off by ``misspec`` of |ref|."""
    if stderr <= 0.0 or ref == 0.0 or not math.isfinite(ref):
        return math.nan
    s = gate.misspec * abs(ref) / stderr
    return float(ndtr(s - gate.nsigma) + ndtr(-s - gate.nsigma))


def evaluate(row, gate):
    if row.check is None:
        return row
    kind = row.check[0]
    if kind == "sigma":
        ref = row.check[2] if len(row.check) > 2 else row.target
        row.power = power_at(ref, row.stderr, gate)
        ok = abs(row.z) <= row.check[1]
        if gate.min_power > 0.0 and not math.isnan(row.power):
            ok = ok and row.power >= gate.min_power
        row.passed = bool(ok)
    elif kind == "rel":
        row.passed = bool(abs(row.mean / row.target - 1.0) <= row.check[1])
    elif kind == "abs":
        row.passed = bool(abs(row.mean - row.target) <= row.check[1])
    else:
        raise ValueError(f"unknown check {kind!r}")
    return row


def _sigma(gate, ref=None):
    return ("sigma", gate.nsigma) if ref is None else ("sigma", gate.nsigma, ref)


def _rng(seed, tag):
    return np.random.default_rng(seeding.derive_seed(seed, tag, 0))


# experiments ---------------------------------------------------------------------------

def run_oracle(P, seed, gate, ctx):
    p = P.flow()
    kmax = P.int("kmax", 4, minimum=1)
    base = P.used(["drift", "nu"])
    theta, bm, bp = stickiness_and_speeds(p)
    rows = []
    for name, val in (("theta", theta), ("beta_minus", bm), ("beta_plus", bp)):
        target = P.num(f"expect_{name}", math.nan)
        check = None if math.isnan(target) else ("abs", P.num("tol", 1e-12))
        rows.append(Row(f"oracle.{name}", base, val, 0.0, 1, target, check))
    table = theta_from_flow(p, kmax)
    beta, m = flow_from_theta(table)
    want = np.array([[p.nu.moment(k, l) for l in range(kmax)] for k in range(kmax)])
    err = max(abs(beta - p.drift), float(np.abs(m - want).max()))
    rows.append(Row("oracle.theta_roundtrip", {**base, "kmax": kmax}, err, 0.0, 1, 0.0, ("abs", 1e-10)))

    trials = P.int("identity_trials", 0, minimum=0)
    if trials:
        rng = _rng(seed, "oracle")
        nmax = P.int("identity_nmax", 6, minimum=1)
        worst_id = worst_eq = worst_rt = 0.0
        for _ in range(trials):
            n = int(rng.integers(1, nmax + 1))
            t = random_theta(rng, nmax)
            x = rng.integers(-2, 3, size=n).astype(np.float64)
            members = [i + 1 for i in range(n) if rng.random() < 0.5] or [int(rng.integers(1, n + 1))]
            d = IndexSet(n, frozenset(members))
            lit, closed = apply_A_theta(t, d, x)
            worst_id = max(worst_id, abs(lit - closed))
            lit2, _ = apply_A_theta(t.shifted(float(rng.normal())), d, x)
            worst_eq = max(worst_eq, abs(lit - lit2))
            q = random_flow(rng)
            b2, m2 = flow_from_theta(theta_from_flow(q, 3))
            want = np.array([[q.nu.moment(k, l) for l in range(3)] for k in range(3)])
            worst_rt = max(worst_rt, abs(b2 - q.drift), float(np.abs(m2 - want).max()))
        info = {"trials": trials, "nmax": nmax}
        rows.append(Row("oracle.generator_identity", info, worst_id, 0.0, trials, 0.0, ("abs", 1e-10)))
        rows.append(Row("oracle.theta_equivalence", info, worst_eq, 0.0, trials, 0.0, ("abs", 1e-10)))
        rows.append(Row("oracle.random_roundtrip", info, worst_rt, 0.0, trials, 0.0, ("abs", 1e-10)))
    return rows


def _ring_profiles(hist):
    L = hist.shape[1]
    off = L // 2 - (L // 2) % 2
    out = []
    for k, row in enumerate(hist):
        nz = np.nonzero(row)[0]
        out.append(MassProfile(k, {int(j) - off: float(row[j]) for j in nz}))
    return out


def run_flow(P, seed, gate, ctx):
    mode = P.str("mode", choices={"kernel", "speed", "plot"})
    if mode == "speed":
        p = P.flow()
        eps, T = P.num("eps"), P.num("T")
        reps = P.int("replicas", minimum=2)
        est = speed_estimate(p, eps, T, reps, seed, threads=ctx["threads"])
        _, _, bp = stickiness_and_speeds(p)
        return [Row("flow.speed", {**P.used(["drift", "nu", "eps", "T"])}, est.mean, est.stderr,
                    est.n, bp, _sigma(gate))]

    if mode == "kernel":
        mu = P.measure("mu")
        trials = P.int("trials", minimum=1)
        size = P.int("size", 64, minimum=4)
        worst = 0.0
        rng = _rng(seed, "kernel")
        for i in range(trials):
            w = LatticeWindow(-size // 2, size // 2 - 1, 0, size - 1)
            env = sample_environment(mu, w, seeding.derive_seed(seed, "kernel", i))
            s, t = sorted(int(v) for v in rng.choice(size, 2, replace=False))
            u = int(rng.integers(t + 1, size + 1))
            # mass leaving the window is killed, so composition holds for every source
            diff = kernel_matrix(env, s, u) - kernel_matrix(env, s, t) @ kernel_matrix(env, t, u)
            worst = max(worst, float(np.abs(diff).max()))
        rows = [Row("flow.chapman_kolmogorov", {"trials": trials, "size": size}, worst, 0.0, trials,
                    0.0, ("abs", P.num("tol", 1e-12)))]
        steps = P.int("conservation_steps", 0, minimum=0)
        if steps:
            width = P.int("conservation_width", 128, minimum=4)
            width += width % 2
            rho0 = np.where(np.arange(width) % 2 == 0, 2.0 / width, 0.0)
            ck = seeding.stream_key(seed, seeding.TAG_OMEGA_COMPONENT)
            vk = seeding.stream_key(seed, seeding.TAG_OMEGA_VALUE)
            snaps = np.arange(0, steps + 1, max(1, steps // 100), dtype=np.int64)
            hist = np.asarray(core.hw_evolve_hashed(*mu.sampling_table(), ck, vk, 0, 0, rho0,
                                                    steps, snaps, True))
            drift = float(np.abs(hist.sum(axis=1) - 1.0).max())
            rows.append(Row("flow.mass_conservation", {"steps": steps, "width": width}, drift, 0.0,
                            1, 0.0, ("abs", P.num("conservation_tol", 1e-9))))
        return rows

    # plot: Lebesgue or delta start on a ring, history written as t,x,mass
    p = P.flow()
    eps, T = P.num("eps"), P.num("T")
    init = P.str("init", "lebesgue", choices={"lebesgue", "delta"})
    half = P.num("half_width", 1.0)
    steps = int(round(T / eps**2))
    L = 2 * (int(math.ceil(half / eps)) + steps) + 2
    L += L % 4
    mu = mu_k_net_family(p, eps)
    if init == "lebesgue":
        rho0 = np.where(np.arange(L) % 2 == 0, 2.0 * eps, 0.0)
    else:
        rho0 = np.zeros(L)
        rho0[L // 2] = 1.0
    ck = seeding.stream_key(seed, seeding.TAG_OMEGA_COMPONENT)
    vk = seeding.stream_key(seed, seeding.TAG_OMEGA_VALUE)
    hist = np.asarray(core.hw_evolve_hashed(*mu.sampling_table(), ck, vk, 0, 0, rho0, steps,
                                            np.arange(steps + 1, dtype=np.int64), True))
    profiles = _ring_profiles(hist)
    if ctx.get("out_dir") is not None:
        emit_plotdata(profiles, Path(ctx["out_dir"]) / "plotdata.csv")
    total0, totalT = math.fsum(hist[0]), math.fsum(hist[-1])
    return [Row("flow.plot_mass", P.used(["drift", "nu", "eps", "T", "init"]), totalT, 0.0,
                len(profiles), total0, ("abs", 1e-9))]


def _exact_split(mu, k, l):
    """Single-step joint law summed over components directly from mu."""
    total = math.fsum(w * q**k * (1.0 - q) ** l for q, w in mu.atoms)
    for a, b, w in mu.beta:
        val, _ = quad(lambda q: q**k * (1.0 - q) ** l * beta_dist.pdf(q, a, b), 0.0, 1.0,
                      epsabs=1e-15, epsrel=1e-13, limit=200)
        total += w * val
    return total


def run_npoint(P, seed, gate, ctx):
    mode = P.str("mode", choices={"split", "martingale"})
    if mode == "split":
        mu = P.measure("mu")
        nmax = P.int("n_max", 4, minimum=1)
        reps = P.int("replicas", minimum=2)
        rows = []
        worst = 0.0
        for n in range(1, nmax + 1):
            for k in range(n + 1):
                worst = max(worst, abs(split_probability(mu, k, n - k) - _exact_split(mu, k, n - k)))
        rows.append(Row("npoint.split_exact", {"mu": P.raw("mu"), "n_max": nmax}, worst, 0.0, 1,
                        0.0, ("abs", 1e-12)))
        seeds = seeding.derive_seeds(seed, seeding.TAG_REPLICA, np.arange(reps))
        for n in range(1, nmax + 1):
            paths = npoint_paths(mu, np.zeros(n, dtype=np.int64), 1, seeds)
            right = paths[:, 1, :] > 0
            code = right.astype(np.int64) @ (1 << np.arange(n))
            counts = np.bincount(code, minlength=1 << n)
            for pattern in range(1 << n):
                bits = [(pattern >> i) & 1 for i in range(n)]
                k = sum(bits)
                target = split_probability(mu, k, n - k)
                f = counts[pattern] / reps
                se = math.sqrt(max(f * (1.0 - f), 0.0) / reps)
                check = _sigma(gate) if 0.0 < target < 1.0 else ("abs", 0.0)
                label = "".join("R" if b else "L" for b in bits)
                rows.append(Row("npoint.split", {"mu": P.raw("mu"), "n": n, "pattern": label},
                                f, se, reps, target, check))
        return rows

    p = P.flow()
    eps, T = P.num("eps"), P.num("T")
    ns = [int(v) for v in P.nums("n")]
    reps = P.int("replicas", minimum=2)
    batch = P.int("batch", 1000, minimum=1)
    mu = mu_k_net_family(p, eps)
    steps = int(round(T / eps**2))
    rows = []
    for n in ns:
        acc = ResidualAccumulator()
        for start in range(0, reps, batch):
            cnt = min(batch, reps - start)
            seeds = seeding.derive_seeds(seed, seeding.TAG_REPLICA, np.arange(start, start + cnt))
            acc.add(npoint_paths(mu, np.zeros(n, dtype=np.int64), steps, seeds), p, eps)
        for r in acc.report().rows:
            params = {**P.used(["drift", "nu", "eps", "T"]), "n": n, "statistic": r.statistic}
            if r.statistic.startswith("occupation"):
                rows.append(Row("npoint.occupation", params, r.mean, r.stderr, r.n, math.nan))
            else:
                rows.append(Row("npoint.residual", params, r.mean, r.stderr, r.n, 0.0,
                                _sigma(gate, r.compensator)))
    return rows


def run_density(P, seed, gate, ctx):
    mode = P.str("mode", choices={"mc", "rescaled", "plateau"})
    if mode == "mc":
        bm, bp, t = P.num("b_minus"), P.num("b_plus"), P.int("t", minimum=0)
        reps = P.int("replicas", minimum=2)
        est = density_estimate(bm, bp, t, reps, seed, threads=ctx["threads"])
        return [Row("density.mc", P.used(["b_minus", "b_plus", "t"]), est.mean, est.stderr, est.n,
                    density_exact(bm, bp, t), _sigma(gate))]
    b, eps = P.num("b"), P.num("eps")
    tol = P.num("rel_tol")
    if mode == "rescaled":
        rows = []
        for t in P.nums("t"):
            val = density_exact(-b * eps, b * eps, int(math.floor(t / eps**2))) / (2.0 * eps)
            rows.append(Row("density.rescaled", {"b": b, "eps": eps, "t": t}, val, 0.0, 1,
                            psi_continuum(b, t), ("rel", tol)))
        return rows
    t = P.num("t")
    val = density_exact(-b * eps, b * eps, int(math.floor(t / eps**2))) / (2.0 * eps)
    limit = density_plateau(-b * eps, b * eps) / (2.0 * eps)
    return [
        Row("density.plateau", {"b": b, "eps": eps, "t": t}, val, 0.0, 1, 2.0 * b, ("rel", tol)),
        Row("density.plateau_limit", {"b": b, "eps": eps}, limit, 0.0, 1, 2.0 * b),
    ]


def run_relevant(P, seed, gate, ctx):
    mode = P.str("mode", choices={"mc", "rescaled"})
    if mode == "mc":
        bm, bp, U = P.num("b_minus"), P.num("b_plus"), P.int("U", minimum=1)
        S = P.int("S", 0)
        reps = P.int("replicas", minimum=2)
        est = relevant_count_estimate(bm, bp, U, reps, seed, S=S, threads=ctx["threads"])
        return [Row("relevant.mc", P.used(["b_minus", "b_plus", "S", "U"]), est.mean, est.stderr,
                    est.n, relevant_expected(bm, bp, S, U), _sigma(gate))]
    b, eps, U = P.num("b"), P.num("eps"), P.num("U")
    steps = int(round(U / eps**2))
    val = relevant_expected(-b * eps, b * eps, 0, steps) / (2.0 * eps)
    return [Row("relevant.rescaled", {"b": b, "eps": eps, "U": U}, val, 0.0, 1,
                relevant_continuum(b, U), ("rel", P.num("rel_tol")))]


def run_invariant(P, seed, gate, ctx):
    p = P.flow()
    eps = P.num("eps")
    Ts = P.nums("T")
    reps = P.int("replicas", minimum=2)
    phi = PiecewiseLinear.triangle(0.0, P.num("half_width", 1.0))
    N = max(int(round(t / eps**2)) for t in Ts)
    need = 2 * N + int(math.ceil(2.0 * P.num("half_width", 1.0) / eps)) + 2
    width = P.int("window_width", need + need % 2)
    res = invariant_moment_estimate(p, eps, Ts, width, reps, seed, phi, phi,
                                    threads=ctx["threads"], batch=P.int("batch", 8, minimum=1))
    _, family = invariant_family(p, eps)
    base = {**P.used(["drift", "nu", "eps"]), "family": family}
    rows = []
    tmax = max(Ts)
    for r in res:
        prm = {**base, "T": r.T}
        rows.append(Row("invariant.first", prm, r.first.mean, r.first.stderr, r.first.n,
                        r.first_target, _sigma(gate)))
        rows.append(Row("invariant.excess", prm, r.excess.mean, r.excess.stderr, r.excess.n,
                        r.excess_target, _sigma(gate) if r.T == tmax else None))
        rows.append(Row("invariant.second_vs_discrete", prm, r.second.mean, r.second.stderr,
                        r.second.n, r.second_exact, _sigma(gate)))
    return rows


def run_web(P, seed, gate, ctx):
    mu = P.measure("mu")
    d0, T = P.int("gap", minimum=2), P.int("T", minimum=1)
    reps = P.int("replicas", minimum=2)
    if d0 % 2:
        raise ConfigError("gap", "must be even")
    w = LatticeWindow(-2 * T - 2, d0 + 2 * T + 2, 0, T)
    hits = np.empty(reps)
    crossings = 0
    for i, s in enumerate(seeding.derive_seeds(seed, seeding.TAG_REPLICA, np.arange(reps))):
        env = sample_environment(mu, w, int(s))
        field = sample_alpha(env, int(s))
        a = forward_path(field, (0, 0), T).positions
        b = forward_path(field, (d0, 0), T).positions
        hits[i] = float(np.any(a == b))
        # the dual path started just right of a stays strictly right of it
        dual = dual_path(field, (int(a[-1]) + 1, T), T)
        crossings += int(np.any(dual.positions[::-1] < a))
    p_right = mu.integral(1, 0)
    target = float(first_passage_cdf(p_right, d0, T)[-1])
    f = hits.mean()
    se = math.sqrt(f * (1.0 - f) / reps)
    return [
        Row("web.coalescence", {"mu": P.raw("mu"), "gap": d0, "T": T}, f, se, reps, target,
            _sigma(gate)),
        Row("web.dual_crossings", {"mu": P.raw("mu"), "T": T}, float(crossings), 0.0, reps, 0.0,
            ("abs", 0.0)),
    ]


def run_net(P, seed, gate, ctx):
    p = P.flow()
    eps = P.num("eps")
    trials = P.int("trials", minimum=1)
    size = P.int("size", 16, minimum=2)
    bsize = P.int("brute_size", 8, minimum=2)
    worst, mismatches, escapes = 0.0, 0, 0
    for i in range(trials):
        s = seeding.derive_seed(seed, seeding.TAG_REPLICA, i)
        w = LatticeWindow(-size, size, 0, size - 1)
        pair, marks = sample_net_environment(p, w, eps, s)
        env = net_to_environment(pair, marks)
        for x in range(-2, 3, 2):
            a = net_flow_kernel(pair, marks, x, 0, size // 2)
            b = kernel_row(env, x, 0, size // 2)
            keys = set(a.probs) | set(b.probs)
            worst = max(worst, max(abs(a.probs.get(k, 0.0) - b.probs.get(k, 0.0)) for k in keys))
        wb = LatticeWindow(-bsize, bsize, 0, bsize - 1)
        pb, mb = sample_net_environment(p, wb, eps, s)
        A = [-2, 0, 2]
        fast = reachable_set(pb, A, 0, bsize // 2)
        slow = reachable_brute_force(pb, A, 0, bsize // 2)
        mismatches += int(fast.positions != slow.positions)
        web = sample_web_in_net(pb, marks=mb, seed=s)
        for x in A:
            path = forward_path(web, (x, 0), bsize // 2)
            reach = set(reachable_set(pb, [x], 0, bsize // 2).positions)
            escapes += int(path.positions[-1] not in reach)
    info = {**P.used(["drift", "nu", "eps"]), "trials": trials}
    return [
        Row("net.kernel_equivalence", {**info, "size": size}, worst, 0.0, trials, 0.0,
            ("abs", P.num("tol", 1e-12))),
        Row("net.reach_brute_force", {**info, "size": bsize}, float(mismatches), 0.0, trials, 0.0,
            ("abs", 0.0)),
        Row("net.web_inside_net", {**info, "size": bsize}, float(escapes), 0.0, trials, 0.0,
            ("abs", 0.0)),
    ]


RUNNERS = {
    "oracle": run_oracle,
    "flow": run_flow,
    "npoint": run_npoint,
    "density": run_density,
    "relevant": run_relevant,
    "invariant": run_invariant,
    "web": run_web,
    "net": run_net,
}


# orchestration ---------------------------------------------------------------------------

def load_config(path):
    try:
        import tomllib
    except ModuleNotFoundError:  # Python < 3.11
        import tomli as tomllib
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError("<file>", str(exc)) from exc


def _gate(cfg):
    g = Params(cfg.get("gate", {}), "gate.")
    return Gate(g.num("nsigma", 3.0), g.num("misspec", 0.1), g.num("min_power", 0.9))


def run_config(cfg, seed=None, threads=1, out_dir=None):
    """Rows for every case of the config, with gates evaluated."""
    top = Params(cfg)
    kind = top.str("kind", choices=set(RUNNERS))
    if seed is None:
        seed = top.int("seed", 0, minimum=0)
    gate = _gate(cfg)
    ctx = {"threads": int(threads), "out_dir": out_dir}
    shared = {k: v for k, v in cfg.items() if k not in ("cases", "gate", "kind", "seed", "name")}
    cases = cfg.get("cases", [{}])
    if not isinstance(cases, list) or not all(isinstance(c, dict) for c in cases):
        raise ConfigError("cases", "expected an array of tables")
    rows = []
    for i, case in enumerate(cases):
        data = {**shared, **case}
        prefix = f"cases[{i}]." if "cases" in cfg else ""
        P = _CaseParams(data, prefix, set(case))
        for row in RUNNERS[kind](P, int(seed), gate, ctx):
            rows.append(evaluate(row, gate))
    return rows


class _CaseParams(Params):
    """Keys set in the case carry the case prefix; inherited keys keep their top-level name."""

    def __init__(self, data, prefix, own):
        super().__init__(data, prefix)
        self.own = own

    def key(self, name):
        return f"{self.prefix}{name}" if name in self.own else name


def _fmt(x):
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x), ".17g")


def write_report(rows, path):
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(REPORT_HEADER)
        for r in rows:
            out.writerow([r.experiment, json.dumps(r.params, sort_keys=True), _fmt(r.mean),
                          _fmt(r.stderr), _fmt(r.n), _fmt(r.target), _fmt(r.z)])


def gate_summary(rows):
    out = []
    for r in rows:
        if r.check is None:
            continue
        out.append({
            "experiment": r.experiment,
            "parameters": r.params,
            "check": list(r.check[:2]),
            "power": None if math.isnan(r.power) else r.power,
            "passed": r.passed,
        })
    return out


def run_experiment(path, seed_override=None, threads=1, out_dir=None):
    """Run one config file; returns the exit code (0 iff every declared gate passes)."""
    cfg = load_config(path)
    seed = seed_override if seed_override is not None else Params(cfg).int("seed", 0, minimum=0)
    if out_dir is None:
        out_dir = os.environ.get(OUT_DIR_ENV) or os.path.join("runs", Path(path).stem)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows = run_config(cfg, seed, threads, out)
    write_report(rows, out / "report.csv")
    gates = gate_summary(rows)
    manifest = {
        "config": cfg,
        "config_path": str(path),
        "seed": int(seed),
        "version": __version__,
        "backend": BACKEND,
        "timestamp": datetime.datetime.now(datetime.timezone.utc).isoformat(),
        "gates": gates,
        "passed": all(g["passed"] for g in gates),
    }
    with open(out / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True, default=_json_default)
    if not manifest["passed"]:
        failed = [g["experiment"] for g in gates if not g["passed"]]
        raise GateFailure(f"{len(failed)} gate(s) failed: {', '.join(sorted(set(failed)))}")
    return 0


def _json_default(x):
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.floating,)):
        return float(x)
    if isinstance(x, datetime.datetime):
        return x.isoformat()
    raise TypeError(f"not serialisable: {type(x).__name__}")


def emit_plotdata(history, path):
    """CSV ``t,x,mass`` sorted by (t, x) with 17-digit decimals."""
    rows = sorted((rho.time, x, m) for rho in history for x, m in rho.masses.items())
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(["t", "x", "mass"])
        for t, x, m in rows:
            out.writerow([t, x, format(m, ".17g")])
    return path


def main(argv=None):
    ap = argparse.ArgumentParser(prog="hwflow", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run one experiment config")
    run.add_argument("--config", required=True)
    run.add_argument("--seed-override", type=int, default=None)
    run.add_argument("--threads", type=int, default=1)
    run.add_argument("--out-dir", default=None)
    args = ap.parse_args(argv)
    try:
        return run_experiment(args.config, args.seed_override, args.threads, args.out_dir)
    except GateFailure as exc:
        print(f"gate failure: {exc}", file=sys.stderr)
        return 1
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except HWFlowError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
