"""Content flow optimization over the capacitated resource graph.

Decision variables are the per-task flows on communication and carry arcs.
Per-frame injected content mu, computing flows d and BS relay powers are all
affine/convex functions of those flows, so the program reduces to maximizing

    (1/K) * sum_{frames,tasks} log(mu + e)  -  w_p * sum BS leg powers

over a polyhedron (nonnegativity, shared arc capacities, fog compute limits,
relay flow balance, delay cut-offs, BS power caps). The BS power of a leg is
(2^(theta/W) - 1) * sigma2 / quantile_gain with theta the compressed task
volume; its cap is folded into a linear theta bound so the program is always
feasible. Solved with a dense primal-dual interior-point method; KKT
residuals of the returned point are reported with the solution.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .scenario import ChannelParams, Task
from .trrg import Arc, Trrg, Vertex, vehicle_vertex

LOG2 = math.log(2.0)


class FlowError(RuntimeError):
    pass


@dataclass(frozen=True)
class BsLeg:
    leg: str  # "I" or "II"
    quantile_gain: float
    kappa: float  # sigma2 / quantile_gain
    theta_max_bits: float


@dataclass
class FlowProgram:
    trrg: Trrg
    tasks: list[Task]
    capacities: dict[Arc, float]
    channel: ChannelParams
    var_keys: list[tuple[Arc, str]]  # (arc, task id); comm and carry arcs only
    index: dict[tuple[Arc, str], int]
    mu_terms: dict[tuple[str, int], list[int]]  # (task, frame) -> var indices
    task_mu_vars: dict[str, list[int]]  # task -> all its mu-term var indices
    bs_legs: dict[str, list[BsLeg]]
    g_ineq: np.ndarray
    h_ineq: np.ndarray
    ineq_kinds: list[str]
    a_eq: np.ndarray
    scale_bits: float  # variable scaling: x_bits = scale_bits * u

    @property
    def n_vars(self) -> int:
        return len(self.var_keys)

    @property
    def n_frames(self) -> int:
        return self.trrg.num_frames

    # ---- objective in scaled units -------------------------------------

    def _mu_bits(self, u: np.ndarray, terms: list[int]) -> float:
        return self.scale_bits * float(u[terms].sum()) if terms else 0.0

    def theta_bits(self, u: np.ndarray, tid: str) -> float:
        eta = self.channel.compression_eta
        return eta * self.scale_bits * float(u[self.task_mu_vars[tid]].sum())

    def leg_power(self, theta_bits: float, leg: BsLeg) -> float:
        w = self.channel.bandwidth_hz
        return leg.kappa * (2.0 ** (theta_bits / w) - 1.0)

    def objective_parts(self, u: np.ndarray) -> tuple[float, float]:
        """(utility, bs_power_watts) at scaled point u."""
        k = self.n_frames
        n_tasks = len(self.tasks)
        utility = (n_tasks * k - len(self.mu_terms)) / k  # frames with mu == 0
        for terms in self.mu_terms.values():
            utility += math.log(self._mu_bits(u, terms) + math.e) / k
        power = 0.0
        for task in self.tasks:
            if task.tid not in self.task_mu_vars:
                continue
            theta = self.theta_bits(u, task.tid)
            for leg in self.bs_legs[task.tid]:
                power += self.leg_power(theta, leg)
        return utility, power

    def phi(self, u: np.ndarray) -> float:
        """Minimization objective (negated utility plus weighted power)."""
        utility, power = self.objective_parts(u)
        return -utility + self.channel.w_p * power

    def phi_grad_hess(self, u: np.ndarray) -> tuple[float, np.ndarray, np.ndarray]:
        n = self.n_vars
        k = self.n_frames
        w = self.channel.bandwidth_hz
        eta = self.channel.compression_eta
        grad = np.zeros(n)
        hess = np.zeros((n, n))
        for terms in self.mu_terms.values():
            mu_e = self._mu_bits(u, terms) + math.e
            g = -(self.scale_bits / k) / mu_e
            grad[terms] += g
            hh = (self.scale_bits ** 2 / k) / (mu_e * mu_e)
            hess[np.ix_(terms, terms)] += hh
        for task in self.tasks:
            tvars = self.task_mu_vars.get(task.tid)
            if not tvars:
                continue
            theta = self.theta_bits(u, task.tid)
            coeff = eta * self.scale_bits
            kappa_exp = sum(
                leg.kappa * (2.0 ** (theta / w)) for leg in self.bs_legs[task.tid]
            )
            g_bs = self.channel.w_p * kappa_exp * (LOG2 / w) * coeff
            h_bs = self.channel.w_p * kappa_exp * (LOG2 / w) ** 2 * coeff ** 2
            grad[tvars] += g_bs
            hess[np.ix_(tvars, tvars)] += h_bs
        return self.phi(u), grad, hess


@dataclass
class FlowSolution:
    flows_bits: dict[tuple[Arc, str], float]
    mu_bits: dict[tuple[str, int], float]  # (task, frame) -> injected bits
    d_bits: dict[tuple[Arc, str], float]  # computing arcs
    p_bs_watts: dict[tuple[str, str], float]  # (task, leg)
    objective: float
    throughput_bits: float
    bs_power_watts: float
    status: str
    iterations: int
    kkt: dict[str, float] = field(default_factory=dict)


def bs_theta_cap_bits(channel: ChannelParams, gq: float) -> float:
    if gq <= 0.0:
        return 0.0
    snr = channel.p_max_bs_watts * gq / channel.noise_watts
    return channel.bandwidth_hz * math.log2(1.0 + snr)


def build_program(
    trrg: Trrg,
    capacities: dict[Arc, float],
    tasks: list[Task],
    channel: ChannelParams,
    quantile_gains: dict[tuple[str, str], float],
) -> FlowProgram:
    """Assemble the reduced convex program for the given capacities.

    Arcs are pruned per task to those on some alpha->omega path within the
    delay budget with positive capacity, which keeps the feasible set full
    dimensional (needed by the interior-point solver) and hard-zeroes flow
    beyond each task's delay budget.
    """
    sigma2 = channel.noise_watts
    bs_legs: dict[str, list[BsLeg]] = {}
    for task in tasks:
        legs = []
        for leg_name in ("I", "II"):
            gq = quantile_gains[(task.tid, leg_name)]
            legs.append(
                BsLeg(
                    leg=leg_name,
                    quantile_gain=gq,
                    kappa=(sigma2 / gq) if gq > 0 else math.inf,
                    theta_max_bits=bs_theta_cap_bits(channel, gq),
                )
            )
        bs_legs[task.tid] = legs

    comm_carry = [a for a in trrg.arcs if a.kind in ("communication", "carry")]
    computing = [a for a in trrg.arcs if a.kind == "computing"]

    var_keys: list[tuple[Arc, str]] = []
    mu_terms: dict[tuple[str, int], list[int]] = {}
    task_mu_vars: dict[str, list[int]] = {}
    kept_by_task: dict[str, list[Arc]] = {}

    for task in tasks:
        t_s = task.delay_budget_frames
        theta_cap = min(leg.theta_max_bits for leg in bs_legs[task.tid])
        if theta_cap <= 0.0:
            continue  # BS cannot relay anything for this task
        usable = [
            a
            for a in comm_carry
            if a.frame < t_s and capacities.get(a, 0.0) > 0.0
        ]
        out_adj: dict[Vertex, list[Arc]] = {}
        in_adj: dict[Vertex, list[Arc]] = {}
        for a in usable:
            out_adj.setdefault(a.tail, []).append(a)
            in_adj.setdefault(a.head, []).append(a)

        sources = {
            vehicle_vertex(task.source, k)
            for k in range(1, min(t_s, trrg.num_frames) + 1)
        }
        fwd: set[Vertex] = set()
        stack = list(sources)
        while stack:
            v = stack.pop()
            if v in fwd:
                continue
            fwd.add(v)
            for a in out_adj.get(v, ()):
                if a.head not in fwd:
                    stack.append(a.head)

        sinks = {
            a.tail for a in computing if capacities.get(a, 0.0) > 0.0
        }
        back: set[Vertex] = set()
        stack = [v for v in sinks]
        while stack:
            v = stack.pop()
            if v in back:
                continue
            back.add(v)
            for a in in_adj.get(v, ()):
                if a.tail not in back:
                    stack.append(a.tail)

        kept = [a for a in usable if a.tail in fwd and a.head in back]
        if not kept:
            continue
        kept_by_task[task.tid] = kept
        for a in sorted(kept):
            var_keys.append((a, task.tid))

    index = {key: i for i, key in enumerate(var_keys)}

    for task in tasks:
        kept = kept_by_task.get(task.tid)
        if not kept:
            continue
        tvars: list[int] = []
        for a in kept:
            if (
                a.kind == "communication"
                and a.tail.vid == task.source
                and a.tail.kind == "vehicle"
            ):
                key = (task.tid, a.frame)
                mu_terms.setdefault(key, []).append(index[(a, task.tid)])
                tvars.append(index[(a, task.tid)])
        task_mu_vars[task.tid] = sorted(tvars)

    n = len(var_keys)
    finite_caps = [
        capacities[a]
        for a, _ in var_keys
        if math.isfinite(capacities.get(a, 0.0))
    ]
    scale = max(finite_caps) if finite_caps else 1.0
    if scale <= 0:
        scale = 1.0

    g_rows: list[np.ndarray] = []
    h_vals: list[float] = []
    kinds: list[str] = []

    for i in range(n):
        row = np.zeros(n)
        row[i] = -1.0
        g_rows.append(row)
        h_vals.append(0.0)
        kinds.append("nonneg")

    arc_vars: dict[Arc, list[int]] = {}
    for (a, tid), i in index.items():
        arc_vars.setdefault(a, []).append(i)
    for a, idxs in sorted(arc_vars.items()):
        cap = capacities[a]
        if not math.isfinite(cap):
            continue
        row = np.zeros(n)
        row[idxs] = 1.0
        g_rows.append(row)
        h_vals.append(cap / scale)
        kinds.append("arc_capacity")

    fog_in: dict[Vertex, list[int]] = {}
    fog_caps: dict[Vertex, float] = {}
    for a in computing:
        cap = capacities.get(a, 0.0)
        if cap > 0.0:
            fog_caps[a.tail] = cap
    for (a, tid), i in index.items():
        if a.kind == "communication" and a.head in fog_caps:
            fog_in.setdefault(a.head, []).append(i)
    for v, idxs in sorted(fog_in.items()):
        if math.isinf(fog_caps[v]):
            continue
        row = np.zeros(n)
        row[idxs] = 1.0
        g_rows.append(row)
        h_vals.append(fog_caps[v] / scale)
        kinds.append("compute_capacity")

    eta = channel.compression_eta
    for task in tasks:
        tvars = task_mu_vars.get(task.tid)
        if not tvars:
            continue
        for leg in bs_legs[task.tid]:
            if math.isinf(leg.theta_max_bits):
                continue
            row = np.zeros(n)
            row[tvars] = eta
            g_rows.append(row)
            h_vals.append(leg.theta_max_bits / scale)
            kinds.append("bs_theta_cap")

    a_rows: list[np.ndarray] = []
    relay_ids = {vid for vid, role in trrg.roles.items() if role == "relay"}
    for task in tasks:
        kept = kept_by_task.get(task.tid)
        if not kept:
            continue
        touched: dict[Vertex, tuple[list[int], list[int]]] = {}
        for a in kept:
            i = index[(a, task.tid)]
            if a.head.kind == "vehicle" and a.head.vid in relay_ids:
                touched.setdefault(a.head, ([], []))[0].append(i)
            if a.tail.kind == "vehicle" and a.tail.vid in relay_ids:
                touched.setdefault(a.tail, ([], []))[1].append(i)
        for v in sorted(touched):
            ins, outs = touched[v]
            row = np.zeros(n)
            row[ins] += 1.0
            row[outs] -= 1.0
            a_rows.append(row)

    g_ineq = np.vstack(g_rows) if g_rows else np.zeros((0, n))
    a_eq = np.vstack(a_rows) if a_rows else np.zeros((0, n))
    return FlowProgram(
        trrg=trrg,
        tasks=list(tasks),
        capacities=dict(capacities),
        channel=channel,
        var_keys=var_keys,
        index=index,
        mu_terms=mu_terms,
        task_mu_vars=task_mu_vars,
        bs_legs=bs_legs,
        g_ineq=g_ineq,
        h_ineq=np.asarray(h_vals),
        ineq_kinds=kinds,
        a_eq=a_eq,
        scale_bits=scale,
    )


# ---------------------------------------------------------------------------
# primal-dual interior point


def _pd_residuals(program, u, lam, nu, t_inv):
    _, grad, _ = program.phi_grad_hess(u)
    f = program.g_ineq @ u - program.h_ineq
    r_dual = grad + program.g_ineq.T @ lam
    if program.a_eq.size:
        r_dual = r_dual + program.a_eq.T @ nu
    r_cent = -lam * f - t_inv
    r_pri = program.a_eq @ u if program.a_eq.size else np.zeros(0)
    return r_dual, r_cent, r_pri, f, grad


def solve(program: FlowProgram, tol: float = 1e-6, max_iter: int = 200) -> FlowSolution:
    """Primal-dual interior-point solve of the reduced program."""
    n = program.n_vars
    if n == 0:
        return _package_solution(program, np.zeros(0), "optimal", 0, kkt={})

    g, h = program.g_ineq, program.h_ineq
    a_eq = program.a_eq
    m = g.shape[0]
    p = a_eq.shape[0]

    pos_rows = h > 0
    if pos_rows.any():
        slack_per_row = h[pos_rows] / np.abs(g[pos_rows]).sum(axis=1)
        u = np.full(n, 0.25 * float(slack_per_row.min()))
    else:
        u = np.full(n, 1e-3)
    f = g @ u - h
    if (f >= 0).any():
        raise FlowError("internal: initial point not strictly feasible")
    lam = np.clip(-1.0 / f, 1e-8, 1e8)
    nu = np.zeros(p)
    mu_ipm = 10.0
    status = "iteration_limit"
    it = 0

    for it in range(1, max_iter + 1):
        eta_hat = float(-f @ lam)
        t_inv = eta_hat / (mu_ipm * m)
        r_dual, r_cent, r_pri, f, grad = _pd_residuals(program, u, lam, nu, t_inv)

        phi_val = program.phi(u)
        rel_dual = np.abs(r_dual).max() / (1.0 + np.abs(grad).max())
        rel_pri = np.abs(r_pri).max() / (1.0 + np.abs(u).max()) if p else 0.0
        rel_gap = eta_hat / (1.0 + abs(phi_val))
        if rel_dual <= 0.1 * tol and rel_pri <= 0.1 * tol and rel_gap <= 0.1 * tol:
            status = "optimal"
            break

        _, _, hess = program.phi_grad_hess(u)
        d = lam / (-f)
        m11 = hess + (g.T * d) @ g
        rhs1 = -(r_dual + g.T @ (r_cent / f))
        if p:
            kkt_mat = np.zeros((n + p, n + p))
            kkt_mat[:n, :n] = m11
            kkt_mat[:n, n:] = a_eq.T
            kkt_mat[n:, :n] = a_eq
            kkt_mat[n:, n:] = -1e-12 * np.eye(p)
            rhs = np.concatenate([rhs1, -r_pri])
        else:
            kkt_mat = m11
            rhs = rhs1
        try:
            sol = np.linalg.solve(kkt_mat, rhs)
        except np.linalg.LinAlgError:
            kkt_mat[:n, :n] += 1e-10 * np.eye(n)
            sol = np.linalg.solve(kkt_mat, rhs)
        du = sol[:n]
        dnu = sol[n:] if p else np.zeros(0)
        dlam = (r_cent - lam * (g @ du)) / f

        step = 1.0
        neg = dlam < 0
        if neg.any():
            step = min(1.0, 0.99 * float((-lam[neg] / dlam[neg]).min()))
        for _ in range(60):
            if ((g @ (u + step * du) - h) < 0).all():
                break
            step *= 0.5
        else:
            raise FlowError("interior-point line search failed to stay feasible")

        norm0 = math.sqrt(
            float(r_dual @ r_dual) + float(r_cent @ r_cent) + float(r_pri @ r_pri)
        )
        for _ in range(60):
            u_n = u + step * du
            lam_n = lam + step * dlam
            nu_n = nu + step * dnu
            rd, rc, rp, f_n, _ = _pd_residuals(program, u_n, lam_n, nu_n, t_inv)
            norm1 = math.sqrt(float(rd @ rd) + float(rc @ rc) + float(rp @ rp))
            if norm1 <= (1.0 - 0.01 * step) * norm0:
                break
            step *= 0.5
        u, lam, nu, f = u_n, lam_n, nu_n, f_n

    if status != "optimal":
        raise FlowError(f"interior-point did not converge in {max_iter} iterations")

    kkt = _kkt_report(program, u, lam, nu)
    return _package_solution(program, u, status, it, kkt, lam=lam, nu=nu)


def _kkt_report(program, u, lam, nu) -> dict[str, float]:
    _, grad, _ = program.phi_grad_hess(u)
    f = program.g_ineq @ u - program.h_ineq
    r_dual = grad + program.g_ineq.T @ lam
    if program.a_eq.size:
        r_dual = r_dual + program.a_eq.T @ nu
    r_pri = program.a_eq @ u if program.a_eq.size else np.zeros(1)
    comp = np.abs(lam * f)
    return {
        "stationarity": float(np.abs(r_dual).max() / (1.0 + np.abs(grad).max())),
        "primal": float(np.abs(r_pri).max() / (1.0 + np.abs(u).max())),
        "complementarity": float(comp.max() / (1.0 + abs(program.phi(u)))),
        "max_ineq_violation": float(max(f.max(), 0.0)) if f.size else 0.0,
    }


def _package_solution(
    program: FlowProgram,
    u: np.ndarray,
    status: str,
    iterations: int,
    kkt: dict[str, float],
    lam=None,
    nu=None,
) -> FlowSolution:
    scale = program.scale_bits
    flows = {
        key: scale * float(u[i]) if u.size else 0.0
        for key, i in program.index.items()
    }
    mu = {}
    for task in program.tasks:
        for k in range(1, program.n_frames + 1):
            terms = program.mu_terms.get((task.tid, k))
            mu[(task.tid, k)] = (
                scale * float(u[terms].sum()) if terms else 0.0
            )
    d_bits: dict[tuple[Arc, str], float] = {}
    for a in program.trrg.arcs:
        if a.kind != "computing":
            continue
        for task in program.tasks:
            inflow = sum(
                flows.get((b, task.tid), 0.0)
                for b in program.trrg.arcs
                if b.kind == "communication" and b.head == a.tail
            )
            d_bits[(a, task.tid)] = inflow
    p_bs = {}
    bs_total = 0.0
    for task in program.tasks:
        theta = (
            program.theta_bits(u, task.tid)
            if task.tid in program.task_mu_vars and u.size
            else 0.0
        )
        for leg in program.bs_legs.get(task.tid, []):
            watts = program.leg_power(theta, leg) if leg.kappa != math.inf else 0.0
            p_bs[(task.tid, leg.leg)] = watts
            bs_total += watts
    utility, power = (
        program.objective_parts(u)
        if u.size
        else (len(program.tasks) * 1.0, 0.0)
    )
    objective = utility - program.channel.w_p * power
    throughput = float(sum(mu.values()))
    return FlowSolution(
        flows_bits=flows,
        mu_bits=mu,
        d_bits=d_bits,
        p_bs_watts=p_bs,
        objective=objective,
        throughput_bits=throughput,
        bs_power_watts=bs_total,
        status=status,
        iterations=iterations,
        kkt=kkt,
    )


# ---------------------------------------------------------------------------
# baselines and dumps


def baseline_mask(
    trrg: Trrg,
    capacities: dict[Arc, float],
    mode: str,
    failed_comm: frozenset[Arc] | set[Arc] = frozenset(),
) -> dict[Arc, float]:
    """Capacity overrides defining the comparison approaches.

    robust: unchanged. <vid>only: only that vehicle's cache persists.
    withoutcarry: no cache at all. norobust: the caller passes the
    communication arcs whose realized channel violated the AV constraint and
    they are zeroed here.
    """
    mode_l = mode.lower()
    out = dict(capacities)
    if mode_l == "robust":
        return out
    if mode_l == "norobust":
        for a in failed_comm:
            out[a] = 0.0
        return out
    if mode_l == "withoutcarry":
        keep: set[str] = set()
    elif mode_l.endswith("only") and len(mode_l) > 4:
        keep = {mode_l[:-4]}
    else:
        raise FlowError(f"unknown approach {mode!r}")
    for a in list(out):
        if a.kind == "carry" and a.tail.vid.lower() not in keep:
            out[a] = 0.0
    return out


def dump_solution(solution: FlowSolution, program: FlowProgram) -> str:
    """CSV dump: one row per arc-task flow plus a trailing summary row."""
    lines = ["frame,arc,task,flow_bits,capacity_bits"]
    for (arc, tid) in sorted(solution.flows_bits, key=lambda k: (k[0], k[1])):
        cap = program.capacities.get(arc, 0.0)
        lines.append(
            f"{arc.frame},{arc.label()},{tid},"
            f"{format(solution.flows_bits[(arc, tid)], '.10g')},{format(cap, '.10g')}"
        )
    for (arc, tid) in sorted(solution.d_bits, key=lambda k: (k[0], k[1])):
        cap = program.capacities.get(arc, 0.0)
        lines.append(
            f"{arc.frame},{arc.label()},{tid},"
            f"{format(solution.d_bits[(arc, tid)], '.10g')},{format(cap, '.10g')}"
        )
    lines.append(
        "summary,"
        f"objective={format(solution.objective, '.12g')};"
        f"throughput_bits={format(solution.throughput_bits, '.12g')};"
        f"bs_power_watts={format(solution.bs_power_watts, '.12g')},,,"
    )
    return "\n".join(lines) + "\n"
