"""Brute-force reference computations for cross-checking the solvers.

Everything here is written with explicit loops in extended precision
(``np.longdouble`` or ``decimal``) and deliberately imports nothing from the
solver or composition modules. Slow by design; instance sizes are capped.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from decimal import Decimal, localcontext

import numpy as np

from .mdp import FiniteMdp, RewardTable

LD = np.longdouble
MAX_DENSE_UNKNOWNS = 4096
TINY_MAX_STATES = 3
TINY_MAX_ACTIONS = 2
DECIMAL_DIGITS = 50


class OracleInapplicable(ArithmeticError):
    """The oracle cannot produce a trustworthy answer for this instance."""


@dataclass(frozen=True)
class HorizonConfig:
    horizon: int

    @classmethod
    def for_tolerance(cls, tol: float, discount: float, bound: float) -> "HorizonConfig":
        """Smallest H with gamma^H * 2B / (1 - gamma) <= tol."""
        if discount == 0.0 or bound <= 0.0:
            return cls(1)
        h = math.ceil(math.log(tol * (1.0 - discount) / (2.0 * bound)) / math.log(discount))
        return cls(max(1, h))


def _ld(a):
    return np.asarray(a, dtype=LD)


def direct_soft_value(row, temperature: float) -> float:
    """alpha * ln sum exp(q / alpha) in 50-digit decimal arithmetic, no shift."""
    with localcontext() as ctx:
        ctx.prec = DECIMAL_DIGITS
        alpha = Decimal(repr(float(temperature)))
        total = sum((Decimal(repr(float(q))) / alpha).exp() for q in row)
        return float(alpha * total.ln())


def direct_renyi_half(p, q) -> float:
    """-2 ln sum sqrt(p q) in 50-digit decimal arithmetic."""
    with localcontext() as ctx:
        ctx.prec = DECIMAL_DIGITS
        bc = sum((Decimal(repr(float(a))) * Decimal(repr(float(b)))).sqrt() for a, b in zip(p, q))
        if bc == 0:
            return math.inf
        return float(-2 * bc.ln())


def mean_table(tables):
    """Entrywise mean of equally shaped 2-d arrays, accumulated in long double."""
    rows, cols = np.shape(tables[0])
    out = np.zeros((rows, cols), dtype=LD)
    for s in range(rows):
        for a in range(cols):
            acc = LD(0)
            for t in tables:
                acc += LD(t[s][a])
            out[s, a] = acc / LD(len(tables))
    return out


def _naive_soft_values(q, alpha):
    S, A = q.shape
    v = np.zeros(S, dtype=LD)
    for s in range(S):
        acc = LD(0)
        for a in range(A):
            acc += np.exp(q[s, a] / alpha)
        if not np.isfinite(acc) or acc == 0:
            raise OracleInapplicable("unshifted log-sum-exp overflowed in extended precision")
        v[s] = alpha * np.log(acc)
    return v


def _expect(P, s, a, f):
    acc = LD(0)
    for s_next in range(P.shape[2]):
        if P[s, a, s_next] != 0:
            acc += P[s, a, s_next] * f[s_next]
    return acc


def _soft_backup_loops(P, gamma, r, q, alpha):
    S, A = r.shape
    v = _naive_soft_values(q, alpha)
    out = np.zeros((S, A), dtype=LD)
    for s in range(S):
        for a in range(A):
            out[s, a] = r[s, a] + gamma * _expect(P, s, a, v)
    return out


def finite_horizon_soft_q(mdp: FiniteMdp, reward: RewardTable, temperature: float,
                          horizon: int) -> np.ndarray:
    """Exactly ``horizon`` soft backups from Q = 0, unshifted, in long double."""
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    P, r = _ld(mdp.transition), _ld(reward.values)
    gamma, alpha = LD(mdp.discount), LD(temperature)
    q = np.zeros(r.shape, dtype=LD)
    with np.errstate(over="ignore"):
        for _ in range(horizon):
            q = _soft_backup_loops(P, gamma, r, q, alpha)
    return q


def _policy_entropy(pi):
    S, A = pi.shape
    h = np.zeros(S, dtype=LD)
    for s in range(S):
        for a in range(A):
            if pi[s, a] > 0:
                h[s] -= pi[s, a] * np.log(pi[s, a])
    return h


def linear_solve_policy_eval(mdp: FiniteMdp, reward: RewardTable, policy_probs,
                             temperature: float, refinement_steps: int = 3) -> np.ndarray:
    """Solve (I - gamma P_pi) q = r + gamma P (alpha H(pi)) densely.

    The float64 LU solution is polished by iterative refinement with
    long-double residuals.
    """
    S, A = mdp.shape
    n = S * A
    if n > MAX_DENSE_UNKNOWNS:
        raise OracleInapplicable(f"{n} unknowns exceeds the dense-solve cap {MAX_DENSE_UNKNOWNS}")
    P = _ld(mdp.transition)
    pi = _ld(policy_probs)
    gamma, alpha = LD(mdp.discount), LD(temperature)
    bonus = alpha * _policy_entropy(pi)

    M = np.zeros((n, n), dtype=LD)
    rhs = np.zeros(n, dtype=LD)
    for s in range(S):
        for a in range(A):
            i = s * A + a
            M[i, i] += 1
            rhs[i] = LD(reward.values[s, a]) + gamma * _expect(P, s, a, bonus)
            for s_next in range(S):
                for a_next in range(A):
                    M[i, s_next * A + a_next] -= gamma * P[s, a, s_next] * pi[s_next, a_next]
    M64 = M.astype(np.float64)
    if np.linalg.cond(M64) > 1e12:
        raise OracleInapplicable("policy-evaluation system is numerically singular")
    x = _ld(np.linalg.solve(M64, rhs.astype(np.float64)))
    for _ in range(refinement_steps):
        resid = rhs - M @ x
        x = x + _ld(np.linalg.solve(M64, resid.astype(np.float64)))
    return x.reshape(S, A)


def state_marginals(mdp: FiniteMdp, policy_probs, start: int, steps: int) -> np.ndarray:
    """Exact state distributions at times 0..steps by powering the induced chain."""
    S, A = mdp.shape
    chain = np.zeros((S, S))
    for s in range(S):
        for a in range(A):
            for s_next in range(S):
                chain[s, s_next] += policy_probs[s][a] * mdp.transition[s, a, s_next]
    dist = np.zeros(S)
    dist[start] = 1.0
    out = [dist]
    for _ in range(steps):
        dist = dist @ chain
        out.append(dist)
    return np.array(out)


def _divergence_rows(pi1, pi2):
    S, A = pi1.shape
    div = np.zeros(S, dtype=LD)
    for s in range(S):
        bc = LD(0)
        for a in range(A):
            bc += np.sqrt(pi1[s, a] * pi2[s, a])
        div[s] = np.inf if bc == 0 else max(LD(0), -2 * np.log(bc))
    return div


def _iterate(step, x0, horizon):
    x = x0
    for _ in range(horizon):
        x = step(x)
    return x


def unrolled_c_star(mdp: FiniteMdp, pi1_probs, pi2_probs, divergence_factor: float,
                    horizon: int) -> np.ndarray:
    """``horizon`` steps of C <- gamma E[factor * D(s') + max C(s', .)] from zero."""
    S, A = mdp.shape
    P, gamma = _ld(mdp.transition), LD(mdp.discount)
    src = LD(divergence_factor) * _divergence_rows(_ld(pi1_probs), _ld(pi2_probs))

    def step(c):
        nxt = [src[t] + max(c[t, a] for a in range(A)) for t in range(S)]
        out = np.zeros((S, A), dtype=LD)
        for s in range(S):
            for a in range(A):
                out[s, a] = gamma * _expect(P, s, a, nxt)
        return out

    return _iterate(step, np.zeros((S, A), dtype=LD), horizon)


def unrolled_d_star(mdp: FiniteMdp, pi_sigma_probs, c_star, horizon: int) -> np.ndarray:
    """``horizon`` steps of D <- gamma E_{s'} E_{a'~pi}[C*(s',a') + D(s',a')] from zero."""
    S, A = mdp.shape
    P, gamma = _ld(mdp.transition), LD(mdp.discount)
    pi, c = _ld(pi_sigma_probs), _ld(c_star)

    def step(d):
        nxt = []
        for t in range(S):
            acc = LD(0)
            for a in range(A):
                if pi[t, a] > 0:
                    acc += pi[t, a] * (c[t, a] + d[t, a])
            nxt.append(acc)
        out = np.zeros((S, A), dtype=LD)
        for s in range(S):
            for a in range(A):
                out[s, a] = gamma * _expect(P, s, a, nxt)
        return out

    return _iterate(step, np.zeros((S, A), dtype=LD), horizon)


def exhaustive_tiny_certificate(mdp: FiniteMdp, reward1: RewardTable, reward2: RewardTable,
                                tol: float = 1e-10, divergence_factor: float = 0.5) -> dict:
    """Recompute every certificate field for a tiny two-task instance (temperature 1).

    Returns a dict keyed like the production certificate's fields.
    """
    S, A = mdp.shape
    if S > TINY_MAX_STATES or A > TINY_MAX_ACTIONS:
        raise OracleInapplicable(f"tiny oracle is capped at {TINY_MAX_STATES} states, "
                                 f"{TINY_MAX_ACTIONS} actions")
    P = _ld(mdp.transition)
    gamma, one = LD(mdp.discount), LD(1)
    r1, r2 = _ld(reward1.values), _ld(reward2.values)
    rc = (r1 + r2) / 2
    # accuracy well past the 1e-8 comparison
    inner_tol = tol * 1e-2

    def soft_horizon(r):
        bound = float(np.max(np.abs(r))) + math.log(A)
        return HorizonConfig.for_tolerance(inner_tol, mdp.discount, bound).horizon

    def soft_q(r):
        return _iterate(lambda q: _soft_backup_loops(P, gamma, r, q, one),
                        np.zeros((S, A), dtype=LD), soft_horizon(r))

    def boltzmann(q):
        v = _naive_soft_values(q, one)
        pi = np.zeros((S, A), dtype=LD)
        for s in range(S):
            for a in range(A):
                pi[s, a] = np.exp(q[s, a] - v[s])
        return pi, v

    q1, q2 = soft_q(r1), soft_q(r2)
    pi1, _ = boltzmann(q1)
    pi2, _ = boltzmann(q2)
    q_sigma = (q1 + q2) / 2
    pi_sigma, v_sigma = boltzmann(q_sigma)
    q_c = soft_q(rc)
    v_c = _naive_soft_values(q_c, one)

    def evaluate(q):
        h = _policy_entropy(pi_sigma)
        out = np.zeros((S, A), dtype=LD)
        for s in range(S):
            for a in range(A):
                acc = LD(0)
                for s_next in range(S):
                    inner = h[s_next]
                    for a_next in range(A):
                        inner += pi_sigma[s_next, a_next] * q[s_next, a_next]
                    acc += P[s, a, s_next] * inner
                out[s, a] = rc[s, a] + gamma * acc
        return out

    q_pi = _iterate(evaluate, np.zeros((S, A), dtype=LD), soft_horizon(rc))

    div = _divergence_rows(pi1, pi2)

    def c_fixed_point(factor):
        bound = float(np.max(LD(factor) * div))
        h = HorizonConfig.for_tolerance(inner_tol, mdp.discount, bound).horizon
        return unrolled_c_star(mdp, pi1, pi2, factor, h)

    c_star = c_fixed_point(divergence_factor)
    c_main = c_fixed_point(1.0)

    d_src = np.array([sum(pi_sigma[s, a] * c_star[s, a] for a in range(A)) for s in range(S)], dtype=LD)
    d_h = HorizonConfig.for_tolerance(inner_tol, mdp.discount, float(np.max(d_src))).horizon
    d_star = unrolled_d_star(mdp, pi_sigma, c_star, d_h)
    c_row_max = np.array([max(c_star[s, a] for a in range(A)) for s in range(S)], dtype=LD)

    fields = {
        "c_star": c_star,
        "c_star_main": c_main,
        "d_star": d_star,
        "q_sigma": q_sigma,
        "q_compound": q_c,
        "q_pi_sigma": q_pi,
        "lemma_upper_slack": q_sigma - q_c,
        "lemma_lower_slack": q_c - (q_sigma - c_star),
        "theorem_slack": q_pi - (q_c - d_star),
        "corollary_upper_slack": v_sigma - v_c,
        "corollary_lower_slack": v_c - (v_sigma - c_row_max),
    }
    return {k: np.asarray(v, dtype=np.float64) for k, v in fields.items()}
