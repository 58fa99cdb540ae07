"""Dense LP and proximal-QP kernels for the cutting-plane and bundle steps.

Dual dimensions are small (tens), so both kernels use dense arithmetic.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import SolverError

_PIVOT_TOL = 1e-11


@dataclass
class LinearProgram:
    """minimize objective @ x  s.t.  coeff @ x >= rhs (each row),  lo <= x <= hi."""

    objective: np.ndarray
    rows: list = field(default_factory=list)
    lo: np.ndarray = None
    hi: np.ndarray = None

    def __post_init__(self):
        self.objective = np.asarray(self.objective, dtype=float)
        d = len(self.objective)
        self.lo = np.zeros(d) if self.lo is None else np.asarray(self.lo, dtype=float)
        self.hi = np.asarray(self.hi, dtype=float)
        if self.lo.shape != (d,) or self.hi.shape != (d,):
            raise ValueError("bounds must match the objective dimension")
        if not (np.all(np.isfinite(self.lo)) and np.all(np.isfinite(self.hi))):
            raise ValueError("LP variables need finite box bounds")
        if np.any(self.lo > self.hi):
            raise ValueError("empty box")


def _pivot(T, r, col):
    T[r] /= T[r, col]
    colv = T[:, col].copy()
    colv[r] = 0.0
    T -= np.outer(colv, T[r])


def _simplex(T, basis, allowed, max_iters):
    """Bland's-rule primal simplex on tableau T (last row = reduced costs)."""
    m = T.shape[0] - 1
    for _ in range(max_iters):
        rc = T[-1, :-1]
        entering = next((j for j in allowed if rc[j] < -1e-9), None)
        if entering is None:
            return
        colv = T[:m, entering]
        pos = np.nonzero(colv > _PIVOT_TOL)[0]
        if len(pos):
            ratios = T[pos, -1] / colv[pos]
            tied = pos[ratios <= ratios.min() + 1e-12]
            best_r = min(tied, key=lambda i: basis[i])
        else:
            best_r = None
        if best_r is None:
            raise SolverError("LP unbounded (cannot happen with finite boxes)")
        _pivot(T, best_r, entering)
        basis[best_r] = entering
    raise SolverError(f"simplex iteration cap {max_iters} exceeded")


def lp_solve(lp: LinearProgram, max_iters=50_000):
    """Two-phase dense simplex with Bland's rule. Returns ``(x, value)``.

    Bounds are handled by shifting ``y = x - lo`` and adding explicit rows
    ``y <= hi - lo``, which keeps every iterate bounded.
    """
    c = lp.objective
    d = len(c)
    A = np.array([np.asarray(a, dtype=float) for a, _ in lp.rows]).reshape(len(lp.rows), d)
    b = np.array([float(r) for _, r in lp.rows])
    R = len(b)
    u = lp.hi - lp.lo
    bshift = b - A @ lp.lo

    # columns: y (d) | surplus r (R) | bound slack v (d) | artificial (R + d)
    n_rows = R + d
    n_struct = d + R + d
    T = np.zeros((n_rows + 1, n_struct + n_rows + 1))
    T[:R, :d] = A
    T[:R, d:d + R] = -np.eye(R)
    T[:R, -1] = bshift
    T[R:n_rows, :d] = np.eye(d)
    T[R:n_rows, d + R:n_struct] = np.eye(d)
    T[R:n_rows, -1] = u
    neg = T[:n_rows, -1] < 0
    T[:n_rows][neg] *= -1.0
    T[:n_rows, n_struct:n_struct + n_rows] = np.eye(n_rows)
    basis = list(range(n_struct, n_struct + n_rows))

    # phase I: minimize the sum of artificials
    T[-1, :] = -T[:n_rows].sum(axis=0)
    T[-1, n_struct:n_struct + n_rows] = 0.0
    _simplex(T, basis, range(n_struct + n_rows), max_iters)
    if -T[-1, -1] > 1e-7 * max(1.0, np.abs(T[:n_rows, -1]).max(initial=0.0)):
        raise SolverError("LP infeasible")
    for i, bv in enumerate(basis):
        if bv >= n_struct:
            cols = [j for j in range(n_struct) if abs(T[i, j]) > 1e-9]
            if cols:
                _pivot(T, i, cols[0])
                basis[i] = cols[0]

    # phase II on structural columns only
    cost = np.zeros(n_struct)
    cost[:d] = c
    T[-1, :] = 0.0
    T[-1, :n_struct] = cost
    for i, bv in enumerate(basis):
        if bv < n_struct and cost[bv] != 0.0:
            T[-1] -= cost[bv] * T[i]
    _simplex(T, basis, range(n_struct), max_iters)
    if np.any(T[-1, :n_struct] < -1e-7):
        raise SolverError("simplex stopped without a nonnegative reduced-cost certificate")

    y = np.zeros(n_struct + n_rows)
    for i, bv in enumerate(basis):
        y[bv] = T[i, -1]
    x = np.clip(y[:d] + lp.lo, lp.lo, lp.hi)
    return x, float(c @ x)


# ------------------------------------------------------------------ prox QP


@dataclass
class ProxQp:
    """min over lam >= 0 (or free lam when ``nonneg`` is False) of
    max_i [g_i + s_i.(lam - lam_i)] + beta/2 |lam - center|^2."""

    cuts: list
    center: np.ndarray
    beta: float
    nonneg: bool = True

    def __post_init__(self):
        if self.beta <= 0:
            raise ValueError("beta must be positive")
        if not self.cuts:
            raise ValueError("prox QP needs at least one cut")
        self.center = np.asarray(self.center, dtype=float)
        self.S = np.array([np.asarray(s, dtype=float) for _, s, _ in self.cuts]).reshape(len(self.cuts), -1)
        P = np.array([np.asarray(p, dtype=float) for _, _, p in self.cuts]).reshape(self.S.shape)
        g = np.array([float(v) for v, _, _ in self.cuts])
        # model pieces as a_i + s_i.lam
        self.a = g - np.einsum("ij,ij->i", self.S, P)

    def model(self, lam) -> float:
        return float(np.max(self.a + self.S @ lam))

    def objective(self, lam) -> float:
        diff = lam - self.center
        return self.model(lam) + 0.5 * self.beta * float(diff @ diff)

    def primal_of(self, theta):
        lam = self.center - self.S.T @ theta / self.beta
        return np.maximum(0.0, lam) if self.nonneg else lam

    def dual_value(self, theta) -> float:
        lam = self.primal_of(theta)
        diff = lam - self.center
        return float(theta @ (self.a + self.S @ lam) + 0.5 * self.beta * diff @ diff)

    def gap(self, theta) -> float:
        return self.objective(self.primal_of(theta)) - self.dual_value(theta)


def _line_argmax(qp: ProxQp, p0, p1):
    """Exact maximizer of the concave dual on the segment p0 -> p1.

    Along the segment the dual slope is continuous, nonincreasing and
    piecewise linear with kinks where a coordinate of lam hits zero, so the
    root is found by scanning the sorted kinks.
    """
    dirn = p1 - p0
    q = qp.center - qp.S.T @ p0 / qp.beta
    r = qp.S.T @ dirn / qp.beta
    ad = float(dirn @ qp.a)
    Sd = qp.S.T @ dirn

    def slope(t):
        lam = q - t * r
        return ad + float(Sd @ (np.maximum(0.0, lam) if qp.nonneg else lam))

    nz = (np.abs(r) > 0) if qp.nonneg else np.zeros(len(r), dtype=bool)
    kinks = q[nz] / r[nz]
    pts = np.concatenate(([0.0], np.sort(kinks[(kinks > 0) & (kinks < 1)]), [1.0]))
    vals = [slope(t) for t in pts]
    if vals[0] <= 0:
        return 0.0
    if vals[-1] >= 0:
        return 1.0
    for k in range(1, len(pts)):
        if vals[k] <= 0:
            t0, t1, d0, d1 = pts[k - 1], pts[k], vals[k - 1], vals[k]
            return t0 + d0 * (t1 - t0) / (d0 - d1)
    return 1.0


def _solve_enumerate(qp: ProxQp):
    """Exact solve for at most three cuts by nested line maximization of the dual."""
    k = len(qp.a)
    if k == 1:
        return np.ones(1)
    if k == 2:
        t = _line_argmax(qp, np.array([0.0, 1.0]), np.array([1.0, 0.0]))
        return np.array([t, 1.0 - t])
    if k != 3:
        raise ValueError("enumeration handles at most three cuts")

    def inner(u):
        p0 = np.array([0.0, 1.0 - u, u])
        p1 = np.array([1.0 - u, 0.0, u])
        t = _line_argmax(qp, p0, p1)
        theta = p0 + t * (p1 - p0)
        grad = qp.a + qp.S @ qp.primal_of(theta)
        return theta, float(np.array([-t, -(1.0 - t), 1.0]) @ grad)

    theta, d = inner(0.0)
    if d <= 0:
        return theta
    # at the vertex u = 1 the segment collapses; the left derivative is g3 - max(g1, g2)
    vertex = np.array([0.0, 0.0, 1.0])
    grad = qp.a + qp.S @ qp.primal_of(vertex)
    if grad[2] >= max(grad[0], grad[1]):
        return vertex
    lo, hi = 0.0, 1.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid in (lo, hi):
            break
        theta, d = inner(mid)
        if d > 0:
            lo = mid
        else:
            hi = mid
    return inner(0.5 * (lo + hi))[0]


def _polish(qp: ProxQp, active, free):
    """Exact solve once the active cuts and the unclamped coordinates are known:
    equal model values on the active cuts, weights on the simplex."""
    if len(active) == 0:
        return None
    SA = qp.S[active][:, free]
    k = len(active)
    K = np.zeros((k + 1, k + 1))
    K[:k, :k] = SA @ SA.T / qp.beta
    K[:k, k] = 1.0
    K[k, :k] = 1.0
    rhs = np.concatenate((qp.a[active] + SA @ qp.center[free], [1.0]))
    sol = np.linalg.lstsq(K, rhs, rcond=None)[0]
    if np.any(sol[:k] < -1e-12):
        return None
    out = np.zeros(len(qp.a))
    out[active] = np.maximum(sol[:k], 0.0)
    total = out.sum()
    return out / total if total > 0 else None


def _solve_iterative(qp: ProxQp, tol, max_iters):
    """Primal-dual interior point (Mehrotra predictor-corrector) on

        min t + beta/2 |lam - center|^2   s.t.  a_i + s_i.lam <= t,  lam >= 0.

    The cut multipliers sum to one at the optimum and are returned, normalized,
    as the dual simplex point.
    """
    k, d = qp.S.shape
    beta, c = qp.beta, qp.center
    # z = (lam, t); constraints G z <= h
    G = np.hstack((qp.S, -np.ones((k, 1))))
    h = -qp.a.copy()
    if qp.nonneg:
        G = np.vstack((G, np.hstack((-np.eye(d), np.zeros((d, 1))))))
        h = np.concatenate((h, np.zeros(d)))
    H = np.zeros((d + 1, d + 1))
    H[:d, :d] = beta * np.eye(d)
    q = np.concatenate((-beta * c, [1.0]))

    lam0 = np.maximum(c, 0.0) if qp.nonneg else c.copy()
    z = np.concatenate((lam0, [qp.model(lam0)]))
    w = np.maximum(h - G @ z, 1.0)
    y = np.ones(len(h))
    theta = np.full(k, 1.0 / k)
    best_gap = qp.gap(theta)

    def max_step(v, dv):
        neg = dv < 0
        return min(1.0, float(np.min(-v[neg] / dv[neg]))) if np.any(neg) else 1.0

    for it in range(1, max_iters + 1):
        r_d = H @ z + q + G.T @ y
        r_p = G @ z + w - h
        mu = float(w @ y) / len(w)
        if np.all(y[:k] > 0):
            cands = [y[:k] / y[:k].sum()]
            if mu < 1e-6 * (1.0 + abs(z[-1])):
                free = w[k:] > y[k:] if qp.nonneg else np.ones(d, dtype=bool)
                cands.append(_polish(qp, np.nonzero(w[:k] < y[:k])[0], free))
            for th in cands:
                if th is None:
                    continue
                gp = qp.gap(th)
                if gp < best_gap:
                    theta, best_gap = th, gp
            if best_gap <= tol * max(1.0, abs(qp.objective(qp.primal_of(theta)))):
                return theta, it
        D = y / w
        M = H + G.T @ (D[:, None] * G)

        def direction(r_c):
            rhs = -r_d - G.T @ (D * r_p + r_c / w)
            dz = np.linalg.lstsq(M, rhs, rcond=None)[0]
            dy = D * (G @ dz + r_p) + r_c / w
            dw = (r_c - w * dy) / y
            return dz, dw, dy

        dz, dw, dy = direction(-w * y)
        a_aff = min(max_step(w, dw), max_step(y, dy))
        mu_aff = float((w + a_aff * dw) @ (y + a_aff * dy)) / len(w)
        sigma = (mu_aff / mu) ** 3 if mu > 0 else 0.0
        dz, dw, dy = direction(-w * y - dw * dy + sigma * mu)
        a = 0.99 * min(max_step(w, dw), max_step(y, dy))
        z, w, y = z + a * dz, w + a * dw, y + a * dy
        if mu == 0.0 or not (np.all(np.isfinite(z)) and np.all(w > 0) and np.all(y > 0)):
            break
    return theta, max_iters


def prox_qp_solve(qp: ProxQp, tol=1e-8, max_iters=200, method="auto"):
    """Solve the bundle prox problem. Returns ``(lam, model_value)``.

    ``method`` is ``"enumerate"`` (exact, at most three cuts), ``"iterative"``
    (interior point) or ``"auto"``. The iterative path certifies optimality by the primal-dual
    gap, ``gap <= tol * max(1, |objective|)``, and raises
    :class:`SolverError` when it cannot reach that within ``max_iters``.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    if method == "auto":
        method = "enumerate" if len(qp.a) <= 3 else "iterative"
    if method == "enumerate":
        theta = _solve_enumerate(qp)
    elif method == "iterative":
        theta, _ = _solve_iterative(qp, tol, max_iters)
        lam = qp.primal_of(theta)
        if qp.gap(theta) > tol * max(1.0, abs(qp.objective(lam))):
            raise SolverError(f"prox QP did not converge in {max_iters} iterations (gap {qp.gap(theta):.3g})")
    else:
        raise ValueError(f"unknown method {method!r}")
    lam = qp.primal_of(theta)
    return lam, qp.model(lam)
