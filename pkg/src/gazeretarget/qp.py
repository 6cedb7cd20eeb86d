"""Sparse convex QP solver.

Solves

    minimize   0.5 x'Px + q'x
    subject to l <= Ax <= u

with a primal-dual interior-point iteration (Mehrotra predictor-corrector).
Rows with l == u are kept as hard equalities; every finite inequality side
carries its own slack and multiplier.  Each iteration factors one sparse
quasi-definite matrix

    [[P + A_in' D A_in, A_eq'], [A_eq, 0]]

with a sparse LU, so banded programs stay O(n) per step.  Problem data are
Ruiz-equilibrated first; residuals are always reported in the original
(unscaled) problem space.  After convergence an active-set polish step
recovers the solution to near machine precision when the active set is
identified correctly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import splu

from .errors import ValidationError

_INF = 1e30
_REG = 1e-8
_CERT_TRIGGER = 1e7


@dataclass(frozen=True, eq=False)
class ConvexProgram:
    """Quadratic objective and two-sided linear constraints."""

    P: sparse.csc_matrix
    q: np.ndarray
    A: sparse.csc_matrix
    l: np.ndarray
    u: np.ndarray

    @property
    def n(self) -> int:
        return self.P.shape[0]

    @property
    def m(self) -> int:
        return self.A.shape[0]

    def validate(self) -> None:
        n, m = self.n, self.m
        if self.P.shape != (n, n) or self.A.shape[1] != n:
            raise ValidationError("objective/constraint dimensions disagree")
        if self.q.shape != (n,) or self.l.shape != (m,) or self.u.shape != (m,):
            raise ValidationError("vector lengths disagree with matrices")
        asym = abs(self.P - self.P.T)
        scale = max(1.0, abs(self.P).max() if self.P.nnz else 0.0)
        if asym.nnz and asym.max() > 1e-9 * scale:
            raise ValidationError("objective matrix must be symmetric")
        if self.P.diagonal().min(initial=0.0) < -1e-12:
            raise ValidationError("objective matrix must be PSD")
        if np.any(np.isnan(self.l)) or np.any(np.isnan(self.u)):
            raise ValidationError("constraint bounds must not be NaN")
        if np.any(self.l > self.u):
            raise ValidationError("constraint bounds need l <= u")


@dataclass
class Solution:
    x: np.ndarray
    y: np.ndarray
    objective_value: float
    primal_residual: float
    dual_residual: float
    iterations: int
    status: str
    history: list | None = None


def program(P, q, A, l, u) -> ConvexProgram:
    """Normalize inputs into a validated ConvexProgram."""
    prog = ConvexProgram(
        sparse.csc_matrix(P, dtype=float), np.asarray(q, dtype=float),
        sparse.csc_matrix(A, dtype=float) if sparse.issparse(A) or np.size(A)
        else sparse.csc_matrix((0, np.shape(q)[0])),
        np.asarray(l, dtype=float), np.asarray(u, dtype=float))
    prog.validate()
    return prog


def _ruiz(P, q, A, iters):
    n, m = P.shape[0], A.shape[0]
    d = np.ones(n)
    e = np.ones(m)
    c = 1.0
    for _ in range(iters):
        # column inf-norms of [[P, A'], [A, 0]]
        np_col = _col_norms(P)
        na_col = _col_norms(A)
        nat_col = _row_norms(A)
        dn = np.sqrt(np.maximum(np.maximum(np_col, na_col), 1e-12))
        en = np.sqrt(np.maximum(nat_col, 1e-12))
        sd = np.clip(1.0 / dn, 1e-4, 1e4)
        se = np.clip(1.0 / en, 1e-4, 1e4)
        Ds = sparse.diags(sd)
        Es = sparse.diags(se)
        P = (Ds @ P @ Ds).tocsc()
        A = (Es @ A @ Ds).tocsc()
        q = sd * q
        d *= sd
        e *= se
        # cost normalization keeps the objective near unit scale
        pnorm = _col_norms(P)
        g = 1.0 / np.clip(max(np.mean(pnorm) if n else 1.0,
                              np.linalg.norm(q, np.inf)), 1e-6, 1e6)
        P = P * g
        q = q * g
        c *= g
    return P, q, A, d, e, c


def _col_norms(M):
    if M.shape[0] == 0 or M.nnz == 0:
        return np.zeros(M.shape[1])
    return np.asarray(abs(M).max(axis=0).todense()).ravel()


def _row_norms(M):
    if M.shape[0] == 0 or M.nnz == 0:
        return np.zeros(M.shape[0])
    return np.asarray(abs(M).max(axis=1).todense()).ravel()


def _norm(v):
    return float(np.linalg.norm(v, np.inf)) if len(v) else 0.0


def solve(prog: ConvexProgram, eps_abs: float = 1e-6,
          max_iters: int = 20000, *, eps_rel: float = 0.0,
          polish: bool = True, eps_infeas: float = 1e-6,
          x0: np.ndarray | None = None, y0: np.ndarray | None = None,
          collect_history: bool = False, _restore: bool = True) -> Solution:
    """Run the interior-point iteration to the requested tolerance.

    Deterministic for identical inputs.  On the iteration cap the best
    iterate is returned with status "max-iters" (restored to feasibility
    when possible); certified primal or dual infeasibility returns status
    "infeasible".
    """
    prog.validate()
    n, m = prog.n, prog.m
    Pu, qu, Au = prog.P, prog.q, prog.A
    lu_, uu = prog.l, prog.u

    P, q, A, dvec, evec, cscale = _ruiz(Pu.copy().tocsc(), qu.copy(),
                                        Au.copy().tocsc(), 10)

    # row classification from the unscaled bounds
    finite_lo = lu_ > -_INF
    finite_up = uu < _INF
    span = uu - lu_
    is_eq = finite_lo & finite_up & (span <= 1e-12 * np.maximum(1.0, abs(uu)))
    is_in = (finite_lo | finite_up) & ~is_eq

    A_csr = A.tocsr()
    idx_eq = np.flatnonzero(is_eq)
    idx_in = np.flatnonzero(is_in)
    Aeq = A_csr[idx_eq].tocsc()
    Ain = A_csr[idx_in].tocsc()
    AinT = Ain.T.tocsc()
    beq = 0.5 * (lu_ + uu)[idx_eq] * evec[idx_eq]
    has_lo = finite_lo[idx_in]
    has_up = finite_up[idx_in]
    lo_pos = np.flatnonzero(has_lo)
    up_pos = np.flatnonzero(has_up)
    l_in = (lu_[idx_in] * evec[idx_in])[lo_pos]
    u_in = (uu[idx_in] * evec[idx_in])[up_pos]
    mE, mI = len(idx_eq), len(idx_in)
    nL, nU = len(lo_pos), len(up_pos)
    ncomp = nL + nU

    x = np.zeros(n) if x0 is None else np.asarray(x0, float) / dvec
    yE = np.zeros(mE)
    t0 = Ain @ x if mI else np.zeros(0)
    sL = np.maximum(1.0, t0[lo_pos] - l_in)
    sU = np.maximum(1.0, u_in - t0[up_pos])
    yL = np.ones(nL)
    yU = np.ones(nU)
    if y0 is not None:
        yr = np.asarray(y0, float) * cscale / evec
        yL = np.maximum(1.0, -yr[idx_in][lo_pos])
        yU = np.maximum(1.0, yr[idx_in][up_pos])

    history = [] if collect_history else None
    status = "max-iters"
    iters = max_iters
    rp = rd = np.inf
    best = None
    stalls = 0
    polish_done = False
    mu_best = np.inf
    progress_k = 0

    def polish_to_eps(xc, yc):
        # full KKT certificate: polished points satisfy complementarity
        # and dual signs by construction, so eps-small residuals settle it
        pol = _polish(Pu, qu, Au, lu_, uu, xc, yc)
        if pol is not None and pol[2] <= eps_abs and pol[3] <= eps_abs:
            return pol
        return None

    for k in range(1, max_iters + 1):
        xu, yu = _unscale(x, yE, yL, yU, idx_eq, idx_in, lo_pos, up_pos,
                          m, dvec, evec, cscale)
        rp, rd = _residuals_unscaled(Pu, qu, Au, lu_, uu, xu, yu)
        mu_u = ((sL @ yL + sU @ yU) / (ncomp * cscale)) if ncomp else 0.0
        obj_u = float(0.5 * xu @ (Pu @ xu) + qu @ xu)
        if history is not None:
            history.append((k, rp, rd))
        if best is None or max(rp, rd) < best[0]:
            best = (max(rp, rd), xu, yu, rp, rd)
        if mu_u < mu_best:
            mu_best = mu_u
            progress_k = k
        elif k - progress_k >= 30:
            iters = k
            break
        eps_p = eps_abs + eps_rel * _prim_scale(Au, lu_, uu, xu)
        eps_d = eps_abs + eps_rel * _dual_scale(Pu, qu, Au, xu, yu)
        # total complementarity bounds the objective error, so the mean
        # must be held below eps divided by the number of pairs
        if rp <= eps_p and mu_u * max(ncomp, 1) <= eps_abs * (1.0 + abs(obj_u)):
            if rd <= eps_d:
                status = "solved"
                iters = k
                break
            # near-optimal but the recombined multipliers carry
            # cancellation noise on doubly tight row pairs; projecting
            # onto the identified active set repairs the duals
            if polish and m:
                pol = polish_to_eps(xu, yu)
                if pol is not None:
                    xu, yu, rp, rd = pol
                    status = "solved"
                    iters = k
                    polish_done = True
                    break
        ynorm = _norm(yu)
        if ynorm > _CERT_TRIGGER * (1.0 + _norm(qu)) and \
                _primal_infeasible(Au, lu_, uu, yu / ynorm, eps_infeas):
            status = "infeasible"
            iters = k
            break
        xnorm = _norm(xu)
        if xnorm > _CERT_TRIGGER and \
                _dual_infeasible(Pu, qu, Au, lu_, uu, xu / xnorm, eps_infeas):
            status = "infeasible"
            iters = k
            break

        # assemble and factor the reduced Newton system
        w = np.zeros(mI)
        np.add.at(w, lo_pos, yL / sL)
        np.add.at(w, up_pos, yU / sU)
        H = P + AinT @ sparse.diags(w) @ Ain if mI else P.copy()
        if mE:
            K = sparse.bmat([[H, Aeq.T],
                             [Aeq, sparse.csc_matrix((mE, mE))]],
                            format="csc")
            reg = sparse.diags(np.concatenate([np.full(n, _REG),
                                               np.full(mE, -_REG)]))
        else:
            K = H.tocsc()
            reg = _REG * sparse.eye(n, format="csc")
        try:
            fact = splu((K + reg).tocsc())
        except RuntimeError:
            iters = k
            break

        def newton(rcL, rcU):
            rhs_x = -(P @ x + q + (Aeq.T @ yE if mE else 0.0))
            if mI:
                yrow = np.zeros(mI)
                np.add.at(yrow, up_pos, yU)
                np.add.at(yrow, lo_pos, -yL)
                rhs_x -= AinT @ yrow
                t = Ain @ x
                rL = t[lo_pos] - sL - l_in
                rU = t[up_pos] + sU - u_in
                h = np.zeros(mI)
                np.add.at(h, up_pos, rcU / sU - (yU / sU) * rU)
                np.add.at(h, lo_pos, -(rcL / sL + (yL / sL) * rL))
                rhs_x += AinT @ h
            else:
                rL = rU = np.zeros(0)
            rhs = np.concatenate([rhs_x, -(Aeq @ x - beq)]) if mE else rhs_x
            sol = fact.solve(rhs)
            for _ in range(2):
                sol = sol + fact.solve(rhs - K @ sol)
            dx = sol[:n]
            dyE = sol[n:] if mE else np.zeros(0)
            if mI:
                dt = Ain @ dx
                dsL = dt[lo_pos] + rL
                dsU = -rU - dt[up_pos]
                dyL = -(rcL + yL * dsL) / sL
                dyU = -(rcU + yU * dsU) / sU
            else:
                dsL = dsU = dyL = dyU = np.zeros(0)
            return dx, dyE, dsL, dsU, dyL, dyU

        # predictor
        dx, dyE, dsL, dsU, dyL, dyU = newton(sL * yL, sU * yU)
        if not np.all(np.isfinite(dx)):
            iters = k
            break
        if ncomp:
            ap = _step_len(np.concatenate([sL, sU]),
                           np.concatenate([dsL, dsU]), 1.0)
            ad = _step_len(np.concatenate([yL, yU]),
                           np.concatenate([dyL, dyU]), 1.0)
            mu = (sL @ yL + sU @ yU) / ncomp
            mu_aff = ((sL + ap * dsL) @ (yL + ad * dyL) +
                      (sU + ap * dsU) @ (yU + ad * dyU)) / ncomp
            sig = np.clip((max(mu_aff, 0.0) / mu) ** 3, 1e-8, 1.0) \
                if mu > 0 else 0.0
            # corrector reuses the factorization
            dx, dyE, dsL, dsU, dyL, dyU = newton(
                sL * yL - sig * mu + dsL * dyL,
                sU * yU - sig * mu + dsU * dyU)
            if not np.all(np.isfinite(dx)):
                iters = k
                break
            tau = min(0.9999, max(0.99, 1.0 - mu))
            alpha = min(_step_len(np.concatenate([sL, sU]),
                                  np.concatenate([dsL, dsU]), tau),
                        _step_len(np.concatenate([yL, yU]),
                                  np.concatenate([dyL, dyU]), tau))
        else:
            alpha = 1.0
        x = x + alpha * dx
        yE = yE + alpha * dyE
        sL = sL + alpha * dsL
        sU = sU + alpha * dsU
        yL = yL + alpha * dyL
        yU = yU + alpha * dyU
        stalls = stalls + 1 if alpha < 1e-10 else 0
        if stalls >= 3:
            iters = k
            break

    if status == "max-iters":
        # factorization breakdown near mu -> 0 is routine on degenerate
        # faces; the final iterate identifies the active set far better
        # than the best-residual one, so try the projection from both
        xu_f, yu_f = _unscale(x, yE, yL, yU, idx_eq, idx_in, lo_pos, up_pos,
                              m, dvec, evec, cscale)
        rp_f, rd_f = _residuals_unscaled(Pu, qu, Au, lu_, uu, xu_f, yu_f)
        _, xu, yu, rp, rd = best
        if max(rp_f, rd_f) <= max(rp, rd):
            xu, yu, rp, rd = xu_f, yu_f, rp_f, rd_f
        if polish and m:
            for xc, yc in ((xu_f, yu_f), best[1:3]):
                pol = polish_to_eps(xc, yc)
                if pol is not None:
                    xu, yu, rp, rd = pol
                    status = "solved"
                    polish_done = True
                    break
    elif status == "infeasible":
        xu, yu = _unscale(x, yE, yL, yU, idx_eq, idx_in, lo_pos, up_pos,
                          m, dvec, evec, cscale)

    if status == "max-iters" and _restore and m and rp > eps_abs:
        # pull the returned point back inside the constraints
        rest = solve(program(sparse.eye(n, format="csc"), -xu, Au, lu_, uu),
                     eps_abs, 100, polish=False, _restore=False)
        if rest.status == "solved":
            xu = rest.x
            rp, rd = _residuals_unscaled(Pu, qu, Au, lu_, uu, xu, yu)

    if status == "solved" and polish and m and not polish_done:
        polished = _polish(Pu, qu, Au, lu_, uu, xu, yu)
        if polished is not None:
            xp, yp, rpp, rdp = polished
            if rpp <= max(rp, 1e-12) and rdp <= max(rd, 1e-12):
                xu, yu, rp, rd = xp, yp, rpp, rdp

    obj = float(0.5 * xu @ (Pu @ xu) + qu @ xu)
    return Solution(xu, yu, obj, rp, rd, iters, status, history)


def _unscale(x, yE, yL, yU, idx_eq, idx_in, lo_pos, up_pos, m, dvec, evec,
             cscale):
    yrow = np.zeros(m)
    if len(idx_in):
        yin = np.zeros(len(idx_in))
        np.add.at(yin, up_pos, yU)
        np.add.at(yin, lo_pos, -yL)
        yrow[idx_in] = yin
    if len(idx_eq):
        yrow[idx_eq] = yE
    return x * dvec, yrow * evec / cscale


def _residuals_unscaled(P, q, A, l, u, x, y):
    if A.shape[0]:
        Ax = A @ x
        rp = _norm(Ax - np.clip(Ax, l, u))
        rd = _norm(P @ x + q + A.T @ y)
    else:
        rp = 0.0
        rd = _norm(P @ x + q)
    return rp, rd


def _prim_scale(A, l, u, x):
    if not A.shape[0]:
        return 0.0
    Ax = A @ x
    return max(_norm(Ax), _norm(np.clip(Ax, l, u)))


def _dual_scale(P, q, A, x, y):
    terms = [_norm(P @ x), _norm(q)]
    if A.shape[0]:
        terms.append(_norm(A.T @ y))
    return max(terms)


def _step_len(v, dv, tau):
    neg = dv < 0
    if not neg.any():
        return 1.0
    return float(min(1.0, tau * np.min(-v[neg] / dv[neg])))


def _primal_infeasible(A, l, u, dy, eps):
    nrm = _norm(dy)
    if nrm < 1e-12 or A.shape[0] == 0:
        return False
    if _norm(A.T @ dy) > eps * nrm:
        return False
    lo = np.clip(l, -_INF, _INF)
    hi = np.clip(u, -_INF, _INF)
    support = hi @ np.maximum(dy, 0) + lo @ np.minimum(dy, 0)
    return support <= -eps * nrm


def _dual_infeasible(P, q, A, l, u, dx, eps):
    nrm = _norm(dx)
    if nrm < 1e-12:
        return False
    if _norm(P @ dx) > eps * nrm or q @ dx > -eps * nrm:
        return False
    if A.shape[0] == 0:
        return True
    Adx = A @ dx
    t = eps * nrm
    ok_up = (u >= _INF) | (Adx <= t)
    ok_lo = (l <= -_INF) | (Adx >= -t)
    return bool(np.all(ok_up & ok_lo))


def _polish(P, q, A, l, u, x, y):
    n, m = P.shape[0], A.shape[0]
    # Noise-level multipliers must not enter the active set, but weakly
    # active rows (slack and multiplier both near zero) must: dropping
    # them leaves the reduced system singular along their direction.
    z = np.clip(A @ x, l, u)
    lo = np.clip(l, -_INF, _INF)
    hi = np.clip(u, -_INF, _INF)
    low = (z - lo) < np.maximum(-y, 1e-7 * (1.0 + np.abs(lo)))
    upp = (hi - z) < np.maximum(y, 1e-7 * (1.0 + np.abs(hi)))
    delta = 1e-9
    eye_n = sparse.eye(n, format="csc")
    for _round in range(5):
        act = low | upp
        if not act.any():
            A_red = sparse.csc_matrix((0, n))
            b = np.zeros(0)
        else:
            A_red = A[act].tocsc()
            b = np.where(low, l, u)[act]
        na = A_red.shape[0]
        # the regularizer anchors at the current iterate, not at zero: on a
        # non-unique optimal face the reduced system is singular and the
        # flat directions must stay where the (feasible) iterate already is
        kkt0 = sparse.bmat([[P, A_red.T],
                            [A_red, sparse.csc_matrix((na, na))]],
                           format="csc")
        reg = sparse.block_diag([delta * eye_n,
                                 -delta * sparse.eye(na, format="csc")],
                                format="csc")
        kkt = (kkt0 + reg).tocsc()
        try:
            fact = splu(kkt)
        except RuntimeError:
            return None
        rhs = np.concatenate([-q + delta * x, b - delta * y[act]])
        sol = fact.solve(rhs)
        for _refine in range(2):
            sol = sol + fact.solve(rhs - kkt @ sol)
        xp = sol[:n]
        yp = np.zeros(m)
        yp[act] = sol[n:]
        if not np.all(np.isfinite(xp)):
            return None
        # A correct guess yields one-sided multipliers with the right
        # signs (rows pinned from both sides are equalities, sign-free).
        # Wrong-signed rows are weakly active ones the identification
        # over-included: release them and solve again.
        sign_tol = 1e-8 * max(1.0, _norm(yp))
        one_sided = low ^ upp
        bad = one_sided & ((low & (yp > sign_tol))
                           | (upp & (yp < -sign_tol)))
        if not bad.any():
            break
        low &= ~bad
        upp &= ~bad
    else:
        return None
    Ax = A @ xp
    rpp = _norm(Ax - np.clip(Ax, l, u))
    rdp = _norm(P @ xp + q + A.T @ yp)
    return xp, yp, rpp, rdp


def save_residuals_csv(sol: Solution, target) -> None:
    if sol.history is None:
        raise ValidationError("solve was not asked to collect history")
    lines = ["iteration,primal_residual,dual_residual"]
    for k, rp, rd in sol.history:
        lines.append(f"{k},{rp:.6e},{rd:.6e}")
    payload = "\n".join(lines) + "\n"
    if hasattr(target, "write"):
        target.write(payload)
    else:
        from pathlib import Path
        Path(target).write_text(payload, encoding="utf-8")
