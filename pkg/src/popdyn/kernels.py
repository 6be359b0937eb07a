"""Hot loops of the closed-loop integrator.

Two implementations of the same stepping scheme live here:

* ``*_nb`` functions are scalar-loop kernels compiled with numba and only
  handle affine games ``F(x) = A x + b`` (constant Jacobian ``A``);
* ``*_np`` functions are vectorised numpy code that accept any payoff and
  Jacobian callables.

:func:`integrate` picks between them from :data:`popdyn._accel.USE_NUMBA`.

Best-response components are discontinuous on payoff ties. Three tie modes
select a point of the convexified vector field there:

``uniform`` (0)
    uniform weight on every strategy within ``eps_tie`` of the maximum.
``sliding`` (1)
    equivalent control: on the set ``M`` of strategies that are tied or
    would overtake the leader within two steps, choose the best-response
    mixture ``y`` supported on ``M`` that keeps their payoffs moving
    together, with a restoring term ``-kappa * (p_i - common)`` that pulls
    residual gaps shut. Strategies that would need negative weight leave
    ``M``; if the solve is singular the uniform mixture on ``M`` is used.
``logit`` (2, set implicitly when ``beta > 0``)
    softmax of ``p / beta``.
"""

from __future__ import annotations

import numpy as np

from . import _accel
from ._accel import njit
from .rules import PackedRule

TIE_UNIFORM = 0
TIE_SLIDING = 1
METHOD_EULER = 0
METHOD_RK4 = 1

STATUS_OK = 0
STATUS_BLOWUP = 1
STATUS_NONFINITE = 2

_PROJ_RADIUS = 1e-6
_SINGULAR = 1e-12


# ---------------------------------------------------------------- numba ----

@njit(cache=True)
def _phi_nb(kind, gain, expo, kx, ky, cap, nu):
    if nu <= 0.0:
        return 0.0
    if kind == 0.0:
        r = gain * nu
    elif kind == 1.0:
        r = gain * nu ** expo
    else:
        m = kx.shape[0]
        if nu >= kx[m - 1]:
            r = ky[m - 1]
        else:
            r = ky[m - 1]
            for k in range(1, m):
                if nu < kx[k]:
                    if not np.isfinite(kx[k]):
                        r = ky[k - 1]
                    else:
                        t = (nu - kx[k - 1]) / (kx[k] - kx[k - 1])
                        r = ky[k - 1] + t * (ky[k] - ky[k - 1])
                    break
    if r > cap:
        r = cap
    return r


@njit(cache=True)
def _continuous_field_nb(x, p, w, sp, sx, sy, ip, ix, iy, cap, out):
    """Flow of the SEPT, IPC and contrarian components (all Lipschitz)."""
    n = x.shape[0]
    for i in range(n):
        out[i] = 0.0
    if w[1] > 0.0:
        avg = 0.0
        for i in range(n):
            avg += x[i] * p[i]
        tot = 0.0
        rates = np.empty(n)
        for j in range(n):
            rates[j] = _phi_nb(sp[j, 0], sp[j, 1], sp[j, 2], sx[j], sy[j], cap, p[j] - avg)
            tot += rates[j]
        for i in range(n):
            out[i] += w[1] * (rates[i] - x[i] * tot)
    for c in range(2, 4):
        if w[c] <= 0.0:
            continue
        sign = 1.0 if c == 2 else -1.0
        for i in range(n):
            inflow = 0.0
            outflow = 0.0
            for j in range(n):
                if j == i:
                    continue
                # T_ji: j -> i, T_ij: i -> j
                inflow += x[j] * _phi_nb(ip[i, 0], ip[i, 1], ip[i, 2], ix[i], iy[i], cap,
                                         sign * (p[i] - p[j]))
                outflow += _phi_nb(ip[j, 0], ip[j, 1], ip[j, 2], ix[j], iy[j], cap,
                                   sign * (p[j] - p[i]))
            out[i] += w[c] * (inflow - x[i] * outflow)


@njit(cache=True)
def _solve_small_nb(K, r):
    """Gaussian elimination with partial pivoting; returns (solution, ok)."""
    m = K.shape[0]
    a = K.copy()
    b = r.copy()
    scale = 0.0
    for i in range(m):
        for j in range(m):
            if abs(a[i, j]) > scale:
                scale = abs(a[i, j])
    for col in range(m):
        piv = col
        for row in range(col + 1, m):
            if abs(a[row, col]) > abs(a[piv, col]):
                piv = row
        if abs(a[piv, col]) <= _SINGULAR * scale:
            return b, False
        if piv != col:
            for j in range(m):
                tmp = a[col, j]
                a[col, j] = a[piv, j]
                a[piv, j] = tmp
            tmp = b[col]
            b[col] = b[piv]
            b[piv] = tmp
        for row in range(col + 1, m):
            f = a[row, col] / a[col, col]
            for j in range(col, m):
                a[row, j] -= f * a[col, j]
            b[row] -= f * b[col]
    for row in range(m - 1, -1, -1):
        s = b[row]
        for j in range(row + 1, m):
            s -= a[row, j] * b[j]
        b[row] = s / a[row, row]
    return b, True


@njit(cache=True)
def _br_selection_nb(x, p, J, vc, wbr, beta, eps_tie, mode, h, kappa, y):
    n = x.shape[0]
    top = 0
    for i in range(1, n):
        if p[i] > p[top]:
            top = i
    pmax = p[top]
    if beta > 0.0:
        tot = 0.0
        for i in range(n):
            y[i] = np.exp((p[i] - pmax) / beta)
            tot += y[i]
        for i in range(n):
            y[i] /= tot
        return
    member = np.zeros(n, dtype=np.bool_)
    if mode == TIE_UNIFORM:
        for i in range(n):
            member[i] = p[i] >= pmax - eps_tie
    else:
        # payoff velocity if everybody revising went to the current leader
        z = np.empty(n)
        for i in range(n):
            z[i] = vc[i] - wbr * x[i]
        z[top] += wbr
        pd = J @ z
        for i in range(n):
            lead = pd[i] - pd[top]
            if lead < 0.0:
                lead = 0.0
            member[i] = pmax - p[i] <= eps_tie + 2.0 * h * lead
        base = J @ (vc - wbr * x)
        while True:
            m = 0
            for i in range(n):
                if member[i]:
                    m += 1
            if m <= 1:
                break
            idx = np.empty(m, dtype=np.int64)
            k = 0
            for i in range(n):
                if member[i]:
                    idx[k] = i
                    k += 1
            K = np.zeros((m + 1, m + 1))
            r = np.zeros(m + 1)
            for a in range(m):
                for c in range(m):
                    K[a, c] = wbr * J[idx[a], idx[c]]
                K[a, m] = -1.0
                r[a] = -kappa * p[idx[a]] - base[idx[a]]
                K[m, a] = 1.0
            r[m] = 1.0
            sol, ok = _solve_small_nb(K, r)
            if not ok:
                break
            worst = 0
            for a in range(1, m):
                if sol[a] < sol[worst]:
                    worst = a
            if sol[worst] >= 0.0:
                for i in range(n):
                    y[i] = 0.0
                for a in range(m):
                    y[idx[a]] = sol[a]
                return
            member[idx[worst]] = False
    cnt = 0
    for i in range(n):
        if member[i]:
            cnt += 1
    if cnt == 0:
        member[top] = True
        cnt = 1
    for i in range(n):
        y[i] = 1.0 / cnt if member[i] else 0.0


@njit(cache=True)
def _rhs_nb(x, A, b, w, beta, sp, sx, sy, ip, ix, iy, cap, eps_tie, mode, h, kappa, out):
    p = A @ x + b
    _continuous_field_nb(x, p, w, sp, sx, sy, ip, ix, iy, cap, out)
    if w[0] > 0.0:
        y = np.empty(x.shape[0])
        _br_selection_nb(x, p, A, out, w[0], beta, eps_tie, mode, h, kappa, y)
        for i in range(x.shape[0]):
            out[i] += w[0] * (y[i] - x[i])


@njit(cache=True)
def _integrate_affine_nb(A, b, x0, h, nsteps, method, w, beta, sp, sx, sy, ip, ix, iy,
                         cap, eps_tie, mode, kappa):
    n = x0.shape[0]
    X = np.empty((nsteps + 1, n))
    X[0] = x0
    x = x0.copy()
    k1 = np.empty(n)
    k2 = np.empty(n)
    k3 = np.empty(n)
    k4 = np.empty(n)
    drift = 0.0
    for s in range(nsteps):
        _rhs_nb(x, A, b, w, beta, sp, sx, sy, ip, ix, iy, cap, eps_tie, mode, h, kappa, k1)
        if method == METHOD_RK4:
            _rhs_nb(x + 0.5 * h * k1, A, b, w, beta, sp, sx, sy, ip, ix, iy, cap,
                    eps_tie, mode, h, kappa, k2)
            _rhs_nb(x + 0.5 * h * k2, A, b, w, beta, sp, sx, sy, ip, ix, iy, cap,
                    eps_tie, mode, h, kappa, k3)
            _rhs_nb(x + h * k3, A, b, w, beta, sp, sx, sy, ip, ix, iy, cap,
                    eps_tie, mode, h, kappa, k4)
            xn = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        else:
            xn = x + h * k1
        tot = 0.0
        pos = 0.0
        for i in range(n):
            if not np.isfinite(xn[i]):
                return X[: s + 1], drift, STATUS_NONFINITE
            tot += xn[i]
            if xn[i] > 0.0:
                pos += xn[i]
        if abs(tot - 1.0) > drift:
            drift = abs(tot - 1.0)
        if pos <= 0.0:
            return X[: s + 1], drift, STATUS_BLOWUP
        dist = 0.0
        for i in range(n):
            v = xn[i] if xn[i] > 0.0 else 0.0
            v /= pos
            dist += abs(xn[i] - v)
            x[i] = v
        if dist > _PROJ_RADIUS:
            return X[: s + 1], drift, STATUS_BLOWUP
        X[s + 1] = x
    return X, drift, STATUS_OK


@njit(cache=True)
def _sample_fields_nb(X, A, b, w, beta, sp, sx, sy, ip, ix, iy, cap, eps_tie, mode, h, kappa):
    V = np.empty_like(X)
    out = np.empty(X.shape[1])
    for s in range(X.shape[0]):
        _rhs_nb(X[s], A, b, w, beta, sp, sx, sy, ip, ix, iy, cap, eps_tie, mode, h, kappa, out)
        V[s] = out
    return V


# ---------------------------------------------------------------- numpy ----

def _phi_np(par, kx, ky, cap, nu):
    """Vectorised shape evaluation; ``nu[..., j]`` uses row ``j`` of the tables."""
    nu = np.maximum(nu, 0.0)
    out = np.empty_like(nu)
    for j in range(par.shape[0]):
        kind, gain, expo = par[j]
        v = nu[..., j]
        if kind == 0.0:
            r = gain * v
        elif kind == 1.0:
            r = gain * v ** expo
        else:
            fin = np.isfinite(kx[j])
            r = np.interp(v, kx[j][fin], ky[j][fin])
        out[..., j] = np.minimum(r, cap)
    return out


def _continuous_field_np(x, p, pk: PackedRule):
    w = pk.weights
    V = np.zeros_like(x)
    if w[1] > 0:
        rates = _phi_np(pk.sept_par, pk.sept_kx, pk.sept_ky, pk.rate_cap, p - x @ p)
        V += w[1] * (rates - x * rates.sum())
    for c, sign in ((2, 1.0), (3, -1.0)):
        if w[c] > 0:
            # T[i, j] = phi_j([sign * (p_j - p_i)]_+)
            T = _phi_np(pk.ipc_par, pk.ipc_kx, pk.ipc_ky, pk.rate_cap,
                        sign * (p[None, :] - p[:, None]))
            np.fill_diagonal(T, 0.0)
            V += w[c] * (x @ T - x * T.sum(axis=1))
    return V


def _br_selection_np(x, p, J, vc, wbr, beta, eps_tie, mode, h, kappa):
    n = x.shape[0]
    top = int(np.argmax(p))
    if beta > 0:
        e = np.exp((p - p[top]) / beta)
        return e / e.sum()
    if mode == TIE_UNIFORM:
        member = p >= p[top] - eps_tie
    else:
        z = vc - wbr * x
        z[top] += wbr
        pd = J @ z
        member = p[top] - p <= eps_tie + 2.0 * h * np.maximum(pd - pd[top], 0.0)
        base = J @ (vc - wbr * x)
        while member.sum() > 1:
            idx = np.flatnonzero(member)
            m = idx.size
            K = np.zeros((m + 1, m + 1))
            K[:m, :m] = wbr * J[np.ix_(idx, idx)]
            K[:m, m] = -1.0
            K[m, :m] = 1.0
            r = np.append(-kappa * p[idx] - base[idx], 1.0)
            if np.linalg.matrix_rank(K, tol=_SINGULAR * np.abs(K).max()) < m + 1:
                break
            sol = np.linalg.solve(K, r)[:m]
            worst = int(np.argmin(sol))
            if sol[worst] >= 0:
                y = np.zeros(n)
                y[idx] = sol
                return y
            member[idx[worst]] = False
    if not member.any():
        member[top] = True
    return member / member.sum()


def rhs_np(x, payoff, jacobian, pk: PackedRule, eps_tie, mode, h, kappa):
    p = payoff(x)
    if not np.all(np.isfinite(p)):
        raise FloatingPointError("game returned non-finite payoffs")
    V = _continuous_field_np(x, p, pk)
    wbr = pk.weights[0]
    if wbr > 0:
        J = jacobian(x) if (mode == TIE_SLIDING and pk.beta <= 0) else None
        y = _br_selection_np(x, p, J, V, wbr, pk.beta, eps_tie, mode, h, kappa)
        V = V + wbr * (y - x)
    return V


def _integrate_np(payoff, jacobian, x0, h, nsteps, method, pk, eps_tie, mode, kappa):
    n = x0.shape[0]
    X = np.empty((nsteps + 1, n))
    X[0] = x0
    x = x0.copy()
    drift = 0.0
    f = lambda z: rhs_np(z, payoff, jacobian, pk, eps_tie, mode, h, kappa)
    for s in range(nsteps):
        k1 = f(x)
        if method == METHOD_RK4:
            k2 = f(x + 0.5 * h * k1)
            k3 = f(x + 0.5 * h * k2)
            k4 = f(x + h * k3)
            xn = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        else:
            xn = x + h * k1
        if not np.all(np.isfinite(xn)):
            return X[: s + 1], drift, STATUS_NONFINITE
        drift = max(drift, abs(xn.sum() - 1.0))
        clamped = np.maximum(xn, 0.0)
        pos = clamped.sum()
        if pos <= 0:
            return X[: s + 1], drift, STATUS_BLOWUP
        x = clamped / pos
        if np.abs(xn - x).sum() > _PROJ_RADIUS:
            return X[: s + 1], drift, STATUS_BLOWUP
        X[s + 1] = x
    return X, drift, STATUS_OK


# ------------------------------------------------------------- dispatch ----

def _callables(affine, payoff, jacobian):
    if affine is not None:
        A, b = affine
        payoff = payoff or (lambda x: A @ x + b)
        jacobian = jacobian or (lambda x: A)
    if payoff is None or jacobian is None:
        raise ValueError("need either an affine game or payoff and jacobian callables")
    return payoff, jacobian


def _affine_arrays(affine):
    return (np.ascontiguousarray(affine[0], dtype=float),
            np.ascontiguousarray(affine[1], dtype=float))

def integrate(x0, h, nsteps, method, pk: PackedRule, eps_tie, mode, kappa,
              affine=None, payoff=None, jacobian=None, use_numba=None):
    """Run the fixed-step integrator; returns ``(states, max_drift, status)``.

    ``affine=(A, b)`` enables the compiled path. Otherwise (or when numba is
    switched off) the numpy loop runs with ``payoff``/``jacobian`` callables,
    which default to the affine map when ``affine`` is given.
    """
    if use_numba is None:
        use_numba = _accel.USE_NUMBA
    x0 = np.ascontiguousarray(x0, dtype=float)
    if affine is not None:
        affine = _affine_arrays(affine)
        if use_numba:
            return _integrate_affine_nb(*affine, x0, float(h), int(nsteps), int(method),
                                        *_packed_args(pk), float(eps_tie), int(mode),
                                        float(kappa))
    payoff, jacobian = _callables(affine, payoff, jacobian)
    return _integrate_np(payoff, jacobian, x0, float(h), int(nsteps), int(method), pk,
                         float(eps_tie), int(mode), float(kappa))


def sample_fields(X, h, pk: PackedRule, eps_tie, mode, kappa,
                  affine=None, payoff=None, jacobian=None, use_numba=None):
    """Integrator vector field (same tie handling) at every row of ``X``."""
    if use_numba is None:
        use_numba = _accel.USE_NUMBA
    X = np.ascontiguousarray(X, dtype=float)
    if affine is not None:
        affine = _affine_arrays(affine)
        if use_numba:
            return _sample_fields_nb(X, *affine, *_packed_args(pk), float(eps_tie), int(mode),
                                     float(h), float(kappa))
    payoff, jacobian = _callables(affine, payoff, jacobian)
    return np.array([rhs_np(x, payoff, jacobian, pk, eps_tie, mode, h, kappa) for x in X])


def _packed_args(pk: PackedRule):
    return (pk.weights, pk.beta, pk.sept_par, pk.sept_kx, pk.sept_ky,
            pk.ipc_par, pk.ipc_kx, pk.ipc_ky, pk.rate_cap)
