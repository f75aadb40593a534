"""Compiled numerical core: rigid-body terms, touchdown reset, output
evaluation, closed-loop vector field, and the event-detecting integrator.

Everything here operates on packed float64 arrays so it can run under
numba's nopython mode.  The public modules wrap these kernels with typed
dataclasses; see `model.py` for the coordinate and parameter conventions.

Packed model vector ``mp`` (built by ``model.pack_params``):
    mp[0:25]   G    (5x5, row-major)  mass-pair coefficients, D(q) cosine part
    mp[25:30]  s    mass-weighted FK coefficients (gravity / COM terms)
    mp[30:55]  Ibar (5x5, row-major)  constant rotational-inertia part of D
    mp[55:60]  dsw  swing-foot FK coefficients
    mp[60]     total mass (kg)
    mp[61]     gravity (m/s^2)

Packed gait auxiliary vector ``aux`` (built by ``outputs.GaitParams.pack``):
    aux[0]     theta_plus   phase at step start (rad)
    aux[1]     theta_minus  phase at step end (rad)
    aux[2]     theta_stop   phase where the modulation bump vanishes (rad)
    aux[3:9]   bump polynomial coefficients, ascending powers of theta
    aux[9:13]  beta, per-actuated-joint modulation amplitude (rad)

The Bezier coefficient matrix (4 x (M+1)) travels as a separate 2-D array.
"""

import numpy as np
from numba import njit

# Phase gradient: theta(q) = q1 + q2 + 0.5*q4.
C_THETA = np.array([1.0, 1.0, 0.0, 0.5, 0.0])

# Leg-relabeling matrix (involution): new chart after swapping stance and
# swing legs.  q' = RELABEL @ q, and the same map applies to velocities.
RELABEL = np.array(
    [
        [1.0, 1.0, 1.0, 1.0, 1.0],
        [0.0, 0.0, 0.0, 0.0, -1.0],
        [0.0, 0.0, 0.0, -1.0, 0.0],
        [0.0, 0.0, -1.0, 0.0, 0.0],
        [0.0, -1.0, 0.0, 0.0, 0.0],
    ]
)

# Integrator status codes.
STATUS_OK = 0
STATUS_NO_IMPACT = 1
STATUS_PHASE_REVERSAL = 2
STATUS_NOT_FINITE = 3
STATUS_BUFFER_FULL = 4
STATUS_STEP_UNDERFLOW = 5

# Controller mode codes for the packed control vector.
MODE_PD = 0
MODE_NOMINAL = 1
MODE_UNFORCED = 2


@njit(cache=True, fastmath=True)
def _cumangles(q):
    """Absolute link angles (from vertical, lean-forward positive).

    Order: stance shank, stance thigh, torso, swing thigh, swing shank.
    a_k = q1 + ... + q_{k+1} (serial chain through the torso).
    """
    a = np.empty(5)
    a[0] = q[0]
    a[1] = a[0] + q[1]
    a[2] = a[1] + q[2]
    a[3] = a[2] + q[3]
    a[4] = a[3] + q[4]
    return a


@njit(cache=True, fastmath=True)
def theta_of(q):
    return q[0] + q[1] + 0.5 * q[3]


@njit(cache=True)
def mass_matrix(q, mp):
    """Inertia matrix D(q), 5x5 symmetric positive definite."""
    a = _cumangles(q)
    D = np.empty((5, 5))
    # D_ij = Ibar_ij + sum_{k,l} G_kl cos(a_k - a_l) [Wk^T Wl]_ij where
    # W is lower-triangular ones; [Wk^T Wl]_ij = (i<=k)(j<=l).  Upper
    # triangle only, mirrored, so D is symmetric bit for bit.
    for i in range(5):
        for j in range(i, 5):
            acc = mp[30 + 5 * i + j]
            for k in range(i, 5):
                for l in range(j, 5):
                    acc += mp[5 * k + l] * np.cos(a[k] - a[l])
            D[i, j] = acc
            D[j, i] = acc
    return D


@njit(cache=True)
def mass_matrix_deriv(q, mp):
    """dD/dq as a (5,5,5) array indexed [m, i, j] = dD_ij/dq_m."""
    a = _cumangles(q)
    dD = np.zeros((5, 5, 5))
    for i in range(5):
        for j in range(5):
            for k in range(i, 5):
                for l in range(j, 5):
                    g = mp[5 * k + l]
                    if g == 0.0:
                        continue
                    sn = -np.sin(a[k] - a[l]) * g
                    # d(a_k - a_l)/dq_m = (m<=k) - (m<=l)
                    if k > l:
                        for m in range(l + 1, k + 1):
                            dD[m, i, j] += sn
                    elif l > k:
                        for m in range(k + 1, l + 1):
                            dD[m, i, j] -= sn
    return dD


@njit(cache=True)
def gravity_vector(q, mp):
    """G(q) = d(potential energy)/dq."""
    a = _cumangles(q)
    G = np.zeros(5)
    g = mp[61]
    for k in range(5):
        t = -g * mp[25 + k] * np.sin(a[k])
        for j in range(k + 1):
            G[j] += t
    return G


@njit(cache=True)
def coriolis_matrix(q, dq, mp):
    """C(q, dq) from Christoffel symbols of D, so dD/dt - 2C is skew."""
    dD = mass_matrix_deriv(q, mp)
    C = np.zeros((5, 5))
    for i in range(5):
        for j in range(5):
            acc = 0.0
            for k in range(5):
                acc += (dD[k, i, j] + dD[j, i, k] - dD[i, j, k]) * dq[k]
            C[i, j] = 0.5 * acc
    return C


@njit(cache=True)
def bias_forces(q, dq, mp):
    """C(q,dq) dq + G(q), assembled directly from the mass-pair terms:
    C dq = Ddot dq - 0.5 * d(dq^T D dq)/dq, with Ddot and the gradient both
    linear combinations of sin(a_k - a_l) over the 15 unique pairs."""
    a = _cumangles(q)
    arate = np.empty(5)
    acc = 0.0
    for k in range(5):
        acc += dq[k]
        arate[k] = acc
    out = np.zeros(5)
    g = mp[61]
    for k in range(5):
        t = -g * mp[25 + k] * np.sin(a[k])
        for j in range(k + 1):
            out[j] += t
    for k in range(5):
        for l in range(k):
            gkl = mp[5 * k + l]
            if gkl == 0.0:
                continue
            h = -np.sin(a[k] - a[l]) * gkl
            rate_kl = arate[k] - arate[l]
            # (Ddot dq)_i = h * rate_kl * ((i<=k) arate_l + (i<=l) arate_k);
            # -0.5 d(dq^T D dq)/dq_i = -h * arate_k * arate_l for l < i <= k.
            common = h * rate_kl
            grad = h * arate[k] * arate[l]
            for i in range(l + 1):
                out[i] += common * (arate[l] + arate[k])
            for i in range(l + 1, k + 1):
                out[i] += common * arate[l] - grad
    return out


@njit(cache=True)
def potential_energy(q, mp):
    a = _cumangles(q)
    pe = 0.0
    for k in range(5):
        pe += mp[25 + k] * np.cos(a[k])
    return mp[61] * pe


@njit(cache=True)
def kinetic_energy(q, dq, mp):
    D = mass_matrix(q, mp)
    return 0.5 * dq @ (D @ dq)


@njit(cache=True, fastmath=True)
def swing_foot(q, mp):
    """Swing toe position (horizontal, vertical) relative to the stance toe."""
    a = _cumangles(q)
    px = 0.0
    pv = 0.0
    for k in range(5):
        d = mp[55 + k]
        px += d * np.sin(a[k])
        pv += d * np.cos(a[k])
    return px, pv


@njit(cache=True, fastmath=True)
def swing_foot_jac(q, mp):
    """d(swing toe)/dq, rows (horizontal, vertical)."""
    a = _cumangles(q)
    J = np.zeros((2, 5))
    for k in range(5):
        d = mp[55 + k]
        cx = d * np.cos(a[k])
        cv = -d * np.sin(a[k])
        for j in range(k + 1):
            J[0, j] += cx
            J[1, j] += cv
    return J


@njit(cache=True, fastmath=True)
def swing_foot_vel(q, dq, mp):
    J = swing_foot_jac(q, mp)
    return J[0] @ dq, J[1] @ dq


@njit(cache=True, fastmath=True)
def sigma_of(q, dq, mp):
    """Momentum conjugate to q1 (angular momentum about the stance toe)."""
    D = mass_matrix(q, mp)
    return D[0] @ dq


@njit(cache=True, fastmath=True)
def zeta_of(q, dq, mp):
    s = sigma_of(q, dq, mp)
    return 0.5 * s * s


@njit(cache=True)
def com_accel(q, dq, qdd, mp):
    """Center-of-mass acceleration from joint state and acceleration."""
    a = _cumangles(q)
    mtot = mp[60]
    ax = 0.0
    av = 0.0
    for k in range(5):
        s = mp[25 + k]
        wk = 0.0  # absolute angle rate of link k
        for j in range(k + 1):
            wk += dq[j]
        alk = 0.0  # absolute angle acceleration
        for j in range(k + 1):
            alk += qdd[j]
        ca = np.cos(a[k])
        sa = np.sin(a[k])
        # d2/dt2 [s*(sin a, cos a)] = s*(cos a * al - sin a * w^2,
        #                                -sin a * al - cos a * w^2)
        ax += s * (ca * alk - sa * wk * wk)
        av += s * (-sa * alk - ca * wk * wk)
    return ax / mtot, av / mtot


@njit(cache=True)
def ground_reaction(q, dq, qdd, mp):
    """Stance-pivot reaction (tangential, normal) from COM acceleration."""
    ax, av = com_accel(q, dq, qdd, mp)
    mtot = mp[60]
    g = mp[61]
    return mtot * ax, mtot * (av + g)


@njit(cache=True)
def impact_transition(q, dq, mp):
    """Plastic touchdown on a 7-DOF floating extension, then leg relabeling.

    Returns (q_new, dq_new, ok, cond, ke_pre, ke_post, pvdot_new) where
    pvdot_new is the vertical launch velocity of the new swing toe and ok is
    False when the contact solve is ill conditioned.
    """
    a = _cumangles(q)
    D = mass_matrix(q, mp)
    mtot = mp[60]

    # Mass-weighted COM jacobian block E (2x5), rows (x, y).
    E = np.zeros((2, 5))
    for k in range(5):
        s = mp[25 + k]
        cx = s * np.cos(a[k])
        cv = -s * np.sin(a[k])
        for j in range(k + 1):
            E[0, j] += cx
            E[1, j] += cv

    Jc = np.zeros((2, 7))
    Jsw = swing_foot_jac(q, mp)
    for j in range(5):
        Jc[0, j] = Jsw[0, j]
        Jc[1, j] = Jsw[1, j]
    Jc[0, 5] = 1.0
    Jc[1, 6] = 1.0

    # KKT system for the post-impact extended velocity and contact impulse.
    M = np.zeros((9, 9))
    for i in range(5):
        for j in range(5):
            M[i, j] = D[i, j]
    for i in range(2):
        for j in range(5):
            M[5 + i, j] = E[i, j]
            M[j, 5 + i] = E[i, j]
    M[5, 5] = mtot
    M[6, 6] = mtot
    for i in range(2):
        for j in range(7):
            M[7 + i, j] = Jc[i, j]
            M[j, 7 + i] = -Jc[i, j]

    rhs = np.zeros(9)
    # Pre-impact extended velocity has a pinned stance toe: (dq, 0, 0).
    mom = np.zeros(7)
    for i in range(5):
        acc = 0.0
        for j in range(5):
            acc += D[i, j] * dq[j]
        mom[i] = acc
    for i in range(2):
        acc = 0.0
        for j in range(5):
            acc += E[i, j] * dq[j]
        mom[5 + i] = acc
    for i in range(7):
        rhs[i] = mom[i]

    sv = np.linalg.svd(M)[1]
    cond = sv[0] / sv[-1] if sv[-1] > 0.0 else np.inf
    ok = np.isfinite(cond) and cond < 1e12
    sol = np.linalg.solve(M, rhs)
    ve = sol[:7]

    ke_pre = 0.5 * dq @ (D @ dq)
    # Extended kinetic energy: [D E^T; E mtot*I].
    ke_post = 0.0
    for i in range(5):
        for j in range(5):
            ke_post += 0.5 * ve[i] * D[i, j] * ve[j]
    for i in range(2):
        acc = 0.0
        for j in range(5):
            acc += E[i, j] * ve[j]
        ke_post += ve[5 + i] * acc
        ke_post += 0.5 * mtot * ve[5 + i] * ve[5 + i]

    q_new = RELABEL @ q
    dq_new = RELABEL @ ve[:5]
    _, pvdot_new = swing_foot_vel(q_new, dq_new, mp)
    return q_new, dq_new, ok, cond, ke_pre, ke_post, pvdot_new


# ----------------------------------------------------------------------
# Gait outputs
# ----------------------------------------------------------------------


@njit(cache=True, fastmath=True)
def bezier_eval(bez, s):
    """Bezier value and first two derivatives w.r.t. s for each output row.

    Uses the explicit Bernstein form, which extends smoothly outside [0, 1].
    """
    m = bez.shape[1] - 1
    binom = np.empty(m + 1)
    binom[0] = 1.0
    for k in range(1, m + 1):
        binom[k] = binom[k - 1] * (m - k + 1) / k

    y = np.zeros(4)
    dy = np.zeros(4)
    d2y = np.zeros(4)

    # Powers of s and (1-s).
    sp = np.empty(m + 1)
    op = np.empty(m + 1)
    sp[0] = 1.0
    op[0] = 1.0
    for k in range(1, m + 1):
        sp[k] = sp[k - 1] * s
        op[k] = op[k - 1] * (1.0 - s)

    for i in range(4):
        acc = 0.0
        for k in range(m + 1):
            acc += bez[i, k] * binom[k] * sp[k] * op[m - k]
        y[i] = acc

    binom1 = np.empty(m)
    binom1[0] = 1.0
    for k in range(1, m):
        binom1[k] = binom1[k - 1] * (m - 1 - k + 1) / k
    for i in range(4):
        acc = 0.0
        for k in range(m):
            acc += (bez[i, k + 1] - bez[i, k]) * binom1[k] * sp[k] * op[m - 1 - k]
        dy[i] = m * acc

    if m >= 2:
        binom2 = np.empty(m - 1)
        binom2[0] = 1.0
        for k in range(1, m - 1):
            binom2[k] = binom2[k - 1] * (m - 2 - k + 1) / k
        for i in range(4):
            acc = 0.0
            for k in range(m - 1):
                d2 = bez[i, k + 2] - 2.0 * bez[i, k + 1] + bez[i, k]
                acc += d2 * binom2[k] * sp[k] * op[m - 2 - k]
            d2y[i] = m * (m - 1) * acc
    return y, dy, d2y


@njit(cache=True, fastmath=True)
def bump_eval(aux, th):
    """Modulation bump b(theta) and derivatives; identically zero past
    theta_stop, polynomial extension below theta_plus."""
    th_stop = aux[2]
    if th >= th_stop:
        return 0.0, 0.0, 0.0
    b = 0.0
    db = 0.0
    d2b = 0.0
    for k in range(5, -1, -1):
        c = aux[3 + k]
        b = b * th + c
        if k >= 1:
            db = db * th + k * c
        if k >= 2:
            d2b = d2b * th + k * (k - 1) * c
    return b, db, d2b


@njit(cache=True, fastmath=True)
def outputs_eval(q, bez, aux):
    """Modulated outputs: y (4,), jacobian (4,5), and the phase-curvature
    term hdd_i = d2(h_d + beta_i b)/dtheta^2 needed for the Hessian."""
    th = theta_of(q)
    thp = aux[0]
    thm = aux[1]
    dth = thm - thp
    s = (th - thp) / dth
    hd, hds, hdss = bezier_eval(bez, s)
    b, db, d2b = bump_eval(aux, th)

    y = np.empty(4)
    jrow = np.empty(4)  # d(h_d + beta*b)/dtheta per output
    hdd = np.empty(4)
    for i in range(4):
        beta_i = aux[9 + i]
        y[i] = q[i + 1] - hd[i] - beta_i * b
        jrow[i] = hds[i] / dth + beta_i * db
        hdd[i] = hdss[i] / (dth * dth) + beta_i * d2b

    J = np.zeros((4, 5))
    for i in range(4):
        J[i, i + 1] = 1.0
        for j in range(5):
            J[i, j] -= jrow[i] * C_THETA[j]
    return y, J, hdd, th


@njit(cache=True, fastmath=True)
def _ldl_factor(D):
    """In-place-free LDL^T factorization of a symmetric 5x5 matrix.

    Returns (L, d) with unit lower-triangular L and diagonal d."""
    L = np.zeros((5, 5))
    d = np.empty(5)
    for j in range(5):
        acc = D[j, j]
        for k in range(j):
            acc -= L[j, k] * L[j, k] * d[k]
        d[j] = acc
        L[j, j] = 1.0
        for i in range(j + 1, 5):
            s = D[i, j]
            for k in range(j):
                s -= L[i, k] * L[j, k] * d[k]
            L[i, j] = s / acc
    return L, d


@njit(cache=True, fastmath=True)
def _ldl_solve(L, d, b):
    y = b.copy()
    for i in range(5):
        for k in range(i):
            y[i] -= L[i, k] * y[k]
    for i in range(5):
        y[i] /= d[i]
    for i in range(4, -1, -1):
        for k in range(i + 1, 5):
            y[i] -= L[k, i] * y[k]
    return y


@njit(cache=True, fastmath=True)
def _solve4(A, b):
    """Dense 4x4 solve with partial pivoting."""
    M = np.empty((4, 5))
    for i in range(4):
        for j in range(4):
            M[i, j] = A[i, j]
        M[i, 4] = b[i]
    for c in range(4):
        p = c
        best = abs(M[c, c])
        for r in range(c + 1, 4):
            if abs(M[r, c]) > best:
                best = abs(M[r, c])
                p = r
        if p != c:
            for j in range(5):
                tmp = M[c, j]
                M[c, j] = M[p, j]
                M[p, j] = tmp
        piv = M[c, c]
        for r in range(c + 1, 4):
            f = M[r, c] / piv
            if f != 0.0:
                for j in range(c, 5):
                    M[r, j] -= f * M[c, j]
    x = np.empty(4)
    for i in range(3, -1, -1):
        acc = M[i, 4]
        for j in range(i + 1, 4):
            acc -= M[i, j] * x[j]
        x[i] = acc / M[i, i]
    return x


@njit(cache=True, fastmath=True)
def closed_loop_terms(x, bez, aux, mp, kp, kd, eps, mode):
    """Shared evaluation chain: returns (u, y, ydot, theta, qdd)."""
    q = x[:5]
    dq = x[5:]
    D = mass_matrix(q, mp)
    bias = bias_forces(q, dq, mp)
    y, J, hdd, th = outputs_eval(q, bez, aux)
    ydot = J @ dq

    L, dd = _ldl_factor(D)
    u = np.zeros(4)
    if mode != MODE_UNFORCED:
        Dinv_bias = _ldl_solve(L, dd, bias)
        # Decoupling matrix A = J D^-1 B with B = [0; I4]: solve column-wise.
        A = np.empty((4, 4))
        col = np.zeros(5)
        for j in range(4):
            col[:] = 0.0
            col[j + 1] = 1.0
            sol = _ldl_solve(L, dd, col)
            for i in range(4):
                acc = 0.0
                for k in range(5):
                    acc += J[i, k] * sol[k]
                A[i, j] = acc
        thdot = 0.0
        for j in range(5):
            thdot += C_THETA[j] * dq[j]
        rhs4 = np.empty(4)
        for i in range(4):
            lf2 = -hdd[i] * thdot * thdot
            for k in range(5):
                lf2 -= J[i, k] * Dinv_bias[k]
            nu = 0.0
            if mode == MODE_PD:
                nu = -(kp / (eps * eps)) * y[i] - (kd / eps) * ydot[i]
            rhs4[i] = nu - lf2
        u = _solve4(A, rhs4)

    gen = -bias
    for i in range(4):
        gen[i + 1] += u[i]
    qdd = _ldl_solve(L, dd, gen)
    return u, y, ydot, th, qdd


@njit(cache=True, fastmath=True)
def rhs(x, bez, aux, mp, kp, kd, eps, mode):
    _, _, _, _, qdd = closed_loop_terms(x, bez, aux, mp, kp, kd, eps, mode)
    dx = np.empty(10)
    dx[:5] = x[5:]
    dx[5:] = qdd
    return dx


# ----------------------------------------------------------------------
# Adaptive RK45 (Dormand-Prince) with touchdown event location
# ----------------------------------------------------------------------

_DP_A = np.array(
    [
        [0.0, 0.0, 0.0, 0.0, 0.0],
        [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0],
        [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0],
        [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0],
        [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0],
        [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0],
    ]
)
_DP_B = np.array([35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0])
_DP_E = np.array(
    [
        71.0 / 57600.0,
        0.0,
        -71.0 / 16695.0,
        71.0 / 1920.0,
        -17253.0 / 339200.0,
        22.0 / 525.0,
        -1.0 / 40.0,
    ]
)


@njit(cache=True, fastmath=True)
def _rk_step(x0, h, k1, bez, aux, mp, kp, kd, eps, mode):
    """One Dormand-Prince step of size h from x0 with precomputed k1.

    Returns (x5, k7, err_vec); k7 = f(x5) enables FSAL reuse.
    """
    k = np.empty((7, 10))
    k[0] = k1
    y = np.empty(10)
    for st in range(1, 6):
        for i in range(10):
            acc = 0.0
            for j in range(st):
                acc += _DP_A[st, j] * k[j, i]
            y[i] = x0[i] + h * acc
        k[st] = rhs(y, bez, aux, mp, kp, kd, eps, mode)
    x5 = np.empty(10)
    for i in range(10):
        acc = 0.0
        for j in range(6):
            acc += _DP_B[j] * k[j, i]
        x5[i] = x0[i] + h * acc
    k[6] = rhs(x5, bez, aux, mp, kp, kd, eps, mode)
    err = np.empty(10)
    for i in range(10):
        acc = 0.0
        for j in range(7):
            acc += _DP_E[j] * k[j, i]
        err[i] = h * acc
    return x5, k[6], err


@njit(cache=True)
def integrate_swing(
    x0,
    bez,
    aux,
    mp,
    kp,
    kd,
    eps,
    mode,
    rtol,
    atol,
    hmax,
    tmax,
    max_samples,
    detect_event,
    check_phase,
):
    """Integrate the closed-loop swing until the swing toe strikes the
    ground (height crossing zero from above), or until tmax.

    Returns (status, n, ts, xs, t_event, x_event).  Samples are the accepted
    integrator steps; on success xs[n-1] == x_event.
    """
    ts = np.zeros(max_samples)
    xs = np.zeros((max_samples, 10))
    t = 0.0
    x = x0.copy()
    ts[0] = 0.0
    xs[0] = x
    n = 1

    k1 = rhs(x, bez, aux, mp, kp, kd, eps, mode)
    h = 1e-4
    armed = False
    _, pv_prev = swing_foot(x[:5], mp)
    th_prev = theta_of(x[:5])

    while t < tmax:
        if h > hmax:
            h = hmax
        if h < 1e-14:
            return STATUS_STEP_UNDERFLOW, n, ts, xs, t, x
        if t + h > tmax:
            h = tmax - t

        x_new, k7, err = _rk_step(x, h, k1, bez, aux, mp, kp, kd, eps, mode)

        finite = True
        for i in range(10):
            if not np.isfinite(x_new[i]):
                finite = False
        if not finite:
            h *= 0.25
            if h < 1e-14:
                return STATUS_NOT_FINITE, n, ts, xs, t, x
            continue

        enorm = 0.0
        for i in range(10):
            sc = atol + rtol * max(abs(x[i]), abs(x_new[i]))
            e = err[i] / sc
            enorm += e * e
        enorm = np.sqrt(enorm / 10.0)

        if enorm > 1.0:
            fac = 0.9 * enorm ** (-0.2)
            if fac < 0.2:
                fac = 0.2
            h *= fac
            continue

        # Accepted step.
        _, pv_new = swing_foot(x_new[:5], mp)

        if detect_event and armed and pv_new <= 0.0:
            # Locate the crossing inside (t, t+h] by Illinois iteration on
            # the step size tau, re-taking a single RK step from x each try.
            lo = 0.0
            flo = pv_prev
            hi = h
            fhi = pv_new
            x_hit = x_new
            for _ in range(100):
                if fhi == 0.0:
                    break
                tau = hi - fhi * (hi - lo) / (fhi - flo)
                if tau <= lo or tau >= hi:
                    tau = 0.5 * (lo + hi)
                x_try, _, _ = _rk_step(x, tau, k1, bez, aux, mp, kp, kd, eps, mode)
                _, pv_try = swing_foot(x_try[:5], mp)
                if abs(pv_try) < 1e-13 or (hi - lo) < 1e-15:
                    x_hit = x_try
                    hi = tau
                    break
                if pv_try > 0.0:
                    lo = tau
                    flo = pv_try
                else:
                    hi = tau
                    fhi = pv_try
                    x_hit = x_try
            t_event = t + hi
            ts[n] = t_event
            xs[n] = x_hit
            n += 1
            return STATUS_OK, n, ts, xs, t_event, x_hit

        if not armed and pv_new > 1e-8:
            armed = True

        t += h
        x = x_new
        k1 = k7
        pv_prev = pv_new

        if check_phase:
            th_new = theta_of(x[:5])
            if th_new < th_prev - 1e-10:
                ts[n] = t
                xs[n] = x
                n += 1
                return STATUS_PHASE_REVERSAL, n, ts, xs, t, x
            th_prev = th_new

        if n >= max_samples:
            return STATUS_BUFFER_FULL, n, ts, xs, t, x
        ts[n] = t
        xs[n] = x
        n += 1

        fac = 0.9 * enorm ** (-0.2) if enorm > 1e-12 else 10.0
        if fac > 10.0:
            fac = 10.0
        h *= fac

    return STATUS_NO_IMPACT, n, ts, xs, t, x


@njit(cache=True)
def trajectory_diagnostics(ts, xs, n, bez, aux, mp, kp, kd, eps, mode):
    """Per-sample torques, ground reaction, phase, momentum coordinate and
    output norm for a stored trajectory."""
    us = np.zeros((n, 4))
    fts = np.zeros(n)
    fns = np.zeros(n)
    ths = np.zeros(n)
    zetas = np.zeros(n)
    ynorms = np.zeros(n)
    for i in range(n):
        x = xs[i]
        u, y, ydot, th, qdd = closed_loop_terms(x, bez, aux, mp, kp, kd, eps, mode)
        ft, fn = ground_reaction(x[:5], x[5:], qdd, mp)
        us[i] = u
        fts[i] = ft
        fns[i] = fn
        ths[i] = th
        zetas[i] = zeta_of(x[:5], x[5:], mp)
        acc = 0.0
        for j in range(4):
            acc += y[j] * y[j]
        ynorms[i] = np.sqrt(acc)
    return us, fts, fns, ths, zetas, ynorms


# ----------------------------------------------------------------------
# Zero-dynamics geometry (phase-indexed configuration on the constraint
# surface), used by the gait designer and the reduced-map machinery.
# ----------------------------------------------------------------------


@njit(cache=True)
def phase_config(th, bez, aux):
    """Configuration and phase-velocity direction on the constraint surface.

    On the surface the actuated joints equal the desired trajectories and
    theta(q) is linear in q, so both q and dq/dtheta are closed form:
    q_a = d(th), q1 = th - d_0 - d_2/2.
    """
    thp = aux[0]
    thm = aux[1]
    dth = thm - thp
    s = (th - thp) / dth
    hd, hds, _ = bezier_eval(bez, s)
    b, db, _ = bump_eval(aux, th)

    q = np.empty(5)
    w = np.empty(5)
    d0 = 0.0
    d2 = 0.0
    dd0 = 0.0
    dd2 = 0.0
    for i in range(4):
        beta_i = aux[9 + i]
        d = hd[i] + beta_i * b
        dd = hds[i] / dth + beta_i * db
        q[i + 1] = d
        w[i + 1] = dd
        if i == 0:
            d0 = d
            dd0 = dd
        if i == 2:
            d2 = d
            dd2 = dd
    q[0] = th - d0 - 0.5 * d2
    w[0] = 1.0 - dd0 - 0.5 * dd2
    return q, w


@njit(cache=True)
def zero_dynamics_grid(bez, aux, mp, n):
    """Phase-gridded constraint-surface data for one step.

    Returns (qs, wbars, d1w, g1, pv) where d1w = D_1(q) dq/dtheta, g1 is the
    gravity torque on q1, and pv the swing-toe height, all sampled on the
    uniform phase grid from theta_plus to theta_minus.
    """
    thp = aux[0]
    thm = aux[1]
    qs = np.zeros((n, 5))
    wbars = np.zeros((n, 5))
    d1w = np.zeros(n)
    g1 = np.zeros(n)
    pv = np.zeros(n)
    for i in range(n):
        th = thp + (thm - thp) * i / (n - 1)
        q, w = phase_config(th, bez, aux)
        D = mass_matrix(q, mp)
        G = gravity_vector(q, mp)
        qs[i] = q
        wbars[i] = w
        d1w[i] = D[0] @ w
        g1[i] = G[0]
        _, pvi = swing_foot(q, mp)
        pv[i] = pvi
    return qs, wbars, d1w, g1, pv


@njit(cache=True)
def orbit_constraints(qs, wbars, d1w, zetas, bez, aux, mp):
    """Evaluate actuation and contact quantities along a phase-gridded
    periodic orbit with per-node momentum 0.5*sigma^2 = zetas.

    Returns (umax_abs, fn_min, frict_max, knee_margin_st, knee_margin_sw,
    thdot_min) where frict_max = max |Ft|/Fn (inf if Fn <= 0 anywhere).
    """
    n = qs.shape[0]
    umax = 0.0
    fn_min = 1e30
    fr_max = 0.0
    knee_st = -1e30  # max of q2 (must stay negative: flexed stance knee)
    knee_sw = 1e30   # min of q5 (must stay positive)
    thdot_min = 1e30
    for i in range(n):
        q = qs[i]
        sg = np.sqrt(2.0 * zetas[i]) if zetas[i] > 0.0 else 0.0
        thdot = sg / d1w[i] if d1w[i] != 0.0 else 0.0
        if thdot < thdot_min:
            thdot_min = thdot
        dq = wbars[i] * thdot
        x = np.empty(10)
        x[:5] = q
        x[5:] = dq
        u, _, _, _, qdd = closed_loop_terms(x, bez, aux, mp, 0.0, 0.0, 1.0, MODE_NOMINAL)
        for j in range(4):
            if abs(u[j]) > umax:
                umax = abs(u[j])
        ft, fn = ground_reaction(q, dq, qdd, mp)
        if fn < fn_min:
            fn_min = fn
        fr = abs(ft) / fn if fn > 1e-9 else 1e30
        if fr > fr_max:
            fr_max = fr
        if q[1] > knee_st:
            knee_st = q[1]
        if q[4] < knee_sw:
            knee_sw = q[4]
    return umax, fn_min, fr_max, knee_st, knee_sw, thdot_min
