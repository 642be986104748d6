"""Naive reference implementations of the discrete collision quadratures.

Straightforward quadruple loops over ball lattice pairs and all sphere nodes,
with index-space trilinear interpolation (zero outside the hull).  These are
deliberately simple and slow; they define the expected values the optimized
kernels must reproduce to near-rounding accuracy on small lattices.
"""

import numpy as np


def trilinear(F, t, nv):
    """Trilinear value of lattice samples F at index-space point t; 0 outside."""
    t = np.asarray(t, dtype=float)
    if np.any(t < 0.0) or np.any(t > nv - 1.0):
        return 0.0
    b = np.minimum(np.floor(t).astype(int), nv - 2)
    r = t - b
    val = 0.0
    for dx in (0, 1):
        wx = r[0] if dx else 1.0 - r[0]
        for dy in (0, 1):
            wy = r[1] if dy else 1.0 - r[1]
            for dz in (0, 1):
                wz = r[2] if dz else 1.0 - r[2]
                val += wx * wy * wz * F[b[0] + dx, b[1] + dy, b[2] + dz]
    return val


def _pair_iter(grid, quad):
    """Yield (i_idx, j_idx, lin_i, lin_j, s, t, q, w) over ball pairs and nodes."""
    nv, h = grid.nv, grid.spacing
    ball = grid.ball
    idx = np.argwhere(np.ones(grid.shape, dtype=bool))
    lin = np.arange(nv**3)
    inball = ball.reshape(-1)
    for a in lin:
        if not inball[a]:
            continue
        ia = idx[a]
        for b in lin:
            if not inball[b] or a == b:
                continue
            jb = idx[b]
            d = ia - jb
            for om, w in zip(quad.nodes, quad.weights):
                s = h * float(om @ d)
                if s == 0.0:
                    continue
                t = s * om / h
                yield ia, jb, a, b, s, t, abs(s), w


def collide_oracle(F, grid, quad, theta):
    """Q[F,F;F] via the cancellation (cubic) bracket."""
    nv, h = grid.nv, grid.spacing
    Fm = F * grid.ball
    f = Fm.reshape(-1)
    Q = np.zeros(nv**3)
    h3 = h**3
    for ia, jb, a, b, s, t, q, w in _pair_iter(grid, quad):
        fu, fv = f[b], f[a]
        fup = trilinear(Fm, jb + t, nv)
        fvp = trilinear(Fm, ia - t, nv)
        gain = fup * fvp * (1.0 + theta * (fu + fv))
        loss = fu * fv * (1.0 + theta * (fup + fvp))
        Q[a] += w * h3 * q * (gain - loss)
    return Q.reshape(grid.shape)


def gain_loss_oracle(F, grid, quad, theta):
    """Cubic (cancellation-form) gain/loss pair."""
    nv, h = grid.nv, grid.spacing
    Fm = F * grid.ball
    f = Fm.reshape(-1)
    G = np.zeros(nv**3)
    L = np.zeros(nv**3)
    h3 = h**3
    for ia, jb, a, b, s, t, q, w in _pair_iter(grid, quad):
        fu, fv = f[b], f[a]
        fup = trilinear(Fm, jb + t, nv)
        fvp = trilinear(Fm, ia - t, nv)
        G[a] += w * h3 * q * fup * fvp * (1 + theta * (fu + fv))
        L[a] += w * h3 * q * fu * fv * (1 + theta * (fup + fvp))
    return G.reshape(grid.shape), L.reshape(grid.shape)


def loss_rate_oracle(G, H, grid, quad, theta):
    """R[G,H](v) = int q G(u)(1 + th H(u') + th H(v'))."""
    nv, h = grid.nv, grid.spacing
    Gm = G * grid.ball
    Hm = H * grid.ball
    g = Gm.reshape(-1)
    R = np.zeros(nv**3)
    h3 = h**3
    for ia, jb, a, b, s, t, q, w in _pair_iter(grid, quad):
        hup = trilinear(Hm, jb + t, nv)
        hvp = trilinear(Hm, ia - t, nv)
        R[a] += w * h3 * q * g[b] * (1.0 + theta * (hup + hvp))
    return R.reshape(grid.shape)


def qp_qtilde_oracle(F, grid, quad, theta):
    """Local-iteration splitting: Q_p and the multiplicative rate Q_tilde."""
    nv, h = grid.nv, grid.spacing
    Fm = F * grid.ball
    f = Fm.reshape(-1)
    P = np.zeros(nv**3)
    T = np.zeros(nv**3)
    h3 = h**3
    for ia, jb, a, b, s, t, q, w in _pair_iter(grid, quad):
        fu = f[b]
        fup = trilinear(Fm, jb + t, nv)
        fvp = trilinear(Fm, ia - t, nv)
        P[a] += w * h3 * q * fup * fvp * (1.0 + theta * fu)
        T[a] += w * h3 * q * (-theta * fup * fvp + fu * (1.0 + theta * (fup + fvp)))
    return P.reshape(grid.shape), T.reshape(grid.shape)


def weak_form_oracle(F, phi, grid, quad, theta):
    """(1/4) sum q [bracket] {phi(v)+phi(u)-phi(u')-phi(v')}; phi callable on
    position 3-vectors."""
    nv, h, rv = grid.nv, grid.spacing, grid.rv
    Fm = F * grid.ball
    f = Fm.reshape(-1)
    acc = 0.0
    h6 = h**6
    for ia, jb, a, b, s, t, q, w in _pair_iter(grid, quad):
        fu, fv = f[b], f[a]
        fup = trilinear(Fm, jb + t, nv)
        fvp = trilinear(Fm, ia - t, nv)
        gain = fup * fvp * (1.0 + theta * (fu + fv))
        loss = fu * fv * (1.0 + theta * (fup + fvp))
        pv = -rv + h * ia
        pu = -rv + h * jb
        pup = pu + t * h
        pvp = pv - t * h
        phi_fac = phi(pv) + phi(pu) - phi(pup) - phi(pvp)
        acc += 0.25 * w * h6 * q * (gain - loss) * phi_fac
    return acc


def dissipation_oracle(F, grid, quad, theta):
    """(1/4) sum q (G - L) ln(G/L) over quadruples with G, L > 0."""
    nv, h = grid.nv, grid.spacing
    Fm = F * grid.ball
    f = Fm.reshape(-1)
    acc = 0.0
    h6 = h**6
    for ia, jb, a, b, s, t, q, w in _pair_iter(grid, quad):
        fu, fv = f[b], f[a]
        fup = trilinear(Fm, jb + t, nv)
        fvp = trilinear(Fm, ia - t, nv)
        G = fup * fvp * (1 + theta * fu) * (1 + theta * fv)
        L = fu * fv * (1 + theta * fup) * (1 + theta * fvp)
        if G > 0.0 and L > 0.0 and G != L:
            acc += 0.25 * w * h6 * q * (G - L) * np.log(G / L)
    return acc


def qsym_pair_oracle(A, B, grid, quad):
    """(1/2) sum q [A(u')B(v') + B(u')A(v') - A(u)B(v) - B(u)A(v)]."""
    nv, h = grid.nv, grid.spacing
    Am = A * grid.ball
    Bm = B * grid.ball
    av = Am.reshape(-1)
    bv = Bm.reshape(-1)
    out = np.zeros(nv**3)
    h3 = h**3
    for ia, jb, a, b, s, t, q, w in _pair_iter(grid, quad):
        aup = trilinear(Am, jb + t, nv)
        avp = trilinear(Am, ia - t, nv)
        bup = trilinear(Bm, jb + t, nv)
        bvp = trilinear(Bm, ia - t, nv)
        out[a] += 0.5 * w * h3 * q * (aup * bvp + bup * avp - av[b] * bv[a] - bv[b] * av[a])
    return out.reshape(grid.shape)


def qsym_triple_oracle(A, B, C, grid, quad):
    """(1/2) sum q [(A(u')B(v')+B(u')A(v'))(C(u)+C(v))
                    - (A(u)B(v)+B(u)A(v))(C(u')+C(v'))]."""
    nv, h = grid.nv, grid.spacing
    Am = A * grid.ball
    Bm = B * grid.ball
    Cm = C * grid.ball
    av = Am.reshape(-1)
    bv = Bm.reshape(-1)
    cv = Cm.reshape(-1)
    out = np.zeros(nv**3)
    h3 = h**3
    for ia, jb, a, b, s, t, q, w in _pair_iter(grid, quad):
        aup = trilinear(Am, jb + t, nv)
        avp = trilinear(Am, ia - t, nv)
        bup = trilinear(Bm, jb + t, nv)
        bvp = trilinear(Bm, ia - t, nv)
        cup = trilinear(Cm, jb + t, nv)
        cvp = trilinear(Cm, ia - t, nv)
        out[a] += 0.5 * w * h3 * q * (
            (aup * bvp + bup * avp) * (cv[b] + cv[a])
            - (av[b] * bv[a] + bv[b] * av[a]) * (cup + cvp))
    return out.reshape(grid.shape)


def nu_oracle(grid, quad, rho, theta):
    """nu(v) = M^{-1}(v) sum_{u in ball} q rho^2 mu(u)mu(v) z(u')z(v')."""
    nv, h = grid.nv, grid.spacing
    v2 = grid.squared_speed()
    mu = 1.0 / (rho * np.exp(v2) - theta)
    mcal = rho * np.exp(v2) / (rho * np.exp(v2) - theta) ** 2
    muf = mu.reshape(-1)
    pts = grid.points
    out = np.zeros(nv**3)
    h3 = h**3
    inball = grid.ball.reshape(-1)
    for a in range(nv**3):
        va = pts[a]
        for b in range(nv**3):
            if not inball[b] or a == b:
                continue
            ub = pts[b]
            d = va - ub
            for om, w in zip(quad.nodes, quad.weights):
                s = float(om @ d)
                if s == 0.0:
                    continue
                up = ub + s * om
                vp = va - s * om
                zu = 1.0 / (rho - theta * np.exp(-up @ up))
                zv = 1.0 / (rho - theta * np.exp(-vp @ vp))
                out[a] += w * h3 * abs(s) * rho**2 * muf[b] * zu * zv
    return (out.reshape(grid.shape) * mu / mcal)


def vac_gain_oracle(A, C, xs, grid, quad, tau, theta):
    """Transported gain on a slice: fields shaped (nx, nv, nv, nv)."""
    nv, h = grid.nv, grid.spacing
    nx = len(xs)
    hx = xs[1] - xs[0]
    ball = grid.ball
    Am = A * ball
    Cm = C * ball
    out = np.zeros((nx, nv, nv, nv))
    idx = np.argwhere(np.ones(grid.shape, dtype=bool))
    inball = ball.reshape(-1)

    def interp_x(Fv, xpos_idx, tvel):
        if xpos_idx < 0.0 or xpos_idx > nx - 1.0:
            return 0.0
        b = min(int(np.floor(xpos_idx)), nx - 2)
        r = xpos_idx - b
        return (1 - r) * trilinear(Fv[b], tvel, nv) + r * trilinear(Fv[b + 1], tvel, nv)

    h3 = h**3
    for a_lin in range(nv**3):
        if not inball[a_lin]:
            continue
        ia = idx[a_lin]
        for b_lin in range(nv**3):
            if not inball[b_lin] or a_lin == b_lin:
                continue
            jb = idx[b_lin]
            d = ia - jb
            for om, w in zip(quad.nodes, quad.weights):
                s = h * float(om @ d)
                if s == 0.0:
                    continue
                t = s * om / h
                sh_up = tau * (h * d[0] - s * om[0]) / hx
                sh_vp = tau * (s * om[0]) / hx
                sh_u = tau * (h * d[0]) / hx
                for a in range(nx):
                    fup = interp_x(Am, a + sh_up, jb + t)
                    fvp = interp_x(Am, a + sh_vp, ia - t)
                    if fup == 0.0 or fvp == 0.0:
                        continue
                    cu = interp_x(Cm, a + sh_u, jb.astype(float))
                    cvv = Cm[a][tuple(ia)]
                    out[(a, *ia)] += w * h3 * abs(s) * fup * fvp * (1 + theta * (cu + cvv))
    return out
