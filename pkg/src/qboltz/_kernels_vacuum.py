"""Numba kernels for the transported (mild-form) collision integrands.

States live on a 1D spatial box [-rx, rx] x 3D velocity lattice and are
stored padded by one zero ghost cell in every axis, flattened C-order with
x slowest.  The transported arguments x + tau*(v - w) are evaluated by
linear interpolation in x and (for post-collision velocities) trilinear
interpolation in v, with exact zero outside the box/hull.  Velocity pair
sums run over the truncation ball as in the homogeneous kernels; offsets
must be the full nonzero list (no pair symmetry is exploited here because
the spatial shifts break it).
"""

import numpy as np
from numba import njit, prange

from ._kernels import _geom, _tri8, N_CHUNKS


@njit(cache=True, inline="always")
def _xtap(shift, nx):
    """1D interpolation data for position a + shift: base offset, weights,
    and the inclusive window of output indices a with the position in box."""
    g = np.floor(shift)
    r = shift - g
    lo = int(np.ceil(-shift))
    if (lo - 1) + shift >= 0.0:
        lo -= 1
    elif lo + shift < 0.0:
        lo += 1
    hi = int(np.floor(nx - 1 - shift))
    if (hi + 1) + shift <= nx - 1.0:
        hi += 1
    elif hi + shift > nx - 1.0:
        hi -= 1
    return int(g), 1.0 - r, r, max(0, lo), min(nx - 1, hi)


@njit(cache=True, fastmath=True, parallel=True)
def vac_gain_slice(Ap, Cp, nx, nv, hx, hv, tau, theta,
                   offsets, omegas, cweights, zlo, zhi):
    """Transported gain integrand on one time slice:

    gain(x, v) = sum_q A#(x + tau(v-u'), u') A#(x + tau(v-v'), v')
                       (1 + th C#(x + tau(v-u), u) + th C#(x, v)).
    """
    npd = nv + 2
    spx = npd * npd
    spy = npd
    sxx = npd * npd * npd  # padded x stride
    sx = nv * nv
    nvol = nv * nv * nv
    n_out = nx * nvol
    M = offsets.shape[0]
    K = omegas.shape[0]
    out = np.zeros((N_CHUNKS, n_out))
    chunk = (M + N_CHUNKS - 1) // N_CHUNKS
    for c in prange(N_CHUNKS):
        oa = np.zeros(n_out)
        for m in range(c * chunk, min(M, (c + 1) * chunk)):
            dx = offsets[m, 0]
            dy = offsets[m, 1]
            dz = offsets[m, 2]
            px0 = max(0, dx)
            px1 = min(nv - 1, nv - 1 + dx)
            py0 = max(0, dy)
            py1 = min(nv - 1, nv - 1 + dy)
            pz0 = max(0, dz)
            pz1 = min(nv - 1, nv - 1 + dz)
            joff = -(dx * spx + dy * spy + dz)
            for k in range(K):
                ox = omegas[k, 0]
                oy = omegas[k, 1]
                oz = omegas[k, 2]
                s = hv * (ox * dx + oy * dy + oz * dz)
                if s == 0.0:
                    continue
                cw = cweights[k] * abs(s)
                (bU, bV, u00, u01, u10, u11, wu0z, ruz,
                 v00, v01, v10, v11, wv0z, rvz,
                 ux0, ux1, uy0, uy1, uz0, uz1,
                 vx0, vx1, vy0, vy1, vz0, vz1) = _geom(
                    dx, dy, dz, hv, nv, ox, oy, oz, s,
                    px0, px1, py0, py1, pz0, pz1, spx, spy)
                # spatial shifts (index units): v-u' = d - s*omega, v-v' = s*omega, v-u = d
                sh_up = tau * (hv * dx - s * ox) / hx
                sh_vp = tau * (s * ox) / hx
                sh_u = tau * (hv * dx) / hx
                gU_x, wU0, wU1, aU0, aU1 = _xtap(sh_up, nx)
                gV_x, wV0, wV1, aV0, aV1 = _xtap(sh_vp, nx)
                gC_x, wC0, wC1, aC0, aC1 = _xtap(sh_u, nx)
                if aU0 > aU1 or aV0 > aV1:
                    continue
                for a in range(max(aU0, aV0), min(aU1, aV1) + 1):
                    in_c = aC0 <= a <= aC1
                    pa = (a + 1) * sxx
                    pa_u = (a + 1 + gU_x) * sxx
                    pa_v = (a + 1 + gV_x) * sxx
                    pa_c = (a + 1 + gC_x) * sxx
                    oax = a * nvol
                    for ix in range(px0, px1 + 1):
                        jx = ix - dx
                        in_u_x = ux0 <= ix <= ux1
                        in_v_x = vx0 <= ix <= vx1
                        if not (in_u_x and in_v_x):
                            continue
                        for iy in range(py0, py1 + 1):
                            jy = iy - dy
                            if not ((uy0 <= iy <= uy1) and (vy0 <= iy <= vy1)):
                                continue
                            z0 = max(pz0, zlo[ix, iy], zlo[jx, jy] + dz, uz0, vz0)
                            z1 = min(pz1, zhi[ix, iy], zhi[jx, jy] + dz, uz1, vz1)
                            if z0 > z1:
                                continue
                            vb = (ix + 1) * spx + (iy + 1) * spy + 1
                            ob = oax + ix * sx + iy * nv
                            for iz in range(z0, z1 + 1):
                                ip = vb + iz
                                fup = (wU0 * _tri8(Ap, pa_u + ip + bU, spx, spy,
                                                   u00, u01, u10, u11, wu0z, ruz)
                                       + wU1 * _tri8(Ap, pa_u + sxx + ip + bU, spx, spy,
                                                     u00, u01, u10, u11, wu0z, ruz))
                                fvp = (wV0 * _tri8(Ap, pa_v + ip + bV, spx, spy,
                                                   v00, v01, v10, v11, wv0z, rvz)
                                       + wV1 * _tri8(Ap, pa_v + sxx + ip + bV, spx, spy,
                                                     v00, v01, v10, v11, wv0z, rvz))
                                cu = 0.0
                                if in_c:
                                    cu = (wC0 * Cp[pa_c + ip + joff]
                                          + wC1 * Cp[pa_c + sxx + ip + joff])
                                cv = Cp[pa + ip]
                                oa[ob + iz] += cw * fup * fvp * (1.0 + theta * (cu + cv))
        out[c] = oa
    return out.sum(axis=0)


@njit(cache=True, fastmath=True, parallel=True)
def vac_rate_slice(Gp, Hp, nx, nv, hx, hv, tau, theta,
                   offsets, omegas, cweights, zlo, zhi):
    """Transported collision frequency on one time slice:

    R#(x, v) = sum_q G#(x + tau(v-u), u)
                     (1 + th H#(x + tau(v-u'), u') + th H#(x + tau(v-v'), v')).
    """
    npd = nv + 2
    spx = npd * npd
    spy = npd
    sxx = npd * npd * npd
    sx = nv * nv
    nvol = nv * nv * nv
    n_out = nx * nvol
    M = offsets.shape[0]
    K = omegas.shape[0]
    out = np.zeros((N_CHUNKS, n_out))
    chunk = (M + N_CHUNKS - 1) // N_CHUNKS
    for c in prange(N_CHUNKS):
        oa = np.zeros(n_out)
        for m in range(c * chunk, min(M, (c + 1) * chunk)):
            dx = offsets[m, 0]
            dy = offsets[m, 1]
            dz = offsets[m, 2]
            px0 = max(0, dx)
            px1 = min(nv - 1, nv - 1 + dx)
            py0 = max(0, dy)
            py1 = min(nv - 1, nv - 1 + dy)
            pz0 = max(0, dz)
            pz1 = min(nv - 1, nv - 1 + dz)
            joff = -(dx * spx + dy * spy + dz)
            for k in range(K):
                ox = omegas[k, 0]
                oy = omegas[k, 1]
                oz = omegas[k, 2]
                s = hv * (ox * dx + oy * dy + oz * dz)
                if s == 0.0:
                    continue
                cw = cweights[k] * abs(s)
                (bU, bV, u00, u01, u10, u11, wu0z, ruz,
                 v00, v01, v10, v11, wv0z, rvz,
                 ux0, ux1, uy0, uy1, uz0, uz1,
                 vx0, vx1, vy0, vy1, vz0, vz1) = _geom(
                    dx, dy, dz, hv, nv, ox, oy, oz, s,
                    px0, px1, py0, py1, pz0, pz1, spx, spy)
                sh_up = tau * (hv * dx - s * ox) / hx
                sh_vp = tau * (s * ox) / hx
                sh_u = tau * (hv * dx) / hx
                gU_x, wU0, wU1, aU0, aU1 = _xtap(sh_up, nx)
                gV_x, wV0, wV1, aV0, aV1 = _xtap(sh_vp, nx)
                gC_x, wC0, wC1, aC0, aC1 = _xtap(sh_u, nx)
                if aC0 > aC1:
                    continue
                for a in range(aC0, aC1 + 1):
                    in_up_x = aU0 <= a <= aU1
                    in_vp_x = aV0 <= a <= aV1
                    pa_u = (a + 1 + gU_x) * sxx
                    pa_v = (a + 1 + gV_x) * sxx
                    pa_c = (a + 1 + gC_x) * sxx
                    oax = a * nvol
                    for ix in range(px0, px1 + 1):
                        jx = ix - dx
                        in_u_x = in_up_x and (ux0 <= ix <= ux1)
                        in_v_x = in_vp_x and (vx0 <= ix <= vx1)
                        for iy in range(py0, py1 + 1):
                            jy = iy - dy
                            z0 = max(pz0, zlo[ix, iy], zlo[jx, jy] + dz)
                            z1 = min(pz1, zhi[ix, iy], zhi[jx, jy] + dz)
                            if z0 > z1:
                                continue
                            in_u = in_u_x and (uy0 <= iy <= uy1)
                            in_v = in_v_x and (vy0 <= iy <= vy1)
                            b0 = max(z0, uz0) if in_u else 1
                            b1 = min(z1, uz1) if in_u else 0
                            c0 = max(z0, vz0) if in_v else 1
                            c1 = min(z1, vz1) if in_v else 0
                            vb = (ix + 1) * spx + (iy + 1) * spy + 1
                            ob = oax + ix * sx + iy * nv
                            for iz in range(z0, z1 + 1):
                                ip = vb + iz
                                gu = (wC0 * Gp[pa_c + ip + joff]
                                      + wC1 * Gp[pa_c + sxx + ip + joff])
                                if gu == 0.0:
                                    continue
                                hsum = 0.0
                                if b0 <= iz <= b1:
                                    hsum += (wU0 * _tri8(Hp, pa_u + ip + bU, spx, spy,
                                                         u00, u01, u10, u11, wu0z, ruz)
                                             + wU1 * _tri8(Hp, pa_u + sxx + ip + bU, spx, spy,
                                                           u00, u01, u10, u11, wu0z, ruz))
                                if c0 <= iz <= c1:
                                    hsum += (wV0 * _tri8(Hp, pa_v + ip + bV, spx, spy,
                                                         v00, v01, v10, v11, wv0z, rvz)
                                             + wV1 * _tri8(Hp, pa_v + sxx + ip + bV, spx, spy,
                                                           v00, v01, v10, v11, wv0z, rvz))
                                oa[ob + iz] += cw * gu * (1.0 + theta * hsum)
        out[c] = oa
    return out.sum(axis=0)


@njit(cache=True, fastmath=True, parallel=True)
def sphere_pair_integrals(Wp, nv, h, offsets, omegas, cweights, zlo, zhi):
    """The two velocity-only integrals of the envelope fixed-point operator:

    I2(v) = sum_{u, omega} w(u') w(v')          (no collision kernel factor)
    I3(v) = sum_{u, omega} w(u') w(v') w(u).
    """
    npd = nv + 2
    spx = npd * npd
    spy = npd
    sx = nv * nv
    n_out = nv * nv * nv
    M = offsets.shape[0]
    K = omegas.shape[0]
    out = np.zeros((N_CHUNKS, 2, n_out))
    chunk = (M + N_CHUNKS - 1) // N_CHUNKS
    for c in prange(N_CHUNKS):
        o2 = np.zeros(n_out)
        o3 = np.zeros(n_out)
        for m in range(c * chunk, min(M, (c + 1) * chunk)):
            dx = offsets[m, 0]
            dy = offsets[m, 1]
            dz = offsets[m, 2]
            px0 = max(0, dx)
            px1 = min(nv - 1, nv - 1 + dx)
            py0 = max(0, dy)
            py1 = min(nv - 1, nv - 1 + dy)
            pz0 = max(0, dz)
            pz1 = min(nv - 1, nv - 1 + dz)
            joff = -(dx * spx + dy * spy + dz)
            for k in range(K):
                ox = omegas[k, 0]
                oy = omegas[k, 1]
                oz = omegas[k, 2]
                s = h * (ox * dx + oy * dy + oz * dz)
                cw = cweights[k]
                (bU, bV, u00, u01, u10, u11, wu0z, ruz,
                 v00, v01, v10, v11, wv0z, rvz,
                 ux0, ux1, uy0, uy1, uz0, uz1,
                 vx0, vx1, vy0, vy1, vz0, vz1) = _geom(
                    dx, dy, dz, h, nv, ox, oy, oz, s,
                    px0, px1, py0, py1, pz0, pz1, spx, spy)
                for ix in range(px0, px1 + 1):
                    jx = ix - dx
                    if not ((ux0 <= ix <= ux1) and (vx0 <= ix <= vx1)):
                        continue
                    for iy in range(py0, py1 + 1):
                        jy = iy - dy
                        if not ((uy0 <= iy <= uy1) and (vy0 <= iy <= vy1)):
                            continue
                        z0 = max(pz0, zlo[ix, iy], zlo[jx, jy] + dz, uz0, vz0)
                        z1 = min(pz1, zhi[ix, iy], zhi[jx, jy] + dz, uz1, vz1)
                        if z0 > z1:
                            continue
                        vb = (ix + 1) * spx + (iy + 1) * spy + 1
                        ob = ix * sx + iy * nv
                        for iz in range(z0, z1 + 1):
                            ip = vb + iz
                            wup = _tri8(Wp, ip + bU, spx, spy, u00, u01, u10, u11, wu0z, ruz)
                            wvp = _tri8(Wp, ip + bV, spx, spy, v00, v01, v10, v11, wv0z, rvz)
                            prod = cw * wup * wvp
                            o2[ob + iz] += prod
                            o3[ob + iz] += prod * Wp[ip + joff]
        out[c, 0] = o2
        out[c, 1] = o3
    return out.sum(axis=0)
