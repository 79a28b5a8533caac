"""Hydrostatic primitive equations (velocity, temperature, salinity) on a
horizontally periodic box [0, 2pi)^2 x [-h, 0].

Model variant, not the bounded ocean basin: horizontal directions are
periodic and every prognostic field is expanded in cos(m pi z / h), which
gives zero-flux (Neumann) conditions at the surface and the bottom. The
space H consists of fields with divergence-free depth-averaged velocity and
mean-zero salinity; its projector is the Helmholtz projection of the depth
average plus removal of the salinity mean. The horizontally and vertically
constant velocity and temperature are in the kernel of A here and are left
out of the basis.

Retained modes satisfy |kx| < nx/3, |ky| < ny/3, m < 2 nz / 3, so the
midpoint grid (nx, ny, nz) integrates every triple product of basis
functions exactly. Galerkin projections are computed as grid quadratures
against the basis; because the basis lies in H the Leray-type projection is
applied implicitly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..model_api import AbstractModel
from ..spectral import EigenbasisSpec

__all__ = [
    "PE3DSpec",
    "PEState",
    "PEModel",
    "ConstraintViolation",
    "grid_axes",
    "pe_w_diagnostic",
    "pe_B",
    "pe_Ap",
    "pe_Ap_field",
    "pe_coriolis",
    "pe_coriolis_field",
    "pe_F",
    "rigid_lid_project",
    "rigid_lid_residual",
]

VEL, TEMP, SALT = 0, 1, 2


class ConstraintViolation(ValueError):
    """State violates the rigid-lid or zero-mean-salinity constraint."""


@dataclass(frozen=True)
class PE3DSpec:
    modes: tuple = (8, 8, 8)
    depth: float = 1.0
    mu_v: float = 1.0
    nu_v: float = 1.0
    mu_T: float = 1.0
    nu_T: float = 1.0
    mu_S: float = 1.0
    nu_S: float = 1.0
    f0: float = 1.0
    beta: float = 0.0
    g: float = 1.0
    rho0: float = 1.0
    beta_T: float = 0.2
    beta_S: float = 0.1
    T_r: float = 0.0
    S_r: float = 0.0
    forcing_v: float = 0.0
    forcing_T: float = 0.0
    noise_amplitude: float = 0.01
    noise_decay: float = 1.5
    noise_modes: int = 16

    def __post_init__(self):
        object.__setattr__(self, "modes", tuple(int(m) for m in self.modes))
        if len(self.modes) != 3 or min(self.modes) < 4:
            raise ValueError("modes must be three integers >= 4")
        for name in ("depth", "mu_v", "nu_v", "mu_T", "nu_T", "mu_S", "nu_S",
                     "g", "rho0", "beta_T", "beta_S"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")

    @property
    def kmax(self):
        nx, ny, nz = self.modes
        return (nx - 1) // 3, (ny - 1) // 3, (2 * nz - 1) // 3

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


@dataclass
class PEState:
    """Grid fields on the midpoint grid: v has shape (2, nx, ny, nz)."""

    v: np.ndarray
    T: np.ndarray
    S: np.ndarray

    def stack(self) -> np.ndarray:
        return np.concatenate([self.v, self.T[None], self.S[None]], axis=0)

    @classmethod
    def from_stack(cls, arr) -> "PEState":
        arr = np.asarray(arr, float)
        return cls(arr[:2].copy(), arr[2].copy(), arr[3].copy())


def grid_axes(spec: PE3DSpec):
    nx, ny, nz = spec.modes
    h = spec.depth
    x = 2 * math.pi * np.arange(nx) / nx
    y = 2 * math.pi * np.arange(ny) / ny
    z = -h + (np.arange(nz) + 0.5) * h / nz
    return x, y, z


def _vertical(m, h, z):
    """cos(a z), its z-derivative and its integral from z to 0 (a = m pi / h)."""
    if m == 0:
        return np.ones_like(z), np.zeros_like(z), -z
    a = m * math.pi / h
    return np.cos(a * z), -a * np.sin(a * z), -np.sin(a * z) / a


def _horizontal(kx, ky, trig, x, y):
    ph = kx * x[:, None] + ky * y[None, :]
    if trig == 0:
        c, s = np.cos(ph), np.sin(ph)
        return c, -kx * s, -ky * s
    s, c = np.sin(ph), np.cos(ph)
    return s, kx * c, ky * c


@dataclass(frozen=True)
class _Mode:
    var: int
    kx: int
    ky: int
    m: int
    trig: int
    direction: tuple = field(default=(0.0, 0.0))


def _enumerate_modes(spec: PE3DSpec):
    Kx, Ky, M = spec.kmax
    waves = [(0, 0, 0)]
    for kx in range(-Kx, Kx + 1):
        for ky in range(0, Ky + 1):
            if ky > 0 or kx > 0:
                waves += [(kx, ky, 0), (kx, ky, 1)]
    modes = []
    for kx, ky, trig in waves:
        for m in range(M + 1):
            zero = kx == 0 and ky == 0
            if zero and m == 0:
                continue
            modes.append(_Mode(TEMP, kx, ky, m, trig))
            modes.append(_Mode(SALT, kx, ky, m, trig))
            if m >= 1:
                modes.append(_Mode(VEL, kx, ky, m, trig, (1.0, 0.0)))
                modes.append(_Mode(VEL, kx, ky, m, trig, (0.0, 1.0)))
            else:
                r = math.hypot(kx, ky)
                modes.append(_Mode(VEL, kx, ky, m, trig, (-ky / r, kx / r)))
    return modes


class PEModel(AbstractModel):
    label = "pe3d"

    def __init__(self, spec: PE3DSpec = PE3DSpec()):
        self.spec = spec
        h = spec.depth
        visc = {VEL: (spec.mu_v, spec.nu_v), TEMP: (spec.mu_T, spec.nu_T),
                SALT: (spec.mu_S, spec.nu_S)}

        def eig(md):
            mu, nu = visc[md.var]
            return mu * (md.kx ** 2 + md.ky ** 2) + nu * (md.m * math.pi / h) ** 2

        modes = _enumerate_modes(spec)
        modes.sort(key=lambda md: (eig(md), md.var, md.kx, md.ky, md.m, md.trig, md.direction))
        self.modes = modes
        lam = np.array([eig(md) for md in modes])
        super().__init__(EigenbasisSpec(lam), min(spec.noise_modes, len(lam)))

        self.x, self.y, self.z = grid_axes(spec)
        nx, ny, nz = spec.modes
        self.shape = (nx, ny, nz)
        self.cell = (2 * math.pi / nx) * (2 * math.pi / ny) * (h / nz)
        self.var = np.array([md.var for md in modes])
        self._build_grid_matrices()
        self._Ap = self._build_Ap()
        self._E = self._build_E()
        self._forcing = self._build_forcing()

    # ------------------------------------------------------------------
    # basis evaluation

    def _norm(self, md):
        hh = 4 * math.pi ** 2 if (md.kx == 0 and md.ky == 0) else 2 * math.pi ** 2
        vv = self.spec.depth if md.m == 0 else self.spec.depth / 2
        return 1.0 / math.sqrt(hh * vv)

    def evaluate_modes(self, x, y, z, keys=None):
        """Fields of every basis mode on the tensor grid x * y * z.

        Returns a dict of arrays shaped (nmodes, len(x), len(y), len(z)):
        ``vx, vy, T, S`` (values), ``d{x,y,z}_{vx,vy,T,S}`` and ``w``;
        ``keys`` restricts which ones are built.
        """
        shape = (len(self.modes), len(x), len(y), len(z))
        names = ["vx", "vy", "T", "S"]
        all_keys = names + ["w"] + [f"d{d}_{k}" for k in names for d in "xyz"]
        out = {k: np.zeros(shape) for k in (all_keys if keys is None else keys)}

        def put(key, j, val):
            if key in out:
                out[key][j] = val

        hcache, vcache = {}, {}
        for j, md in enumerate(self.modes):
            key = (md.kx, md.ky, md.trig)
            if key not in hcache:
                hcache[key] = _horizontal(md.kx, md.ky, md.trig, x, y)
            if md.m not in vcache:
                vcache[md.m] = _vertical(md.m, self.spec.depth, z)
            H, Hx, Hy = hcache[key]
            C, Cz, Ci = vcache[md.m]
            c = self._norm(md)
            val = c * H[:, :, None] * C
            dx = c * Hx[:, :, None] * C
            dy = c * Hy[:, :, None] * C
            dz = c * H[:, :, None] * Cz
            if md.var == VEL:
                a, b = md.direction
                for comp, coef in (("vx", a), ("vy", b)):
                    if coef:
                        put(comp, j, coef * val)
                        put(f"dx_{comp}", j, coef * dx)
                        put(f"dy_{comp}", j, coef * dy)
                        put(f"dz_{comp}", j, coef * dz)
                put("w", j, c * (a * Hx + b * Hy)[:, :, None] * Ci)
            else:
                comp = "T" if md.var == TEMP else "S"
                put(comp, j, val)
                put(f"dx_{comp}", j, dx)
                put(f"dy_{comp}", j, dy)
                put(f"dz_{comp}", j, dz)
        return out

    def _build_grid_matrices(self):
        ev = self.evaluate_modes(self.x, self.y, self.z)
        nm = len(self.modes)
        self._G = {k: v.reshape(nm, -1) for k, v in ev.items()}
        # analysis: coefficient_j = sum_pts cell * field . Phi_j
        self._A = {k: self.cell * self._G[k].T for k in ("vx", "vy", "T", "S")}

    def _build_Ap(self):
        """Matrix of P_n P_H (-g int_z^0 (beta_T grad T + beta_S grad S), 0, 0)."""
        s = self.spec
        xg, wg = np.polynomial.legendre.leggauss(160)
        zq = -s.depth * (1 - xg) / 2
        wq = wg * s.depth / 2
        nm = len(self.modes)
        # pressure velocity for each T/S mode, evaluated with exact horizontal
        # quadrature and Gauss-Legendre in z
        Ap = np.zeros((nm, nm))
        ev = self.evaluate_modes(self.x, self.y, zq, keys=("vx", "vy"))
        hq = (2 * math.pi / self.shape[0]) * (2 * math.pi / self.shape[1])
        wts = hq * wq[None, None, :]
        integ = {}
        for j, md in enumerate(self.modes):
            if md.var == VEL or (md.kx == 0 and md.ky == 0):
                continue
            coef = -s.g * (s.beta_T if md.var == TEMP else s.beta_S)
            H, Hx, Hy = _horizontal(md.kx, md.ky, md.trig, self.x, self.y)
            if md.m not in integ:
                integ[md.m] = _vertical(md.m, s.depth, zq)[2]
            Ci = integ[md.m]
            c = self._norm(md) * coef
            px = c * Hx[:, :, None] * Ci[None, None, :]
            py = c * Hy[:, :, None] * Ci[None, None, :]
            col = np.einsum("jxyz,xyz->j", ev["vx"], px * wts) + np.einsum("jxyz,xyz->j", ev["vy"], py * wts)
            Ap[:, j] = col
        Ap[np.abs(Ap) < 1e-15 * max(1.0, np.max(np.abs(Ap)))] = 0.0
        return Ap

    def coriolis_parameter(self, y=None):
        y = self.y if y is None else y
        return self.spec.f0 + self.spec.beta * (y - math.pi)

    def _build_E(self):
        f = np.broadcast_to(self.coriolis_parameter()[None, :, None], self.shape).ravel()
        vx, vy = self._G["vx"], self._G["vy"]
        # (f k x v) = (-f vy, f vx)
        return self._A["vx"].T @ (-(f * vy)).T + self._A["vy"].T @ (f * vx).T

    def _build_forcing(self):
        out = np.zeros(self.declared_dim)
        s = self.spec
        for j, md in enumerate(self.modes):
            if s.forcing_v and md.var == VEL and (md.kx, md.ky, md.m, md.trig) == (1, 0, 1, 0) \
                    and md.direction == (0.0, 1.0):
                out[j] = s.forcing_v
            if s.forcing_T and md.var == TEMP and (md.kx, md.ky, md.m, md.trig) == (1, 0, 0, 0):
                out[j] = s.forcing_T
        return out

    # ------------------------------------------------------------------
    # grid <-> coefficients

    def _pad(self, u):
        d = self.declared_dim
        u = np.asarray(u, float)
        if u.shape[-1] == d:
            return u
        out = np.zeros(u.shape[:-1] + (d,))
        out[..., : u.shape[-1]] = u
        return out

    def to_grid(self, u) -> PEState:
        u = self._pad(u)
        shp = u.shape[:-1] + self.shape
        v = np.stack([(u @ self._G["vx"]).reshape(shp), (u @ self._G["vy"]).reshape(shp)], axis=-4)
        return PEState(v, (u @ self._G["T"]).reshape(shp), (u @ self._G["S"]).reshape(shp))

    def analyse(self, vx, vy, T, S, n=None):
        """Galerkin coefficients of grid fields (applies P_H implicitly)."""
        flat = lambda a: np.asarray(a, float).reshape(np.shape(a)[:-3] + (-1,))
        out = flat(vx) @ self._A["vx"] + flat(vy) @ self._A["vy"] + flat(T) @ self._A["T"] + flat(S) @ self._A["S"]
        return out if n is None else out[..., :n]

    def from_grid(self, state: PEState, n=None, check=False, tol=1e-10):
        if check:
            res = rigid_lid_residual(self.spec, state)
            if res > tol:
                raise ConstraintViolation(f"state violates H constraints (residual {res:.3e})")
        return self.analyse(state.v[0], state.v[1], state.T, state.S, n)

    def w_field(self, u):
        u = self._pad(u)
        return (u @ self._G["w"]).reshape(u.shape[:-1] + self.shape)

    # ------------------------------------------------------------------
    # operators

    def advection_fields(self, u, us):
        """Unprojected B1 + B2 on the grid: (v.grad) phi# + w(v) d_z phi#."""
        u, us = self._pad(u), self._pad(us)
        G = self._G
        vx, vy, w = u @ G["vx"], u @ G["vy"], u @ G["w"]
        out = {}
        for k in ("vx", "vy", "T", "S"):
            h1 = vx * (us @ G[f"dx_{k}"]) + vy * (us @ G[f"dy_{k}"])
            h2 = w * (us @ G[f"dz_{k}"])
            out[k] = (h1, h2)
        return out

    def B(self, u, us):
        u, us = np.broadcast_arrays(np.asarray(u, float), np.asarray(us, float))
        n = u.shape[-1]
        adv = self.advection_fields(u, us)
        total = 0.0
        for k in ("vx", "vy", "T", "S"):
            h1, h2 = adv[k]
            total = total + (h1 + h2) @ self._A[k]
        return total[..., :n]

    def Ap(self, u):
        u = np.asarray(u, float)
        n = u.shape[-1]
        return u @ self._Ap[:n, :n].T

    def E(self, u):
        u = np.asarray(u, float)
        n = u.shape[-1]
        return u @ self._E[:n, :n].T

    def F(self, t, u):
        u = np.asarray(u, float)
        return self.Ap(u) + self.E(u) + self._forcing[: u.shape[-1]]

    def sigma(self, t, u, K=None):
        u = np.asarray(u, float)
        K = self.noise_modes if K is None else K
        n = u.shape[-1]
        cols = np.zeros(u.shape[:-1] + (K, n))
        d = min(K, n)
        k = np.arange(1, d + 1, dtype=float)
        cols[..., np.arange(d), np.arange(d)] = self.spec.noise_amplitude * k ** (-self.spec.noise_decay)
        return cols

    def describe(self):
        d = super().describe()
        d["spec"] = dict(self.spec.__dict__)
        return d


# ----------------------------------------------------------------------
# grid-level operators


def _khat(spec: PE3DSpec):
    """Integer wavenumbers with the Nyquist entries set to zero, so spectral
    derivatives of real fields stay real."""
    nx, ny, _ = spec.modes
    kx = np.fft.fftfreq(nx, 1.0 / nx)
    ky = np.fft.fftfreq(ny, 1.0 / ny)
    if nx % 2 == 0:
        kx[nx // 2] = 0.0
    if ny % 2 == 0:
        ky[ny // 2] = 0.0
    return kx[:, None], ky[None, :]


def _nyquist_mask(spec: PE3DSpec):
    nx, ny, _ = spec.modes
    mx, my = np.ones(nx), np.ones(ny)
    if nx % 2 == 0:
        mx[nx // 2] = 0.0
    if ny % 2 == 0:
        my[ny // 2] = 0.0
    return mx[:, None] * my[None, :]


def _hgrad(spec, f):
    """Spectral horizontal gradient of grid field(s) (..., nx, ny, nz)."""
    kx, ky = _khat(spec)
    fh = np.fft.fft2(f, axes=(-3, -2))
    gx = np.fft.ifft2(1j * kx[..., None] * fh, axes=(-3, -2)).real
    gy = np.fft.ifft2(1j * ky[..., None] * fh, axes=(-3, -2)).real
    return gx, gy


def _vertical_integral(spec, f, z=None):
    """int_z^0 f dz for grid data resolved by its cosine expansion in z."""
    from scipy.fft import dct

    nz = spec.modes[2]
    h = spec.depth
    # samples ordered from the bottom; cos(m pi z / h) = (-1)^m cos(m pi (l+1/2)/nz)
    coef = dct(f, type=2, axis=-1) / nz
    coef[..., 0] *= 0.5
    m = np.arange(nz)
    coef = coef * ((-1.0) ** m)
    _, _, zg = grid_axes(spec)
    zz = zg if z is None else np.atleast_1d(np.asarray(z, float))
    a = m * math.pi / h
    with np.errstate(divide="ignore", invalid="ignore"):
        basis = np.where(m[:, None] == 0, -zz[None, :],
                         -np.sin(a[:, None] * zz[None, :]) / np.where(a == 0, 1.0, a)[:, None])
    return np.tensordot(coef, basis, axes=([-1], [0]))


def pe_w_diagnostic(spec: PE3DSpec, v, z=None):
    """w(v)(x, y, z) = int_z^0 div v dz for grid velocity v of shape (2, nx, ny, nz).

    Returned at the grid depths, or at the depths ``z`` when given.
    """
    v = np.asarray(v, float)
    if v.shape[0] != 2 or v.shape[1:] != tuple(spec.modes):
        raise ValueError(f"velocity must have shape (2, {spec.modes}), got {v.shape}")
    gx, _ = _hgrad(spec, v[0])
    _, gy = _hgrad(spec, v[1])
    return _vertical_integral(spec, gx + gy, z)


def pe_Ap_field(spec: PE3DSpec, T, S, z=None):
    """Pre-projection pressure velocity -g int_z^0 (beta_T grad T + beta_S grad S)."""
    rho_grad = spec.beta_T * np.asarray(T, float) + spec.beta_S * np.asarray(S, float)
    gx, gy = _hgrad(spec, rho_grad)
    return np.stack([-spec.g * _vertical_integral(spec, gx, z),
                     -spec.g * _vertical_integral(spec, gy, z)])


def pe_coriolis_field(spec: PE3DSpec, v):
    """Pointwise f k x v = (-f v_y, f v_x) with f = f0 + beta (y - pi)."""
    v = np.asarray(v, float)
    _, y, _ = grid_axes(spec)
    f = (spec.f0 + spec.beta * (y - math.pi))[None, :, None]
    return np.stack([-f * v[1], f * v[0]])


def rigid_lid_project(spec: PE3DSpec, state: PEState) -> PEState:
    """Project onto the H constraints: divergence-free depth-averaged velocity
    (Helmholtz projection of the barotropic part) and mean-zero salinity.
    Barotropic content at the grid Nyquist wavenumbers, where divergence is
    not resolved, is removed."""
    v = np.asarray(state.v, float)
    vbar = v.mean(axis=-1)
    kx, ky = _khat(spec)
    ksq = kx ** 2 + ky ** 2
    ksq[ksq == 0] = 1.0
    mask = _nyquist_mask(spec)
    ux, uy = mask * np.fft.fft2(vbar[0]), mask * np.fft.fft2(vbar[1])
    dot = (kx * ux + ky * uy) / ksq
    px = np.fft.ifft2(ux - kx * dot).real
    py = np.fft.ifft2(uy - ky * dot).real
    vnew = v - vbar[..., None] + np.stack([px, py])[..., None]
    S = np.asarray(state.S, float)
    return PEState(vnew, np.array(state.T, float), S - S.mean())


def rigid_lid_residual(spec: PE3DSpec, state: PEState) -> float:
    """Size of the barotropic divergence plus the salinity mean."""
    vbar = np.asarray(state.v, float).mean(axis=-1)
    gx, _ = _hgrad(spec, vbar[0][..., None])
    _, gy = _hgrad(spec, vbar[1][..., None])
    return float(np.max(np.abs(gx + gy))) + abs(float(np.mean(state.S)))


# ----------------------------------------------------------------------
# coefficient-level entry points


def _coeffs(model, U, check=True):
    if isinstance(U, PEState):
        return model.from_grid(U, check=check)
    return np.asarray(U, float)


def pe_B(model: PEModel, U, Us):
    """B1 + B2 projected; accepts coefficient arrays or constrained PEStates."""
    return model.B(_coeffs(model, U), _coeffs(model, Us))


def pe_Ap(model: PEModel, U):
    return model.Ap(_coeffs(model, U))


def pe_coriolis(model: PEModel, U):
    return model.E(_coeffs(model, U))


def pe_F(model: PEModel, U, t: float = 0.0):
    return model.F(t, _coeffs(model, U))
