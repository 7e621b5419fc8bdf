"""Simplified 1D radial transport surrogate.

The plasma is a circular cylinder of minor radius ``a`` bent into a torus of
major radius ``R0``. Profiles live on ``n_cells`` uniform finite-volume cells in
normalized radius. One substep does, in order:

1. electron density: implicit diffusion plus relaxation toward a target profile,
2. current: implicit resistive diffusion of the enclosed current, edge value
   pinned to the requested plasma current,
3. ion/electron energy exchange, solved analytically per cell,
4. ion/electron heat: implicit diffusion with explicit heating sources and an
   implicit radiation sink.

Units: temperatures in keV, densities in 1e19 m^-3, current density in MA/m^2,
currents in MA, powers in MW, lengths in m, time in s.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import Literal

import numpy as np
from functools import lru_cache

from scipy.linalg.lapack import dgtsv

from rampctl.errors import GridMismatch, NonPositiveProfile, NumericalBlowup, ZeroCurrent

MU0 = 4e-7 * np.pi
KEV_MJ = 1.602176634e-3  # MJ/m^3 carried by 1e19 m^-3 at 1 keV
KEV_PA = 1.602176634e3  # Pa for 1e19 m^-3 at 1 keV
E_FUSION_MJ = 17.59 * 1.602176634e-19  # MJ per D-T reaction

SubstepMode = Literal["auto", "fixed"]


@dataclass(frozen=True)
class RadialGrid:
    """Uniform cell-centered grid in normalized radius."""

    n_cells: int = 25
    minor_radius_m: float = 2.0
    major_radius_m: float = 6.2
    b0_tesla: float = 5.3

    rho: np.ndarray = field(init=False, repr=False, compare=False)
    rho_faces: np.ndarray = field(init=False, repr=False, compare=False)
    cell_area: np.ndarray = field(init=False, repr=False, compare=False)
    cell_volume: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if int(self.n_cells) != self.n_cells or self.n_cells < 4:
            raise ValueError(f"n_cells must be an integer >= 4, got {self.n_cells}")
        if min(self.minor_radius_m, self.major_radius_m, self.b0_tesla) <= 0:
            raise ValueError("geometry lengths and field must be positive")
        n = int(self.n_cells)
        faces = np.arange(n + 1) / n
        rho = (np.arange(n) + 0.5) / n
        a2 = self.minor_radius_m**2
        area = np.pi * a2 * (faces[1:] ** 2 - faces[:-1] ** 2)
        object.__setattr__(self, "n_cells", n)
        object.__setattr__(self, "rho", rho)
        object.__setattr__(self, "rho_faces", faces)
        object.__setattr__(self, "cell_area", area)
        object.__setattr__(self, "cell_volume", 2.0 * np.pi * self.major_radius_m * area)

    @property
    def d_rho(self) -> float:
        return 1.0 / self.n_cells

    @property
    def volume(self) -> float:
        return float(self.cell_volume.sum())


@dataclass(frozen=True)
class SimConfig:
    """Transport coefficients, sources and numerics.

    Mode-dependent values are ``(L-mode, H-mode)`` pairs; H-mode applies from
    ``lh_transition_time_s`` on.
    """

    grid: RadialGrid = field(default_factory=RadialGrid)
    chi_i: tuple[float, float] = (1.0, 0.5)
    chi_e: tuple[float, float] = (1.0, 0.5)
    d_e: float = 0.5
    eta: float = 5.6e-8  # Spitzer-like resistivity coefficient, ohm m keV^1.5
    z_eff: float = 2.0
    lh_transition_time_s: float = 100.0
    dt_fixed_s: float = 0.2
    dt_min_s: float = 0.01
    dt_max_s: float = 0.5

    # confinement scaling of the diffusivities with plasma current
    chi_current_exponent: float = 0.0
    chi_current_ref_ma: float = 15.0

    # boundary conditions
    edge_bc: Literal["dirichlet", "zero_flux"] = "dirichlet"
    t_edge_kev: tuple[float, float] = (0.2, 0.2)
    n_target_core: float = 7.0
    n_target_edge: float = 3.0
    n_target_exponent: float = 1.0
    greenwald_density: bool = False  # read n_target_* as Greenwald fractions
    tau_density_s: float = 10.0  # inf disables the relaxation source

    # sources and sinks
    nbi_location: float = 0.25
    nbi_width: float = 0.25
    nbi_ion_fraction: float = 0.5
    ecrh_location: float = 0.35
    ecrh_width: float = 0.05
    ohmic_multiplier: float = 1.0
    radiation_multiplier: float = 1.0
    equipartition_coeff: float = 0.015
    impurity_charge: float = 10.0

    # derived-quantity settings
    tau_ref_multiplier: tuple[float, float] = (0.5, 1.0)
    fusion_power_floor_mw: float = 0.1
    rho_core_cutoff: float = 0.0
    q_shape_factor: float = 1.0  # multiplies the cylindrical q; 1 is a circular cylinder

    # numerics
    t_ceiling_kev: float = 100.0
    auto_dt_factor: float = 2.0

    def problems(self) -> list[str]:
        """Return every violated invariant (empty when valid)."""
        out = []
        for name in ("chi_i", "chi_e", "t_edge_kev", "tau_ref_multiplier"):
            value = getattr(self, name)
            if len(value) != 2:
                out.append(f"sim.{name} must be an (L, H) pair")
        if min(self.chi_i) <= 0 or min(self.chi_e) <= 0 or self.d_e <= 0:
            out.append("sim diffusivities must be > 0")
        if self.eta < 0:
            out.append("sim.eta must be >= 0")
        if self.z_eff < 1:
            out.append("sim.z_eff must be >= 1")
        if not 1 <= self.z_eff <= self.impurity_charge:
            out.append("sim.z_eff must not exceed sim.impurity_charge")
        if not 0 < self.dt_min_s <= self.dt_max_s:
            out.append("sim requires 0 < dt_min_s <= dt_max_s")
        if self.dt_fixed_s <= 0:
            out.append("sim.dt_fixed_s must be > 0")
        if self.edge_bc not in ("dirichlet", "zero_flux"):
            out.append(f"sim.edge_bc must be 'dirichlet' or 'zero_flux', got {self.edge_bc!r}")
        if min(self.t_edge_kev) <= 0 or min(self.n_target_core, self.n_target_edge) <= 0:
            out.append("sim edge temperature and target densities must be > 0")
        if self.tau_density_s <= 0:
            out.append("sim.tau_density_s must be > 0")
        if not 0 <= self.nbi_ion_fraction <= 1:
            out.append("sim.nbi_ion_fraction must lie in [0, 1]")
        if min(self.nbi_width, self.ecrh_width) <= 0:
            out.append("sim deposition widths must be > 0")
        if self.fusion_power_floor_mw <= 0:
            out.append("sim.fusion_power_floor_mw must be > 0")
        if self.q_shape_factor <= 0:
            out.append("sim.q_shape_factor must be > 0")
        if self.t_ceiling_kev <= 0:
            out.append("sim.t_ceiling_kev must be > 0")
        return out

    def is_h_mode(self, t: float) -> bool:
        return t >= self.lh_transition_time_s - 1e-9

    def evolved_in_h_mode(self, t: float) -> bool:
        """Regime that produced a state stamped ``t``; a state landing on the
        transition time still carries L-mode profiles."""
        return t > self.lh_transition_time_s + 1e-9

    def replace(self, **changes) -> SimConfig:
        return dataclasses.replace(self, **changes)


@dataclass(frozen=True, eq=False)
class PlasmaState:
    """Plasma profiles at time ``t``; ``psi`` is carried along, never evolved."""

    t: float
    T_i: np.ndarray
    T_e: np.ndarray
    n_e: np.ndarray
    j: np.ndarray
    psi: np.ndarray

    def replace(self, **changes) -> PlasmaState:
        return dataclasses.replace(self, **changes)

    def total_current(self, grid: RadialGrid) -> float:
        """Area integral of the current density, MA."""
        return float(np.dot(self.j, grid.cell_area))

    @property
    def j0(self) -> float:
        """Central current density, taken at the innermost cell."""
        return float(self.j[0])


@dataclass(frozen=True)
class Controls:
    i_p: float
    p_nbi: float = 0.0
    p_ecrh: float = 0.0

    def __post_init__(self):
        values = (self.i_p, self.p_nbi, self.p_ecrh)
        if not np.all(np.isfinite(values)):
            raise ValueError(f"controls must be finite, got {values}")
        if min(values) < 0:
            raise ValueError(f"controls must be non-negative, got {values}")


@dataclass(frozen=True, eq=False)
class InitialProfiles:
    """Starting profiles; ``j`` only fixes the shape, ``i_p`` its integral."""

    T_i: np.ndarray
    T_e: np.ndarray
    n_e: np.ndarray
    j: np.ndarray
    i_p: float

    @classmethod
    def parabolic(
        cls,
        grid: RadialGrid,
        *,
        T_core: float = 6.0,
        T_edge: float = 0.2,
        T_exponent: float = 1.0,
        n_core: float = 7.0,
        n_edge: float = 3.0,
        n_exponent: float = 1.0,
        j_exponent: float = 2.0,
        i_p: float = 3.0,
    ) -> InitialProfiles:
        """``edge + (core - edge) * (1 - rho^2)^exponent`` for each profile."""
        shape = 1.0 - grid.rho**2
        temp = T_edge + (T_core - T_edge) * shape**T_exponent
        return cls(
            T_i=temp.copy(),
            T_e=temp.copy(),
            n_e=n_edge + (n_core - n_edge) * shape**n_exponent,
            j=shape**j_exponent,
            i_p=i_p,
        )


@dataclass(frozen=True)
class DerivedQuantities:
    q_profile: np.ndarray = field(compare=False)
    q_min: float
    q95: float
    beta: float
    q_fusion_gain: float
    h98: float
    # diagnostics, not part of the reward
    p_fusion_mw: float = 0.0
    p_ohmic_mw: float = 0.0
    p_loss_mw: float = 0.0
    w_thermal_mj: float = 0.0
    tau_e_s: float = 0.0


@dataclass
class SubstepStats:
    n_substeps: int = 0
    dt_used_s: list[float] = field(default_factory=list)


# -- profile helpers ----------------------------------------------------------


def face_currents(j: np.ndarray, grid: RadialGrid) -> np.ndarray:
    """Current enclosed by each cell face, MA (length ``n_cells + 1``)."""
    out = np.empty(grid.n_cells + 1)
    out[0] = 0.0
    np.cumsum(j * grid.cell_area, out=out[1:])
    return out


def poloidal_flux(j: np.ndarray, grid: RadialGrid) -> np.ndarray:
    """Poloidal flux at cell centers, Wb, zero on axis."""
    i_faces = face_currents(j, grid) * 1e6
    faces = grid.rho_faces
    dpsi = np.zeros_like(faces)
    dpsi[1:] = MU0 * grid.major_radius_m * i_faces[1:] / (2.0 * np.pi * faces[1:])
    # enclosed current ~ rho^2 near the axis, so dpsi/drho -> 0 there
    psi_faces = np.concatenate(([0.0], np.cumsum(0.5 * (dpsi[1:] + dpsi[:-1]) * grid.d_rho)))
    return 0.5 * (psi_faces[1:] + psi_faces[:-1])


def gaussian_deposition(grid: RadialGrid, location: float, width: float, power_mw: float) -> np.ndarray:
    """Power density (MW/m^3) of a Gaussian deposition carrying ``power_mw``."""
    shape = np.exp(-0.5 * ((grid.rho - location) / width) ** 2)
    return power_mw * shape / np.dot(shape, grid.cell_volume)


def resistivity(T_e: np.ndarray, config: SimConfig) -> np.ndarray:
    """Spitzer-like resistivity, ohm m."""
    return config.eta * config.z_eff / T_e**1.5


def ion_density(n_e: np.ndarray, config: SimConfig) -> np.ndarray:
    """Main-ion density from quasineutrality with a single impurity species."""
    z = config.impurity_charge
    dilution = (z - config.z_eff) / (z - 1.0) if z > 1 else 1.0
    return n_e * dilution


def bremsstrahlung(n_e: np.ndarray, T_e: np.ndarray, config: SimConfig) -> np.ndarray:
    """Bremsstrahlung power density, MW/m^3."""
    return config.radiation_multiplier * 5.35e-5 * config.z_eff * n_e**2 * np.sqrt(T_e)


def dt_reactivity(T: np.ndarray) -> np.ndarray:
    """D-T fusion reactivity <sigma v> in m^3/s (Bosch-Hale fit).

    The fit is valid on [0.2, 100] keV; temperatures are clamped to that range.
    """
    T = np.clip(T, 0.2, 100.0)
    bg = 34.3827
    mrc2 = 1124656.0
    c1, c2, c3, c4, c5, c6, c7 = (
        1.17302e-9, 1.51361e-2, 7.51886e-2, 4.60643e-3, 1.35e-2, -1.06750e-4, 1.366e-5,
    )
    theta = T / (1.0 - T * (c2 + T * (c4 + T * c6)) / (1.0 + T * (c3 + T * (c5 + T * c7))))
    xi = (bg**2 / (4.0 * theta)) ** (1.0 / 3.0)
    sigv_cm3 = c1 * theta * np.sqrt(xi / (mrc2 * T**3)) * np.exp(-3.0 * xi)
    return sigv_cm3 * 1e-6


def _current_scaling(i_p: float, config: SimConfig) -> float:
    if config.chi_current_exponent == 0.0:
        return 1.0
    return (config.chi_current_ref_ma / max(i_p, 0.1)) ** config.chi_current_exponent


def diffusivities(t: float, i_p: float, config: SimConfig) -> tuple[float, float]:
    """Ion and electron heat diffusivity in effect at ``t``."""
    k = 1 if config.is_h_mode(t) else 0
    scale = _current_scaling(i_p, config)
    return config.chi_i[k] * scale, config.chi_e[k] * scale


# -- state construction ---------------------------------------------------------


def _check_profile(name: str, values, grid: RadialGrid, positive: bool) -> np.ndarray:
    arr = np.asarray(values, dtype=float)
    if arr.shape != (grid.n_cells,):
        raise GridMismatch(f"{name} has shape {arr.shape}, grid needs ({grid.n_cells},)")
    if not np.all(np.isfinite(arr)):
        raise NonPositiveProfile(f"{name} contains non-finite values")
    if positive and np.any(arr <= 0):
        raise NonPositiveProfile(f"{name} must be strictly positive")
    return arr.copy()


def init_state(config: SimConfig, initial: InitialProfiles) -> PlasmaState:
    """Build the t = 0 state, rescaling ``j`` to carry ``initial.i_p``."""
    grid = config.grid
    T_i = _check_profile("T_i", initial.T_i, grid, positive=True)
    T_e = _check_profile("T_e", initial.T_e, grid, positive=True)
    n_e = _check_profile("n_e", initial.n_e, grid, positive=True)
    j = _check_profile("j", initial.j, grid, positive=False)
    if initial.i_p <= 0:
        raise ValueError("initial plasma current must be > 0")
    total = np.dot(j, grid.cell_area)
    if total <= 0:
        raise ValueError("initial current-density shape must carry positive current")
    j = j * (initial.i_p / total)
    return PlasmaState(t=0.0, T_i=T_i, T_e=T_e, n_e=n_e, j=j, psi=poloidal_flux(j, grid))


# -- solvers ----------------------------------------------------------------------


def _solve_tridiagonal(lower, diag, upper, rhs):
    """Solve with sub-diagonal ``lower`` (n-1), ``diag`` (n), super-diagonal ``upper`` (n-1)."""
    x, info = dgtsv(lower, diag, upper, rhs)[3:]
    if info != 0:
        raise NumericalBlowup(f"singular tridiagonal system (lapack info={info})")
    return x


@dataclass(frozen=True, eq=False)
class _Operators:
    """Geometry factors and source shapes that depend only on the configuration."""

    vol: np.ndarray  # rho * drho, the cell volume weight
    face_coef: np.ndarray  # rho_face / (drho a^2) on interior faces
    edge_coef: float  # 1 / (drho/2 a^2) for the boundary half cell
    current_coef: np.ndarray  # 2 pi rho_face / (mu0 drho) on interior faces
    inv_area: np.ndarray
    nbi_shape: np.ndarray  # MW/m^3 per MW injected
    ecrh_shape: np.ndarray
    n_shape: np.ndarray
    dilution: float


@lru_cache(maxsize=32)
def _operators(config: SimConfig) -> _Operators:
    grid = config.grid
    a2 = grid.minor_radius_m**2
    drho = grid.d_rho
    z = config.impurity_charge
    return _Operators(
        vol=grid.rho * drho,
        face_coef=grid.rho_faces[1:-1] / (drho * a2),
        edge_coef=1.0 / (0.5 * drho * a2),
        current_coef=2.0 * np.pi * grid.rho_faces[1:-1] / (MU0 * drho),
        inv_area=1.0 / grid.cell_area,
        nbi_shape=gaussian_deposition(grid, config.nbi_location, config.nbi_width, 1.0),
        ecrh_shape=gaussian_deposition(grid, config.ecrh_location, config.ecrh_width, 1.0),
        n_shape=(1.0 - grid.rho**2) ** config.n_target_exponent,
        dilution=(z - config.z_eff) / (z - 1.0) if z > 1 else 1.0,
    )


def density_target(i_p: float, config: SimConfig) -> tuple[np.ndarray, float]:
    """Target density profile and edge value, 1e19 m^-3.

    With ``greenwald_density`` the core and edge settings are fractions of the
    Greenwald density ``i_p / (pi a^2)`` (in 1e20 m^-3).
    """
    ops = _operators(config)
    core, edge = config.n_target_core, config.n_target_edge
    if config.greenwald_density:
        n_gw = 10.0 * max(i_p, 0.0) / (np.pi * config.grid.minor_radius_m**2)
        core, edge = core * n_gw, edge * n_gw
    return edge + (core - edge) * ops.n_shape, edge


def _implicit_cell_diffusion(ops, weight, rhs, d_faces, dt, d_edge=0.0, x_edge=0.0, sink=None):
    """Backward-Euler finite-volume step with face diffusivities.

    Solves ``weight*x' - dt*div(d grad x') + dt*sink*x' = rhs`` where
    ``d_faces`` holds the diffusivity on the ``n-1`` interior faces and the edge
    face couples to ``x_edge`` through ``d_edge`` (zero gives a zero-flux edge).
    The rows are scaled by the cell volume, which keeps the matrix symmetric.
    """
    vol = ops.vol
    c = dt * ops.face_coef * d_faces
    diag = weight * vol
    if sink is not None:
        diag = diag + dt * sink * vol
    diag[:-1] += c
    diag[1:] += c
    b = rhs * vol
    if d_edge:
        c_edge = dt * d_edge * ops.edge_coef
        diag[-1] += c_edge
        b[-1] += c_edge * x_edge
    return _solve_tridiagonal(-c, diag, -c, b)


def _implicit_current(ops, i_faces, eta, i_p, dt):
    """Backward-Euler resistive diffusion of the enclosed current.

    Unknowns are the interior face currents; axis current is zero and the edge
    current equals ``i_p``.
    """
    coef = ops.current_coef
    e = dt * eta * ops.inv_area
    diag = 1.0 + coef * (e[1:] + e[:-1])
    upper = -coef[:-1] * e[1:-1]
    lower = -coef[1:] * e[1:-1]
    rhs = i_faces[1:-1].copy()
    rhs[-1] += coef[-1] * e[-1] * i_p
    out = np.empty(i_faces.size)
    out[0] = 0.0
    out[-1] = i_p
    out[1:-1] = _solve_tridiagonal(lower, diag, upper, rhs)
    return out


def _step_profiles(t, T_i, T_e, n_e, j, controls, dt, config):
    """One substep on bare arrays; returns ``(T_i, T_e, n_e, j)``."""
    grid = config.grid
    ops = _operators(config)
    zero_flux = config.edge_bc == "zero_flux"

    # density
    n_target, n_edge = density_target(controls.i_p, config)
    relax = 0.0 if np.isinf(config.tau_density_s) else 1.0 / config.tau_density_s
    n_new = _implicit_cell_diffusion(
        ops,
        weight=np.full(grid.n_cells, 1.0 + dt * relax),
        rhs=n_e + dt * relax * n_target,
        d_faces=config.d_e,
        dt=dt,
        d_edge=0.0 if zero_flux else config.d_e,
        x_edge=n_edge,
    )

    # current
    eta = config.eta * config.z_eff / T_e**1.5
    i_faces = _implicit_current(ops, face_currents(j, grid), eta, controls.i_p, dt)
    j_new = np.diff(i_faces) * ops.inv_area

    # energy exchange, exact for a frozen rate
    ni_old = ops.dilution * n_e
    Te, Ti = T_e, T_i
    if config.equipartition_coeff > 0:
        ntot = n_e + ni_old
        t_mean = (n_e * Te + ni_old * Ti) / ntot
        rate = config.equipartition_coeff * ntot / (1.5 * KEV_MJ * Te**1.5)
        gap = (Te - Ti) * np.exp(-rate * dt)
        Te = t_mean + ni_old / ntot * gap
        Ti = t_mean - n_e / ntot * gap

    # heating, MW/m^3 -> 1e19 keV m^-3 s^-1
    p_nbi = controls.p_nbi * ops.nbi_shape
    p_ohm = config.ohmic_multiplier * 1e6 * eta * j_new**2
    f_i = config.nbi_ion_fraction
    s_i = (f_i / KEV_MJ) * p_nbi
    s_e = ((1.0 - f_i) * p_nbi + controls.p_ecrh * ops.ecrh_shape + p_ohm) / KEV_MJ
    sink_e = bremsstrahlung(n_e, Te, config) / (KEV_MJ * Te)

    chi_i, chi_e = diffusivities(t, controls.i_p, config)
    ni_new = ops.dilution * n_new
    t_bc = config.t_edge_kev[1 if config.is_h_mode(t) else 0]
    n_face = 0.5 * (n_new[1:] + n_new[:-1])
    edge_n = 0.0 if zero_flux else n_edge

    Te_new = _implicit_cell_diffusion(
        ops, weight=1.5 * n_new, rhs=1.5 * n_e * Te + dt * s_e,
        d_faces=n_face * chi_e, dt=dt, d_edge=edge_n * chi_e, x_edge=t_bc, sink=sink_e,
    )
    Ti_new = _implicit_cell_diffusion(
        ops, weight=1.5 * ni_new, rhs=1.5 * ni_old * Ti + dt * s_i,
        d_faces=ops.dilution * n_face * chi_i, dt=dt, d_edge=ops.dilution * edge_n * chi_i, x_edge=t_bc,
    )
    _check_feasible(t + dt, Ti_new, Te_new, n_new, j_new, config)
    return Ti_new, Te_new, n_new, j_new


def _check_feasible(t, T_i, T_e, n_e, j, config: SimConfig) -> None:
    ceiling = config.t_ceiling_kev
    for name, T in (("T_i", T_i), ("T_e", T_e)):
        lo, hi = T.min(), T.max()
        # NaN fails both comparisons
        if not (lo > 0 and hi <= ceiling):
            raise NumericalBlowup(
                f"{name} left (0, {ceiling}] keV at t={t:.6g} s (range {lo:.4g}..{hi:.4g})"
            )
    if not n_e.min() > 0 or not np.isfinite(n_e.max()):
        raise NumericalBlowup(f"density not positive and finite at t={t:.6g} s")
    if not np.isfinite(j.sum()):
        raise NumericalBlowup(f"non-finite current density at t={t:.6g} s")


def substep(state: PlasmaState, controls: Controls, dt: float, config: SimConfig) -> PlasmaState:
    """Advance the plasma by one implicit substep of length ``dt``."""
    if not dt > 0:
        raise ValueError(f"dt must be > 0, got {dt}")
    T_i, T_e, n_e, j = _step_profiles(state.t, state.T_i, state.T_e, state.n_e, state.j, controls, dt, config)
    return PlasmaState(t=state.t + dt, T_i=T_i, T_e=T_e, n_e=n_e, j=j, psi=poloidal_flux(j, config.grid))


def auto_dt(state: PlasmaState, controls: Controls, config: SimConfig) -> float:
    """Substep size from an explicit-diffusion stability estimate, clamped to bounds.

    The implicit solve is stable for any step; the estimate only bounds the
    splitting error, with ``auto_dt_factor`` times the explicit limit allowed.
    """
    return _auto_dt(state.t, state.T_e, controls, config)


def _auto_dt(t, T_e, controls, config):
    grid = config.grid
    dr2 = (grid.minor_radius_m * grid.d_rho) ** 2
    chi_i, chi_e = diffusivities(t, controls.i_p, config)
    eta_max = config.eta * config.z_eff / T_e.min() ** 1.5
    d_max = max(chi_i, chi_e, config.d_e, eta_max / MU0)
    dt = config.auto_dt_factor * dr2 / (2.0 * d_max)
    return float(min(max(dt, config.dt_min_s), config.dt_max_s))


def advance(
    state: PlasmaState,
    controls: Controls,
    interval: float,
    config: SimConfig,
    mode: SubstepMode = "fixed",
    k: int | None = None,
) -> tuple[PlasmaState, SubstepStats]:
    """Advance by one control interval with fixed or adaptive substeps.

    Fixed mode uses ``k`` equal substeps (``k`` defaults to
    ``round(interval / config.dt_fixed_s)``). Auto mode picks each substep from
    :func:`auto_dt` and truncates the last one to land exactly on the interval.
    The returned state's time is ``state.t + interval``.
    """
    if not interval > 0:
        raise ValueError(f"interval must be > 0, got {interval}")
    if mode not in ("fixed", "auto"):
        raise ValueError(f"unknown substep mode {mode!r}")
    if mode == "fixed":
        if k is None:
            k = max(1, int(round(interval / config.dt_fixed_s)))
        if k < 1:
            raise ValueError(f"fixed mode needs k >= 1, got {k}")

    stats = SubstepStats()
    t = state.t
    profiles = (state.T_i, state.T_e, state.n_e, state.j)
    elapsed = 0.0
    try:
        while True:
            if mode == "fixed":
                dt = interval / k
                last = stats.n_substeps == k - 1
            else:
                remaining = interval - elapsed
                dt = _auto_dt(t, profiles[1], controls, config)
                last = dt >= remaining * (1.0 - 1e-12)
                if last:
                    dt = remaining
            profiles = _step_profiles(t, *profiles, controls, dt, config)
            stats.n_substeps += 1
            stats.dt_used_s.append(dt)
            elapsed += dt
            t = state.t + elapsed
            if last:
                break
    except NumericalBlowup as exc:
        exc.stats = stats
        raise
    T_i, T_e, n_e, j = profiles
    new = PlasmaState(t=state.t + interval, T_i=T_i, T_e=T_e, n_e=n_e, j=j, psi=poloidal_flux(j, config.grid))
    return new, stats


# -- derived quantities -----------------------------------------------------------


def enclosed_current_at_centers(j: np.ndarray, grid: RadialGrid) -> np.ndarray:
    """Enclosed current at each cell center for piecewise-constant ``j``, MA."""
    inner = face_currents(j, grid)[:-1]
    partial = np.pi * grid.minor_radius_m**2 * (grid.rho**2 - grid.rho_faces[:-1] ** 2)
    return inner + j * partial


def safety_factor(
    j: np.ndarray, grid: RadialGrid, rho_core_cutoff: float = 0.0, shape_factor: float = 1.0
) -> np.ndarray:
    """Cylindrical safety factor at cell centers, scaled by ``shape_factor``."""
    i_enc = enclosed_current_at_centers(j, grid) * 1e6
    bad = (i_enc <= 0) & (grid.rho > rho_core_cutoff)
    if np.any(bad):
        raise ZeroCurrent(f"no enclosed current at rho={grid.rho[bad][0]:.3f}")
    a, r0, b0 = grid.minor_radius_m, grid.major_radius_m, grid.b0_tesla
    with np.errstate(divide="ignore"):
        q = shape_factor * np.where(i_enc > 0, 2.0 * np.pi * grid.rho**2 * a**2 * b0 / (MU0 * r0 * np.where(i_enc > 0, i_enc, 1.0)), np.inf)
    return q


def tau_98(i_p: float, n_bar: float, p_heat: float, grid: RadialGrid) -> float:
    """IPB98(y,2) scaling for a circular D-T plasma, s.

    Elongation is 1 and the isotope mass factor 2.5 is folded into the prefactor.
    """
    eps = grid.minor_radius_m / grid.major_radius_m
    return (
        0.0562 * 2.5**0.19
        * i_p**0.93 * grid.b0_tesla**0.15 * n_bar**0.41 * p_heat**-0.69
        * grid.major_radius_m**1.97 * eps**0.58
    )


def compute_derived(state: PlasmaState, controls: Controls, config: SimConfig) -> DerivedQuantities:
    """Safety factor, beta, fusion gain and confinement quality of ``state``."""
    if not controls.i_p > 0:
        raise ZeroCurrent("derived quantities need a positive plasma current")
    grid = config.grid
    vol = grid.cell_volume
    q = safety_factor(state.j, grid, config.rho_core_cutoff, config.q_shape_factor)
    q95 = float(np.interp(0.95, grid.rho, q))

    n_i = ion_density(state.n_e, config)
    energy = state.n_e * state.T_e + n_i * state.T_i
    p_avg = np.dot(energy, vol) / grid.volume * KEV_PA
    beta = 2.0 * MU0 * p_avg / grid.b0_tesla**2

    n_fuel = 0.5 * n_i * 1e19
    p_fus = float(np.dot(n_fuel**2 * dt_reactivity(state.T_i) * E_FUSION_MJ, vol))
    p_ext = controls.p_nbi + controls.p_ecrh
    floor = config.fusion_power_floor_mw
    q_gain = p_fus / max(p_ext, floor)

    eta = resistivity(state.T_e, config)
    p_ohm = float(np.dot(config.ohmic_multiplier * eta * state.j**2 * 1e6, vol))
    w_mj = float(np.dot(1.5 * energy * KEV_MJ, vol))
    p_loss = _loss_power(state, controls, config) + float(np.dot(bremsstrahlung(state.n_e, state.T_e, config), vol))
    p_loss = max(p_loss, floor)
    tau_e = w_mj / p_loss
    p_heat = max(p_ext + p_ohm, floor)
    mode = 1 if config.evolved_in_h_mode(state.t) else 0
    tau_ref = config.tau_ref_multiplier[mode] * tau_98(controls.i_p, float(state.n_e.mean()), p_heat, grid)
    return DerivedQuantities(
        q_profile=q,
        q_min=float(q.min()),
        q95=q95,
        beta=float(beta),
        q_fusion_gain=float(q_gain),
        h98=float(tau_e / tau_ref),
        p_fusion_mw=p_fus,
        p_ohmic_mw=p_ohm,
        p_loss_mw=p_loss,
        w_thermal_mj=w_mj,
        tau_e_s=tau_e,
    )


def _loss_power(state: PlasmaState, controls: Controls, config: SimConfig) -> float:
    """Conductive heat flow through the plasma edge, MW."""
    if config.edge_bc == "zero_flux":
        return 0.0
    grid = config.grid
    mode = 1 if config.evolved_in_h_mode(state.t) else 0
    scale = _current_scaling(controls.i_p, config)
    chi_i, chi_e = config.chi_i[mode] * scale, config.chi_e[mode] * scale
    t_bc = config.t_edge_kev[mode]
    n_edge = density_target(controls.i_p, config)[1]
    ni_edge = n_edge * _operators(config).dilution
    dr = 0.5 * grid.d_rho * grid.minor_radius_m
    flux = (n_edge * chi_e * (state.T_e[-1] - t_bc) + ni_edge * chi_i * (state.T_i[-1] - t_bc)) / dr
    surface = 4.0 * np.pi**2 * grid.major_radius_m * grid.minor_radius_m
    return float(flux * KEV_MJ * surface)


def thermal_energy(state: PlasmaState, config: SimConfig) -> float:
    """Volume-integrated thermal energy (3/2)(n_e T_e + n_i T_i), MJ."""
    n_i = ion_density(state.n_e, config)
    return float(np.dot(1.5 * (state.n_e * state.T_e + n_i * state.T_i) * KEV_MJ, config.grid.cell_volume))


def particle_content(state: PlasmaState, config: SimConfig) -> float:
    """Total electron count in units of 1e19."""
    return float(np.dot(state.n_e, config.grid.cell_volume))
