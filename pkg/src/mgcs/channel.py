"""Geometry-based doubly selective MIMO channel generation.

Specular scatterer geometries, per-channel path parameters (delay, Doppler,
gain), leakage kernels, discrete-delay-Doppler spreading functions, the
delay-Doppler coefficient tensors of the multicarrier system, and the
sparsity-budget arithmetic used to size group-sparse recovery.
"""

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.constants import c as SPEED_OF_LIGHT
from scipy.integrate import trapezoid

from .errors import DomainError
from .waveform import ambiguity_table


# ---------------------------------------------------------------------------
# leakage kernels


@dataclass(frozen=True)
class FilterSpec:
    """Interpolation/anti-aliasing filter pair defining the delay kernel.

    ``kronecker`` is the idealized on-grid kernel (1 at x = 0, else 0), valid
    only for delays on the sample grid and used for exact tests.  ``rrc`` is a
    root-raised-cosine pair evaluated by oversampled trapezoidal quadrature.
    """

    kind: str = "rrc"
    rolloff: float = 0.25
    oversampling: int = 16
    span: int = 16

    def __post_init__(self):
        if self.kind not in ("kronecker", "rrc"):
            raise DomainError(f"unknown filter kind {self.kind!r}")


def _rrc_impulse(u, beta):
    """Unit-energy root-raised-cosine impulse response on the normalized axis."""
    u = np.asarray(u, dtype=float)
    out = np.empty_like(u)
    tiny = 1e-10
    at_zero = np.abs(u) < tiny
    at_pole = np.abs(np.abs(u) - 1.0 / (4 * beta)) < tiny
    regular = ~(at_zero | at_pole)
    ur = u[regular]
    out[regular] = (
        np.sin(np.pi * ur * (1 - beta)) + 4 * beta * ur * np.cos(np.pi * ur * (1 + beta))
    ) / (np.pi * ur * (1 - (4 * beta * ur) ** 2))
    out[at_zero] = 1 - beta + 4 * beta / np.pi
    out[at_pole] = (beta / np.sqrt(2)) * (
        (1 + 2 / np.pi) * np.sin(np.pi / (4 * beta))
        + (1 - 2 / np.pi) * np.cos(np.pi / (4 * beta))
    )
    return out


def phi_kernel(filters, x, nu_ts=0.0):
    """Delay leakage kernel phi^(nu) evaluated at offsets ``x`` (in samples).

    ``nu_ts`` is the Doppler shift normalized by the sample rate (nu * Ts).
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if filters.kind == "kronecker":
        return np.where(np.abs(x) < 1e-9, 1.0, 0.0).astype(complex)
    ovs, span = filters.oversampling, filters.span
    u = np.arange(-span * ovs, span * ovs + 1) / ovs
    h = _rrc_impulse(u, filters.rolloff)
    mod = h * np.exp(-2j * np.pi * nu_ts * u)
    shifted = _rrc_impulse(x[:, None] - u[None, :], filters.rolloff)
    return trapezoid(shifted * mod[None, :], dx=1.0 / ovs, axis=1)


def psi_kernel(x, l_r):
    """Doppler leakage kernel sin(pi x) / (L_r sin(pi x / L_r)).

    Continuous Dirichlet-type kernel; equals 1 at x = 0 and vanishes at every
    other integer that is not a multiple of L_r.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    q = np.round(x / l_r)
    at_mult = np.abs(x - q * l_r) < 1e-9
    out = np.empty_like(x)
    xr = x[~at_mult]
    out[~at_mult] = np.sin(np.pi * xr) / (l_r * np.sin(np.pi * xr / l_r))
    out[at_mult] = np.where((q[at_mult] * (l_r - 1)) % 2 == 0, 1.0, -1.0)
    return out


# ---------------------------------------------------------------------------
# geometry and path parameters


@dataclass(frozen=True)
class GeometryParams:
    """Scenario parameters for the specular scatterer simulator."""

    n_tx: int = 1
    n_rx: int = 1
    fc: float = 5e9
    n_far_clusters: int = 7
    n_near_clusters: int = 3
    per_cluster: int = 10
    area: tuple = (2500.0, 800.0)
    near_radius: float = 100.0
    link_distance: float = 1500.0
    cluster_radius: float = 30.0
    speed_range: tuple = (0.0, 50.0)
    accel_range: tuple = (0.0, 7.0)
    antenna_spacing: float = None  # default: half carrier wavelength c/(2 fc)
    min_range: float = 5.0
    block_duration: float = 0.0  # for the midpoint-velocity rule


@dataclass(frozen=True)
class ScattererGeometry:
    """Sampled antenna/scatterer layout with per-scatterer relative velocities.

    ``v_t``/``v_r`` are the velocities of each scatterer relative to the
    transmitter/receiver, already midpoint-adjusted over the block when the
    scenario carries accelerations.
    """

    tx_pos: np.ndarray
    rx_pos: np.ndarray
    scat_pos: np.ndarray
    v_t: np.ndarray
    v_r: np.ndarray
    acc: np.ndarray
    fc: float

    @property
    def n_scatterers(self):
        return len(self.scat_pos)


def _array_positions(center, n, spacing):
    offsets = (np.arange(n) - (n - 1) / 2.0) * spacing
    pos = np.tile(np.asarray(center, dtype=float), (n, 1))
    pos[:, 1] += offsets
    return pos


def sample_geometry(seed, params=None):
    """Draw a deterministic scatterer geometry for the given seed.

    Far clusters are placed uniformly in a rectangle centered on the link,
    near clusters within a circle around the receiver; each cluster shares a
    speed, heading and acceleration drawn uniformly from the configured
    ranges, as does the receiver (the transmitter is static).
    """
    p = params or GeometryParams()
    rng = np.random.default_rng(seed)
    spacing = p.antenna_spacing
    if spacing is None:
        spacing = SPEED_OF_LIGHT / (2 * p.fc)
    tx_center = np.array([0.0, 0.0])
    rx_center = np.array([p.link_distance, 0.0])
    tx_pos = _array_positions(tx_center, p.n_tx, spacing)
    rx_pos = _array_positions(rx_center, p.n_rx, spacing)

    def draw_motion():
        speed = rng.uniform(*p.speed_range)
        ang = rng.uniform(0.0, 2 * np.pi)
        vel = speed * np.array([np.cos(ang), np.sin(ang)])
        amag = rng.uniform(*p.accel_range)
        aang = rng.uniform(0.0, 2 * np.pi)
        acc = amag * np.array([np.cos(aang), np.sin(aang)])
        return vel, acc

    v_rx, a_rx = draw_motion()

    centers = []
    for _ in range(p.n_far_clusters):
        mid = (tx_center + rx_center) / 2
        cx = rng.uniform(mid[0] - p.area[0] / 2, mid[0] + p.area[0] / 2)
        cy = rng.uniform(mid[1] - p.area[1] / 2, mid[1] + p.area[1] / 2)
        centers.append(np.array([cx, cy]))
    for _ in range(p.n_near_clusters):
        ang = rng.uniform(0.0, 2 * np.pi)
        rad = p.near_radius * np.sqrt(rng.uniform(0.0, 1.0))
        centers.append(rx_center + rad * np.array([np.cos(ang), np.sin(ang)]))

    scat, vels, accs = [], [], []
    for center in centers:
        v_cl, a_cl = draw_motion()
        for _ in range(p.per_cluster):
            ang = rng.uniform(0.0, 2 * np.pi)
            rad = p.cluster_radius * np.sqrt(rng.uniform(0.0, 1.0))
            pos = center + rad * np.array([np.cos(ang), np.sin(ang)])
            for ref in (tx_center, rx_center):
                d = pos - ref
                dist = np.linalg.norm(d)
                if dist < p.min_range:
                    pos = ref + d * (p.min_range / max(dist, 1e-6))
            scat.append(pos)
            vels.append(v_cl)
            accs.append(a_cl)
    scat = np.array(scat)
    vels = np.array(vels)
    accs = np.array(accs)

    # velocity frozen per block at its midpoint value
    half = p.block_duration / 2.0
    v_eff = vels + accs * half
    v_rx_eff = v_rx + a_rx * half
    return ScattererGeometry(
        tx_pos=tx_pos,
        rx_pos=rx_pos,
        scat_pos=scat,
        v_t=v_eff,
        v_r=v_eff - v_rx_eff,
        acc=accs,
        fc=p.fc,
    )


@dataclass(frozen=True)
class PathSet:
    """Per-scatterer, per-channel path parameters.

    Arrays have shape (P, n_channels) with channels ordered row-major over
    (r, s).  Delays in seconds, Dopplers in Hz.
    """

    gains: np.ndarray
    delays: np.ndarray
    dopplers: np.ndarray

    @property
    def n_paths(self):
        return self.gains.shape[0]

    @property
    def n_channels(self):
        return self.gains.shape[1]

    def shifted(self, tau0=None):
        """Delays re-referenced to a timing origin (receiver synchronization).

        Defaults to the earliest arrival across paths and channels.
        """
        if tau0 is None:
            tau0 = float(self.delays.min())
        return PathSet(gains=self.gains, delays=self.delays - tau0, dopplers=self.dopplers)


def _leg_vectors(antennas, scatterers):
    """Vectors from each scatterer to each antenna and their lengths."""
    diff = antennas[None, :, :] - scatterers[:, None, :]  # (P, n_ant, 2)
    dist = np.linalg.norm(diff, axis=2)
    if np.any(dist <= 0):
        raise DomainError("scatterer coincides with an antenna")
    return diff, dist


def path_params(geo, gains, decay=True, carrier_phase=True):
    """Delays, Dopplers and complex gains of every scatterer path per channel.

    tau = (w_T + w_R)/c; the transmit-side Doppler uses the carrier, the
    receive side the transmit-side shifted carrier f1 = fc + nu_T.  ``gains``
    holds one complex base gain per scatterer; by default the per-channel gain
    applies a two-leg distance decay and the carrier phase exp(-j2 pi fc tau).
    """
    gains = np.asarray(gains, dtype=complex)
    wt_vec, wt = _leg_vectors(geo.tx_pos, geo.scat_pos)  # (P, n_tx, 2)
    wr_vec, wr = _leg_vectors(geo.rx_pos, geo.scat_pos)  # (P, n_rx, 2)
    fc = geo.fc
    nu_t = (fc / SPEED_OF_LIGHT) * np.einsum("pd,psd->ps", geo.v_t, wt_vec) / wt
    proj_r = np.einsum("pd,prd->pr", geo.v_r, wr_vec) / wr  # (P, n_rx)

    P = geo.n_scatterers
    n_rx, n_tx = len(geo.rx_pos), len(geo.tx_pos)
    delays = np.empty((P, n_rx * n_tx))
    dopplers = np.empty((P, n_rx * n_tx))
    amp = np.empty((P, n_rx * n_tx), dtype=complex)
    ref = np.exp(np.mean(np.log(wt[:, 0] * wr[:, 0]))) if decay else 1.0
    for r in range(n_rx):
        for s in range(n_tx):
            xi = r * n_tx + s
            delays[:, xi] = (wt[:, s] + wr[:, r]) / SPEED_OF_LIGHT
            f1 = fc + nu_t[:, s]
            dopplers[:, xi] = nu_t[:, s] + (f1 / SPEED_OF_LIGHT) * proj_r[:, r]
            a = gains.copy()
            if decay:
                a = a * ref / (wt[:, s] * wr[:, r])
            if carrier_phase:
                a = a * np.exp(-2j * np.pi * fc * delays[:, xi])
            amp[:, xi] = a
    return PathSet(gains=amp, delays=delays, dopplers=dopplers)


def cross_channel_bounds(geo):
    """Worst-case cross-channel delay and Doppler differences (tau_B, nu_B).

    tau_B = (d_T + d_R)/c with d_T, d_R the maximum intra-array antenna
    distances; nu_B maximizes the two-leg Doppler difference bound over
    scatterers, using the largest transmit-shifted carrier.
    """

    def max_pairwise(pos):
        if len(pos) < 2:
            return 0.0
        diff = pos[:, None, :] - pos[None, :, :]
        return float(np.linalg.norm(diff, axis=2).max())

    d_t = max_pairwise(geo.tx_pos)
    d_r = max_pairwise(geo.rx_pos)
    tau_b = (d_t + d_r) / SPEED_OF_LIGHT
    if geo.n_scatterers == 0 or (d_t == 0.0 and d_r == 0.0):
        return tau_b, 0.0
    _, wt = _leg_vectors(geo.tx_pos, geo.scat_pos)
    wt_vec, _ = _leg_vectors(geo.tx_pos, geo.scat_pos)
    _, wr = _leg_vectors(geo.rx_pos, geo.scat_pos)
    fc = geo.fc
    v_t = np.linalg.norm(geo.v_t, axis=1)
    v_r = np.linalg.norm(geo.v_r, axis=1)
    nu_t = (fc / SPEED_OF_LIGHT) * np.einsum("pd,psd->ps", geo.v_t, wt_vec) / wt
    f1 = fc + np.maximum(nu_t.max(axis=1), 0.0)
    nu_b_p = (fc * v_t * d_t / wt.min(axis=1) + f1 * v_r * d_r / wr.min(axis=1)) / SPEED_OF_LIGHT
    return tau_b, float(nu_b_p.max())


# ---------------------------------------------------------------------------
# spreading functions and coefficient tensors


def channel_index(cfg, r, s):
    """Flat channel index of the pair theta = (r, s)."""
    return r * cfg.n_tx + s


def leakage_kernel(paths, p, chan, m, i, filters, cfg):
    """Shifted leakage kernel of path ``p`` on channel ``chan`` at (m, i)."""
    tau = paths.delays[p, chan]
    nu = paths.dopplers[p, chan]
    phi = phi_kernel(filters, np.array([m - tau / cfg.Ts]), nu * cfg.Ts)[0]
    psi = psi_kernel(np.array([i - nu * cfg.Ts * cfg.l_r]), cfg.l_r)[0]
    return complex(phi * psi)


def discrete_ir(paths, filters, cfg, m_len=None):
    """Discrete time-varying impulse response of the specular model.

    H[n, m] = sum_p eta_p phi^(nu_p)(m - tau_p/Ts) exp(j 2 pi nu_p Ts n) per
    channel; returns an (L_r, m_len, n_rx, n_tx) array.  Paths whose delay
    falls outside the delay axis are clipped with a warning.
    """
    if m_len is None:
        m_len = cfg.K
    m = np.arange(m_len)
    n = np.arange(cfg.l_r)
    H = np.zeros((cfg.l_r, m_len, cfg.n_rx, cfg.n_tx), dtype=complex)
    max_x = paths.delays.max() / cfg.Ts
    if max_x > m_len - 1:
        warnings.warn(
            f"path delay {max_x:.2f} samples exceeds the delay axis ({m_len - 1}); clipped"
        )
    for r in range(cfg.n_rx):
        for s in range(cfg.n_tx):
            xi = channel_index(cfg, r, s)
            profiles = np.stack(
                [
                    paths.gains[p, xi]
                    * phi_kernel(filters, m - paths.delays[p, xi] / cfg.Ts, paths.dopplers[p, xi] * cfg.Ts)
                    for p in range(paths.n_paths)
                ]
            )  # (P, m_len)
            phases = np.exp(2j * np.pi * np.outer(n, paths.dopplers[:, xi]) * cfg.Ts)
            H[:, :, r, s] = phases @ profiles
    return H


def spreading_model(paths, cfg, filters, m_len=None):
    """Discrete-delay-Doppler spreading functions of the specular model.

    S_h[m, i] = sum_p eta_p exp(j pi (nu_p Ts - i/L_r)(L_r - 1)) Lambda_p[m, i]
    evaluated on {0..m_len-1} x {0..L_r-1}; matches the DFT of the impulse
    response from :func:`discrete_ir` exactly.  Returns (n_channels, m_len, L_r).
    """
    if m_len is None:
        m_len = cfg.K
    l_r = cfg.l_r
    m = np.arange(m_len)
    i = np.arange(l_r)
    S = np.zeros((cfg.n_channels, m_len, l_r), dtype=complex)
    for xi in range(cfg.n_channels):
        for p in range(paths.n_paths):
            nu, tau = paths.dopplers[p, xi], paths.delays[p, xi]
            phi = phi_kernel(filters, m - tau / cfg.Ts, nu * cfg.Ts)
            psi = psi_kernel(i - nu * cfg.Ts * l_r, l_r)
            phase = np.exp(1j * np.pi * (nu * cfg.Ts - i / l_r) * (l_r - 1))
            S[xi] += paths.gains[p, xi] * np.outer(phi, phase * psi)
    return S


@dataclass(frozen=True)
class CoefficientTensor:
    """Delay-Doppler expansion coefficients on the fundamental rectangle.

    ``values`` has shape (D, J, n_channels) with Doppler axis index i + J/2.
    ``holds`` says whether the entries are 2D-DFT coefficients ("F") or
    general basis coefficients ("G"); under the DFT basis G = sqrt(J D) F.
    """

    values: np.ndarray
    basis: str = "dft"
    holds: str = "F"

    def as_g(self):
        if self.holds == "G":
            return self.values
        if self.basis != "dft":
            raise DomainError("F-to-G conversion is only defined for the DFT basis")
        jd = self.values.shape[0] * self.values.shape[1]
        return np.sqrt(jd) * self.values

    def as_matrix(self):
        """(J*D, n_channels) matrix with rows ordered by the 2D->1D rank map."""
        d, j, xi = self.values.shape
        return self.values.reshape(d * j, xi)


def dft_coeffs(S_h, pulses, cfg):
    """2D-DFT channel coefficients on the fundamental rectangle.

    F_{m,i} = sum_{q=0}^{N-1} S_h[m, i + q L] conj(A(m, (i + q L)/L_r)) for
    m in {0..D-1}, i in {-J/2..J/2-1}; negative Doppler indices wrap modulo
    L_r.  Returns a :class:`CoefficientTensor` holding F under the DFT tag.
    """
    S_h = np.asarray(S_h)
    l_r = cfg.l_r
    i_vals = np.arange(-cfg.J // 2, cfg.J // 2)
    q_vals = np.arange(cfg.N)
    freq = (i_vals[:, None] + q_vals[None, :] * cfg.L).astype(float)  # (J, N)
    amb = ambiguity_table(pulses, np.arange(cfg.D), (freq / l_r).ravel())  # (D, J*N)
    idx = np.mod(freq.astype(int), l_r).ravel()
    F = np.empty((cfg.D, cfg.J, S_h.shape[0]), dtype=complex)
    for xi in range(S_h.shape[0]):
        prod = S_h[xi][: cfg.D, idx] * np.conj(amb)  # (D, J*N)
        F[:, :, xi] = prod.reshape(cfg.D, cfg.J, cfg.N).sum(axis=2)
    return CoefficientTensor(values=F, basis="dft", holds="F")


# ---------------------------------------------------------------------------
# sparsity budget


def effective_support_widths(filters, cfg, energy=0.99):
    """Delay/Doppler widths capturing the given energy fraction per kernel.

    Evaluated for a worst-case half-sample offset of the kernel center; the
    Doppler width is capped at J (the full fundamental range).
    """
    # delay direction
    reach = max(4 * filters.span, 64)
    x = np.arange(-reach, reach + 1) - 0.5
    e_phi = np.abs(phi_kernel(filters, x, 0.0)) ** 2
    dm = _central_width(e_phi, energy)
    # Doppler direction, one full period
    i = np.arange(cfg.l_r)
    e_psi = np.abs(psi_kernel(i - 0.5, cfg.l_r)) ** 2
    e_psi = np.roll(e_psi, cfg.l_r // 2)  # center the peak
    di = _central_width(e_psi, energy)
    return int(dm), int(min(di, cfg.J))


def _central_width(energy, fraction):
    total = energy.sum()
    center = int(np.argmax(energy))
    width = 1
    acc = energy[center]
    lo, hi = center, center
    while acc < fraction * total and (lo > 0 or hi < len(energy) - 1):
        left = energy[lo - 1] if lo > 0 else -1.0
        right = energy[hi + 1] if hi < len(energy) - 1 else -1.0
        if left >= right:
            lo -= 1
            acc += energy[lo]
        else:
            hi += 1
            acc += energy[hi]
        width += 1
    return width


def sparsity_budget(dm_eff, di_eff, tau_b, nu_b, tiling, n_paths, cfg):
    """Block-count budget for single-channel and joint group sparsity.

    Returns (N_tilde, N_joint, S_single, S_joint): per-path block counts for
    one channel and jointly across channels, and the corresponding group
    sparsity orders P * N.
    """
    if dm_eff <= 0 or di_eff <= 0:
        raise DomainError("effective widths must be positive")
    n_tilde = (int(np.ceil(dm_eff / tiling.dm)) + 1) * (int(np.ceil(di_eff / tiling.di)) + 1)
    dm_joint = dm_eff + int(np.ceil(tau_b / cfg.Ts))
    di_joint = di_eff + int(np.ceil(nu_b * cfg.Ts * cfg.l_r))
    n_joint = (int(np.ceil(dm_joint / tiling.dm)) + 1) * (int(np.ceil(di_joint / tiling.di)) + 1)
    return n_tilde, n_joint, n_paths * n_tilde, n_paths * n_joint
