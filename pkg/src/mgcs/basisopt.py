"""Construction of orthonormal bases maximizing average joint group sparsity.

Samples elementary single-scatterer channels from a delay-Doppler prior,
evaluates their expansion coefficients through closed-form kernel matrices,
and minimizes the Monte-Carlo group-sparsity objective over per-delay unitary
blocks by iterated convexified updates with matrix-exponential retraction.
"""

from dataclasses import dataclass, replace

import numpy as np

from .channel import phi_kernel, psi_kernel
from .errors import ConfigurationError, DomainError
from .estimator import BasisSpec, dft_block
from .partition import group_frobenius_norm
from .waveform import ambiguity_table


@dataclass(frozen=True)
class DelayDopplerPrior:
    """Factored pdf of per-channel delay/Doppler pairs.

    The first channel's pair is uniform on [0, tau_max] x [-nu_max, nu_max];
    each further channel adds an offset drawn uniformly from its rectangle
    (tau_lo, tau_hi, nu_lo, nu_hi) relative to the first draw.
    """

    tau_max: float
    nu_max: float
    offsets: tuple = ()

    def __post_init__(self):
        if self.tau_max < 0 or self.nu_max < 0:
            raise ConfigurationError("prior ranges must be nonnegative")
        for off in self.offsets:
            t_lo, t_hi, n_lo, n_hi = off
            if t_hi < t_lo or n_hi < n_lo:
                raise ConfigurationError("offset rectangle has negative area")
            if t_lo < 0:
                raise ConfigurationError("delay offsets must keep delays nonnegative")

    @property
    def n_channels(self):
        return 1 + len(self.offsets)


def reference_prior(cfg, n_channels=None, nu_offset_hz=1.4):
    """Prior mirroring the reference simulation setup: delays uniform over the
    cyclic prefix, Dopplers within 3% of the subcarrier spacing, equal delays
    and +-nu_offset_hz Doppler offsets across the other component channels."""
    if n_channels is None:
        n_channels = cfg.n_channels
    tau_max = (cfg.N - cfg.K) * cfg.Ts
    nu_max = 0.03 / (cfg.K * cfg.Ts)
    offsets = tuple((0.0, 0.0, -nu_offset_hz, nu_offset_hz) for _ in range(n_channels - 1))
    return DelayDopplerPrior(tau_max=tau_max, nu_max=nu_max, offsets=offsets)


@dataclass(frozen=True)
class ObjectiveSamples:
    """Monte-Carlo draws from the prior, with kernel matrices once attached."""

    taus: np.ndarray  # (R, n_channels)
    nus: np.ndarray  # (R, n_channels)
    C: np.ndarray = None  # (R, J*D, n_channels)

    @property
    def n_samples(self):
        return self.taus.shape[0]

    @property
    def n_channels(self):
        return self.taus.shape[1]


def sample_prior(prior, R, seed):
    """R independent draws of the per-channel delay/Doppler tuples."""
    if R < 1:
        raise DomainError("need at least one sample")
    rng = np.random.default_rng(seed)
    taus = np.empty((R, prior.n_channels))
    nus = np.empty((R, prior.n_channels))
    taus[:, 0] = rng.uniform(0.0, prior.tau_max, size=R)
    nus[:, 0] = rng.uniform(-prior.nu_max, prior.nu_max, size=R)
    for c, (t_lo, t_hi, n_lo, n_hi) in enumerate(prior.offsets, start=1):
        taus[:, c] = taus[:, 0] + rng.uniform(t_lo, t_hi, size=R)
        nus[:, c] = nus[:, 0] + rng.uniform(n_lo, n_hi, size=R)
    return ObjectiveSamples(taus=taus, nus=nus)


class CKernelTable:
    """Precomputed ambiguity table for fast evaluation of the Doppler kernel
    matrix C^(nu)[m, lambda] on a fixed system."""

    def __init__(self, pulses, cfg):
        self.cfg = cfg
        i_vals = np.arange(-cfg.J // 2, cfg.J // 2)
        q_vals = np.arange(cfg.N)
        self.freq = (i_vals[:, None] + q_vals[None, :] * cfg.L).astype(float)  # (J, N)
        amb = ambiguity_table(pulses, np.arange(cfg.D), (self.freq / cfg.l_r).ravel())
        self.amb_conj = np.conj(amb).reshape(cfg.D, cfg.J, cfg.N)
        self.signs = (-1.0) ** np.arange(cfg.J)  # lambda-DFT index shift

    def c_matrix(self, nu):
        """(D, J) matrix of C^(nu)[m, lambda]."""
        cfg = self.cfg
        x = self.freq - nu * cfg.Ts * cfg.l_r
        psi = np.exp(1j * np.pi * (nu * cfg.Ts - self.freq / cfg.l_r) * (cfg.l_r - 1))
        psi = psi * psi_kernel(x.ravel(), cfg.l_r).reshape(x.shape)
        X = (self.amb_conj * psi[None, :, :]).sum(axis=2)  # (D, J) over i+J/2
        return self.signs[None, :] * cfg.J * np.fft.ifft(X, axis=1)


def c_kernel(nu, m, lam, pulses, cfg):
    """Scalar Doppler kernel value C^(nu)[m, lambda] by direct double summation."""
    from .waveform import cross_ambiguity

    total = 0.0 + 0.0j
    l_r = cfg.l_r
    for i in range(-cfg.J // 2, cfg.J // 2):
        for q in range(cfg.N):
            n = i + q * cfg.L
            psi_nu = np.exp(1j * np.pi * (nu * cfg.Ts - n / l_r) * (l_r - 1)) * psi_kernel(
                np.array([n - nu * cfg.Ts * l_r]), l_r
            )[0]
            total += (
                psi_nu
                * np.conj(cross_ambiguity(pulses, m, n / l_r))
                * np.exp(2j * np.pi * lam * i / cfg.J)
            )
    return total


def build_C_matrix(taus, nus, pulses, cfg, filters, table=None):
    """Kernel matrix of one prior sample: column xi stacks the per-delay
    blocks sqrt(D) phi^(nu)(m - tau/Ts) C^(nu)[m, :]."""
    taus = np.atleast_1d(np.asarray(taus, dtype=float))
    nus = np.atleast_1d(np.asarray(nus, dtype=float))
    if table is None:
        table = CKernelTable(pulses, cfg)
    m = np.arange(cfg.D)
    C = np.empty((cfg.jd, len(taus)), dtype=complex)
    for xi, (tau, nu) in enumerate(zip(taus, nus)):
        cmat = table.c_matrix(nu)  # (D, J)
        phi = phi_kernel(filters, m - tau / cfg.Ts, nu * cfg.Ts)  # (D,)
        C[:, xi] = (np.sqrt(cfg.D) * phi[:, None] * cmat).reshape(-1)
    return C


def attach_kernels(samples, pulses, cfg, filters):
    """Precompute the kernel matrix of every sample."""
    table = CKernelTable(pulses, cfg)
    C = np.empty((samples.n_samples, cfg.jd, samples.n_channels), dtype=complex)
    for rho in range(samples.n_samples):
        C[rho] = build_C_matrix(
            samples.taus[rho], samples.nus[rho], pulses, cfg, filters, table=table
        )
    return replace(samples, C=C)


def _blocks_of(basis_or_blocks, J, D):
    if isinstance(basis_or_blocks, BasisSpec):
        if basis_or_blocks.is_dft:
            return np.broadcast_to(dft_block(J), (D, J, J)).copy()
        return basis_or_blocks.blocks
    blocks = np.asarray(basis_or_blocks, dtype=complex)
    eye = np.eye(blocks.shape[1])
    for m, vm in enumerate(blocks):
        if np.abs(vm.conj().T @ vm - eye).max() > 1e-10:
            raise DomainError(f"basis block {m} is not unitary")
    return blocks


def _coefficient_tensors(blocks, C):
    """(R, D, J, Xi) tensors V_m C_m for every sample."""
    R, jd, xi = C.shape
    D, J = blocks.shape[0], blocks.shape[1]
    Cm = C.reshape(R, D, J, xi)
    return np.einsum("mab,rmbx->rmax", blocks, Cm)


def mc_objective(basis_or_blocks, samples, tiling):
    """Monte-Carlo joint-group-sparsity objective: the summed block-Frobenius
    norm of the coefficient tensors over all prior samples."""
    if samples.C is None:
        raise DomainError("samples carry no kernel matrices; attach them first")
    blocks = _blocks_of(basis_or_blocks, tiling.J, tiling.D)
    G = _coefficient_tensors(blocks, samples.C)
    return float(sum(group_frobenius_norm(G[rho], tiling) for rho in range(G.shape[0])))


def hermitian_unitary_exp(A):
    """Unitary matrix exp(jA) of a Hermitian A, via eigendecomposition."""
    A = np.asarray(A, dtype=complex)
    scale = max(1.0, float(np.abs(A).max()))
    if np.abs(A - A.conj().T).max() > 1e-12 * scale:
        raise DomainError("matrix is not Hermitian")
    w, V = np.linalg.eigh(A)
    return (V * np.exp(1j * w)) @ V.conj().T


def _subproblem_objective(v_sub, C_sub, di, smoothing=0.0):
    """Objective restricted to one delay column: sum over samples and Doppler
    blocks of the joint Frobenius norms.  C_sub: (R, dm, J, Xi)."""
    W = np.einsum("mab,rmbx->rmax", v_sub, C_sub)
    R, dm, J, xi = W.shape
    e = (np.abs(W) ** 2).sum(axis=(1, 3))  # (R, J): summed over m in the column, xi
    e_blocks = e.reshape(R, J // di, di).sum(axis=2)
    return float(np.sqrt(e_blocks + smoothing).sum())


def convex_update_step(v_sub, eps_bound, C_sub, di, smoothing=1e-8, max_iter=200):
    """Approximately solve the convexified subproblem: Hermitian updates A_m
    with entrywise magnitude below ``eps_bound`` minimizing the linearized
    objective at (I + jA_m) V_m.  Projected gradient with backtracking on the
    smoothed objective; the returned matrices are exactly Hermitian and inside
    the box.
    """
    if eps_bound <= 0:
        raise DomainError("eps_bound must be positive")
    dm, J = v_sub.shape[0], v_sub.shape[1]
    R, xi = C_sub.shape[0], C_sub.shape[3]
    # M_m flattened to (J, R * Xi) so the hot loop runs on matmuls
    M = [
        v_sub[m] @ np.moveaxis(C_sub[:, m], 0, 1).reshape(J, R * xi)
        for m in range(dm)
    ]
    cap = eps_bound * (1 - 1e-9)

    def clip(A):
        mag = np.abs(A)
        over = mag > cap
        A = np.where(over, A * (cap / np.where(over, mag, 1.0)), A)
        return 0.5 * (A + np.conj(A.transpose(0, 2, 1)))

    def objective(A):
        W = [M[m] + 1j * (A[m] @ M[m]) for m in range(dm)]
        e = np.zeros((R, J))
        for m in range(dm):
            e += (np.abs(W[m]) ** 2).reshape(J, R, xi).sum(axis=2).T
        e = e.reshape(R, J // di, di).sum(axis=2)
        return float(np.sqrt(e + smoothing).sum()), W, e

    def gradient(W, e):
        # weights 1/sqrt(E + mu) per (sample, Doppler block) scale the rows of
        # W; differential Re tr(dA Gamma) with
        # Gamma[a, c] = j sum_{rho, xi} w conj(W[c, xi]) M[a, xi]
        w = 1.0 / np.sqrt(e + smoothing)
        w_flat = np.repeat(
            np.repeat(w, di, axis=1).T[:, :, None], xi, axis=2
        ).reshape(J, R * xi)
        out = np.empty((dm, J, J), dtype=complex)
        for m in range(dm):
            gam = 1j * (M[m] @ (np.conj(W[m]) * w_flat).T)
            out[m] = 0.5 * (gam + gam.conj().T)
        return out

    A = np.zeros((dm, J, J), dtype=complex)
    f, W, e = objective(A)
    f0 = f
    step = eps_bound
    for _ in range(max_iter):
        g = gradient(W, e)
        g_max = np.abs(g).max()
        if g_max < 1e-15:
            break
        improved = False
        while step * g_max > 1e-12 * eps_bound:
            A_try = clip(A - step * g)
            f_try, W_try, e_try = objective(A_try)
            if f_try < f - 1e-15 * max(1.0, abs(f)):
                A, f, W, e = A_try, f_try, W_try, e_try
                step *= 1.5
                improved = True
                break
            step *= 0.5
        if not improved:
            break
    assert f <= f0 + 1e-12
    return A


@dataclass
class OptimizeDiagnostics:
    objective_history: list  # per subproblem: accepted objective values
    initial_objective: float
    final_objective: float


def optimize_blocks(samples, tiling, pulses, cfg, eps_init=0.1, eps_floor=1e-4,
                    max_iters=50, smoothing=1e-8, inner_iters=200):
    """Iterative unitary basis optimization.

    The objective separates over delay columns of width dm; per column it
    alternates a convexified Hermitian-update solve with an exact
    matrix-exponential retraction, accepting an update only if the true
    objective strictly decreases and halving the update box otherwise.  Blocks
    start from the DFT basis.  Returns (BasisSpec, diagnostics).
    """
    if samples.C is None:
        raise DomainError("samples carry no kernel matrices; attach them first")
    if (tiling.D, tiling.J) != (cfg.D, cfg.J):
        raise ConfigurationError("tiling does not match the system dimensions")
    D, J, dm, di = cfg.D, cfg.J, tiling.dm, tiling.di
    blocks = np.broadcast_to(dft_block(J), (D, J, J)).copy()
    Cm = samples.C.reshape(samples.n_samples, D, J, samples.n_channels)
    histories = []
    for bp in range(D // dm):
        sel = slice(bp * dm, (bp + 1) * dm)
        v_sub = blocks[sel].copy()
        C_sub = Cm[:, sel]
        eps = eps_init
        y = _subproblem_objective(v_sub, C_sub, di)
        history = [y]
        for _ in range(max_iters):
            if eps < eps_floor:
                break
            A = convex_update_step(v_sub, eps, C_sub, di, smoothing=smoothing,
                                   max_iter=inner_iters)
            v_try = np.stack([hermitian_unitary_exp(A[m]) @ v_sub[m] for m in range(dm)])
            y_try = _subproblem_objective(v_try, C_sub, di)
            if y_try < y:
                v_sub, y = v_try, y_try
                history.append(y)
            else:
                eps *= 0.5
        blocks[sel] = v_sub
        histories.append(history)
    diags = OptimizeDiagnostics(
        objective_history=histories,
        initial_objective=mc_objective(BasisSpec.dft(J, D), samples, tiling),
        final_objective=mc_objective(blocks, samples, tiling),
    )
    return BasisSpec.from_blocks(blocks), diags


def assemble_2d_basis(blocks):
    """BasisSpec plus the fully assembled unitary matrix for explicit blocks."""
    spec = BasisSpec.from_blocks(np.asarray(blocks, dtype=complex))
    return spec, spec.assemble()
