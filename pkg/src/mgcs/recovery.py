"""Group-sparse, jointly sparse and jointly group-sparse recovery.

Greedy solvers (G-OMP, G-CoSaMP, G-DCS-SOMP), a proximal-gradient G-BPDN with
scalar root finding on the residual curve, the multichannel stacking that
turns simultaneous group-sparse problems into one block-diagonal group-sparse
problem, and brute-force certification of group restricted isometry constants.
"""

import math
from dataclasses import dataclass, field

import numpy as np
from itertools import combinations

from .errors import BudgetExceededError, ConvergenceError, DomainError
from .partition import stack_partition


@dataclass(frozen=True)
class MeasurementEnsemble:
    """Per-transmit measurement matrices and per-channel observations.

    ``matrices[s]`` is the Q x M matrix seen by every channel (r, s);
    ``observations`` has shape (n_channels, Q) in row-major (r, s) order.
    """

    matrices: tuple
    observations: np.ndarray
    noise_radius: float = 0.0

    def __post_init__(self):
        mats = tuple(np.asarray(m, dtype=complex) for m in self.matrices)
        obs = np.asarray(self.observations, dtype=complex)
        if obs.ndim == 1:
            obs = obs[None, :]
        shapes = {m.shape for m in mats}
        if len(shapes) != 1:
            raise DomainError("all measurement matrices must share dimensions")
        if obs.shape[1] != mats[0].shape[0]:
            raise DomainError("observation length does not match Q")
        if obs.shape[0] % len(mats) != 0:
            raise DomainError("channel count must be a multiple of the transmit count")
        object.__setattr__(self, "matrices", mats)
        object.__setattr__(self, "observations", obs)

    @property
    def n_channels(self):
        return self.observations.shape[0]

    @property
    def n_tx(self):
        return len(self.matrices)

    @property
    def shape(self):
        return self.matrices[0].shape

    def matrix_for(self, chan):
        """Matrix of channel index chan = r * n_tx + s."""
        return self.matrices[chan % self.n_tx]


@dataclass
class RecoveryResult:
    """Solver output: per-channel estimates plus selection diagnostics."""

    estimates: np.ndarray
    selected_groups: list
    residual_norms: np.ndarray
    iterations: int
    diagnostics: dict = field(default_factory=dict)

    @property
    def x(self):
        """Single-channel estimate convenience view."""
        return self.estimates[0]


class _GroupIndexer:
    """Flat index machinery for fast per-group reductions."""

    def __init__(self, part):
        self.part = part
        self.perm = np.concatenate(part.groups)
        sizes = part.sizes()
        self.starts = np.concatenate([[0], np.cumsum(sizes)[:-1]])
        self.sizes = sizes

    def energies(self, v):
        return np.add.reduceat(np.abs(v[self.perm]) ** 2, self.starts)

    def expand(self, per_group):
        out = np.empty(self.part.total_length, dtype=per_group.dtype)
        out[self.perm] = np.repeat(per_group, self.sizes)
        return out


def _solve_ls(A, y):
    """Least squares via thin QR with a minimum-norm fallback on rank loss."""
    if A.shape[0] < A.shape[1]:
        coef, *_ = np.linalg.lstsq(A, y, rcond=None)
        return coef, True
    q, r = np.linalg.qr(A)
    diag = np.abs(np.diag(r))
    if diag.size and diag.min() <= 1e-12 * max(diag.max(), 1.0):
        coef, *_ = np.linalg.lstsq(A, y, rcond=None)
        return coef, True
    from scipy.linalg import solve_triangular

    return solve_triangular(r, q.conj().T @ y), False


def _top_groups(energies, count):
    return np.argsort(-energies, kind="stable")[:count]


def g_omp(Phi, y, part, max_groups=None, residual_tol=0.0):
    """Group orthogonal matching pursuit.

    Adds per iteration the group with the largest aggregated correlation
    energy and re-solves least squares on the selected column union; stops at
    ``max_groups`` selections or when the residual norm drops to
    ``residual_tol``.
    """
    Phi = np.asarray(Phi, dtype=complex)
    y = np.asarray(y, dtype=complex)
    if part.total_length != Phi.shape[1]:
        raise DomainError("partition does not match the column count")
    idx = _GroupIndexer(part)
    cap = part.n_groups if max_groups is None else min(max_groups, part.n_groups)
    x = np.zeros(Phi.shape[1], dtype=complex)
    resid = y.copy()
    selected = []
    history = [float(np.linalg.norm(resid))]
    rank_deficient = False
    while len(selected) < cap and history[-1] > residual_tol:
        energies = idx.energies(Phi.conj().T @ resid)
        energies[selected] = -1.0
        b = int(np.argmax(energies))
        if energies[b] <= 0:
            break
        selected.append(b)
        cols = np.concatenate([part.groups[g] for g in selected])
        coef, deficient = _solve_ls(Phi[:, cols], y)
        rank_deficient |= deficient
        x = np.zeros_like(x)
        x[cols] = coef
        resid = y - Phi[:, cols] @ coef
        history.append(float(np.linalg.norm(resid)))
    return RecoveryResult(
        estimates=x[None, :],
        selected_groups=selected,
        residual_norms=np.array([history[-1]]),
        iterations=len(selected),
        diagnostics={"residual_history": history, "rank_deficient": rank_deficient},
    )


def g_dcs_somp(ensemble, part, max_groups=None, residual_tol=0.0):
    """Greedy joint-support identification across all channels.

    Each iteration adds the group maximizing the correlation energy summed
    over channels and group members, then re-solves least squares per channel
    on the joint support.  With singleton groups this is DCS-SOMP.
    """
    mats = [ensemble.matrix_for(xi) for xi in range(ensemble.n_channels)]
    obs = ensemble.observations
    if part.total_length != mats[0].shape[1]:
        raise DomainError("partition does not match the column count")
    idx = _GroupIndexer(part)
    cap = part.n_groups if max_groups is None else min(max_groups, part.n_groups)
    x = np.zeros((ensemble.n_channels, part.total_length), dtype=complex)
    resid = obs.copy()
    selected = []
    history = [float(np.linalg.norm(resid))]
    rank_deficient = False
    while len(selected) < cap and history[-1] > residual_tol:
        energies = np.zeros(part.n_groups)
        for xi in range(ensemble.n_channels):
            energies += idx.energies(mats[xi].conj().T @ resid[xi])
        energies[selected] = -1.0
        b = int(np.argmax(energies))
        if energies[b] <= 0:
            break
        selected.append(b)
        cols = np.concatenate([part.groups[g] for g in selected])
        for xi in range(ensemble.n_channels):
            coef, deficient = _solve_ls(mats[xi][:, cols], obs[xi])
            rank_deficient |= deficient
            x[xi] = 0
            x[xi, cols] = coef
            resid[xi] = obs[xi] - mats[xi][:, cols] @ coef
        history.append(float(np.linalg.norm(resid)))
    return RecoveryResult(
        estimates=x,
        selected_groups=selected,
        residual_norms=np.linalg.norm(resid, axis=1),
        iterations=len(selected),
        diagnostics={"residual_history": history, "rank_deficient": rank_deficient},
    )


def g_cosamp(Phi, y, part, S, n_iters=30, residual_tol=0.0):
    """Group-structured CoSaMP.

    Per iteration: build the proxy Phi^H r, select the 2S groups of largest
    aggregated proxy energy, merge with the current support, least-squares on
    the merged column union, and prune to the S groups of largest solution
    norm.  The output is always group-S-sparse.
    """
    Phi = np.asarray(Phi, dtype=complex)
    y = np.asarray(y, dtype=complex)
    sizes = part.sizes()
    if sizes.min() != sizes.max():
        raise DomainError("G-CoSaMP requires groups of equal size")
    if S < 1 or 4 * S > part.n_groups:
        raise DomainError(f"need 1 <= S and 4S <= B (S={S}, B={part.n_groups})")
    idx = _GroupIndexer(part)
    x = np.zeros(Phi.shape[1], dtype=complex)
    support = []
    resid = y.copy()
    history = [float(np.linalg.norm(resid))]
    rank_deficient = False
    it = 0
    for it in range(1, n_iters + 1):
        if history[-1] <= residual_tol:
            break
        proxy = idx.energies(Phi.conj().T @ resid)
        candidates = sorted(set(_top_groups(proxy, 2 * S)) | set(support))
        cols = np.concatenate([part.groups[g] for g in candidates])
        coef, deficient = _solve_ls(Phi[:, cols], y)
        rank_deficient |= deficient
        b_full = np.zeros(Phi.shape[1], dtype=complex)
        b_full[cols] = coef
        keep = _top_groups(idx.energies(b_full), S)
        support = sorted(int(g) for g in keep)
        x = np.zeros_like(x)
        for g in support:
            x[part.groups[g]] = b_full[part.groups[g]]
        resid = y - Phi @ x
        history.append(float(np.linalg.norm(resid)))
    return RecoveryResult(
        estimates=x[None, :],
        selected_groups=support,
        residual_norms=np.array([history[-1]]),
        iterations=it,
        diagnostics={"residual_history": history, "rank_deficient": rank_deficient},
    )


def _group_prox(v, idx, thresh):
    """Groupwise soft threshold: shrink each group's l2 norm by ``thresh``."""
    norms = np.sqrt(idx.energies(v))
    scale = np.zeros_like(norms)
    nz = norms > 0
    scale[nz] = np.maximum(0.0, 1.0 - thresh / norms[nz])
    return v * idx.expand(scale)


def _fista(Phi, y, lam, idx, lip, x0, max_iter, rel_tol=1e-12):
    """Accelerated proximal gradient for the penalized group-lasso form."""
    x = x0.copy()
    z = x.copy()
    t = 1.0
    resid = Phi @ x - y
    obj_prev = 0.5 * np.vdot(resid, resid).real + lam * np.sqrt(idx.energies(x)).sum()
    n_done = 0
    for n_done in range(1, max_iter + 1):
        grad = Phi.conj().T @ (Phi @ z - y)
        x_new = _group_prox(z - grad / lip, idx, lam / lip)
        t_new = 0.5 * (1 + math.sqrt(1 + 4 * t * t))
        z = x_new + ((t - 1) / t_new) * (x_new - x)
        resid = Phi @ x_new - y
        obj = 0.5 * np.vdot(resid, resid).real + lam * np.sqrt(idx.energies(x_new)).sum()
        if obj > obj_prev:  # function restart
            z = x_new.copy()
            t_new = 1.0
        if abs(obj_prev - obj) <= rel_tol * max(1.0, abs(obj_prev)):
            x = x_new
            break
        x, t, obj_prev = x_new, t_new, obj
    return x, n_done


def g_bpdn(Phi, y, part, eps, tol=1e-4, max_inner=4000, max_bisect=60):
    """Group basis pursuit denoising: minimize the group norm subject to
    ||Phi x - y||_2 <= eps.

    Solved by bisection on the penalty of the equivalent group-lasso form:
    the residual of the penalized minimizer increases with the penalty, so the
    penalty with residual eps is found by root finding and the feasible-side
    iterate is returned.  eps = 0 is treated as the vanishing-penalty basis
    pursuit limit.
    """
    Phi = np.asarray(Phi, dtype=complex)
    y = np.asarray(y, dtype=complex)
    if part.total_length != Phi.shape[1]:
        raise DomainError("partition does not match the column count")
    if eps < 0:
        raise DomainError("eps must be nonnegative")
    idx = _GroupIndexer(part)
    y_norm = float(np.linalg.norm(y))
    zero = np.zeros(Phi.shape[1], dtype=complex)
    if y_norm <= eps or y_norm == 0.0:
        return RecoveryResult(
            estimates=zero[None, :],
            selected_groups=[],
            residual_norms=np.array([y_norm]),
            iterations=0,
            diagnostics={"lambda": None},
        )
    lip = np.linalg.norm(Phi, 2) ** 2
    lam_max = float(np.sqrt(idx.energies(Phi.conj().T @ y)).max())
    total_inner = 0

    def solve(lam, x0):
        nonlocal total_inner
        x, n = _fista(Phi, y, lam, idx, lip, x0, max_inner)
        total_inner += n
        return x, float(np.linalg.norm(Phi @ x - y))

    if eps == 0.0:
        x, r = solve(lam_max * 1e-10, zero)
        lam_lo = None
    else:
        lo, hi = lam_max * 1e-12, lam_max
        x_lo, r_lo = solve(lo, zero)
        if r_lo > eps * (1 + tol):
            raise ConvergenceError(
                f"could not reach the feasibility radius ({r_lo:.3e} > {eps:.3e})",
                best=x_lo,
            )
        for _ in range(max_bisect):
            if r_lo >= eps * (1 - tol):
                break
            mid = math.sqrt(lo * hi)
            x_mid, r_mid = solve(mid, x_lo)
            if r_mid > eps:
                hi = mid
            else:
                lo, x_lo, r_lo = mid, x_mid, r_mid
        x, r, lam_lo = x_lo, r_lo, lo
    norms = np.sqrt(idx.energies(x))
    selected = [int(b) for b in np.nonzero(norms > 1e-12 * max(norms.max(), 1e-300))[0]]
    return RecoveryResult(
        estimates=x[None, :],
        selected_groups=selected,
        residual_norms=np.array([r]),
        iterations=total_inner,
        diagnostics={"lambda": lam_lo if eps > 0 else None},
    )


def mgcs_stack(ensemble, part):
    """Stack a multichannel ensemble into one block-diagonal group problem.

    Returns (Phi_stacked, y_stacked, stacked_partition); solving the stacked
    system with any group-sparse solver is the multichannel mode.
    """
    n_ch = ensemble.n_channels
    q, m = ensemble.shape
    if n_ch == 1:
        return ensemble.matrices[0], ensemble.observations[0], part
    Phi = np.zeros((q * n_ch, m * n_ch), dtype=complex)
    for xi in range(n_ch):
        Phi[xi * q: (xi + 1) * q, xi * m: (xi + 1) * m] = ensemble.matrix_for(xi)
    y = ensemble.observations.reshape(-1)
    return Phi, y, stack_partition(part, m, n_ch)


def unstack_estimates(x_stacked, M, n_channels):
    """Split a stacked solution back into per-channel estimates."""
    return np.asarray(x_stacked).reshape(n_channels, M)


def group_ric(Phi, part, S, budget=100_000):
    """Brute-force group restricted isometry constant of order S.

    Enumerates every S-group column support and takes the worst Gram
    eigenvalue deviation from 1.  Refuses when the enumeration exceeds the
    budget.
    """
    if S < 0 or S > part.n_groups:
        raise DomainError(f"S={S} outside 0..{part.n_groups}")
    n_supports = math.comb(part.n_groups, S)
    if n_supports > budget:
        raise BudgetExceededError(
            f"{n_supports} supports exceed the enumeration budget {budget}"
        )
    Phi = np.asarray(Phi, dtype=complex)
    delta = 0.0
    for combo in combinations(range(part.n_groups), S):
        cols = np.concatenate([part.groups[b] for b in combo])
        gram = Phi[:, cols].conj().T @ Phi[:, cols]
        w = np.linalg.eigvalsh(gram)
        delta = max(delta, float(w[-1] - 1.0), float(1.0 - w[0]))
    return delta


def delta_stacked_equals_max(ensemble, part, S, budget=100_000):
    """G-RIC of the stacked matrix and of each channel matrix, computed
    independently; the two sides agree by the block-diagonal structure."""
    Phi, _, part_stacked = mgcs_stack(ensemble, part)
    delta_stacked = group_ric(Phi, part_stacked, S, budget=budget)
    per_channel = [
        group_ric(ensemble.matrix_for(xi), part, S, budget=budget)
        for xi in range(ensemble.n_channels)
    ]
    return delta_stacked, per_channel


def sample_count_bound(S_prime, M, gamma, eta, mu_u, C=1.0):
    """Measurement-count bound for random row subsampling of a unitary matrix.

    ceil(C mu^2 S' max{log^3(S') log(M), log(1/eta)} / gamma^2), natural logs.
    The constant C is not pinned down by theory; the default 1 is heuristic.
    """
    if not (0 < gamma < 1 and 0 < eta < 1):
        raise DomainError("gamma and eta must lie in (0, 1)")
    term = max(math.log(S_prime) ** 3 * math.log(M), math.log(1.0 / eta))
    return int(math.ceil(C * mu_u**2 * S_prime * term / gamma**2))
