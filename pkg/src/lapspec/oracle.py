"""Centralized spectral ground truth for the oscillator network.

Everything here is allowed to see the whole network at once; it exists to
validate what the decentralized side produces. The building blocks:

- dense symmetric eigendecomposition of the Laplacian, with eigenvalues
  clustered into distinct values and per-cluster orthonormal bases;
- the induced eigenstructure of the paired (x, z) system matrix, whose
  eigenvalues sit at +/- j(1 + lambda) on the imaginary axis;
- closed-form trajectories x_i(t), z_i(t) as finite sums of sinusoids, and
  the per-agent line amplitudes (modal coefficients) of those sinusoids;
- observability-rank analysis linking what a single agent's output can
  reconstruct to which eigenvalues it can estimate.

All functions are pure over immutable inputs.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .graph import Graph, build_laplacian
from .dynamics import build_system_matrix


class OracleError(RuntimeError):
    """Numerical verification inside the oracle failed."""


@dataclass(frozen=True)
class EigenDecomposition:
    """Distinct Laplacian eigenvalues with multiplicities and cluster bases.

    values[j] are strictly increasing; vectors[j] is an (n, multiplicity[j])
    matrix whose columns form an orthonormal basis of the j-th eigenspace.
    The full basis across clusters is orthonormal.
    """

    values: np.ndarray
    multiplicities: np.ndarray
    vectors: tuple[np.ndarray, ...]

    @property
    def n(self) -> int:
        return self.vectors[0].shape[0]

    @property
    def num_distinct(self) -> int:
        return len(self.values)

    def full_basis(self) -> np.ndarray:
        """All eigenvectors as columns, cluster by cluster (n x n)."""
        return np.hstack(self.vectors)

    def full_values(self) -> np.ndarray:
        """Eigenvalues repeated per multiplicity, aligned with full_basis."""
        return np.repeat(self.values, self.multiplicities)

    def frequencies(self) -> np.ndarray:
        """Angular oscillation frequencies 1 + lambda of the paired system."""
        return 1.0 + self.values


@dataclass(frozen=True)
class ModalCoefficients:
    """Per-agent sinusoid line amplitudes, one entry per distinct eigenvalue.

    For the zero eigenvalue the two quadratures are reported separately and
    signed (a multiplies cos t, b multiplies sin t in x_i); for positive
    eigenvalues the x and z lines share one nonnegative amplitude, so a == b.
    """

    agent: int
    lambdas: np.ndarray
    a: np.ndarray
    b: np.ndarray

    def line_amplitudes(self) -> np.ndarray:
        """Amplitude of each spectral line in x_i: hypot of the quadratures
        for lambda = 0, a itself for lambda > 0."""
        amps = self.a.copy()
        zero = np.isclose(self.lambdas, 0.0, atol=1e-12)
        amps[zero] = np.hypot(self.a[zero], self.b[zero])
        return amps


@dataclass(frozen=True)
class ObservabilityReport:
    """Ranks of the Laplacian-side and paired-system observability matrices."""

    rank_laplacian: int
    rank_system: int
    n: int
    full_rank: bool
    relation_holds: bool
    eigenvalues: np.ndarray
    eigenvalue_observable: np.ndarray


def eig_sym(laplacian: np.ndarray, cluster_tol: float = 1e-8) -> EigenDecomposition:
    """Full symmetric eigendecomposition with multiplicity detection.

    Eigenvalues closer than cluster_tol (consecutive-gap clustering of the
    sorted spectrum) merge into one distinct eigenvalue whose multiplicity is
    the cluster size; the cluster value is the mean. Cluster bases are
    re-orthonormalized for safety. Integer-entry Laplacians at desk scale
    separate distinct eigenvalues far above the default tolerance.
    """
    lap = np.asarray(laplacian, dtype=float)
    if lap.ndim != 2 or lap.shape[0] != lap.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {lap.shape}")
    try:
        vals, vecs = np.linalg.eigh(lap)
    except np.linalg.LinAlgError as exc:  # practically unreachable at desk scale
        raise OracleError(f"eigensolver failed to converge: {exc}") from None

    clusters: list[list[int]] = [[0]]
    for k in range(1, len(vals)):
        if vals[k] - vals[clusters[-1][-1]] <= cluster_tol:
            clusters[-1].append(k)
        else:
            clusters.append([k])

    distinct = []
    mults = []
    bases = []
    for idx in clusters:
        value = float(np.mean(vals[idx]))
        block = vecs[:, idx]
        q, _ = np.linalg.qr(block)
        # eigh returns orthonormal columns; QR only guards rounding and fixes
        # nothing structural, so signs may flip — coefficients are basis-free.
        distinct.append(0.0 if abs(value) <= cluster_tol else value)
        mults.append(len(idx))
        bases.append(q)
    return EigenDecomposition(
        values=np.array(distinct),
        multiplicities=np.array(mults, dtype=int),
        vectors=tuple(bases),
    )


def eigendecompose(g: Graph, cluster_tol: float = 1e-8) -> EigenDecomposition:
    """Convenience: eig_sym of the graph's Laplacian."""
    return eig_sym(build_laplacian(g), cluster_tol=cluster_tol)


def system_eigenpairs(
    dec: EigenDecomposition,
    laplacian: np.ndarray | None = None,
    verify: bool = True,
    tol: float = 1e-10,
) -> list[tuple[complex, np.ndarray]]:
    """Eigenpairs of the paired 2n x 2n system matrix induced by the Laplacian.

    Each Laplacian eigenpair (lambda, v) yields the conjugate pair
    +/- j(1 + lambda) with unit-norm eigenvectors [v; +/- j v] / sqrt(2).
    When verify is set, each pair's residual is checked against the system
    matrix assembled from the given Laplacian (or, lacking one, from the
    decomposition's own reconstruction, which only catches basis defects).
    """
    basis = dec.full_basis()
    lap_vals = dec.full_values()
    if laplacian is None:
        laplacian = (basis * lap_vals) @ basis.T
    sys_mat = build_system_matrix(laplacian)

    pairs: list[tuple[complex, np.ndarray]] = []
    for lam, col in zip(lap_vals, basis.T):
        for sign in (+1.0, -1.0):
            eig = sign * 1j * (1.0 + lam)
            vec = np.concatenate([col, sign * 1j * col]) / np.sqrt(2.0)
            pairs.append((eig, vec))
    if verify:
        for eig, vec in pairs:
            resid = np.max(np.abs(sys_mat @ vec - eig * vec))
            if resid > tol:
                raise OracleError(
                    f"eigenpair residual {resid:.3e} exceeds {tol:.1e} for {eig}"
                )
    return pairs


def analytic_trajectory(
    dec: EigenDecomposition, x0: np.ndarray, z0: np.ndarray, t
) -> tuple[np.ndarray, np.ndarray]:
    """Closed-form (x(t), z(t)) of the paired system.

    Expanding the initial condition over the orthonormal eigenbasis, each
    component rotates at angular frequency 1 + lambda:

        x(t) = V (c cos(w t) + s sin(w t)),   c = V^T x0, s = V^T z0,
        z(t) = V (-c sin(w t) + s cos(w t)),  w = 1 + lambda per column.

    t may be a scalar (returns two length-n vectors) or a 1-D array of times
    (returns two (len(t), n) arrays).
    """
    x0 = np.asarray(x0, dtype=float)
    z0 = np.asarray(z0, dtype=float)
    basis = dec.full_basis()
    omega = 1.0 + dec.full_values()
    c = basis.T @ x0
    s = basis.T @ z0
    t_arr = np.atleast_1d(np.asarray(t, dtype=float))
    phase = np.outer(t_arr, omega)
    cos_p, sin_p = np.cos(phase), np.sin(phase)
    x_t = (cos_p * c + sin_p * s) @ basis.T
    z_t = (-sin_p * c + cos_p * s) @ basis.T
    if np.isscalar(t) or np.asarray(t).ndim == 0:
        return x_t[0], z_t[0]
    return x_t, z_t


def modal_coefficients(
    dec: EigenDecomposition, x0: np.ndarray, z0: np.ndarray, agent: int
) -> ModalCoefficients:
    """Line amplitudes of agent i's trajectory, one per distinct eigenvalue.

    For the zero eigenvalue the quadratures are the signed cluster projections
    (for a connected graph both reduce to the initial averages, identical
    across agents). For positive eigenvalues the amplitude is the invariant
    hypot of the cluster projections, so it does not depend on the basis
    chosen within a degenerate eigenspace.
    """
    x0 = np.asarray(x0, dtype=float)
    z0 = np.asarray(z0, dtype=float)
    if not 0 <= agent < dec.n:
        raise ValueError(f"agent {agent} out of range [0, {dec.n})")
    a = np.empty(dec.num_distinct)
    b = np.empty(dec.num_distinct)
    for j, (lam, block) in enumerate(zip(dec.values, dec.vectors)):
        px = float(block[agent, :] @ (block.T @ x0))
        pz = float(block[agent, :] @ (block.T @ z0))
        if lam == 0.0:
            a[j], b[j] = px, pz
        else:
            a[j] = b[j] = float(np.hypot(px, pz))
    return ModalCoefficients(agent=agent, lambdas=dec.values.copy(), a=a, b=b)


def check_estimability(
    dec: EigenDecomposition,
    x0: np.ndarray,
    z0: np.ndarray,
    agent: int,
    flag_tol: float = 1e-6,
) -> np.ndarray:
    """Which distinct eigenvalues agent i can estimate from its own signal.

    An eigenvalue is estimable exactly when its spectral line in x_i has
    nonzero amplitude, which folds together the two classical hypotheses
    (initial conditions not orthogonal to the eigenspace, and the eigenspace
    visible from the agent's output). Returns a boolean flag per distinct
    eigenvalue. Multiplicities are never recoverable from frequencies alone.
    """
    coef = modal_coefficients(dec, x0, z0, agent)
    return coef.line_amplitudes() > flag_tol


def observability_rank(mat: np.ndarray, out_mat: np.ndarray, rank_tol: float = 1e-9) -> int:
    """Numerical rank of the observability matrix [C; CM; ...; CM^(d-1)].

    Rank is decided by singular values against rank_tol * sigma_max. Each
    power block's rows are normalized first — a diagonal scaling, which
    preserves rank but keeps the huge dynamic range of high matrix powers
    from swamping the threshold.
    """
    mat = np.asarray(mat, dtype=float)
    out = np.atleast_2d(np.asarray(out_mat, dtype=float))
    dim = mat.shape[0]
    if out.shape[1] != dim:
        raise ValueError(f"output matrix has {out.shape[1]} columns, expected {dim}")
    blocks = []
    block = out
    for _ in range(dim):
        blocks.append(block)
        block = block @ mat
    stacked = np.vstack(blocks)
    norms = np.linalg.norm(stacked, axis=1, keepdims=True)
    norms[norms == 0.0] = 1.0
    sv = np.linalg.svd(stacked / norms, compute_uv=False)
    if sv.size == 0 or sv[0] == 0.0:
        return 0
    return int(np.sum(sv > rank_tol * sv[0]))


def verify_rank_relation(
    laplacian: np.ndarray, out_mat: np.ndarray, rank_tol: float = 1e-9
) -> ObservabilityReport:
    """Compare Laplacian-side and paired-system observability ranks.

    Builds the block-diagonal output [C 0; 0 C] for the 2n-state system and
    computes both ranks; the system rank equals twice the Laplacian rank
    (flagged, not raised, if the computed integers disagree — that signals
    numerical rank instability, not a logic error). Also reports, per
    distinct eigenvalue, whether C sees the eigenspace at all: an eigenvalue
    is unobservable exactly when C annihilates some eigenvector of its
    eigenspace, i.e. when C restricted to the cluster basis loses column rank.
    """
    lap = np.asarray(laplacian, dtype=float)
    out = np.atleast_2d(np.asarray(out_mat, dtype=float))
    n = lap.shape[0]
    k = out.shape[0]
    sys_mat = build_system_matrix(lap)
    out_sys = np.block(
        [[out, np.zeros((k, n))], [np.zeros((k, n)), out]]
    )
    rank_lap = observability_rank(lap, out, rank_tol)
    rank_sys = observability_rank(sys_mat, out_sys, rank_tol)

    dec = eig_sym(lap)
    observable = np.empty(dec.num_distinct, dtype=bool)
    for j, block in enumerate(dec.vectors):
        proj = out @ block
        sv = np.linalg.svd(proj, compute_uv=False)
        nu = block.shape[1]
        full = sv.size >= nu and sv[0] > 0 and np.sum(sv > rank_tol * sv[0]) == nu
        observable[j] = bool(full)

    return ObservabilityReport(
        rank_laplacian=rank_lap,
        rank_system=rank_sys,
        n=n,
        full_rank=(rank_lap == n),
        relation_holds=(rank_sys == 2 * rank_lap),
        eigenvalues=dec.values.copy(),
        eigenvalue_observable=observable,
    )


def oracle_report(
    g: Graph,
    x0: np.ndarray,
    z0: np.ndarray,
    agents: list[int] | None = None,
    out_mat: np.ndarray | None = None,
    cluster_tol: float = 1e-8,
    rank_tol: float = 1e-9,
) -> dict:
    """JSON-ready ground-truth report for a graph and initial condition.

    Shape: {"eigenvalues": [...], "multiplicities": [...],
    "coefficients": {agent: [[lambda, a, b], ...]}, "ranks": {"L": r, "A": r2}}.
    The default output matrix observes the first listed agent.
    """
    dec = eigendecompose(g, cluster_tol=cluster_tol)
    if agents is None:
        agents = list(range(g.n))
    if out_mat is None:
        out_mat = np.zeros((1, g.n))
        out_mat[0, agents[0]] = 1.0
    report = verify_rank_relation(build_laplacian(g), out_mat, rank_tol=rank_tol)
    coeffs = {}
    for i in agents:
        c = modal_coefficients(dec, x0, z0, i)
        coeffs[str(i)] = [
            [float(lam), float(ai), float(bi)]
            for lam, ai, bi in zip(c.lambdas, c.a, c.b)
        ]
    return {
        "eigenvalues": [float(v) for v in dec.values],
        "multiplicities": [int(m) for m in dec.multiplicities],
        "coefficients": coeffs,
        "ranks": {"L": report.rank_laplacian, "A": report.rank_system},
    }
