"""
Independent numerical checks for the closed forms in :mod:`gausskld.kld`.

* central finite differences of the KLD expression in packed coordinates
  (m, w, coords(S), coords(V)), where coords is vec or vech;
* a Monte-Carlo estimate of KL(q || p) from sampled log-density ratios;
* a randomised suite over the vec/Kronecker/trace identities.

The finite-difference objective is the closed-form expression evaluated
literally on arbitrary invertible square S and V (with log|det|). Off the
symmetric matrices this is only a device that makes entrywise differencing
well defined; it is not a divergence.
"""

from dataclasses import dataclass

import numpy as np
from scipy import stats

from . import matcalc
from .exceptions import LengthMismatch, ShapeMismatch, SingularMatrix, StencilFailure
from .kld import Basis, BlockId, GaussianPair, assemble_hessian, assemble_jacobian, hessian_block, mV_alternative_form
from .matcalc import duplication_matrix, vec, vech, vech_length


def kld_extended(m, w, S, V):
    """
    ``1/2 [log|det V| - log|det S| - n + tr(V^-1 S) + a^T V^-1 a]`` for general
    invertible square S, V.

    Leading batch dimensions are supported: ``m, w`` of shape ``(..., n)`` and
    ``S, V`` of shape ``(..., n, n)`` give an array of shape ``(...)``.
    Raises SingularMatrix if any S or V is singular.
    """
    m, w = np.asarray(m, dtype=float), np.asarray(w, dtype=float)
    S, V = np.asarray(S, dtype=float), np.asarray(V, dtype=float)
    n = m.shape[-1]
    if S.shape[-2:] != (n, n) or V.shape[-2:] != (n, n) or w.shape[-1] != n:
        raise ShapeMismatch("m, w, S, V have inconsistent dimensions")
    sign_S, logdet_S = np.linalg.slogdet(S)
    sign_V, logdet_V = np.linalg.slogdet(V)
    if np.any(sign_S == 0) or np.any(sign_V == 0):
        raise SingularMatrix("S or V is singular")
    a = m - w
    try:
        # one solve for both V^-1 S and V^-1 a
        X = np.linalg.solve(V, np.concatenate([S, a[..., None]], axis=-1))
    except np.linalg.LinAlgError as exc:
        raise SingularMatrix("V is singular") from exc
    trace = np.trace(X[..., :n], axis1=-2, axis2=-1)
    quad = np.einsum("...i,...i->...", a, X[..., n])
    out = 0.5 * (logdet_V - logdet_S - n + trace + quad)
    if not np.all(np.isfinite(out)):
        raise SingularMatrix("non-finite KLD; S or V is numerically singular")
    return out[()] if out.ndim == 0 else out


# -- packed coordinates ------------------------------------------------------

def packed_length(n, basis):
    k = n * n if Basis(basis) is Basis.VEC else vech_length(n)
    return 2 * n + 2 * k


def packed_dim(length, basis):
    """Recover n from a packed length; raises LengthMismatch if impossible."""
    for n in range(1, length + 1):
        L = packed_length(n, basis)
        if L == length:
            return n
        if L > length:
            break
    raise LengthMismatch(f"no dimension n gives packed length {length} in basis {Basis(basis).value}")


@dataclass(frozen=True, eq=False)
class PackedPoint:
    """A GaussianPair flattened to (m, w, coords(S), coords(V))."""

    basis: Basis
    theta: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "basis", Basis(self.basis))
        theta = matcalc.as_vector(self.theta, "theta")
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "n", packed_dim(theta.size, self.basis))

    @classmethod
    def from_pair(cls, p: GaussianPair, basis=Basis.VECH):
        coords = vec if Basis(basis) is Basis.VEC else vech
        return cls(basis, np.concatenate([p.m, p.w, coords(p.S), coords(p.V)]))

    def to_pair(self):
        m, w, S, V = unpack(self.theta[None, :], self.n, self.basis)
        return GaussianPair(m[0], w[0], S[0], V[0])


def unpack(thetas, n, basis):
    """Batched unpacking of packed rows ``(K, L)`` into m, w, S, V arrays."""
    thetas = np.atleast_2d(thetas)
    K = thetas.shape[0]
    m, w = thetas[:, :n], thetas[:, n : 2 * n]
    rest = thetas[:, 2 * n :]
    if Basis(basis) is Basis.VEC:
        k = n * n
        # column-major vec -> row-major storage: transpose the last two axes
        S = rest[:, :k].reshape(K, n, n).transpose(0, 2, 1)
        V = rest[:, k:].reshape(K, n, n).transpose(0, 2, 1)
    else:
        k = vech_length(n)
        S, V = batch_unvech(rest[:, :k], n), batch_unvech(rest[:, k:], n)
    return m, w, S, V


def batch_unvech(rows_of_vech, n):
    rows, cols = matcalc._lower_indices(n)
    out = np.zeros((rows_of_vech.shape[0], n, n))
    out[:, rows, cols] = rows_of_vech
    out[:, cols, rows] = rows_of_vech
    return out


def packed_kld(n, basis):
    """Batched objective ``thetas (K, L) -> KLD (K,)`` in packed coordinates."""

    def f(thetas):
        return kld_extended(*unpack(thetas, n, basis))

    return f


# -- finite differences --------------------------------------------------------

@dataclass(frozen=True)
class FdConfig:
    step: float = 1e-5
    scheme: str = "central2"
    relative_step: bool = True

    def __post_init__(self):
        if not self.step > 0:
            raise ValueError("step must be positive")
        if self.scheme != "central2":
            raise ValueError(f"unsupported scheme {self.scheme!r}")

    def steps(self, theta):
        if self.relative_step:
            return self.step * np.maximum(1.0, np.abs(theta))
        return np.full(theta.shape, self.step)


GRADIENT_CONFIG = FdConfig(step=1e-5)
HESSIAN_CONFIG = FdConfig(step=1e-4)


def _evaluate(f, points):
    try:
        values = np.asarray(f(points), dtype=float)
    except np.linalg.LinAlgError as exc:
        raise StencilFailure(f"stencil evaluation failed: {exc}") from exc
    if not np.all(np.isfinite(values)):
        raise StencilFailure("non-finite value at a stencil point")
    return values


def central_gradient(f, theta, cfg=GRADIENT_CONFIG):
    """
    Central-difference gradient of a batched scalar function.

    ``f`` maps an array of points ``(K, L)`` to values ``(K,)``.
    """
    theta = np.asarray(theta, dtype=float)
    h = cfg.steps(theta)
    E = np.diag(h)
    values = _evaluate(f, np.concatenate([theta + E, theta - E]))
    L = theta.size
    return (values[:L] - values[L:]) / (2.0 * h)


def central_hessian(f, theta, cfg=HESSIAN_CONFIG):
    """
    Second-difference Hessian of a batched scalar function::

        H[i, j] = [f(+i+j) - f(+i-j) - f(-i+j) + f(-i-j)] / (4 h_i h_j)

    returned symmetrised as ``(H + H^T) / 2``.
    """
    theta = np.asarray(theta, dtype=float)
    L = theta.size
    h = cfg.steps(theta)
    E = np.diag(h)
    pi = theta + E  # rows: theta + h_i e_i
    mi = theta - E
    points = np.concatenate(
        [
            (pi[:, None, :] + E[None, :, :]).reshape(-1, L),
            (pi[:, None, :] - E[None, :, :]).reshape(-1, L),
            (mi[:, None, :] + E[None, :, :]).reshape(-1, L),
            (mi[:, None, :] - E[None, :, :]).reshape(-1, L),
        ]
    )
    values = _evaluate(f, points).reshape(4, L, L)
    H = (values[0] - values[1] - values[2] + values[3]) / (4.0 * np.outer(h, h))
    return 0.5 * (H + H.T)


def fd_gradient(point: PackedPoint, cfg=GRADIENT_CONFIG):
    """
    Central-difference gradient of the extended KLD at ``point``.

    In the vech basis a unit step in an off-diagonal coordinate moves both
    mirrored matrix entries, so S and V stay symmetric.
    """
    return central_gradient(packed_kld(point.n, point.basis), point.theta, cfg)


def fd_hessian(point: PackedPoint, cfg=HESSIAN_CONFIG):
    return central_hessian(packed_kld(point.n, point.basis), point.theta, cfg)


# -- Monte Carlo ---------------------------------------------------------------

def mc_kld(p: GaussianPair, samples=1_000_000, seed=0):
    """
    Monte-Carlo estimate of KL(q || p) as the sample mean of
    ``log q(x) - log p(x)`` over ``x ~ q``.

    Sampling uses numpy's PCG64 generator seeded with ``seed``; densities are
    evaluated with ``scipy.stats.multivariate_normal``. Returns
    ``(estimate, standard_error)``.
    """
    if samples < 1000:
        raise ValueError("mc_kld needs at least 1000 samples")
    rng = np.random.Generator(np.random.PCG64(seed))
    z = rng.standard_normal((samples, p.n))
    x = p.m + z @ p.chol_S.T
    log_q = stats.multivariate_normal(p.m, p.S).logpdf(x)
    log_p = stats.multivariate_normal(p.w, p.V).logpdf(x)
    r = np.atleast_1d(log_q - log_p)
    return float(r.mean()), float(r.std(ddof=1) / np.sqrt(samples))


# -- random instances ----------------------------------------------------------

def random_spd(rng, n, low=0.5, high=2.0):
    """``Q diag(lam) Q^T`` with Q from a Gaussian QR and lam ~ U[low, high]."""
    Q, R = np.linalg.qr(rng.standard_normal((n, n)))
    Q = Q * np.sign(np.diag(R))
    lam = rng.uniform(low, high, size=n)
    A = (Q * lam) @ Q.T
    return 0.5 * (A + A.T)


def random_symmetric(rng, n):
    A = rng.standard_normal((n, n))
    return 0.5 * (A + A.T)


def random_pair(rng, n, coincident=False):
    """A random GaussianPair; ``coincident=True`` gives q == p."""
    m = rng.standard_normal(n)
    S = random_spd(rng, n)
    if coincident:
        return GaussianPair(m, m.copy(), S, S.copy())
    return GaussianPair(m, rng.standard_normal(n), S, random_spd(rng, n))


def instance_rng(seed, *keys):
    """Generator for one trial, derived from the master seed and integer keys."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), *map(int, keys)]))


# -- identity suite ------------------------------------------------------------

@dataclass
class CheckReport:
    name: str
    passed: bool
    observed_error: float
    tolerance: float
    details: str = ""
    oracle: str = ""

    def as_dict(self):
        return {
            "name": self.name,
            "passed": self.passed,
            "observed_error": self.observed_error,
            "tolerance": self.tolerance,
            "details": self.details,
            "oracle": self.oracle,
        }


def make_report(name, observed, tol, details="", oracle=""):
    observed = float(observed)
    return CheckReport(name, bool(observed <= tol), observed, float(tol), details, oracle)


def rel_err(x, y):
    """``max|x - y| / max(1, max|x|, max|y|)``."""
    x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
    diff = np.max(np.abs(x - y)) if x.size else 0.0
    scale = max(1.0, float(np.max(np.abs(x))) if x.size else 0.0, float(np.max(np.abs(y))) if y.size else 0.0)
    return float(diff / scale)


def _id_vec_of_vector(rng, n):
    a = rng.standard_normal(n)
    return max(rel_err(vec(a[None, :]), a), rel_err(vec(a[:, None]), a))


def _id_vec_AXB(rng, n):
    A, X, B = (rng.standard_normal((n, n)) for _ in range(3))
    return rel_err(vec(A @ X @ B), matcalc.kron(B.T, A) @ vec(X))


def _id_vec_ABd(rng, n):
    A, B = rng.standard_normal((n, n)), rng.standard_normal((n, n))
    d = rng.standard_normal(n)
    x, y, z = matcalc.vec_ABd_forms(A, B, d)
    return max(rel_err(x, y), rel_err(x, z), rel_err(y, z))


def _id_vec_sum(rng, n):
    A, B = rng.standard_normal((n, n)), rng.standard_normal((n, n))
    return rel_err(vec(A + B), vec(A) + vec(B))


def _id_duplication(rng, n):
    A = random_symmetric(rng, n)
    return float(np.max(np.abs(duplication_matrix(n) @ vech(A) - vec(A))))


def _id_tr_vec_dot(rng, n):
    a, b = rng.standard_normal(n), rng.standard_normal(n)
    return rel_err(np.trace(a[None, :] @ b[:, None]), vec(a[:, None]) @ vec(b[:, None]))


def _id_tr_AtB(rng, n):
    A, B = rng.standard_normal((n, n)), rng.standard_normal((n, n))
    return max(rel_err(np.trace(A.T @ B), vec(A) @ vec(B)), rel_err(np.trace(A.T @ B), matcalc.tr_prod(A, B)))


def _id_prop1(rng, n):
    A, B = rng.standard_normal((n, n)), rng.standard_normal((n, n))
    c, d = rng.standard_normal(n), rng.standard_normal(n)
    lhs, rhs = matcalc.prop1_lhs_rhs(A, B, c, d)
    return rel_err(lhs, rhs)


def _id_prop1_symmetric(rng, n):
    A, B = random_symmetric(rng, n), rng.standard_normal((n, n))
    c, d = rng.standard_normal(n), rng.standard_normal(n)
    lhs, _ = matcalc.prop1_lhs_rhs(A, B, c, d)
    return rel_err(lhs, vec(A) @ np.kron(d[:, None], B) @ c)


def _id_tr_ABCD(rng, n):
    A, B, C, D = (rng.standard_normal((n, n)) for _ in range(4))
    return rel_err(np.trace(A @ B @ C @ D), vec(B.T) @ matcalc.kron(A.T, C) @ vec(D))


def _id_prop2(rng, n):
    A, C = rng.standard_normal((n, n)), rng.standard_normal((n, n))
    X, Y = rng.standard_normal((n, n)), rng.standard_normal((n, n))
    H = matcalc.hessian_from_trace_form(A, C)
    quad = rel_err(vec(X) @ H @ vec(X), np.trace(A @ X.T @ C @ X))
    bilinear = rel_err(vec(Y) @ H @ vec(X), 0.5 * (np.trace(A @ Y.T @ C @ X) + np.trace(A @ X.T @ C @ Y)))
    symmetry = float(np.max(np.abs(H - H.T)))
    return max(quad, bilinear, symmetry)


def _id_kron_transpose(rng, n):
    A, B = rng.standard_normal((n, n + 1)), rng.standard_normal((n + 1, n))
    return float(np.max(np.abs(matcalc.kron(A, B).T - matcalc.kron(A.T, B.T))))


def _id_kron_scaling(rng, n):
    A, B = rng.standard_normal((n, n)), rng.standard_normal((n, n))
    alpha, beta = rng.standard_normal(2)
    return rel_err(matcalc.kron(alpha * A, beta * B), alpha * beta * matcalc.kron(A, B))


def _id_mV_symmetric_directions(rng, n):
    p = random_pair(rng, n)
    B1 = hessian_block(p, BlockId.M, BlockId.V)
    B2 = mV_alternative_form(p)
    W = random_symmetric(rng, n)
    return rel_err(B1 @ vec(W), B2 @ vec(W))


def _id_vech_hessian_consistency(rng, n):
    p = random_pair(rng, n)
    Hvec = assemble_hessian(p, Basis.VEC).assembled
    Hvech = assemble_hessian(p, Basis.VECH).assembled
    D = duplication_matrix(n)
    P = np.zeros((Hvec.shape[0], Hvech.shape[0]))
    P[: 2 * n, : 2 * n] = np.eye(2 * n)
    k, kh = n * n, vech_length(n)
    P[2 * n : 2 * n + k, 2 * n : 2 * n + kh] = D
    P[2 * n + k :, 2 * n + kh :] = D
    return rel_err(P.T @ Hvec @ P, Hvech)


# name -> trial function (rng, n) -> worst relative error of that trial
IDENTITIES = {
    "vec_of_vector": _id_vec_of_vector,
    "vec_AXB_kron": _id_vec_AXB,
    "vec_ABd_forms": _id_vec_ABd,
    "vec_of_sum": _id_vec_sum,
    "duplication_vech_to_vec": _id_duplication,
    "trace_of_dot_product": _id_tr_vec_dot,
    "trace_AtB_vec": _id_tr_AtB,
    "prop1_trace_ABcdT": _id_prop1,
    "prop1_symmetric_A": _id_prop1_symmetric,
    "trace_ABCD_vec": _id_tr_ABCD,
    "prop2_trace_form_hessian": _id_prop2,
    "kron_transpose": _id_kron_transpose,
    "kron_scaling": _id_kron_scaling,
    "mV_forms_symmetric_directions": _id_mV_symmetric_directions,
    "vech_hessian_from_vec": _id_vech_hessian_consistency,
}


def mV_nonsymmetric_control(seed, n, trials):
    """
    Negative control: on non-symmetric W the two (m, V) forms disagree.

    ``observed_error`` is the fraction of trials in which they agreed to 1e-8;
    the check passes when no trial agrees. Not applicable for n = 1.
    """
    name = "control_mV_forms_differ_off_symmetric"
    if n == 1:
        return make_report(name, 0.0, 0.0, "n=1: every direction is symmetric; not applicable", "brute force")
    agreed = 0
    for t in range(trials):
        rng = instance_rng(seed, 1001, n, t)
        p = random_pair(rng, n)
        W = rng.standard_normal((n, n))
        d1 = hessian_block(p, BlockId.M, BlockId.V) @ vec(W)
        d2 = mV_alternative_form(p) @ vec(W)
        if rel_err(d1, d2) <= 1e-8:
            agreed += 1
    return make_report(name, agreed / trials, 0.0, f"{agreed}/{trials} trials agreed", "brute force")


def _ss_block_fd(p, basis):
    """FD Hessian of the extended KLD with respect to coords(S) only."""
    n = p.n
    coords = vec if basis is Basis.VEC else vech

    def f(thetas):
        K = thetas.shape[0]
        if basis is Basis.VEC:
            S = thetas.reshape(K, n, n).transpose(0, 2, 1)
        else:
            S = batch_unvech(thetas, n)
        return kld_extended(np.broadcast_to(p.m, (K, n)), np.broadcast_to(p.w, (K, n)), S, np.broadcast_to(p.V, (K, n, n)))

    return central_hessian(f, coords(p.S), HESSIAN_CONFIG)


def ss_block_controls(seed, n, trials, fd_tol=1e-4):
    """
    The (S, S) block against FD in both coordinate systems.

    In vech coordinates ``D^T (S^-1 kron S^-1) D / 2`` must match the FD Hessian.
    In unconstrained vec coordinates it must *not* match entrywise (n >= 2),
    because that block is a symmetric-direction representative.
    """
    worst = 0.0
    agreed = 0
    for t in range(trials):
        p = random_pair(instance_rng(seed, 1002, n, t), n)
        worst = max(worst, rel_err(hessian_block(p, BlockId.S, BlockId.S, Basis.VECH), _ss_block_fd(p, Basis.VECH)))
        if n > 1 and rel_err(hessian_block(p, BlockId.S, BlockId.S, Basis.VEC), _ss_block_fd(p, Basis.VEC)) <= fd_tol:
            agreed += 1
    vech_report = make_report("ss_block_vech_matches_fd", worst, fd_tol, f"worst over {trials} trials", "central FD, vech")
    if n == 1:
        control = make_report(
            "control_ss_block_vec_fd_mismatch", 0.0, 0.0, "n=1: vec and vech coincide; not applicable", "central FD, vec"
        )
    else:
        control = make_report(
            "control_ss_block_vec_fd_mismatch",
            agreed / trials,
            0.0,
            f"{agreed}/{trials} trials matched entrywise (expected none)",
            "central FD, vec",
        )
    return [vech_report, control]


def identity_suite(seed=42, dims=(1, 2, 3), trials=100, tol=1e-10, identities=None, fd_trials=None):
    """
    Run every identity ``trials`` times at each dimension.

    Returns one CheckReport per (identity, n), with ``observed_error`` the worst
    relative error over the trials. ``identities`` maps names to trial
    functions ``(rng, n) -> error`` and defaults to :data:`IDENTITIES`. The
    negative controls and the FD (S, S) checks are appended when the default
    identity set is used; ``fd_trials`` caps their trial count.

    All randomness derives from ``seed``: each trial gets its own generator
    keyed by (seed, identity index, n, trial), so results do not depend on
    execution order.
    """
    if not dims:
        raise ValueError("dims must be non-empty")
    if trials < 1:
        raise ValueError("trials must be >= 1")
    use_defaults = identities is None
    identities = IDENTITIES if use_defaults else identities
    fd_trials = trials if fd_trials is None else min(trials, fd_trials)
    reports = []
    for n in dims:
        for idx, (name, trial) in enumerate(identities.items()):
            worst = 0.0
            for t in range(trials):
                worst = max(worst, float(trial(instance_rng(seed, idx, n, t), n)))
            reports.append(make_report(f"{name}[n={n}]", worst, tol, f"worst over {trials} trials", "brute force"))
        if use_defaults:
            extra = [mV_nonsymmetric_control(seed, n, trials), *ss_block_controls(seed, n, fd_trials)]
            for r in extra:
                r.name = f"{r.name}[n={n}]"
            reports.extend(extra)
    return reports


# -- per-instance verification ---------------------------------------------------

def hessian_scale(H):
    return max(1.0, float(np.linalg.norm(H, np.inf)))


def transpose_pairing_error(p, basis):
    """Worst ``max|block(r, c)^T - block(c, r)|`` over all 16 pairs, relative to the assembled norm."""
    H = assemble_hessian(p, basis)
    worst = 0.0
    for (r, c), B in H.blocks.items():
        worst = max(worst, float(np.max(np.abs(B.T - H.blocks[c, r]))))
    return worst / hessian_scale(H.assembled)


def is_coincident(p):
    return bool(np.array_equal(p.m, p.w) and np.array_equal(p.S, p.V))


def instance_checks(p, tol_grad=1e-6, tol_hess=1e-4, sym_tol=1e-12):
    """
    Closed forms against FD and structural properties for one instance.

    Stationarity and PSD checks are added when q == p.
    """
    reports = []
    for basis in (Basis.VEC, Basis.VECH):
        J = assemble_jacobian(p, basis).assembled
        g = fd_gradient(PackedPoint.from_pair(p, basis))
        scale = max(1.0, float(np.max(np.abs(J))))
        reports.append(
            make_report(f"jacobian_{basis.value}_vs_fd", np.max(np.abs(J - g)) / scale, tol_grad, oracle="central FD, step 1e-5")
        )
    H = assemble_hessian(p, Basis.VECH).assembled
    Hfd = fd_hessian(PackedPoint.from_pair(p, Basis.VECH))
    reports.append(
        make_report(
            "hessian_vech_vs_fd",
            np.max(np.abs(H - Hfd)) / max(1.0, float(np.max(np.abs(H)))),
            tol_hess,
            oracle="central second differences, step 1e-4",
        )
    )
    for basis in (Basis.VEC, Basis.VECH):
        Hb = assemble_hessian(p, basis).assembled
        reports.append(
            make_report(f"hessian_{basis.value}_symmetry", matcalc.max_asymmetry(Hb) / hessian_scale(Hb), sym_tol, oracle="construction")
        )
        reports.append(make_report(f"transpose_pairing_{basis.value}", transpose_pairing_error(p, basis), sym_tol, oracle="construction"))
    if is_coincident(p):
        J = assemble_jacobian(p, Basis.VECH).assembled
        # V^-1 V V^-1 is the largest term cancelling in the V block
        scale = max(1.0, float(np.linalg.norm(p.V_inv, np.inf)) ** 2)
        reports.append(make_report("stationarity", float(np.linalg.norm(J)) / scale, 1e-12, "q == p", "closed form"))
        lam = np.linalg.eigvalsh(H)
        norm2 = max(float(np.max(np.abs(lam))), np.finfo(float).tiny)
        reports.append(
            make_report("psd_at_minimum", max(0.0, -lam.min()) / norm2, 1e-10, f"min eigenvalue {lam.min():.6e}", "eigendecomposition")
        )
    return reports
