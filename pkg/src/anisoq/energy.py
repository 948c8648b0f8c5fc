"""The degenerate anisotropic integrand psi and the envelope bracket.

psi vanishes exactly on the three lift matrices X1, X2, X3 (equivalently,
where the graph tangent LambdaM(X) is positively proportional to one of the
three construction rays) and equals ||LambdaM(X)|| elsewhere.  The envelope
of the induced Q-integrand at an affine target is bracketed numerically:

* upper bound: the exact psi-energy of a concrete competitor found by
  multi-start pattern descent over per-part P1 sheets with clamped affine
  boundary (plus optional branched library blocks evaluated at current
  level) -- a sound upper bound by construction;
* lower bound at the zero target: the quantitative chain combining the
  flux-balance inequality, the no-cancellation projection bound and the
  empirical mixed/vertical mass ratio constant 1/200.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import construction
from .currents import FunctionalQGraph, Mesh
from .exterior import lambda_m, lambda_m_batch
from .multipoint import MaximalDecomposition

DEFAULT_RAY_TOL = 1e-9
LOWER_BOUND_RATIO_CONSTANT = 1.0 / 200.0


@dataclass
class PsiConfig:
    """Zero rays and tolerances for the degenerate integrand."""

    eps: float
    rays: np.ndarray  # (3, 6) unit simple 2-vectors
    ray_tol: float = DEFAULT_RAY_TOL
    eta: float = 0.0  # 0 = exact psi; eta > 0 smooths the cutoff

    @classmethod
    def for_eps(cls, eps, ray_tol=DEFAULT_RAY_TOL, eta=0.0):
        b = construction.build(eps)
        rays = lambda_m_batch(b.X)
        rays = rays / np.linalg.norm(rays, axis=1, keepdims=True)
        return cls(eps=eps, rays=rays, ray_tol=ray_tol, eta=eta)

    def with_eta(self, eta):
        return PsiConfig(eps=self.eps, rays=self.rays, ray_tol=self.ray_tol, eta=eta)


def _ray_angles(lams, cfg):
    """Smallest angle from each (unnormalised) 2-vector to the ray set.

    Evaluated through the projection residual (sine) rather than arccos of
    the inner product, which would lose all resolution below ~1e-8; with
    this formula angles resolve down to machine precision, so the 1e-9
    default tolerance is meaningful.
    """
    unit = lams / np.linalg.norm(lams, axis=1, keepdims=True)
    cosang = unit @ cfg.rays.T  # (N, 3)
    resid = unit[:, None, :] - cosang[:, :, None] * cfg.rays[None, :, :]
    sinang = np.linalg.norm(resid, axis=2)
    ang = np.arctan2(sinang, cosang)
    return ang.min(axis=1)


def psi_batch(Xs, cfg):
    """psi (or its eta-smoothed variant) on an (N, 2, 2) stack of gradients."""
    lams = lambda_m_batch(Xs)
    nrm = np.linalg.norm(lams, axis=1)
    ang = _ray_angles(lams, cfg)
    on_ray = ang <= cfg.ray_tol
    if cfg.eta > 0.0:
        out = nrm * np.minimum(1.0, ang / cfg.eta)
    else:
        out = nrm.copy()
    out[on_ray] = 0.0
    return out


def psi(X, cfg):
    """psi of a single 2x2 gradient."""
    return float(psi_batch(np.asarray(X, dtype=float)[None, :, :], cfg)[0])


def psi_of_unit_tangents(unit_ws, cfg):
    """The 1-homogeneous extension evaluated on unit tangents: 0 on rays, 1 off."""
    ang = _ray_angles(np.asarray(unit_ws, dtype=float), cfg)
    out = np.ones(ang.shape[0])
    if cfg.eta > 0.0:
        out = np.minimum(1.0, ang / cfg.eta)
    out[ang <= cfg.ray_tol] = 0.0
    return out


def psi_bar_energy(g, cfg):
    """Integral over the domain of sum_sheets psi(gradient), exactly per triangle."""
    mesh = g.mesh
    tri_area = 0.5 * mesh.h * mesh.h
    Xs = []
    wts = []
    for i in range(mesh.n):
        for j in range(mesh.n):
            for t in (0, 1):
                for mult, _a, X in g.sheets[i][j][t]:
                    Xs.append(X)
                    wts.append(mult * tri_area)
    vals = psi_batch(np.array(Xs), cfg)
    return float(np.array(wts) @ vals)


def psi_mass_of_current(T, cfg):
    """Anisotropic mass: integral of the extension over the current."""
    w = T.mults * T.areas()
    return float(w @ psi_of_unit_tangents(T.unit_tangents(), cfg))


# ---------------------------------------------------------------------------
# envelope upper bound: competitor optimisation
# ---------------------------------------------------------------------------


class _SheetProblem:
    """Single P1 sheet on the unit square with clamped affine boundary."""

    def __init__(self, n, a, X):
        self.n = n
        self.h = 1.0 / n
        self.a = np.asarray(a, dtype=float)
        self.X = np.asarray(X, dtype=float)
        mesh = Mesh(x0=(0.0, 0.0), r=1.0, n=n)
        self.mesh = mesh
        nodes = mesh.nodes_array()  # (n+1, n+1, 2)
        self.nodes = nodes
        self.affine_vals = self.a[None, None, :] + np.einsum(
            "ab,ijb->ija", self.X, nodes - np.array(mesh.x0)
        )
        self.interior = [
            (i, j) for i in range(1, n) for j in range(1, n)
        ]
        # triangle -> node index triples, and node -> incident triangle ids
        tris = []
        for i in range(n):
            for j in range(n):
                tris.append(((i, j), (i + 1, j), (i + 1, j + 1)))
                tris.append(((i, j), (i + 1, j + 1), (i, j + 1)))
        self.tris = tris
        self.incident = {}
        for tid, tri in enumerate(tris):
            for nd in tri:
                self.incident.setdefault(nd, []).append(tid)
        self.tri_area = 0.5 * self.h * self.h
        h = self.h
        # the two edge matrices are fixed per triangle parity (lower/upper)
        self.edge_inv = (
            np.linalg.inv(np.array([[h, h], [0.0, h]])),  # lower: (h,0), (h,h)
            np.linalg.inv(np.array([[h, 0.0], [h, h]])),  # upper: (h,h), (0,h)
        )

    def gradients(self, vals, tri_ids=None):
        ids = list(range(len(self.tris))) if tri_ids is None else list(tri_ids)
        out = np.empty((len(ids), 2, 2))
        for k, tid in enumerate(ids):
            (n0, n1, n2) = self.tris[tid]
            f0 = vals[n0]
            F = np.stack([vals[n1] - f0, vals[n2] - f0], axis=1)
            out[k] = F @ self.edge_inv[tid % 2]
        return out

    def energy(self, vals, cfg, tri_ids=None):
        grads = self.gradients(vals, tri_ids)
        return float(psi_batch(grads, cfg).sum() * self.tri_area)

    def optimise(self, cfg, starts, seed, passes=6, etas=(0.4, 0.1, 0.0)):
        """Multi-start coordinate pattern descent; returns (best exact value, vals).

        Start 0 is the affine competitor itself; later starts perturb it.
        The per-start seed stream depends only on (seed, start index), and the
        result is the running minimum over starts, so adding starts can only
        improve the value.  Each smoothing stage runs at most 5 * passes
        sweeps, keeping the cost per start predictable.
        """
        exact = cfg.with_eta(0.0)
        best_vals = self._as_dict(self.affine_vals)
        best_val = self.energy(best_vals, exact)
        for s in range(max(1, starts)):
            rng = np.random.default_rng((seed, s))
            vals = self._as_dict(self.affine_vals)
            if s > 0:
                amp = self.h * (1.0 + np.linalg.norm(self.X)) * rng.uniform(0.2, 2.0)
                for nd in self.interior:
                    vals[nd] = vals[nd] + amp * rng.normal(size=2)
            for eta in etas:
                cfg_eta = cfg.with_eta(eta)
                step = self.h * (1.0 + np.linalg.norm(self.X))
                sweeps = 0
                while step > 1e-4 * self.h and sweeps < 5 * passes:
                    sweeps += 1
                    improved = False
                    for nd in self.interior:
                        tids = self.incident[nd]
                        base = self.energy(vals, cfg_eta, tids)
                        for comp in (0, 1):
                            for sgn in (1.0, -1.0):
                                old = vals[nd].copy()
                                vals[nd] = old + sgn * step * np.eye(2)[comp]
                                trial = self.energy(vals, cfg_eta, tids)
                                if trial < base - 1e-15:
                                    base = trial
                                    improved = True
                                else:
                                    vals[nd] = old
                    if not improved:
                        step *= 0.5
            val = self.energy(vals, exact)
            if val < best_val:
                best_val = val
                best_vals = {k: v.copy() for k, v in vals.items()}
        return best_val, best_vals

    def _as_dict(self, arr):
        return {
            (i, j): arr[i, j].copy() for i in range(self.n + 1) for j in range(self.n + 1)
        }

    def vals_to_array(self, vals):
        out = np.empty((self.n + 1, self.n + 1, 2))
        for (i, j), v in vals.items():
            out[i, j] = v
        return out


def _branched_library_value(q, cfg, n_r=12, n_theta=24):
    """Exact psi-mass per unit area of a branched block with flat matching frame.

    Admissible for a part with multiplicity q >= 2 and zero gradient: a
    branched cone inside the inscribed disk of radius 0.45, constant outside.
    """
    from .currents import branched_graph

    disk = branched_graph(q, 0.3, 1.0, n_r=n_r, n_theta=n_theta)
    scale = 0.45
    S = np.diag([scale, scale, scale, scale])
    disk = disk.pushforward(S)
    inner = psi_mass_of_current(disk, cfg)
    outside_area = 1.0 - math.pi * scale * scale
    return inner + q * outside_area * 1.0  # psi(0) = 1 off the rays


@dataclass
class EnvelopeBracket:
    """Two-sided numerical bracket for the envelope at an affine target."""

    target: MaximalDecomposition
    eps: float
    q: int
    upper: float
    lower: float
    upper_meta: dict = field(default_factory=dict)
    chain_trace: dict = field(default_factory=dict)

    @property
    def gap(self):
        return self.upper - self.lower

    def check(self, tol=1e-9):
        if self.lower > self.upper + tol:
            raise AssertionError("bracket ordering violated: lower > upper")

    def to_json_obj(self, competitor_file=None):
        return {
            "target": self.target.to_json_obj(),
            "eps": self.eps,
            "Q": self.q,
            "upper": self.upper,
            "lower": self.lower,
            "gap": self.gap,
            "competitor_file": competitor_file,
            "chain_trace": self.chain_trace,
            "upper_meta": self.upper_meta,
        }


def envelope_upper(target, cfg, mesh_n=8, starts=4, seed=0, domain=None,
                   use_library=True):
    """Upper bound for the envelope at the target, with the achieving competitor.

    Parts of the target are optimised independently (the objective decouples
    across parts and across the q_j sheets of one part, so one sheet per part
    is optimised and weighted by q_j).  Targets whose gradient is one of the
    psi rays are returned exactly as zero with the affine competitor.  The
    value is invariant under translation/rescaling of the domain; `domain`
    = (x0, lam) only relocates the reported competitor.
    """
    if mesh_n < 2:
        raise ValueError("mesh_n must be >= 2")
    mesh = Mesh(x0=(0.0, 0.0), r=1.0, n=mesh_n)
    out_mesh = mesh
    lam_scale = 1.0
    if domain is not None:
        x0, lam_scale = domain
        out_mesh = Mesh(x0=tuple(np.asarray(x0, float)), r=float(lam_scale), n=mesh_n)
    total = 0.0
    meta = {"parts": [], "starts": starts, "mesh_n": mesh_n, "seed": seed}
    competitor = None
    for mult, a, X in target.parts:
        if psi(X, cfg) == 0.0:
            # symbolic ray competitor: the affine map itself, with the exact
            # gradient stored (never reconstructed from nodal values)
            piece = FunctionalQGraph.affine(out_mesh, [(mult, a, X)])
            meta["parts"].append({"q": int(mult), "value": 0.0, "method": "affine-ray"})
        else:
            prob = _SheetProblem(mesh_n, a, X)
            val, vals = prob.optimise(cfg, starts, seed)
            entry = {"q": int(mult), "value": float(mult) * val,
                     "method": "pattern-descent"}
            if use_library and mult >= 2 and np.linalg.norm(X) == 0.0:
                lib = _branched_library_value(mult, cfg)
                entry["library_value"] = lib
                if lib < float(mult) * val:
                    entry["value"] = lib
                    entry["method"] = "branched-library"
            total += entry["value"]
            meta["parts"].append(entry)
            arr = prob.vals_to_array(vals)
            a_vec = np.asarray(a, dtype=float)
            piece = FunctionalQGraph.from_nodal_sheets(
                out_mesh, [(mult, a_vec + lam_scale * (arr - a_vec))], check=False
            )
        competitor = piece if competitor is None else competitor.merged_with(piece)
    return float(total), competitor, meta


def envelope_lower_at_zero(eps, q):
    """Quantitative lower bound for the envelope at q copies of (a, 0).

    Chain (per unit domain area): the energy of any competitor dominates the
    mass of the graph part whose tangent avoids the three rays; after the
    squeeze diag(1,1,eps,eps) that mass dominates eps^2 times the non-special
    mass m_NS; the flux balance and the projection bound force

        q <= [ (1/C) (1 + 2||w1||/||w3||) + 1 + 4||w1||/eps^2 ] * m_NS

    with C = 1/200, so the energy is at least q * eps^2 / [ ... ].  The two
    norms are evaluated twice (wedge coordinates and closed forms) and must
    agree to 1e-12.
    """
    b = construction.build(eps)
    cf = construction.closed_forms(eps, b.delta)
    w1_a = float(np.linalg.norm(b.w[0]))
    w3_a = float(np.linalg.norm(b.w[2]))
    w1_b = math.sqrt(cf["norm_w1_sq"])
    w3_b = math.sqrt(cf["norm_w3_sq"])
    if abs(w1_a - w1_b) > 1e-12 or abs(w3_a - w3_b) > 1e-12:
        raise AssertionError("independent norm evaluations disagree beyond 1e-12")
    C = LOWER_BOUND_RATIO_CONSTANT
    term_vertical = (1.0 / C) * (1.0 + 2.0 * w1_a / w3_a)
    term_ns = 1.0 + 4.0 * w1_a / eps**2
    denom = term_vertical + term_ns
    value = q * eps**2 / denom
    trace = {
        "C_ratio": C,
        "norm_w1": w1_a,
        "norm_w3": w3_a,
        "norm_w1_closed_form": w1_b,
        "norm_w3_closed_form": w3_b,
        "step1_energy_geq": "mass of off-ray part of the graph current",
        "step2_squeeze_factor": eps**2,
        "term_vertical": term_vertical,
        "term_non_special": term_ns,
        "denominator": denom,
        "value": value,
    }
    return float(value), trace


def envelope_bracket(eps, q, target_kind, mesh_n=8, starts=4, seed=0):
    """Bracket for one of the named targets: zero or ray1/ray2/ray3."""
    b = construction.build(eps)
    cfg = PsiConfig.for_eps(eps)
    if target_kind == "zero":
        target = MaximalDecomposition.single(q, np.zeros(2), np.zeros((2, 2)))
        lower, trace = envelope_lower_at_zero(eps, q)
    elif target_kind in ("ray1", "ray2", "ray3"):
        i = int(target_kind[-1]) - 1
        target = MaximalDecomposition.single(q, np.zeros(2), b.X[i])
        lower, trace = 0.0, {"note": "psi >= 0 gives the trivial lower bound"}
    else:
        raise ValueError(f"unknown target {target_kind!r}")
    upper, competitor, meta = envelope_upper(
        target, cfg, mesh_n=mesh_n, starts=starts, seed=seed
    )
    br = EnvelopeBracket(
        target=target,
        eps=eps,
        q=q,
        upper=upper,
        lower=lower,
        upper_meta=meta,
        chain_trace=trace,
    )
    br.check()
    return br, competitor


def affine_competitor_bound(target, cfg):
    """The explicit affine-competitor value sum_j q_j psi(X_j)."""
    return float(sum(mult * psi(X, cfg) for (mult, _a, X) in target.parts))


def property_b_spotcheck(q, a, X, samples, seed, cfg, mesh_n=6, amp=0.3,
                         slack=1e-9):
    """Sampled mean-comparison check for the part-wise envelope.

    For sampled competitors f matching the affine boundary q[a + X x], the
    mean over the domain of the cheap per-jet upper bound (the affine
    competitor value at (f(x), grad f(x))) is compared with the envelope
    upper bound of the target.  Both sides are upper bounds, so a negative
    margin beyond `slack` is only flagged for inspection, never asserted.
    """
    target = MaximalDecomposition.single(q, a, X)
    left, _comp, _meta = envelope_upper(target, cfg, mesh_n=mesh_n, starts=2, seed=seed)
    rng = np.random.default_rng(seed)
    mesh = Mesh(x0=(0.0, 0.0), r=1.0, n=mesh_n)
    margins = []
    flagged = []
    for s in range(samples):
        prob = _SheetProblem(mesh_n, a, X)
        nodal = []
        for _ in range(q):
            vals = prob.affine_vals.copy()
            bump = np.sin(math.pi * np.linspace(0, 1, mesh_n + 1))
            bump2 = np.outer(bump, bump)[..., None]
            vals = vals + amp * bump2 * rng.normal(size=2)[None, None, :]
            nodal.append((1, vals))
        f = FunctionalQGraph.from_nodal_sheets(mesh, nodal, check=False)
        right = psi_bar_energy(f, cfg)  # |D| = 1, so this is the mean
        margin = right - left
        margins.append(margin)
        if margin < -slack:
            flagged.append(s)
    return {
        "q": q,
        "left_upper": left,
        "margins": margins,
        "flagged_samples": flagged,
        "slack": slack,
    }
