import math

import numpy as np
import pytest

from nflow import domain as dm
from nflow import galerkin as gk
from nflow.domain import Boundary, ScalarField, VectorField
from nflow.errors import GridMismatch, NonPositiveDensity, NTooLarge, PicardDiverged, SingularMass
from nflow.model import FlowState, PhysParams, RegParams, make_initial_data

N, D = Boundary.NEUMANN, Boundary.DIRICHLET_ZERO


@pytest.fixture(scope="module")
def basis16():
    g = dm.build_grid(2, (1.0, 1.0), (16, 16))
    return gk.lame_eigenbasis(g, 16, 1.0, 0.5)


def separable_dirichlet_eigs(grid, mu, count):
    vals = []
    for ks in np.ndindex(*[n for n in grid.counts]):
        lam = sum((4 / h**2) * math.sin((k + 1) * math.pi / (2 * n)) ** 2 for k, h, n in zip(ks, grid.spacing, grid.counts))
        vals.extend([mu * lam] * grid.dim)
    return np.sort(vals)[:count]


def test_decoupled_eigenvalues_match_separable_formula():
    g = dm.build_grid(2, (1.0, 1.0), (32, 32))
    b = gk.lame_eigenbasis(g, 12, 1.3, -1.3)
    ref = separable_dirichlet_eigs(g, 1.3, 10)
    assert np.max(np.abs(b.eigenvalues[:10] - ref) / ref) <= 1e-8


def test_decoupled_eigenvalues_3d_rectangular():
    g = dm.build_grid(3, (1.0, 2.0, 1.5), (6, 8, 7))
    b = gk.lame_eigenbasis(g, 12, 0.7, -0.7, use_cache=False)
    ref = separable_dirichlet_eigs(g, 0.7, 12)
    assert np.max(np.abs(b.eigenvalues - ref) / ref) <= 1e-8


@pytest.mark.parametrize("mu, lam", [(1.0, 0.0), (0.5, 2.0), (2.0, -1.0)])
def test_basis_invariants(mu, lam):
    g = dm.build_grid(2, (1.0, 1.5), (16, 16))
    b = gk.lame_eigenbasis(g, 8, mu, lam, use_cache=False)
    assert np.all(b.eigenvalues > 0) and np.all(np.diff(b.eigenvalues) >= 0)
    gram = b.flat @ b.flat.T * g.cell_volume
    assert np.max(np.abs(gram - np.eye(8))) <= 1e-10
    for a in range(8):
        res = gk.lame_apply(g, mu, lam, b.modes[a]) - b.eigenvalues[a] * b.modes[a]
        assert math.sqrt(np.sum(res**2) * g.cell_volume) <= 1e-8 * b.eigenvalues[a]
    # energy inner products built from face differences and the divergence stencil
    H = np.zeros((8, 8))
    for a in range(8):
        for c in range(8):
            grad_part = 0.0
            for comp in range(2):
                for axis in range(2):
                    fa = np.moveaxis(dm.face_differences(b.modes[a][comp], axis, -1.0), axis, 0)
                    fc = np.moveaxis(dm.face_differences(b.modes[c][comp], axis, -1.0), axis, 0)
                    w = np.ones(fa.shape[0])
                    w[[0, -1]] = 0.5  # wall faces: the jump to the ghost spans two half-cells
                    prod = np.tensordot(w, fa * fc, axes=(0, 0))
                    grad_part += np.sum(prod) / g.spacing[axis] ** 2 * g.cell_volume
            div_a = dm.divergence(b.mode(a)).values
            div_c = dm.divergence(b.mode(c)).values
            H[a, c] = mu * grad_part + (mu + lam) * np.sum(div_a * div_c) * g.cell_volume
    assert np.max(np.abs(H - np.diag(b.eigenvalues)) / b.eigenvalues.max()) <= 1e-8


def test_n_too_large():
    g = dm.build_grid(2, (1, 1), (4, 4))
    with pytest.raises(NTooLarge):
        gk.lame_eigenbasis(g, 9, 1.0, 0.0)
    gk.lame_eigenbasis(g, 8, 1.0, 0.0, use_cache=False)


def test_cache_roundtrip(tmp_path, monkeypatch):
    monkeypatch.setenv("NFLOW_CACHE", str(tmp_path))
    g = dm.build_grid(2, (1.0, 2.0), (8, 8))
    b = gk.lame_eigenbasis(g, 6, 1.0, 0.25)
    files = list(tmp_path.iterdir())
    assert len(files) == 1
    raw = files[0].read_bytes()
    assert raw.startswith(b"LAME1\n2 8 8 6 1.0 0.25\n")
    assert len(raw.split(b"\n", 2)[2]) == 8 * (6 + 6 * 2 * 64)
    again = gk.lame_eigenbasis(g, 6, 1.0, 0.25)
    assert np.array_equal(again.modes, b.modes) and np.array_equal(again.eigenvalues, b.eigenvalues)
    other = dm.build_grid(2, (1.0, 1.0), (8, 8))
    assert gk.cache_path(other, 6, 1.0, 0.25) != files[0]


def test_project_reconstruct(basis16):
    b = basis16
    e3 = gk.project(b, b.mode(3))
    assert np.max(np.abs(e3 - np.eye(b.n)[3])) <= 1e-12
    c = np.random.default_rng(0).standard_normal(b.n)
    assert np.max(np.abs(gk.project(b, gk.reconstruct(b, c)) - c)) <= 1e-12
    w = np.random.default_rng(1).standard_normal((2, 16, 16))
    resid = w - gk.reconstruct(b, gk.project(b, VectorField(b.grid, w, D))).values
    assert np.max(np.abs(gk.project(b, VectorField(b.grid, resid, D)))) <= 1e-10
    full, part = VectorField(b.grid, w, D), gk.reconstruct(b, gk.project(b, VectorField(b.grid, w, D)))
    assert dm.norm(part) <= dm.norm(full) + 1e-12
    with pytest.raises(GridMismatch):
        gk.project(b, VectorField(dm.build_grid(2, (1, 1), (8, 8)), np.zeros((2, 8, 8)), D))


def test_mass_operator_constant_density(basis16):
    g = basis16.grid
    for value in (1.0, 2.0):
        M = gk.mass_operator(basis16, ScalarField(g, np.full(g.counts, value)))
        assert np.max(np.abs(M.matrix - value * np.eye(16))) <= 1e-10
    with pytest.raises(NonPositiveDensity):
        gk.mass_operator(basis16, ScalarField(g, np.zeros(g.counts)))


def test_mass_operator_spectrum_random(basis16):
    r = np.random.default_rng(5)
    g = basis16.grid
    for _ in range(10):
        rho = ScalarField(g, r.uniform(0.5, 2.0, g.counts))
        M = gk.mass_operator(basis16, rho)
        assert np.max(np.abs(M.matrix - M.matrix.T)) <= 1e-12
        ev = np.linalg.eigvalsh(M.matrix)
        assert ev[0] >= rho.values.min() - 1e-10 and ev[-1] <= rho.values.max() + 1e-10
        assert M.eig_min == pytest.approx(ev[0]) and M.eig_max == pytest.approx(ev[-1])


PHYS = PhysParams(1.0, 0.5, 0.8, 1.2, 1.1, 1.6)
REG = RegParams.for_phys(PHYS, 0.02, 0.003, 8.0, 8)


def test_rhs_vanishes_at_equilibrium():
    g = dm.build_grid(2, (1, 1), (8, 8))
    d = np.zeros((2, 8, 8))
    d[1] = 1
    rhs = gk.assemble_rhs(
        ScalarField(g, np.full(g.counts, 1.3)), VectorField(g, np.zeros((2, 8, 8)), D), VectorField(g, d, N), PHYS, REG
    )
    assert np.all(rhs.values == 0.0)


def test_stress_of_planar_director_is_phase_dyad():
    r = np.random.default_rng(2)
    phi = r.standard_normal((6, 6))
    gphi = r.standard_normal((2, 6, 6))
    # exact chain rule: grad d_1 = cos(phi) grad phi, grad d_2 = -sin(phi) grad phi
    grad_d = np.stack([np.cos(phi) * gphi, -np.sin(phi) * gphi], axis=1)
    S = gk.director_stress_tensor(grad_d)
    dyad = np.einsum("i...,j...->ij...", gphi, gphi)
    half = 0.5 * np.sum(gphi**2, axis=0)
    expected = dyad - np.eye(2)[:, :, None, None] * half
    assert np.max(np.abs(S - expected)) <= 1e-12


def _g(a, i, j, sx, sy):
    n0, n1 = a.shape
    s = 1.0
    if i < 0:
        i, s = 0, s * sx
    if i >= n0:
        i, s = n0 - 1, s * sx
    if j < 0:
        j, s = 0, s * sy
    if j >= n1:
        j, s = n1 - 1, s * sy
    return s * a[i, j]


def _cd(a, axis, h, sx, sy):
    out = np.zeros_like(a)
    for i in range(a.shape[0]):
        for j in range(a.shape[1]):
            if axis == 0:
                out[i, j] = (_g(a, i + 1, j, sx, sy) - _g(a, i - 1, j, sx, sy)) / (2 * h)
            else:
                out[i, j] = (_g(a, i, j + 1, sx, sy) - _g(a, i, j - 1, sx, sy)) / (2 * h)
    return out


def _sd(a, axis, h, sx, sy):
    out = np.zeros_like(a)
    for i in range(a.shape[0]):
        for j in range(a.shape[1]):
            di, dj = (1, 0) if axis == 0 else (0, 1)
            out[i, j] = (_g(a, i + di, j + dj, sx, sy) - 2 * a[i, j] + _g(a, i - di, j - dj, sx, sy)) / h**2
    return out


def test_rhs_terms_against_loop_enumeration():
    g = dm.build_grid(2, (1.0, 1.3), (6, 6))
    h = g.spacing
    r = np.random.default_rng(9)
    rho = r.uniform(0.7, 1.4, g.counts)
    v = 0.3 * r.standard_normal((2, 6, 6))
    phi = 0.4 * r.standard_normal((6, 6))
    d = np.stack([np.sin(phi), np.cos(phi)])
    terms = gk.rhs_terms(ScalarField(g, rho), VectorField(g, v, D), VectorField(g, d, N), PHYS, REG)
    mu, lam, nu = PHYS.mu, PHYS.lam, PHYS.nu
    E, O = 1.0, -1.0
    div = sum(_cd(v[k], k, h[k], O, O) for k in range(2))
    gd = [[_cd(d[c], ax, h[ax], E, E) for c in range(2)] for ax in range(2)]
    grad2 = sum(gd[ax][c] ** 2 for ax in range(2) for c in range(2))
    for i in range(2):
        visc = mu * sum(_sd(v[i], k, h[k], O, O) for k in range(2)) + (mu + lam) * _cd(div, i, h[i], E, E)
        pres = -PHYS.A * _cd(rho**PHYS.gamma, i, h[i], E, E)
        dpres = -REG.delta * _cd(rho**REG.beta, i, h[i], E, E)
        art = -REG.eps * sum(_cd(rho, k, h[k], E, E) * _cd(v[i], k, h[k], O, O) for k in range(2))
        conv = -sum(_cd(rho * v[i] * v[j], j, h[j], E, E) for j in range(2))
        stress = 0.0
        for j in range(2):
            S = gd[i][0] * gd[j][0] + gd[i][1] * gd[j][1] - (0.5 * grad2 if i == j else 0.0)
            sign = E if i == j else O
            stress = stress - nu * _cd(S, j, h[j], *((sign, E) if j == 0 else (E, sign)))
        for name, ref in [
            ("viscous", visc),
            ("pressure", pres),
            ("delta_pressure", dpres),
            ("artificial_viscosity", art),
            ("convection", conv),
            ("director_stress", stress),
        ]:
            assert np.max(np.abs(terms[name][i] - ref)) <= 1e-12 * max(1.0, np.abs(ref).max()), name


def test_projected_viscous_force_is_minus_eigenvalue(basis16):
    b = basis16
    c = np.random.default_rng(4).standard_normal(b.n)
    v = gk.reconstruct(b, c)
    g = b.grid
    phys = PhysParams(b.mu, b.lam, 1.0, 1.0, 1.0, 1.4)
    terms = gk.rhs_terms(ScalarField(g, np.ones(g.counts)), v, VectorField(g, np.ones((2, 16, 16)), N), phys, REG)
    proj = gk.project(b, VectorField(g, terms["viscous"], D))
    assert np.max(np.abs(proj + b.eigenvalues * c)) <= 1e-8 * b.eigenvalues.max()


def test_momentum_update_examples(basis16):
    b = basis16
    g = b.grid
    r = np.random.default_rng(6)
    rho = ScalarField(g, r.uniform(0.8, 1.2, g.counts))
    M = gk.mass_operator(b, rho)
    c = r.standard_normal(b.n)
    zero = VectorField(g, np.zeros((2, 16, 16)), D)
    assert np.max(np.abs(gk.momentum_update(M, M, c, b, zero, 0.1) - c)) <= 1e-12
    I = gk.mass_operator(b, ScalarField(g, np.ones(g.counts)))
    w = VectorField(g, r.standard_normal((2, 16, 16)), D)
    assert np.max(np.abs(gk.momentum_update(I, I, c, b, w, 0.1) - (c + 0.1 * gk.project(b, w)))) <= 1e-12
    # rhs = -grad p: the update adds exactly the projected gradient
    x, y = g.mesh()
    p = ScalarField(g, np.cos(np.pi * x) * np.sin(2 * y))
    grad_force = VectorField(g, -dm.gradient(p).values, D)
    out = gk.momentum_update(I, I, np.zeros(b.n), b, grad_force, 1.0)
    assert np.max(np.abs(out - gk.project(b, grad_force))) <= 1e-12
    bad = gk.MassOperator(-np.eye(b.n), -1.0, -1.0)
    with pytest.raises(SingularMass):
        gk.momentum_update(bad, I, c, b, zero, 0.1)


def test_linear_drag_recurrence(basis16):
    b = basis16
    g = b.grid
    rho_val, k, dt = 1.7, 3.0, 0.05
    M = gk.mass_operator(b, ScalarField(g, np.full(g.counts, rho_val)))
    c = np.random.default_rng(8).standard_normal(b.n)
    c0 = c.copy()
    steps = 5
    for _ in range(steps):
        it = c.copy()
        for _ in range(200):  # fixed point of the drag-implicit update
            drag = VectorField(g, -k * gk.reconstruct(b, it).values, D)
            nxt = gk.momentum_update(M, M, c, b, drag, dt)
            if np.linalg.norm(nxt - it) < 1e-15:
                break
            it = nxt
        c = nxt
    factor = (1 + dt * k / rho_val) ** (-steps)
    assert np.max(np.abs(c - factor * c0)) <= 1e-12 * np.abs(c0).max()


# --- coupled step -----------------------------------------------------------


def smoke_like(counts=(24, 24), n=16, amp_v=0.5):
    g = dm.build_grid(2, (1.0, 1.0), counts)
    phys = PhysParams(1.0, 0.0, 1.0, 1.0, 1.0, 1.4)
    reg = RegParams.for_phys(phys, 1e-2, 1e-3, 8.0, n)
    b = gk.lame_eigenbasis(g, n, 1.0, 0.0)
    data = make_initial_data(
        g,
        "1 + 0.1*cos(pi*x)*cos(pi*y)",
        [f"{amp_v}*sin(pi*x)**2*sin(2*pi*y)", f"-{amp_v}*sin(2*pi*x)*sin(pi*y)**2"],
        "0.3*cos(pi*x)*cos(pi*y)",
        0.05,
    )
    return gk.initial_state(data, b), b, phys, reg


def test_equilibrium_is_fixed_in_one_sweep():
    g = dm.build_grid(2, (1, 1), (12, 12))
    phys = PhysParams(1.0, 0.0, 1.0, 1.0, 1.0, 1.4)
    reg = RegParams.for_phys(phys, 1e-2, 1e-3, 8.0, 8)
    b = gk.lame_eigenbasis(g, 8, 1.0, 0.0)
    data = make_initial_data(g, 1.0, 0.0, 0.0, 0.05)
    s = gk.initial_state(data, b)
    log = gk.PicardLog()
    out = gk.coupled_step(s, b, phys, reg, 1e-3, log=log)
    assert log.sweeps == 1 and log.converged
    assert np.max(np.abs(out.rho.values - 1.0)) <= 1e-12
    assert np.max(np.abs(out.v.values)) <= 1e-12
    assert np.max(np.abs(out.d.values - s.d.values)) <= 1e-12
    assert out.t == pytest.approx(1e-3)


def test_contraction_ratio_scales_with_dt():
    s, b, phys, reg = smoke_like()
    thr = gk.picard_dt_threshold(b, s.rho)
    rates = []
    for dt in (0.4 * thr, 0.2 * thr):
        log = gk.PicardLog()
        gk.coupled_step(s, b, phys, reg, dt, log=log)
        assert log.converged and max(log.ratios) < 1
        rates.append(log.ratios[-1])
    assert rates[1] / rates[0] == pytest.approx(0.5, rel=0.5)


def test_oversized_dt_diverges_then_halving_succeeds():
    s, b, phys, reg = smoke_like()
    thr = gk.picard_dt_threshold(b, s.rho)
    log = gk.PicardLog()
    with pytest.raises(PicardDiverged) as info:
        gk.coupled_step(s, b, phys, reg, 1.5 * thr, log=log)
    assert info.value.ratios[-1] >= 1
    out = gk.coupled_step(s, b, phys, reg, 0.75 * thr)
    assert out.t == pytest.approx(0.75 * thr)


def test_coupled_step_is_bitwise_deterministic():
    s, b, phys, reg = smoke_like(counts=(16, 16), n=8)
    a = gk.coupled_step(s, b, phys, reg, 5e-4)
    c = gk.coupled_step(s, b, phys, reg, 5e-4)
    for x, y in [(a.rho.values, c.rho.values), (a.v.values, c.v.values), (a.d.values, c.d.values), (a.c, c.c)]:
        assert np.array_equal(x, y)


def test_velocity_stays_in_span():
    s, b, phys, reg = smoke_like(counts=(16, 16), n=8)
    out = gk.coupled_step(s, b, phys, reg, 5e-4)
    diff = out.v.values - gk.reconstruct(b, out.c).values
    assert np.linalg.norm(diff) <= 1e-12 * np.linalg.norm(out.v.values)
