import copy

import numpy as np
import pytest

from lelab import diagnostics as dg
from lelab.errors import InsufficientResolution, PoleTooCloseToBoundary
from lelab.radial import radial_shoot
from lelab.solver import solve_single


def test_energy_quantities(rec_p3):
    beta, p_int, gap = dg.energy_quantities(rec_p3)
    assert beta > 0 and p_int > 0
    assert gap / beta <= 1e-3
    # oracle value of beta = p * dirichlet energy on the unit disk
    sol = radial_shoot(3.0)
    assert beta == pytest.approx(3.0 * sol.dirichlet_energy(), rel=0.01)


def test_energy_zero_field(rec_p3):
    rec = copy.copy(rec_p3)
    rec.u = rec_p3.u.copy()
    rec.u.values[:] = 0.0
    assert dg.energy_quantities(rec) == (0.0, 0.0, 0.0)


def test_pohozaev_residual(disk, rec_p3):
    lhs, rhs = dg.pohozaev_sides(rec_p3)
    sol = radial_shoot(3.0)
    assert lhs == pytest.approx(2.0 * np.pi * sol.du_boundary**2, rel=0.01)
    _, rel = dg.pohozaev_residual(rec_p3, disk)
    assert rel <= 0.01


def test_pohozaev_halving_rate(disk):
    rels = []
    for h in (0.1, 0.05):
        rec = solve_single(disk, 5.0, h)
        rels.append(dg.pohozaev_residual(rec, disk)[1])
    assert rels[0] / rels[1] >= 1.7


def test_eigen_identity(rec_p3):
    assert dg.eigen_identity_gap(rec_p3, _eig_for(rec_p3)) <= 1e-2


def _eig_for(rec):
    from lelab import fem
    from lelab.numerics import eliminate_dirichlet, principal_eigenpair
    from lelab.solver import assemble_K
    mesh = rec.u.mesh
    Ke = eliminate_dirichlet(assemble_K(mesh), mesh.boundary_mask)
    Me = eliminate_dirichlet(dg._mass_for(mesh), mesh.boundary_mask)
    return principal_eigenpair(Ke, Me, mesh.boundary_mask,
                               fem.lumped_mass(mesh))


def test_flux_identity(rec_p3):
    vol, flux = dg.flux_sides(rec_p3)
    assert abs(vol - flux) / vol <= 1e-3
    assert dg.mass_bound(rec_p3) == pytest.approx(vol, rel=1e-12)


def test_green_representation_centered_disk(disk, rec_p3):
    gap, (g_min, g_max) = dg.green_representation_gap(rec_p3, disk)
    assert gap <= 0.02
    # corrector is O(offset) when the pole sits near the disk center:
    # boundary data -log|y - x0| / 2 pi deviates from 0 by ~|x0| / 2 pi
    offset = np.hypot(*rec_p3.peak_point)
    cap = 1.5 * offset / (2.0 * np.pi) + 1e-4
    assert -cap <= g_min and g_max <= cap


def test_green_pole_too_close(disk, rec_p3):
    rec = copy.copy(rec_p3)
    rec.peak_point = np.array([0.98, 0.0])
    with pytest.raises(PoleTooCloseToBoundary):
        dg.green_sides(rec, disk)


def test_v_transform(rec_p10):
    v_min, v_peak, q = dg.v_transform_report(rec_p10)
    assert v_peak == 0.0
    assert v_min >= -1e-12
    assert 0.0 < q < 10.0


def test_bubble_distance_requires_large_p(rec_p3):
    with pytest.raises(ValueError):
        dg.bubble_distance(rec_p3)


def test_bubble_distance_insufficient_resolution(disk):
    rec = solve_single(disk, 10.0, 0.1, peak_refinement=False)
    with pytest.raises(InsufficientResolution):
        dg.bubble_distance(rec)


def test_bubble_distance_radial_trend():
    d20 = dg.bubble_distance_radial(radial_shoot(20.0))
    d80 = dg.bubble_distance_radial(radial_shoot(80.0))
    assert d80 < d20 < 0.1


def test_liouville_profile():
    assert dg.liouville_profile(0.0) == 0.0
    # -Delta U = e^U radially: U'' + U'/r = -e^U, checked by differences
    r = np.linspace(0.5, 4.0, 30)
    eps = 1e-5
    U = dg.liouville_profile
    lap = ((U(r + eps) - 2.0 * U(r) + U(r - eps)) / eps**2
           + (U(r + eps) - U(r - eps)) / (2.0 * eps * r))
    assert np.allclose(-lap, np.exp(U(r)), atol=1e-5)
    # total Liouville mass: int e^U over the plane equals 8 pi
    rr = np.linspace(0.0, 2000.0, 2_000_001)
    mass = np.trapezoid(2.0 * np.pi * rr * np.exp(U(rr)), rr)
    assert mass == pytest.approx(8.0 * np.pi, rel=1e-3)


def test_concentration_single_bubble(rec_p10):
    cands, beta_pred = dg.concentration_candidates(rec_p10)
    assert len(cands) == 1
    x, y, m1 = cands[0]
    assert m1 == rec_p10.max_value
    assert np.hypot(x, y) <= 2.0 * rec_p10.h
    assert beta_pred == pytest.approx(8.0 * np.pi * m1**2, rel=1e-12)


def test_peak_clearance(disk, rec_p3):
    c = dg.peak_clearance(rec_p3, disk)
    assert c == pytest.approx(1.0, abs=2.0 * rec_p3.h)
    assert c >= 2.0 * rec_p3.h


def test_compute_bundle_p10(disk, rec_p10):
    b = dg.compute_bundle(rec_p10, disk)
    assert b.energy_gap_rel <= 0.01
    assert b.pohozaev_rel <= 0.05
    assert b.eigen_rel <= 0.05
    assert b.flux_rel <= 0.10
    assert b.green_rel is not None
    assert b.bubble_dist is not None
    assert b.failures == {}
    assert b.beta_pred == pytest.approx(8.0 * np.pi * b.M**2, rel=1e-12)
