import numpy as np
import pytest

from gaugeband.gauge import (
    block_symbols,
    build_unitary,
    coulomb_transform,
    cutoff,
    fourier_eval,
    induced_gauge,
    smoothstep,
)
from gaugeband.lattice import TorusGrid
from gaugeband.potential import PauliPotential, TrigPoly

from _models import lattice_1d, lattice_2d, model_a, model_b


def transition_model():
    """w = (3 sin x, 0.5 sin x, 1): no delta0 frame, cutoff actually transitions."""
    lat = lattice_1d()
    v = TrigPoly(lat, {(0,): 1.0, (1,): -0.5, (-1,): -0.5})
    w1 = TrigPoly(lat, {(1,): -1.5j, (-1,): 1.5j})
    w2 = TrigPoly(lat, {(1,): -0.25j, (-1,): 0.25j})
    w3 = TrigPoly(lat, {(0,): 1.0})
    return PauliPotential(v, (w1, w2, w3))


def tilted_model():
    """w3 < 0 everywhere relevant, so both frame branches are available."""
    lat = lattice_1d()
    v = TrigPoly(lat, {(0,): 1.0, (1,): -0.5, (-1,): -0.5})
    w1 = TrigPoly(lat, {(0,): 1.0, (1,): 0.15, (-1,): 0.15})
    w2 = TrigPoly(lat, {(1,): -0.1j, (-1,): 0.1j})
    w3 = TrigPoly(lat, {(0,): -0.5, (1,): 0.05, (-1,): 0.05})
    return PauliPotential(v, (w1, w2, w3))


def test_smoothstep_profile():
    assert smoothstep(-1.0) == 0.0
    assert smoothstep(0.0) == 0.0
    assert smoothstep(1.0) == 1.0
    assert smoothstep(2.0) == 1.0
    assert abs(smoothstep(0.5) - 0.5) < 1e-15
    u = np.linspace(-0.5, 1.5, 201)
    s = smoothstep(u)
    assert np.all(np.diff(s) >= 0)
    assert np.all((s >= 0) & (s <= 1))


def test_cutoff_plateaus():
    assert cutoff(0.0) == 1.0
    assert cutoff(0.25) == 1.0
    assert cutoff(-0.2) == 1.0
    assert cutoff(0.5) == 0.0
    assert cutoff(0.9) == 0.0
    mid = cutoff(0.3)
    assert 0.0 < mid < 1.0


def test_unitary_model_a_constant():
    fr = build_unitary(model_a(), TorusGrid(lattice_1d(), 64))
    assert fr.branch == "general"
    expected = np.array([[0.0, -1.0], [-1.0, 0.0]])
    assert np.max(np.abs(fr.matrix - expected)) < 1e-14
    assert fr.unitarity_error < 1e-14


def test_gauge_model_a_flat():
    g = induced_gauge(model_a(), TorusGrid(lattice_1d(), 64))
    assert np.max(np.abs(g.a_vec)) < 1e-14
    assert np.max(np.abs(g.r_block)) < 1e-14
    assert g.residual_max < 1e-12
    # potential blocks are the decoupled scalar potentials
    x = g.grid.nodes[:, 0]
    assert np.allclose(g.v_minus, 1.0 - np.cos(x) - 2.0)
    assert np.allclose(g.v_plus, 1.0 - np.cos(x) + 2.0)


def test_gauge_model_b_frozen_values():
    g = induced_gauge(model_b(), TorusGrid(lattice_1d(), 256))
    i0 = g.grid.origin_index
    assert g.frame.branch == "general"
    # frame is real here, so the diagonal gauge potential vanishes
    assert np.max(np.abs(g.frame.matrix.imag)) < 1e-13
    assert np.max(np.abs(g.a11)) < 1e-12
    expected_u0 = np.array([[0.0, -1.0], [-1.0, 0.0]])
    assert np.max(np.abs(g.frame.matrix[i0] - expected_u0)) < 1e-12
    assert abs(g.a21[0][i0] - (-1j / 6.0)) < 1e-12
    assert abs(g.r_block[i0] - 1.0 / 36.0) < 1e-12
    assert g.residual_max < 1e-12
    assert g.formula_error < 1e-10
    assert g.hermiticity_error < 1e-10
    assert g.tail < 1e-12


def test_gauge_invariants_random_frame():
    g = induced_gauge(tilted_model(), TorusGrid(lattice_1d(), 256))
    # A_k Hermitian traceless: real Pauli components, no identity part
    assert np.isrealobj(g.a_vec)
    assert g.hermiticity_error < 1e-10
    assert g.frame.unitarity_error < 1e-13
    assert g.residual_max < 1e-11
    assert np.all(g.r_block >= -1e-14)


def test_transition_frame_needs_resolution():
    pot = transition_model()
    with pytest.raises(ValueError, match="increase P"):
        induced_gauge(pot, TorusGrid(lattice_1d(), 512))
    g = induced_gauge(pot, TorusGrid(lattice_1d(), 4096))
    assert g.frame.branch == "general"
    assert g.tail < 1e-8
    assert g.formula_error < 1e-8
    assert g.residual_max < 1e-7
    assert g.frame.unitarity_error < 1e-12


def test_branch_agreement():
    pot = tilted_model()
    grid = TorusGrid(lattice_1d(), 256)
    g1 = induced_gauge(pot, grid, branch="delta0")
    g2 = induced_gauge(pot, grid, branch="general")
    assert build_unitary(pot, grid).branch == "delta0"
    # gauge-dependent pieces differ, invariants agree
    assert np.max(np.abs(g1.r_block - g2.r_block)) < 1e-8
    assert np.max(np.abs(np.abs(g1.a21) - np.abs(g2.a21))) < 1e-8


def test_delta0_unavailable_for_aligned_spin():
    with pytest.raises(ValueError, match="delta0 frame unavailable"):
        build_unitary(model_a(), TorusGrid(lattice_1d(), 64), branch="delta0")
    with pytest.raises(ValueError, match="unknown branch"):
        build_unitary(model_a(), TorusGrid(lattice_1d(), 64), branch="bogus")


def test_vanishing_spin_rejected():
    lat = lattice_1d()
    v = TrigPoly(lat, {(0,): 1.0})
    w3 = TrigPoly(lat, {(1,): 0.5, (-1,): 0.5})
    pot = PauliPotential(v, (TrigPoly(lat, {}), TrigPoly(lat, {}), w3))
    with pytest.raises(ValueError, match="gap"):
        build_unitary(pot, TorusGrid(lat, 64))


def test_coulomb_transform_1d():
    g = induced_gauge(tilted_model(), TorusGrid(lattice_1d(), 256))
    gc = coulomb_transform(g)
    # 1d divergence free means constant, equal to the mean
    assert gc.a11[0].max() - gc.a11[0].min() < 1e-12
    assert abs(np.mean(g.a11[0]) - gc.a11[0][0]) < 1e-13
    assert np.max(np.abs(np.abs(gc.a21) - np.abs(g.a21))) < 1e-13
    assert np.max(np.abs(gc.r_block - g.r_block)) < 1e-13
    assert gc.psi is not None and np.isrealobj(gc.psi)
    # already divergence free: a second pass is the identity on the gauge
    gc2 = coulomb_transform(gc)
    assert np.max(np.abs(gc2.a11 - gc.a11)) < 1e-13
    assert np.max(np.abs(gc2.a21 - gc.a21)) < 1e-13


def test_coulomb_transform_2d():
    lat = lattice_2d()
    v = TrigPoly(lat, {(0, 0): 2.0, (1, 0): -0.5, (-1, 0): -0.5,
                       (0, 1): -0.5, (0, -1): -0.5})
    w1 = TrigPoly(lat, {(0, 0): 2.0, (1, 0): 0.5, (-1, 0): 0.5})
    w2 = TrigPoly(lat, {(0, 1): -0.15j, (0, -1): 0.15j})
    w3 = TrigPoly(lat, {(0, 1): 0.2, (0, -1): 0.2})
    pot = PauliPotential(v, (w1, w2, w3))
    g = induced_gauge(pot, TorusGrid(lat, 64))
    div0 = sum(g.grid.derivative(g.a11[k], k) for k in range(2))
    assert np.max(np.abs(div0)) > 0.1
    gc = coulomb_transform(g)
    div1 = sum(g.grid.derivative(gc.a11[k], k) for k in range(2))
    assert np.max(np.abs(div1)) < 1e-12
    for k in range(2):
        assert abs(np.mean(g.a11[k]) - np.mean(gc.a11[k])) < 1e-14
        assert np.max(np.abs(np.abs(gc.a21[k]) - np.abs(g.a21[k]))) < 1e-13


def test_block_symbols():
    g = induced_gauge(model_b(), TorusGrid(lattice_1d(), 256))
    lo = block_symbols(g, "lower")
    hi = block_symbols(g, "upper")
    assert lo.label == "lower" and hi.label == "upper"
    assert np.allclose(lo.v, g.v_minus)
    assert np.allclose(hi.v, g.v_plus)
    assert np.allclose(hi.a, -g.a11)
    x = g.grid.nodes[:, 0]
    assert np.allclose(lo.v, 2.0 - 2.0 * np.cos(x) - np.sqrt(5.0 + 4.0 * np.cos(x)))
    with pytest.raises(ValueError, match="unknown block"):
        block_symbols(g, "middle")


def test_fourier_eval():
    g = induced_gauge(model_b(), TorusGrid(lattice_1d(), 256))
    on_nodes = fourier_eval(g.grid, g.a21[0], g.grid.nodes)
    assert np.max(np.abs(on_nodes - g.a21[0])) < 1e-13
    # frozen Taylor value at the well: a21(x) ~ -i x'(rho)/... -> -i/6 at 0
    val = fourier_eval(g.grid, g.a21[0], np.array([[0.0]]))[0]
    assert abs(val - (-1j / 6.0)) < 1e-12
