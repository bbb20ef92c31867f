import numpy as np
import pytest

from lagrass import core
from lagrass.errors import NotInChart, NotTransversal, SearchExhausted


def test_standard_space_form():
    sp = core.standard_space(2)
    u = np.array([1.0, 2.0, 0.0, 0.0])   # (p, q) stacking, p first
    v = np.array([0.0, 0.0, 3.0, 4.0])
    assert sp.form @ v @ u == pytest.approx(11.0)
    assert u @ sp.form @ u == 0.0


def test_standard_space_rejects_degenerate():
    with pytest.raises(ValueError):
        core.SymplecticSpace(n=1, form=np.zeros((2, 2)))
    with pytest.raises(ValueError):
        core.SymplecticSpace(n=1, form=np.eye(2))


def test_make_frame_orthonormalizes():
    sp = core.standard_space(2)
    cols = np.vstack([np.eye(2) * 3.0, np.zeros((2, 2))])
    fr = core.make_frame(sp, cols)
    assert np.allclose(fr.columns.T @ fr.columns, np.eye(2), atol=1e-12)
    assert core.same_subspace(fr, core.vertical_frame(sp))


def test_make_frame_rejects_non_lagrangian():
    sp = core.standard_space(2)
    s = np.array([[0.0, 1.0], [0.0, 0.0]])   # asymmetric graph matrix
    cols = np.vstack([np.eye(2), s])
    with pytest.raises(ValueError):
        core.make_frame(sp, cols)


def test_make_frame_rejects_rank_deficient():
    sp = core.standard_space(2)
    cols = np.zeros((4, 2))
    cols[0, 0] = 1.0
    cols[0, 1] = 1.0
    with pytest.raises(ValueError):
        core.make_frame(sp, cols)


def test_subspace_gap_extremes():
    sp = core.standard_space(3)
    v = core.vertical_frame(sp)
    h = core.horizontal_frame(sp)
    assert core.subspace_gap(v, v) == pytest.approx(0.0, abs=1e-12)
    assert core.subspace_gap(v, h) == pytest.approx(1.0)
    assert core.intersection_dim(v, h) == 0
    assert core.intersection_dim(v, v) == 3


def test_projector_frozen_example():
    """n=1: projector onto graph(1) along graph(0) is [[0,1],[0,1]]."""
    sp = core.standard_space(1)
    v0 = core.make_frame(sp, np.array([[1.0], [0.0]]))
    v1 = core.make_frame(sp, np.array([[1.0], [1.0]]))
    p = core.projector(v0, v1)
    assert np.allclose(p, np.array([[0.0, 1.0], [0.0, 1.0]]), atol=1e-12)


def test_projector_pair_identities():
    rng = np.random.default_rng(7)
    sp = core.standard_space(3)
    sigma = sp.form
    for _ in range(25):
        v0 = core.random_lagrangian(sp, rng)
        v1 = core.random_lagrangian(sp, rng)
        if not core.is_transversal(v0, v1):
            continue
        p01 = core.projector(v0, v1)
        p10 = core.projector(v1, v0)
        assert np.allclose(p01 @ p01, p01, atol=1e-9)
        assert np.allclose(p01 + p10, np.eye(6), atol=1e-9)
        assert np.allclose(p01 @ v1.columns, v1.columns, atol=1e-9)
        assert np.allclose(p01 @ v0.columns, 0.0, atol=1e-9)
        # the complementary projectors are sigma-adjoint to each other
        assert np.allclose(p01.T @ sigma, sigma @ p10, atol=1e-9)


def test_projector_requires_transversality():
    sp = core.standard_space(2)
    v = core.vertical_frame(sp)
    with pytest.raises(NotTransversal):
        core.projector(v, v)


def test_darboux_chart_is_symplectic_basis():
    rng = np.random.default_rng(11)
    sp = core.standard_space(2)
    jstd = core.standard_space(2).form
    for _ in range(10):
        pi = core.random_lagrangian(sp, rng)
        delta = core.transversal_complement(pi)
        chart = core.darboux_chart(pi, delta)
        assert np.allclose(chart.basis.T @ sp.form @ chart.basis, jstd,
                           atol=1e-9)
        assert np.allclose(chart.basis_inv @ chart.basis, np.eye(4),
                           atol=1e-9)


def test_darboux_chart_rejects_intersecting_pair():
    sp = core.standard_space(2)
    v = core.vertical_frame(sp)
    with pytest.raises(NotTransversal):
        core.darboux_chart(v, v)


def test_chart_roundtrip():
    rng = np.random.default_rng(3)
    sp = core.standard_space(3)
    chart = core.standard_chart(sp)
    for _ in range(20):
        s = rng.standard_normal((3, 3))
        s = s + s.T
        fr = core.make_frame(sp, np.vstack([np.eye(3), s]))
        rep = core.chart_coords(fr, chart)
        assert np.allclose(rep.S, s, atol=1e-8)
        back = core.frame_from_chart(rep)
        assert core.same_subspace(fr, back)


def test_chart_roundtrip_random_charts():
    rng = np.random.default_rng(5)
    sp = core.standard_space(2)
    for _ in range(20):
        pi = core.random_lagrangian(sp, rng)
        delta = core.transversal_complement(pi)
        chart = core.darboux_chart(pi, delta)
        fr = core.random_lagrangian(sp, rng)
        if not core.is_transversal(fr, delta):
            continue
        rep = core.chart_coords(fr, chart)
        back = core.frame_from_chart(rep)
        assert core.same_subspace(fr, back)
        # ker S picks out the intersection with the chart origin Pi
        assert core.inertia(rep.S).zero == core.intersection_dim(fr, pi)


def test_graph_coords_flags_chart_miss():
    sp = core.standard_space(2)
    chart = core.standard_chart(sp)
    h = core.horizontal_frame(sp)
    with pytest.raises(NotInChart):
        core.graph_coords(chart, h.columns)


def test_graph_coords_non_lagrangian_is_asymmetric():
    sp = core.standard_space(2)
    chart = core.standard_chart(sp)
    s = np.array([[0.0, 1.0], [0.0, 0.0]])
    cols = np.vstack([np.eye(2), s])
    got = core.graph_coords(chart, cols)
    assert np.allclose(got, s, atol=1e-12)
    assert np.linalg.norm(got - got.T) > 0.5


def test_inertia_diag():
    q = np.diag([3.0, 0.0, -2.0, -1.0])
    ine = core.inertia(q)
    assert (ine.neg, ine.zero, ine.pos) == (2, 1, 1)
    assert core.inertia(np.zeros((3, 3))).zero == 3
    assert core.inertia(np.zeros((0, 0))).dim == 0


def test_inertia_relative_threshold():
    q = np.diag([1.0, 1e-15])
    ine = core.inertia(q)
    assert (ine.neg, ine.zero, ine.pos) == (0, 1, 1)


def test_transversal_complement_schedule():
    sp = core.standard_space(2)
    v = core.vertical_frame(sp)
    h = core.horizontal_frame(sp)
    # sigma-rotation of the vertical is the horizontal: first candidate
    assert core.same_subspace(core.transversal_complement(v), h)
    # blocking it forces the next candidate, the graph of the identity
    got = core.transversal_complement(v, avoid=[h])
    graph1 = core.make_frame(sp, np.vstack([np.eye(2), np.eye(2)]))
    assert core.same_subspace(got, graph1)
    assert core.is_transversal(got, v)
    assert core.is_transversal(got, h)


def test_transversal_complement_random_inputs():
    rng = np.random.default_rng(19)
    sp = core.standard_space(4)
    for _ in range(30):
        fr = core.random_lagrangian(sp, rng)
        comp = core.transversal_complement(fr)
        assert core.is_transversal(comp, fr)


def test_transversal_complement_exhaustion_is_detectable():
    # the schedule is deterministic, so feeding every candidate back into
    # the avoid list must dry it up after exactly MAX_CANDIDATES rounds
    sp = core.standard_space(1)
    v = core.vertical_frame(sp)
    avoid = []
    for _ in range(core.MAX_CANDIDATES):
        avoid.append(core.transversal_complement(v, avoid=avoid))
    with pytest.raises(SearchExhausted):
        core.transversal_complement(v, avoid=avoid)


def test_random_symplectic_preserves_form():
    rng = np.random.default_rng(23)
    for n in (1, 2, 4):
        sp = core.standard_space(n)
        for _ in range(10):
            t = core.random_symplectic(sp, rng)
            assert core.symplectic_defect(sp, t) < 1e-10


def test_random_lagrangian_is_lagrangian():
    rng = np.random.default_rng(29)
    sp = core.standard_space(3)
    for _ in range(10):
        fr = core.random_lagrangian(sp, rng)
        assert np.linalg.norm(fr.columns.T @ sp.form @ fr.columns) < 1e-9


def test_inertia_invariant_under_congruence():
    """Chart matrices of a fixed pair keep their inertia across charts."""
    rng = np.random.default_rng(31)
    sp = core.standard_space(3)
    s = np.diag([2.0, -1.0, 0.5])
    fr = core.make_frame(sp, np.vstack([np.eye(3), s]))
    base = core.inertia(core.chart_coords(fr, core.standard_chart(sp)).S)
    v = core.vertical_frame(sp)
    for _ in range(10):
        t = core.random_symplectic(sp, rng)
        fr_t = core.make_frame(sp, t @ fr.columns)
        v_t = core.make_frame(sp, t @ v.columns)
        delta = core.transversal_complement(v_t, avoid=[fr_t])
        rep = core.chart_coords(fr_t, core.darboux_chart(v_t, delta))
        got = core.inertia(rep.S)
        assert got.zero == base.zero == 0
        # signature may flip sign with chart orientation but the zero
        # count (intersection with the transported vertical) cannot
        assert got.dim == 3


def test_sym_inv_sqrt():
    rng = np.random.default_rng(37)
    for _ in range(10):
        b = rng.standard_normal((4, 4))
        a = b.T @ b + np.eye(4)
        x = core.sym_inv_sqrt(a)
        assert np.allclose(x @ a @ x, np.eye(4), atol=1e-10)
        assert np.allclose(x, x.T, atol=1e-12)
    with pytest.raises(ValueError):
        core.sym_inv_sqrt(np.diag([1.0, -1.0]))
