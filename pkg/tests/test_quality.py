"""Grasp-quality metric against independent oracles and its own invariants."""

import numpy as np
import pytest

from pingrip import oracle, quality
from pingrip.geom import Pose, quat_from_axis_angle
from pingrip.quality import WrenchSet, force_closure, grasp_wrench_set, q1
from pingrip.simcore import Contact


def _boxed_cube(mu=0.2):
    """4+4 symmetric contacts on opposite cube faces; a closure grasp."""
    triples = []
    for sx in (-1.0, 1.0):
        for y in (-0.015, 0.015):
            for z in (-0.015, 0.015):
                triples.append(([sx * 0.025, y, z], [-sx, 0.0, 0.0], mu))
    return triples


def _random_contacts(rng, m, mu):
    """Random inward-leaning contacts on a sphere around the origin."""
    u = rng.standard_normal((m, 3))
    u /= np.linalg.norm(u, axis=1, keepdims=True)
    n = -u + 0.3 * rng.standard_normal((m, 3))
    n /= np.linalg.norm(n, axis=1, keepdims=True)
    return [(0.03 * ui, ni, mu) for ui, ni in zip(u, n)]


def test_empty_contacts_q1_zero():
    ws = WrenchSet.build([], np.zeros(3), 0.05)
    assert q1(ws) == 0.0
    assert not force_closure(ws)


def test_wrench_counts_and_unit_forces():
    ws = WrenchSet.build(_boxed_cube(), np.zeros(3), 0.05, k=8)
    assert ws.wrenches.shape == (8 * 8, 6)
    np.testing.assert_allclose(np.linalg.norm(ws.wrenches[:, :3], axis=1),
                               1.0, atol=1e-12)


def test_single_contact_not_closure():
    ws = WrenchSet.build([([0.02, 0.003, 0.01], [-1.0, 0.0, 0.0], 0.4)],
                         np.zeros(3), 0.05)
    res = force_closure(ws)
    assert not res
    assert q1(ws) == 0.0


def test_antipodal_pair_not_closure():
    # both contact points sit on the x axis: no wrench has any x torque, the
    # hull is flat in 6-D and the pair cannot resist a twist about that axis
    triples = [([-0.025, 0, 0], [1.0, 0, 0], 0.2),
               ([0.025, 0, 0], [-1.0, 0, 0], 0.2)]
    ws = WrenchSet.build(triples, np.zeros(3), 0.05)
    res = force_closure(ws)
    assert not res
    assert res.degenerate
    assert q1(ws) == 0.0


def test_boxed_cube_closure():
    ws = WrenchSet.build(_boxed_cube(), np.zeros(3), 0.05)
    res = force_closure(ws)
    assert res
    assert q1(ws) > 0.0


def test_closure_lp_margin_matches_support_oracle():
    # the inclusion-LP margin (cross-polytope radius) equals the exact
    # face-LP support minimization computed the other way around
    ws = WrenchSet.build(_boxed_cube(), np.zeros(3), 0.05)
    res = force_closure(ws)
    ref = oracle.support_min_l1_exact(ws.wrenches)
    assert abs(res.margin - ref) < 1e-8


def test_symmetric_grasp_matches_dense_oracle():
    triples = _boxed_cube()
    pairs = [(p, n) for p, n, _ in triples]
    v = q1(WrenchSet.build(triples, np.zeros(3), 0.05, k=8))
    d = oracle.dense_q1(pairs, 0.2, k=8, origin=np.zeros(3), scale=0.05)
    assert abs(v - d) <= 1e-6


def test_q1_matches_dense_oracle_random_closures():
    rng = np.random.default_rng(42)
    n_closed = n_try = 0
    while n_closed < 30 and n_try < 200:
        n_try += 1
        triples = _random_contacts(rng, int(rng.integers(3, 9)),
                                   float(rng.uniform(0.3, 0.9)))
        v = q1(WrenchSet.build(triples, np.zeros(3), 0.06, k=8))
        if v <= 1e-9:
            continue
        n_closed += 1
        pairs = [(p, n) for p, n, _ in triples]
        d = oracle.dense_q1(pairs, triples[0][2], k=8, origin=np.zeros(3),
                            scale=0.06)
        assert abs(v - d) / d < 0.05
    assert n_closed == 30


def test_q1_positive_iff_closure():
    rng = np.random.default_rng(3)
    seen_closed = seen_open = 0
    for _ in range(40):
        triples = _random_contacts(rng, int(rng.integers(2, 7)),
                                   float(rng.uniform(0.1, 0.8)))
        ws = WrenchSet.build(triples, np.zeros(3), 0.06)
        closed = bool(force_closure(ws))
        assert (q1(ws) > 1e-9) == closed
        seen_closed += closed
        seen_open += not closed
    assert seen_closed > 0 and seen_open > 0


def test_rotation_invariance():
    rng = np.random.default_rng(11)
    triples = _random_contacts(rng, 6, 0.5)
    base = q1(WrenchSet.build(triples, np.zeros(3), 0.06))
    assert base > 0.0
    for _ in range(20):
        axis = rng.standard_normal(3)
        axis /= np.linalg.norm(axis)
        rot = Pose(np.zeros(3), quat_from_axis_angle(axis, rng.uniform(0, 7)))
        spun = [(rot.apply(np.asarray(p)), rot.rotate(np.asarray(n)), mu)
                for p, n, mu in triples]
        assert abs(q1(WrenchSet.build(spun, np.zeros(3), 0.06)) - base) <= 1e-9


def test_add_contact_monotonicity():
    rng = np.random.default_rng(7)
    for _ in range(500):
        mu = float(rng.uniform(0.2, 0.7))
        triples = _random_contacts(rng, int(rng.integers(3, 9)), mu)
        v0 = q1(WrenchSet.build(triples, np.zeros(3), 0.06))
        extra = _random_contacts(rng, 1, mu)
        v1 = q1(WrenchSet.build(triples + extra, np.zeros(3), 0.06))
        assert v1 >= v0 - 1e-12


def test_raise_mu_monotonicity():
    rng = np.random.default_rng(8)
    for _ in range(500):
        mu = float(rng.uniform(0.2, 0.7))
        triples = _random_contacts(rng, int(rng.integers(3, 9)), mu)
        v0 = q1(WrenchSet.build(triples, np.zeros(3), 0.06))
        mu2 = mu + float(rng.uniform(0.01, 0.3))
        bumped = [(p, n, mu2) for p, n, _ in triples]
        v1 = q1(WrenchSet.build(bumped, np.zeros(3), 0.06))
        assert v1 >= v0 - 1e-12


def test_k_refinement_monotone():
    # k=8 azimuths are a subset of k=16 at the same anchor, so the hull nests
    triples = _boxed_cube()
    v8 = q1(WrenchSet.build(triples, np.zeros(3), 0.05, k=8))
    v16 = q1(WrenchSet.build(triples, np.zeros(3), 0.05, k=16))
    assert v16 >= v8 - 1e-12


def test_scale_invariance_under_uniform_growth():
    # doubling the geometry and the characteristic length leaves q1 unchanged
    triples = _boxed_cube()
    grown = [(2.0 * np.asarray(p), n, mu) for p, n, mu in triples]
    v1 = q1(WrenchSet.build(triples, np.zeros(3), 0.05))
    v2 = q1(WrenchSet.build(grown, np.zeros(3), 0.10))
    assert abs(v1 - v2) < 1e-12


def test_linf_variant_at_least_l1():
    ws = WrenchSet.build(_boxed_cube(), np.zeros(3), 0.05)
    assert q1(ws, variant="linf") >= q1(ws, variant="l1") - 1e-9


def test_grasp_wrench_set_excludes_ground():
    contacts = [
        Contact(np.array([-0.025, 0.0, 0.01]), np.array([1.0, 0, 0]), 1e-4,
                "pin", 5, 0.3),
        Contact(np.array([0.031, 0.0, 0.02]), np.array([-1.0, 0, 0]), 1e-4,
                "plate", 1, 0.1),
        Contact(np.array([0.01, 0.01, 0.0]), np.array([0.0, 0, 1.0]), 1e-4,
                "ground", 3, 0.5),
    ]
    ws = grasp_wrench_set(contacts, 0.4, np.zeros(3), 0.05)
    assert len(ws.contacts) == 2
    assert ws.wrenches.shape == (16, 6)


def test_json_roundtrip():
    ws = WrenchSet.build(_boxed_cube(), np.zeros(3), 0.05)
    back = WrenchSet.from_json(ws.to_json())
    np.testing.assert_array_equal(back.wrenches, ws.wrenches)
    assert q1(back) == q1(ws)


def test_bad_inputs():
    with pytest.raises(ValueError):
        WrenchSet.build([], np.zeros(3), 0.05, k=2)
    with pytest.raises(ValueError):
        WrenchSet.build([], np.zeros(3), 0.0)
    with pytest.raises(ValueError):
        q1(WrenchSet.build(_boxed_cube(), np.zeros(3), 0.05), variant="l7")
