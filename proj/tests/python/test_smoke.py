import numpy as np
import pytest

import wbstab


def test_biped_model():
    m = wbstab.builtin_biped()
    assert m.total_mass == pytest.approx(70.0)
    assert m.num_velocities == 18
    assert len(m.joint_names) == m.num_actuated == 12
    assert len(m.contact_names) == 2


def test_mass_matrix_symmetric_positive():
    m = wbstab.builtin_biped()
    q = wbstab.default_stance(m)
    H = wbstab.mass_matrix(m, q)
    assert H.shape == (18, 18)
    np.testing.assert_allclose(H, H.T, atol=1e-12)
    assert np.linalg.eigvalsh(H).min() > 0.0


def test_forward_dynamics_inverts_mass_matrix():
    m = wbstab.builtin_biped()
    q = wbstab.default_stance(m)
    rng = np.random.default_rng(1)
    q.joint_rates = rng.normal(scale=0.3, size=12)
    tau = rng.normal(scale=5.0, size=12)
    qdd = wbstab.forward_dynamics(m, q, tau)
    lhs = wbstab.mass_matrix(m, q) @ qdd + wbstab.bias_forces(m, q)
    np.testing.assert_allclose(lhs, np.concatenate([np.zeros(6), tau]), atol=1e-8)


def test_com_jacobian_shapes():
    m = wbstab.builtin_biped()
    q = wbstab.default_stance(m)
    J = wbstab.frame_jacobian(m, q, m.contact_names[0])
    assert J.shape == (6, 18)
    assert 0.5 < wbstab.com_position(m, q)[2] < 1.2


def test_solve_qp_box():
    # min (x-1)^2 + (y-2)^2, x + y = 1, y <= 0.2
    res = wbstab.solve_qp(2 * np.eye(2), np.array([-2.0, -4.0]),
                          A=np.array([[1.0, 1.0]]), b=np.array([1.0]),
                          upper=np.array([np.inf, 0.2]))
    assert res["status"] == "optimal"
    np.testing.assert_allclose(res["x"], [0.8, 0.2], atol=1e-9)
    assert res["kkt_residual"] <= 1e-8


def test_solve_qp_bad_dimensions():
    with pytest.raises(wbstab.ValidationError):
        wbstab.solve_qp(np.eye(2), np.zeros(3))


def test_config_parse_errors():
    c = wbstab.parse_config("stabilizer=zmp\nattitude_rate_deg=20")
    assert "attitude_rate_deg=20" in c.serialize()
    with pytest.raises(wbstab.ParseError):
        wbstab.parse_config("bogus=1")
    with pytest.raises(wbstab.Error):
        wbstab.parse_config("duration=-1")


def test_short_run_deterministic():
    c = wbstab.parse_config("scenario=coupled duration=0.2 settle_time=0.2 seed=3 perturbation=0.01")
    s1, csv1 = wbstab.run(c, csv=True)
    s2, csv2 = wbstab.run(c, csv=True)
    assert s1["outcome"] == "balanced"
    assert s1["ticks"] == 200
    assert csv1 == csv2
    assert wbstab.validate_csv(csv1) == ""


def test_sweep_order():
    c = wbstab.parse_config("stabilizer=none duration=0.1 settle_time=0.1")
    out = wbstab.sweep(c, "duration", ["0.05", "0.1"], workers=1)
    assert [s["ticks"] for s in out] == [50, 100]
