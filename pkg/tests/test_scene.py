import json
import math

import numpy as np
import pytest

from ledbp.errors import ConfigError, InfeasibleScene
from ledbp.scene import (
    LambertianModel,
    OfficeScene,
    RoomGeometry,
    SceneConfig,
    assemble_problem,
    channel_gain,
    energy_fraction,
    export_scene,
    generate_led_grid,
    illuminance,
    place_uds,
)


def test_room_validation():
    with pytest.raises(ValueError):
        RoomGeometry(0, 1, 3, 0.75)
    with pytest.raises(ValueError):
        RoomGeometry(5, 5, 1.0, 1.0)
    assert RoomGeometry().vertical_separation == pytest.approx(2.25)


def test_lambertian_order_and_calibration():
    lam = LambertianModel(half_power_semiangle=60)
    assert lam.order == pytest.approx(1.0)
    # default scale gives 50 lux right below an LED 2.25 m up
    assert lam.intensity_scale * 2 / (2 * math.pi * 2.25**2) == pytest.approx(50.0, rel=1e-6)
    cal = LambertianModel.from_nadir_gain(1000.0, 2.25, 30.0, 0.1)
    m = cal.order
    assert cal.intensity_scale * (m + 1) / (2 * math.pi * 2.25**2) == pytest.approx(1000.0)
    with pytest.raises(ValueError):
        LambertianModel(half_power_semiangle=90)
    with pytest.raises(ValueError):
        LambertianModel(gain_cutoff_ratio=1.0)


def test_led_grid_cell_centered():
    room = RoomGeometry(50, 50, 3, 0.75)
    assert generate_led_grid(25, 25, room).shape == (625, 3)
    one = generate_led_grid(1, 1, RoomGeometry(4, 4, 3, 0.75))
    np.testing.assert_allclose(one, [[2, 2, 3]])
    two = generate_led_grid(2, 2, RoomGeometry(4, 4, 3, 0.75))
    assert sorted(set(two[:, 0])) == [1.0, 3.0]
    with pytest.raises(ValueError):
        generate_led_grid(0, 3, room)


def test_place_uds_reproducible():
    room = RoomGeometry()
    assert place_uds(0, 1, room).shape == (0, 3)
    a, b = place_uds(15, 42, room), place_uds(15, 42, room)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, place_uds(15, 43, room))
    assert np.all(a[:, 2] == room.workspace_height)
    assert np.all((a[:, :2] >= 0) & (a[:, :2] <= 15))
    seeds = {tuple(place_uds(15, s, room)[0]) for s in range(200)}
    assert len(seeds) == 200


def _one_led_scene(scale, cutoff=0.0):
    room = RoomGeometry(4, 4, 3, 0.75)
    lam = LambertianModel(60.0, scale, cutoff)
    return OfficeScene(room, np.array([[2.0, 2.0, 3.0]]), np.array([[2.0, 2.0, 0.75]]), lam)


def test_channel_gain_nadir_closed_form():
    H = channel_gain(_one_led_scene(318.1))
    expected = 318.1 * 2 / (2 * math.pi * 2.25**2)
    assert H[0, 0] == pytest.approx(expected, rel=1e-12)
    assert H[0, 0] == pytest.approx(20.0, abs=0.01)


def test_channel_gain_cutoff_and_monotone():
    room = RoomGeometry()
    leds = generate_led_grid(10, 10, room)
    uds = place_uds(6, 0, room)
    dense = channel_gain(OfficeScene(room, leds, uds, LambertianModel(60, 100, 0.0)))
    assert np.all(dense > 0)
    cut = channel_gain(OfficeScene(room, leds, uds, LambertianModel(60, 100, 0.01)))
    for row in cut:
        kept = row[row > 0]
        assert np.all(kept >= 0.01 * row.max())
    scaled = channel_gain(OfficeScene(room, leds, uds, LambertianModel(60, 300, 0.0)))
    np.testing.assert_allclose(scaled, 3 * dense, rtol=1e-12)


def test_cutoff_drops_half_percent_entry():
    room = RoomGeometry(4, 4, 3, 0.75)
    leds = np.array([[2.0, 2.0, 3.0], [3.9, 3.9, 3.0]])
    uds = np.array([[2.0, 2.0, 0.75]])
    lam = LambertianModel(60, 100, 0.0)
    H = channel_gain(OfficeScene(room, leds, uds, lam))
    ratio = H[0, 1] / H[0, 0]
    lam_cut = LambertianModel(60, 100, ratio * 2)
    assert channel_gain(OfficeScene(room, leds, uds, lam_cut))[0, 1] == 0.0


def test_scene_rejects_off_plane_points():
    room = RoomGeometry(4, 4, 3, 0.75)
    with pytest.raises(ValueError):
        OfficeScene(room, np.array([[1, 1, 2.9]]), np.zeros((0, 3)), LambertianModel())
    with pytest.raises(ValueError):
        OfficeScene(room, np.array([[1, 1, 3]]), np.array([[5, 1, 0.75]]), LambertianModel())


def test_illuminance_and_energy():
    p = assemble_problem([[2.0, 1.0]], [1.0], [1.0, 1.0])
    assert illuminance(p, [0.5, 1.0]) == pytest.approx([2.0])
    assert np.all(illuminance(p, [0, 0]) == 0)
    np.testing.assert_array_equal(illuminance(p, [1, 0]), p.H[:, 0])
    assert energy_fraction(p, [1, 1]) == pytest.approx(1.0)
    q = assemble_problem([[1.0, 1.0]], [0.5], [5.0, 5.0], standby=10.0)
    np.testing.assert_allclose(q.q, [0.25, 0.25])
    assert q.e == 0.5
    assert energy_fraction(q, [1, 0]) == pytest.approx(0.75)
    assert energy_fraction(q, [0, 0]) == q.e


def test_assemble_problem_checks():
    p = assemble_problem([[10.0]], [5.0], [10.0])
    assert p.q.tolist() == [1.0] and p.e == 0.0
    with pytest.raises(InfeasibleScene):
        assemble_problem([[2.0]], [3.0], [1.0])
    with pytest.raises(ValueError):
        assemble_problem([[1.0]], [0.5], [0.0])
    with pytest.raises(ValueError):
        assemble_problem([[-1.0]], [0.5], [1.0])


def test_probability_simplex_identity(rng):
    for _ in range(20):
        n = int(rng.integers(1, 30))
        eps = rng.uniform(0.1, 5, n)
        p = assemble_problem(np.ones((2, n)), [0.0, 0.0], eps, standby=float(rng.uniform(0, 3)))
        assert p.q.sum() + p.e == pytest.approx(1.0, abs=1e-14)
        assert np.all(p.daylight == 0)


def test_scene_config_roundtrip(tmp_path):
    cfg = SceneConfig(seed=5)
    scene, problem = cfg.build()
    assert problem.H.shape == (15, 100)
    again = SceneConfig.from_dict(json.loads(json.dumps(cfg.to_dict())))
    assert np.array_equal(again.build()[1].H, problem.H)
    text = export_scene(scene, problem, tmp_path / "s.json")
    doc = json.loads(text)
    assert len(doc["H"]) == 15 and len(doc["led_positions"]) == 100


def test_scene_config_nadir_gain_key():
    cfg = SceneConfig.from_dict({"lambertian": {"nadir_gain": 1000, "half_power_semiangle": 30}})
    assert cfg.lambertian.half_power_semiangle == 30
    with pytest.raises(ConfigError):
        SceneConfig.from_dict({"colour": "red"})
    with pytest.raises(ConfigError):
        SceneConfig.from_dict({"room": {"width": -1, "depth": 1, "ceiling_height": 3,
                                        "workspace_height": 1}})


def test_default_scene_is_feasible_across_seeds():
    for seed in range(30):
        SceneConfig(seed=seed).build()
