import numpy as np
import pytest

from pitchcal.calibrate import (
    Correspondence,
    DegenerateConfigurationError,
    FitOptions,
    InitializationError,
    UnderdeterminedError,
    dlt_homography,
    fd_jacobian,
    fit_homography,
    fit_pinhole,
    init_pinhole_from_homography,
    initial_homography,
    levenberg_marquardt,
    line_intersection_correspondences,
    make_pinhole_objective,
    refine_camera,
    refine_homography,
)
from pitchcal.camera_models import (
    Homography,
    PinholeRadial,
    SimplifiedPinhole,
    ground_homography_of,
)
from pitchcal.metrics import ImageAnnotation, evaluate_image, pitch_rectangle
from pitchcal.synth import SceneConfig, generate_scene, perturb_camera

from .conftest import make_camera

SIZE = (1920, 1080)


def random_homography(rng):
    # high enough that the whole pitch is in front of the camera
    cam = make_camera(
        position=(rng.uniform(-20, 20), rng.uniform(-60, -45), rng.uniform(60, 120)),
        target=(rng.uniform(-40, 40), rng.uniform(-20, 20), 0.0),
        focal=rng.uniform(1000, 5000),
    )
    return ground_homography_of(cam)


def correspondences(h, world):
    img, _ = h.project_points(world)
    return [Correspondence((x, y, 0.0), tuple(p)) for (x, y), p in zip(world, img)]


def max_reprojection(h_est, h_true, world):
    a, _ = h_est.project_points(world)
    b, _ = h_true.project_points(world)
    return float(np.max(np.linalg.norm(a - b, axis=1)))


def test_dlt_from_pitch_corners():
    h = random_homography(np.random.default_rng(0))
    corners = pitch_rectangle()
    est = dlt_homography(correspondences(h, corners))
    assert max_reprojection(est, h, corners) < 1e-6


@pytest.mark.parametrize("seed", range(5))
def test_dlt_twenty_random_points(seed):
    rng = np.random.default_rng(seed)
    h = random_homography(rng)
    world = np.column_stack([rng.uniform(-52, 52, 20), rng.uniform(-34, 34, 20)])
    assert max_reprojection(dlt_homography(correspondences(h, world)), h, world) < 1e-6


def test_dlt_collinear_rejected():
    world = np.column_stack([np.linspace(0, 30, 4), np.zeros(4)])
    corrs = [Correspondence((x, y, 0.0), (x * 10, x * 5 + 1)) for x, y in world]
    with pytest.raises(DegenerateConfigurationError):
        dlt_homography(corrs)
    with pytest.raises(DegenerateConfigurationError):
        dlt_homography(corrs[:3])


def test_dlt_image_scaling_invariance():
    rng = np.random.default_rng(9)
    h = random_homography(rng)
    world = np.column_stack([rng.uniform(-52, 52, 12), rng.uniform(-34, 34, 12)])
    corrs = correspondences(h, world)
    scaled = [Correspondence(c.world, (3.0 * c.image[0], 3.0 * c.image[1])) for c in corrs]
    a, _ = dlt_homography(corrs).project_points(world)
    b, _ = dlt_homography(scaled).project_points(world)
    np.testing.assert_allclose(3.0 * a, b, atol=1e-9 * np.abs(b).max())


def test_weights_must_be_nonnegative():
    with pytest.raises(ValueError):
        Correspondence((0.0, 0.0, 0.0), (1.0, 1.0), -1.0)


@pytest.mark.parametrize("seed", range(8))
def test_init_pinhole_round_trip(seed):
    rng = np.random.default_rng(seed)
    truth = make_camera(
        position=(rng.uniform(-20, 20), rng.uniform(-50, -35), rng.uniform(8, 30)),
        target=(rng.uniform(-40, 40), rng.uniform(-20, 20), 0.0),
        focal=rng.uniform(1200, 5000),
    )
    est = init_pinhole_from_homography(ground_homography_of(truth), SIZE)
    assert est.focal == pytest.approx(truth.focal, rel=1e-6)
    assert np.linalg.norm(est.rotation - truth.rotation) < 1e-8
    assert np.linalg.norm(est.translation - truth.translation) < 1e-8
    assert np.linalg.det(est.rotation) == pytest.approx(1.0)
    assert (est.rotation @ np.zeros(3) + est.translation)[2] > 0


def test_init_pinhole_fronto_parallel_rejected():
    r = np.diag([1.0, -1.0, -1.0])  # straight down
    cam = SimplifiedPinhole(1000.0, (960.0, 540.0), r, -r @ np.array([0.0, 0.0, 80.0]))
    with pytest.raises(InitializationError):
        init_pinhole_from_homography(ground_homography_of(cam), SIZE)


@pytest.fixture(scope="module")
def distorted_scene(template):
    cfg = SceneConfig(seed=21, focal_range=(1500.0, 2200.0), k1_range=(-0.08, -0.08))
    return generate_scene(cfg, 0, template)


def test_refine_from_truth_stops_immediately(distorted_scene, template):
    cam, rep = refine_camera(distorted_scene.camera, template, distorted_scene.annotation)
    assert rep.iterations <= 2 and rep.final_cost < 1e-12
    assert rep.final_cost <= rep.initial_cost


def test_refine_recovers_k1_from_closed_form_seed(distorted_scene, template):
    h = initial_homography(template, distorted_scene.annotation)
    seed = PinholeRadial.from_pinhole(init_pinhole_from_homography(h, SIZE))
    cam, rep = refine_camera(seed, template, distorted_scene.annotation)
    assert cam.k1 == pytest.approx(-0.08, rel=0.05)
    assert rep.rms_px < 0.1
    assert rep.final_cost <= rep.initial_cost


def test_refine_with_k1_frozen_matches_projections(template):
    s = generate_scene(SceneConfig(seed=4, focal_range=(1500, 2500), k1_range=(0, 0)), 0, template)
    seed = perturb_camera(s.camera, 1.0, 0)
    cam, rep = refine_camera(seed, template, s.annotation, FitOptions(fixed=frozenset({"k1"})))
    assert cam.k1 == 0.0
    world = np.column_stack([np.random.default_rng(0).uniform(-30, 30, (50, 2)), np.zeros(50)])
    a, _ = cam.project_points(world)
    b, _ = s.camera.project_points(world)
    ok = np.isfinite(a[:, 0]) & np.isfinite(b[:, 0]) & (b[:, 0] > 0) & (b[:, 0] < 1920) & (b[:, 1] > 0) & (b[:, 1] < 1080)
    assert ok.sum() > 5
    assert np.max(np.linalg.norm(a[ok] - b[ok], axis=1)) < 1e-6


def test_refine_underdetermined(template, wide_camera):
    ann = ImageAnnotation(SIZE, {"Middle line": [[960.0, 400.0], [960.0, 700.0]]})
    with pytest.raises(UnderdeterminedError):
        refine_camera(wide_camera, template, ann)


def test_k2_unlocked_and_fixed_masks():
    assert "k2" not in FitOptions().free_pinhole_params()
    assert "k2" in FitOptions(unlock_k2=True).free_pinhole_params()
    assert FitOptions(fixed=frozenset({"f", "k1"})).free_pinhole_params() == ["rx", "ry", "rz", "tx", "ty", "tz"]


def test_lm_on_rosenbrock():
    fun = lambda x: np.array([10.0 * (x[1] - x[0] ** 2), 1.0 - x[0]])
    x, rep = levenberg_marquardt(fun, np.array([-1.2, 1.0]))
    np.testing.assert_allclose(x, [1.0, 1.0], atol=1e-6)
    assert rep.converged
    trace = np.array(rep.cost_trace)
    assert np.all(np.diff(trace) <= 0)


def test_lm_stops_at_max_iterations():
    fun = lambda x: np.array([10.0 * (x[1] - x[0] ** 2), 1.0 - x[0]])
    _, rep = levenberg_marquardt(fun, np.array([-1.2, 1.0]), FitOptions(max_iterations=3))
    assert rep.iterations == 3 and rep.reason == "max iterations"


def test_fd_jacobian_of_linear_map():
    a = np.random.default_rng(0).normal(size=(5, 3))
    np.testing.assert_allclose(fd_jacobian(lambda x: a @ x, np.ones(3)), a, atol=1e-7)


def test_jacobian_directional_derivative(template):
    s = generate_scene(SceneConfig(seed=6, focal_range=(1500, 3000)), 0, template)
    fun, par, _ = make_pinhole_objective(perturb_camera(s.camera, 0.5, 0), template, s.annotation)
    x = par.x0()
    rng = np.random.default_rng(0)
    v = rng.normal(size=x.size) * np.maximum(np.abs(x), 1e-3)
    v /= np.linalg.norm(v)
    r = fun(x)
    h = 1e-6
    cost = lambda y: float(fun(y) @ fun(y))
    fd = (cost(x + h * v) - cost(x - h * v)) / (2 * h)
    analytic = 2.0 * r @ (fd_jacobian(fun, x) @ v)
    assert analytic == pytest.approx(fd, rel=1e-4)


def test_line_intersections_are_exact_without_noise(distorted_scene, template):
    s = generate_scene(SceneConfig(seed=2, focal_range=(1500, 2000), k1_range=(0, 0)), 1, template)
    corrs = line_intersection_correspondences(template, s.annotation)
    assert corrs
    for c in corrs:
        p, _ = s.camera.project_points(np.array([c.world]))
        assert np.linalg.norm(p[0] - c.image) < 1e-4


def test_fit_pinhole_end_to_end(distorted_scene, template):
    cam, rep = fit_pinhole(template, distorted_scene.annotation)
    ev = evaluate_image(cam, template, distorted_scene.annotation, 2.0)
    assert ev.jaccard == 1.0


def test_fit_homography_end_to_end(template):
    s = generate_scene(SceneConfig(seed=3, focal_range=(1500, 2500), k1_range=(0, 0)), 0, template)
    h, rep = fit_homography(template, s.annotation)
    assert isinstance(h, Homography)
    assert rep.rms_px < 1e-3


def test_refine_homography_keeps_cost_monotone(template, distorted_scene):
    h0 = initial_homography(template, distorted_scene.annotation)
    h, rep = refine_homography(h0, template, distorted_scene.annotation)
    assert rep.final_cost <= rep.initial_cost
    assert np.all(np.diff(rep.cost_trace) <= 0)
