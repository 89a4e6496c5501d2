import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ensplan.environment import (BarrierParams, ConstraintParams, Environment,
                                 ObstacleScript, RoadGeometry, VehicleFootprint,
                                 barrier, boundary_margin, collision_distance,
                                 constraint_dim, constraint_vector, ov_states_at)

CAR = VehicleFootprint(length=4.0, width=2.0)
POINT = VehicleFootprint(length=0.0, width=0.0)


def default_params(**kw):
    return ConstraintParams(
        d_min=kw.pop("d_min", 4.0),
        u_min=[-6.0, -0.5], u_max=[3.0, 0.5],
        du_min=[-2.0, -0.1], du_max=[2.0, 0.1],
        barrier=kw.pop("barrier", BarrierParams()),
        **kw,
    )


class TestCollisionDistance:
    def test_identical_poses_overlap(self):
        pose = np.array([1.0, 2.0, 0.3])
        assert collision_distance(pose, pose, CAR, CAR) < 0

    def test_point_vehicles(self):
        a = np.array([0.0, 0.0, 0.0])
        b = np.array([10.0, 0.0, 0.0])
        assert collision_distance(a, b, POINT, POINT) == pytest.approx(10.0)

    def test_longitudinal_analytic(self):
        # two 4 x 2 vehicles, same heading, 10 m apart along the major axis
        a = np.array([0.0, 0.0, 0.0])
        b = np.array([10.0, 0.0, 0.0])
        assert collision_distance(a, b, CAR, CAR) == pytest.approx(6.0)

    def test_symmetry(self):
        rng = np.random.default_rng(0)
        for _ in range(25):
            pa = rng.uniform(-10, 10, 3)
            pb = rng.uniform(-10, 10, 3)
            fa = VehicleFootprint(rng.uniform(2, 6), rng.uniform(1, 3))
            fb = VehicleFootprint(rng.uniform(2, 6), rng.uniform(1, 3))
            d1 = collision_distance(pa, pb, fa, fb, margin=0.2)
            d2 = collision_distance(pb, pa, fb, fa, margin=0.2)
            assert np.isclose(d1, d2, rtol=1e-12)

    def test_margin_inflates(self):
        a = np.array([0.0, 0.0, 0.0])
        b = np.array([10.0, 0.0, 0.0])
        assert collision_distance(a, b, CAR, CAR, margin=0.5) == pytest.approx(5.0)


class TestRoadGeometry:
    def test_centerline_margin(self):
        road = RoadGeometry.straight(100.0, lane_width=3.5, lane_count=2)
        assert boundary_margin([50.0, 0.0, 0.0], road) == pytest.approx(3.5)

    def test_edge_margin_zero(self):
        road = RoadGeometry.straight(100.0, lane_width=3.5, lane_count=2)
        assert boundary_margin([50.0, 3.5, 0.0], road) == pytest.approx(0.0, abs=1e-9)

    def test_lateral_offset_arithmetic(self):
        road = RoadGeometry.straight(100.0, lane_width=3.5, lane_count=2)
        assert boundary_margin([30.0, 2.0, 0.0], road) == pytest.approx(1.5)

    def test_projection_on_arc(self):
        road = RoadGeometry.arc_road(radius=100.0, angle_span=1.5, lane_width=3.5)
        # a point 2 m left of the arc at a known sweep
        sweep = 0.7
        center = np.array([0.0, 100.0])
        on_arc = center + 100.0 * np.array([np.sin(sweep), -np.cos(sweep)])
        outward = (on_arc - center) / 100.0
        proj = road.project(on_arc - 2.0 * outward)
        assert abs(abs(proj.lateral) - 2.0) < 0.01
        assert abs(proj.arc - 100.0 * sweep) < 0.05
        assert not proj.extrapolated
        assert abs(proj.curvature - 0.01) < 5e-4

    def test_extrapolation_flagged(self):
        road = RoadGeometry.straight(50.0, lane_width=3.5)
        proj = road.project([60.0, 1.0])
        assert proj.extrapolated
        assert proj.arc == pytest.approx(60.0)
        assert proj.lateral == pytest.approx(1.0)

    def test_strictly_increasing_enforced(self):
        with pytest.raises(ValueError, match="increasing"):
            RoadGeometry(np.array([[0.0, 0.0], [0.0, 0.0], [1.0, 0.0]]), 3.5)

    def test_margin_field_shrinks_usable_width(self):
        road = RoadGeometry.straight(100.0, lane_width=3.5, lane_count=2, margin=0.5)
        assert boundary_margin([10.0, 0.0, 0.0], road) == pytest.approx(3.0)


class TestObstacleScript:
    def script(self):
        times = [0.0, 1.0, 2.0]
        states = np.array([[0.0, 0.0, 0.0, 10.0],
                           [10.0, 0.0, 0.0, 10.0],
                           [15.0, 0.0, 0.0, 0.0]])
        return ObstacleScript(times, states)

    def test_waypoint_hit(self):
        assert np.array_equal(self.script().state_at(1.0), [10.0, 0.0, 0.0, 10.0])

    def test_midpoint_interpolation(self):
        assert np.allclose(self.script().state_at(0.5), [5.0, 0.0, 0.0, 10.0])

    def test_holds_after_last(self):
        assert np.array_equal(self.script().state_at(99.0), [15.0, 0.0, 0.0, 0.0])

    def test_clamps_before_first(self):
        assert np.array_equal(self.script().state_at(-5.0), [0.0, 0.0, 0.0, 10.0])

    def test_strictly_increasing_times(self):
        with pytest.raises(ValueError, match="increasing"):
            ObstacleScript([0.0, 0.0], np.zeros((2, 4)))

    def test_ov_states_at_stacks(self):
        out = ov_states_at([self.script(), self.script()], 0.5)
        assert out.shape == (2, 4)


class TestConstraintVector:
    def setup_method(self):
        self.road = RoadGeometry.straight(200.0, lane_width=3.5, lane_count=2)
        self.params = default_params()
        self.ov_poses = np.array([[30.0, 0.0, 0.0, 5.0]])
        self.fps = [CAR]

    def phi(self, aug):
        return constraint_vector(np.asarray(aug, dtype=float), self.ov_poses,
                                 self.road, self.params, CAR, self.fps)

    def test_nominal_interior(self):
        aug = [5.0, 0.0, 0.0, 10.0, 0.0, 0.0, 0.0, 0.0]
        assert (self.phi(aug) < 0).all()

    def test_active_input_bound(self):
        aug = [5.0, 0.0, 0.0, 10.0, 3.0, 0.0, 0.0, 0.0]
        phi = self.phi(aug)
        # u - u_max entry for acceleration is exactly zero
        assert phi[2] == 0.0

    def test_collision_entry_arithmetic(self):
        params = default_params(d_min=6.0)
        phi = constraint_vector(
            np.array([25.0, 0.0, 0.0, 10.0, 0.0, 0.0, 0.0, 0.0]),
            np.array([[30.0, 0.0, 0.0, 5.0]]), self.road, params, POINT, [POINT])
        assert phi[0] == pytest.approx(6.0 - 5.0)

    def test_length_formula(self):
        phi = self.phi([5.0, 0.0, 0.0, 10.0, 0.0, 0.0, 0.0, 0.0])
        assert phi.shape == (constraint_dim(1, 2),)
        assert constraint_dim(2, 2) == 2 + 1 + 8

    def test_batch_shape(self):
        batch = np.tile([5.0, 0.0, 0.0, 10.0, 0.0, 0.0, 0.0, 0.0], (7, 1))
        assert self.phi(batch).shape == (7, constraint_dim(1, 2))


class TestBarrier:
    def test_zero_on_interior(self):
        params = BarrierParams(width=0.5, kappa=1.0, beta=2.0, ceiling=1e4)
        assert np.array_equal(barrier(np.array([-0.6, -10.0]), params), [0.0, 0.0])

    def test_boundary_value_is_kappa(self):
        params = BarrierParams(width=0.5, kappa=3.0, beta=2.0, ceiling=1e4)
        assert barrier(np.array([0.0]), params)[0] == pytest.approx(3.0)

    def test_documented_ramp_value(self):
        params = BarrierParams(width=0.5, kappa=10.0, beta=1.0, ceiling=1e4)
        assert barrier(np.array([10.0]), params)[0] == pytest.approx(110.0)

    def test_clamped_at_ceiling(self):
        params = BarrierParams(width=0.5, kappa=10.0, beta=1.0, ceiling=50.0)
        assert barrier(np.array([1e9]), params)[0] == 50.0

    def test_per_entry_width(self):
        params = BarrierParams(width=1.0, kappa=1.0, beta=1.0, ceiling=1e4)
        z = barrier(np.array([-0.5, -0.5]), params, width=np.array([1.0, 0.4]))
        assert z[0] > 0 and z[1] == 0.0

    @given(st.lists(st.floats(-50, 50), min_size=1, max_size=6),
           st.floats(0.05, 5.0))
    @settings(max_examples=80, deadline=None)
    def test_monotone_nondecreasing(self, values, bump):
        params = BarrierParams(width=1.0, kappa=2.0, beta=1.5, ceiling=1e3)
        phi = np.array(values)
        z0 = barrier(phi, params)
        z1 = barrier(phi + bump, params)
        assert (z1 >= z0 - 1e-12).all()
        assert (z0 >= 0).all() and (z0 <= 1e3).all()


class TestEnvironment:
    def test_constraint_channel_time_keyed(self):
        road = RoadGeometry.straight(200.0, lane_width=3.5)
        script = ObstacleScript([0.0, 10.0],
                                np.array([[50.0, 0.0, 0.0, 5.0],
                                          [100.0, 0.0, 0.0, 5.0]]), CAR)
        env = Environment(road, [script], CAR, dt=0.1)
        channel = env.constraint_channel(default_params())
        aug = np.tile([45.0, 0.0, 0.0, 10.0, 0.0, 0.0, 0.0, 0.0], (3, 1))
        z_early = channel(aug, 0)
        z_late = channel(aug, 100)  # t = 10 s: the obstacle has moved away
        assert z_early[0, 0] > z_late[0, 0]
