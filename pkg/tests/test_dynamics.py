import numpy as np
import pytest

from ensplan.dynamics import (BicycleParams, MlpModel, WeightFormatError,
                              bicycle_step, bicycle_step_batch, fit_bicycle_mlp,
                              load_weights, mlp_forward, mlp_forward_batch,
                              save_weights, wrap_angle)

PARAMS = BicycleParams(wheelbase=2.7, dt=0.1)


class TestBicycle:
    def test_at_rest_unchanged(self):
        state = np.array([3.0, -2.0, 0.7, 0.0])
        out = bicycle_step(state, np.array([0.0, 0.3]), PARAMS)
        assert np.allclose(out, state, atol=1e-15)

    def test_straight_line(self):
        out = bicycle_step(np.array([0.0, 0.0, 0.0, 10.0]), np.zeros(2), PARAMS)
        assert np.allclose(out, [1.0, 0.0, 0.0, 10.0], atol=1e-15)

    def test_heading_formula(self):
        out = bicycle_step(np.array([0.0, 0.0, 0.0, 10.0]),
                           np.array([0.0, 0.1]), PARAMS)
        assert np.isclose(out[2], 0.037160989661277975, atol=1e-15)

    def test_speed_clamp(self):
        out = bicycle_step(np.array([0.0, 0.0, 0.0, 0.5]),
                           np.array([-20.0, 0.0]), PARAMS)
        assert out[3] == PARAMS.v_min

    def test_rotation_equivariance(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            state = np.array([rng.uniform(-5, 5), rng.uniform(-5, 5),
                              rng.uniform(-3, 3), rng.uniform(0, 20)])
            control = np.array([rng.uniform(-5, 3), rng.uniform(-0.4, 0.4)])
            phi = rng.uniform(-np.pi, np.pi)
            rot = np.array([[np.cos(phi), -np.sin(phi)], [np.sin(phi), np.cos(phi)]])
            rotated = state.copy()
            rotated[:2] = rot @ state[:2]
            rotated[2] = state[2] + phi
            a = bicycle_step(rotated, control, PARAMS)
            b = bicycle_step(state, control, PARAMS)
            assert np.allclose(a[:2], rot @ b[:2], atol=1e-10)
            dtheta = np.mod(a[2] - (b[2] + phi) + np.pi, 2 * np.pi) - np.pi
            assert abs(dtheta) < 1e-10
            assert np.isclose(a[3], b[3], atol=1e-12)

    def test_wrap_range(self):
        thetas = np.linspace(-20, 20, 2001)
        wrapped = wrap_angle(thetas)
        assert np.all(wrapped > -np.pi) and np.all(wrapped <= np.pi)
        assert wrap_angle(np.pi) == np.pi
        assert wrap_angle(3 * np.pi / 2) == pytest.approx(-np.pi / 2)

    def test_params_validation(self):
        with pytest.raises(ValueError):
            BicycleParams(wheelbase=0.0)
        with pytest.raises(ValueError):
            BicycleParams(dt=-0.1)


class TestMlp:
    def test_zero_weight_residual_is_identity(self):
        model = MlpModel(
            weights=[np.zeros((8, 6)), np.zeros((8, 8)), np.zeros((4, 8))],
            biases=[np.zeros(8), np.zeros(8), np.zeros(4)],
            in_shift=np.zeros(6), in_scale=np.ones(6),
            out_shift=np.zeros(4), out_scale=np.ones(4),
            activation="tanh", residual=True,
        )
        state = np.array([1.0, -2.0, 0.3, 7.0])
        out = mlp_forward(model, state, np.array([0.5, 0.1]))
        assert np.array_equal(out, state)

    def test_single_neuron_hand_computation(self):
        w1 = np.zeros((1, 6)); w1[0, 3] = 0.5
        model = MlpModel(
            weights=[w1, np.array([[2.0]])],
            biases=[np.array([0.1]), np.array([-0.05])],
            in_shift=np.zeros(6), in_scale=np.full(6, 2.0),
            out_shift=np.array([0.3]), out_scale=np.array([1.5]),
            activation="tanh", residual=False,
        )
        state = np.array([0.0, 0.0, 0.0, 4.0])
        control = np.zeros(2)
        h = np.tanh(0.5 * (4.0 / 2.0) + 0.1)
        expected = (2.0 * h - 0.05) * 1.5 + 0.3
        out = mlp_forward(model, state, control)
        assert np.allclose(out, [expected], atol=1e-12)

    def test_dimension_chain_validated(self):
        with pytest.raises(WeightFormatError, match="chain"):
            MlpModel(
                weights=[np.zeros((8, 6)), np.zeros((4, 9))],
                biases=[np.zeros(8), np.zeros(4)],
                in_shift=np.zeros(6), in_scale=np.ones(6),
                out_shift=np.zeros(4), out_scale=np.ones(4),
            )

    def test_lipschitz_bound_holds_empirically(self):
        model = fit_bicycle_mlp(PARAMS, seed=1, n_train=4000)
        rng = np.random.default_rng(2)
        states = rng.uniform(-1, 1, size=(50, 4)) * [10, 10, 1.0, 10]
        controls = rng.uniform(-1, 1, size=(50, 2)) * [4, 0.4]
        a_in = np.hstack([states, controls])
        outs = mlp_forward_batch(model, states, controls) - states  # network part
        for i in range(0, 48, 2):
            lhs = np.linalg.norm(outs[i] - outs[i + 1])
            rhs = model.lipschitz_bound * np.linalg.norm(a_in[i] - a_in[i + 1])
            assert lhs <= rhs + 1e-9


class TestWeightFile:
    def test_round_trip_byte_identical(self, tmp_path):
        model = fit_bicycle_mlp(PARAMS, seed=0, n_train=2000)
        p1 = tmp_path / "model.mlpw"
        p2 = tmp_path / "model2.mlpw"
        save_weights(model, p1)
        save_weights(load_weights(p1), p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_truncated_file_names_byte_counts(self, tmp_path):
        model = fit_bicycle_mlp(PARAMS, seed=0, n_train=2000)
        path = tmp_path / "model.mlpw"
        save_weights(model, path)
        blob = path.read_bytes()
        path.write_bytes(blob[: len(blob) // 2])
        with pytest.raises(WeightFormatError, match=r"expected \d+ bytes, found \d+"):
            load_weights(path)

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "model.mlpw"
        path.write_bytes(b"NOPE!\n" + b"\x00" * 64)
        with pytest.raises(WeightFormatError, match="magic"):
            load_weights(path)

    def test_two_hidden_128_header_accepted(self, tmp_path):
        # hidden widths (128, 128) with input 6 / output 4
        model = fit_bicycle_mlp(PARAMS, seed=3, n_train=2000)
        path = tmp_path / "m.mlpw"
        save_weights(model, path)
        loaded = load_weights(path)
        assert [w.shape for w in loaded.weights] == [(128, 6), (128, 128), (4, 128)]
        assert loaded.activation == "tanh" and loaded.residual

    def test_manifest_sidecar_round_trip(self, tmp_path):
        model = fit_bicycle_mlp(PARAMS, seed=0, n_train=2000)
        path = tmp_path / "model.mlpw"
        save_weights(model, path)
        assert (tmp_path / "model.manifest").exists()
        loaded = load_weights(path)
        assert loaded.provenance == model.provenance


class TestSyntheticFit:
    def test_one_step_position_error_within_tolerance(self):
        # validation grid spans the generator's documented envelope,
        # including positions far from the training origin
        model = fit_bicycle_mlp(PARAMS, seed=0)
        rng = np.random.default_rng(999)
        n = 4000
        states = np.column_stack([
            rng.uniform(-100, 400, n), rng.uniform(-30, 30, n),
            rng.uniform(-1.2, 1.2, n), rng.uniform(0.0, 25.0, n)])
        controls = np.column_stack([rng.uniform(-8, 4, n),
                                    rng.uniform(-0.55, 0.55, n)])
        truth = bicycle_step_batch(states, controls, PARAMS)
        pred = mlp_forward_batch(model, states, controls)
        # position error is the figure of merit for the synthetic fit
        pos_err = np.hypot(pred[:, 0] - truth[:, 0], pred[:, 1] - truth[:, 1])
        assert pos_err.max() < 0.05
