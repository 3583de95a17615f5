"""Tests for the closure suite: multiplier maps, tables, network inference,
model dynamics, and dataset generation."""

import json
import logging
import math

import numpy as np
import pytest
from scipy.integrate import quad

from fenefp.closures import (
    ClosureAdmissibilityError,
    FeneP,
    MlpWeights,
    NewtonConvergenceError,
    NewtonMultipliers,
    QuadratureAccuracyError,
    QuasiEquilibrium,
    TableMultipliers,
    dataset as dataset_mod,
    eigen,
    equilibrium_constant,
    equilibrium_moment_triple,
    gen_dataset,
    integrate_closure,
    load_dataset,
    make_model,
    nn,
    pla,
    qe,
    qe_forward,
    qe_forward_with_jacobian,
    qe_invert_newton,
    save_dataset,
    symmetric_eigen3,
)
from fenefp.special import gauss_jacobi, gauss_legendre

RNG_SEED = 20260822


def forward_oracle_3d(lam, extensibility, n=140):
    """Independent route: plain 3D tensor quadrature of the moment integrals."""
    p, wp = gauss_jacobi(n, extensibility / 2.0, 0.5)
    x, wx = gauss_legendre(n)
    nphi = 2 * n
    phi = 2.0 * math.pi * np.arange(nphi) / nphi
    r2 = (1.0 + p) / 2.0
    s2 = 1.0 - x * x
    q1sq = r2[:, None, None] * s2[None, :, None] * np.cos(phi) ** 2
    q2sq = r2[:, None, None] * s2[None, :, None] * np.sin(phi) ** 2
    q3sq = r2[:, None, None] * (x * x)[None, :, None] * np.ones(nphi)
    exponent = lam[0] * q1sq + lam[1] * q2sq + lam[2] * q3sq
    weight = wp[:, None, None] * wx[None, :, None] * (2.0 * math.pi / nphi)
    density = np.exp(exponent - exponent.max()) * weight
    z = density.sum()
    return np.array([(density * m).sum() for m in (q1sq, q2sq, q3sq)]) / z


def random_admissible_batch(count, seed, low=-10.0, high=40.0):
    rng = np.random.default_rng(seed)
    lam = np.sort(rng.uniform(low, high, (count, 3)), axis=1)[:, ::-1]
    return qe_forward(lam, 12.0), lam


class TestEigen:
    def test_matches_reference_decomposition(self):
        rng = np.random.default_rng(RNG_SEED)
        for _ in range(50):
            raw = rng.standard_normal((3, 3))
            mat = 0.5 * (raw + raw.T)
            values, vectors = symmetric_eigen3(mat)
            assert np.all(np.diff(values) <= 1e-12)
            assert np.abs(vectors @ vectors.T - np.eye(3)).max() < 1e-13
            assert np.abs(mat @ vectors - vectors * values).max() < 1e-12
            reference = np.linalg.eigvalsh(mat)[::-1]
            assert np.abs(values - reference).max() < 1e-12

    def test_degenerate_spectra(self):
        values, vectors = symmetric_eigen3(np.eye(3) * 2.5)
        assert np.abs(values - 2.5).max() < 1e-15
        assert np.abs(vectors @ vectors.T - np.eye(3)).max() < 1e-14
        values, _ = symmetric_eigen3(np.diag([2.0, 2.0, 1.0]))
        assert np.abs(values - [2.0, 2.0, 1.0]).max() < 1e-15

    def test_rejects_nonsymmetric(self):
        with pytest.raises(ValueError):
            symmetric_eigen3(np.array([[1.0, 0.5, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]))


class TestEquilibriumConstant:
    @pytest.mark.parametrize("b", [4.0, 12.0, 50.0])
    def test_unit_mass(self, b):
        constant = equilibrium_constant(b)
        radial, _ = quad(lambda r: r * r * (1.0 - r * r) ** (b / 2.0), 0.0, 1.0)
        assert abs(4.0 * math.pi * constant * radial - 1.0) < 1e-12

    def test_positive_and_known_value(self):
        assert equilibrium_constant(12.0) > 0.0
        # direct Gamma-ratio evaluation for b = 12 under unit-mass normalization
        expected = math.gamma(8.5) / (math.pi ** 1.5 * math.gamma(7.0))
        assert abs(equilibrium_constant(12.0) - expected) < 1e-13 * expected


class TestForward:
    def test_zero_multipliers_give_equilibrium_moments(self):
        c = qe_forward(np.zeros(3), 12.0)
        assert np.abs(c - 1.0 / 17.0).max() < 1e-14
        assert np.abs(equilibrium_moment_triple(12.0) - 1.0 / 17.0).max() < 1e-16
        c20 = qe_forward(np.zeros(3), 20.0)
        assert np.abs(c20 - 1.0 / 25.0).max() < 1e-14

    def test_permutation_equivariance(self):
        lam = np.array([8.0, -3.0, 1.5])
        base = qe_forward(lam, 12.0)
        for perm in ([1, 0, 2], [2, 0, 1], [0, 2, 1]):
            permuted = qe_forward(lam[perm], 12.0)
            assert np.abs(base[perm] - permuted).max() < 1e-14

    def test_trace_always_below_one(self):
        rng = np.random.default_rng(RNG_SEED)
        lam = rng.uniform(-10.0, 60.0, (64, 3))
        c = qe_forward(lam, 12.0)
        assert np.all(c > 0.0)
        assert np.all(c.sum(axis=1) < 1.0)

    def test_matches_3d_tensor_quadrature(self):
        rng = np.random.default_rng(RNG_SEED + 1)
        for _ in range(12):
            lam = rng.uniform(-8.0, 25.0, 3)
            fast = qe_forward(lam, 12.0)
            slow = forward_oracle_3d(lam, 12.0)
            assert np.abs(fast / slow - 1.0).max() < 1e-11

    def test_large_magnitude_stable_under_refinement(self):
        for lam in (np.array([180.0, -30.0, -60.0]), np.array([5.0, 5.0, -1300.0])):
            a = qe_forward(lam, 12.0)
            b = qe_forward(lam, 12.0, nodes=952)
            assert np.abs(a - b).max() < 1e-12

    def test_magnitude_beyond_calibrated_range_rejected(self):
        with pytest.raises(QuadratureAccuracyError):
            qe_forward(np.array([2500.0, 0.0, 0.0]), 12.0)

    def test_batch_matches_scalar(self):
        rng = np.random.default_rng(RNG_SEED + 2)
        lam = rng.uniform(-5.0, 15.0, (7, 3))
        batch = qe_forward(lam, 12.0)
        # scalar path may select a different (finer or coarser) calibrated
        # rule; both sit at machine accuracy
        for row in range(7):
            assert np.abs(batch[row] - qe_forward(lam[row], 12.0)).max() < 1e-13


class TestJacobian:
    def test_matches_finite_differences(self):
        rng = np.random.default_rng(RNG_SEED + 3)
        for _ in range(20):
            lam = rng.uniform(-8.0, 20.0, 3)
            _, jac = qe_forward_with_jacobian(lam, 12.0)
            fd = np.empty((3, 3))
            h = 1e-5
            for j in range(3):
                delta = np.zeros(3)
                delta[j] = h
                fd[:, j] = (
                    qe_forward(lam + delta, 12.0, nodes=320)
                    - qe_forward(lam - delta, 12.0, nodes=320)
                ) / (2.0 * h)
            assert np.abs(jac - fd).max() < 1e-6 * np.abs(fd).max()

    def test_covariance_is_positive_definite(self):
        rng = np.random.default_rng(RNG_SEED + 4)
        lam = rng.uniform(-6.0, 18.0, (10, 3))
        _, jac = qe_forward_with_jacobian(lam, 12.0)
        for row in jac:
            assert np.abs(row - row.T).max() < 1e-15
            assert np.linalg.eigvalsh(row).min() > 0.0


class TestNewton:
    def test_equilibrium_inverts_to_zero(self):
        lam = qe_invert_newton(np.full(3, 1.0 / 17.0), 12.0)
        assert np.abs(lam).max() < 1e-10

    def test_round_trip_on_random_admissible_triples(self):
        targets, lam_true = random_admissible_batch(100, RNG_SEED + 5)
        lam = qe_invert_newton(targets, 12.0)
        back = qe_forward(lam, 12.0)
        assert np.abs(back - targets).max() < 1e-10
        assert np.abs(lam - lam_true).max() < 1e-8

    def test_effort_grows_toward_the_extensibility_limit(self):
        mild = np.full(3, 0.10)
        hard = np.full(3, 0.32)
        lam_mild, info_mild = qe_invert_newton(mild, 12.0, return_info=True)
        lam_hard, info_hard = qe_invert_newton(hard, 12.0, return_info=True)
        assert info_hard["iterations"] >= info_mild["iterations"]
        assert np.abs(lam_hard).max() > 10.0 * np.abs(lam_mild).max()

    def test_input_validation(self):
        with pytest.raises(ValueError):
            qe_invert_newton(np.array([0.1, 0.2, 0.1]), 12.0)  # unsorted
        with pytest.raises(ValueError):
            qe_invert_newton(np.array([0.2, 0.1, -0.05]), 12.0)
        with pytest.raises(ValueError):
            qe_invert_newton(np.array([0.5, 0.3, 0.25]), 12.0)  # trace >= 1

    def test_nonconvergence_reports_residual(self):
        with pytest.raises(NewtonConvergenceError) as info:
            qe_invert_newton(np.full(3, 0.32), 12.0, max_iterations=1)
        assert info.value.residual > 0.0


@pytest.fixture(scope="module")
def small_table():
    spec = {"t_range": (0.1, 0.9), "resolution": (7, 6, 6)}
    return pla.build_table(12.0, spec)


@pytest.fixture(scope="module")
def finer_table():
    spec = {"t_range": (0.1, 0.9), "resolution": (13, 11, 11)}
    return pla.build_table(12.0, spec)


def _feasible_node(table):
    for it in range(table.t_axis.size // 2, table.t_axis.size):
        for iu in range(table.u_axis.size):
            u = table.u_axis[iu]
            for iv in range(table.v_axis.size):
                v = table.v_axis[iv]
                if (1.0 - u) / 2.0 + 1e-9 < v < min(u, 1.0 - u - 0.021):
                    return it, iu, iv
    raise AssertionError("no strictly feasible node found")


class TestPla:
    def test_lookup_at_node_returns_stored_value(self, small_table):
        it, iu, iv = _feasible_node(small_table)
        coords = np.array([
            small_table.t_axis[it], small_table.u_axis[iu], small_table.v_axis[iv]
        ])
        moments = pla.moments_from_coordinates(coords)
        looked_up = pla.pla_lookup(small_table, moments)
        assert np.abs(looked_up - small_table.multipliers[it, iu, iv]).max() < 1e-10

    def test_node_values_solve_the_forward_problem(self, small_table):
        it, iu, iv = _feasible_node(small_table)
        coords = np.array([
            small_table.t_axis[it], small_table.u_axis[iu], small_table.v_axis[iv]
        ])
        moments = pla.moments_from_coordinates(coords)
        recovered = qe_forward(small_table.multipliers[it, iu, iv], 12.0)
        assert np.abs(recovered - moments).max() < 1e-10

    def test_refinement_reduces_interpolation_error(self, small_table, finer_table):
        rng = np.random.default_rng(RNG_SEED + 6)
        lam = np.sort(rng.uniform(-3.0, 12.0, (40, 3)), axis=1)[:, ::-1]
        queries = qe_forward(lam, 12.0)
        keep = (queries.sum(axis=1) > 0.15) & (queries.sum(axis=1) < 0.85)
        queries = queries[keep]
        exact = qe_invert_newton(queries, 12.0)
        coarse = np.abs(pla.pla_lookup(small_table, queries) - exact).max()
        fine = np.abs(pla.pla_lookup(finer_table, queries) - exact).max()
        assert fine < 0.6 * coarse

    def test_interpolant_value_continuous_but_kinked(self, small_table):
        it, iu, iv = _feasible_node(small_table)
        t0 = small_table.t_axis[it]
        u, v = small_table.u_axis[iu], small_table.v_axis[iv]

        def lam1(t):
            return pla.pla_lookup(
                small_table, pla.moments_from_coordinates(np.array([t, u, v]))
            )[0]

        h = 1e-6
        assert abs(lam1(t0 + h) - lam1(t0 - h)) < 1e-3  # value continuous
        slope_left = (lam1(t0) - lam1(t0 - h)) / h
        slope_right = (lam1(t0 + h) - lam1(t0)) / h
        assert abs(slope_right - slope_left) > 1e-2 * max(1.0, abs(slope_left))

    def test_out_of_range_clamps_with_warning(self, small_table, caplog):
        below = pla.moments_from_coordinates(np.array([0.05, 0.5, 0.3]))
        edge = pla.moments_from_coordinates(np.array([0.1, 0.5, 0.3]))
        with caplog.at_level(logging.WARNING, logger="fenefp.closures.pla"):
            clamped = pla.pla_lookup(small_table, below)
        assert any("clamped" in record.message for record in caplog.records)
        assert np.abs(clamped - pla.pla_lookup(small_table, edge)).max() < 1e-12

    def test_inadmissible_query_rejected(self, small_table):
        with pytest.raises(ValueError):
            pla.pla_lookup(small_table, np.array([0.4, 0.35, 0.3]))  # trace >= 1
        with pytest.raises(ValueError):
            pla.pla_lookup(small_table, np.array([0.1, 0.2, 0.1]))  # unsorted

    def test_save_load_round_trip(self, small_table, tmp_path):
        path = tmp_path / "table.npz"
        pla.save_table(small_table, path)
        loaded = pla.load_table(path)
        assert loaded.extensibility == small_table.extensibility
        assert np.array_equal(loaded.multipliers, small_table.multipliers)
        assert np.array_equal(loaded.t_axis, small_table.t_axis)

    def test_schema_tag_checked(self, small_table, tmp_path):
        path = tmp_path / "bad.npz"
        np.savez(
            path, schema=np.array("other/9"),
            extensibility=np.array(12.0),
            t_axis=small_table.t_axis, u_axis=small_table.u_axis,
            v_axis=small_table.v_axis, multipliers=small_table.multipliers,
        )
        with pytest.raises(ValueError):
            pla.load_table(path)


def _random_network(seed, arch=(3, 8, 8, 3)):
    rng = np.random.default_rng(seed)
    weights = tuple(
        rng.standard_normal((arch[k + 1], arch[k])) / math.sqrt(arch[k])
        for k in range(len(arch) - 1)
    )
    biases = tuple(rng.standard_normal(arch[k + 1]) * 0.1 for k in range(len(arch) - 1))
    return MlpWeights(
        arch=arch, activation="tanh", weights=weights, biases=biases,
        input_mean=np.array([0.1, 0.08, 0.05]),
        input_std=np.array([0.05, 0.04, 0.03]),
        output_mean=np.array([1.0, 0.5, -0.5]),
        output_std=np.array([4.0, 3.0, 2.0]),
    )


class TestNn:
    def test_zero_network_returns_output_mean(self):
        arch = (3, 4, 4, 3)
        model = MlpWeights(
            arch=arch, activation="tanh",
            weights=tuple(np.zeros((arch[k + 1], arch[k])) for k in range(3)),
            biases=tuple(np.zeros(arch[k + 1]) for k in range(3)),
            input_mean=np.zeros(3), input_std=np.ones(3),
            output_mean=np.array([2.0, -1.0, 0.5]), output_std=np.ones(3),
        )
        rng = np.random.default_rng(RNG_SEED)
        for _ in range(5):
            out = nn.nn_infer(model, rng.uniform(0.0, 0.3, 3))
            assert np.array_equal(out, np.array([2.0, -1.0, 0.5]))

    def test_forward_matches_elementwise_reference(self):
        model = _random_network(RNG_SEED + 7)
        x = np.array([0.12, 0.07, 0.04])
        z = [(x[i] - model.input_mean[i]) / model.input_std[i] for i in range(3)]
        for mat, vec in zip(model.weights[:-1], model.biases[:-1]):
            z = [
                math.tanh(sum(mat[o][i] * z[i] for i in range(len(z))) + vec[o])
                for o in range(mat.shape[0])
            ]
        final_w, final_b = model.weights[-1], model.biases[-1]
        y = [
            sum(final_w[o][i] * z[i] for i in range(len(z))) + final_b[o]
            for o in range(3)
        ]
        expected = np.array(y) * model.output_std + model.output_mean
        assert np.abs(nn.nn_infer(model, x) - expected).max() < 1e-14

    def test_validation_rejects_bad_configurations(self):
        good = _random_network(RNG_SEED + 8)
        with pytest.raises(ValueError):
            MlpWeights(
                arch=good.arch, activation="relu", weights=good.weights,
                biases=good.biases, input_mean=good.input_mean,
                input_std=good.input_std, output_mean=good.output_mean,
                output_std=good.output_std,
            )
        with pytest.raises(ValueError):
            MlpWeights(
                arch=(3, 9, 8, 3), activation="tanh", weights=good.weights,
                biases=good.biases, input_mean=good.input_mean,
                input_std=good.input_std, output_mean=good.output_mean,
                output_std=good.output_std,
            )
        with pytest.raises(ValueError):
            MlpWeights(
                arch=good.arch, activation="tanh", weights=good.weights,
                biases=good.biases, input_mean=good.input_mean,
                input_std=np.array([0.1, 0.0, 0.1]), output_mean=good.output_mean,
                output_std=good.output_std,
            )

    def test_json_round_trip_is_bit_exact(self, tmp_path):
        model = _random_network(RNG_SEED + 9)
        rng = np.random.default_rng(RNG_SEED + 10)
        probe_in = rng.uniform(0.01, 0.3, (100, 3))
        probe_out = nn.nn_infer(model, probe_in)
        stamped = MlpWeights(
            arch=model.arch, activation=model.activation, weights=model.weights,
            biases=model.biases, input_mean=model.input_mean,
            input_std=model.input_std, output_mean=model.output_mean,
            output_std=model.output_std, probe_inputs=probe_in,
            probe_outputs=probe_out, metadata={"extensibility": 12.0},
        )
        path = tmp_path / "weights.json"
        nn.nn_save(stamped, path)
        loaded = nn.nn_load(path)
        for a, b in zip(loaded.weights, stamped.weights):
            assert np.array_equal(a, b)
        assert nn.verify_probes(loaded) == 0.0
        assert loaded.metadata["extensibility"] == 12.0

    def test_load_rejects_wrong_schema(self, tmp_path):
        path = tmp_path / "w.json"
        path.write_text(json.dumps({"schema": "nope"}))
        with pytest.raises(ValueError):
            nn.nn_load(path)

    def test_inference_is_smooth(self):
        model = _random_network(RNG_SEED + 11)
        c = np.array([0.15, 0.09, 0.05])
        direction = np.array([1.0, -0.5, 0.2])

        def f(t):
            return nn.nn_infer(model, c + t * direction)[0]

        slopes = []
        for h in (1e-3, 1e-4, 1e-5):
            slopes.append(((f(h) - f(-h)) / (2 * h)))
        assert abs(slopes[1] - slopes[2]) < 1e-5 * max(1.0, abs(slopes[2]))


class TestModels:
    def test_fene_p_fixed_points(self):
        printed = FeneP(12.0, 1.0)
        assert np.abs(printed.rhs(printed.equilibrium(), np.zeros((3, 3)))).max() < 1e-14
        assert np.abs(printed.equilibrium() - 2.0 / 18.0 * np.eye(3)).max() < 1e-16
        consistent = FeneP(12.0, 1.0, consistent_relaxation=True)
        assert np.abs(
            consistent.rhs(consistent.equilibrium(), np.zeros((3, 3)))
        ).max() < 1e-14
        assert np.abs(consistent.equilibrium() - np.eye(3) / 15.0).max() < 1e-16

    def test_qe_equilibrium_fixed_point(self):
        model = QuasiEquilibrium(12.0, 1.0)
        rhs = model.rhs(model.equilibrium(), np.zeros((3, 3)))
        assert np.abs(rhs).max() < 1e-11

    def test_rhs_symmetric_for_all_models(self, small_table):
        rng = np.random.default_rng(RNG_SEED + 12)
        gradient = rng.standard_normal((3, 3))
        gradient -= np.trace(gradient) / 3.0 * np.eye(3)
        moments, _ = random_admissible_batch(1, RNG_SEED + 13, low=-4.0, high=8.0)
        rot = np.linalg.qr(rng.standard_normal((3, 3)))[0]
        conf = (rot * moments[0]) @ rot.T
        for model in (
            FeneP(12.0, 1.0),
            QuasiEquilibrium(12.0, 1.0),
            QuasiEquilibrium(12.0, 1.0, TableMultipliers(small_table)),
        ):
            rhs = model.rhs(conf, gradient)
            assert np.abs(rhs - rhs.T).max() < 1e-12

    def test_permutation_equivariance(self):
        rng = np.random.default_rng(RNG_SEED + 14)
        gradient = rng.standard_normal((3, 3))
        gradient -= np.trace(gradient) / 3.0 * np.eye(3)
        moments, _ = random_admissible_batch(1, RNG_SEED + 15, low=-4.0, high=8.0)
        rot = np.linalg.qr(rng.standard_normal((3, 3)))[0]
        conf = (rot * moments[0]) @ rot.T
        perm = np.eye(3)[[2, 0, 1]]
        for model in (FeneP(12.0, 1.0), QuasiEquilibrium(12.0, 1.0)):
            direct = perm @ model.rhs(conf, gradient) @ perm.T
            permuted = model.rhs(perm @ conf @ perm.T, perm @ gradient @ perm.T)
            assert np.abs(direct - permuted).max() < 1e-10

    def test_multiplier_tensor_is_coaxial(self):
        rng = np.random.default_rng(RNG_SEED + 16)
        model = QuasiEquilibrium(12.0, 1.0)
        for _ in range(5):
            lam_sorted = np.sort(rng.uniform(-5.0, 10.0, 3))[::-1]
            c = qe_forward(lam_sorted, 12.0)
            rot = np.linalg.qr(rng.standard_normal((3, 3)))[0]
            conf = (rot * c) @ rot.T
            multiplier = model.multiplier_matrix(conf)
            commutator = conf @ multiplier - multiplier @ conf
            assert np.abs(commutator).max() < 1e-10

    def test_qe_trace_law(self):
        model = QuasiEquilibrium(12.0, 2.0)
        moments, lam = random_admissible_batch(1, RNG_SEED + 17, low=0.5, high=9.0)
        conf = np.diag(moments[0])
        rhs = model.rhs(conf, np.zeros((3, 3)))
        multiplier = model.multiplier_matrix(conf)
        expected = -(4.0 / model.deborah) * np.trace(conf @ multiplier)
        assert abs(np.trace(rhs) - expected) < 1e-12
        # stretched along every axis (all multipliers positive) => contraction
        assert np.trace(rhs) < 0.0

    def test_stress_values(self):
        model = QuasiEquilibrium(12.0, 1.0)
        assert np.abs(model.stress(model.equilibrium())).max() < 1e-10
        printed = FeneP(12.0, 1.0)
        # the printed relaxation coefficient leaves a spurious isotropic
        # equilibrium stress equal to the identity
        assert np.abs(printed.stress(printed.equilibrium()) - np.eye(3)).max() < 1e-13
        consistent = FeneP(12.0, 1.0, consistent_relaxation=True)
        assert np.abs(consistent.stress(consistent.equilibrium())).max() < 1e-13

    def test_trace_bound_enforced(self):
        model = FeneP(12.0, 1.0)
        fat = np.diag([0.5, 0.4, 0.2])
        with pytest.raises(ValueError):
            model.rhs(fat, np.zeros((3, 3)))
        with pytest.raises(ValueError):
            model.stress(fat)

    def test_registry(self, small_table):
        assert isinstance(make_model("fene-p", 12.0, 1.0), FeneP)
        assert make_model("fene-p-consistent", 12.0, 1.0).consistent_relaxation
        assert isinstance(make_model("qe-newton", 12.0, 1.0), QuasiEquilibrium)
        assert isinstance(
            make_model("qe-pla", 12.0, 1.0, table=small_table).multipliers,
            TableMultipliers,
        )
        with pytest.raises(ValueError):
            make_model("qe-pla", 12.0, 1.0)
        with pytest.raises(ValueError):
            make_model("qe-nn", 12.0, 1.0)
        with pytest.raises(ValueError):
            make_model("unknown", 12.0, 1.0)


class TestIntegrate:
    def test_equilibrium_is_stationary(self):
        for model in (FeneP(12.0, 1.0), QuasiEquilibrium(12.0, 1.0)):
            trajectory = integrate_closure(
                model, model.equilibrium(), np.zeros((3, 3)), t_end=0.5
            )
            assert trajectory.steady
            assert np.abs(trajectory.final - model.equilibrium()).max() < 1e-12

    def test_relaxation_reaches_equilibrium(self):
        model = FeneP(12.0, 1.0)
        start = np.diag([0.5, 0.2, 0.1])
        trajectory = integrate_closure(
            model, start, np.zeros((3, 3)), t_end=30.0, record_every=200
        )
        assert trajectory.steady
        assert np.abs(trajectory.final - model.equilibrium()).max() < 1e-8
        traces = trajectory.tensors[:, 0, 0] + trajectory.tensors[:, 1, 1] + trajectory.tensors[:, 2, 2]
        assert np.all(np.diff(traces) < 1e-12)

    def test_extensional_flow_steady_state(self):
        gradient = np.diag([1.0, -0.5, -0.5])
        model = QuasiEquilibrium(12.0, 1.0)
        trajectory = integrate_closure(model, model.equilibrium(), gradient, t_end=30.0)
        assert trajectory.steady
        final = trajectory.final
        assert final[0, 0] > final[1, 1]
        assert abs(final[1, 1] - final[2, 2]) < 1e-9
        assert np.abs(model.rhs(final, gradient)).max() < 1e-9

    def test_admissibility_guard_reports_step(self):
        class Decaying:
            deborah = 1.0

            def rhs(self, conformation, gradient):
                return -0.05 * np.eye(3)

        with pytest.raises(ClosureAdmissibilityError) as info:
            integrate_closure(Decaying(), np.eye(3) * 0.05, np.zeros((3, 3)), t_end=10.0)
        assert info.value.step > 0

    def test_record_spacing(self):
        model = FeneP(12.0, 1.0)
        trajectory = integrate_closure(
            model, np.diag([0.3, 0.2, 0.1]), np.zeros((3, 3)),
            t_end=0.01, record_every=4,
        )
        assert trajectory.times[0] == 0.0
        spacing = np.diff(trajectory.times[:-1])
        assert np.allclose(spacing, 4e-3)


class TestDataset:
    def test_generation_invariants_and_yield(self):
        dataset = gen_dataset(12.0, 400, seed=RNG_SEED)
        dataset.validate()
        assert len(dataset) >= 0.9 * 400
        traces = dataset.moments.sum(axis=1)
        assert traces.min() < 0.2
        assert traces.max() > 0.8
        assert dataset.metadata["count"] == len(dataset)

    def test_round_trip_through_files(self, tmp_path):
        dataset = gen_dataset(12.0, 50, seed=RNG_SEED + 18)
        path = tmp_path / "data.csv"
        save_dataset(dataset, path)
        loaded = load_dataset(path)
        assert np.array_equal(loaded.moments, dataset.moments)
        assert np.array_equal(loaded.multipliers, dataset.multipliers)
        assert loaded.metadata["seed"] == dataset.metadata["seed"]
        assert (tmp_path / "data.csv.meta.json").exists()

    def test_header_enforced(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("a,b,c\n1,2,3\n")
        with pytest.raises(ValueError):
            load_dataset(path)
