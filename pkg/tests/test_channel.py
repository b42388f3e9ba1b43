import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hadce.channel import (
    PathSet,
    SimParams,
    angular_basis,
    conjugate_recover,
    from_angular,
    grid_bin,
    mirror_paths,
    sample_paths,
    steering_vector,
    synth_channel,
    to_angular,
)
from hadce.rng import stream

from conftest import crandn

GRID = [2, 8, 16, 64, 128]


def brute_force_channel(paths, N, M):
    """Element-by-element evaluation of the multipath sum."""
    H = np.zeros((N, M), dtype=complex)
    for a, th, ph in zip(paths.alphas, paths.aoas, paths.aods):
        for n in range(N):
            for m in range(M):
                H[n, m] += a * np.exp(1j * np.pi * np.sin(th) * n) * np.exp(1j * np.pi * np.sin(ph) * m)
    return H / np.sqrt(len(paths.alphas))


class TestSteeringVector:
    def test_broadside(self):
        np.testing.assert_allclose(steering_vector(0.0, 4), np.ones(4))

    def test_endfire(self):
        np.testing.assert_allclose(steering_vector(np.pi / 2, 2), [1, -1], atol=1e-15)

    def test_thirty_degrees(self):
        np.testing.assert_allclose(steering_vector(np.pi / 6, 4), [1, 1j, -1, -1j], atol=1e-15)

    def test_first_element_exactly_one(self):
        assert steering_vector(0.7, 5)[0] == 1 + 0j


class TestSamplePaths:
    def test_zero_spread(self):
        p = SimParams(N=8, M=2, N_p=5, delta_theta=0.0, theta_az=0.3)
        paths = sample_paths(p, stream(1, "t"))
        assert np.all(paths.aoas == 0.3)

    def test_deterministic(self):
        p = SimParams(N_p=20, theta_az=0.1)
        assert sample_paths(p, stream(9, "t")) == sample_paths(p, stream(9, "t"))
        assert sample_paths(p, stream(9, "t")) != sample_paths(p, stream(10, "t"))

    def test_ranges(self):
        p = SimParams(N_p=1000, theta_az=-0.4, delta_theta=0.05)
        paths = sample_paths(p, stream(2, "t"))
        assert np.all(paths.aoas >= -0.45) and np.all(paths.aoas <= -0.35)
        assert np.all(paths.aods >= 0) and np.all(paths.aods < 2 * np.pi)

    def test_law_of_large_numbers(self):
        n = 100_000
        dtheta = np.deg2rad(5.0)
        p = SimParams(N_p=n, theta_az=0.2, delta_theta=dtheta)
        paths = sample_paths(p, stream(3, "t"))
        # uniform on [a-d, a+d] has std d/sqrt(3)
        sigma_mean = dtheta / np.sqrt(3) / np.sqrt(n)
        assert abs(paths.aoas.mean() - 0.2) < 3 * sigma_mean
        assert abs(np.mean(np.abs(paths.alphas) ** 2) - 1) < 0.02

    def test_invalid_params(self):
        with pytest.raises(ValueError):
            SimParams(N=1)
        with pytest.raises(ValueError):
            SimParams(N_p=0)


class TestSynthChannel:
    def test_single_broadside_path(self):
        paths = PathSet(np.array([1 + 0j]), np.array([0.0]), np.array([0.0]))
        np.testing.assert_allclose(synth_channel(paths, 6, 3), np.ones((6, 3)))

    def test_two_path_example(self):
        # a_B(pi/6) = [1, j] and a_B(0) = [1, 1]; 1*[1, j] + j*[1, 1] = [1+j, 2j].
        paths = PathSet(np.array([1, 1j]), np.array([np.pi / 6, 0.0]), np.array([0.0, 0.0]))
        H = synth_channel(paths, 2, 1)
        np.testing.assert_allclose(H, brute_force_channel(paths, 2, 1), atol=1e-14)
        np.testing.assert_allclose(H[:, 0], np.array([1 + 1j, 2j]) / np.sqrt(2), atol=1e-14)

    def test_matches_brute_force(self):
        p = SimParams(N=8, M=3, N_p=4, theta_az=0.5)
        paths = sample_paths(p, stream(5, "t"))
        np.testing.assert_allclose(synth_channel(paths, 8, 3), brute_force_channel(paths, 8, 3), atol=1e-12)

    @pytest.mark.parametrize("n_p,m", [(1, 4), (2, 4), (3, 2), (20, 4)])
    def test_rank_bound(self, n_p, m):
        p = SimParams(N=16, M=m, N_p=n_p)
        H = synth_channel(sample_paths(p, stream(n_p, "t")), 16, m)
        assert np.linalg.matrix_rank(H) <= min(n_p, m)

    def test_energy_normalization(self):
        p = SimParams(N=64, M=4, N_p=20, theta_az=np.deg2rad(12.0))
        total = 0.0
        n = 10_000
        for i in range(n):
            H = synth_channel(sample_paths(p, stream(11, "energy", i)), 64, 4)
            total += np.sum(np.abs(H) ** 2) / (4 * 64)
        assert 0.97 <= total / n <= 1.03


class TestAngularBasis:
    def test_n2_by_hand(self):
        basis = angular_basis(2)
        np.testing.assert_allclose(basis.eta, [-0.5, 0.5])
        expected = np.array([[1, 1], [-1j, 1j]]) / np.sqrt(2)
        np.testing.assert_allclose(basis.b, expected, atol=1e-15)

    @pytest.mark.parametrize("N", GRID)
    def test_unitary(self, N):
        b = angular_basis(N).b
        assert np.max(np.abs(b @ b.conj().T - np.eye(N))) < 1e-12

    @pytest.mark.parametrize("N", GRID)
    def test_columns(self, N):
        basis = angular_basis(N)
        for n in (0, N // 2, N - 1):
            col = np.exp(1j * np.pi * basis.eta[n] * np.arange(N)) / np.sqrt(N)
            np.testing.assert_allclose(basis.b[:, n], col, atol=1e-13)

    def test_isometry(self, rng):
        b = angular_basis(64).b
        x = crandn(rng, 64)
        assert abs(np.linalg.norm(b @ x) / np.linalg.norm(x) - 1) < 1e-12

    def test_rejects_small(self):
        with pytest.raises(ValueError):
            angular_basis(1)

    def test_read_only(self):
        with pytest.raises(ValueError):
            angular_basis(4).b[0, 0] = 0


class TestAngularTransform:
    def test_basis_columns_map_to_identity(self):
        basis = angular_basis(16)
        X = to_angular(basis.b[:, :3], basis)
        np.testing.assert_allclose(X, np.eye(16)[:, :3], atol=1e-13)

    def test_round_trip(self, rng):
        basis = angular_basis(32)
        H = crandn(rng, 32, 4)
        np.testing.assert_allclose(from_angular(to_angular(H, basis), basis), H, atol=1e-10)

    @pytest.mark.parametrize("N", GRID)
    def test_norm_preserved(self, N, rng):
        basis = angular_basis(N)
        H = crandn(rng, N, 3)
        assert abs(np.linalg.norm(to_angular(H, basis)) / np.linalg.norm(H) - 1) < 1e-12

    def test_on_grid_path(self):
        N, k = 32, 5
        basis = angular_basis(N)
        theta = np.arcsin(basis.eta[k])
        alpha = 0.6 - 0.8j
        paths = PathSet(np.array([alpha]), np.array([theta]), np.array([0.3]))
        X = to_angular(synth_channel(paths, N, 1), basis)
        # B^H a_B(theta) = sqrt(N) e_k when sin(theta) is a grid point
        assert abs(abs(X[k, 0]) - np.sqrt(N) * abs(alpha)) < 1e-10
        others = np.delete(np.abs(X[:, 0]), k)
        assert np.max(others) < 1e-10

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            to_angular(np.ones((8, 2)), angular_basis(16))

    def test_grid_bin(self):
        basis = angular_basis(64)
        for k in (0, 1, 10, 40, 63):
            s = basis.eta[k] if basis.eta[k] <= 1 else basis.eta[k] - 2
            assert grid_bin(s, 64) == k


class TestMirror:
    def test_involution(self):
        p = sample_paths(SimParams(), stream(1, "m"))
        assert mirror_paths(mirror_paths(p)) == p

    def test_fixed_point(self):
        p = PathSet(np.array([0.7 + 0j]), np.array([0.0]), np.array([0.0]))
        np.testing.assert_array_equal(synth_channel(mirror_paths(p), 8, 2), synth_channel(p, 8, 2))

    def test_mirror_identity_100_paths(self):
        for i in range(100):
            p = sample_paths(SimParams(N=32, M=4, theta_az=0.3), stream(i, "mirror"))
            H = synth_channel(p, 32, 4)
            Hm = synth_channel(mirror_paths(p), 32, 4)
            assert np.max(np.abs(np.conj(Hm) - H)) < 1e-12

    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 2**32 - 1), st.floats(-1.5, 1.5))
    def test_mirror_identity_property(self, seed, az):
        p = sample_paths(SimParams(N=16, M=3, N_p=6, theta_az=az, delta_theta=0.05), stream(seed, "h"))
        np.testing.assert_allclose(
            np.conj(synth_channel(mirror_paths(p), 16, 3)), synth_channel(p, 16, 3), atol=1e-12
        )

    def test_conjugate_recover_matches_mirror(self):
        basis = angular_basis(32)
        p = sample_paths(SimParams(N=32, M=1, theta_az=0.2), stream(4, "c"))
        x1 = to_angular(synth_channel(p, 32, 1), basis)[:, 0]
        x2 = to_angular(synth_channel(mirror_paths(p), 32, 1), basis)[:, 0]
        np.testing.assert_allclose(conjugate_recover(x1, basis), x2, atol=1e-12)


def test_same_seed_same_channel():
    p = SimParams(theta_az=0.4)
    H1 = synth_channel(sample_paths(p, stream(77, "d", 3)), p.N, p.M)
    H2 = synth_channel(sample_paths(p, stream(77, "d", 3)), p.N, p.M)
    assert H1.tobytes() == H2.tobytes()
