"""Quaternion algebra, symmetry groups, and Euler conversions."""

import numpy as np
import pytest

from odfmix import quat


def qmul_matrix_oracle(a, b):
    """Hamilton product through the 4x4 left-multiplication matrix."""
    w, x, y, z = a
    left = np.array(
        [
            [w, -x, -y, -z],
            [x, w, -z, y],
            [y, z, w, -x],
            [z, -y, x, w],
        ]
    )
    return left @ np.asarray(b)


class TestQmul:
    def test_identity_element(self):
        rng = np.random.default_rng(0)
        for q in quat.random_unit_quaternions(rng, 20):
            np.testing.assert_allclose(quat.qmul(quat.IDENTITY, q), q, atol=1e-15)
            np.testing.assert_allclose(quat.qmul(q, quat.IDENTITY), q, atol=1e-15)

    def test_hamilton_relations(self):
        i = np.array([0.0, 1, 0, 0])
        j = np.array([0.0, 0, 1, 0])
        k = np.array([0.0, 0, 0, 1])
        np.testing.assert_allclose(quat.qmul(i, j), k, atol=1e-15)
        np.testing.assert_allclose(quat.qmul(j, k), i, atol=1e-15)
        np.testing.assert_allclose(quat.qmul(k, i), j, atol=1e-15)

    def test_unit_norm_preserved(self):
        rng = np.random.default_rng(1)
        a = quat.random_unit_quaternions(rng, 500)
        b = quat.random_unit_quaternions(rng, 500)
        norms = quat.qnorm(quat.qmul(a, b))
        np.testing.assert_allclose(norms, 1.0, atol=1e-12)

    def test_matches_matrix_oracle(self):
        rng = np.random.default_rng(2)
        a = quat.random_unit_quaternions(rng, 100)
        b = quat.random_unit_quaternions(rng, 100)
        prod = quat.qmul(a, b)
        for i in range(100):
            np.testing.assert_allclose(prod[i], qmul_matrix_oracle(a[i], b[i]), atol=1e-12)

    def test_left_right_multiplication_orthogonal(self):
        # the induced 4x4 maps must satisfy Q^T Q = I
        rng = np.random.default_rng(3)
        basis = np.eye(4)
        for q in quat.random_unit_quaternions(rng, 25):
            left = np.stack([quat.qmul(q, e) for e in basis], axis=1)
            right = np.stack([quat.qmul(e, q) for e in basis], axis=1)
            np.testing.assert_allclose(left.T @ left, np.eye(4), atol=1e-12)
            np.testing.assert_allclose(right.T @ right, np.eye(4), atol=1e-12)

    def test_conjugate_is_inverse(self):
        rng = np.random.default_rng(4)
        for q in quat.random_unit_quaternions(rng, 20):
            np.testing.assert_allclose(quat.qmul(q, quat.qconj(q)), quat.IDENTITY, atol=1e-12)


class TestSymmetryGroups:
    def test_catalog_names(self):
        assert set(quat.group_names()) == {
            "identity",
            "cyclic-2",
            "orthorhombic",
            "tetragonal",
            "hexagonal",
            "cubic-24",
            "octahedral-48",
        }

    @pytest.mark.parametrize(
        "name,size",
        [
            ("identity", 1),
            ("cyclic-2", 2),
            ("orthorhombic", 4),
            ("tetragonal", 8),
            ("hexagonal", 12),
            ("cubic-24", 24),
            ("octahedral-48", 48),
        ],
    )
    def test_sizes(self, name, size):
        assert len(quat.symmetry_group(name)) == size

    def test_identity_group_is_identity(self):
        g = quat.symmetry_group("identity")
        np.testing.assert_allclose(g.elements, [[1.0, 0, 0, 0]])

    @pytest.mark.parametrize("name", quat.group_names())
    def test_contains_identity(self, name):
        elems = quat.symmetry_group(name).elements
        assert np.any(np.abs(np.abs(elems @ quat.IDENTITY) - 1) < 1e-12)

    @pytest.mark.parametrize("name", quat.group_names())
    def test_closure_up_to_sign(self, name):
        elems = quat.symmetry_group(name).elements
        prods = quat.qmul(elems[:, None, :], elems[None, :, :]).reshape(-1, 4)
        match = np.abs(np.abs(prods @ elems.T) - 1.0) < 1e-9
        assert match.any(axis=1).all()

    @pytest.mark.parametrize("name", ["cyclic-2", "orthorhombic", "tetragonal", "hexagonal", "cubic-24"])
    def test_no_duplicate_rotations(self, name):
        elems = quat.symmetry_group(name).elements
        gram = np.abs(elems @ elems.T)
        np.fill_diagonal(gram, 0.0)
        assert gram.max() < 1.0 - 1e-9

    def test_octahedral_is_signed_double_of_cubic(self):
        cubic = quat.symmetry_group("cubic-24").elements
        octa = quat.symmetry_group("octahedral-48").elements
        np.testing.assert_allclose(octa, np.vstack([cubic, -cubic]))

    def test_unknown_name_lists_catalog(self):
        with pytest.raises(quat.GroupError, match="cubic-24"):
            quat.symmetry_group("nonsense")

    def test_load_group_file(self, tmp_path):
        path = tmp_path / "group.txt"
        path.write_text("1 0 0 0\n0 0 0 1\n")
        g = quat.load_group_file(path, name="custom")
        assert len(g) == 2

    def test_load_group_file_rejects_short_rows(self, tmp_path):
        path = tmp_path / "bad.txt"
        path.write_text("1 0 0\n")
        with pytest.raises(quat.GroupError, match="four values"):
            quat.load_group_file(path)

    def test_load_group_file_rejects_non_group(self, tmp_path):
        path = tmp_path / "open.txt"
        # 90-degree rotation about z alone: not closed
        path.write_text("1 0 0 0\n0.7071067811865476 0 0 0.7071067811865476\n")
        with pytest.raises(quat.GroupError, match="closed"):
            quat.load_group_file(path)


class TestEquivalenceClass:
    def test_identity_groups(self):
        ident = quat.symmetry_group("identity")
        rng = np.random.default_rng(5)
        g = quat.random_unit_quaternions(rng, 1)[0]
        ec = quat.equivalence_class(g, ident, ident)
        assert ec.shape == (1, 4)
        np.testing.assert_allclose(ec[0], g, atol=1e-15)

    def test_cubic_by_twofold_has_48(self):
        qc = quat.symmetry_group("cubic-24")
        qs = quat.symmetry_group("cyclic-2")
        rng = np.random.default_rng(6)
        g = quat.random_unit_quaternions(rng, 1)[0]
        assert quat.equivalence_class(g, qc, qs).shape == (48, 4)

    def test_members_generate_same_class(self):
        qc = quat.symmetry_group("tetragonal")
        qs = quat.symmetry_group("cyclic-2")
        rng = np.random.default_rng(7)
        g = quat.random_unit_quaternions(rng, 1)[0]
        base = quat.equivalence_class(g, qc, qs)
        signed = np.vstack([base, -base])
        for e in base[:: max(1, len(base) // 6)]:
            other = quat.equivalence_class(e, qc, qs)
            # every element of other matches some signed element of base
            d = np.abs(np.abs(other @ signed.T) - 1.0) < 1e-9
            assert d.any(axis=1).all()


class TestCanonicalize:
    qc = quat.symmetry_group("cubic-24")
    qs = quat.symmetry_group("cyclic-2")

    def test_idempotent(self):
        rng = np.random.default_rng(8)
        for g in quat.random_unit_quaternions(rng, 20):
            c = quat.canonicalize(g, self.qc, self.qs)
            np.testing.assert_allclose(quat.canonicalize(c, self.qc, self.qs), c, atol=1e-12)

    def test_constant_on_class(self):
        rng = np.random.default_rng(9)
        for g in quat.random_unit_quaternions(rng, 5):
            c = quat.canonicalize(g, self.qc, self.qs)
            ec = quat.equivalence_class(g, self.qc, self.qs)
            for e in np.vstack([ec, -ec]):
                np.testing.assert_allclose(
                    quat.canonicalize(e, self.qc, self.qs), c, atol=1e-9
                )

    def test_nonnegative_w(self):
        rng = np.random.default_rng(10)
        for g in quat.random_unit_quaternions(rng, 50):
            assert quat.canonicalize(g, self.qc, self.qs)[0] >= 0

    def test_batch_matches_single(self):
        rng = np.random.default_rng(11)
        gs = quat.random_unit_quaternions(rng, 10)
        batch = quat.canonicalize_batch(gs, self.qc, self.qs)
        for i in range(10):
            np.testing.assert_allclose(
                batch[i], quat.canonicalize(gs[i], self.qc, self.qs), atol=1e-12
            )


class TestEuler:
    def test_zero_angles_identity(self):
        np.testing.assert_allclose(
            quat.euler_to_quat(quat.EulerAngles(0.0, 0.0, 0.0)), quat.IDENTITY, atol=1e-15
        )

    def test_quarter_turn_about_z(self):
        # axis-angle oracle: 90 degrees about Z
        expected = np.array([np.cos(np.pi / 4), 0.0, 0.0, np.sin(np.pi / 4)])
        got = quat.euler_to_quat(quat.EulerAngles(np.pi / 2, 0.0, 0.0))
        np.testing.assert_allclose(got, expected, atol=1e-12)

    def test_composition_oracle(self):
        # euler(phi1, Phi, phi2) must equal qz(phi1) * qx(Phi) * qz(phi2)
        def qz(a):
            return np.array([np.cos(a / 2), 0, 0, np.sin(a / 2)])

        def qx(a):
            return np.array([np.cos(a / 2), np.sin(a / 2), 0, 0])

        rng = np.random.default_rng(12)
        for _ in range(50):
            phi1 = rng.uniform(0, 2 * np.pi)
            Phi = rng.uniform(0, np.pi)
            phi2 = rng.uniform(0, 2 * np.pi)
            expected = quat.qmul(quat.qmul(qz(phi1), qx(Phi)), qz(phi2))
            got = quat.euler_to_quat(quat.EulerAngles(phi1, Phi, phi2))
            np.testing.assert_allclose(got, expected, atol=1e-12)

    def test_round_trip_up_to_sign(self):
        rng = np.random.default_rng(13)
        for g in quat.random_unit_quaternions(rng, 1000):
            e = quat.quat_to_euler(g)
            back = quat.euler_to_quat(e)
            err = min(np.max(np.abs(back - g)), np.max(np.abs(back + g)))
            assert err < 1e-10

    def test_angle_ranges(self):
        rng = np.random.default_rng(14)
        for g in quat.random_unit_quaternions(rng, 200):
            e = quat.quat_to_euler(g)
            assert 0 <= e.phi1 < 2 * np.pi
            assert 0 <= e.Phi <= np.pi
            assert 0 <= e.phi2 < 2 * np.pi

    def test_gimbal_degeneracy_phi2_zero(self):
        for Phi in (0.0, np.pi):
            g = quat.euler_to_quat(quat.EulerAngles(1.2, Phi, 0.7))
            e = quat.quat_to_euler(g)
            assert e.phi2 == 0.0
            back = quat.euler_to_quat(e)
            err = min(np.max(np.abs(back - g)), np.max(np.abs(back + g)))
            assert err < 1e-10
