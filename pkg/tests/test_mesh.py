import numpy as np
import pytest

from phwave.errors import CoefficientError, ConfigError, MeshError
from phwave.mesh import (GAMMA0, GAMMA1, CoefficientSet, Mesh, generate_rect_mesh, read_mesh,
                         sample_coefficients, tag_boundary, write_mesh)

ALL = ["left", "right", "top", "bottom"]


class TestGenerate:
    def test_counts_8x8(self):
        m = generate_rect_mesh(8, 8, 1, 1)
        assert (m.n_vertices, m.n_triangles) == (81, 128)

    def test_single_cell(self):
        m = generate_rect_mesh(1, 1, 1, 1)
        assert (m.n_vertices, m.n_triangles, len(m.boundary_edges)) == (4, 2, 4)

    def test_equal_areas(self):
        m = generate_rect_mesh(2, 1, 2, 1)
        assert np.allclose(m.areas(), 0.5, rtol=0, atol=1e-15)

    @pytest.mark.parametrize("nx, ny, lx, ly", [(3, 5, 2.0, 0.7), (8, 8, 1, 1), (7, 2, 0.1, 3.0)])
    def test_total_area(self, nx, ny, lx, ly):
        m = generate_rect_mesh(nx, ny, lx, ly)
        assert abs(m.areas().sum() - lx * ly) <= 1e-12 * lx * ly
        assert np.all(m.areas() > 0)

    def test_unit_outward_normals(self):
        m = generate_rect_mesh(5, 3, 2.0, 1.0)
        nu = m.outward_normals()
        assert np.max(np.abs(np.hypot(nu[:, 0], nu[:, 1]) - 1)) <= 1e-14
        # normals point away from the centre of the rectangle
        mid = m.vertices[m.boundary_edges].mean(axis=1)
        assert np.all(np.sum((mid - [1.0, 0.5]) * nu, axis=1) > 0)

    def test_boundary_is_closed_loop(self):
        m = generate_rect_mesh(4, 4)
        e = m.boundary_edges
        assert len(e) == 16
        # every boundary vertex has one incoming and one outgoing edge
        assert sorted(e[:, 0]) == sorted(e[:, 1])

    def test_rejects_bad_sizes(self):
        with pytest.raises(ConfigError):
            generate_rect_mesh(0, 3)
        with pytest.raises(ConfigError):
            generate_rect_mesh(2, 2, -1.0, 1.0)

    def test_rejects_nonconforming(self):
        v = np.array([[0, 0], [1, 0], [0, 1], [1, 1]], dtype=float)
        t = np.array([[0, 1, 2], [0, 1, 2], [0, 1, 2]])
        with pytest.raises(MeshError):
            Mesh(v, t)

    def test_rejects_clockwise(self):
        v = np.array([[0, 0], [1, 0], [0, 1]], dtype=float)
        with pytest.raises(MeshError):
            Mesh(v, np.array([[0, 2, 1]]))


class TestTagging:
    def test_left_edges(self):
        m = generate_rect_mesh(8, 8)
        p = tag_boundary(m, ["left"])
        assert (p.n_gamma0, len(m.boundary_edges)) == (8, 32)
        assert p.n_gamma0 + p.n_gamma1 == len(m.boundary_edges)

    def test_all_sides_pure_dirichlet(self):
        p = tag_boundary(generate_rect_mesh(8, 8), ALL)
        assert p.n_gamma1 == 0

    def test_empty_rejected(self):
        with pytest.raises(ConfigError, match="Gamma0 empty"):
            tag_boundary(generate_rect_mesh(8, 8), [])

    def test_box_selector(self):
        m = generate_rect_mesh(4, 4)
        p = tag_boundary(m, [{"box": [-0.1, -0.1, 0.6, 0.1]}])
        e = p.gamma0_edges(m)
        assert len(e) == 2
        assert np.all(m.vertices[e][..., 1] == 0)

    def test_unmatched_selector_warns(self):
        p = tag_boundary(generate_rect_mesh(4, 4), ["left", {"box": [5, 5, 6, 6]}])
        assert len(p.warnings) == 1 and "matches no boundary edge" in p.warnings[0]

    def test_two_components(self):
        m = generate_rect_mesh(4, 4)
        p = tag_boundary(m, ["left", "right"])
        assert p.n_gamma0 == 8 and p.n_gamma1 == 8

    def test_unknown_side(self):
        with pytest.raises(ConfigError, match="unknown side"):
            tag_boundary(generate_rect_mesh(2, 2), ["north"])


class TestIO:
    def test_round_trip(self, tmp_path):
        m = generate_rect_mesh(2, 2, 1, 1)
        p = tag_boundary(m, ["left", "top"])
        write_mesh(tmp_path / "m.phmesh", m, p)
        m2, p2, notes = read_mesh(tmp_path / "m.phmesh")
        assert np.array_equal(m2.vertices, m.vertices)
        assert np.array_equal(m2.triangles, m.triangles)
        assert np.array_equal(m2.boundary_edges, m.boundary_edges)
        assert np.array_equal(p2.tags, p.tags)
        assert notes == []

    def test_round_trip_irrational_coordinates(self, tmp_path):
        m = generate_rect_mesh(3, 3, 0.1, np.pi)
        p = tag_boundary(m, ["bottom"])
        write_mesh(tmp_path / "m.phmesh", m, p)
        assert np.array_equal(read_mesh(tmp_path / "m.phmesh")[0].vertices, m.vertices)

    def _text(self, m, p):
        lines = ["phmesh 1", f"vertices {m.n_vertices}"]
        lines += [f"{x!r} {y!r}" for x, y in m.vertices.tolist()]
        lines += [f"triangles {m.n_triangles}"] + [" ".join(map(str, t)) for t in m.triangles.tolist()]
        lines += [f"boundary {len(m.boundary_edges)}"]
        lines += [f"{a} {b} {'g0' if t == GAMMA0 else 'g1'}" for (a, b), t in zip(m.boundary_edges.tolist(), p.tags)]
        return lines

    def test_bad_index_line(self, tmp_path):
        m = generate_rect_mesh(2, 2)
        lines = self._text(m, tag_boundary(m, ["left"]))
        row = lines.index("triangles 8") + 3
        lines[row] = "0 1 999"
        (tmp_path / "bad.phmesh").write_text("\n".join(lines) + "\n")
        with pytest.raises(MeshError) as info:
            read_mesh(tmp_path / "bad.phmesh")
        assert info.value.line == row + 1
        assert "999 of 9" in str(info.value)

    def test_clockwise_fixed(self, tmp_path):
        m = generate_rect_mesh(2, 2)
        lines = self._text(m, tag_boundary(m, ["left"]))
        row = lines.index("triangles 8") + 1
        a, b, c = lines[row].split()
        lines[row] = f"{b} {a} {c}"
        (tmp_path / "cw.phmesh").write_text("\n".join(lines) + "\n")
        m2, _, notes = read_mesh(tmp_path / "cw.phmesh")
        assert len(notes) == 1 and "clockwise" in notes[0] and f"line {row + 1}" in notes[0]
        assert np.all(m2.areas() > 0)

    @pytest.mark.parametrize("mutate, fragment", [
        (lambda L: ["phmesh 2"] + L[1:], "header"),
        (lambda L: L[:2] + ["0.0"] + L[3:], "two coordinates"),
        (lambda L: L[:-1], "unexpected end"),
        (lambda L: L[:-1] + [L[-1].replace("g0", "gX").replace("g1", "gX")], "g0|g1"),
    ])
    def test_malformed(self, tmp_path, mutate, fragment):
        m = generate_rect_mesh(1, 1)
        lines = mutate(self._text(m, tag_boundary(m, ["left"])))
        (tmp_path / "x.phmesh").write_text("\n".join(lines) + "\n")
        with pytest.raises(MeshError, match=fragment.replace("|", r"\|")):
            read_mesh(tmp_path / "x.phmesh")


class TestCoefficients:
    def test_constant(self):
        m = generate_rect_mesh(4, 4)
        p = tag_boundary(m, ["left"])
        t = sample_coefficients(m, p, CoefficientSet.from_strings(rho="1", k="1"))
        assert np.all(t.rho == 1) and np.all(t.kinv == 1)
        assert np.all(t.T == np.eye(2))
        assert (t.rho_min, t.rho_max, t.k_min, t.k_max) == (1, 1, 1, 1)
        assert (t.T_eig_min, t.T_eig_max) == (1, 1)

    def test_linear_rho_bounds(self):
        m = generate_rect_mesh(8, 8)
        p = tag_boundary(m, ALL)
        t = sample_coefficients(m, p, CoefficientSet.from_strings(rho="1+0.5*x"))
        assert t.rho_min == pytest.approx(1.0, abs=1e-15)
        assert t.rho_max == pytest.approx(1.5, abs=1e-15)
        assert np.all((t.rho >= 1) & (t.rho <= 1.5))

    def test_indefinite_tensor(self):
        m = generate_rect_mesh(2, 2)
        p = tag_boundary(m, ALL)
        with pytest.raises(CoefficientError, match=r"T not positive definite at \("):
            sample_coefficients(m, p, CoefficientSet.from_strings(T11="-1"))

    def test_negative_rho_reports_point(self):
        m = generate_rect_mesh(2, 2)
        p = tag_boundary(m, ALL)
        with pytest.raises(CoefficientError, match=r"rho not positive at \(.*value -0.5"):
            sample_coefficients(m, p, CoefficientSet.from_strings(rho="x-0.5-x"))

    def test_missing_gain(self):
        m = generate_rect_mesh(2, 2)
        p = tag_boundary(m, ["left"])
        with pytest.raises(ConfigError) as info:
            sample_coefficients(m, p, CoefficientSet.from_strings())
        assert info.value.pointer == "/coefficients/k"

    def test_gain_unused_without_gamma1(self):
        m = generate_rect_mesh(2, 2)
        t = sample_coefficients(m, tag_boundary(m, ALL), CoefficientSet.from_strings())
        assert len(t.gamma1_edges) == 0

    def test_nonpositive_gain(self):
        m = generate_rect_mesh(2, 2)
        with pytest.raises(CoefficientError, match="k not positive"):
            sample_coefficients(m, tag_boundary(m, ["left"]), CoefficientSet.from_strings(k="y-0.5"))

    def test_tensor_off_diagonal(self):
        m = generate_rect_mesh(3, 3)
        t = sample_coefficients(m, tag_boundary(m, ALL),
                                CoefficientSet.from_strings(T11="2", T12="1", T22="2"))
        assert t.T_eig_min == pytest.approx(1.0) and t.T_eig_max == pytest.approx(3.0)
        assert np.array_equal(t.T[..., 0, 1], t.T[..., 1, 0])
