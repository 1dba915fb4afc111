import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wiretrack.errors import (
    DegenerateFaceError,
    EmptyProfileError,
    IndexOutOfRangeError,
    ModelParseError,
    NonPlanarFaceError,
)
from wiretrack.geometry import CameraIntrinsics, look_at, project_points, world_to_camera
from wiretrack.wiremodel import (
    Segment2D,
    box,
    face_visibility,
    load_model,
    model_to_json,
    project_profile,
    visible_edges,
)

SQUARE = {"unit": "m", "vertices": [[0, 0, 0], [1, 0, 0], [1, 1, 0], [0, 1, 0]], "faces": [[0, 1, 2, 3]]}


def test_cube_has_twelve_shared_edges(cube):
    assert len(cube.edges) == 12
    assert all(len(adj) == 2 for adj in cube.edge_faces)
    assert all(a < b for a, b in cube.edges)
    assert len(set(cube.edges)) == 12


def test_cube_normals_point_outward(cube):
    np.testing.assert_allclose(np.linalg.norm(cube.normals, axis=1), 1.0)
    assert np.all(np.einsum("ij,ij->i", cube.normals, cube.centroids) > 0)


def test_single_square_face():
    m = load_model(json.dumps(SQUARE))
    assert len(m.edges) == 4
    assert all(len(adj) == 1 for adj in m.edge_faces)


def test_index_out_of_range():
    doc = json.loads(model_to_json(box()))
    doc["faces"][0][1] = 99
    with pytest.raises(IndexOutOfRangeError):
        load_model(json.dumps(doc))


def test_non_planar_face():
    doc = dict(SQUARE, vertices=[[0, 0, 0], [1, 0, 0], [1, 1, 0.01], [0, 1, 0]])
    with pytest.raises(NonPlanarFaceError):
        load_model(json.dumps(doc))


def test_degenerate_face():
    doc = dict(SQUARE, vertices=[[0, 0, 0], [1, 0, 0], [2, 0, 0], [3, 0, 0]])
    with pytest.raises(DegenerateFaceError):
        load_model(json.dumps(doc))


@pytest.mark.parametrize(
    "text",
    ["not json", "[]", '{"vertices": []}', '{"unit": "mm", "vertices": [[0,0,0]], "faces": [[0,0,0]]}'],
)
def test_parse_errors(text):
    with pytest.raises(ModelParseError):
        load_model(text)


def test_model_json_round_trip(cube):
    again = load_model(model_to_json(cube))
    np.testing.assert_array_equal(again.vertices, cube.vertices)
    assert again.faces == cube.faces
    assert again.edges == cube.edges


# ------------------------------------------------------------------ visibility


def test_head_on_cube_sees_one_face(cube):
    pose = look_at([0, 0, -5], [0, 0, 0])
    vis = face_visibility(cube, pose)
    assert vis.sum() == 1
    assert cube.centroids[np.flatnonzero(vis)[0]][2] == pytest.approx(-0.5)
    assert len(visible_edges(cube, vis)) == 4


def test_corner_view_sees_three_faces(cube):
    vis = face_visibility(cube, look_at([5, 5, 5], [0, 0, 0]))
    assert vis.sum() == 3
    assert len(visible_edges(cube, vis)) == 9


def test_edge_on_face_is_hidden():
    m = load_model(json.dumps(SQUARE))
    # camera in the plane of the square
    vis = face_visibility(m, look_at([3, 0.5, 0], [0.5, 0.5, 0]))
    assert not vis[0]


def test_square_from_behind_has_no_edges():
    m = load_model(json.dumps(SQUARE))
    vis = face_visibility(m, look_at([0.5, 0.4, -3], [0.5, 0.5, 0]))
    assert visible_edges(m, vis) == []


def test_visible_edges_length_check(cube):
    with pytest.raises(ValueError):
        visible_edges(cube, [True, False])


@settings(max_examples=200)
@given(
    st.floats(0, 2 * np.pi),
    st.floats(-1.4, 1.4),
    st.floats(1.0, 20.0),
    st.tuples(st.floats(0.2, 3), st.floats(0.2, 3), st.floats(0.2, 3)),
)
def test_convex_exterior_view_properties(az, el, dist, size):
    m = box(size)
    # keep the camera outside the box's bounding sphere
    r = dist + np.linalg.norm(size) / 2
    c = r * np.array([np.cos(el) * np.cos(az), np.cos(el) * np.sin(az), np.sin(el)])
    vis = face_visibility(m, look_at(c, [0, 0, 0]))
    assert vis.sum() >= 1
    edges = set(visible_edges(m, vis))
    for ei, adj in enumerate(m.edge_faces):
        if vis[adj[0]] != vis[adj[1]]:
            assert ei in edges


# ------------------------------------------------------------------ projection


def test_head_on_corners(cube, k):
    prof = project_profile(cube, look_at([0, 0, -5], [0, 0, 0]), k)
    assert len(prof) == 4
    pts = np.array([p for s in prof for p in (s.p0, s.p1)])
    off = 500 * 0.5 / 4.5
    np.testing.assert_allclose(np.sort(np.unique(np.round(pts[:, 0], 6))), [320 - off, 320 + off], atol=0.1)
    np.testing.assert_allclose(np.sort(np.unique(np.round(pts[:, 1], 6))), [240 - off, 240 + off], atol=0.1)


def test_out_of_view_is_empty(cube, k):
    with pytest.raises(EmptyProfileError):
        project_profile(cube, look_at([0, 0, -5], [0, 40, -5.5]), k)


def test_edge_partly_outside_is_clipped_to_border(k):
    m = box((1.0, 1.0, 1.0))
    # close enough that the front face overflows the image
    pose = look_at([0, 0, -1.0], [0.4, 0, 0])
    prof = project_profile(m, pose, k)
    pts = np.array([p for s in prof for p in (s.p0, s.p1)])
    on_border = np.isclose(pts[:, 0], 0) | np.isclose(pts[:, 0], k.width - 1)
    on_border |= np.isclose(pts[:, 1], 0) | np.isclose(pts[:, 1], k.height - 1)
    assert on_border.any()


def _check_profile(prof, k, pose):
    for s in prof:
        for p in (s.p0, s.p1):
            assert 0 <= p[0] <= k.width - 1 and 0 <= p[1] <= k.height - 1
        uv = project_points(k, world_to_camera(pose, np.array([s.X0, s.X1])))
        np.testing.assert_allclose(uv, [s.p0, s.p1], atol=1e-6)
        z = world_to_camera(pose, np.array([s.X0, s.X1]))[:, 2]
        np.testing.assert_allclose([s.z0, s.z1], z, atol=1e-9)


@settings(max_examples=150, deadline=None)
@given(
    st.floats(0, 2 * np.pi),
    st.floats(-1.0, 1.0),
    st.floats(1.2, 8.0),
    st.tuples(st.floats(-0.6, 0.6), st.floats(-0.6, 0.6), st.floats(-0.6, 0.6)),
    st.booleans(),
)
def test_profile_clipping_and_provenance(az, el, dist, aim, distorted):
    m = box((1.0, 1.0, 1.0))
    k = CameraIntrinsics(500, 500, 320, 240, k1=-0.1 if distorted else 0.0, k2=0.01 if distorted else 0.0)
    c = dist * np.array([np.cos(el) * np.cos(az), np.cos(el) * np.sin(az), np.sin(el)])
    pose = look_at(c, aim)
    try:
        prof = project_profile(m, pose, k)
    except EmptyProfileError:
        return
    _check_profile(prof, k, pose)


def test_profile_at_corner_view(cube, k, corner_pose):
    prof = project_profile(cube, corner_pose, k)
    assert len(prof) == 9
    _check_profile(prof, k, corner_pose)


def test_segment2d_geometry():
    s = Segment2D([0, 0], [3, 4])
    assert s.length == pytest.approx(5.0)
    assert s.orientation == pytest.approx(np.arctan2(4, 3))
    r = Segment2D([3, 4], [0, 0])
    assert r.orientation == pytest.approx(s.orientation)
    assert 0 <= Segment2D([0, 0], [-1, 0]).orientation < np.pi
