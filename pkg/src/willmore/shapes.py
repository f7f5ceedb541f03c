"""Procedural meshes used by the presets and the test suite."""

import numpy as np

from .mesh import TriMesh

GOLDEN = (1.0 + np.sqrt(5.0)) / 2.0


def icosahedron(radius=1.0):
    """Regular icosahedron with the given circumradius (V=12, F=20)."""
    a, b = 1.0, GOLDEN
    verts = np.array(
        [
            (-a, b, 0), (a, b, 0), (-a, -b, 0), (a, -b, 0),
            (0, -a, b), (0, a, b), (0, -a, -b), (0, a, -b),
            (b, 0, -a), (b, 0, a), (-b, 0, -a), (-b, 0, a),
        ],
        dtype=np.float64,
    )
    verts *= radius / np.linalg.norm(verts[0])
    faces = np.array(
        [
            (0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11),
            (1, 5, 9), (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8),
            (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9),
            (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1),
        ],
        dtype=np.int64,
    )
    return TriMesh(verts, faces)


def _midpoint_split(positions, faces):
    """4-way split of every face at edge midpoints (no smoothing)."""
    n = positions.shape[0]
    directed = np.concatenate([faces[:, [0, 1]], faces[:, [1, 2]], faces[:, [2, 0]]])
    lo = directed.min(axis=1)
    hi = directed.max(axis=1)
    keys = lo * np.int64(n) + hi
    uniq, inverse = np.unique(keys, return_inverse=True)
    mids = 0.5 * (positions[uniq // n] + positions[uniq % n])
    m = inverse.reshape(3, -1) + n
    m01, m12, m20 = m[0], m[1], m[2]
    new_faces = np.concatenate(
        [
            np.column_stack([faces[:, 0], m01, m20]),
            np.column_stack([faces[:, 1], m12, m01]),
            np.column_stack([faces[:, 2], m20, m12]),
            np.column_stack([m01, m12, m20]),
        ]
    )
    return np.vstack([positions, mids]), new_faces


def icosphere(level, radius=1.0):
    """Icosahedron refined `level` times at edge midpoints, projected to a sphere."""
    base = icosahedron()
    positions, faces = base.positions, base.faces
    for _ in range(level):
        positions, faces = _midpoint_split(positions, faces)
    positions = positions / np.linalg.norm(positions, axis=1, keepdims=True) * radius
    return TriMesh(positions, faces)


def perturbed(mesh, amplitude, seed=0):
    """Mesh with iid uniform vertex noise of the given absolute amplitude."""
    rng = np.random.default_rng(seed)
    noise = rng.uniform(-amplitude, amplitude, size=mesh.positions.shape)
    return mesh.with_positions(mesh.positions + noise)


def tube(radius, height, segments=32, rings=9):
    """Open cylinder about the z-axis with boundary circles at z = +-height/2."""
    if rings < 2 or segments < 3:
        raise ValueError("tube needs at least 2 rings and 3 segments")
    phi = 2.0 * np.pi * np.arange(segments) / segments
    z = np.linspace(-0.5 * height, 0.5 * height, rings)
    ring_xy = np.column_stack([radius * np.cos(phi), radius * np.sin(phi)])
    positions = np.concatenate(
        [np.column_stack([ring_xy, np.full(segments, zi)]) for zi in z]
    )
    faces = []
    for r in range(rings - 1):
        lo = r * segments
        hi = lo + segments
        for s in range(segments):
            s1 = (s + 1) % segments
            faces.append((lo + s, lo + s1, hi + s))
            faces.append((lo + s1, hi + s1, hi + s))
    return TriMesh(positions, np.asarray(faces, dtype=np.int64))


def torus(major=1.0, minor=0.45, n_major=24, n_minor=12):
    """Closed torus about the z-axis."""
    u = 2.0 * np.pi * np.arange(n_major) / n_major
    v = 2.0 * np.pi * np.arange(n_minor) / n_minor
    uu, vv = np.meshgrid(u, v, indexing="ij")
    x = (major + minor * np.cos(vv)) * np.cos(uu)
    y = (major + minor * np.cos(vv)) * np.sin(uu)
    z = minor * np.sin(vv)
    positions = np.column_stack([x.ravel(), y.ravel(), z.ravel()])
    faces = []
    for i in range(n_major):
        for j in range(n_minor):
            a = i * n_minor + j
            b = i * n_minor + (j + 1) % n_minor
            c = ((i + 1) % n_major) * n_minor + j
            d = ((i + 1) % n_major) * n_minor + (j + 1) % n_minor
            faces.append((a, b, c))
            faces.append((b, d, c))
    return TriMesh(positions, np.asarray(faces, dtype=np.int64))


def bumpy_torus(n_major=28, n_minor=14, bump=0.18, seed=7):
    """Torus with a deterministic low-frequency radial perturbation.

    A stand-in for the paper-style handlebody experiments; the perturbation
    keeps the mesh valid while moving it well away from any Willmore
    critical point.
    """
    base = torus(1.0, 0.45, n_major, n_minor)
    p = base.positions
    rng = np.random.default_rng(seed)
    coeff = rng.uniform(-1.0, 1.0, size=(3, 3))
    phase = rng.uniform(0.0, 2.0 * np.pi, size=(3, 3))
    theta = np.arctan2(p[:, 1], p[:, 0])
    zscale = p[:, 2] / 0.45
    wav = np.zeros(p.shape[0])
    for i in range(3):
        for j in range(3):
            wav += coeff[i, j] * np.cos((i + 1) * theta + phase[i, j]) * np.cos(
                (j + 1) * zscale
            )
    factor = 1.0 + bump * wav / np.abs(wav).max()
    return base.with_positions(p * factor[:, None])


# -- constant-area/volume seed shapes for the vesicle experiment -------------


def _area_volume(mesh):
    p = mesh.positions[mesh.faces]
    cross = np.cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0])
    area = 0.5 * np.linalg.norm(cross, axis=1).sum()
    volume = np.einsum("ij,ij->", p[:, 0], np.cross(p[:, 1], p[:, 2])) / 6.0
    return area, volume


def reduced_volume(mesh):
    """6*sqrt(pi)*V / A^(3/2); equals 1 for a round sphere."""
    area, volume = _area_volume(mesh)
    return 6.0 * np.sqrt(np.pi) * volume / area**1.5


def _fit_area_volume(shape_fn, target_area, target_volume, lo, hi, iters=60):
    """Binary-search a shape parameter for reduced volume, then scale to area."""
    target_rv = 6.0 * np.sqrt(np.pi) * target_volume / target_area**1.5

    def rv(s):
        return reduced_volume(shape_fn(s))

    rv_lo, rv_hi = rv(lo), rv(hi)
    if not min(rv_lo, rv_hi) <= target_rv <= max(rv_lo, rv_hi):
        raise ValueError(
            f"target reduced volume {target_rv:.4f} outside shape family "
            f"range [{min(rv_lo, rv_hi):.4f}, {max(rv_lo, rv_hi):.4f}]"
        )
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if (rv(mid) - target_rv) * (rv_lo - target_rv) > 0:
            lo, rv_lo = mid, rv(mid)
        else:
            hi = mid
    mesh = shape_fn(0.5 * (lo + hi))
    area, _ = _area_volume(mesh)
    return mesh.with_positions(mesh.positions * np.sqrt(target_area / area))


def _capsule_positions(sphere_positions, half_height):
    """Map unit-sphere points onto a unit-radius spherocylinder.

    The polar angle is reparametrized proportionally to meridian arc length,
    which keeps the triangle sizes roughly uniform along the capsule.
    """
    p = sphere_positions
    rho = np.sqrt(p[:, 0] ** 2 + p[:, 1] ** 2)
    theta = np.arctan2(rho, p[:, 2])  # in [0, pi]
    h = half_height
    meridian = theta / np.pi * (np.pi + 2.0 * h)

    radial = np.empty_like(meridian)
    z = np.empty_like(meridian)
    cap = meridian <= 0.5 * np.pi
    radial[cap] = np.sin(meridian[cap])
    z[cap] = h + np.cos(meridian[cap])
    wall = (~cap) & (meridian <= 0.5 * np.pi + 2.0 * h)
    radial[wall] = 1.0
    z[wall] = h - (meridian[wall] - 0.5 * np.pi)
    south = meridian > 0.5 * np.pi + 2.0 * h
    m = meridian[south] - 0.5 * np.pi - 2.0 * h
    radial[south] = np.cos(m)
    z[south] = -h - np.sin(m)

    safe = np.where(rho > 0, rho, 1.0)
    out = np.empty_like(p)
    out[:, 0] = p[:, 0] / safe * radial
    out[:, 1] = p[:, 1] / safe * radial
    out[:, 2] = z
    return out


def prolate_seed(target_area=7.24, target_volume=1.0, level=4):
    """Elongated capsule (spherocylinder) matching the given area and volume.

    A capsule sits much closer to the prolate equilibrium branch than a
    stretched ellipsoid of equal reduced volume, which keeps the descent
    inside the prolate basin.
    """
    sphere = icosphere(level)

    def shape(h):
        return sphere.with_positions(_capsule_positions(sphere.positions, h))

    return _fit_area_volume(shape, target_area, target_volume, 0.05, 12.0)


def biconcave_seed(target_area=7.24, target_volume=1.0, level=4):
    """Discocyte-like shape matching the given area and volume.

    Uses the classical biconcave profile z -> z*(c0 + c1 rho^2 + c2 rho^4)/2
    over the unit sphere (rho = distance from the symmetry axis), with a
    vertical scale chosen to hit the target reduced volume.
    """
    sphere = icosphere(level)
    c0, c1, c2 = 0.207, 2.003, -1.123

    def shape(s):
        p = sphere.positions.copy()
        rho2 = p[:, 0] ** 2 + p[:, 1] ** 2
        p[:, 2] = 0.5 * s * p[:, 2] * (c0 + c1 * rho2 + c2 * rho2**2)
        return sphere.with_positions(p)

    return _fit_area_volume(shape, target_area, target_volume, 0.25, 1.6)
