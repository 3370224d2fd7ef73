"""Binary container for :class:`OfflineBundle` (magic ``HRB1``).

All integers and floats are little-endian; floats are IEEE float64.

    offset  field
    0       b"HRB1"
    4       uint32 format version (1)
    8       uint32 mesh level n
    12      uint32 m (number of functionals)
    16      uint8  1 if interior multipliers are stored, else 0
    17      m sensor records: uint8 kind (0 gaussian, 1 point),
            float64 x, float64 y, float64 radius (0 for points)
    ...     N float64: u0_hat nodal values, N = (2**n + 1)**2
    ...     m representer records:
              float64 harmonicity_residual, solver_residual, h1_norm, x1_norm
              N float64 phi nodal values
              M float64 multipliers, M = (2**n - 1)**2 (only if flag set)
    ...     m*m float64 Gramian, row-major, G[i, j] = lambda_j(phi_i)
    ...     m float64 lambda(u0_hat)
    ...     uint32 k, then k diagnostics entries:
              uint16 name length, UTF-8 name, float64 value

Writing a bundle that was read back produces identical bytes.
"""
from __future__ import annotations

import io
import struct
from pathlib import Path

import numpy as np

from .fem import FeFunction
from .functionals import GaussianAverage, PointEval, SensorGrid
from .mesh import build_mesh
from .recovery import OfflineBundle, RecoveryDiagnostics
from .representers import RepresenterSet, RepresenterSolution

MAGIC = b"HRB1"
VERSION = 1
_F8 = np.dtype("<f8")


class BundleFormatError(ValueError):
    pass


def _floats(buf: io.BytesIO, count: int) -> np.ndarray:
    raw = buf.read(count * 8)
    if len(raw) != count * 8:
        raise BundleFormatError("truncated bundle")
    return np.frombuffer(raw, dtype=_F8).astype(float)


def _unpack(buf: io.BytesIO, fmt: str):
    size = struct.calcsize(fmt)
    raw = buf.read(size)
    if len(raw) != size:
        raise BundleFormatError("truncated bundle")
    return struct.unpack(fmt, raw)


def dumps(bundle: OfflineBundle, include_multipliers: bool = True) -> bytes:
    mesh = bundle.mesh
    has_pi = include_multipliers and all(s.pi is not None for s in bundle.representers.solutions)
    out = io.BytesIO()
    out.write(MAGIC)
    out.write(struct.pack("<IIIB", VERSION, mesh.n, bundle.m, int(has_pi)))
    for f in bundle.sensors:
        if isinstance(f, GaussianAverage):
            out.write(struct.pack("<Bddd", 0, *f.center, f.radius))
        else:
            out.write(struct.pack("<Bddd", 1, *f.point, 0.0))
    out.write(bundle.u0_hat.coefficients.astype(_F8).tobytes())
    for s in bundle.representers.solutions:
        out.write(struct.pack("<dddd", s.harmonicity_residual, s.solver_residual, s.h1_norm, s.x1_norm))
        out.write(s.phi.coefficients.astype(_F8).tobytes())
        if has_pi:
            out.write(np.asarray(s.pi, dtype=_F8).tobytes())
    out.write(np.ascontiguousarray(bundle.gramian, dtype=_F8).tobytes())
    out.write(np.asarray(bundle.lambda_u0, dtype=_F8).tobytes())
    diag = bundle.diagnostics.to_dict()
    out.write(struct.pack("<I", len(diag)))
    for name, value in diag.items():
        key = name.encode("utf-8")
        out.write(struct.pack("<H", len(key)) + key + struct.pack("<d", value))
    return out.getvalue()


def loads(data: bytes) -> OfflineBundle:
    buf = io.BytesIO(data)
    if buf.read(4) != MAGIC:
        raise BundleFormatError("not an HRB1 bundle")
    version, n, m, has_pi = _unpack(buf, "<IIIB")
    if version != VERSION:
        raise BundleFormatError(f"unsupported bundle version {version}")
    mesh = build_mesh(n)
    functionals = []
    for _ in range(m):
        kind, x, y, r = _unpack(buf, "<Bddd")
        if kind == 0:
            functionals.append(GaussianAverage((x, y), r))
        elif kind == 1:
            functionals.append(PointEval((x, y)))
        else:
            raise BundleFormatError(f"unknown functional kind {kind}")
    sensors = SensorGrid(tuple(functionals))
    N, M = mesh.num_nodes, mesh.num_interior
    u0 = FeFunction(mesh, _floats(buf, N))
    solutions = []
    for _ in range(m):
        harm, res, h1, x1 = _unpack(buf, "<dddd")
        phi = FeFunction(mesh, _floats(buf, N))
        pi = _floats(buf, M) if has_pi else None
        solutions.append(RepresenterSolution(phi, pi, harm, res, h1, x1))
    gramian = _floats(buf, m * m).reshape(m, m)
    lambda_u0 = _floats(buf, m)
    (k,) = _unpack(buf, "<I")
    diag = {}
    for _ in range(k):
        (length,) = _unpack(buf, "<H")
        raw = buf.read(length)
        if len(raw) != length:
            raise BundleFormatError("truncated diagnostics name")
        name = raw.decode("utf-8")
        (diag[name],) = _unpack(buf, "<d")
    if buf.read(1):
        raise BundleFormatError("trailing bytes after diagnostics block")
    try:
        diagnostics = RecoveryDiagnostics(**diag)
    except TypeError as exc:
        raise BundleFormatError(f"diagnostics block mismatch: {exc}") from exc
    reps = RepresenterSet(mesh, sensors, tuple(solutions))
    return OfflineBundle(mesh, sensors, u0, reps, gramian, lambda_u0, diagnostics)


def write_bundle(bundle: OfflineBundle, path, include_multipliers: bool = True) -> Path:
    path = Path(path)
    path.write_bytes(dumps(bundle, include_multipliers))
    return path


def read_bundle(path) -> OfflineBundle:
    return loads(Path(path).read_bytes())
