"""Axis rotations, rigid re-observation of skeleton frames and their derivatives.

Rotations are *coordinate transforms*: ``rot_axis(Z, g)`` re-expresses a point
in a coordinate system turned anticlockwise by ``g`` about Z, so the matrix is

    [[ cos g, sin g, 0],
     [-sin g, cos g, 0],
     [     0,     0, 1]]

and the X and Y forms follow the same cyclic pattern.  Every function
broadcasts over leading axes, so a whole batch of frames can be handled at
once; all arithmetic is float64.
"""

import numpy as np

X, Y, Z = 0, 1, 2
_AXES = {"X": X, "Y": Y, "Z": Z, "x": X, "y": Y, "z": Z, X: X, Y: Y, Z: Z}

# (fixed coordinate, first mixed, second mixed) for each axis, cyclic order
_PLANES = {X: (0, 1, 2), Y: (1, 2, 0), Z: (2, 0, 1)}


class GeometryError(ValueError):
    pass


def _axis(axis):
    try:
        return _AXES[axis]
    except (KeyError, TypeError):
        raise GeometryError(f"unknown axis {axis!r}") from None


def _check_finite(name, a):
    if not np.all(np.isfinite(a)):
        raise GeometryError(f"{name} must be finite")


def rot_axis(axis, angle):
    """Coordinate-transform matrix for an anticlockwise turn about one axis.

    ``angle`` may be a scalar or an array; the result has shape
    ``angle.shape + (3, 3)``.
    """
    k, a, b = _PLANES[_axis(axis)]
    angle = np.asarray(angle, dtype=np.float64)
    _check_finite("angle", angle)
    c, s = np.cos(angle), np.sin(angle)
    R = np.zeros(angle.shape + (3, 3))
    R[..., k, k] = 1.0
    R[..., a, a] = c
    R[..., a, b] = s
    R[..., b, a] = -s
    R[..., b, b] = c
    return R


def rot_axis_derivative(axis, angle):
    """Entry-wise derivative of :func:`rot_axis` with respect to the angle."""
    k, a, b = _PLANES[_axis(axis)]
    angle = np.asarray(angle, dtype=np.float64)
    _check_finite("angle", angle)
    c, s = np.cos(angle), np.sin(angle)
    D = np.zeros(angle.shape + (3, 3))
    D[..., a, a] = -s
    D[..., a, b] = c
    D[..., b, a] = -c
    D[..., b, b] = -s
    return D


def compose_rotation(angles):
    """R = Rx(alpha) @ Ry(beta) @ Rz(gamma) for ``angles[..., :3]``."""
    angles = np.asarray(angles, dtype=np.float64)
    _check_finite("angles", angles)
    Rx = rot_axis(X, angles[..., 0])
    Ry = rot_axis(Y, angles[..., 1])
    Rz = rot_axis(Z, angles[..., 2])
    return Rx @ Ry @ Rz


def compose_rotation_grad(angles):
    """Return (R, dR/dalpha, dR/dbeta, dR/dgamma)."""
    angles = np.asarray(angles, dtype=np.float64)
    Rx, Ry, Rz = (rot_axis(i, angles[..., i]) for i in (X, Y, Z))
    dRx, dRy, dRz = (rot_axis_derivative(i, angles[..., i]) for i in (X, Y, Z))
    return Rx @ Ry @ Rz, dRx @ Ry @ Rz, Rx @ dRy @ Rz, Rx @ Ry @ dRz


def transform_joint(v, R, d):
    """v' = R (v - d)."""
    v, R, d = (np.asarray(a, dtype=np.float64) for a in (v, R, d))
    return np.einsum("...ij,...j->...i", R, v - d)


def transform_frame(V, R, d):
    """Apply one shared (R, d) to every joint of ``V`` (shape ``(..., J, 3)``)."""
    V = np.asarray(V, dtype=np.float64)
    if V.ndim < 2 or V.shape[-2] == 0:
        raise GeometryError("frame must contain at least one joint")
    R = np.asarray(R, dtype=np.float64)
    d = np.asarray(d, dtype=np.float64)
    # rows of (V - d) times R^T == R applied to every joint
    return (V - d[..., None, :]) @ np.swapaxes(R, -1, -2)


def inverse_transform_frame(Vp, R, d):
    """Undo :func:`transform_frame`: v = R^T v' + d."""
    Vp = np.asarray(Vp, dtype=np.float64)
    return Vp @ np.asarray(R) + np.asarray(d)[..., None, :]


def backprop_transform(eps_vprime, V, angles, d):
    """Gradients of a loss through ``V' = transform_frame(V, R(angles), d)``.

    Returns ``(eps_angles, eps_d, eps_V)`` with shapes matching ``angles``,
    ``d`` and ``V``.
    """
    eps_vprime = np.asarray(eps_vprime, dtype=np.float64)
    V = np.asarray(V, dtype=np.float64)
    if eps_vprime.shape != V.shape:
        raise GeometryError(
            f"gradient shape {eps_vprime.shape} does not match frame shape {V.shape}"
        )
    d = np.asarray(d, dtype=np.float64)
    R, dRa, dRb, dRg = compose_rotation_grad(angles)
    # G[i, k] = sum_j eps_j[i] * (v_j - d)[k]; dL/dtheta = <dR/dtheta, G>
    G = np.swapaxes(eps_vprime, -1, -2) @ (V - d[..., None, :])
    eps_angles = np.stack(
        [np.sum(dR * G, axis=(-2, -1)) for dR in (dRa, dRb, dRg)], axis=-1
    )
    eps_V = eps_vprime @ R
    eps_d = -np.sum(eps_V, axis=-2)
    return eps_angles, eps_d, eps_V
