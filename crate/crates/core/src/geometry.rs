//! Coordinate, rotation, angle and delay computations.
//!
//! Global frame: BS array center at the origin, BS boresight along +x.
//! Local frames attach to each array; a direction `t` in the global frame
//! maps to `R^T t` in the frame of an array with rotation `R`. Azimuth is
//! measured in the local x-y plane from +x, elevation from the plane toward
//! +z, so a local unit direction is
//! `[cos(el)cos(az), cos(el)sin(az), sin(el)]`.

use nalgebra::{Matrix3, Vector3};

use crate::{Error, Result, SPEED_OF_LIGHT};

/// Global position in meters.
pub type Position3 = Vector3<f64>;

/// Azimuth/elevation pair in radians.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnglePair {
    /// Azimuth in (-pi, pi].
    pub azimuth: f64,
    /// Elevation in [-pi/2, pi/2].
    pub elevation: f64,
}

/// Euler orientation in radians. Only `yaw` is ever estimated; pitch and
/// roll are fixed mounting constants.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EulerOrientation {
    pub pitch: f64,
    pub roll: f64,
    pub yaw: f64,
}

impl EulerOrientation {
    pub fn yaw_only(yaw: f64) -> Self {
        Self { pitch: 0.0, roll: 0.0, yaw }
    }
}

/// Sum of the two local direction vectors at the RIS (incoming from the BS
/// and incoming from the user). Only the second and third components are
/// observable through a planar array whose elements have zero local
/// x-coordinate; `first` is kept for diagnostics only.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntermediateDirection {
    /// Unobservable through the array phase model.
    pub first: f64,
    pub second: f64,
    pub third: f64,
}

/// User state: position plus clock offset against the BS time base.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UserState {
    pub position: Position3,
    /// Clock offset in seconds; may be negative.
    pub clock_offset: f64,
}

/// RIS state: position plus mounting orientation (yaw unknown).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RisState {
    pub position: Position3,
    pub orientation: EulerOrientation,
}

/// Minimum separation below which two points are treated as coincident.
const MIN_SEPARATION: f64 = 1e-9;

/// Unit direction from `from` to `to` and the distance between them.
pub fn direction_and_distance(from: &Position3, to: &Position3) -> Result<(Vector3<f64>, f64)> {
    let diff = to - from;
    let dist = diff.norm();
    if dist < MIN_SEPARATION {
        return Err(Error::DegenerateGeometry { separation: dist });
    }
    Ok((diff / dist, dist))
}

/// Rotation matrix for intrinsic Z(yaw)·Y(pitch)·X(roll) composition.
pub fn euler_to_rotation(o: &EulerOrientation) -> Matrix3<f64> {
    let (sy, cy) = o.yaw.sin_cos();
    let (sp, cp) = o.pitch.sin_cos();
    let (sr, cr) = o.roll.sin_cos();
    let rz = Matrix3::new(cy, -sy, 0.0, sy, cy, 0.0, 0.0, 0.0, 1.0);
    let ry = Matrix3::new(cp, 0.0, sp, 0.0, 1.0, 0.0, -sp, 0.0, cp);
    let rx = Matrix3::new(1.0, 0.0, 0.0, 0.0, cr, -sr, 0.0, sr, cr);
    rz * ry * rx
}

/// Express a global direction in the local frame of an array with rotation `r`.
pub fn global_to_local_direction(r: &Matrix3<f64>, t: &Vector3<f64>) -> Vector3<f64> {
    r.transpose() * t
}

/// Azimuth/elevation of a local unit direction. At boresight-normal
/// directions (|z| = 1) azimuth is undefined; it is returned as 0 with the
/// gimbal flag set.
pub fn angles_from_local_direction(t: &Vector3<f64>) -> (AnglePair, bool) {
    let z = t.z.clamp(-1.0, 1.0);
    let elevation = z.asin();
    let gimbal = t.x.abs() < 1e-12 && t.y.abs() < 1e-12;
    let azimuth = if gimbal { 0.0 } else { t.y.atan2(t.x) };
    (AnglePair { azimuth, elevation }, gimbal)
}

/// Local unit direction for an azimuth/elevation pair.
pub fn local_direction_from_angles(a: &AnglePair) -> Vector3<f64> {
    let (saz, caz) = a.azimuth.sin_cos();
    let (sel, cel) = a.elevation.sin_cos();
    Vector3::new(cel * caz, cel * saz, sel)
}

/// Delays of the direct path and the RIS-relayed path, both including the
/// user clock offset `beta`.
pub fn path_delays(
    p_b: &Position3,
    p_r: &Position3,
    p_u: &Position3,
    beta: f64,
) -> Result<(f64, f64)> {
    let (_, d_bu) = direction_and_distance(p_b, p_u)?;
    let (_, d_br) = direction_and_distance(p_b, p_r)?;
    let (_, d_ru) = direction_and_distance(p_r, p_u)?;
    let tau_bu = d_bu / SPEED_OF_LIGHT + beta;
    let tau_r = (d_br + d_ru) / SPEED_OF_LIGHT + beta;
    Ok((tau_bu, tau_r))
}

/// Sum of the local incoming directions at the RIS (from BS and from user).
/// The second and third components are the two observable coupled angle
/// measurements.
pub fn intermediate_angles(
    p_b: &Position3,
    p_r: &Position3,
    p_u: &Position3,
    r_ris: &Matrix3<f64>,
) -> Result<IntermediateDirection> {
    let (t_rb, _) = direction_and_distance(p_r, p_b)?;
    let (t_ru, _) = direction_and_distance(p_r, p_u)?;
    let sum = global_to_local_direction(r_ris, &(t_rb + t_ru));
    Ok(IntermediateDirection { first: sum.x, second: sum.y, third: sum.z })
}
