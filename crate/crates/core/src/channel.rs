//! Line-of-sight optical link between a ceiling access point and a user on
//! the receiving plane.
//!
//! Each access point is modeled as a single Gaussian beam pointing straight
//! down (or re-pointed toward its user when steering is enabled). The power
//! collected by a user is the beam intensity integrated over a square
//! detector aperture, gated by the receiver field of view. Diffuse
//! reflections are not modeled.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Detector quadrature grid size used when no explicit size is requested.
pub const DEFAULT_QUADRATURE_N: usize = 8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ChannelError {
    #[error("{0} must be finite")]
    NonFinite(&'static str),
    #[error("{0} must not be negative")]
    Negative(&'static str),
    #[error("{0} must be strictly positive")]
    NotPositive(&'static str),
    #[error("{field}: {reason}")]
    Invalid { field: &'static str, reason: String },
}

fn finite(value: f64, field: &'static str) -> Result<f64, ChannelError> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(ChannelError::NonFinite(field))
    }
}

fn non_negative(value: f64, field: &'static str) -> Result<f64, ChannelError> {
    if finite(value, field)? < 0.0 {
        Err(ChannelError::Negative(field))
    } else {
        Ok(value)
    }
}

fn positive(value: f64, field: &'static str) -> Result<f64, ChannelError> {
    if finite(value, field)? <= 0.0 {
        Err(ChannelError::NotPositive(field))
    } else {
        Ok(value)
    }
}

/// A point in room coordinates, meters. `z` is height above the floor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Point3 {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn xy(&self) -> [f64; 2] {
        [self.x, self.y]
    }
}

fn planar_distance(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoomGeometry {
    pub width_m: f64,
    pub length_m: f64,
    pub height_m: f64,
    pub rx_plane_height_m: f64,
}

impl RoomGeometry {
    pub fn validate(&self) -> Result<(), ChannelError> {
        positive(self.width_m, "width_m")?;
        positive(self.length_m, "length_m")?;
        positive(self.height_m, "height_m")?;
        positive(self.rx_plane_height_m, "rx_plane_height_m")?;
        if self.rx_plane_height_m >= self.height_m {
            return Err(ChannelError::Invalid {
                field: "rx_plane_height_m",
                reason: format!(
                    "receiving plane ({} m) must be below the ceiling ({} m)",
                    self.rx_plane_height_m, self.height_m
                ),
            });
        }
        Ok(())
    }

    /// Vertical distance between the ceiling and the receiving plane.
    pub fn drop_m(&self) -> f64 {
        self.height_m - self.rx_plane_height_m
    }

    pub fn contains_xy(&self, xy: [f64; 2]) -> bool {
        (0.0..=self.width_m).contains(&xy[0]) && (0.0..=self.length_m).contains(&xy[1])
    }
}

/// Gaussian beam emitted by one access point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BeamParams {
    /// 1/e² field radius at the source.
    pub waist_w0_m: f64,
    pub wavelength_m: f64,
    /// Optical power summed over the co-located VCSELs of the access point.
    pub total_power_w: f64,
}

impl BeamParams {
    pub fn validate(&self) -> Result<(), ChannelError> {
        positive(self.waist_w0_m, "waist_w0_m")?;
        positive(self.wavelength_m, "wavelength_m")?;
        positive(self.total_power_w, "total_power_w")?;
        Ok(())
    }

    /// Rayleigh range `π·W0²/λ`.
    pub fn rayleigh_range_m(&self) -> f64 {
        PI * self.waist_w0_m * self.waist_w0_m / self.wavelength_m
    }
}

/// Identifies an access point by its 1-based array and in-array index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ApId {
    pub array: usize,
    pub ap: usize,
}

impl ApId {
    pub const fn new(array: usize, ap: usize) -> Self {
        Self { array, ap }
    }
}

impl std::fmt::Display for ApId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}:{}", self.array, self.ap)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AccessPointPose {
    pub id: ApId,
    pub position: Point3,
    /// Where the unsteered beam axis meets the receiving plane.
    pub nominal_spot_center: [f64; 2],
}

impl AccessPointPose {
    /// An access point whose unsteered beam points straight down.
    pub fn pointing_down(id: ApId, position: Point3) -> Self {
        Self {
            id,
            position,
            nominal_spot_center: position.xy(),
        }
    }

    pub fn validate(&self, room: &RoomGeometry) -> Result<(), ChannelError> {
        for (v, f) in [
            (self.position.x, "ap.position.x"),
            (self.position.y, "ap.position.y"),
            (self.position.z, "ap.position.z"),
        ] {
            finite(v, f)?;
        }
        if (self.position.z - room.height_m).abs() > 1e-9 {
            return Err(ChannelError::Invalid {
                field: "ap.position.z",
                reason: format!(
                    "access point {} must sit on the ceiling (z = {} m), got z = {} m",
                    self.id, room.height_m, self.position.z
                ),
            });
        }
        if !room.contains_xy(self.nominal_spot_center) {
            return Err(ChannelError::Invalid {
                field: "ap.nominal_spot_center",
                reason: format!(
                    "spot center of access point {} ({:?}) lies outside the room footprint",
                    self.id, self.nominal_spot_center
                ),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReceiverParams {
    pub fov_half_angle_deg: f64,
    /// Square detector area; the aperture side is its square root.
    pub area_m2: f64,
    pub responsivity_a_per_w: f64,
    pub bandwidth_hz: f64,
    /// Preamplifier noise current spectral density.
    pub nsd_a_per_sqrthz: f64,
}

impl ReceiverParams {
    pub fn validate(&self) -> Result<(), ChannelError> {
        let fov = finite(self.fov_half_angle_deg, "fov_half_angle_deg")?;
        if !(fov > 0.0 && fov < 90.0) {
            return Err(ChannelError::Invalid {
                field: "fov_half_angle_deg",
                reason: format!("must lie strictly between 0 and 90 degrees, got {fov}"),
            });
        }
        positive(self.area_m2, "area_m2")?;
        positive(self.responsivity_a_per_w, "responsivity_a_per_w")?;
        positive(self.bandwidth_hz, "bandwidth_hz")?;
        positive(self.nsd_a_per_sqrthz, "nsd_a_per_sqrthz")?;
        Ok(())
    }

    pub fn detector_side_m(&self) -> f64 {
        self.area_m2.sqrt()
    }
}

/// A user terminal. The detector normal always points straight up.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UserPose {
    /// 1-based.
    pub user_id: usize,
    pub position: Point3,
}

impl UserPose {
    pub const fn new(user_id: usize, position: Point3) -> Self {
        Self { user_id, position }
    }

    pub fn validate(&self, room: &RoomGeometry) -> Result<(), ChannelError> {
        for (v, f) in [
            (self.position.x, "user.position.x"),
            (self.position.y, "user.position.y"),
            (self.position.z, "user.position.z"),
        ] {
            finite(v, f)?;
        }
        if !room.contains_xy(self.position.xy()) {
            return Err(ChannelError::Invalid {
                field: "user.position",
                reason: format!(
                    "user {} at ({}, {}) lies outside the room footprint",
                    self.user_id, self.position.x, self.position.y
                ),
            });
        }
        if (self.position.z - room.rx_plane_height_m).abs() > 1e-9 {
            return Err(ChannelError::Invalid {
                field: "user.position.z",
                reason: format!(
                    "user {} must sit on the receiving plane (z = {} m), got z = {} m",
                    self.user_id, room.rx_plane_height_m, self.position.z
                ),
            });
        }
        Ok(())
    }
}

/// Beam radius `W(d) = W0·sqrt(1 + (d/z_R)²)` at axial distance `d`.
pub fn beam_radius(beam: &BeamParams, axial_distance_m: f64) -> Result<f64, ChannelError> {
    let d = non_negative(axial_distance_m, "axial_distance_m")?;
    let ratio = d / beam.rayleigh_range_m();
    Ok(beam.waist_w0_m * ratio.hypot(1.0))
}

/// Gaussian transverse intensity for a beam of radius `radius_m` carrying
/// `power_w` in total.
pub fn gaussian_intensity(power_w: f64, radius_m: f64, radial_offset_m: f64) -> f64 {
    let w2 = radius_m * radius_m;
    2.0 * power_w / (PI * w2) * (-2.0 * radial_offset_m * radial_offset_m / w2).exp()
}

/// Intensity in W/m² at radial offset `r` from the beam axis, `d` meters
/// from the source.
pub fn beam_intensity(
    beam: &BeamParams,
    axial_distance_m: f64,
    radial_offset_m: f64,
) -> Result<f64, ChannelError> {
    let r = non_negative(radial_offset_m, "radial_offset_m")?;
    let w = beam_radius(beam, axial_distance_m)?;
    Ok(gaussian_intensity(beam.total_power_w, w, r))
}

/// Angle in degrees between the upward detector normal and the line of
/// sight to `source`.
pub fn incidence_angle_deg(source: &Point3, user: &UserPose) -> f64 {
    let dz = source.z - user.position.z;
    let lateral = planar_distance(source.xy(), user.position.xy());
    lateral.atan2(dz).to_degrees()
}

/// Whether `source` is inside the receiver field of view. The bound itself
/// is inside.
pub fn within_fov(source: &Point3, user: &UserPose, rx: &ReceiverParams) -> bool {
    incidence_angle_deg(source, user) <= rx.fov_half_angle_deg
}

/// Optical power collected by `user` from the beam of `ap` centered at
/// `spot_center_xy` on the receiving plane, using the default quadrature.
pub fn received_optical_power(
    beam: &BeamParams,
    ap: &AccessPointPose,
    spot_center_xy: [f64; 2],
    user: &UserPose,
    rx: &ReceiverParams,
) -> Result<f64, ChannelError> {
    received_optical_power_n(beam, ap, spot_center_xy, user, rx, DEFAULT_QUADRATURE_N)
}

/// As [`received_optical_power`] with an `n × n` midpoint grid over the
/// detector aperture.
pub fn received_optical_power_n(
    beam: &BeamParams,
    ap: &AccessPointPose,
    spot_center_xy: [f64; 2],
    user: &UserPose,
    rx: &ReceiverParams,
    n: usize,
) -> Result<f64, ChannelError> {
    if n == 0 {
        return Err(ChannelError::NotPositive("quadrature_n"));
    }
    finite(spot_center_xy[0], "spot_center.x")?;
    finite(spot_center_xy[1], "spot_center.y")?;
    if !within_fov(&ap.position, user, rx) {
        return Ok(0.0);
    }
    let drop = non_negative(ap.position.z - user.position.z, "vertical drop")?;
    let w = beam_radius(beam, drop)?;

    let side = rx.detector_side_m();
    let cell = side / n as f64;
    let origin = [
        user.position.x - side / 2.0 - spot_center_xy[0],
        user.position.y - side / 2.0 - spot_center_xy[1],
    ];
    let mut sum = 0.0;
    for i in 0..n {
        let dx = origin[0] + (i as f64 + 0.5) * cell;
        for j in 0..n {
            let dy = origin[1] + (j as f64 + 0.5) * cell;
            sum += gaussian_intensity(beam.total_power_w, w, dx.hypot(dy));
        }
    }
    Ok(sum * cell * cell)
}

/// Electrical signal power `(R·P)²` in A².
pub fn electrical_signal_power(optical_power_w: f64, rx: &ReceiverParams) -> f64 {
    let current = rx.responsivity_a_per_w * optical_power_w;
    current * current
}

/// Preamplifier thermal noise power `NSD²·B` in A².
pub fn thermal_noise_power(rx: &ReceiverParams) -> f64 {
    rx.nsd_a_per_sqrthz * rx.nsd_a_per_sqrthz * rx.bandwidth_hz
}

/// Spot center after tilting the beam of `ap` toward `user` by at most
/// `max_steer_deg`. Users inside the steerable cone get the spot centered
/// on them exactly.
pub fn steered_spot_center(ap: &AccessPointPose, user: &UserPose, max_steer_deg: f64) -> [f64; 2] {
    let nominal = ap.nominal_spot_center;
    let target = user.position.xy();
    let offset = planar_distance(nominal, target);
    if offset == 0.0 || max_steer_deg <= 0.0 {
        return nominal;
    }
    let drop = ap.position.z - user.position.z;
    let reach = drop * max_steer_deg.to_radians().tan();
    if offset <= reach {
        return target;
    }
    let scale = reach / offset;
    [
        nominal[0] + (target[0] - nominal[0]) * scale,
        nominal[1] + (target[1] - nominal[1]) * scale,
    ]
}
