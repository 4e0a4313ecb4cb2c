//! Scenario configuration: strict TOML schema, validation with key paths,
//! and conversion into a [`Scene`].
//!
//! Required tables: `room`, `beam`, `receiver`, `[[arrays]]`, `[[users]]`.
//! Optional keys and their defaults:
//!
//! | key                    | default     |
//! |------------------------|-------------|
//! | `name`                 | `"custom"`  |
//! | `threshold_db`         | `15.6`      |
//! | `slot_isolation`       | `false`     |
//! | `steering.enabled`     | `true`      |
//! | `steering.max_deg`     | `4.0`       |
//! | `arrays[].ap_pitch_m`  | `0.1`       |
//! | `ql.*`                 | see [`Hyperparams::default`] |
//!
//! Every array holds four access points on a 2×2 grid centered on the array
//! position, numbered row-major from the (−x, −y) corner:
//! AP 1 (−,−), AP 2 (+,−), AP 3 (−,+), AP 4 (+,+). Each beam points straight
//! down.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channel::{
    AccessPointPose, ApId, BeamParams, Point3, ReceiverParams, RoomGeometry, UserPose,
};
use crate::qlearning::Hyperparams;
use crate::sinr::{Scene, SinrError, DEFAULT_THRESHOLD_DB};

pub const APS_PER_ARRAY: usize = 4;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error at `{path}`: {message}")]
    Parse { path: String, message: String },
    #[error("invalid `{path}`: {message}")]
    Invalid { path: String, message: String },
    #[error("unknown preset `{0}` (expected scenario1 or scenario2)")]
    UnknownPreset(String),
}

fn invalid(path: impl Into<String>, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        path: path.into(),
        message: message.into(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArrayConfig {
    /// Array center on the ceiling.
    pub position: [f64; 3],
    #[serde(default = "default_pitch")]
    pub ap_pitch_m: f64,
}

fn default_pitch() -> f64 {
    0.1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BeamConfig {
    pub waist_w0_m: f64,
    pub wavelength_m: f64,
    /// Optical power of one VCSEL.
    pub vcsel_power_w: f64,
    pub vcsels_per_ap: u32,
}

impl BeamConfig {
    pub fn beam_params(&self) -> BeamParams {
        BeamParams {
            waist_w0_m: self.waist_w0_m,
            wavelength_m: self.wavelength_m,
            total_power_w: self.vcsel_power_w * f64::from(self.vcsels_per_ap),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UserConfig {
    pub position: [f64; 3],
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SteeringConfig {
    #[serde(default = "default_true")]
    pub enabled: bool,
    #[serde(default = "default_steer_deg")]
    pub max_deg: f64,
}

fn default_true() -> bool {
    true
}

fn default_steer_deg() -> f64 {
    4.0
}

impl Default for SteeringConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            max_deg: default_steer_deg(),
        }
    }
}

fn default_name() -> String {
    "custom".to_string()
}

fn default_threshold() -> f64 {
    DEFAULT_THRESHOLD_DB
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default = "default_name")]
    pub name: String,
    pub room: RoomGeometry,
    pub arrays: Vec<ArrayConfig>,
    pub beam: BeamConfig,
    pub receiver: ReceiverParams,
    pub users: Vec<UserConfig>,
    #[serde(default)]
    pub steering: SteeringConfig,
    #[serde(default = "default_threshold")]
    pub threshold_db: f64,
    #[serde(default)]
    pub slot_isolation: bool,
    #[serde(default)]
    pub ql: Hyperparams,
}

impl ScenarioConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let de = toml::Deserializer::parse(text).map_err(|e| ConfigError::Parse {
            path: "<document>".into(),
            message: e.to_string(),
        })?;
        let cfg: Self = serde_path_to_error::deserialize(de).map_err(|e| ConfigError::Parse {
            path: e.path().to_string(),
            message: e.inner().message().to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn n_users(&self) -> usize {
        self.users.len()
    }

    pub fn n_aps(&self) -> usize {
        self.arrays.len() * APS_PER_ARRAY
    }

    /// Checks every invariant, reporting the first failure with its key path.
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.room
            .validate()
            .map_err(|e| invalid(format!("room.{}", field_of(&e)), e.to_string()))?;
        self.beam_params()
            .validate()
            .map_err(|e| invalid(format!("beam.{}", field_of(&e)), e.to_string()))?;
        if self.beam.vcsels_per_ap == 0 {
            return Err(invalid("beam.vcsels_per_ap", "must be at least 1"));
        }
        self.receiver
            .validate()
            .map_err(|e| invalid(format!("receiver.{}", field_of(&e)), e.to_string()))?;
        if self.arrays.is_empty() {
            return Err(invalid("arrays", "at least one array is required"));
        }
        if self.users.is_empty() {
            return Err(invalid("users", "at least one user is required"));
        }
        if self.n_users() > self.n_aps() {
            return Err(invalid(
                "users",
                format!(
                    "{} users exceed the {} access points available; need K <= L·N",
                    self.n_users(),
                    self.n_aps()
                ),
            ));
        }
        if self.n_users() > crate::qlearning::MAX_USERS {
            return Err(invalid(
                "users",
                format!(
                    "at most {} users are supported",
                    crate::qlearning::MAX_USERS
                ),
            ));
        }
        for (i, array) in self.arrays.iter().enumerate() {
            if !(array.ap_pitch_m.is_finite() && array.ap_pitch_m >= 0.0) {
                return Err(invalid(
                    format!("arrays[{i}].ap_pitch_m"),
                    "must be a non-negative number",
                ));
            }
            for ap in self.array_aps(i) {
                ap.validate(&self.room)
                    .map_err(|e| invalid(format!("arrays[{i}].position"), e.to_string()))?;
            }
        }
        for (k, user) in self.user_poses().iter().enumerate() {
            user.validate(&self.room)
                .map_err(|e| invalid(format!("users[{k}].position"), e.to_string()))?;
        }
        if !(self.steering.max_deg.is_finite() && (0.0..90.0).contains(&self.steering.max_deg)) {
            return Err(invalid("steering.max_deg", "must lie in [0, 90) degrees"));
        }
        if !self.threshold_db.is_finite() {
            return Err(invalid("threshold_db", "must be finite"));
        }
        self.ql.validate().map_err(|e| match e {
            crate::qlearning::QlError::Hyperparam { field, reason } => {
                invalid(format!("ql.{field}"), reason)
            }
            other => invalid("ql", other.to_string()),
        })?;
        Ok(())
    }

    pub fn beam_params(&self) -> BeamParams {
        self.beam.beam_params()
    }

    fn array_aps(&self, i: usize) -> Vec<AccessPointPose> {
        let array = &self.arrays[i];
        let [cx, cy, cz] = array.position;
        let h = array.ap_pitch_m / 2.0;
        [(-h, -h), (h, -h), (-h, h), (h, h)]
            .iter()
            .enumerate()
            .map(|(n, &(dx, dy))| {
                AccessPointPose::pointing_down(
                    ApId::new(i + 1, n + 1),
                    Point3::new(cx + dx, cy + dy, cz),
                )
            })
            .collect()
    }

    pub fn access_points(&self) -> Vec<AccessPointPose> {
        (0..self.arrays.len())
            .flat_map(|i| self.array_aps(i))
            .collect()
    }

    pub fn user_poses(&self) -> Vec<UserPose> {
        self.users
            .iter()
            .enumerate()
            .map(|(k, u)| {
                UserPose::new(
                    k + 1,
                    Point3::new(u.position[0], u.position[1], u.position[2]),
                )
            })
            .collect()
    }

    pub fn to_scene(&self) -> Result<Scene, SinrError> {
        self.scene_with_users(self.user_poses())
    }

    /// Same room and transmitters with a different user population.
    pub fn scene_with_users(&self, users: Vec<UserPose>) -> Result<Scene, SinrError> {
        Scene::new(
            self.room,
            self.beam_params(),
            self.receiver,
            self.access_points(),
            APS_PER_ARRAY,
            users,
            self.steering.max_deg,
            self.slot_isolation,
        )
    }
}

fn field_of(e: &crate::channel::ChannelError) -> &'static str {
    use crate::channel::ChannelError::*;
    match e {
        NonFinite(f) | Negative(f) | NotPositive(f) => f,
        Invalid { field, .. } => field,
    }
}

pub fn load_config(path: impl AsRef<Path>) -> Result<ScenarioConfig, ConfigError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.display().to_string(),
        source,
    })?;
    ScenarioConfig::from_toml_str(&text)
}
