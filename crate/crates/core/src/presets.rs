//! Built-in scenarios: a 4 m × 4 m × 3 m room with four ceiling arrays and
//! four users on the 1 m receiving plane.

use crate::channel::{ReceiverParams, RoomGeometry};
use crate::config::{
    ArrayConfig, BeamConfig, ConfigError, ScenarioConfig, SteeringConfig, UserConfig,
};
use crate::qlearning::Hyperparams;
use crate::sinr::DEFAULT_THRESHOLD_DB;

pub const PRESET_NAMES: [&str; 2] = ["scenario1", "scenario2"];

fn base(name: &str, users: [[f64; 3]; 4]) -> ScenarioConfig {
    ScenarioConfig {
        name: name.to_string(),
        room: RoomGeometry {
            width_m: 4.0,
            length_m: 4.0,
            height_m: 3.0,
            rx_plane_height_m: 1.0,
        },
        arrays: [
            [1.0, 1.0, 3.0],
            [1.0, 3.0, 3.0],
            [3.0, 1.0, 3.0],
            [3.0, 3.0, 3.0],
        ]
        .into_iter()
        .map(|position| ArrayConfig {
            position,
            ap_pitch_m: 0.1,
        })
        .collect(),
        beam: BeamConfig {
            waist_w0_m: 2e-6,
            wavelength_m: 850e-9,
            vcsel_power_w: 5e-3,
            vcsels_per_ap: 4,
        },
        receiver: ReceiverParams {
            fov_half_angle_deg: 40.0,
            area_m2: 55e-6,
            responsivity_a_per_w: 0.54,
            bandwidth_hz: 5e9,
            nsd_a_per_sqrthz: 4.47e-12,
        },
        users: users
            .into_iter()
            .map(|position| UserConfig { position })
            .collect(),
        steering: SteeringConfig::default(),
        threshold_db: DEFAULT_THRESHOLD_DB,
        slot_isolation: false,
        ql: Hyperparams::default(),
    }
}

/// Users spread out, one directly below each array.
pub fn scenario1() -> ScenarioConfig {
    base(
        "scenario1",
        [
            [1.0, 1.0, 1.0],
            [1.0, 3.0, 1.0],
            [3.0, 1.0, 1.0],
            [3.0, 3.0, 1.0],
        ],
    )
}

/// Users crowded around array 4.
pub fn scenario2() -> ScenarioConfig {
    base(
        "scenario2",
        [
            [3.5, 3.5, 1.0],
            [3.5, 2.5, 1.0],
            [2.5, 3.5, 1.0],
            [2.5, 2.5, 1.0],
        ],
    )
}

pub fn preset(name: &str) -> Result<ScenarioConfig, ConfigError> {
    match name {
        "scenario1" => Ok(scenario1()),
        "scenario2" => Ok(scenario2()),
        other => Err(ConfigError::UnknownPreset(other.to_string())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn preset_locations() {
        let s1 = scenario1();
        let arrays: Vec<_> = s1.arrays.iter().map(|a| a.position).collect();
        assert_eq!(
            arrays,
            vec![
                [1.0, 1.0, 3.0],
                [1.0, 3.0, 3.0],
                [3.0, 1.0, 3.0],
                [3.0, 3.0, 3.0]
            ]
        );
        let users: Vec<_> = s1.users.iter().map(|u| u.position).collect();
        assert_eq!(
            users,
            vec![
                [1.0, 1.0, 1.0],
                [1.0, 3.0, 1.0],
                [3.0, 1.0, 1.0],
                [3.0, 3.0, 1.0]
            ]
        );
        let users: Vec<_> = scenario2().users.iter().map(|u| u.position).collect();
        assert_eq!(
            users,
            vec![
                [3.5, 3.5, 1.0],
                [3.5, 2.5, 1.0],
                [2.5, 3.5, 1.0],
                [2.5, 2.5, 1.0]
            ]
        );
        assert_eq!(s1.beam_params().total_power_w, 0.02);
    }

    #[test]
    fn presets_validate() {
        for name in PRESET_NAMES {
            preset(name).unwrap().validate().unwrap();
        }
        assert!(preset("scenario3").is_err());
    }
}
