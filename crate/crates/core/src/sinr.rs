//! SINR evaluation for a complete user ↔ access point assignment.
//!
//! A [`Scene`] precomputes every link power it can need: the unsteered power
//! from each access point to each user and, for steering, the power each
//! user receives from an access point whose beam is re-pointed at any given
//! user. Evaluating an assignment is then a table lookup per (user, active
//! AP) pair.

use std::collections::BTreeSet;
use std::fmt;
use std::io::{self, Write};

use thiserror::Error;

use crate::channel::{
    electrical_signal_power, received_optical_power_n, steered_spot_center, thermal_noise_power,
    AccessPointPose, ApId, BeamParams, ChannelError, ReceiverParams, RoomGeometry, UserPose,
    DEFAULT_QUADRATURE_N,
};

/// Minimum per-user SINR for the QoS constraint.
pub const DEFAULT_THRESHOLD_DB: f64 = 15.6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SinrError {
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error("user {0} is not assigned to any access point")]
    Unassigned(usize),
    #[error("access point {ap} serves more than one user ({users:?})")]
    SharedAp { ap: ApId, users: Vec<usize> },
    #[error("access point {0} does not exist in the scene")]
    UnknownAp(ApId),
    #[error("assignment covers {got} users but the scene has {expected}")]
    UserCount { expected: usize, got: usize },
    #[error("user index {0} out of range")]
    UserOutOfRange(usize),
    #[error("invalid scene: {0}")]
    Scene(String),
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(linear: f64) -> f64 {
    10.0 * linear.log10()
}

/// Association of each user with at most one access point. Index `k` holds
/// user `k + 1`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Assignment {
    serving: Vec<Option<ApId>>,
}

impl Assignment {
    pub fn new(serving: Vec<Option<ApId>>) -> Self {
        Self { serving }
    }

    pub fn complete(serving: impl IntoIterator<Item = ApId>) -> Self {
        Self {
            serving: serving.into_iter().map(Some).collect(),
        }
    }

    pub fn unassigned(n_users: usize) -> Self {
        Self {
            serving: vec![None; n_users],
        }
    }

    pub fn n_users(&self) -> usize {
        self.serving.len()
    }

    /// Serving AP of the 0-based user `k`.
    pub fn serving(&self, k: usize) -> Option<ApId> {
        self.serving.get(k).copied().flatten()
    }

    pub fn set(&mut self, k: usize, ap: Option<ApId>) {
        self.serving[k] = ap;
    }

    pub fn iter(&self) -> impl Iterator<Item = Option<ApId>> + '_ {
        self.serving.iter().copied()
    }

    pub fn is_complete(&self) -> bool {
        self.serving.iter().all(Option::is_some)
    }

    /// APs that serve two or more users, with the (1-based) users involved.
    pub fn shared_aps(&self) -> Vec<(ApId, Vec<usize>)> {
        let mut seen: Vec<(ApId, Vec<usize>)> = Vec::new();
        for (k, ap) in self.serving.iter().enumerate() {
            let Some(ap) = ap else { continue };
            match seen.iter_mut().find(|(a, _)| a == ap) {
                Some((_, users)) => users.push(k + 1),
                None => seen.push((*ap, vec![k + 1])),
            }
        }
        seen.retain(|(_, users)| users.len() > 1);
        seen.sort_by_key(|(ap, _)| *ap);
        seen
    }

    pub fn is_injective(&self) -> bool {
        self.shared_aps().is_empty()
    }

    /// Flattened binary association tensor `x[k][l][n]`, user-major.
    pub fn to_binary(&self, n_arrays: usize, aps_per_array: usize) -> Vec<bool> {
        let block = n_arrays * aps_per_array;
        let mut x = vec![false; self.serving.len() * block];
        for (k, ap) in self.serving.iter().enumerate() {
            if let Some(ap) = ap {
                x[k * block + (ap.array - 1) * aps_per_array + (ap.ap - 1)] = true;
            }
        }
        x
    }
}

impl fmt::Display for Assignment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, ap) in self.serving.iter().enumerate() {
            if k > 0 {
                f.write_str(" ")?;
            }
            match ap {
                Some(ap) => write!(f, "u{}->{}", k + 1, ap)?,
                None => write!(f, "u{}->-", k + 1)?,
            }
        }
        Ok(())
    }
}

/// The set of APs serving some user. Malformed (shared) assignments are
/// rejected.
pub fn active_aps(assignment: &Assignment) -> Result<BTreeSet<ApId>, SinrError> {
    if let Some((ap, users)) = assignment.shared_aps().into_iter().next() {
        return Err(SinrError::SharedAp { ap, users });
    }
    Ok(assignment.iter().flatten().collect())
}

/// Static description of the room, transmitters and users.
#[derive(Debug, Clone)]
pub struct Scene {
    pub room: RoomGeometry,
    pub beam: BeamParams,
    pub receiver: ReceiverParams,
    pub aps: Vec<AccessPointPose>,
    pub users: Vec<UserPose>,
    pub n_arrays: usize,
    pub aps_per_array: usize,
    pub max_steer_deg: f64,
    /// Zero interference between APs of the same array (per-AP frequency
    /// slots).
    pub slot_isolation: bool,
    noise_a2: f64,
    /// `[user][ap]` electrical power with the beam at its nominal center.
    fixed: Vec<Vec<f64>>,
    /// `[user][ap][target]` electrical power with the beam steered toward
    /// `target`.
    steered: Vec<Vec<Vec<f64>>>,
}

impl Scene {
    /// Builds a scene. `aps` must be listed array-major: index
    /// `(array - 1) * aps_per_array + (ap - 1)`.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        room: RoomGeometry,
        beam: BeamParams,
        receiver: ReceiverParams,
        aps: Vec<AccessPointPose>,
        aps_per_array: usize,
        users: Vec<UserPose>,
        max_steer_deg: f64,
        slot_isolation: bool,
    ) -> Result<Self, SinrError> {
        room.validate()?;
        beam.validate()?;
        receiver.validate()?;
        if aps_per_array == 0 || aps.is_empty() || !aps.len().is_multiple_of(aps_per_array) {
            return Err(SinrError::Scene(format!(
                "{} access points cannot be split into arrays of {}",
                aps.len(),
                aps_per_array
            )));
        }
        if !(max_steer_deg.is_finite() && max_steer_deg >= 0.0) {
            return Err(SinrError::Scene(format!(
                "maximum steering angle must be a non-negative number, got {max_steer_deg}"
            )));
        }
        for (j, ap) in aps.iter().enumerate() {
            let expected = ApId::new(j / aps_per_array + 1, j % aps_per_array + 1);
            if ap.id != expected {
                return Err(SinrError::Scene(format!(
                    "access point at position {j} is labelled {} but should be {expected}",
                    ap.id
                )));
            }
            ap.validate(&room)?;
        }
        for (k, user) in users.iter().enumerate() {
            if user.user_id != k + 1 {
                return Err(SinrError::Scene(format!(
                    "user at position {k} is labelled {} but should be {}",
                    user.user_id,
                    k + 1
                )));
            }
            user.validate(&room)?;
        }

        let link = |ap: &AccessPointPose, spot: [f64; 2], user: &UserPose| {
            received_optical_power_n(&beam, ap, spot, user, &receiver, DEFAULT_QUADRATURE_N)
                .map(|p| electrical_signal_power(p, &receiver))
        };
        let mut fixed = Vec::with_capacity(users.len());
        let mut steered = Vec::with_capacity(users.len());
        for user in &users {
            let mut row = Vec::with_capacity(aps.len());
            let mut steered_row = Vec::with_capacity(aps.len());
            for ap in &aps {
                row.push(link(ap, ap.nominal_spot_center, user)?);
                let per_target = users
                    .iter()
                    .map(|target| link(ap, steered_spot_center(ap, target, max_steer_deg), user))
                    .collect::<Result<Vec<_>, _>>()?;
                steered_row.push(per_target);
            }
            fixed.push(row);
            steered.push(steered_row);
        }

        Ok(Self {
            noise_a2: thermal_noise_power(&receiver),
            room,
            beam,
            receiver,
            n_arrays: aps.len() / aps_per_array,
            aps,
            users,
            aps_per_array,
            max_steer_deg,
            slot_isolation,
            fixed,
            steered,
        })
    }

    pub fn n_users(&self) -> usize {
        self.users.len()
    }

    pub fn n_aps(&self) -> usize {
        self.aps.len()
    }

    pub fn noise_a2(&self) -> f64 {
        self.noise_a2
    }

    pub fn ap_index(&self, id: ApId) -> Option<usize> {
        if id.array == 0 || id.ap == 0 || id.array > self.n_arrays || id.ap > self.aps_per_array {
            return None;
        }
        Some((id.array - 1) * self.aps_per_array + (id.ap - 1))
    }

    pub fn ap_id(&self, index: usize) -> ApId {
        self.aps[index].id
    }

    /// Electrical power received by user `k` from AP `j`, which serves user
    /// `target`. Without steering the target is irrelevant.
    pub fn link_power(&self, k: usize, j: usize, target: usize, steering: bool) -> f64 {
        if steering {
            self.steered[k][j][target]
        } else {
            self.fixed[k][j]
        }
    }

    /// Per-user (signal, interference) for serving AP indices `serving[k]`.
    /// The slice must be injective; this is the unchecked hot path used by
    /// the optimizers.
    pub fn signal_and_interference(&self, serving: &[usize], steering: bool) -> Vec<(f64, f64)> {
        serving
            .iter()
            .enumerate()
            .map(|(k, &j)| {
                let signal = self.link_power(k, j, k, steering);
                let array = j / self.aps_per_array;
                let interference = serving
                    .iter()
                    .enumerate()
                    .filter(|&(m, &other)| {
                        m != k && !(self.slot_isolation && other / self.aps_per_array == array)
                    })
                    .map(|(m, &other)| self.link_power(k, other, m, steering))
                    .sum();
                (signal, interference)
            })
            .collect()
    }

    /// Sum of linear SINR over users for serving AP indices (unchecked).
    pub fn sum_sinr_indices(&self, serving: &[usize], steering: bool) -> f64 {
        self.signal_and_interference(serving, steering)
            .into_iter()
            .map(|(s, i)| s / (i + self.noise_a2))
            .sum()
    }

    /// Linear SINR per user for serving AP indices (unchecked).
    pub fn sinr_indices(&self, serving: &[usize], steering: bool) -> Vec<f64> {
        self.signal_and_interference(serving, steering)
            .into_iter()
            .map(|(s, i)| s / (i + self.noise_a2))
            .collect()
    }

    /// Validates `assignment` against this scene and returns the AP index
    /// serving each user.
    pub fn resolve(&self, assignment: &Assignment) -> Result<Vec<usize>, SinrError> {
        if assignment.n_users() != self.n_users() {
            return Err(SinrError::UserCount {
                expected: self.n_users(),
                got: assignment.n_users(),
            });
        }
        active_aps(assignment)?;
        assignment
            .iter()
            .enumerate()
            .map(|(k, ap)| {
                let ap = ap.ok_or(SinrError::Unassigned(k + 1))?;
                self.ap_index(ap).ok_or(SinrError::UnknownAp(ap))
            })
            .collect()
    }

    pub fn assignment_from_indices(&self, serving: &[usize]) -> Assignment {
        Assignment::complete(serving.iter().map(|&j| self.ap_id(j)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SinrRow {
    pub user_id: usize,
    pub serving: ApId,
    pub signal_a2: f64,
    pub interference_a2: f64,
    pub noise_a2: f64,
    pub sinr_linear: f64,
    pub sinr_db: f64,
}

impl SinrRow {
    fn new(
        user_id: usize,
        serving: ApId,
        signal_a2: f64,
        interference_a2: f64,
        noise_a2: f64,
    ) -> Self {
        let sinr_linear = signal_a2 / (interference_a2 + noise_a2);
        Self {
            user_id,
            serving,
            signal_a2,
            interference_a2,
            noise_a2,
            sinr_linear,
            sinr_db: linear_to_db(sinr_linear),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SinrReport {
    pub rows: Vec<SinrRow>,
    pub sum_sinr_linear: f64,
    /// `10·log10` of the linear sum.
    pub sum_sinr_db: f64,
}

impl SinrReport {
    pub fn from_rows(rows: Vec<SinrRow>) -> Self {
        let sum_sinr_linear = rows.iter().map(|r| r.sinr_linear).sum();
        Self {
            rows,
            sum_sinr_linear,
            sum_sinr_db: linear_to_db(sum_sinr_linear),
        }
    }

    /// Sum of the per-user dB values.
    pub fn sum_of_db(&self) -> f64 {
        self.rows.iter().map(|r| r.sinr_db).sum()
    }

    pub const CSV_HEADER: &'static str =
        "user_id,array,ap,signal_a2,interference_a2,noise_a2,sinr_db,qos_bit";

    pub fn write_csv<W: Write>(&self, mut out: W, threshold_db: f64) -> io::Result<()> {
        writeln!(out, "{}", Self::CSV_HEADER)?;
        self.write_csv_rows(&mut out, threshold_db, "")
    }

    /// Writes data rows only, each prefixed by `prefix` (which should end
    /// in a comma when non-empty).
    pub fn write_csv_rows<W: Write>(
        &self,
        mut out: W,
        threshold_db: f64,
        prefix: &str,
    ) -> io::Result<()> {
        for (row, bit) in self.rows.iter().zip(qos_vector(self, threshold_db)) {
            writeln!(
                out,
                "{prefix}{},{},{},{:e},{:e},{:e},{},{}",
                row.user_id,
                row.serving.array,
                row.serving.ap,
                row.signal_a2,
                row.interference_a2,
                row.noise_a2,
                row.sinr_db,
                u8::from(bit)
            )?;
        }
        Ok(())
    }
}

/// Full SINR row for the 0-based user `k`.
pub fn sinr_of_user(
    k: usize,
    assignment: &Assignment,
    scene: &Scene,
    steering: bool,
) -> Result<SinrRow, SinrError> {
    if k >= scene.n_users() {
        return Err(SinrError::UserOutOfRange(k));
    }
    if assignment.n_users() != scene.n_users() {
        return Err(SinrError::UserCount {
            expected: scene.n_users(),
            got: assignment.n_users(),
        });
    }
    active_aps(assignment)?;
    let serving_id = assignment.serving(k).ok_or(SinrError::Unassigned(k + 1))?;
    let serving = scene
        .ap_index(serving_id)
        .ok_or(SinrError::UnknownAp(serving_id))?;
    let array = serving / scene.aps_per_array;

    let signal = scene.link_power(k, serving, k, steering);
    let mut interference = 0.0;
    for (m, ap) in assignment.iter().enumerate() {
        let Some(ap) = ap else { continue };
        if m == k {
            continue;
        }
        let j = scene.ap_index(ap).ok_or(SinrError::UnknownAp(ap))?;
        if scene.slot_isolation && j / scene.aps_per_array == array {
            continue;
        }
        interference += scene.link_power(k, j, m, steering);
    }
    Ok(SinrRow::new(
        k + 1,
        serving_id,
        signal,
        interference,
        scene.noise_a2(),
    ))
}

/// Report for every user of a complete assignment.
pub fn evaluate(
    assignment: &Assignment,
    scene: &Scene,
    steering: bool,
) -> Result<SinrReport, SinrError> {
    let serving = scene.resolve(assignment)?;
    Ok(report_from_indices(scene, &serving, steering))
}

pub(crate) fn report_from_indices(scene: &Scene, serving: &[usize], steering: bool) -> SinrReport {
    let rows = scene
        .signal_and_interference(serving, steering)
        .into_iter()
        .enumerate()
        .map(|(k, (s, i))| SinrRow::new(k + 1, scene.ap_id(serving[k]), s, i, scene.noise_a2()))
        .collect();
    SinrReport::from_rows(rows)
}

/// Sum of linear SINR over all users.
pub fn sum_sinr(assignment: &Assignment, scene: &Scene, steering: bool) -> Result<f64, SinrError> {
    Ok(evaluate(assignment, scene, steering)?.sum_sinr_linear)
}

/// QoS bit per user: set iff the user's SINR reaches `threshold_db`.
pub fn qos_vector(report: &SinrReport, threshold_db: f64) -> Vec<bool> {
    report
        .rows
        .iter()
        .map(|r| r.sinr_db >= threshold_db)
        .collect()
}

/// A failed allocation constraint.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    /// The user is not served by exactly one AP.
    OneApPerUser { user: usize },
    /// The AP serves more than one user.
    OneUserPerAp { ap: ApId, users: Vec<usize> },
    /// The user's SINR is below the minimum.
    MinSinr {
        user: usize,
        sinr_db: f64,
        threshold_db: f64,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::OneApPerUser { user } => {
                write!(
                    f,
                    "user {user} must be assigned to exactly one access point"
                )
            }
            Violation::OneUserPerAp { ap, users } => {
                write!(
                    f,
                    "access point {ap} may serve at most one user, serves {users:?}"
                )
            }
            Violation::MinSinr {
                user,
                sinr_db,
                threshold_db,
            } => write!(
                f,
                "user {user} SINR {sinr_db:.2} dB is below {threshold_db} dB"
            ),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Feasibility {
    pub feasible: bool,
    pub violations: Vec<Violation>,
}

/// Checks the structural constraints on `assignment` and, when a report is
/// given, the SINR threshold. Without a report only structure is checked.
pub fn is_feasible(
    assignment: &Assignment,
    report: Option<&SinrReport>,
    threshold_db: f64,
) -> Feasibility {
    let mut violations: Vec<Violation> = assignment
        .iter()
        .enumerate()
        .filter(|(_, ap)| ap.is_none())
        .map(|(k, _)| Violation::OneApPerUser { user: k + 1 })
        .collect();
    violations.extend(
        assignment
            .shared_aps()
            .into_iter()
            .map(|(ap, users)| Violation::OneUserPerAp { ap, users }),
    );
    if let Some(report) = report {
        violations.extend(
            report
                .rows
                .iter()
                .filter(|r| r.sinr_db < threshold_db)
                .map(|r| Violation::MinSinr {
                    user: r.user_id,
                    sinr_db: r.sinr_db,
                    threshold_db,
                }),
        );
    }
    Feasibility {
        feasible: violations.is_empty(),
        violations,
    }
}
