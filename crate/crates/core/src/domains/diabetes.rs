//! Digital Diabetes domain.
//!
//! An arm's state is `(engagement, clinical, memory)`: engagement is one of
//! Engaged / Maintenance / Dropout, the clinical state is A1c below or at/above
//! 8, and memory holds the last two engagement values so that an intervention
//! reaches the clinical state with a delay. The joint kernel is the product of
//! an engagement kernel, a clinical kernel driven by memory slot 1, and a
//! deterministic memory shift.

use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{group_sizes, DomainError};
use crate::mdp::{ArmModel, ClinicalFlags, GroupedInstance, RewardComponents};

/// `3 (engagement) × 2 (clinical) × 9 (memory pairs)`.
pub const N_STATES: usize = 54;

/// Group table shipped with the crate (six age × sex groups).
pub const DEFAULT_GROUP_TABLE: &str = include_str!("../../fixtures/diabetes_groups.csv");

pub const TABLE_COLUMNS: [&str; 11] = [
    "p_I_MtoE",
    "p_I_MtoD",
    "p_I_EtoE",
    "p_U_MtoD",
    "p_noE_A1c_ge8",
    "p_noE_A1c_lt8",
    "p_E_A1c_ge8",
    "p_E_A1c_lt8",
    "frac",
    "sex",
    "age",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Engagement {
    Engaged = 0,
    Maintenance = 1,
    Dropout = 2,
}

impl Engagement {
    pub const ALL: [Engagement; 3] = [
        Engagement::Engaged,
        Engagement::Maintenance,
        Engagement::Dropout,
    ];

    fn from_index(i: usize) -> Self {
        Self::ALL[i]
    }

    pub fn reward(self) -> f64 {
        match self {
            Engagement::Dropout => 0.0,
            _ => 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Clinical {
    /// A1c < 8.
    Controlled = 0,
    /// A1c ≥ 8.
    High = 1,
}

impl Clinical {
    pub fn reward(self) -> f64 {
        match self {
            Clinical::Controlled => 1.0,
            Clinical::High => 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DiabetesState {
    pub engagement: Engagement,
    pub clinical: Clinical,
    /// `(M0, M1)`: engagement one and two rounds back.
    pub memory: (Engagement, Engagement),
}

impl DiabetesState {
    pub fn encode(&self) -> usize {
        (((self.engagement as usize) * 2 + self.clinical as usize) * 3 + self.memory.0 as usize) * 3
            + self.memory.1 as usize
    }

    pub fn decode(index: usize) -> Self {
        assert!(index < N_STATES, "diabetes state {index} out of range");
        let m1 = index % 3;
        let m0 = (index / 3) % 3;
        let c = (index / 9) % 2;
        let e = index / 18;
        Self {
            engagement: Engagement::from_index(e),
            clinical: if c == 0 {
                Clinical::Controlled
            } else {
                Clinical::High
            },
            memory: (Engagement::from_index(m0), Engagement::from_index(m1)),
        }
    }

    /// Intake state: Maintenance, A1c ≥ 8, no recent engagement.
    pub fn intake() -> Self {
        Self {
            engagement: Engagement::Maintenance,
            clinical: Clinical::High,
            memory: (Engagement::Maintenance, Engagement::Maintenance),
        }
    }
}

/// One row of the group parameter table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiabetesGroup {
    /// Intervened, Maintenance → Engaged.
    pub p_i_m_to_e: f64,
    /// Intervened, Maintenance → Dropout.
    pub p_i_m_to_d: f64,
    /// Intervened, Engaged → Engaged.
    pub p_i_e_to_e: f64,
    /// Not intervened, Maintenance → Dropout.
    pub p_u_m_to_d: f64,
    /// P(A1c < 8 next) without recent engagement, from A1c ≥ 8.
    pub p_noe_high: f64,
    /// ... from A1c < 8.
    pub p_noe_low: f64,
    /// P(A1c < 8 next) with engagement two rounds back, from A1c ≥ 8.
    pub p_e_high: f64,
    /// ... from A1c < 8.
    pub p_e_low: f64,
    pub frac: f64,
    pub sex: String,
    pub age: String,
}

impl DiabetesGroup {
    /// Next-engagement distribution `[Engaged, Maintenance, Dropout]`.
    pub fn engagement_kernel(&self, from: Engagement, action: usize) -> [f64; 3] {
        match (from, action) {
            (Engagement::Dropout, _) => [0.0, 0.0, 1.0],
            (Engagement::Engaged, 1) => [self.p_i_e_to_e, 1.0 - self.p_i_e_to_e, 0.0],
            (Engagement::Maintenance, 1) => [
                self.p_i_m_to_e,
                1.0 - self.p_i_m_to_e - self.p_i_m_to_d,
                self.p_i_m_to_d,
            ],
            (Engagement::Engaged, _) => [0.0, 1.0, 0.0],
            (Engagement::Maintenance, _) => [0.0, 1.0 - self.p_u_m_to_d, self.p_u_m_to_d],
        }
    }

    /// `P(A1c < 8 next | clinical, M1)`.
    pub fn p_controlled_next(&self, clinical: Clinical, m1: Engagement) -> f64 {
        match (m1 == Engagement::Engaged, clinical) {
            (true, Clinical::High) => self.p_e_high,
            (true, Clinical::Controlled) => self.p_e_low,
            (false, Clinical::High) => self.p_noe_high,
            (false, Clinical::Controlled) => self.p_noe_low,
        }
    }

    fn probabilities(&self) -> [f64; 9] {
        [
            self.p_i_m_to_e,
            self.p_i_m_to_d,
            self.p_i_e_to_e,
            self.p_u_m_to_d,
            self.p_noe_high,
            self.p_noe_low,
            self.p_e_high,
            self.p_e_low,
            self.frac,
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiabetesSpec {
    /// Weight on the engagement reward; `1 - alpha` goes to the clinical reward.
    pub alpha: f64,
    pub n_arms: usize,
    pub group_table: Vec<DiabetesGroup>,
    pub horizon: usize,
    pub budget: usize,
    pub start: DiabetesState,
}

impl Default for DiabetesSpec {
    fn default() -> Self {
        Self {
            alpha: 0.5,
            n_arms: 300,
            group_table: default_group_table(),
            horizon: 20,
            budget: 75,
            start: DiabetesState::intake(),
        }
    }
}

pub fn default_group_table() -> Vec<DiabetesGroup> {
    parse_group_table(DEFAULT_GROUP_TABLE.as_bytes()).expect("bundled group table is valid")
}

pub fn load_group_table(path: impl AsRef<Path>) -> Result<Vec<DiabetesGroup>, DomainError> {
    let file = std::fs::File::open(path)?;
    parse_group_table(file)
}

/// Parses a comma-separated table with a header row and one row per group.
///
/// Rows and columns in errors are 0-based data-row and column positions.
pub fn parse_group_table<R: Read>(reader: R) -> Result<Vec<DiabetesGroup>, DomainError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| DomainError::Parse {
            row: 0,
            column: 0,
            message: e.to_string(),
        })?
        .clone();
    for (column, expected) in TABLE_COLUMNS.iter().enumerate() {
        if headers.get(column) != Some(*expected) {
            return Err(DomainError::Parse {
                row: 0,
                column,
                message: format!(
                    "header {:?}, expected {expected:?}",
                    headers.get(column).unwrap_or("")
                ),
            });
        }
    }
    let mut rows = Vec::new();
    for (row, record) in rdr.records().enumerate() {
        let record = record.map_err(|e| DomainError::Parse {
            row,
            column: 0,
            message: e.to_string(),
        })?;
        if record.len() != TABLE_COLUMNS.len() {
            return Err(DomainError::Parse {
                row,
                column: record.len().min(TABLE_COLUMNS.len()),
                message: format!("{} columns, expected {}", record.len(), TABLE_COLUMNS.len()),
            });
        }
        let mut p = [0.0; 9];
        for (column, slot) in p.iter_mut().enumerate() {
            let field = &record[column];
            *slot = field.parse().map_err(|_| DomainError::Parse {
                row,
                column,
                message: format!("{field:?} is not a number"),
            })?;
        }
        rows.push(DiabetesGroup {
            p_i_m_to_e: p[0],
            p_i_m_to_d: p[1],
            p_i_e_to_e: p[2],
            p_u_m_to_d: p[3],
            p_noe_high: p[4],
            p_noe_low: p[5],
            p_e_high: p[6],
            p_e_low: p[7],
            frac: p[8],
            sex: record[9].to_string(),
            age: record[10].to_string(),
        });
    }
    validate_group_table(&rows)?;
    Ok(rows)
}

pub fn validate_group_table(rows: &[DiabetesGroup]) -> Result<(), DomainError> {
    if rows.is_empty() {
        return Err(DomainError::Invalid("group table has no rows".into()));
    }
    for (row, g) in rows.iter().enumerate() {
        for (column, &value) in g.probabilities().iter().enumerate() {
            if !(0.0..=1.0).contains(&value) {
                return Err(DomainError::BadProbability { row, column, value });
            }
        }
        if g.p_i_m_to_e + g.p_i_m_to_d > 1.0 + 1e-12 {
            return Err(DomainError::BadProbability {
                row,
                column: 0,
                value: g.p_i_m_to_e + g.p_i_m_to_d,
            });
        }
    }
    let sum: f64 = rows.iter().map(|g| g.frac).sum();
    if (sum - 1.0).abs() > 1e-6 {
        return Err(DomainError::BadProbability {
            row: rows.len() - 1,
            column: 8,
            value: sum,
        });
    }
    Ok(())
}

/// Builds the 54-state arm for one group.
pub fn diabetes_arm(
    group: &DiabetesGroup,
    alpha: f64,
    group_id: usize,
) -> Result<ArmModel, DomainError> {
    let mut flat = vec![0.0; N_STATES * 2 * N_STATES];
    let mut rewards = vec![0.0; N_STATES];
    for s in 0..N_STATES {
        let st = DiabetesState::decode(s);
        rewards[s] = alpha * st.engagement.reward() + (1.0 - alpha) * st.clinical.reward();
        let p_low = group.p_controlled_next(st.clinical, st.memory.1);
        for a in 0..2 {
            let eng = group.engagement_kernel(st.engagement, a);
            for (e_next, &pe) in Engagement::ALL.iter().zip(&eng) {
                for (c_next, pc) in [(Clinical::Controlled, p_low), (Clinical::High, 1.0 - p_low)] {
                    let next = DiabetesState {
                        engagement: *e_next,
                        clinical: c_next,
                        memory: (st.engagement, st.memory.0),
                    };
                    flat[(s * 2 + a) * N_STATES + next.encode()] += pe * pc;
                }
            }
        }
    }
    Ok(ArmModel::from_flat(N_STATES, flat, rewards, group_id)?)
}

fn flags() -> (ClinicalFlags, RewardComponents) {
    let states: Vec<DiabetesState> = (0..N_STATES).map(DiabetesState::decode).collect();
    let flags = ClinicalFlags {
        high: states
            .iter()
            .map(|s| s.clinical == Clinical::High)
            .collect(),
        dropout: states
            .iter()
            .map(|s| s.engagement == Engagement::Dropout)
            .collect(),
    };
    let components = RewardComponents {
        names: vec!["engagement".into(), "clinical".into()],
        values: vec![
            states.iter().map(|s| s.engagement.reward()).collect(),
            states.iter().map(|s| s.clinical.reward()).collect(),
        ],
    };
    (flags, components)
}

pub fn build_diabetes(spec: &DiabetesSpec) -> Result<GroupedInstance, DomainError> {
    if !(0.0..=1.0).contains(&spec.alpha) {
        return Err(DomainError::Invalid(format!(
            "alpha {} outside [0, 1]",
            spec.alpha
        )));
    }
    validate_group_table(&spec.group_table)?;
    let fracs: Vec<f64> = spec.group_table.iter().map(|g| g.frac).collect();
    let sizes = group_sizes(&fracs, spec.n_arms)?;
    let mut arms = Vec::with_capacity(spec.n_arms);
    for (g, (&size, row)) in sizes.iter().zip(&spec.group_table).enumerate() {
        let arm = diabetes_arm(row, spec.alpha, g)?;
        arms.extend(std::iter::repeat_n(arm, size));
    }
    let (flags, components) = flags();
    Ok(GroupedInstance::new(
        arms,
        spec.horizon,
        spec.budget,
        vec![spec.start.encode(); spec.n_arms],
    )?
    .with_clinical_flags(flags)
    .with_reward_components(components))
}
