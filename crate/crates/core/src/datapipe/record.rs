use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::Error;

/// Telemetry variable recorded during a cycle.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Variable {
    /// Temperature (°C).
    T,
    /// Voltage (V).
    V,
    /// Discharge capacity (Ah).
    Qd,
    /// Discharge capacity interpolated onto a fixed grid (Ah).
    QdLin,
    /// Temperature interpolated onto a fixed grid (°C).
    TdLin,
    /// Differential capacity dQ/dV (Ah/V).
    DqDv,
}

impl Variable {
    pub const ALL: [Variable; 6] = [
        Variable::T,
        Variable::V,
        Variable::Qd,
        Variable::QdLin,
        Variable::TdLin,
        Variable::DqDv,
    ];

    /// Field name used in dataset files.
    pub fn key(self) -> &'static str {
        match self {
            Variable::T => "T",
            Variable::V => "V",
            Variable::Qd => "Qd",
            Variable::QdLin => "Qd_lin",
            Variable::TdLin => "Td_lin",
            Variable::DqDv => "dQdV",
        }
    }
}

/// Summary of a series over one cycle.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Reduction {
    Mean,
    Var,
    Min,
    Max,
}

impl Reduction {
    pub const ALL: [Reduction; 4] = [
        Reduction::Mean,
        Reduction::Var,
        Reduction::Min,
        Reduction::Max,
    ];

    pub fn key(self) -> &'static str {
        match self {
            Reduction::Mean => "mean",
            Reduction::Var => "var",
            Reduction::Min => "min",
            Reduction::Max => "max",
        }
    }
}

pub const N_ATTRIBUTES: usize = 24;

/// A reduction applied to a variable, e.g. `var(dQdV)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Attribute {
    pub reduction: Reduction,
    pub variable: Variable,
}

impl Attribute {
    pub const fn new(reduction: Reduction, variable: Variable) -> Self {
        Self {
            reduction,
            variable,
        }
    }

    /// All 24 attributes, reduction-major.
    pub fn all() -> Vec<Attribute> {
        Reduction::ALL
            .iter()
            .flat_map(|&r| Variable::ALL.iter().map(move |&v| Attribute::new(r, v)))
            .collect()
    }

    /// Position in [`Attribute::all`] order.
    pub fn index(self) -> usize {
        self.reduction as usize * Variable::ALL.len() + self.variable as usize
    }

    pub fn file_stem(self) -> String {
        format!("{}_{}", self.reduction.key(), self.variable.key())
    }
}

impl fmt::Display for Attribute {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}({})", self.reduction.key(), self.variable.key())
    }
}

impl FromStr for Attribute {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        Attribute::all()
            .into_iter()
            .find(|a| a.to_string() == s.trim())
            .ok_or_else(|| Error::InvalidConfig(format!("unknown attribute `{s}`")))
    }
}

impl Serialize for Attribute {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Attribute {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Telemetry of one charge/discharge cycle.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CycleData {
    #[serde(rename = "T")]
    pub t: Vec<f64>,
    #[serde(rename = "V")]
    pub v: Vec<f64>,
    #[serde(rename = "Qd")]
    pub qd: Vec<f64>,
    #[serde(rename = "Qd_lin")]
    pub qd_lin: Vec<f64>,
    #[serde(rename = "Td_lin")]
    pub td_lin: Vec<f64>,
    #[serde(rename = "dQdV")]
    pub dqdv: Vec<f64>,
}

impl CycleData {
    pub fn series(&self, var: Variable) -> &[f64] {
        match var {
            Variable::T => &self.t,
            Variable::V => &self.v,
            Variable::Qd => &self.qd,
            Variable::QdLin => &self.qd_lin,
            Variable::TdLin => &self.td_lin,
            Variable::DqDv => &self.dqdv,
        }
    }

    pub fn series_mut(&mut self, var: Variable) -> &mut Vec<f64> {
        match var {
            Variable::T => &mut self.t,
            Variable::V => &mut self.v,
            Variable::Qd => &mut self.qd,
            Variable::QdLin => &mut self.qd_lin,
            Variable::TdLin => &mut self.td_lin,
            Variable::DqDv => &mut self.dqdv,
        }
    }

    /// Largest discharge capacity reached in the cycle.
    pub fn max_capacity(&self) -> f64 {
        self.qd.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// One cell's history. `cycles[0]` is cycle 1.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BatteryRecord {
    pub id: String,
    pub nominal_capacity: f64,
    /// Ground-truth cycle life; may exceed `cycles.len()` for truncated records.
    pub cycle_life: Option<u32>,
    pub cycles: Vec<CycleData>,
}

/// Which of the two prediction problems a pipeline feeds.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    /// Good/bad at the cycle threshold from the first 5 cycles.
    Classify,
    /// Cycle life from the first 100 cycles.
    Predict,
}

impl Task {
    /// Number of leading cycles the model consumes.
    pub fn cycles(self) -> usize {
        match self {
            Task::Classify => 5,
            Task::Predict => 100,
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Task::Classify => "classify",
            Task::Predict => "predict",
        })
    }
}

impl FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s {
            "classify" => Ok(Task::Classify),
            "predict" => Ok(Task::Predict),
            other => Err(Error::InvalidConfig(format!("unknown task `{other}`"))),
        }
    }
}
