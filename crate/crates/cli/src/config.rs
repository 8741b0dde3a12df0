//! TOML configuration files for the three commands.
//!
//! Every file carries `schema_version = 1`. Demo keys are all optional;
//! sweep files must name `seeds`, `d_m`, `d_e` and `coupling`; separability
//! files name a `state` builder.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use declab::engine::{uniform_grid, Schedule, SweepSpec};
use declab::quantum::matrix_json::complex_pair;

use crate::CliError;

pub const SCHEMA_VERSION: u32 = 1;

fn schema() -> u32 {
    SCHEMA_VERSION
}

fn equal_alpha() -> [Complex64; 2] {
    let a = Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
    [a, a]
}

fn check_schema(v: u32) -> Result<(), CliError> {
    if v != SCHEMA_VERSION {
        return Err(CliError::Config(format!(
            "unsupported schema_version {v} (expected {SCHEMA_VERSION})"
        )));
    }
    Ok(())
}

pub fn parse<T: for<'de> Deserialize<'de>>(text: &str, origin: &str) -> Result<T, CliError> {
    toml::from_str(text).map_err(|e| CliError::Config(format!("{origin}: {e}")))
}

pub fn to_text<T: Serialize>(value: &T) -> String {
    toml::to_string(value).expect("configs serialize to TOML")
}

mod defaults {
    pub fn d_m() -> usize {
        4
    }
    pub fn d_e() -> usize {
        32
    }
    pub fn coupling() -> f64 {
        1.0
    }
    pub fn t_max() -> f64 {
        5.0
    }
    pub fn dt() -> f64 {
        0.1
    }
    pub fn no_leak() -> Vec<f64> {
        vec![0.0]
    }
    pub fn last() -> declab::engine::Schedule {
        declab::engine::Schedule::Last
    }
}

/// Single scenario run by `demo`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DemoConfig {
    #[serde(default = "schema")]
    pub schema_version: u32,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "equal_alpha", with = "complex_pair")]
    pub alpha: [Complex64; 2],
    #[serde(default = "defaults::d_m")]
    pub d_m: usize,
    #[serde(default = "defaults::d_e")]
    pub d_e: usize,
    #[serde(default = "defaults::coupling")]
    pub coupling: f64,
    #[serde(default)]
    pub leak: f64,
    #[serde(default = "defaults::t_max")]
    pub t_max: f64,
    #[serde(default = "defaults::dt")]
    pub dt: f64,
    #[serde(default)]
    pub level_spacing: f64,
    #[serde(default)]
    pub schedule: Schedule,
}

impl Default for DemoConfig {
    fn default() -> Self {
        parse("", "defaults").expect("empty demo config is valid")
    }
}

impl DemoConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        check_schema(self.schema_version)
    }
}

/// Parameter grid run by `sweep`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub schema_version: u32,
    #[serde(default)]
    pub master_seed: u64,
    pub seeds: usize,
    pub d_m: Vec<usize>,
    pub d_e: Vec<usize>,
    pub coupling: Vec<f64>,
    #[serde(default = "defaults::no_leak")]
    pub leak: Vec<f64>,
    #[serde(default = "equal_alpha", with = "complex_pair")]
    pub alpha: [Complex64; 2],
    #[serde(default = "defaults::t_max")]
    pub t_max: f64,
    #[serde(default = "defaults::dt")]
    pub dt: f64,
    #[serde(default)]
    pub level_spacing: f64,
    #[serde(default = "defaults::last")]
    pub schedule: Schedule,
}

impl SweepConfig {
    pub fn to_spec(&self) -> Result<SweepSpec, CliError> {
        check_schema(self.schema_version)?;
        Ok(SweepSpec {
            d_m: self.d_m.clone(),
            d_e: self.d_e.clone(),
            coupling: self.coupling.clone(),
            leak: self.leak.clone(),
            seeds: self.seeds,
            master_seed: self.master_seed,
            alpha: self.alpha,
            times: uniform_grid(self.t_max, self.dt)?,
            level_spacing: self.level_spacing,
            schedule: self.schedule.clone(),
        })
    }
}

/// A complex matrix as rows of `[re, im]` pairs.
pub type RawMatrix = Vec<Vec<[f64; 2]>>;

/// The state analysed by `separability`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum StateSpec {
    Bell,
    Singlet,
    Product,
    /// `p|Ψ⁻⟩⟨Ψ⁻| + (1 − p)I/4`.
    Werner { p: f64 },
    /// System–apparatus state, entangled or (with `decohered`) block-diagonal.
    Eq2Model {
        #[serde(default = "equal_alpha", with = "complex_pair")]
        alpha: [Complex64; 2],
        #[serde(default = "defaults::d_m")]
        d_m: usize,
        #[serde(default)]
        decohered: bool,
        #[serde(default)]
        seed: u64,
    },
    /// Explicit density matrix; the first `split_at` factors form side A.
    Matrix {
        dims: Vec<usize>,
        matrix: RawMatrix,
        #[serde(default = "one")]
        split_at: usize,
    },
}

fn one() -> usize {
    1
}

/// Two pointer mixtures whose distinguishability is reported.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PointerPair {
    pub m1: RawMatrix,
    pub m2: RawMatrix,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    pub gap_tolerance: Option<f64>,
    pub max_iterations: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeparabilityConfig {
    pub schema_version: u32,
    pub state: StateSpec,
    pub pointer: Option<PointerPair>,
    pub solver: Option<SolverConfig>,
}

impl SeparabilityConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        check_schema(self.schema_version)
    }
}
