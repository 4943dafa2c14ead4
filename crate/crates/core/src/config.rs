//! JSON run configurations.
//!
//! ```json
//! {
//!   "k": 2,
//!   "matrix": [[1, 1], [1, 1]],
//!   "V": {"depth": 1, "values": {"1": 1.5, "2": 0.5}},
//!   "mu0": "auto",
//!   "depth": 3, "tol": 1e-10, "seed": 42
//! }
//! ```
//!
//! Function tables list every admissible word of their depth exactly once.
//! `mu0` is `"auto"` (the fixed density `h_V dρ_A`) or a density table with
//! respect to `ρ_A`. Optional fields: `m` (complex filter, entries given as
//! numbers or `[re, im]` pairs) and `marginal_overrides` (level → density
//! table, or `"reference"` for `ρ_A` itself).

use std::collections::BTreeMap;
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::shift::{CylinderFunction, Subshift, Word};

/// A function table as written in configs and reports.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Table<T = f64> {
    pub depth: usize,
    pub values: BTreeMap<String, T>,
}

impl Table<f64> {
    pub fn from_function(f: &CylinderFunction) -> Self {
        Table {
            depth: f.depth(),
            values: f.entries().into_iter().map(|(w, v)| (w.to_string(), v)).collect(),
        }
    }
}

impl<T: Copy> Table<T> {
    /// Checks that the keys are exactly the admissible words of `depth`.
    pub fn to_function(&self, shift: &Arc<Subshift>, what: &str) -> Result<CylinderFunction<T>> {
        if self.depth == 0 {
            return Err(Error::Invalid(format!("{what}: depth must be at least 1")));
        }
        let mut parsed = BTreeMap::new();
        for (key, &value) in &self.values {
            let word = Word::parse(shift, key).map_err(|e| Error::Invalid(format!("{what}: word {key:?}: {e}")))?;
            if word.len() != self.depth {
                return Err(Error::Invalid(format!(
                    "{what}: word {key:?} has length {}, expected {}",
                    word.len(),
                    self.depth
                )));
            }
            if parsed.insert(word, value).is_some() {
                return Err(Error::Invalid(format!("{what}: word {key:?} listed twice")));
            }
        }
        let words = shift.admissible_words(self.depth);
        let mut values = Vec::with_capacity(words.len());
        for w in &words {
            match parsed.get(w) {
                Some(&v) => values.push(v),
                None => return Err(Error::Invalid(format!("{what}: missing value for word {w}"))),
            }
        }
        CylinderFunction::from_values(shift.clone(), self.depth, values)
    }
}

/// A complex entry: a plain number or `[re, im]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ComplexEntry {
    Real(f64),
    Pair([f64; 2]),
}

impl From<ComplexEntry> for Complex64 {
    fn from(e: ComplexEntry) -> Self {
        match e {
            ComplexEntry::Real(re) => Complex64::new(re, 0.0),
            ComplexEntry::Pair([re, im]) => Complex64::new(re, im),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MeasureSpec {
    Keyword(String),
    Density(Table),
}

/// The configuration file as written.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    pub k: usize,
    pub matrix: Vec<Vec<f64>>,
    #[serde(rename = "V")]
    pub weight: Table,
    #[serde(default)]
    pub mu0: Option<MeasureSpec>,
    #[serde(default)]
    pub m: Option<Table<ComplexEntry>>,
    #[serde(default)]
    pub marginal_overrides: BTreeMap<String, MeasureSpec>,
    #[serde(default)]
    pub depth: Option<usize>,
    #[serde(default)]
    pub tol: Option<f64>,
    #[serde(default)]
    pub n_max: Option<usize>,
    #[serde(default)]
    pub samples: Option<usize>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub steps: Option<usize>,
    #[serde(default)]
    pub workers: Option<usize>,
}

/// Numeric run parameters.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Params {
    pub depth: usize,
    pub tol: f64,
    /// Iteration cap for `h_V`.
    pub n_max: usize,
    pub samples: usize,
    pub seed: u64,
    /// Path steps for sampling and the number of levels checked by `verify`.
    pub steps: usize,
    pub workers: usize,
}

impl Default for Params {
    fn default() -> Self {
        Params {
            depth: 3,
            tol: 1e-10,
            n_max: 10_000,
            samples: 100_000,
            seed: 42,
            steps: 3,
            workers: 1,
        }
    }
}

#[derive(Clone, Debug)]
pub enum Mu0 {
    /// `h_V dρ_A`.
    Auto,
    /// A density with respect to `ρ_A`.
    Density(CylinderFunction),
}

#[derive(Clone, Debug)]
pub enum Override {
    Reference,
    Density(CylinderFunction),
}

/// A validated configuration.
#[derive(Clone, Debug)]
pub struct RunConfig {
    pub shift: Arc<Subshift>,
    pub weight: CylinderFunction,
    pub mu0: Mu0,
    pub filter: Option<CylinderFunction<Complex64>>,
    pub overrides: BTreeMap<usize, Override>,
    pub params: Params,
}

fn measure_spec(spec: &MeasureSpec, shift: &Arc<Subshift>, keyword: &str, what: &str) -> Result<Option<CylinderFunction>> {
    match spec {
        MeasureSpec::Keyword(k) if k == keyword => Ok(None),
        MeasureSpec::Keyword(k) => Err(Error::Invalid(format!("{what}: expected \"{keyword}\" or a table, got {k:?}"))),
        MeasureSpec::Density(t) => {
            let f = t.to_function(shift, what)?;
            if let Some((word, value)) = f.first_negative() {
                return Err(Error::NegativeMass { word, value });
            }
            Ok(Some(f))
        }
    }
}

impl RawConfig {
    pub fn validate(&self) -> Result<RunConfig> {
        if self.matrix.len() != self.k {
            return Err(Error::Invalid(format!(
                "k = {} but the matrix has {} rows",
                self.k,
                self.matrix.len()
            )));
        }
        let shift = Subshift::from_f64_rows(&self.matrix)?;
        let weight = self.weight.to_function(&shift, "V")?;
        if let Some((word, value)) = weight.first_negative() {
            return Err(Error::NegativeWeight { word, value });
        }
        if weight.values().iter().any(|v| !v.is_finite()) {
            return Err(Error::Invalid("V: values must be finite".into()));
        }
        let mu0 = match &self.mu0 {
            None => Mu0::Auto,
            Some(spec) => match measure_spec(spec, &shift, "auto", "mu0")? {
                None => Mu0::Auto,
                Some(f) => Mu0::Density(f),
            },
        };
        let filter = self
            .m
            .as_ref()
            .map(|t| t.to_function(&shift, "m").map(|f| f.map(Complex64::from)))
            .transpose()?;
        let mut overrides = BTreeMap::new();
        for (level, spec) in &self.marginal_overrides {
            let n: usize = level
                .parse()
                .map_err(|_| Error::Invalid(format!("marginal_overrides: bad level {level:?}")))?;
            if n == 0 {
                return Err(Error::Invalid("marginal_overrides: level 0 is mu0".into()));
            }
            let o = match measure_spec(spec, &shift, "reference", "marginal_overrides")? {
                None => Override::Reference,
                Some(f) => Override::Density(f),
            };
            overrides.insert(n, o);
        }
        let d = Params::default();
        let params = Params {
            depth: self.depth.unwrap_or(d.depth),
            tol: self.tol.unwrap_or(d.tol),
            n_max: self.n_max.unwrap_or(d.n_max),
            samples: self.samples.unwrap_or(d.samples),
            seed: self.seed.unwrap_or(d.seed),
            steps: self.steps.unwrap_or(d.steps),
            workers: self.workers.unwrap_or(d.workers),
        };
        params.validate()?;
        Ok(RunConfig {
            shift,
            weight,
            mu0,
            filter,
            overrides,
            params,
        })
    }
}

impl Params {
    pub fn validate(&self) -> Result<()> {
        if self.depth == 0 {
            return Err(Error::Invalid("depth must be at least 1".into()));
        }
        if !(self.tol > 0.0 && self.tol.is_finite()) {
            return Err(Error::Invalid(format!("tol must be positive, got {}", self.tol)));
        }
        if self.n_max == 0 {
            return Err(Error::Invalid("n_max must be at least 1".into()));
        }
        if self.workers == 0 {
            return Err(Error::Invalid("workers must be at least 1".into()));
        }
        Ok(())
    }
}

/// Parses and validates a configuration document.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let raw: RawConfig = serde_json::from_str(text).map_err(|e| Error::Invalid(format!("config: {e}")))?;
    raw.validate()
}
