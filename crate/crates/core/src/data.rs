//! Dataset model: long-format longitudinal observations plus per-subject
//! baseline covariates and the observed survival outcome.
//!
//! Codings follow the data schema: sex Male=1/Female=0, race White=1/Black=0,
//! smoking Yes=1/No=0, event observed=1/censored=0. Times are years since
//! study entry.

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::features::Design;

/// Number of (sex, race) strata.
pub const N_STRATA: usize = 4;

/// Stratum index for a (sex, race) pair: `2*sex + race`.
pub fn stratum_index(sex: u8, race: u8) -> usize {
    2 * sex as usize + race as usize
}

/// Inverse of [`stratum_index`].
pub fn stratum_covariates(l: usize) -> (u8, u8) {
    ((l / 2) as u8, (l % 2) as u8)
}

/// One subject: baseline covariates, survival outcome, and per-factor
/// longitudinal records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectData {
    pub id: u64,
    pub sex: u8,
    pub race: u8,
    pub smoking: u8,
    /// Observed time: min(event time, censoring time).
    pub obs_time: f64,
    /// 1 = event observed, 0 = censored.
    pub event: bool,
    /// Per risk factor, (time, value) pairs sorted by time.
    pub obs: Vec<Vec<(f64, f64)>>,
}

impl SubjectData {
    pub fn stratum(&self) -> usize {
        stratum_index(self.sex, self.race)
    }

    /// Baseline covariate vector in model order: [sex, race, smoking].
    pub fn covariates(&self) -> [f64; 3] {
        [self.sex as f64, self.race as f64, self.smoking as f64]
    }
}

/// Validated collection of subjects, aligned with a factor list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub factor_names: Vec<String>,
    pub subjects: Vec<SubjectData>,
}

impl Dataset {
    pub fn n_subjects(&self) -> usize {
        self.subjects.len()
    }

    pub fn n_factors(&self) -> usize {
        self.factor_names.len()
    }

    /// Observed range [min, max] of each risk factor's measurements.
    pub fn factor_ranges(&self) -> Vec<(f64, f64)> {
        let mut ranges = vec![(f64::INFINITY, f64::NEG_INFINITY); self.n_factors()];
        for s in &self.subjects {
            for (g, obs) in s.obs.iter().enumerate() {
                for &(_, y) in obs {
                    ranges[g].0 = ranges[g].0.min(y);
                    ranges[g].1 = ranges[g].1.max(y);
                }
            }
        }
        ranges
    }

    /// Largest observed time.
    pub fn t_max(&self) -> f64 {
        self.subjects
            .iter()
            .map(|s| s.obs_time)
            .fold(0.0, f64::max)
    }

    /// Observed times of subjects with an event.
    pub fn event_times(&self) -> Vec<f64> {
        self.subjects
            .iter()
            .filter(|s| s.event)
            .map(|s| s.obs_time)
            .collect()
    }

    pub fn validate(&self) -> Result<(), Error> {
        if self.subjects.is_empty() {
            return Err(Error::config("dataset has no subjects"));
        }
        let mut any_obs = false;
        for s in &self.subjects {
            if s.obs.len() != self.n_factors() {
                return Err(Error::Dimension(format!(
                    "subject {} has {} factor series, expected {}",
                    s.id,
                    s.obs.len(),
                    self.n_factors()
                )));
            }
            if !(s.obs_time > 0.0) {
                return Err(Error::config(format!(
                    "subject {} has nonpositive observed time",
                    s.id
                )));
            }
            for obs in &s.obs {
                for &(t, _) in obs {
                    if t < 0.0 || t > s.obs_time {
                        return Err(Error::config(format!(
                            "subject {} has a record time outside [0, obs_time]",
                            s.id
                        )));
                    }
                }
                any_obs |= !obs.is_empty();
            }
        }
        if !any_obs {
            return Err(Error::config("dataset has no longitudinal records"));
        }
        Ok(())
    }
}

/// Declaration of one longitudinal risk factor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskFactorSpec {
    pub name: String,
    /// Guideline threshold anchoring the prior population average.
    pub guideline: f64,
    pub fixed_design: Design,
    pub random_design: Design,
}

impl RiskFactorSpec {
    pub fn linear(name: &str, guideline: f64) -> Self {
        RiskFactorSpec {
            name: name.to_string(),
            guideline,
            fixed_design: Design::linear(),
            random_design: Design::linear(),
        }
    }
}

/// Prior hyperparameters exposed in the run configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriorConfig {
    /// Multiplier on the risk-factor sd in the threshold coefficient priors.
    pub c: f64,
    /// Dirichlet concentrations by pattern size, decreasing, length J.
    pub dirichlet_a: Vec<f64>,
    /// Beta prior on the group exclusion probability.
    pub beta_a: f64,
    pub beta_b: f64,
    /// Scale of the inverse gamma prior on the slab variance.
    pub slab_t: f64,
}

impl Default for PriorConfig {
    fn default() -> Self {
        PriorConfig {
            c: 0.3,
            dirichlet_a: vec![1.0, 0.5],
            beta_a: 1.0,
            beta_b: 1.0,
            slab_t: 10.0,
        }
    }
}

/// Spline configuration for the log baseline hazard.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplineConfig {
    /// Number of basis functions.
    pub basis_size: usize,
    pub degree: usize,
}

impl Default for SplineConfig {
    fn default() -> Self {
        SplineConfig {
            basis_size: 5,
            degree: 3,
        }
    }
}

/// Full model declaration: risk factors, features, spline and priors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub factors: Vec<RiskFactorSpec>,
    pub priors: PriorConfig,
    pub spline: SplineConfig,
    /// Number of trajectory features per factor (value, area).
    pub n_features: usize,
    /// Observed [lo, hi] range per factor; bounds the threshold slab.
    pub factor_ranges: Vec<(f64, f64)>,
    /// Per-factor sd used to scale the threshold coefficient priors.
    pub factor_sds: Vec<f64>,
}

impl ModelSpec {
    pub fn new(factors: Vec<RiskFactorSpec>) -> Self {
        let g = factors.len();
        ModelSpec {
            factors,
            priors: PriorConfig::default(),
            spline: SplineConfig::default(),
            n_features: 2,
            factor_ranges: vec![(f64::NEG_INFINITY, f64::INFINITY); g],
            factor_sds: vec![1.0; g],
        }
    }

    pub fn n_factors(&self) -> usize {
        self.factors.len()
    }

    /// Dimension of one subject's stacked random-effects vector.
    pub fn re_dim(&self) -> usize {
        self.factors.iter().map(|f| f.random_design.len()).sum()
    }

    /// Offset of factor `g`'s block in the stacked random-effects vector.
    pub fn re_offset(&self, g: usize) -> usize {
        self.factors[..g].iter().map(|f| f.random_design.len()).sum()
    }

    pub fn re_len(&self, g: usize) -> usize {
        self.factors[g].random_design.len()
    }

    /// Fill observed ranges and sds from a dataset.
    pub fn with_data_scales(mut self, data: &Dataset) -> Result<Self, Error> {
        if data.n_factors() != self.n_factors() {
            return Err(Error::Dimension(
                "dataset factor count does not match model".into(),
            ));
        }
        self.factor_ranges = data.factor_ranges();
        self.factor_sds = (0..self.n_factors())
            .map(|g| {
                let values: Vec<f64> = data
                    .subjects
                    .iter()
                    .flat_map(|s| s.obs[g].iter().map(|&(_, y)| y))
                    .collect();
                let n = values.len() as f64;
                if n < 2.0 {
                    return 1.0;
                }
                let mean: f64 = values.iter().sum::<f64>() / n;
                let var: f64 =
                    values.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / (n - 1.0);
                var.sqrt().max(1e-8)
            })
            .collect();
        Ok(self)
    }

    pub fn validate(&self) -> Result<(), Error> {
        if self.factors.is_empty() {
            return Err(Error::config("model needs at least one risk factor"));
        }
        if self.priors.c <= 0.0 {
            return Err(Error::config("prior multiplier C must be positive"));
        }
        if self.priors.dirichlet_a.len() != self.n_features {
            return Err(Error::config(format!(
                "dirichlet_a must have length {} (one per pattern size)",
                self.n_features
            )));
        }
        let decreasing = self
            .priors
            .dirichlet_a
            .windows(2)
            .all(|w| w[0] > w[1] && w[1] > 0.0);
        if !(decreasing || self.priors.dirichlet_a.len() == 1)
            || self.priors.dirichlet_a[0] <= 0.0
        {
            return Err(Error::config(
                "dirichlet_a must be strictly decreasing and positive",
            ));
        }
        if self.priors.beta_a <= 0.0 || self.priors.beta_b <= 0.0 || self.priors.slab_t <= 0.0 {
            return Err(Error::config("prior hyperparameters must be positive"));
        }
        if self.spline.basis_size < self.spline.degree + 1 {
            return Err(Error::config("spline basis size must exceed the degree"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stratum_roundtrip() {
        for sex in 0..2u8 {
            for race in 0..2u8 {
                let l = stratum_index(sex, race);
                assert_eq!(stratum_covariates(l), (sex, race));
            }
        }
    }

    #[test]
    fn re_offsets() {
        let spec = ModelSpec::new(vec![
            RiskFactorSpec::linear("bmi", 30.0),
            RiskFactorSpec::linear("sbp", 120.0),
        ]);
        assert_eq!(spec.re_dim(), 4);
        assert_eq!(spec.re_offset(0), 0);
        assert_eq!(spec.re_offset(1), 2);
    }

    #[test]
    fn validation_rejects_bad_dirichlet() {
        let mut spec = ModelSpec::new(vec![RiskFactorSpec::linear("bmi", 30.0)]);
        spec.priors.dirichlet_a = vec![0.5, 1.0];
        assert!(spec.validate().is_err());
        spec.priors.dirichlet_a = vec![1.0, 0.5];
        assert!(spec.validate().is_ok());
    }
}
