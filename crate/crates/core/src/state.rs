//! One complete point in the posterior.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::data::{ModelSpec, N_STRATA};

/// A threshold is either a real cutoff or NA (no threshold: the feature acts
/// on the whole trajectory, or is excluded entirely).
pub type Threshold = Option<f64>;

/// Thresholds indexed by (risk factor, feature, stratum).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdSet {
    pub n_factors: usize,
    pub n_features: usize,
    values: Vec<Threshold>,
}

impl ThresholdSet {
    pub fn all_na(n_factors: usize, n_features: usize) -> Self {
        ThresholdSet {
            n_factors,
            n_features,
            values: vec![None; n_factors * n_features * N_STRATA],
        }
    }

    fn idx(&self, g: usize, j: usize, l: usize) -> usize {
        debug_assert!(g < self.n_factors && j < self.n_features && l < N_STRATA);
        (g * self.n_features + j) * N_STRATA + l
    }

    pub fn get(&self, g: usize, j: usize, l: usize) -> Threshold {
        self.values[self.idx(g, j, l)]
    }

    pub fn set(&mut self, g: usize, j: usize, l: usize, v: Threshold) {
        let i = self.idx(g, j, l);
        self.values[i] = v;
    }

    pub fn clear_feature(&mut self, g: usize, j: usize) {
        for l in 0..N_STRATA {
            self.set(g, j, l, None);
        }
    }

    pub fn is_feature_all_na(&self, g: usize, j: usize) -> bool {
        (0..N_STRATA).all(|l| self.get(g, j, l).is_none())
    }
}

/// Bi-level selection parameters: group directions, feature magnitudes,
/// slab variance, group exclusion probabilities, and the per-group pattern
/// probabilities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BsgsdParams {
    /// Group direction vectors d_g; the all-zero vector is the group spike.
    pub d: Vec<Vec<f64>>,
    /// Feature magnitudes tau_gj >= 0; zero means feature outside the
    /// current pattern.
    pub tau: Vec<Vec<f64>>,
    /// Slab variance of the half-normal on active magnitudes.
    pub s_sq: f64,
    /// Per-group exclusion probabilities.
    pub pi_group: Vec<f64>,
    /// Per-group pattern probabilities over the 2^J - 1 nonempty subsets.
    pub q: Vec<Vec<f64>>,
}

impl BsgsdParams {
    pub fn group_active(&self, g: usize) -> bool {
        self.d[g].iter().any(|&v| v != 0.0)
    }

    /// Feature indices with positive magnitude (the current pattern).
    pub fn support(&self, g: usize) -> Vec<usize> {
        self.tau[g]
            .iter()
            .enumerate()
            .filter(|(_, &t)| t > 0.0)
            .map(|(j, _)| j)
            .collect()
    }

    pub fn feature_active(&self, g: usize, j: usize) -> bool {
        self.group_active(g) && self.tau[g][j] > 0.0
    }

    /// Association coefficient alpha_gj = tau_gj * d_gj (zero when the group
    /// is excluded).
    pub fn alpha(&self, g: usize, j: usize) -> f64 {
        if self.group_active(g) {
            self.tau[g][j] * self.d[g][j]
        } else {
            0.0
        }
    }
}

/// Coefficients of the threshold prior mean for one risk factor, plus the
/// threshold precision. The intercept is never stored: it is recomputed from
/// the guideline constraint.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdCoeffs {
    pub m_f: f64,
    pub m_s: f64,
    pub m_r: f64,
    pub tau_sq: f64,
}

impl ThresholdCoeffs {
    pub fn zero() -> Self {
        ThresholdCoeffs {
            m_f: 0.0,
            m_s: 0.0,
            m_r: 0.0,
            tau_sq: 1.0,
        }
    }
}

/// One complete point in the posterior.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterState {
    /// Fixed effects per factor.
    pub beta: Vec<Vec<f64>>,
    /// Residual variances per factor.
    pub sigma_sq: Vec<f64>,
    /// Stacked random effects per subject.
    pub re: Vec<Vec<f64>>,
    /// Random-effects covariance, row-major.
    pub re_cov: Vec<Vec<f64>>,
    /// Baseline covariate coefficients [sex, race, smoking].
    pub delta: Vec<f64>,
    /// Log baseline hazard intercept and spline coefficients.
    pub gamma0: f64,
    pub gammas: Vec<f64>,
    /// Smoothness precision of the spline second differences.
    pub lambda: f64,
    pub bsgsd: BsgsdParams,
    pub thresholds: ThresholdSet,
    /// Threshold prior coefficients per factor.
    pub tcoef: Vec<ThresholdCoeffs>,
    /// P(threshold is NA | feature active), per (factor, feature).
    pub pi_na: Vec<Vec<f64>>,
}

impl ParameterState {
    pub fn alpha(&self, g: usize, j: usize) -> f64 {
        self.bsgsd.alpha(g, j)
    }

    pub fn feature_active(&self, g: usize, j: usize) -> bool {
        self.bsgsd.feature_active(g, j)
    }

    pub fn re_cov_matrix(&self) -> DMatrix<f64> {
        let p = self.re_cov.len();
        DMatrix::from_fn(p, p, |i, j| self.re_cov[i][j])
    }

    pub fn set_re_cov(&mut self, m: &DMatrix<f64>) {
        let p = m.nrows();
        self.re_cov = (0..p)
            .map(|i| (0..p).map(|j| m[(i, j)]).collect())
            .collect();
    }

    /// Structural invariants: dimensions, positivity, and the coupling
    /// between feature activity and threshold existence.
    pub fn check_invariants(&self, spec: &ModelSpec, n_subjects: usize) -> Result<(), String> {
        let g_n = spec.n_factors();
        if self.beta.len() != g_n || self.sigma_sq.len() != g_n {
            return Err("factor dimension mismatch".into());
        }
        for g in 0..g_n {
            if self.beta[g].len() != spec.factors[g].fixed_design.len() {
                return Err(format!("beta[{g}] length mismatch"));
            }
            if !(self.sigma_sq[g] > 0.0) {
                return Err(format!("sigma_sq[{g}] not positive"));
            }
            for (j, &t) in self.bsgsd.tau[g].iter().enumerate() {
                if t < 0.0 {
                    return Err(format!("tau[{g}][{j}] negative"));
                }
            }
            if self.bsgsd.support(g).is_empty() {
                return Err(format!("pattern for factor {g} is empty"));
            }
            for j in 0..spec.n_features {
                if !self.feature_active(g, j) && !self.thresholds.is_feature_all_na(g, j) {
                    return Err(format!(
                        "feature ({g},{j}) inactive but has a real threshold"
                    ));
                }
            }
            if !(self.tcoef[g].tau_sq > 0.0) {
                return Err(format!("threshold precision tau_sq[{g}] not positive"));
            }
        }
        if self.re.len() != n_subjects {
            return Err("random effects count mismatch".into());
        }
        let dim = spec.re_dim();
        if self.re.iter().any(|b| b.len() != dim) {
            return Err("random effects dimension mismatch".into());
        }
        if nalgebra::Cholesky::new(self.re_cov_matrix()).is_none() {
            return Err("re_cov not positive definite".into());
        }
        if !(self.bsgsd.s_sq > 0.0) || !(self.lambda > 0.0) {
            return Err("scale parameters must be positive".into());
        }
        Ok(())
    }
}
