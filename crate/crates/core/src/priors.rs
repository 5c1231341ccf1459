//! Prior log-densities and prior sampling.
//!
//! Three layers:
//! - the threshold prior: NA when the feature is excluded, then a
//!   spike-and-slab between "no threshold" and a truncated-normal slab whose
//!   mean is an additive function of feature type, sex, and race, with the
//!   intercept constrained so the population-average threshold equals the
//!   guideline value;
//! - the bi-level selection prior on association parameters: a group-level
//!   multivariate spike-and-slab on directions, a feature-level half-normal
//!   spike-and-slab on magnitudes tied to a pattern drawn from Dirichlet
//!   pattern probabilities;
//! - weakly informative priors for everything the hierarchy leaves open
//!   (fixed effects, residual variances, random-effects covariance, baseline
//!   covariate effects, spline coefficients).
//!
//! Point masses (excluded groups, features outside the pattern, NA
//! thresholds) enter log-priors as their mixture weights; continuous parts
//! as densities.

use nalgebra::DMatrix;
use rand::Rng;

use crate::data::{Dataset, ModelSpec, N_STRATA, stratum_covariates};
use crate::dist;
use crate::error::Error;
use crate::features::FeatureKind;
use crate::state::{
    BsgsdParams, ParameterState, Threshold, ThresholdCoeffs, ThresholdSet,
};

/// Fixed-effect prior sd.
pub const BETA_PRIOR_SD: f64 = 100.0;
/// Residual variance prior: InvGamma(shape, scale).
pub const SIGMA_SQ_PRIOR_SHAPE: f64 = 0.01;
pub const SIGMA_SQ_PRIOR_SCALE: f64 = 0.01;
/// Baseline covariate effect prior sd.
pub const DELTA_PRIOR_SD: f64 = 10.0;
/// Spline anchor prior sd (intercept, first coefficient, first increment).
pub const SPLINE_ANCHOR_SD: f64 = 10.0;
/// Smoothness precision prior: Gamma(shape, rate).
pub const LAMBDA_PRIOR_SHAPE: f64 = 1.0;
pub const LAMBDA_PRIOR_RATE: f64 = 0.005;
/// Threshold precision prior: Gamma(shape, rate).
pub const TAU_SQ_PRIOR_SHAPE: f64 = 1.0;
pub const TAU_SQ_PRIOR_RATE: f64 = 1.0;
/// Slab variance prior: InvGamma(1, t) with t from the run configuration.
pub const SLAB_PRIOR_SHAPE: f64 = 1.0;

/// Empirical (sex, race) joint distribution and the marginal weights used by
/// the intercept constraint.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Weights {
    /// P(sex = 1).
    pub w1: f64,
    /// P(race = 1).
    pub w2: f64,
    /// Joint table indexed [sex][race].
    pub table: [[f64; 2]; 2],
}

/// Empirical joint frequencies of (sex, race) and the marginal weights.
pub fn compute_weights(data: &Dataset) -> Result<Weights, Error> {
    if data.subjects.is_empty() {
        return Err(Error::config("cannot compute covariate weights: no subjects"));
    }
    let mut table = [[0.0; 2]; 2];
    for s in &data.subjects {
        table[s.sex as usize][s.race as usize] += 1.0;
    }
    let n = data.subjects.len() as f64;
    for row in table.iter_mut() {
        for cell in row.iter_mut() {
            *cell /= n;
        }
    }
    Ok(Weights {
        w1: table[1][0] + table[1][1],
        w2: table[0][1] + table[1][1],
        table,
    })
}

/// Intercept of the threshold prior mean, constrained so the population
/// average equals the guideline value: gv - w1*m_S - w2*m_R.
pub fn constrained_intercept(gv: f64, m_s: f64, m_r: f64, w1: f64, w2: f64) -> f64 {
    gv - w1 * m_s - w2 * m_r
}

/// Threshold prior for one risk factor in a given hyperparameter state.
#[derive(Debug, Clone, Copy)]
pub struct ThresholdPrior<'a> {
    pub gv: f64,
    pub coeffs: &'a ThresholdCoeffs,
    /// P(threshold is NA | feature active).
    pub pi_na: f64,
    /// Slab truncation: observed range of the risk factor.
    pub range: (f64, f64),
    pub weights: &'a Weights,
}

impl ThresholdPrior<'_> {
    /// Slab mean for a stratum: m0 + m_F*FT + m_S*sex + m_R*race, with m0
    /// recomputed from the guideline constraint.
    pub fn mean(&self, ft: f64, sex: u8, race: u8) -> f64 {
        let m0 = constrained_intercept(
            self.gv,
            self.coeffs.m_s,
            self.coeffs.m_r,
            self.weights.w1,
            self.weights.w2,
        );
        m0 + self.coeffs.m_f * ft + self.coeffs.m_s * sex as f64 + self.coeffs.m_r * race as f64
    }

    pub fn sd(&self) -> f64 {
        (1.0 / self.coeffs.tau_sq).sqrt()
    }

    /// Log prior of one threshold. When the feature is excluded the
    /// threshold is degenerate at NA and contributes nothing.
    pub fn logpdf(&self, gamma: Threshold, ft: f64, sex: u8, race: u8, active: bool) -> f64 {
        if !active {
            assert!(gamma.is_none(), "inactive feature must have NA threshold");
            return 0.0;
        }
        match gamma {
            None => self.pi_na.ln(),
            Some(x) => {
                (1.0 - self.pi_na).ln()
                    + dist::truncated_normal_logpdf(
                        x,
                        self.mean(ft, sex, race),
                        self.sd(),
                        self.range.0,
                        self.range.1,
                    )
            }
        }
    }

    /// Draw a threshold given the feature is active: NA with probability
    /// pi_na, otherwise from the truncated slab.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, ft: f64, sex: u8, race: u8) -> Threshold {
        if rng.random::<f64>() < self.pi_na {
            None
        } else {
            Some(self.sample_slab(rng, ft, sex, race))
        }
    }

    pub fn sample_slab<R: Rng + ?Sized>(&self, rng: &mut R, ft: f64, sex: u8, race: u8) -> f64 {
        dist::sample_truncated_normal(
            rng,
            self.mean(ft, sex, race),
            self.sd(),
            self.range.0,
            self.range.1,
        )
    }
}

/// Priors on the threshold regression coefficients (sd C*sigma_g each) and
/// the threshold precision (Gamma(1,1)).
pub fn coefficient_prior_logpdf(coeffs: &ThresholdCoeffs, c: f64, sigma_sd: f64) -> f64 {
    assert!(c > 0.0 && sigma_sd > 0.0);
    let sd = c * sigma_sd;
    dist::normal_logpdf(coeffs.m_f, 0.0, sd)
        + dist::normal_logpdf(coeffs.m_s, 0.0, sd)
        + dist::normal_logpdf(coeffs.m_r, 0.0, sd)
        + dist::gamma_logpdf(coeffs.tau_sq, TAU_SQ_PRIOR_SHAPE, TAU_SQ_PRIOR_RATE)
}

/// A nonempty feature subset.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Pattern {
    pub members: Vec<usize>,
}

impl Pattern {
    pub fn contains(&self, j: usize) -> bool {
        self.members.contains(&j)
    }

    pub fn size(&self) -> usize {
        self.members.len()
    }
}

/// All 2^J - 1 nonempty subsets of {0..J-1}, ordered by size then
/// lexicographically within size.
pub fn enumerate_patterns(j: usize) -> Vec<Pattern> {
    assert!(j >= 1, "need at least one feature");
    let mut out: Vec<Pattern> = (1u32..(1 << j))
        .map(|mask| Pattern {
            members: (0..j).filter(|&k| mask & (1 << k) != 0).collect(),
        })
        .collect();
    out.sort_by(|a, b| (a.size(), &a.members).cmp(&(b.size(), &b.members)));
    out
}

/// Dirichlet concentration per pattern: a[size - 1].
pub fn pattern_concentrations(j: usize, a: &[f64]) -> Vec<f64> {
    assert_eq!(a.len(), j, "need one concentration per pattern size");
    enumerate_patterns(j)
        .iter()
        .map(|p| a[p.size() - 1])
        .collect()
}

/// Index of the pattern whose members equal `support`.
pub fn pattern_index(patterns: &[Pattern], support: &[usize]) -> Option<usize> {
    patterns.iter().position(|p| p.members == support)
}

/// Joint log prior of the selection layer.
pub fn bsgsd_log_prior(bp: &BsgsdParams, spec: &ModelSpec) -> f64 {
    let j_n = spec.n_features;
    let patterns = enumerate_patterns(j_n);
    let conc = pattern_concentrations(j_n, &spec.priors.dirichlet_a);
    let s_sd = bp.s_sq.sqrt();
    let mut lp = dist::inv_gamma_logpdf(bp.s_sq, SLAB_PRIOR_SHAPE, spec.priors.slab_t);
    for g in 0..spec.n_factors() {
        let pi_g = bp.pi_group[g];
        lp += dist::beta_logpdf(pi_g, spec.priors.beta_a, spec.priors.beta_b);
        lp += dist::dirichlet_logpdf(&bp.q[g], &conc);
        if bp.group_active(g) {
            lp += (1.0 - pi_g).ln();
            for &dv in &bp.d[g] {
                lp += dist::normal_logpdf(dv, 0.0, 1.0);
            }
        } else {
            lp += pi_g.ln();
        }
        let support = bp.support(g);
        let c = pattern_index(&patterns, &support)
            .expect("tau support must be a nonempty feature subset");
        lp += bp.q[g][c].ln();
        for &j in &support {
            let tau = bp.tau[g][j];
            assert!(tau >= 0.0, "tau must be nonnegative");
            lp += dist::half_normal_logpdf(tau, s_sd);
        }
    }
    lp
}

/// Log prior over all thresholds plus the uniform priors on pi_na.
pub fn thresholds_log_prior(state: &ParameterState, spec: &ModelSpec, weights: &Weights) -> f64 {
    let mut lp = 0.0;
    for g in 0..spec.n_factors() {
        for j in 0..spec.n_features {
            let pi_na = state.pi_na[g][j];
            if !(0.0..=1.0).contains(&pi_na) {
                return f64::NEG_INFINITY;
            }
            // pi_na ~ Beta(1,1): density 1 on [0,1].
            let prior = ThresholdPrior {
                gv: spec.factors[g].guideline,
                coeffs: &state.tcoef[g],
                pi_na,
                range: spec.factor_ranges[g],
                weights,
            };
            let active = state.feature_active(g, j);
            let ft = FeatureKind::from_index(j).ft();
            for l in 0..N_STRATA {
                let (sex, race) = stratum_covariates(l);
                lp += prior.logpdf(state.thresholds.get(g, j, l), ft, sex, race, active);
            }
        }
    }
    lp
}

/// Priors the hierarchy leaves unstated: fixed effects, residual variances,
/// random-effects covariance, baseline covariate effects, and the spline
/// coefficients with their second-difference smoothness penalty.
pub fn misc_priors_logpdf(state: &ParameterState, spec: &ModelSpec) -> f64 {
    let mut lp = 0.0;
    for g in 0..spec.n_factors() {
        for &b in &state.beta[g] {
            lp += dist::normal_logpdf(b, 0.0, BETA_PRIOR_SD);
        }
        lp += dist::inv_gamma_logpdf(
            state.sigma_sq[g],
            SIGMA_SQ_PRIOR_SHAPE,
            SIGMA_SQ_PRIOR_SCALE,
        );
    }
    let dim = spec.re_dim();
    lp += dist::inv_wishart_logpdf(
        &state.re_cov_matrix(),
        &DMatrix::identity(dim, dim),
        (dim + 2) as f64,
    );
    for &d in &state.delta {
        lp += dist::normal_logpdf(d, 0.0, DELTA_PRIOR_SD);
    }
    lp += spline_log_prior(state.gamma0, &state.gammas, state.lambda);
    lp += dist::gamma_logpdf(state.lambda, LAMBDA_PRIOR_SHAPE, LAMBDA_PRIOR_RATE);
    lp
}

/// Proper spline prior: normal anchors on the intercept, first coefficient,
/// and first increment, then N(0, 1/lambda) on second differences.
pub fn spline_log_prior(gamma0: f64, gammas: &[f64], lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return f64::NEG_INFINITY;
    }
    let mut lp = dist::normal_logpdf(gamma0, 0.0, SPLINE_ANCHOR_SD);
    if !gammas.is_empty() {
        lp += dist::normal_logpdf(gammas[0], 0.0, SPLINE_ANCHOR_SD);
    }
    if gammas.len() >= 2 {
        lp += dist::normal_logpdf(gammas[1] - gammas[0], 0.0, SPLINE_ANCHOR_SD);
    }
    let pen_sd = (1.0 / lambda).sqrt();
    for q in 2..gammas.len() {
        let d2 = gammas[q] - 2.0 * gammas[q - 1] + gammas[q - 2];
        lp += dist::normal_logpdf(d2, 0.0, pen_sd);
    }
    lp
}

/// Sum of squared second differences of the spline coefficients.
pub fn spline_penalty_ss(gammas: &[f64]) -> (usize, f64) {
    let mut ss = 0.0;
    let mut k = 0;
    for q in 2..gammas.len() {
        let d2 = gammas[q] - 2.0 * gammas[q - 1] + gammas[q - 2];
        ss += d2 * d2;
        k += 1;
    }
    (k, ss)
}

/// Total log prior of a parameter state.
pub fn log_prior(state: &ParameterState, spec: &ModelSpec, weights: &Weights) -> f64 {
    let mut lp = bsgsd_log_prior(&state.bsgsd, spec);
    for g in 0..spec.n_factors() {
        lp += coefficient_prior_logpdf(&state.tcoef[g], spec.priors.c, spec.factor_sds[g]);
    }
    lp += thresholds_log_prior(state, spec, weights);
    lp += misc_priors_logpdf(state, spec);
    lp
}

/// Forward draw of a full parameter state from the prior (random effects for
/// `n_subjects` included).
pub fn sample_prior<R: Rng + ?Sized>(
    spec: &ModelSpec,
    weights: &Weights,
    n_subjects: usize,
    rng: &mut R,
) -> ParameterState {
    let g_n = spec.n_factors();
    let j_n = spec.n_features;
    let patterns = enumerate_patterns(j_n);
    let conc = pattern_concentrations(j_n, &spec.priors.dirichlet_a);

    let s_sq = dist::sample_inv_gamma(rng, SLAB_PRIOR_SHAPE, spec.priors.slab_t);
    let s_sd = s_sq.sqrt();
    let mut bsgsd = BsgsdParams {
        d: Vec::with_capacity(g_n),
        tau: Vec::with_capacity(g_n),
        s_sq,
        pi_group: Vec::with_capacity(g_n),
        q: Vec::with_capacity(g_n),
    };
    for _ in 0..g_n {
        let pi_g = dist::sample_beta(rng, spec.priors.beta_a, spec.priors.beta_b);
        let q_g = dist::sample_dirichlet(rng, &conc);
        let active = rng.random::<f64>() >= pi_g;
        let d_g = if active {
            (0..j_n).map(|_| dist::sample_std_normal(rng)).collect()
        } else {
            vec![0.0; j_n]
        };
        let c = sample_categorical(rng, &q_g);
        let mut tau_g = vec![0.0; j_n];
        for &j in &patterns[c].members {
            tau_g[j] = dist::sample_half_normal(rng, s_sd);
        }
        bsgsd.pi_group.push(pi_g);
        bsgsd.q.push(q_g);
        bsgsd.d.push(d_g);
        bsgsd.tau.push(tau_g);
    }

    let mut tcoef = Vec::with_capacity(g_n);
    let mut pi_na: Vec<Vec<f64>> = Vec::with_capacity(g_n);
    for g in 0..g_n {
        let sd = spec.priors.c * spec.factor_sds[g];
        tcoef.push(ThresholdCoeffs {
            m_f: dist::sample_normal(rng, 0.0, sd),
            m_s: dist::sample_normal(rng, 0.0, sd),
            m_r: dist::sample_normal(rng, 0.0, sd),
            tau_sq: dist::sample_gamma(rng, TAU_SQ_PRIOR_SHAPE, TAU_SQ_PRIOR_RATE),
        });
        pi_na.push((0..j_n).map(|_| rng.random::<f64>()).collect());
    }

    let mut thresholds = ThresholdSet::all_na(g_n, j_n);
    for g in 0..g_n {
        for j in 0..j_n {
            if !bsgsd.feature_active(g, j) {
                continue;
            }
            let prior = ThresholdPrior {
                gv: spec.factors[g].guideline,
                coeffs: &tcoef[g],
                pi_na: pi_na[g][j],
                range: spec.factor_ranges[g],
                weights,
            };
            let ft = FeatureKind::from_index(j).ft();
            for l in 0..N_STRATA {
                let (sex, race) = stratum_covariates(l);
                thresholds.set(g, j, l, prior.sample(rng, ft, sex, race));
            }
        }
    }

    let beta = spec
        .factors
        .iter()
        .map(|f| {
            (0..f.fixed_design.len())
                .map(|_| dist::sample_normal(rng, 0.0, BETA_PRIOR_SD))
                .collect()
        })
        .collect();
    let sigma_sq = (0..g_n)
        .map(|_| dist::sample_inv_gamma(rng, SIGMA_SQ_PRIOR_SHAPE, SIGMA_SQ_PRIOR_SCALE))
        .collect();

    let dim = spec.re_dim();
    let d_cov = dist::sample_inv_wishart(rng, &DMatrix::identity(dim, dim), (dim + 2) as f64);
    let chol_l = nalgebra::Cholesky::new(d_cov.clone())
        .expect("inverse Wishart draw is positive definite")
        .l();
    let re = (0..n_subjects)
        .map(|_| dist::sample_mvn_zero(rng, &chol_l))
        .collect();

    let delta = (0..3)
        .map(|_| dist::sample_normal(rng, 0.0, DELTA_PRIOR_SD))
        .collect();

    let lambda = dist::sample_gamma(rng, LAMBDA_PRIOR_SHAPE, LAMBDA_PRIOR_RATE);
    let gamma0 = dist::sample_normal(rng, 0.0, SPLINE_ANCHOR_SD);
    let q_n = spec.spline.basis_size;
    let mut gammas = vec![0.0; q_n];
    if q_n >= 1 {
        gammas[0] = dist::sample_normal(rng, 0.0, SPLINE_ANCHOR_SD);
    }
    if q_n >= 2 {
        gammas[1] = gammas[0] + dist::sample_normal(rng, 0.0, SPLINE_ANCHOR_SD);
    }
    let pen_sd = (1.0 / lambda).sqrt();
    for q in 2..q_n {
        gammas[q] = 2.0 * gammas[q - 1] - gammas[q - 2] + dist::sample_normal(rng, 0.0, pen_sd);
    }

    let mut state = ParameterState {
        beta,
        sigma_sq,
        re,
        re_cov: Vec::new(),
        delta,
        gamma0,
        gammas,
        lambda,
        bsgsd,
        thresholds,
        tcoef,
        pi_na,
    };
    state.set_re_cov(&d_cov);
    state
}

pub fn sample_categorical<R: Rng + ?Sized>(rng: &mut R, probs: &[f64]) -> usize {
    let u: f64 = rng.random::<f64>() * probs.iter().sum::<f64>();
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}
