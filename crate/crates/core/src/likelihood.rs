//! Longitudinal and survival log-likelihood contributions and the joint
//! log-posterior kernel.
//!
//! Two evaluation paths share the same definitions:
//! - plain functions that recompute everything from scratch (the reference
//!   path, used by the simulator and by tests);
//! - [`Engine`] with per-subject caches of quadrature nodes, basis values,
//!   and feature values, so sampler moves only recompute what they touch.
//!
//! The cumulative hazard integrates exp of a piecewise-smooth function:
//! Gauss-Legendre nodes are laid per piece, split at every interior spline
//! knot and at every threshold-crossing time of every active feature.

use nalgebra::{Cholesky, Dyn};

use crate::data::{Dataset, ModelSpec, SubjectData};
use crate::dist;
use crate::features::{
    self, FeatureKind, Trajectory, crossing_times, crossing_times_numeric,
};
use crate::priors::{self, Weights};
use crate::quad::GaussLegendre;
use crate::spline::{self, KnotVector};
use crate::state::ParameterState;

/// Nodes per smooth piece of the hazard integrand.
pub const GL_NODES: usize = 15;

fn trajectory<'a>(
    s_beta: &'a [f64],
    b_all: &'a [f64],
    spec: &ModelSpec,
    g: usize,
) -> Trajectory<'a> {
    let off = spec.re_offset(g);
    let len = spec.re_len(g);
    Trajectory::new(
        s_beta,
        &b_all[off..off + len],
        spec.factors[g].fixed_design,
        spec.factors[g].random_design,
    )
}

/// Threshold-crossing times of all active features for this subject in
/// `(0, upto)`, plus interior knots: the breakpoints of the hazard integrand.
pub fn split_points(
    s: &SubjectData,
    b: &[f64],
    state: &ParameterState,
    spec: &ModelSpec,
    kv: &KnotVector,
    upto: f64,
) -> Vec<f64> {
    let mut pts: Vec<f64> = kv
        .interior
        .iter()
        .copied()
        .filter(|&k| k > 0.0 && k < upto)
        .collect();
    let l = s.stratum();
    for g in 0..spec.n_factors() {
        let tr = trajectory(&state.beta[g], b, spec, g);
        for j in 0..spec.n_features {
            if !state.feature_active(g, j) {
                continue;
            }
            if let Some(gamma) = state.thresholds.get(g, j, l) {
                let crossings = match crossing_times(&tr, gamma, (0.0, upto)) {
                    Ok(c) => c,
                    Err(_) => crossing_times_numeric(&tr, gamma, (0.0, upto)),
                };
                pts.extend(crossings);
            }
        }
    }
    pts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    pts.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * upto.max(1.0));
    pts
}

/// Feature values f_gj(t) for all (g, j), flattened as g * n_features + j.
/// Inactive features contribute zero slots.
pub fn feature_row(
    s: &SubjectData,
    b: &[f64],
    state: &ParameterState,
    spec: &ModelSpec,
    t: f64,
    out: &mut [f64],
) {
    let l = s.stratum();
    for g in 0..spec.n_factors() {
        let tr = trajectory(&state.beta[g], b, spec, g);
        for j in 0..spec.n_features {
            let slot = g * spec.n_features + j;
            out[slot] = if state.feature_active(g, j) {
                features::feature_value(
                    &tr,
                    t,
                    FeatureKind::from_index(j),
                    state.thresholds.get(g, j, l),
                )
            } else {
                0.0
            };
        }
    }
}

/// log h_i(t): log baseline + covariate effects + active feature terms.
pub fn log_hazard(
    s: &SubjectData,
    b: &[f64],
    t: f64,
    state: &ParameterState,
    spec: &ModelSpec,
    kv: &KnotVector,
) -> f64 {
    let coeffs = spline::BaselineHazardCoeffs {
        gamma0: state.gamma0,
        gammas: state.gammas.clone(),
    };
    let mut lh = spline::log_baseline_hazard(t, &coeffs, kv);
    for (d, w) in state.delta.iter().zip(s.covariates()) {
        lh += d * w;
    }
    let mut feats = vec![0.0; spec.n_factors() * spec.n_features];
    feature_row(s, b, state, spec, t, &mut feats);
    for g in 0..spec.n_factors() {
        for j in 0..spec.n_features {
            lh += state.alpha(g, j) * feats[g * spec.n_features + j];
        }
    }
    lh
}

/// Integral of the hazard over `[a, b]` by crossing-split quadrature.
pub fn cumulative_hazard_between(
    s: &SubjectData,
    b_re: &[f64],
    state: &ParameterState,
    spec: &ModelSpec,
    kv: &KnotVector,
    gl: &GaussLegendre,
    a: f64,
    b: f64,
) -> f64 {
    if b <= a {
        return 0.0;
    }
    let splits = split_points(s, b_re, state, spec, kv, b);
    let mut total = 0.0;
    let mut lo = a;
    for &p in splits
        .iter()
        .filter(|&&p| p > a && p < b)
        .chain(std::iter::once(&b))
    {
        if p > lo {
            total += gl.integrate(lo, p, |t| log_hazard(s, b_re, t, state, spec, kv).exp());
            lo = p;
        }
    }
    total
}

/// Cumulative hazard over `[0, T_i]`.
pub fn cumulative_hazard(
    s: &SubjectData,
    b_re: &[f64],
    state: &ParameterState,
    spec: &ModelSpec,
    kv: &KnotVector,
    gl: &GaussLegendre,
) -> f64 {
    cumulative_hazard_between(s, b_re, state, spec, kv, gl, 0.0, s.obs_time)
}

/// Delta_i * log h(T_i) - H(T_i).
pub fn survival_loglik(
    s: &SubjectData,
    b_re: &[f64],
    state: &ParameterState,
    spec: &ModelSpec,
    kv: &KnotVector,
    gl: &GaussLegendre,
) -> f64 {
    let ch = cumulative_hazard(s, b_re, state, spec, kv, gl);
    if s.event {
        log_hazard(s, b_re, s.obs_time, state, spec, kv) - ch
    } else {
        -ch
    }
}

/// Sum over records of log N(y; mu(t), sigma_g^2) for one factor.
pub fn longitudinal_loglik(
    s: &SubjectData,
    b_re: &[f64],
    g: usize,
    state: &ParameterState,
    spec: &ModelSpec,
) -> f64 {
    let sd = state.sigma_sq[g].sqrt();
    assert!(sd > 0.0, "residual sd must be positive");
    let tr = trajectory(&state.beta[g], b_re, spec, g);
    s.obs[g]
        .iter()
        .map(|&(t, y)| dist::normal_logpdf(y, tr.mu(t), sd))
        .sum()
}

/// Full joint log posterior from scratch. Non-finite intermediates collapse
/// to negative infinity so Metropolis kernels stay total.
pub fn joint_log_posterior(
    data: &Dataset,
    state: &ParameterState,
    spec: &ModelSpec,
    kv: &KnotVector,
    weights: &Weights,
) -> f64 {
    let gl = GaussLegendre::new(GL_NODES);
    let Some(chol) = Cholesky::new(state.re_cov_matrix()) else {
        return f64::NEG_INFINITY;
    };
    let mut lp = priors::log_prior(state, spec, weights);
    for (i, s) in data.subjects.iter().enumerate() {
        let b = &state.re[i];
        for g in 0..spec.n_factors() {
            lp += longitudinal_loglik(s, b, g, state, spec);
        }
        lp += survival_loglik(s, b, state, spec, kv, &gl);
        lp += dist::mvn_zero_logpdf(b, &chol);
        if !lp.is_finite() {
            return f64::NEG_INFINITY;
        }
    }
    if lp.is_finite() {
        lp
    } else {
        f64::NEG_INFINITY
    }
}

/// Per-subject cache of quadrature layout, basis and feature values, and the
/// three likelihood components.
#[derive(Debug, Clone, Default)]
pub struct SubjectCache {
    pub node_t: Vec<f64>,
    pub node_w: Vec<f64>,
    /// Basis values at nodes, row-major, stride = basis size.
    pub node_basis: Vec<f64>,
    /// Feature values at nodes, row-major, stride = n_factors * n_features.
    pub node_feats: Vec<f64>,
    pub basis_t: Vec<f64>,
    pub feats_t: Vec<f64>,
    pub cum_haz: f64,
    pub log_haz_t: f64,
    pub surv_ll: f64,
    pub long_ll: f64,
    pub re_ll: f64,
}

impl SubjectCache {
    pub fn total(&self) -> f64 {
        self.surv_ll + self.long_ll + self.re_ll
    }
}

/// Shared evaluation context for one dataset and model.
pub struct Engine<'d> {
    pub data: &'d Dataset,
    pub spec: &'d ModelSpec,
    pub kv: KnotVector,
    pub weights: Weights,
    pub gl: GaussLegendre,
}

impl<'d> Engine<'d> {
    pub fn new(
        data: &'d Dataset,
        spec: &'d ModelSpec,
        kv: KnotVector,
    ) -> Result<Self, crate::Error> {
        let weights = priors::compute_weights(data)?;
        Ok(Engine {
            data,
            spec,
            kv,
            weights,
            gl: GaussLegendre::new(GL_NODES),
        })
    }

    pub fn n_slots(&self) -> usize {
        self.spec.n_factors() * self.spec.n_features
    }

    /// Full rebuild of a subject's cache under `state`.
    pub fn rebuild(
        &self,
        i: usize,
        state: &ParameterState,
        chol_d: &Cholesky<f64, Dyn>,
        cache: &mut SubjectCache,
    ) {
        let s = &self.data.subjects[i];
        let b = &state.re[i];
        let q = self.kv.basis_size();
        let slots = self.n_slots();

        cache.node_t.clear();
        cache.node_w.clear();
        let splits = split_points(s, b, state, self.spec, &self.kv, s.obs_time);
        let mut lo = 0.0;
        for &p in splits.iter().chain(std::iter::once(&s.obs_time)) {
            if p > lo {
                for (t, w) in self.gl.mapped(lo, p) {
                    cache.node_t.push(t);
                    cache.node_w.push(w);
                }
                lo = p;
            }
        }

        let n_nodes = cache.node_t.len();
        cache.node_basis.resize(n_nodes * q, 0.0);
        cache.node_feats.resize(n_nodes * slots, 0.0);
        for k in 0..n_nodes {
            let t = cache.node_t[k];
            spline::eval_basis_into(t, &self.kv, &mut cache.node_basis[k * q..(k + 1) * q]);
            feature_row(
                s,
                b,
                state,
                self.spec,
                t,
                &mut cache.node_feats[k * slots..(k + 1) * slots],
            );
        }
        cache.basis_t.resize(q, 0.0);
        spline::eval_basis_into(s.obs_time, &self.kv, &mut cache.basis_t);
        cache.feats_t.resize(slots, 0.0);
        feature_row(s, b, state, self.spec, s.obs_time, &mut cache.feats_t);

        self.refresh_hazard(i, state, cache);
        self.refresh_longitudinal(i, state, cache);
        cache.re_ll = dist::mvn_zero_logpdf(b, chol_d);
    }

    /// Recompute the survival terms from cached basis/feature values. Valid
    /// whenever the node layout is unchanged: moves of delta, the spline
    /// coefficients, or the association magnitudes on a fixed support.
    pub fn refresh_hazard(&self, i: usize, state: &ParameterState, cache: &mut SubjectCache) {
        let s = &self.data.subjects[i];
        let q = self.kv.basis_size();
        let slots = self.n_slots();
        let w_i = s.covariates();
        let offset: f64 = state.delta.iter().zip(w_i).map(|(d, w)| d * w).sum();
        let alphas = self.alphas_flat(state);

        let mut ch = 0.0;
        for k in 0..cache.node_t.len() {
            let basis = &cache.node_basis[k * q..(k + 1) * q];
            let feats = &cache.node_feats[k * slots..(k + 1) * slots];
            let psi =
                state.gamma0 + offset + dot(basis, &state.gammas) + dot(feats, &alphas);
            ch += cache.node_w[k] * psi.exp();
        }
        cache.cum_haz = ch;
        cache.log_haz_t = state.gamma0
            + offset
            + dot(&cache.basis_t, &state.gammas)
            + dot(&cache.feats_t, &alphas);
        cache.surv_ll = if s.event { cache.log_haz_t - ch } else { -ch };
    }

    pub fn refresh_longitudinal(&self, i: usize, state: &ParameterState, cache: &mut SubjectCache) {
        let s = &self.data.subjects[i];
        cache.long_ll = (0..self.spec.n_factors())
            .map(|g| longitudinal_loglik(s, &state.re[i], g, state, self.spec))
            .sum();
    }

    pub fn refresh_re(
        &self,
        i: usize,
        state: &ParameterState,
        chol_d: &Cholesky<f64, Dyn>,
        cache: &mut SubjectCache,
    ) {
        cache.re_ll = dist::mvn_zero_logpdf(&state.re[i], chol_d);
    }

    pub fn alphas_flat(&self, state: &ParameterState) -> Vec<f64> {
        let mut a = vec![0.0; self.n_slots()];
        for g in 0..self.spec.n_factors() {
            for j in 0..self.spec.n_features {
                a[g * self.spec.n_features + j] = state.alpha(g, j);
            }
        }
        a
    }

    /// Reference value of a subject's survival log-likelihood (uncached).
    pub fn survival_loglik_ref(&self, i: usize, state: &ParameterState) -> f64 {
        let s = &self.data.subjects[i];
        survival_loglik(s, &state.re[i], state, self.spec, &self.kv, &self.gl)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::RiskFactorSpec;
    use crate::state::{BsgsdParams, ThresholdCoeffs, ThresholdSet};
    use approx::assert_abs_diff_eq;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn spec_two() -> ModelSpec {
        let mut spec = ModelSpec::new(vec![
            RiskFactorSpec::linear("bmi", 30.0),
            RiskFactorSpec::linear("sbp", 120.0),
        ]);
        spec.factor_ranges = vec![(15.0, 50.0), (90.0, 200.0)];
        spec.factor_sds = vec![3.0, 12.0];
        spec.spline.basis_size = 5;
        spec
    }

    fn knots() -> KnotVector {
        KnotVector::new(3, vec![10.0], [0.0, 30.0]).unwrap()
    }

    fn subject(sex: u8, race: u8, obs_time: f64, event: bool) -> SubjectData {
        SubjectData {
            id: 0,
            sex,
            race,
            smoking: 1,
            obs_time,
            event,
            obs: vec![
                vec![(0.0, 27.0), (3.0, 28.1), (6.0, 29.4)],
                vec![(0.0, 119.0), (3.0, 122.5)],
            ],
        }
    }

    /// State with every block set to hand-picked moderate values.
    fn base_state(spec: &ModelSpec, n: usize) -> ParameterState {
        let dim = spec.re_dim();
        ParameterState {
            beta: vec![vec![27.0, 0.25], vec![118.0, 0.4]],
            sigma_sq: vec![1.0, 36.0],
            re: vec![vec![0.0; dim]; n],
            re_cov: (0..dim)
                .map(|i| (0..dim).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
                .collect(),
            delta: vec![0.0, 0.0, 0.0],
            gamma0: -3.0,
            gammas: vec![0.0; spec.spline.basis_size],
            lambda: 100.0,
            bsgsd: BsgsdParams {
                d: vec![vec![0.0, 0.0], vec![0.0, 0.0]],
                tau: vec![vec![0.1, 0.0], vec![0.1, 0.0]],
                s_sq: 1.0,
                pi_group: vec![0.5, 0.5],
                q: vec![vec![0.4, 0.4, 0.2], vec![0.4, 0.4, 0.2]],
            },
            thresholds: ThresholdSet::all_na(2, 2),
            tcoef: vec![ThresholdCoeffs::zero(), ThresholdCoeffs::zero()],
            pi_na: vec![vec![0.5, 0.5], vec![0.5, 0.5]],
        }
    }

    fn activate(state: &mut ParameterState, g: usize, j: usize, alpha: f64, gamma: Option<f64>) {
        state.bsgsd.d[g] = vec![1.0; 2];
        state.bsgsd.tau[g][j] = alpha;
        for l in 0..4 {
            state.thresholds.set(g, j, l, gamma);
        }
    }

    #[test]
    fn null_model_log_hazard_is_baseline() {
        let spec = spec_two();
        let kv = knots();
        let state = base_state(&spec, 1);
        let s = subject(1, 0, 20.0, true);
        for t in [0.5, 5.0, 19.9] {
            let lh = log_hazard(&s, &state.re[0], t, &state, &spec, &kv);
            assert_abs_diff_eq!(lh, -3.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn log_hazard_hand_computed_single_feature() {
        let spec = spec_two();
        let kv = knots();
        let mut state = base_state(&spec, 1);
        state.delta = vec![0.3, -0.2, 0.5];
        // bmi value feature active with threshold 28: alpha = tau * d = 0.02.
        activate(&mut state, 0, 0, 0.02, Some(28.0));
        let s = subject(1, 0, 20.0, true);
        // At t = 6: mu_bmi = 27 + 0.25*6 = 28.5 > 28, so f = 28.5.
        let lh = log_hazard(&s, &state.re[0], 6.0, &state, &spec, &kv);
        let expect = -3.0 + (0.3 * 1.0 - 0.2 * 0.0 + 0.5 * 1.0) + 0.02 * 28.5;
        assert_abs_diff_eq!(lh, expect, epsilon = 1e-12);
        // At t = 2: mu_bmi = 27.5 < 28, feature contributes 0.
        let lh2 = log_hazard(&s, &state.re[0], 2.0, &state, &spec, &kv);
        assert_abs_diff_eq!(lh2, -3.0 + 0.8, epsilon = 1e-12);
    }

    #[test]
    fn log_hazard_matches_term_by_term_oracle() {
        let spec = spec_two();
        let kv = knots();
        let mut rng = ChaCha20Rng::seed_from_u64(101);
        for _ in 0..50 {
            let mut state = base_state(&spec, 1);
            state.gamma0 = rng.random_range(-4.0..-2.0);
            state.gammas = (0..spec.spline.basis_size)
                .map(|_| rng.random_range(-0.5..0.5))
                .collect();
            state.delta = vec![
                rng.random_range(-0.5..0.5),
                rng.random_range(-0.5..0.5),
                rng.random_range(-0.5..0.5),
            ];
            state.re[0] = (0..spec.re_dim())
                .map(|_| rng.random_range(-1.0..1.0))
                .collect();
            activate(&mut state, 0, 0, rng.random_range(0.0..0.05), Some(29.0));
            activate(&mut state, 1, 1, rng.random_range(0.0..0.005), Some(121.0));
            let s = subject(rng.random_range(0..2), rng.random_range(0..2), 25.0, true);
            let t: f64 = rng.random_range(0.1..25.0);

            let got = log_hazard(&s, &state.re[0], t, &state, &spec, &kv);

            let coeffs = spline::BaselineHazardCoeffs {
                gamma0: state.gamma0,
                gammas: state.gammas.clone(),
            };
            let mut expect = spline::log_baseline_hazard(t, &coeffs, &kv);
            expect += state.delta[0] * s.sex as f64
                + state.delta[1] * s.race as f64
                + state.delta[2] * s.smoking as f64;
            let l = s.stratum();
            for g in 0..2 {
                let off = spec.re_offset(g);
                let tr = Trajectory::new(
                    &state.beta[g],
                    &state.re[0][off..off + 2],
                    spec.factors[g].fixed_design,
                    spec.factors[g].random_design,
                );
                for (j, kind) in FeatureKind::ALL.iter().enumerate() {
                    if state.feature_active(g, j) {
                        expect += state.alpha(g, j)
                            * features::feature_value(
                                &tr,
                                t,
                                *kind,
                                state.thresholds.get(g, j, l),
                            );
                    }
                }
            }
            assert_abs_diff_eq!(got, expect, epsilon = 1e-12);
        }
    }

    #[test]
    fn constant_hazard_cumulative_is_exact() {
        let spec = spec_two();
        let kv = knots();
        let mut state = base_state(&spec, 1);
        state.gamma0 = -1.5;
        let s = subject(0, 1, 12.0, false);
        let gl = GaussLegendre::new(GL_NODES);
        let ch = cumulative_hazard(&s, &state.re[0], &state, &spec, &kv, &gl);
        assert_abs_diff_eq!(ch, (-1.5f64).exp() * 12.0, epsilon = 1e-12);
    }

    #[test]
    fn empty_interval_cumulative_hazard_is_zero() {
        let spec = spec_two();
        let kv = knots();
        let state = base_state(&spec, 1);
        let mut s = subject(0, 0, 1e-12, false);
        s.obs = vec![vec![(0.0, 27.0)], vec![(0.0, 119.0)]];
        let gl = GaussLegendre::new(GL_NODES);
        let ch = cumulative_hazard(&s, &state.re[0], &state, &spec, &kv, &gl);
        assert!(ch >= 0.0 && ch < 1e-12);
    }

    #[test]
    fn crossing_split_matches_riemann_oracle() {
        let spec = spec_two();
        let kv = knots();
        let mut state = base_state(&spec, 1);
        state.delta = vec![0.2, -0.1, 0.3];
        // Trajectory 27 + 0.25 t crosses 29 at t = 8.
        activate(&mut state, 0, 0, 0.04, Some(29.0));
        let s = subject(1, 1, 25.0, true);
        let gl = GaussLegendre::new(GL_NODES);
        let got = cumulative_hazard(&s, &state.re[0], &state, &spec, &kv, &gl);
        let n = 1_000_000usize;
        let h = s.obs_time / n as f64;
        let mut riemann = 0.0;
        for i in 0..n {
            let t = (i as f64 + 0.5) * h;
            riemann += log_hazard(&s, &state.re[0], t, &state, &spec, &kv).exp() * h;
        }
        assert!(
            ((got - riemann) / riemann).abs() < 1e-6,
            "split {got} vs riemann {riemann}"
        );
    }

    #[test]
    fn cumulative_hazard_additive_over_subintervals() {
        let spec = spec_two();
        let kv = knots();
        let mut state = base_state(&spec, 1);
        activate(&mut state, 0, 0, 0.03, Some(29.0));
        let s = subject(0, 1, 25.0, true);
        let gl = GaussLegendre::new(GL_NODES);
        for a in [3.0, 8.0, 14.2] {
            let h1 = cumulative_hazard_between(&s, &state.re[0], &state, &spec, &kv, &gl, 0.0, a);
            let h2 = cumulative_hazard_between(&s, &state.re[0], &state, &spec, &kv, &gl, a, 25.0);
            let h =
                cumulative_hazard_between(&s, &state.re[0], &state, &spec, &kv, &gl, 0.0, 25.0);
            assert_abs_diff_eq!(h1 + h2, h, epsilon = 1e-10);
        }
    }

    #[test]
    fn doubling_nodes_changes_little_once_split() {
        let spec = spec_two();
        let kv = knots();
        let mut state = base_state(&spec, 1);
        state.gammas = vec![0.2, -0.3, 0.5, 0.1, -0.2];
        activate(&mut state, 0, 0, 0.04, Some(29.0));
        let s = subject(1, 0, 25.0, true);
        let gl15 = GaussLegendre::new(GL_NODES);
        let gl30 = GaussLegendre::new(2 * GL_NODES);
        let a = cumulative_hazard(&s, &state.re[0], &state, &spec, &kv, &gl15);
        let b = cumulative_hazard(&s, &state.re[0], &state, &spec, &kv, &gl30);
        assert!(((a - b) / b).abs() < 1e-8, "{a} vs {b}");
    }

    #[test]
    fn survival_loglik_constant_hazard_cases() {
        let spec = spec_two();
        let kv = knots();
        let mut state = base_state(&spec, 1);
        state.gamma0 = -2.0;
        let gl = GaussLegendre::new(GL_NODES);
        let c = (-2.0f64).exp();
        let censored = subject(0, 0, 10.0, false);
        assert_abs_diff_eq!(
            survival_loglik(&censored, &state.re[0], &state, &spec, &kv, &gl),
            -c * 10.0,
            epsilon = 1e-10
        );
        let event = subject(0, 0, 10.0, true);
        assert_abs_diff_eq!(
            survival_loglik(&event, &state.re[0], &state, &spec, &kv, &gl),
            -2.0 - c * 10.0,
            epsilon = 1e-10
        );
    }

    #[test]
    fn longitudinal_loglik_reference_cases() {
        let spec = spec_two();
        let mut state = base_state(&spec, 1);
        state.sigma_sq = vec![1.0, 1.0];
        let mut s = subject(0, 0, 10.0, false);
        // Single record equal to mu: -(1/2) log(2 pi).
        s.obs[0] = vec![(0.0, 27.0)];
        assert_abs_diff_eq!(
            longitudinal_loglik(&s, &state.re[0], 0, &state, &spec),
            -0.5 * dist::LN_2PI,
            epsilon = 1e-14
        );
        // Two records with residuals +1 and -1: -log(2 pi) - 1.
        s.obs[0] = vec![(0.0, 28.0), (4.0, 27.0)];
        assert_abs_diff_eq!(
            longitudinal_loglik(&s, &state.re[0], 0, &state, &spec),
            -dist::LN_2PI - 1.0,
            epsilon = 1e-14
        );
    }

    #[test]
    fn longitudinal_loglik_matches_density_sum_oracle() {
        let spec = spec_two();
        let mut rng = ChaCha20Rng::seed_from_u64(103);
        for _ in 0..50 {
            let mut state = base_state(&spec, 1);
            state.re[0] = (0..4).map(|_| rng.random_range(-2.0..2.0)).collect();
            state.sigma_sq = vec![rng.random_range(0.2..4.0), rng.random_range(9.0..100.0)];
            let s = subject(1, 1, 10.0, true);
            for g in 0..2 {
                let got = longitudinal_loglik(&s, &state.re[0], g, &state, &spec);
                let off = spec.re_offset(g);
                let expect: f64 = s.obs[g]
                    .iter()
                    .map(|&(t, y)| {
                        let mu = state.beta[g][0]
                            + state.beta[g][1] * t
                            + state.re[0][off]
                            + state.re[0][off + 1] * t;
                        dist::normal_logpdf(y, mu, state.sigma_sq[g].sqrt())
                    })
                    .sum();
                assert_abs_diff_eq!(got, expect, epsilon = 1e-12);
            }
        }
    }

    fn two_subject_dataset() -> Dataset {
        Dataset {
            factor_names: vec!["bmi".into(), "sbp".into()],
            subjects: vec![subject(1, 0, 20.0, true), subject(0, 1, 15.0, false)],
        }
    }

    #[test]
    fn joint_log_posterior_empty_dataset_is_prior_only() {
        let spec = spec_two();
        let kv = knots();
        let data = Dataset {
            factor_names: vec!["bmi".into(), "sbp".into()],
            subjects: vec![],
        };
        let weights = Weights {
            w1: 0.5,
            w2: 0.5,
            table: [[0.25; 2]; 2],
        };
        let state = base_state(&spec, 0);
        let got = joint_log_posterior(&data, &state, &spec, &kv, &weights);
        let expect = priors::log_prior(&state, &spec, &weights);
        assert_abs_diff_eq!(got, expect, epsilon = 1e-12);
    }

    #[test]
    fn joint_log_posterior_matches_hand_assembly() {
        let spec = spec_two();
        let kv = knots();
        let data = two_subject_dataset();
        let weights = priors::compute_weights(&data).unwrap();
        let mut state = base_state(&spec, 2);
        state.re[0] = vec![0.5, -0.1, 2.0, 0.05];
        state.re[1] = vec![-0.8, 0.02, -3.0, -0.1];
        activate(&mut state, 0, 0, 0.03, Some(29.0));
        let got = joint_log_posterior(&data, &state, &spec, &kv, &weights);

        let gl = GaussLegendre::new(GL_NODES);
        let chol = Cholesky::new(state.re_cov_matrix()).unwrap();
        let mut expect = priors::log_prior(&state, &spec, &weights);
        for (i, s) in data.subjects.iter().enumerate() {
            for g in 0..2 {
                expect += longitudinal_loglik(s, &state.re[i], g, &state, &spec);
            }
            expect += survival_loglik(s, &state.re[i], &state, &spec, &kv, &gl);
            expect += dist::mvn_zero_logpdf(&state.re[i], &chol);
        }
        assert_abs_diff_eq!(got, expect, epsilon = 1e-10);
        assert!(got.is_finite());
    }

    #[test]
    fn joint_log_posterior_invariant_to_subject_order() {
        let spec = spec_two();
        let kv = knots();
        let data = two_subject_dataset();
        let weights = priors::compute_weights(&data).unwrap();
        let mut state = base_state(&spec, 2);
        state.re[0] = vec![0.5, -0.1, 2.0, 0.05];
        state.re[1] = vec![-0.8, 0.02, -3.0, -0.1];
        activate(&mut state, 1, 0, 0.002, Some(121.0));
        let lp = joint_log_posterior(&data, &state, &spec, &kv, &weights);

        let mut data2 = data.clone();
        data2.subjects.reverse();
        let mut state2 = state.clone();
        state2.re.reverse();
        let lp2 = joint_log_posterior(&data2, &state2, &spec, &kv, &weights);
        assert_abs_diff_eq!(lp, lp2, epsilon = 1e-10);
    }

    #[test]
    fn degenerate_sigma_collapses_to_neg_infinity() {
        let spec = spec_two();
        let kv = knots();
        let data = two_subject_dataset();
        let weights = priors::compute_weights(&data).unwrap();
        let mut state = base_state(&spec, 2);
        state.sigma_sq[0] = 1e-320;
        let lp = joint_log_posterior(&data, &state, &spec, &kv, &weights);
        assert_eq!(lp, f64::NEG_INFINITY);
    }

    #[test]
    fn all_groups_excluded_reduces_to_covariate_model() {
        let spec = spec_two();
        let kv = knots();
        let mut state = base_state(&spec, 1);
        state.delta = vec![0.4, -0.3, 0.6];
        // Feature parameters present but groups excluded.
        state.bsgsd.tau = vec![vec![0.8, 0.0], vec![0.5, 0.0]];
        let s = subject(1, 1, 18.0, true);
        let gl = GaussLegendre::new(GL_NODES);
        let got = survival_loglik(&s, &state.re[0], &state, &spec, &kv, &gl);
        // Covariates-only model: constant log hazard gamma0 + delta.w.
        let lh: f64 = -3.0 + 0.4 - 0.3 + 0.6;
        let expect = lh - lh.exp() * 18.0;
        assert_abs_diff_eq!(got, expect, epsilon = 1e-10);
    }

    #[test]
    fn engine_cache_agrees_with_reference_path() {
        let spec = spec_two();
        let kv = knots();
        let data = two_subject_dataset();
        let engine = Engine::new(&data, &spec, kv).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(107);
        for _ in 0..25 {
            let mut state = base_state(&spec, 2);
            state.gammas = (0..5).map(|_| rng.random_range(-0.5..0.5)).collect();
            state.delta = vec![
                rng.random_range(-0.5..0.5),
                rng.random_range(-0.5..0.5),
                rng.random_range(-0.5..0.5),
            ];
            state.re[0] = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
            state.re[1] = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
            activate(&mut state, 0, 0, rng.random_range(0.001..0.05), Some(29.0));
            activate(&mut state, 1, 1, rng.random_range(0.0001..0.003), Some(122.0));
            let chol = Cholesky::new(state.re_cov_matrix()).unwrap();
            let mut cache = SubjectCache::default();
            for i in 0..2 {
                engine.rebuild(i, &state, &chol, &mut cache);
                let expect = engine.survival_loglik_ref(i, &state);
                approx::assert_relative_eq!(
                    cache.surv_ll,
                    expect,
                    epsilon = 1e-10,
                    max_relative = 1e-12
                );
                let expect_long: f64 = (0..2)
                    .map(|g| {
                        longitudinal_loglik(&data.subjects[i], &state.re[i], g, &state, &spec)
                    })
                    .sum();
                assert_abs_diff_eq!(cache.long_ll, expect_long, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn engine_refresh_hazard_tracks_delta_and_spline_moves() {
        let spec = spec_two();
        let kv = knots();
        let data = two_subject_dataset();
        let engine = Engine::new(&data, &spec, kv).unwrap();
        let mut state = base_state(&spec, 2);
        activate(&mut state, 0, 0, 0.02, Some(29.0));
        let chol = Cholesky::new(state.re_cov_matrix()).unwrap();
        let mut cache = SubjectCache::default();
        engine.rebuild(0, &state, &chol, &mut cache);

        // Move delta and the spline without touching trajectories/thresholds.
        state.delta = vec![0.25, -0.15, 0.4];
        state.gamma0 = -2.6;
        state.gammas = vec![0.1, -0.2, 0.3, 0.0, -0.1];
        state.bsgsd.tau[0][0] = 0.035; // magnitude refresh on fixed support
        engine.refresh_hazard(0, &state, &mut cache);
        let expect = engine.survival_loglik_ref(0, &state);
        assert_abs_diff_eq!(cache.surv_ll, expect, epsilon = 1e-10);
    }
}
