//! Synthetic data generation from known ground truth, plus brute-force
//! oracles used to validate the numerical kernels.
//!
//! Survival times are drawn by inverse transform: solve H_i(t) = -log U by
//! bisection on the cumulative hazard of the truth state. Subjects are
//! generated on independent RNG streams indexed by subject id, so datasets
//! are reproducible under parallel generation.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, ModelSpec, RiskFactorSpec, SubjectData};
use crate::dist;
use crate::likelihood::{self, GL_NODES};
use crate::quad::GaussLegendre;
use crate::spline::KnotVector;
use crate::state::{BsgsdParams, ParameterState, ThresholdCoeffs, ThresholdSet};

/// Bisection tolerance for the inverse-transform event time, in time units.
pub const EVENT_TIME_TOL: f64 = 1e-8;

/// Everything needed to generate data: the truth state, the model it lives
/// in, and the observation process.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GroundTruth {
    pub spec: ModelSpec,
    pub kv: KnotVector,
    /// Truth parameters; the per-subject random effects are drawn fresh.
    pub state: ParameterState,
    pub visit_times: Vec<f64>,
    /// Administrative censoring time.
    pub horizon: f64,
    /// Uniform censoring window, or `None` for administrative only.
    pub censoring: Option<(f64, f64)>,
    /// Joint (sex, race) probabilities, indexed [sex][race].
    pub covariate_table: [[f64; 2]; 2],
    pub smoking_prev: f64,
}

/// One simulated subject with its true random effects.
#[derive(Debug, Clone)]
pub struct SimulatedSubject {
    pub data: SubjectData,
    pub b: Vec<f64>,
    /// True (uncensored) event time, if one occurred before the horizon.
    pub event_time: Option<f64>,
}

fn draw_covariates<R: Rng + ?Sized>(gt: &GroundTruth, rng: &mut R) -> (u8, u8, u8) {
    let u: f64 = rng.random();
    let t = &gt.covariate_table;
    let mut acc = 0.0;
    let mut sex = 1u8;
    let mut race = 1u8;
    'outer: for s in 0..2u8 {
        for r in 0..2u8 {
            acc += t[s as usize][r as usize];
            if u < acc {
                sex = s;
                race = r;
                break 'outer;
            }
        }
    }
    let smoking = u8::from(rng.random::<f64>() < gt.smoking_prev);
    (sex, race, smoking)
}

/// Solve H(t) = target by bisection on `[0, horizon]`; `None` when the
/// cumulative hazard never reaches the target (administrative censoring).
fn solve_event_time(
    gt: &GroundTruth,
    scratch: &SubjectData,
    b: &[f64],
    gl: &GaussLegendre,
    target: f64,
) -> Option<f64> {
    let cum = |t: f64| {
        likelihood::cumulative_hazard_between(scratch, b, &gt.state, &gt.spec, &gt.kv, gl, 0.0, t)
    };
    if !(cum(gt.horizon) >= target) {
        return None;
    }
    let (mut lo, mut hi) = (0.0, gt.horizon);
    while hi - lo > EVENT_TIME_TOL {
        let mid = 0.5 * (lo + hi);
        if cum(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Some(0.5 * (lo + hi))
}

/// Generate one subject on its own RNG stream.
pub fn simulate_subject(gt: &GroundTruth, id: u64, master_seed: u64) -> SimulatedSubject {
    let mut rng = ChaCha20Rng::seed_from_u64(master_seed);
    rng.set_stream(id.wrapping_add(1));
    simulate_subject_with_rng(gt, id, &mut rng)
}

pub fn simulate_subject_with_rng<R: Rng + ?Sized>(
    gt: &GroundTruth,
    id: u64,
    rng: &mut R,
) -> SimulatedSubject {
    let (sex, race, smoking) = draw_covariates(gt, rng);
    let chol = nalgebra::Cholesky::new(gt.state.re_cov_matrix())
        .expect("truth covariance must be positive definite")
        .l();
    let b = dist::sample_mvn_zero(rng, &chol);

    let scratch = SubjectData {
        id,
        sex,
        race,
        smoking,
        obs_time: gt.horizon,
        event: false,
        obs: vec![Vec::new(); gt.spec.n_factors()],
    };
    let gl = GaussLegendre::new(GL_NODES);
    let target = -rng.random::<f64>().ln();
    let event_time = solve_event_time(gt, &scratch, &b, &gl, target);

    let censor = match gt.censoring {
        Some((lo, hi)) => rng.random_range(lo..hi).min(gt.horizon),
        None => gt.horizon,
    };
    let (obs_time, event) = match event_time {
        Some(t) if t <= censor => (t, true),
        _ => (censor, false),
    };

    let mut obs = vec![Vec::new(); gt.spec.n_factors()];
    for g in 0..gt.spec.n_factors() {
        let off = gt.spec.re_offset(g);
        let len = gt.spec.re_len(g);
        let tr = crate::features::Trajectory::new(
            &gt.state.beta[g],
            &b[off..off + len],
            gt.spec.factors[g].fixed_design,
            gt.spec.factors[g].random_design,
        );
        let sd = gt.state.sigma_sq[g].sqrt();
        for &t in gt.visit_times.iter().filter(|&&t| t <= obs_time) {
            obs[g].push((t, tr.mu(t) + sd * dist::sample_std_normal(rng)));
        }
    }

    SimulatedSubject {
        data: SubjectData {
            id,
            sex,
            race,
            smoking,
            obs_time,
            event,
            obs,
        },
        b,
        event_time,
    }
}

/// Generate a dataset of `n` subjects; returns the data and the true random
/// effects (aligned by subject).
pub fn simulate_dataset(gt: &GroundTruth, n: usize, seed: u64) -> (Dataset, Vec<Vec<f64>>) {
    let mut subjects = Vec::with_capacity(n);
    let mut b_true = Vec::with_capacity(n);
    for id in 0..n as u64 {
        let sim = simulate_subject(gt, id, seed);
        subjects.push(sim.data);
        b_true.push(sim.b);
    }
    (
        Dataset {
            factor_names: gt.spec.factors.iter().map(|f| f.name.clone()).collect(),
            subjects,
        },
        b_true,
    )
}

/// Midpoint Riemann sum of the hazard on a uniform grid: the quadrature
/// oracle.
pub fn brute_force_cumhaz(
    s: &SubjectData,
    b: &[f64],
    state: &ParameterState,
    spec: &ModelSpec,
    kv: &KnotVector,
    n_steps: usize,
) -> f64 {
    assert!(n_steps >= 10_000, "oracle needs a fine grid");
    let h = s.obs_time / n_steps as f64;
    let mut total = 0.0;
    for i in 0..n_steps {
        let t = (i as f64 + 0.5) * h;
        total += likelihood::log_hazard(s, b, t, state, spec, kv).exp() * h;
    }
    total
}

fn blockdiag(blocks: &[&[f64]]) -> Vec<Vec<f64>> {
    let dim: usize = blocks.iter().map(|b| b.len()).sum();
    let mut m = vec![vec![0.0; dim]; dim];
    let mut off = 0;
    for block in blocks {
        for (k, &v) in block.iter().enumerate() {
            m[off + k][off + k] = v;
        }
        off += block.len();
    }
    m
}

fn neutral_state(spec: &ModelSpec) -> ParameterState {
    let g_n = spec.n_factors();
    ParameterState {
        beta: vec![vec![28.0, 0.3], vec![118.0, 0.5]],
        sigma_sq: vec![1.0, 25.0],
        re: Vec::new(),
        re_cov: blockdiag(&[&[6.25, 0.0025], &[64.0, 0.01]]),
        delta: vec![0.4, -0.4, 0.5],
        gamma0: (0.008f64).ln(),
        gammas: vec![0.0; spec.spline.basis_size],
        lambda: 100.0,
        bsgsd: BsgsdParams {
            d: vec![vec![0.0; 2]; g_n],
            tau: vec![vec![0.1, 0.0]; g_n],
            s_sq: 1.0,
            pi_group: vec![0.5; g_n],
            q: vec![vec![0.4, 0.4, 0.2]; g_n],
        },
        thresholds: ThresholdSet::all_na(g_n, spec.n_features),
        tcoef: vec![ThresholdCoeffs::zero(); g_n],
        pi_na: vec![vec![0.5; spec.n_features]; g_n],
    }
}

fn base_truth() -> GroundTruth {
    let mut spec = ModelSpec::new(vec![
        RiskFactorSpec::linear("bmi", 30.0),
        RiskFactorSpec::linear("sbp", 120.0),
    ]);
    spec.factor_ranges = vec![(18.0, 45.0), (90.0, 190.0)];
    spec.factor_sds = vec![3.0, 12.0];
    let kv = KnotVector::new(3, vec![12.0], [0.0, 30.0]).unwrap();
    spec.spline.basis_size = kv.basis_size();
    let state = neutral_state(&spec);
    GroundTruth {
        spec,
        kv,
        state,
        visit_times: vec![0.0, 3.0, 6.0, 9.0, 12.0, 21.0, 27.0],
        horizon: 30.0,
        censoring: Some((15.0, 30.0)),
        covariate_table: [[0.25, 0.25], [0.25, 0.25]],
        smoking_prev: 0.3,
    }
}

fn set_thresholds(state: &mut ParameterState, g: usize, j: usize, by_stratum: [Option<f64>; 4]) {
    for (l, v) in by_stratum.into_iter().enumerate() {
        state.thresholds.set(g, j, l, v);
    }
}

/// Named benchmark scenarios:
/// - A: no features active;
/// - B: the bmi value feature active with a stratum-constant threshold at
///   guideline + 3;
/// - C: both bmi features active, thresholds varying by sex (value) and race
///   (area) with gaps of at least 4 units;
/// - D: the bmi value feature active but with no threshold (continuous
///   effect).
pub fn make_benchmark_scenarios() -> Vec<(String, GroundTruth)> {
    let mut out = Vec::new();

    let a = base_truth();
    out.push(("A".to_string(), a));

    let mut b = base_truth();
    b.state.bsgsd.d[0] = vec![1.0, 1.0];
    b.state.bsgsd.tau[0] = vec![0.05, 0.0];
    set_thresholds(&mut b.state, 0, 0, [Some(33.0); 4]);
    out.push(("B".to_string(), b));

    let mut c = base_truth();
    c.state.bsgsd.d[0] = vec![1.0, 1.0];
    c.state.bsgsd.tau[0] = vec![0.05, 0.004];
    // Value threshold varies by sex: female 29, male 33.
    set_thresholds(
        &mut c.state,
        0,
        0,
        [Some(29.0), Some(29.0), Some(33.0), Some(33.0)],
    );
    // Area threshold varies by race: black 28, white 32.
    set_thresholds(
        &mut c.state,
        0,
        1,
        [Some(28.0), Some(32.0), Some(28.0), Some(32.0)],
    );
    out.push(("C".to_string(), c));

    let mut d = base_truth();
    d.state.bsgsd.d[0] = vec![1.0, 1.0];
    d.state.bsgsd.tau[0] = vec![0.04, 0.0];
    // Active feature, no threshold: enters the hazard continuously.
    set_thresholds(&mut d.state, 0, 0, [None; 4]);
    out.push(("D".to_string(), d));

    out
}

pub fn scenario(name: &str) -> Option<GroundTruth> {
    make_benchmark_scenarios()
        .into_iter()
        .find(|(n, _)| n == name)
        .map(|(_, gt)| gt)
}

/// Random moderate states for kernel validation: plausible trajectories,
/// several active features, and real thresholds inside the observed ranges.
pub fn random_plausible_state<R: Rng + ?Sized>(spec: &ModelSpec, rng: &mut R) -> ParameterState {
    let mut state = neutral_state(spec);
    state.beta = vec![
        vec![rng.random_range(26.0..30.0), rng.random_range(0.1..0.5)],
        vec![rng.random_range(112.0..124.0), rng.random_range(0.2..0.8)],
    ];
    state.delta = vec![
        rng.random_range(-0.6..0.6),
        rng.random_range(-0.6..0.6),
        rng.random_range(-0.6..0.6),
    ];
    state.gamma0 = rng.random_range(-5.5..-3.5);
    state.gammas = (0..spec.spline.basis_size)
        .map(|_| rng.random_range(-0.6..0.6))
        .collect();
    // bmi group always on with the value feature; area joins half the time.
    state.bsgsd.d[0] = vec![rng.random_range(0.5..1.5), rng.random_range(0.5..1.5)];
    let bmi_both = rng.random::<bool>();
    state.bsgsd.tau[0] = vec![
        rng.random_range(0.01..0.06),
        if bmi_both {
            rng.random_range(0.001..0.008)
        } else {
            0.0
        },
    ];
    for l in 0..4 {
        state
            .thresholds
            .set(0, 0, l, Some(rng.random_range(28.0..35.0)));
        if bmi_both {
            state
                .thresholds
                .set(0, 1, l, Some(rng.random_range(27.0..33.0)));
        }
    }
    // sbp group on half the time with the value feature.
    if rng.random::<bool>() {
        state.bsgsd.d[1] = vec![rng.random_range(0.5..1.5), rng.random_range(0.5..1.5)];
        state.bsgsd.tau[1] = vec![rng.random_range(0.001..0.02), 0.0];
        for l in 0..4 {
            state
                .thresholds
                .set(1, 0, l, Some(rng.random_range(115.0..135.0)));
        }
    }
    state
}
