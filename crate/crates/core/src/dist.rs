//! Log-densities and samplers for the distribution families in the model.
//!
//! Shape/rate and shape/scale conventions are pinned here once:
//! `gamma_logpdf` is shape-rate, `inv_gamma_logpdf` is shape-scale.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use rand_distr::Distribution;
use statrs::function::erf;
use statrs::function::gamma::ln_gamma;

pub const LN_2PI: f64 = 1.8378770664093453;

pub fn normal_logpdf(x: f64, mean: f64, sd: f64) -> f64 {
    if sd <= 0.0 {
        return f64::NEG_INFINITY;
    }
    let z = (x - mean) / sd;
    -0.5 * (LN_2PI + z * z) - sd.ln()
}

pub fn std_normal_cdf(z: f64) -> f64 {
    0.5 * erf::erfc(-z / std::f64::consts::SQRT_2)
}

pub fn std_normal_inv_cdf(p: f64) -> f64 {
    std::f64::consts::SQRT_2 * erf::erf_inv(2.0 * p - 1.0)
}

/// Normal density truncated to `[lo, hi]`, normalizer included.
pub fn truncated_normal_logpdf(x: f64, mean: f64, sd: f64, lo: f64, hi: f64) -> f64 {
    if x < lo || x > hi || sd <= 0.0 {
        return f64::NEG_INFINITY;
    }
    let z = truncation_mass(mean, sd, lo, hi);
    if z <= 0.0 {
        return f64::NEG_INFINITY;
    }
    normal_logpdf(x, mean, sd) - z.ln()
}

/// Phi((hi-mean)/sd) - Phi((lo-mean)/sd).
pub fn truncation_mass(mean: f64, sd: f64, lo: f64, hi: f64) -> f64 {
    std_normal_cdf((hi - mean) / sd) - std_normal_cdf((lo - mean) / sd)
}

/// Half-normal on [0, inf): 2 N(x; 0, s).
pub fn half_normal_logpdf(x: f64, sd: f64) -> f64 {
    if x < 0.0 {
        return f64::NEG_INFINITY;
    }
    std::f64::consts::LN_2 + normal_logpdf(x, 0.0, sd)
}

/// Gamma in shape-rate form.
pub fn gamma_logpdf(x: f64, shape: f64, rate: f64) -> f64 {
    if x <= 0.0 {
        return f64::NEG_INFINITY;
    }
    shape * rate.ln() - ln_gamma(shape) + (shape - 1.0) * x.ln() - rate * x
}

/// Inverse gamma in shape-scale form.
pub fn inv_gamma_logpdf(x: f64, shape: f64, scale: f64) -> f64 {
    if x <= 0.0 {
        return f64::NEG_INFINITY;
    }
    shape * scale.ln() - ln_gamma(shape) - (shape + 1.0) * x.ln() - scale / x
}

pub fn beta_logpdf(x: f64, a: f64, b: f64) -> f64 {
    if !(0.0..=1.0).contains(&x) {
        return f64::NEG_INFINITY;
    }
    let ln_beta = ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b);
    (a - 1.0) * x.ln() + (b - 1.0) * (1.0 - x).ln() - ln_beta
}

pub fn dirichlet_logpdf(x: &[f64], conc: &[f64]) -> f64 {
    assert_eq!(x.len(), conc.len());
    let sum: f64 = x.iter().sum();
    if x.iter().any(|&v| v <= 0.0) || (sum - 1.0).abs() > 1e-8 {
        return f64::NEG_INFINITY;
    }
    let mut lp = ln_gamma(conc.iter().sum::<f64>());
    for (&xi, &ai) in x.iter().zip(conc) {
        lp += (ai - 1.0) * xi.ln() - ln_gamma(ai);
    }
    lp
}

fn ln_multigamma(d: usize, a: f64) -> f64 {
    let mut lp = 0.25 * (d * (d - 1)) as f64 * std::f64::consts::PI.ln();
    for j in 1..=d {
        lp += ln_gamma(a + 0.5 * (1.0 - j as f64));
    }
    lp
}

/// Inverse Wishart with scale matrix `psi` and degrees of freedom `df`.
pub fn inv_wishart_logpdf(d_mat: &DMatrix<f64>, psi: &DMatrix<f64>, df: f64) -> f64 {
    let p = d_mat.nrows();
    let Some(chol_d) = Cholesky::new(d_mat.clone()) else {
        return f64::NEG_INFINITY;
    };
    let Some(chol_psi) = Cholesky::new(psi.clone()) else {
        return f64::NEG_INFINITY;
    };
    let logdet_d = chol_logdet(&chol_d);
    let logdet_psi = chol_logdet(&chol_psi);
    // tr(psi D^{-1})
    let dinv_psi = chol_d.solve(psi);
    let trace = dinv_psi.trace();
    0.5 * df * logdet_psi
        - 0.5 * (df * p as f64) * std::f64::consts::LN_2
        - ln_multigamma(p, 0.5 * df)
        - 0.5 * (df + p as f64 + 1.0) * logdet_d
        - 0.5 * trace
}

pub fn chol_logdet(chol: &Cholesky<f64, Dyn>) -> f64 {
    2.0 * chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>()
}

/// Zero-mean multivariate normal log-density using a precomputed Cholesky of
/// the covariance.
pub fn mvn_zero_logpdf(x: &[f64], chol: &Cholesky<f64, Dyn>) -> f64 {
    let p = x.len();
    let v = DVector::from_column_slice(x);
    let sol = chol.solve(&v);
    let quad = v.dot(&sol);
    -0.5 * (p as f64 * LN_2PI + chol_logdet(chol) + quad)
}

// --- samplers ---

pub fn sample_std_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rand_distr::StandardNormal.sample(rng)
}

pub fn sample_normal<R: Rng + ?Sized>(rng: &mut R, mean: f64, sd: f64) -> f64 {
    mean + sd * sample_std_normal(rng)
}

/// Shape-rate gamma draw.
pub fn sample_gamma<R: Rng + ?Sized>(rng: &mut R, shape: f64, rate: f64) -> f64 {
    rand_distr::Gamma::new(shape, 1.0 / rate)
        .expect("gamma parameters must be positive")
        .sample(rng)
}

/// Shape-scale inverse gamma draw.
pub fn sample_inv_gamma<R: Rng + ?Sized>(rng: &mut R, shape: f64, scale: f64) -> f64 {
    scale / rand_distr::Gamma::new(shape, 1.0)
        .expect("inverse gamma shape must be positive")
        .sample(rng)
}

pub fn sample_beta<R: Rng + ?Sized>(rng: &mut R, a: f64, b: f64) -> f64 {
    rand_distr::Beta::new(a, b)
        .expect("beta parameters must be positive")
        .sample(rng)
}

pub fn sample_dirichlet<R: Rng + ?Sized>(rng: &mut R, conc: &[f64]) -> Vec<f64> {
    let draws: Vec<f64> = conc.iter().map(|&a| sample_gamma(rng, a, 1.0)).collect();
    let total: f64 = draws.iter().sum();
    draws.into_iter().map(|g| g / total).collect()
}

pub fn sample_half_normal<R: Rng + ?Sized>(rng: &mut R, sd: f64) -> f64 {
    (sd * sample_std_normal(rng)).abs()
}

/// Inverse-CDF draw from a normal truncated to `[lo, hi]`.
pub fn sample_truncated_normal<R: Rng + ?Sized>(
    rng: &mut R,
    mean: f64,
    sd: f64,
    lo: f64,
    hi: f64,
) -> f64 {
    let a = std_normal_cdf((lo - mean) / sd);
    let b = std_normal_cdf((hi - mean) / sd);
    let u: f64 = rng.random_range(a.min(b)..=a.max(b));
    let u = u.clamp(1e-15, 1.0 - 1e-15);
    (mean + sd * std_normal_inv_cdf(u)).clamp(lo, hi)
}

/// Draw from a zero-mean MVN given the lower Cholesky factor of the
/// covariance.
pub fn sample_mvn_zero<R: Rng + ?Sized>(rng: &mut R, chol_l: &DMatrix<f64>) -> Vec<f64> {
    let p = chol_l.nrows();
    let z = DVector::from_iterator(p, (0..p).map(|_| sample_std_normal(rng)));
    (chol_l * z).iter().copied().collect()
}

/// Inverse Wishart draw via the Bartlett decomposition of the Wishart on the
/// inverse scale.
pub fn sample_inv_wishart<R: Rng + ?Sized>(
    rng: &mut R,
    psi: &DMatrix<f64>,
    df: f64,
) -> DMatrix<f64> {
    let p = psi.nrows();
    assert!(df > (p - 1) as f64, "inverse Wishart df too small");
    let psi_inv = Cholesky::new(psi.clone())
        .expect("inverse Wishart scale must be positive definite")
        .inverse();
    let l = Cholesky::new(psi_inv)
        .expect("inverse scale must be positive definite")
        .l();
    // Bartlett: A lower-triangular, A_ii^2 ~ chi^2(df - i), A_ij ~ N(0,1).
    let mut a = DMatrix::<f64>::zeros(p, p);
    for i in 0..p {
        let chi_sq = 2.0 * sample_gamma(rng, 0.5 * (df - i as f64), 1.0);
        a[(i, i)] = chi_sq.sqrt();
        for j in 0..i {
            a[(i, j)] = sample_std_normal(rng);
        }
    }
    let la = &l * a;
    let w = &la * la.transpose(); // W ~ Wishart(df, psi^{-1})
    Cholesky::new(w)
        .expect("Wishart draw must be positive definite")
        .inverse()
}
