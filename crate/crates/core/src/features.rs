//! Subject-level mean trajectories and the threshold-dependent features that
//! enter the hazard: the current value above a threshold and the cumulative
//! area above a threshold. A threshold of `None` means "no threshold": the
//! indicator is identically one and the feature acts on the whole trajectory.

use num_traits::Float;
use serde::{Deserialize, Serialize};

/// Time design of a trajectory component: `[1, t, t^2, ..., t^degree]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Design {
    pub degree: usize,
}

impl Design {
    pub fn linear() -> Self {
        Design { degree: 1 }
    }

    pub fn len(&self) -> usize {
        self.degree + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn eval<F: Float>(&self, t: F, out: &mut Vec<F>) {
        out.clear();
        let mut p = F::one();
        for _ in 0..=self.degree {
            out.push(p);
            p = p * t;
        }
    }
}

/// The two trajectory features, with their feature-type coding in the
/// threshold-mean regression: value = +1, area = -1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FeatureKind {
    /// Current value above threshold: mu(t) * I(mu(t) > gamma).
    Value,
    /// Area above threshold: integral of mu(s) * I(mu(s) > gamma) over [0, t].
    Area,
}

impl FeatureKind {
    pub const ALL: [FeatureKind; 2] = [FeatureKind::Value, FeatureKind::Area];

    /// Feature-type covariate in the threshold prior mean.
    pub fn ft(&self) -> f64 {
        match self {
            FeatureKind::Value => 1.0,
            FeatureKind::Area => -1.0,
        }
    }

    pub fn index(&self) -> usize {
        match self {
            FeatureKind::Value => 0,
            FeatureKind::Area => 1,
        }
    }

    pub fn from_index(j: usize) -> FeatureKind {
        match j {
            0 => FeatureKind::Value,
            1 => FeatureKind::Area,
            _ => panic!("feature index {j} out of range"),
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            FeatureKind::Value => "value",
            FeatureKind::Area => "area",
        }
    }
}

/// Fixed and random coefficients of one subject's trajectory for one risk
/// factor, with their time designs.
#[derive(Debug, Clone)]
pub struct Trajectory<'a, F = f64> {
    pub beta: &'a [F],
    pub b: &'a [F],
    pub fixed: Design,
    pub random: Design,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("trajectory is not linear in time; use the numeric crossing path")]
pub struct NonLinearDesign;

impl<'a, F: Float> Trajectory<'a, F> {
    pub fn new(beta: &'a [F], b: &'a [F], fixed: Design, random: Design) -> Self {
        assert_eq!(beta.len(), fixed.len(), "fixed design length mismatch");
        assert_eq!(b.len(), random.len(), "random design length mismatch");
        Trajectory {
            beta,
            b,
            fixed,
            random,
        }
    }

    /// Combined polynomial coefficients of mu(t) in powers of t.
    pub fn poly_coeffs(&self) -> Vec<F> {
        let n = self.fixed.len().max(self.random.len());
        let mut c = vec![F::zero(); n];
        for (k, &v) in self.beta.iter().enumerate() {
            c[k] = c[k] + v;
        }
        for (k, &v) in self.b.iter().enumerate() {
            c[k] = c[k] + v;
        }
        c
    }

    pub fn is_linear(&self) -> bool {
        self.fixed.degree <= 1 && self.random.degree <= 1
    }

    /// mu(t) = x(t)^T beta + z(t)^T b.
    pub fn mu(&self, t: F) -> F {
        poly_eval(&self.poly_coeffs(), t)
    }
}

pub fn poly_eval<F: Float>(coeffs: &[F], t: F) -> F {
    let mut acc = F::zero();
    for &c in coeffs.iter().rev() {
        acc = acc * t + c;
    }
    acc
}

/// Antiderivative of the polynomial, evaluated at `t` (zero constant term).
pub fn poly_antiderivative_eval<F: Float>(coeffs: &[F], t: F) -> F {
    let mut acc = F::zero();
    for (k, &c) in coeffs.iter().enumerate().rev() {
        acc = acc * t + c / F::from(k + 1).unwrap();
    }
    acc * t
}

/// mu(t) * I(mu(t) > gamma); with no threshold the indicator is one.
pub fn current_value_feature<F: Float>(tr: &Trajectory<F>, t: F, gamma: Option<F>) -> F {
    let mu = tr.mu(t);
    match gamma {
        Some(g) if mu <= g => F::zero(),
        _ => mu,
    }
}

/// Times in `(window.0, window.1)` where mu(s) = gamma, for linear
/// trajectories. Non-linear designs signal the caller to use the numeric
/// path ([`crossing_times_numeric`]).
pub fn crossing_times<F: Float>(
    tr: &Trajectory<F>,
    gamma: F,
    window: (F, F),
) -> Result<Vec<F>, NonLinearDesign> {
    if !tr.is_linear() {
        return Err(NonLinearDesign);
    }
    let c = tr.poly_coeffs();
    let intercept = c[0];
    let slope = if c.len() > 1 { c[1] } else { F::zero() };
    if slope == F::zero() {
        return Ok(Vec::new());
    }
    let s = (gamma - intercept) / slope;
    if s > window.0 && s < window.1 {
        Ok(vec![s])
    } else {
        Ok(Vec::new())
    }
}

/// Crossing times for arbitrary polynomial trajectories: bracket sign changes
/// of mu(s) - gamma on a dense grid, then bisect each bracket.
pub fn crossing_times_numeric<F: Float>(tr: &Trajectory<F>, gamma: F, window: (F, F)) -> Vec<F> {
    let coeffs = tr.poly_coeffs();
    let degree = coeffs.len().saturating_sub(1).max(1);
    let n_grid = 128 * degree;
    let (a, b) = window;
    if b <= a {
        return Vec::new();
    }
    let step = (b - a) / F::from(n_grid).unwrap();
    let g = |s: F| poly_eval(&coeffs, s) - gamma;
    let mut out = Vec::new();
    let mut prev_t = a;
    let mut prev_v = g(a);
    for i in 1..=n_grid {
        let t = if i == n_grid {
            b
        } else {
            a + step * F::from(i).unwrap()
        };
        let v = g(t);
        if (prev_v < F::zero()) != (v < F::zero()) || v == F::zero() && prev_v != F::zero() {
            // Bisection to ~1e-13 relative on the bracket width.
            let (mut lo, mut hi) = (prev_t, t);
            let mut flo = prev_v;
            for _ in 0..200 {
                let mid = (lo + hi) / F::from(2.0).unwrap();
                let fm = g(mid);
                if (fm < F::zero()) == (flo < F::zero()) {
                    lo = mid;
                    flo = fm;
                } else {
                    hi = mid;
                }
                if hi - lo <= (b - a) * F::from(1e-14).unwrap() {
                    break;
                }
            }
            let root = (lo + hi) / F::from(2.0).unwrap();
            if root > a && root < b {
                out.push(root);
            }
        }
        prev_t = t;
        prev_v = v;
    }
    out.dedup_by(|x, y| (*x - *y).abs() <= (b - a) * F::from(1e-12).unwrap());
    out
}

/// Integral over [0, t] of mu(s) * I(mu(s) > gamma).
///
/// The exceedance set is resolved exactly for linear designs and by
/// root-bracketing for higher-degree polynomial designs; each smooth piece is
/// then integrated with the exact polynomial antiderivative.
pub fn area_feature<F: Float>(tr: &Trajectory<F>, t: F, gamma: Option<F>) -> F {
    if t <= F::zero() {
        return F::zero();
    }
    let coeffs = tr.poly_coeffs();
    let Some(g) = gamma else {
        return poly_antiderivative_eval(&coeffs, t);
    };
    let crossings = match crossing_times(tr, g, (F::zero(), t)) {
        Ok(c) => c,
        Err(NonLinearDesign) => crossing_times_numeric(tr, g, (F::zero(), t)),
    };
    area_above_with_crossings(&coeffs, g, t, &crossings)
}

/// Piecewise integration given precomputed crossing times in (0, t).
pub fn area_above_with_crossings<F: Float>(coeffs: &[F], gamma: F, t: F, crossings: &[F]) -> F {
    let mut acc = F::zero();
    let mut lo = F::zero();
    let two = F::from(2.0).unwrap();
    for &hi in crossings.iter().chain(std::iter::once(&t)) {
        if hi > lo {
            let mid = (lo + hi) / two;
            if poly_eval(coeffs, mid) > gamma {
                acc = acc
                    + poly_antiderivative_eval(coeffs, hi)
                    - poly_antiderivative_eval(coeffs, lo);
            }
        }
        lo = hi;
    }
    acc
}

/// Dispatch on the feature kind.
pub fn feature_value<F: Float>(
    tr: &Trajectory<F>,
    t: F,
    kind: FeatureKind,
    gamma: Option<F>,
) -> F {
    match kind {
        FeatureKind::Value => current_value_feature(tr, t, gamma),
        FeatureKind::Area => area_feature(tr, t, gamma),
    }
}
