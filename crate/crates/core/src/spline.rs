//! B-spline basis for the log baseline hazard.
//!
//! The basis is clamped (open uniform): boundary knots are repeated
//! `degree + 1` times, so the basis functions form a partition of unity on
//! the boundary interval and interpolate at the endpoints.

use num_traits::Float;

use crate::error::Error;

/// Knot configuration for a clamped B-spline basis of a given degree.
///
/// A basis of size `Q` over boundary `[lo, hi]` has `Q - degree - 1`
/// interior knots.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct KnotVector<F = f64> {
    pub degree: usize,
    pub interior: Vec<F>,
    pub boundary: [F; 2],
}

impl<F: Float> KnotVector<F> {
    pub fn new(degree: usize, interior: Vec<F>, boundary: [F; 2]) -> Result<Self, Error> {
        if boundary[1] <= boundary[0] {
            return Err(Error::config("knot boundary must have positive width"));
        }
        let inside = interior
            .iter()
            .all(|&k| k > boundary[0] && k < boundary[1]);
        if !inside {
            return Err(Error::config(
                "interior knots must lie strictly inside the boundary",
            ));
        }
        if interior.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::config("interior knots must be nondecreasing"));
        }
        Ok(KnotVector {
            degree,
            interior,
            boundary,
        })
    }

    /// Number of basis functions.
    pub fn basis_size(&self) -> usize {
        self.interior.len() + self.degree + 1
    }

    /// Full clamped knot sequence: boundary knots repeated `degree + 1` times.
    pub fn full_knots(&self) -> Vec<F> {
        let mut u = Vec::with_capacity(self.interior.len() + 2 * (self.degree + 1));
        u.extend(std::iter::repeat(self.boundary[0]).take(self.degree + 1));
        u.extend(self.interior.iter().copied());
        u.extend(std::iter::repeat(self.boundary[1]).take(self.degree + 1));
        u
    }

    pub fn clamp(&self, t: F) -> F {
        t.max(self.boundary[0]).min(self.boundary[1])
    }
}

/// Intercept and coefficients of the log baseline hazard expansion.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct BaselineHazardCoeffs {
    pub gamma0: f64,
    pub gammas: Vec<f64>,
}

/// Place knots for a basis of `q` functions: boundary `[0, max(times)]`,
/// interior knots at equally spaced quantiles of `times`.
pub fn build_knots(times: &[f64], q: usize, degree: usize) -> Result<KnotVector, Error> {
    let t_max = times
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    if !t_max.is_finite() {
        return Err(Error::config("build_knots requires nonempty finite times"));
    }
    build_knots_in(times, [0.0, t_max], q, degree)
}

/// Same as [`build_knots`] with an explicit boundary, so the quantile sample
/// (typically uncensored event times) and the support can differ.
pub fn build_knots_in(
    times: &[f64],
    boundary: [f64; 2],
    q: usize,
    degree: usize,
) -> Result<KnotVector, Error> {
    if times.is_empty() {
        return Err(Error::config("build_knots requires nonempty times"));
    }
    if q < degree + 1 {
        return Err(Error::config(format!(
            "basis size {q} must be at least degree + 1 = {}",
            degree + 1
        )));
    }
    let n_interior = q - degree - 1;
    let mut sorted = times.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut interior = Vec::with_capacity(n_interior);
    for i in 1..=n_interior {
        let p = i as f64 / (n_interior + 1) as f64;
        interior.push(quantile_type7(&sorted, p));
    }
    let distinct_ok = interior.windows(2).all(|w| w[0] < w[1])
        && interior
            .iter()
            .all(|&k| k > boundary[0] && k < boundary[1]);
    if !distinct_ok {
        return Err(Error::config(format!(
            "cannot place {n_interior} distinct interior knots from the given event times"
        )));
    }
    KnotVector::new(degree, interior, boundary)
}

/// Type-7 empirical quantile of an already sorted sample.
pub fn quantile_type7(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Evaluate all basis functions at `t` (clamped to the boundary).
pub fn eval_basis<F: Float>(t: F, kv: &KnotVector<F>) -> Vec<F> {
    let mut out = vec![F::zero(); kv.basis_size()];
    eval_basis_into(t, kv, &mut out);
    out
}

/// Evaluate all basis functions at `t` into a preallocated slice.
pub fn eval_basis_into<F: Float>(t: F, kv: &KnotVector<F>, out: &mut [F]) {
    let n_basis = kv.basis_size();
    assert_eq!(out.len(), n_basis, "basis output length mismatch");
    let p = kv.degree;
    let u = kv.full_knots();
    let t = kv.clamp(t);
    let span = find_span(n_basis - 1, p, t, &u);

    // Cox-de Boor over the single non-vanishing span.
    let mut vals = vec![F::zero(); p + 1];
    let mut left = vec![F::zero(); p + 1];
    let mut right = vec![F::zero(); p + 1];
    vals[0] = F::one();
    for j in 1..=p {
        left[j] = t - u[span + 1 - j];
        right[j] = u[span + j] - t;
        let mut saved = F::zero();
        for r in 0..j {
            let temp = vals[r] / (right[r + 1] + left[j - r]);
            vals[r] = saved + right[r + 1] * temp;
            saved = left[j - r] * temp;
        }
        vals[j] = saved;
    }

    for x in out.iter_mut() {
        *x = F::zero();
    }
    for (r, &v) in vals.iter().enumerate() {
        out[span - p + r] = v;
    }
}

fn find_span<F: Float>(n: usize, p: usize, t: F, u: &[F]) -> usize {
    if t >= u[n + 1] {
        return n;
    }
    if t <= u[p] {
        return p;
    }
    let (mut lo, mut hi) = (p, n + 1);
    let mut mid = (lo + hi) / 2;
    while t < u[mid] || t >= u[mid + 1] {
        if t < u[mid] {
            hi = mid;
        } else {
            lo = mid;
        }
        mid = (lo + hi) / 2;
    }
    mid
}

/// log h0(t) = gamma0 + sum_q gammas[q] B_q(t).
pub fn log_baseline_hazard(t: f64, coeffs: &BaselineHazardCoeffs, kv: &KnotVector) -> f64 {
    assert_eq!(
        coeffs.gammas.len(),
        kv.basis_size(),
        "spline coefficient length must match basis size"
    );
    let basis = eval_basis(t, kv);
    coeffs.gamma0
        + basis
            .iter()
            .zip(&coeffs.gammas)
            .map(|(b, g)| b * g)
            .sum::<f64>()
}
