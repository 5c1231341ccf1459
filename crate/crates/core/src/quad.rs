//! Gauss-Legendre quadrature.

use num_traits::Float;

/// Nodes and weights of an `n`-point Gauss-Legendre rule on `[-1, 1]`.
#[derive(Debug, Clone)]
pub struct GaussLegendre<F = f64> {
    pub nodes: Vec<F>,
    pub weights: Vec<F>,
}

impl<F: Float> GaussLegendre<F> {
    /// Build the rule by Newton iteration on the Legendre polynomial roots.
    pub fn new(n: usize) -> Self {
        assert!(n >= 1);
        let mut nodes = vec![F::zero(); n];
        let mut weights = vec![F::zero(); n];
        let pi = F::from(std::f64::consts::PI).unwrap();
        let nf = F::from(n).unwrap();
        let half = F::from(0.5).unwrap();
        let eps = F::from(1e-15).unwrap();
        for i in 0..n {
            let k = F::from(i).unwrap();
            let mut x = (pi * (k + F::from(0.75).unwrap()) / (nf + half)).cos();
            for _ in 0..100 {
                let (p, d) = legendre_with_derivative(n, x);
                let step = p / d;
                x = x - step;
                if step.abs() <= eps {
                    break;
                }
            }
            let (_, dp) = legendre_with_derivative(n, x);
            // The cosine seeds walk the roots from largest to smallest, so
            // negating yields ascending nodes; weights are symmetric.
            nodes[i] = -x;
            weights[i] = F::from(2.0).unwrap() / ((F::one() - x * x) * dp * dp);
        }
        GaussLegendre { nodes, weights }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Nodes and weights mapped to `[a, b]`.
    pub fn mapped(&self, a: F, b: F) -> impl Iterator<Item = (F, F)> + '_ {
        let half = F::from(0.5).unwrap();
        let mid = half * (a + b);
        let hw = half * (b - a);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(move |(&x, &w)| (mid + hw * x, hw * w))
    }

    /// Integrate `f` over `[a, b]`.
    pub fn integrate<G: FnMut(F) -> F>(&self, a: F, b: F, mut f: G) -> F {
        self.mapped(a, b)
            .fold(F::zero(), |acc, (t, w)| acc + w * f(t))
    }
}

fn legendre_with_derivative<F: Float>(n: usize, x: F) -> (F, F) {
    let mut p0 = F::one();
    let mut p1 = x;
    for k in 2..=n {
        let kf = F::from(k).unwrap();
        let a = (F::from(2 * k - 1).unwrap() * x * p1 - F::from(k - 1).unwrap() * p0) / kf;
        p0 = p1;
        p1 = a;
    }
    if n == 0 {
        return (F::one(), F::zero());
    }
    if n == 1 {
        return (x, F::one());
    }
    let nf = F::from(n).unwrap();
    let d = nf * (x * p1 - p0) / (x * x - F::one());
    (p1, d)
}
