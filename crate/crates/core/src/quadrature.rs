//! Gauss-Legendre edge rules and collapsed (conical product) triangle rules.

use crate::error::{Error, Result};

/// Highest polynomial exactness degree a rule can be requested for.
pub const MAX_DEGREE: usize = 20;

/// A quadrature rule on the reference triangle `(0,0),(1,0),(0,1)` or on the unit interval.
///
/// Triangle points are stored as `[xi, eta]`; interval rules use only the first coordinate.
#[derive(Debug, Clone)]
pub struct QuadratureRule {
    pub points: Vec<[f64; 2]>,
    pub weights: Vec<f64>,
    pub degree: usize,
}

impl QuadratureRule {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = ([f64; 2], f64)> + '_ {
        self.points.iter().copied().zip(self.weights.iter().copied())
    }
}

/// Nodes and weights of the `n`-point Gauss-Legendre rule on `[-1, 1]`.
fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        // Chebyshev-like initial guess, refined by Newton on P_n.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, x);
        dp = if d != 0.0 { d } else { dp };
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    (nodes, weights)
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for j in 2..=n {
        let p2 = ((2 * j - 1) as f64 * x * p1 - (j - 1) as f64 * p0) / j as f64;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Gauss-Legendre rule on `[0, 1]` exact for polynomials of degree `degree`.
pub fn edge_rule(degree: usize) -> Result<QuadratureRule> {
    if degree > MAX_DEGREE {
        return Err(Error::QuadratureDegree(degree));
    }
    let n = degree / 2 + 1;
    let (x, w) = gauss_legendre(n);
    Ok(QuadratureRule {
        points: x.iter().map(|&t| [0.5 * (t + 1.0), 0.0]).collect(),
        weights: w.iter().map(|&w| 0.5 * w).collect(),
        degree,
    })
}

/// Collapsed Gauss rule on the reference triangle exact for polynomials of degree `degree`.
///
/// Uses the map `(a, b) -> (a, b (1 - a))` with Jacobian `1 - a`; all weights are positive.
pub fn triangle_rule(degree: usize) -> Result<QuadratureRule> {
    if degree > MAX_DEGREE {
        return Err(Error::QuadratureDegree(degree));
    }
    let n = (degree + 2).div_ceil(2);
    let (x, w) = gauss_legendre(n);
    let mut points = Vec::with_capacity(n * n);
    let mut weights = Vec::with_capacity(n * n);
    for i in 0..n {
        let a = 0.5 * (x[i] + 1.0);
        let wa = 0.5 * w[i];
        for j in 0..n {
            let b = 0.5 * (x[j] + 1.0);
            let wb = 0.5 * w[j];
            points.push([a, b * (1.0 - a)]);
            weights.push(wa * wb * (1.0 - a));
        }
    }
    Ok(QuadratureRule {
        points,
        weights,
        degree,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn factorial(n: u32) -> f64 {
        (1..=n).map(f64::from).product()
    }

    #[test]
    fn triangle_monomials() {
        let rule = triangle_rule(6).unwrap();
        let integrate = |f: &dyn Fn(f64, f64) -> f64| -> f64 {
            rule.iter().map(|(p, w)| w * f(p[0], p[1])).sum()
        };
        assert!((integrate(&|_, _| 1.0) - 0.5).abs() < 1e-15);
        assert!((integrate(&|x, _| x) - 1.0 / 6.0).abs() < 1e-15);
        assert!((integrate(&|x, y| x * y) - 1.0 / 24.0).abs() < 1e-15);
        assert!(rule.weights.iter().all(|&w| w > 0.0));
    }

    #[test]
    fn edge_cubic() {
        let rule = edge_rule(3).unwrap();
        let v: f64 = rule.iter().map(|(p, w)| w * p[0].powi(3)).sum();
        assert!((v - 0.25).abs() < 1e-15);
        let total: f64 = rule.weights.iter().sum();
        assert!((total - 1.0).abs() < 1e-15);
    }

    #[test]
    fn exact_to_max_degree() {
        for d in [0, 1, 5, 12, MAX_DEGREE] {
            let rule = triangle_rule(d).unwrap();
            for a in 0..=d as u32 {
                for b in 0..=(d as u32 - a) {
                    let q: f64 = rule
                        .iter()
                        .map(|(p, w)| w * p[0].powi(a as i32) * p[1].powi(b as i32))
                        .sum();
                    let exact = factorial(a) * factorial(b) / factorial(a + b + 2);
                    assert!((q - exact).abs() <= 1e-14 * exact.max(1e-300) + 1e-17, "{a} {b}");
                }
            }
        }
    }

    #[test]
    fn rejects_large_degree() {
        assert!(triangle_rule(21).is_err());
        assert!(edge_rule(40).is_err());
    }
}
