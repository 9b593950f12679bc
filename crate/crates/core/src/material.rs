//! Isotropic material constants and the compliance operator.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Spatial dimension.
pub const DIM: usize = 2;

/// Lamé coefficients and density of a homogeneous isotropic material.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaterialParams {
    pub mu_s: f64,
    pub lambda_s: f64,
    pub rho_s: f64,
}

impl Default for MaterialParams {
    fn default() -> Self {
        Self {
            mu_s: 1.0,
            lambda_s: 1.0,
            rho_s: 1.0,
        }
    }
}

impl MaterialParams {
    pub fn new(mu_s: f64, lambda_s: f64, rho_s: f64) -> Result<Self> {
        let p = Self { mu_s, lambda_s, rho_s };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("mu_s", self.mu_s), ("lambda_s", self.lambda_s), ("rho_s", self.rho_s)] {
            if !v.is_finite() {
                return Err(Error::InvalidInput(format!("{name} must be finite")));
            }
            if v <= 0.0 {
                return Err(Error::InvalidInput(format!("{name} must be positive")));
            }
        }
        Ok(())
    }

    /// Coefficient of `tr(tau) I` in the compliance: `1 / (n (n lambda + 2 mu))`.
    pub fn trace_coefficient(&self) -> f64 {
        let n = DIM as f64;
        1.0 / (n * (n * self.lambda_s + 2.0 * self.mu_s))
    }

    /// Compliance as a 4x4 matrix acting on row-major flattened 2x2 matrices.
    pub fn compliance_matrix(&self) -> [[f64; 4]; 4] {
        let mut m = [[0.0; 4]; 4];
        for j in 0..4 {
            let mut e = [[0.0; 2]; 2];
            e[j / 2][j % 2] = 1.0;
            let a = compliance_apply(&e, self);
            for i in 0..4 {
                m[i][j] = a[i / 2][i % 2];
            }
        }
        m
    }
}

/// `A tau = tau^D / (2 mu) + tr(tau) I / (n (n lambda + 2 mu))`.
pub fn compliance_apply(tau: &[[f64; 2]; 2], params: &MaterialParams) -> [[f64; 2]; 2] {
    let tr = tau[0][0] + tau[1][1];
    let half = tr / DIM as f64;
    let a = 1.0 / (2.0 * params.mu_s);
    let b = params.trace_coefficient() * tr;
    [
        [a * (tau[0][0] - half) + b, a * tau[0][1]],
        [a * tau[1][0], a * (tau[1][1] - half) + b],
    ]
}

/// Inverse of the compliance: `2 mu eps + lambda tr(eps) I`.
pub fn stiffness_apply(eps: &[[f64; 2]; 2], params: &MaterialParams) -> [[f64; 2]; 2] {
    let tr = eps[0][0] + eps[1][1];
    let (m, l) = (params.mu_s, params.lambda_s);
    [
        [2.0 * m * eps[0][0] + l * tr, 2.0 * m * eps[0][1]],
        [2.0 * m * eps[1][0], 2.0 * m * eps[1][1] + l * tr],
    ]
}

pub fn frobenius(a: &[[f64; 2]; 2], b: &[[f64; 2]; 2]) -> f64 {
    a[0][0] * b[0][0] + a[0][1] * b[0][1] + a[1][0] * b[1][0] + a[1][1] * b[1][1]
}

/// `∫_K A sigma : tau` for two stress fields given by coefficients in the stress basis of order `k`.
pub fn compliance_energy(
    sigma: &[f64],
    tau: &[f64],
    geom: &crate::mesh::ElementGeometry,
    k: usize,
    rule: &crate::quadrature::QuadratureRule,
    params: &MaterialParams,
) -> Result<f64> {
    let np = crate::basis::dim_p(k + 1);
    if sigma.len() != 4 * np || tau.len() != 4 * np {
        return Err(Error::InvalidInput(format!(
            "stress coefficient length must be {} for k = {k}",
            4 * np
        )));
    }
    if rule.degree < 2 * (k + 1) {
        return Err(Error::InvalidInput(format!(
            "quadrature degree {} below {} needed for k = {k}",
            rule.degree,
            2 * (k + 1)
        )));
    }
    let scalar = crate::basis::scalar_basis(k + 1);
    let scale = 1.0 / geom.det.sqrt();
    let mut vals = vec![0.0; np];
    let mut total = 0.0;
    for (p, w) in rule.iter() {
        scalar.eval(p, &mut vals, None);
        let field = |c: &[f64]| {
            let mut m = [[0.0; 2]; 2];
            for comp in 0..4 {
                m[comp / 2][comp % 2] = scale * (0..np).map(|a| c[comp * np + a] * vals[a]).sum::<f64>();
            }
            m
        };
        let s = field(sigma);
        let t = field(tau);
        total += w * geom.det * frobenius(&compliance_apply(&s, params), &t);
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::ElementGeometry;
    use crate::quadrature::triangle_rule;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const I: [[f64; 2]; 2] = [[1.0, 0.0], [0.0, 1.0]];
    const J: [[f64; 2]; 2] = [[0.0, 1.0], [-1.0, 0.0]];

    #[test]
    fn identity_and_skew() {
        let p = MaterialParams::new(0.5, 0.5, 1.0).unwrap();
        let a = compliance_apply(&I, &p);
        assert!((a[0][0] - 0.5).abs() < 1e-15 && (a[1][1] - 0.5).abs() < 1e-15);
        assert_eq!(a[0][1], 0.0);
        let p = MaterialParams::new(1.7, 3.0, 1.0).unwrap();
        let aj = compliance_apply(&J, &p);
        assert!((aj[0][1] - 1.0 / 3.4).abs() < 1e-15 && (aj[1][0] + 1.0 / 3.4).abs() < 1e-15);
    }

    #[test]
    fn trace_and_deviator_identities() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let p = MaterialParams::new(rng.random_range(0.1..5.0), rng.random_range(0.1..1e4), 1.0).unwrap();
            let t = [
                [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)],
                [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)],
            ];
            let a = compliance_apply(&t, &p);
            let tr_t = t[0][0] + t[1][1];
            let tr_a = a[0][0] + a[1][1];
            assert!((tr_a - tr_t / (2.0 * p.lambda_s + 2.0 * p.mu_s)).abs() < 1e-14);
            for i in 0..2 {
                for j in 0..2 {
                    let d = if i == j { 1.0 } else { 0.0 };
                    let dev_a = a[i][j] - d * tr_a / 2.0;
                    let dev_t = t[i][j] - d * tr_t / 2.0;
                    assert!((dev_a - dev_t / (2.0 * p.mu_s)).abs() < 1e-14);
                }
            }
            // stiffness inverts compliance
            let back = stiffness_apply(&a, &p);
            for i in 0..2 {
                for j in 0..2 {
                    assert!((back[i][j] - t[i][j]).abs() < 1e-10 * (1.0 + p.lambda_s));
                }
            }
        }
    }

    #[test]
    fn matrix_matches_apply() {
        let p = MaterialParams::new(0.3, 7.0, 1.0).unwrap();
        let m = p.compliance_matrix();
        for i in 0..4 {
            for j in 0..4 {
                assert!((m[i][j] - m[j][i]).abs() < 1e-16);
            }
        }
        assert!((m[0][0] - (1.0 / 1.2 + 1.0 / (2.0 * 14.6))).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_params() {
        assert!(MaterialParams::new(1.0, -1.0, 1.0).unwrap_err().to_string().contains("lambda_s must be positive"));
        assert!(MaterialParams::new(1.0, f64::INFINITY, 1.0).is_err());
        assert!(MaterialParams::new(0.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn energy_examples() {
        // unit-area right triangle
        let g = ElementGeometry::new([[0.0, 0.0], [2.0_f64.sqrt(), 0.0], [0.0, 2.0_f64.sqrt()]]);
        assert!((g.area - 1.0).abs() < 1e-14);
        let p = MaterialParams::new(0.5, 0.5, 1.0).unwrap();
        let rule = triangle_rule(6).unwrap();
        let k = 1;
        let np = crate::basis::dim_p(2);
        // the first physical basis function is the constant 1 / sqrt(area)
        let c = g.area.sqrt();
        let mut id = vec![0.0; 4 * np];
        id[0] = c;
        id[3 * np] = c;
        let mut skew = vec![0.0; 4 * np];
        skew[np] = c;
        skew[2 * np] = -c;
        let e = compliance_energy(&id, &id, &g, k, &rule, &p).unwrap();
        assert!((e - 1.0).abs() < 1e-13, "{e}");
        let e = compliance_energy(&skew, &id, &g, k, &rule, &p).unwrap();
        assert!(e.abs() < 1e-14);
        assert!(compliance_energy(&id[..3], &id, &g, k, &rule, &p).is_err());
    }

    #[test]
    fn energy_is_symmetric_positive() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let g = ElementGeometry::new([[0.1, 0.2], [0.9, 0.3], [0.4, 0.8]]);
        let p = MaterialParams::new(1.3, 40.0, 1.0).unwrap();
        let rule = triangle_rule(8).unwrap();
        for k in [1, 2] {
            let n = 4 * crate::basis::dim_p(k + 1);
            let a: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let b: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let ab = compliance_energy(&a, &b, &g, k, &rule, &p).unwrap();
            let ba = compliance_energy(&b, &a, &g, k, &rule, &p).unwrap();
            assert!((ab - ba).abs() < 1e-13);
            assert!(compliance_energy(&a, &a, &g, k, &rule, &p).unwrap() > 0.0);
        }
    }
}
