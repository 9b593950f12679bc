use proptest::prelude::*;
use wsym_core::analysis::norms::{discrete_h1_norm, error_degree, field_errors};
use wsym_core::analysis::studies::{run_eigen_convergence, StudyConfig};
use wsym_core::eig::NewtonOptions;
use wsym_core::fe::Dims;
use wsym_core::linalg::{norm2, relative_asymmetry, to_dense};
use wsym_core::postprocess::postprocess_local;
use wsym_core::source::{case_by_name, solve_source_projected};
use wsym_core::{generate_structured_alfeld, solve_eigen, solve_source, Discretization, MaterialParams, Mesh, SideSet};

fn square(n: usize) -> Mesh {
    generate_structured_alfeld(n, SideSet::NONE).unwrap()
}

fn sides(mask: u8) -> SideSet {
    SideSet {
        left: mask & 1 != 0,
        right: mask & 2 != 0,
        bottom: mask & 4 != 0,
        top: mask & 8 != 0,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn h1_norm_is_homogeneous_and_subadditive(
        n in 1usize..3,
        alpha in -5.0f64..5.0,
        seed in proptest::collection::vec(-1.0f64..1.0, 2 * 96 * 6),
    ) {
        let mesh = square(n);
        let dims = Dims::new(1).unwrap();
        let m = mesh.n_elements() * dims.n_u;
        let u = &seed[..m];
        let v = &seed[m..2 * m];
        let nu = discrete_h1_norm(&mesh, &dims, u);
        let scaled: Vec<f64> = u.iter().map(|x| alpha * x).collect();
        prop_assert!((discrete_h1_norm(&mesh, &dims, &scaled) - alpha.abs() * nu).abs() <= 1e-12 * (1.0 + nu));
        let sum: Vec<f64> = u.iter().zip(v).map(|(a, b)| a + b).collect();
        let nv = discrete_h1_norm(&mesh, &dims, v);
        prop_assert!(discrete_h1_norm(&mesh, &dims, &sum) <= nu + nv + 1e-12);
        prop_assert!(norm2(&sum) <= norm2(u) + norm2(v) + 1e-12);
    }

    #[test]
    fn mesh_invariants(n in 1usize..6, mask in 0u8..15) {
        let mesh = generate_structured_alfeld(n, sides(mask)).unwrap();
        prop_assert_eq!(mesh.n_elements(), 6 * n * n);
        prop_assert_eq!(mesh.euler_characteristic(), 1);
        prop_assert!((mesh.total_area() - 1.0).abs() <= 1e-13);
        for e in 0..mesh.n_elements() {
            prop_assert!(mesh.geometry(e).det > 0.0);
        }
    }

    #[test]
    fn condensed_operator_is_spd_for_any_material(
        mu in 0.1f64..10.0,
        log_lambda in -1.0f64..6.0,
        rho in 0.1f64..10.0,
        mask in 0u8..15,
    ) {
        let params = MaterialParams::new(mu, 10f64.powf(log_lambda), rho).unwrap();
        let disc = Discretization::new(generate_structured_alfeld(1, sides(mask)).unwrap(), 1, &params).unwrap();
        prop_assert!(relative_asymmetry(&disc.system.a_h) <= 1e-11);
        let eig = to_dense(&disc.system.a_h).self_adjoint_eigen(faer::Side::Lower).unwrap();
        prop_assert!(eig.S().column_vector()[0] > 0.0);
    }

    #[test]
    fn source_solution_is_linear_in_the_load(
        a in -3.0f64..3.0,
        b in -3.0f64..3.0,
        k in 1usize..3,
        mask in 0u8..15,
    ) {
        let disc = Discretization::new(generate_structured_alfeld(1, sides(mask)).unwrap(), k, &MaterialParams::default()).unwrap();
        let f = disc.project_load(&|x| [x[0].sin(), x[1] * x[1]]);
        let g = disc.project_load(&|x| [1.0, x[0] - x[1]]);
        let h: Vec<f64> = f.iter().zip(&g).map(|(x, y)| a * x + b * y).collect();
        let (sf, sg, sh) = (
            solve_source_projected(&disc, &f).unwrap(),
            solve_source_projected(&disc, &g).unwrap(),
            solve_source_projected(&disc, &h).unwrap(),
        );
        let scale = 1.0 + norm2(&sh.sigma);
        for i in 0..sh.sigma.len() {
            prop_assert!((sh.sigma[i] - a * sf.sigma[i] - b * sg.sigma[i]).abs() <= 1e-10 * scale);
        }
        for i in 0..sh.u.len() {
            prop_assert!((sh.u[i] - a * sf.u[i] - b * sg.u[i]).abs() <= 1e-10 * scale);
        }
    }

    #[test]
    fn eigenvalues_scale_inversely_with_density(c in 0.1f64..10.0) {
        let base = MaterialParams::default();
        let scaled = MaterialParams::new(base.mu_s, base.lambda_s, c * base.rho_s).unwrap();
        let l0 = solve_eigen(&Discretization::new(square(1), 1, &base).unwrap(), 2, &NewtonOptions::default()).unwrap();
        let l1 = solve_eigen(&Discretization::new(square(1), 1, &scaled).unwrap(), 2, &NewtonOptions::default()).unwrap();
        for (a, b) in l0.iter().zip(&l1) {
            prop_assert!((a.lambda_h / c - b.lambda_h).abs() <= 1e-10 * a.lambda_h);
        }
    }
}

#[test]
fn error_quadrature_is_saturated() {
    let params = MaterialParams::default();
    let case = case_by_name("smooth").unwrap();
    for k in [1, 2] {
        for n in [1, 2, 4] {
            let disc = Discretization::new(square(n), k, &params).unwrap();
            let field = solve_source(&disc, &|x| case.load(x, &params)).unwrap();
            let post = postprocess_local(&disc.mesh, &field, &params).unwrap();
            let d = error_degree(k);
            assert!(d >= 2 * k + 8);
            let full = field_errors(&disc.mesh, &field, Some(&post), &case, &params, Some(d)).unwrap();
            let half = field_errors(&disc.mesh, &field, Some(&post), &case, &params, Some(d / 2)).unwrap();
            let pairs = [
                (full.sigma_l2, half.sigma_l2),
                (full.rho_l2, half.rho_l2),
                (full.u_l2, half.u_l2),
                (full.pu_1h, half.pu_1h),
                (full.post_h1.unwrap(), half.post_h1.unwrap()),
                (full.post_l2.unwrap(), half.post_l2.unwrap()),
            ];
            for (a, b) in pairs {
                assert!(((a - b) / a).abs() < 1e-3, "k={k} n={n}: {a} vs {b}");
            }
        }
    }
}

#[test]
fn eigenvalues_are_sorted_positive_and_distinctly_indexed() {
    for mask in [0u8, 2, 10] {
        let disc = Discretization::new(generate_structured_alfeld(2, sides(mask)).unwrap(), 1, &MaterialParams::default()).unwrap();
        let res = solve_eigen(&disc, 5, &NewtonOptions::default()).unwrap();
        let mut idx: Vec<usize> = res.iter().map(|r| r.index).collect();
        idx.sort();
        assert_eq!(idx, vec![0, 1, 2, 3, 4]);
        for w in res.windows(2) {
            assert!(w[0].lambda_h <= w[1].lambda_h);
        }
        for r in &res {
            assert!(r.lambda_h > 0.0 && r.residual <= 1e-10 && r.iterations <= 5);
        }
    }
}

#[test]
fn richardson_reference_is_self_consistent() {
    let cfg = StudyConfig {
        multiplicity: 2,
        levels: vec![4, 8, 16, 32],
        postprocess: false,
        ..Default::default()
    };
    let rep = run_eigen_convergence(&cfg).unwrap();
    let fine = rep.reference_lambda.unwrap();
    let coarse = rep.reference_lambda_coarser.unwrap();
    let l16 = rep.records[2].lambda_h.unwrap();
    let estimate = (l16 - fine).abs();
    assert!((fine - coarse).abs() <= estimate, "{fine} {coarse} {estimate}");
}
