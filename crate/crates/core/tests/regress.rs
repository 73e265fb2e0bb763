mod common;

use gwasms::genotype::Dataset;
use gwasms::regress::{
    block_f_test, fit, fit_design, ncp_decomposition, noncentrality_single_marker, Design,
    EffectModel, FitWorkspace, ModelSpec, RegressError,
};
use nalgebra::{DMatrix, DVector};
use rand::Rng;

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
}

#[test]
fn incremental_refits_match_fresh_fits() {
    let mut rng = common::rng(1);
    let g = common::matrix(common::hwe_columns(&mut rng, 50, 10, 0.1, 0.5));
    let y = common::normals(&mut rng, 50);
    let design = Design::new(&g, &y, &[]).unwrap();
    let mut ws = FitWorkspace::new(design, &[]).unwrap();
    let moves: [(bool, usize); 9] = [
        (true, 3),
        (true, 7),
        (true, 0),
        (false, 7),
        (true, 9),
        (true, 7),
        (false, 3),
        (false, 0),
        (true, 5),
    ];
    for (add, j) in moves {
        let inc = if add { ws.refit_add(j) } else { ws.refit_drop(j) }.unwrap();
        let fresh = fit_design(design, &inc.model).unwrap();
        assert!(close(inc.rss, fresh.rss, 1e-10));
        assert!(close(inc.f_statistic, fresh.f_statistic, 1e-9));
        for (a, b) in inc.coefficients.snps.iter().zip(&fresh.coefficients.snps) {
            assert!(close(*a, *b, 1e-9));
        }
        let x = common::dense_design(&g, &[], inc.model.snp_indices());
        assert!(close(inc.rss, common::ols(&x, &y).0, 1e-9));
    }
}

#[test]
fn add_then_drop_restores_the_model() {
    let mut rng = common::rng(2);
    let g = common::matrix(common::hwe_columns(&mut rng, 40, 6, 0.2, 0.5));
    let y = common::normals(&mut rng, 40);
    let design = Design::new(&g, &y, &[]).unwrap();
    let mut ws = FitWorkspace::from_model(design, &ModelSpec::new(vec![1, 4], vec![]).unwrap()).unwrap();
    let before = ws.result();
    ws.add_snp(2).unwrap();
    ws.drop_snp(2).unwrap();
    let after = ws.result();
    assert_eq!(after.model, before.model);
    assert!(close(after.rss, before.rss, 1e-12));
}

#[test]
fn sums_of_squares_partition_the_total() {
    let mut rng = common::rng(3);
    let g = common::matrix(common::ld_columns(&mut rng, 80, 8));
    let y: Vec<f64> = common::normals(&mut rng, 80).iter().map(|v| 3.0 + 2.0 * v).collect();
    let mean = y.iter().sum::<f64>() / 80.0;
    let tss: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
    let ds = Dataset::from_genotypes(g).with_trait(y).unwrap();
    for snps in [vec![0], vec![1, 5], vec![2, 3, 7]] {
        match fit(&ds, &ModelSpec::new(snps, vec![]).unwrap()) {
            Ok(r) => assert!(((r.mss + r.rss) - tss).abs() <= 1e-8 * tss),
            Err(RegressError::Collinear { .. }) => {}
            Err(e) => panic!("{e}"),
        }
    }
}

#[test]
fn rescaling_the_trait_keeps_f_and_p() {
    let mut rng = common::rng(4);
    let g = common::matrix(common::hwe_columns(&mut rng, 60, 5, 0.1, 0.5));
    let y = common::trait_from(&g, &[1], &[0.4], 1.0, &mut rng);
    let scaled: Vec<f64> = y.iter().map(|v| 1234.5 * v).collect();
    let model = ModelSpec::new(vec![1, 3], vec![]).unwrap();
    let a = fit_design(Design::new(&g, &y, &[]).unwrap(), &model).unwrap();
    let b = fit_design(Design::new(&g, &scaled, &[]).unwrap(), &model).unwrap();
    assert!(close(a.f_statistic, b.f_statistic, 1e-10));
    assert!(close(a.p_value, b.p_value, 1e-10));
}

/// `b'X'(P - E/n)Xb` and `b'X'(I - P)Xb` with dense projections.
fn dense_ncp(g: &gwasms::GenotypeMatrix, causal: &[usize], beta: &[f64], j: usize) -> (f64, f64) {
    let n = g.n_individuals();
    let xb: DVector<f64> =
        DVector::from_fn(n, |i, _| causal.iter().zip(beta).map(|(&l, b)| b * g.column(l)[i] as f64).sum());
    let x = common::dense_design(g, &[], &[j]);
    let p: DMatrix<f64> = &x * (x.transpose() * &x).try_inverse().unwrap() * x.transpose();
    let e = DMatrix::from_element(n, n, 1.0 / n as f64);
    let id = DMatrix::<f64>::identity(n, n);
    let m = xb.dot(&((&p - e) * &xb));
    let r = xb.dot(&((id - p) * &xb));
    (m, r)
}

#[test]
fn noncentralities_match_dense_projections() {
    let mut rng = common::rng(5);
    let g = common::matrix(common::ld_columns(&mut rng, 100, 5));
    let causal = [0, 2, 4];
    let beta = [0.7, -0.3, 0.5];
    let truth = EffectModel::new(causal.to_vec(), beta.to_vec()).unwrap();
    for j in 0..5 {
        if gwasms::genotype::sample_variance(&g.column_f64(j)) == 0.0 {
            continue;
        }
        let pair = noncentrality_single_marker(&g, &truth, 1.0, j).unwrap();
        let (m, r) = dense_ncp(&g, &causal, &beta, j);
        assert!(close(pair.nu_m, m, 1e-9), "nu_m {j}: {} vs {m}", pair.nu_m);
        assert!(close(pair.nu_r, r, 1e-9), "nu_r {j}: {} vs {r}", pair.nu_r);
        let half = noncentrality_single_marker(&g, &truth, 2.0, j).unwrap();
        assert!(close(half.nu_m, m / 4.0, 1e-9));
    }
}

#[test]
fn orthogonal_design_noncentrality() {
    // Balanced orthogonal columns: centered cross-products vanish.
    let a: Vec<i8> = vec![1, 1, -1, -1, 1, 1, -1, -1];
    let b: Vec<i8> = vec![1, -1, 1, -1, 1, -1, 1, -1];
    let g = common::matrix(vec![a.clone(), b]);
    let truth = EffectModel::new(vec![0, 1], vec![0.5, 0.8]).unwrap();
    let pair = noncentrality_single_marker(&g, &truth, 1.0, 0).unwrap();
    // (n - 1) Var(x) b^2 / sigma^2 with Var(x) = 8/7.
    assert!(close(pair.nu_m, 8.0 * 0.25, 1e-12));
    assert!(close(pair.nu_r, 8.0 * 0.64, 1e-12));
}

#[test]
fn sqrt_nu_m_splits_into_own_and_cross_terms() {
    let mut rng = common::rng(6);
    let g = common::matrix(common::ld_columns(&mut rng, 120, 6));
    let causal = vec![1, 2, 5];
    let beta = vec![0.4, -0.6, 0.25];
    let truth = EffectModel::new(causal.clone(), beta.clone()).unwrap();
    let n = 120.0;
    for j in 0..6 {
        let xj = g.column_f64(j);
        let vj = gwasms::genotype::sample_variance(&xj);
        if vj == 0.0 {
            continue;
        }
        let pair = noncentrality_single_marker(&g, &truth, 1.0, j).unwrap();
        let d = ncp_decomposition(&g, &truth, 1.0, j).unwrap();
        let mut own = 0.0;
        let mut cross = 0.0;
        for (&l, &b) in causal.iter().zip(&beta) {
            let c = gwasms::genotype::sample_covariance(&xj, &g.column_f64(l));
            if l == j {
                own += b * vj.sqrt();
            } else {
                cross += b * c / vj.sqrt();
            }
        }
        let scale = (n - 1.0f64).sqrt();
        assert!((pair.nu_m.sqrt() - scale * (own + cross).abs()).abs() < 1e-10 * (1.0 + pair.nu_m.sqrt()));
        assert!((d.own - scale * own).abs() < 1e-10 * (1.0 + d.own.abs()));
        assert!((d.cross - scale * cross).abs() < 1e-10 * (1.0 + d.cross.abs()));
    }
}

#[test]
fn one_covariate_block_test_is_the_squared_t() {
    let mut rng = common::rng(7);
    let g = common::matrix(common::hwe_columns(&mut rng, 70, 3, 0.2, 0.5));
    let cov: Vec<f64> = (0..70).map(|_| rng.random_range(-1.0..1.0)).collect();
    let y: Vec<f64> = common::trait_from(&g, &[0], &[0.3], 1.0, &mut rng)
        .iter()
        .zip(&cov)
        .map(|(v, c)| v + 0.5 * c)
        .collect();
    let ds = Dataset::from_genotypes(g.clone()).with_trait(y.clone()).unwrap().with_covariates(vec![cov.clone()]).unwrap();
    let model = ModelSpec::new(vec![0], vec![0]).unwrap();
    let (f, p) = block_f_test(&ds, &model, &[0]).unwrap();
    let r = fit(&ds, &model).unwrap();
    let t = r.coefficients.covariates[0] / r.std_errors.covariates[0];
    assert!(close(f, t * t, 1e-9));
    assert!(p > 0.0 && p < 1.0);
}

#[test]
fn collinear_covariate_block_is_rejected() {
    let mut rng = common::rng(8);
    let g = common::matrix(common::hwe_columns(&mut rng, 30, 2, 0.2, 0.5));
    let y = common::normals(&mut rng, 30);
    let c1: Vec<f64> = (0..30).map(|_| rng.random_range(-1.0..1.0)).collect();
    let c2: Vec<f64> = c1.iter().map(|v| 2.0 * v + 1.0).collect();
    let ds = Dataset::from_genotypes(g).with_trait(y).unwrap().with_covariates(vec![c1, c2]).unwrap();
    let err = block_f_test(&ds, &ModelSpec::new(vec![0], vec![0, 1]).unwrap(), &[1]).unwrap_err();
    assert!(matches!(err, RegressError::Collinear { .. }));
}

#[test]
fn null_block_p_values_look_uniform() {
    let mut rng = common::rng(9);
    let g = common::matrix(common::hwe_columns(&mut rng, 60, 2, 0.2, 0.5));
    let cov: Vec<f64> = (0..60).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mut p: Vec<f64> = (0..2000)
        .map(|_| {
            let y = common::normals(&mut rng, 60);
            let ds = Dataset::from_genotypes(g.clone())
                .with_trait(y)
                .unwrap()
                .with_covariates(vec![cov.clone()])
                .unwrap();
            block_f_test(&ds, &ModelSpec::new(vec![0, 1], vec![0]).unwrap(), &[0]).unwrap().1
        })
        .collect();
    p.sort_by(f64::total_cmp);
    let m = p.len() as f64;
    let ks = p
        .iter()
        .enumerate()
        .map(|(i, &v)| (v - i as f64 / m).abs().max(((i + 1) as f64 / m - v).abs()))
        .fold(0.0, f64::max);
    // 1% critical value of the one-sample KS statistic.
    assert!(ks < 1.63 / m.sqrt(), "KS {ks}");
}
