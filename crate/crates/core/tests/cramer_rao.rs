use fimgate_core::fim::cramer_rao_toy;
use fimgate_core::Error;

#[test]
fn estimator_spread_matches_bound() {
    let r = cramer_rao_toy(1000, 200, 0.5, 17).unwrap();
    for j in 0..3 {
        let ratio = r.empirical_cov[(j, j)] / r.bound[(j, j)];
        assert!((0.8..=1.2).contains(&ratio), "coefficient {j}: ratio {ratio}");
    }
}

#[test]
fn doubling_samples_halves_variance() {
    let small = cramer_rao_toy(1000, 200, 0.5, 17).unwrap();
    let large = cramer_rao_toy(1000, 400, 0.5, 17).unwrap();
    for j in 0..3 {
        let ratio = large.empirical_cov[(j, j)] / small.empirical_cov[(j, j)];
        assert!((0.4..=0.6).contains(&ratio), "coefficient {j}: ratio {ratio}");
    }
}

#[test]
fn noiseless_estimates_do_not_vary() {
    let r = cramer_rao_toy(100, 50, 0.0, 1).unwrap();
    assert!(r.empirical_cov.iter().all(|v| v.abs() < 1e-20));
}

#[test]
fn rejects_degenerate_requests() {
    assert!(matches!(cramer_rao_toy(10, 200, 1.0, 0), Err(Error::InvalidConfig(_))));
    assert!(matches!(cramer_rao_toy(100, 2, 1.0, 0), Err(Error::Singular)));
}
