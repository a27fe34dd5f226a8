//! Renewal structure: fixtures with closed forms, calibrated tables and the
//! derivatives of the implicit function.

use polymer_core::coarse::ConeSpec;
use polymer_core::environment::PotentialDistribution;
use polymer_core::lattice::Site;
use polymer_core::renewal::{
    annealed_lln_clt_check, build_irreducible_tables, calibrate_lambda, convolve_tables, renewal_limit, EffectiveStepLaw,
    KernelTable,
};

/// `t_{x,n} - sum_{m<n} sum_y t_{y,m} f_{x-y,n-m}`, maximised, by a direct loop.
fn convolution_residual(f: &KernelTable, t: &KernelTable, nmax: usize) -> f64 {
    let mut worst = 0.0f64;
    let mut expect = KernelTable::new(f.dim, nmax).unwrap();
    expect.set(Site::ORIGIN, 0, 1.0);
    for n in 1..=nmax {
        for m in 0..n {
            for (y, a) in t.layer(m) {
                for (z, b) in f.layer(n - m) {
                    expect.add(y + z, n, a * b);
                }
            }
        }
    }
    for n in 0..=nmax {
        for (x, v) in expect.layer(n) {
            worst = worst.max((t.get(x, n) - v).abs());
        }
        for (x, v) in t.layer(n) {
            worst = worst.max((expect.get(x, n) - v).abs());
        }
    }
    worst
}

#[test]
fn geometric_fixture_has_flat_renewal_sequence() {
    for dim in [1, 2] {
        let law = EffectiveStepLaw::geometric(dim, 0.4, 60).unwrap();
        let asym = renewal_limit(&law, None).unwrap();
        assert!((asym.kappa - 5.0 / 3.0).abs() <= 1e-12);
        for n in 1..asym.t_n.len() {
            assert!((asym.t_n[n] - 0.6).abs() <= 1e-12, "t_{n} = {}", asym.t_n[n]);
        }
        let f = law.kernel(12).unwrap();
        let t = convolve_tables(&f, 12).unwrap();
        assert!(convolution_residual(&f, &t, 12) <= 1e-12);
        for n in 1..=12 {
            assert!((t.marginal()[n] - 0.6).abs() <= 1e-12);
        }
    }
}

#[test]
fn degenerate_fixture_is_a_point_mass() {
    let law = EffectiveStepLaw::degenerate(2).unwrap();
    let t = convolve_tables(&law.kernel(9).unwrap(), 9).unwrap();
    for n in 0..=9 {
        assert_eq!(t.layer(n), vec![(Site::new(&[n as i32, 0]), 1.0)]);
    }
    let asym = renewal_limit(&law, None).unwrap();
    assert_eq!(asym.kappa, 1.0);
    assert!(!asym.derivatives.hess_positive_definite);
}

#[test]
fn annealed_tables_satisfy_the_renewal_identity() {
    let dist = PotentialDistribution::bernoulli(0.5, 1.0).unwrap();
    for (beta, h, delta, nmax) in [(0.0, vec![4.0, 0.0], 0.5, 10), (1.0, vec![1.77, 0.0], 0.25, 9), (0.5, vec![2.0, 1.0], 0.4, 9)] {
        let cone = ConeSpec::free_walk(h.clone(), delta).unwrap().lookup(nmax as i32 + 1).unwrap();
        let table = build_irreducible_tables(&dist, beta, &cone, nmax).unwrap();
        let (f, t) = table.kernels().unwrap();
        let scale = t.max_abs().max(1.0);
        assert!(convolution_residual(&f, &t, nmax) <= 1e-10 * scale);
        assert!(table.renewal_residual().unwrap() <= 1e-10 * scale);
    }
}

#[test]
fn calibration_at_zero_disorder_recovers_the_free_mass() {
    let dist = PotentialDistribution::bernoulli(0.5, 1.0).unwrap();
    let h = vec![4.0, 0.0];
    let cone = ConeSpec::free_walk(h.clone(), 0.5).unwrap().lookup(13).unwrap();
    let table = build_irreducible_tables(&dist, 0.0, &cone, 12).unwrap();
    let (cal, info) = calibrate_lambda(&table, 1e-15, 1e-6).unwrap();
    let free = ((h[0] as f64).cosh() + (h[1] as f64).cosh()).ln() - 2f64.ln();
    assert!((info.sum_f - 1.0).abs() <= 1e-6);
    // the truncation deficit pulls lambda* just below the exact value
    assert!(info.lambda <= free + 1e-12 && free - info.lambda < 1e-5, "{} vs {free}", info.lambda);
    let (_, t) = cal.kernels().unwrap();
    assert!((t.marginal()[12] * info.kappa - 1.0).abs() <= 0.01);

    let law = EffectiveStepLaw::from_table(&cal).unwrap();
    let asym = renewal_limit(&law, None).unwrap();
    assert!(asym.tail_r2.unwrap() >= 0.95);
    let d = &asym.derivatives;
    assert!(d.grad_gap <= 1e-6, "gradient gap {:e}", d.grad_gap);
    assert!(d.hess_asymmetry <= 1e-10);
    assert!(d.hess_positive_definite);
    // v points along the drift and is a velocity below one
    assert!(asym.v[0] > 0.0 && asym.v[0] < 1.0 && asym.v[1].abs() < 1e-12);
}

#[test]
fn clt_gap_shrinks_with_length() {
    let law = EffectiveStepLaw::geometric(1, 0.4, 60).unwrap();
    let alphas: Vec<Vec<f64>> = (1..=8).map(|k| vec![0.25 * k as f64]).collect();
    let rep = annealed_lln_clt_check(&law, &[8, 12, 16], &alphas).unwrap();
    assert!(rep.clt_decreasing);
    assert!(rep.rows.windows(2).all(|w| w[1].clt_sup_gap < w[0].clt_sup_gap));
    // every micro-step moves +e1 with probability 3/4, so v = E Y / E M = 3/4
    assert!((rep.v[0] - 0.75).abs() < 1e-12);
}
