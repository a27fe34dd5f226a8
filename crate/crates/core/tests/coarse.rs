//! Cones, cone points, skeletons and the surcharge bound.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use polymer_core::coarse::{
    build_skeleton, cone_density_test, cone_points, irreducible_decompose, is_cone_confined, surcharge_tail_test, ConeSpec,
    Outcome, SkeletonDecomposition,
};
use polymer_core::ensembles::Ensemble;
use polymer_core::environment::PotentialDistribution;
use polymer_core::lattice::Site;
use polymer_core::lyapunov::{FreeWalkNorm, LyapunovNorm};
use polymer_core::path::{LatticePath, WeightParams};

/// `max { g.y : cosh g1 + cosh g2 = 2 e^lambda }` by ternary search along the arc.
fn free_norm_2d(lambda: f64, y: [f64; 2]) -> f64 {
    let c = 2.0 * lambda.exp();
    let top = (c - 1.0).acosh();
    let sign = if y[1] >= 0.0 { 1.0 } else { -1.0 };
    let f = |t: f64| t * y[0] + sign * y[1] * (c - t.cosh()).max(1.0).acosh();
    let (mut lo, mut hi) = (-top, top);
    for _ in 0..200 {
        let a = lo + (hi - lo) / 3.0;
        let b = hi - (hi - lo) / 3.0;
        if f(a) < f(b) {
            lo = a;
        } else {
            hi = b;
        }
    }
    f(0.5 * (lo + hi))
}

fn random_path(rng: &mut ChaCha8Rng, n: usize, bias: f64) -> LatticePath {
    let steps: Vec<usize> = (0..n)
        .map(|_| if rng.random::<f64>() < bias { 0 } else { rng.random_range(0..4) })
        .collect();
    LatticePath::from_steps(2, Site::ORIGIN, &steps).unwrap()
}

#[test]
fn free_norm_matches_the_arc_maximisation() {
    for lambda in [0.1, 0.5, 1.3] {
        let norm = FreeWalkNorm::new(2, lambda).unwrap();
        for y in [[1.0, 0.0], [3.0, -2.0], [0.5, 4.0], [-2.0, -1.0]] {
            let exact = free_norm_2d(lambda, y);
            assert!((norm.value(&y) - exact).abs() < 1e-9 * exact, "{y:?}: {} vs {exact}", norm.value(&y));
        }
    }
}

#[test]
fn cone_points_match_brute_force_classification() {
    let h = vec![1.77, 0.0];
    let delta = 0.25;
    let lambda0 = ((h[0] as f64).cosh() + (h[1] as f64).cosh()).ln() - 2f64.ln();
    let cone = ConeSpec::free_walk(h.clone(), delta).unwrap().lookup(30).unwrap();
    let inside = |y: Site| {
        if y.is_origin() {
            return None;
        }
        let yv = [y.0[0] as f64, y.0[1] as f64];
        let a = free_norm_2d(lambda0, yv);
        let margin = delta * a - (a - h[0] * yv[0] - h[1] * yv[1]);
        // skip displacements on the cone boundary
        (margin.abs() > 1e-7).then_some(margin > 0.0)
    };
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut checked = 0;
    for _ in 0..300 {
        let n = rng.random_range(1..25);
        let path = random_path(&mut rng, n, 0.6);
        let s = path.sites();
        let mut brute = Vec::new();
        let mut ambiguous = false;
        for k in 0..s.len() {
            let mut ok = true;
            for j in 0..s.len() {
                let y = if j < k { s[k] - s[j] } else if j > k { s[j] - s[k] } else { continue };
                match inside(y) {
                    Some(true) => {}
                    Some(false) => ok = false,
                    None if y.is_origin() => ok = false,
                    None => ambiguous = true,
                }
            }
            if ok {
                brute.push(k);
            }
        }
        if ambiguous {
            continue;
        }
        checked += 1;
        assert_eq!(cone_points(&path, &cone), brute, "path {:?}", path.steps());
    }
    assert!(checked > 200);
}

#[test]
fn irreducible_pieces_reassemble_and_are_irreducible() {
    let cone = ConeSpec::free_walk(vec![1.77, 0.0], 0.25).unwrap().lookup(40).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut split = 0;
    for _ in 0..200 {
        let path = random_path(&mut rng, 30, 0.8);
        let d = irreducible_decompose(&path, &cone);
        assert_eq!(d.reassemble().unwrap(), path);
        if d.flagged {
            continue;
        }
        split += 1;
        for p in &d.pieces {
            assert!(is_cone_confined(p, &cone));
            assert_eq!(cone_points(p, &cone), vec![0, p.len()]);
        }
    }
    assert!(split > 50);
}

#[test]
fn skeletons_reconstruct_their_paths() {
    let norm = FreeWalkNorm::new(2, 0.5).unwrap();
    let nrm = |y: Site| norm.at_site(y);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for k in [3.0, 5.0, 8.0] {
        for _ in 0..100 {
            let n = rng.random_range(0..40);
            let path = random_path(&mut rng, n, 0.4);
            let sk: SkeletonDecomposition = build_skeleton(&path, k, nrm).unwrap();
            sk.check_properties(&path, nrm).unwrap();
            let rebuilt = SkeletonDecomposition::reassemble(&sk.pieces(&path), &sk.hairs(&path)).unwrap();
            assert_eq!(rebuilt, path);
            assert_eq!(*sk.trunk().last().unwrap(), path.end());
        }
    }
    assert!(build_skeleton(&LatticePath::new(2, vec![Site::ORIGIN]).unwrap(), 1.0, nrm).is_err());
}

fn dual_targets(norm: &FreeWalkNorm, cs: &[[i32; 2]]) -> Vec<(Site, Vec<f64>)> {
    cs.iter()
        .map(|c| {
            let x = Site::new(c);
            (x, norm.dual_point(&x.to_f64(2)))
        })
        .collect()
}

#[test]
fn surcharge_exceedance_obeys_the_exponential_bound() {
    let lambda = 1.0;
    let norm = FreeWalkNorm::new(2, lambda).unwrap();
    let k = 4.0 * norm.at_site(Site::new(&[1, 0]));
    let dist = PotentialDistribution::bernoulli(0.5, 1.0).unwrap();
    let targets = dual_targets(&norm, &[[6, 0], [3, 3], [8, 0], [4, 4], [10, 0], [7, 3]]);
    let rep = surcharge_tail_test(Ensemble::Annealed(&dist), 0.0, lambda, &norm, &targets, k, &[0.2], 4).unwrap();
    for r in &rep.rows {
        assert!(r.p_lower <= r.p_upper);
        assert!(r.p_upper <= r.bound, "{:?}: {} > {}", r.target, r.p_upper, r.bound);
        assert_eq!(r.outcome, Outcome::Pass);
    }
    let off = vec![(Site::new(&[6, 0]), vec![1.0, 1.0])];
    assert!(surcharge_tail_test(Ensemble::Annealed(&dist), 0.0, lambda, &norm, &off, k, &[0.2], 4).is_err());
    assert!(surcharge_tail_test(Ensemble::Annealed(&dist), 0.0, lambda, &norm, &targets, 1.0, &[0.2], 4).is_err());
}

#[test]
fn fine_skeletons_break_the_bound_on_the_diagonal() {
    // with K at its smallest admissible value the diagonal skeleton pays
    // surcharge on every zig-zag, and the exceedance is certified above the bound
    let lambda = 1.5;
    let norm = FreeWalkNorm::new(2, lambda).unwrap();
    let k = 2.0 * norm.at_site(Site::new(&[1, 0]));
    let dist = PotentialDistribution::bernoulli(0.5, 1.0).unwrap();
    let rep = surcharge_tail_test(Ensemble::Annealed(&dist), 0.0, lambda, &norm, &dual_targets(&norm, &[[5, 5]]), k, &[0.2], 4).unwrap();
    assert_eq!(rep.rows[0].outcome, Outcome::Fail);
    assert!(rep.rows[0].p_lower > rep.rows[0].bound);
}

#[test]
fn cone_points_have_positive_density_under_a_strong_drift() {
    let dist = PotentialDistribution::bernoulli(0.5, 1.0).unwrap();
    let h = FreeWalkNorm::new(2, 0.5).unwrap().dual_point(&[1.0, 0.0]).iter().map(|x| 1.2 * x).collect::<Vec<_>>();
    let cone = ConeSpec::free_walk(h.clone(), 0.25).unwrap().lookup(12).unwrap();
    let p = WeightParams::new(0.0, 0.0, h).unwrap();
    let rep = cone_density_test(Ensemble::Annealed(&dist), &p, &cone, &[4, 6, 8], None).unwrap();
    assert!(rep.rows.iter().all(|r| r.mean_density > 0.2));
    for r in &rep.rows {
        assert!((r.count_probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
    let flat = WeightParams::new(0.0, 0.0, vec![0.0, 0.0]).unwrap();
    assert!(cone_density_test(Ensemble::Annealed(&dist), &flat, &cone, &[4], None).is_err());
}
