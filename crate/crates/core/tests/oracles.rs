//! Exact partition functions against independent brute force and closed forms.

#![allow(clippy::type_complexity)]

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use polymer_core::ensembles::{enumerated_table, quenched_dp, DpOptions, Ensemble};
use polymer_core::environment::{Environment, PotentialDistribution};
use polymer_core::lattice::{LatticeBox, Site};
use polymer_core::lyapunov::{estimate_lyapunov, DisorderModel, LyapunovKind};
use polymer_core::path::{log_annealed_weight, log_quenched_weight, LatticePath, WeightParams};

const STEPS2: [[i32; 2]; 4] = [[1, 0], [-1, 0], [0, 1], [0, -1]];

/// Number of paths of each length `n`, endpoint `x` and number `k` of
/// visits (times `1..=n`) to sites with `V = 1`, for a 0/1 field.
fn hit_histogram(env: &Environment, nmax: usize) -> HashMap<(usize, [i32; 2], u32), u64> {
    fn go(env: &Environment, pos: [i32; 2], n: usize, k: u32, nmax: usize, out: &mut HashMap<(usize, [i32; 2], u32), u64>) {
        *out.entry((n, pos, k)).or_default() += 1;
        if n == nmax {
            return;
        }
        for s in STEPS2 {
            let next = [pos[0] + s[0], pos[1] + s[1]];
            let v = env.value(Site::new(&next)).unwrap();
            go(env, next, n + 1, k + (v > 0.5) as u32, nmax, out);
        }
    }
    let mut out = HashMap::new();
    go(env, [0, 0], 0, 0, nmax, &mut out);
    out
}

fn brute_log_q(hist: &HashMap<(usize, [i32; 2], u32), u64>, p: &WeightParams) -> HashMap<(usize, [i32; 2]), f64> {
    let mut z: HashMap<(usize, [i32; 2]), f64> = HashMap::new();
    for (&(n, x, k), &c) in hist {
        let w = (p.h[0] * x[0] as f64 + p.h[1] * x[1] as f64 - p.lambda * n as f64 - p.beta * k as f64).exp() / 4f64.powi(n as i32);
        *z.entry((n, x)).or_default() += c as f64 * w;
    }
    z.into_iter().map(|(k, v)| (k, v.ln())).collect()
}

#[test]
fn dp_matches_brute_force_enumeration() {
    let dist = PotentialDistribution::bernoulli(0.5, 1.0).unwrap();
    let nmax = 8;
    let bx = LatticeBox::centered(2, nmax as i32 + 2).unwrap();
    let mut worst = 0.0f64;
    for seed in 0..4 {
        let env = Environment::sample(&dist, bx, seed).unwrap();
        let hist = hit_histogram(&env, nmax);
        for beta in [0.0, 0.5, 1.0] {
            for lambda in [0.0, 0.5] {
                for hx in [0.0, 0.8] {
                    let p = WeightParams::new(beta, lambda, vec![hx, 0.0]).unwrap();
                    let dp = quenched_dp(&env, &p, nmax, &DpOptions::default()).unwrap();
                    let brute = brute_log_q(&hist, &p);
                    for (&(n, x), &lz) in &brute {
                        let got = dp.log_value(Site::new(&x), n).unwrap();
                        worst = worst.max(((got - lz).exp() - 1.0).abs());
                    }
                    let support = dp.entries().len();
                    assert_eq!(support, brute.len(), "support differs at beta {beta} lambda {lambda} h {hx}");
                }
            }
        }
    }
    assert!(worst <= 1e-10, "max relative error {worst:e}");
}

fn random_path(rng: &mut ChaCha8Rng, dim: usize, n: usize) -> LatticePath {
    let steps: Vec<usize> = (0..n).map(|_| rng.random_range(0..2 * dim)).collect();
    LatticePath::from_steps(dim, Site::ORIGIN, &steps).unwrap()
}

fn bernoulli_laplace(p: f64, v1: f64, s: f64) -> f64 {
    (1.0 - p) + p * (-s * v1).exp()
}

fn uniform_laplace(b: f64, s: f64) -> f64 {
    if s * b == 0.0 {
        1.0
    } else {
        -(-s * b).exp_m1() / (s * b)
    }
}

#[test]
fn annealed_weight_factorizes_over_sites() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let laws: Vec<(PotentialDistribution, Box<dyn Fn(f64) -> f64>)> = vec![
        (PotentialDistribution::bernoulli(0.5, 1.0).unwrap(), Box::new(|s| bernoulli_laplace(0.5, 1.0, s))),
        (PotentialDistribution::bernoulli(0.2, 3.0).unwrap(), Box::new(|s| bernoulli_laplace(0.2, 3.0, s))),
        (PotentialDistribution::uniform(2.0).unwrap(), Box::new(|s| uniform_laplace(2.0, s))),
    ];
    for (dist, laplace) in &laws {
        for (beta, lambda, h) in [(0.7, 0.3, vec![0.4, -0.2]), (2.0, 0.0, vec![0.0, 1.0]), (0.0, 1.0, vec![1.5, 0.0])] {
            let p = WeightParams::new(beta, lambda, h.clone()).unwrap();
            for _ in 0..30 {
                let n = rng.random_range(0..25);
                let path = random_path(&mut rng, 2, n);
                let mut prod = 1.0;
                for &l in path.local_times().counts.values() {
                    prod *= laplace(beta * l as f64);
                }
                let x = path.extension();
                let expect = prod * (x.dot(&h) - lambda * n as f64).exp() / 4f64.powi(n as i32);
                let got = log_annealed_weight(&path, dist, &p).unwrap().exp();
                assert!((got / expect - 1.0).abs() <= 1e-12, "{dist}: {got} vs {expect}");
            }
        }
    }
}

#[test]
fn annealed_weight_is_the_average_of_quenched_weights() {
    // E over the 2^k configurations of the visited sites, for Bernoulli(1/2).
    let dist = PotentialDistribution::bernoulli(0.5, 1.0).unwrap();
    let p = WeightParams::new(0.9, 0.1, vec![0.3, 0.0]).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..20 {
        let path = random_path(&mut rng, 2, 9);
        let sites: Vec<Site> = path.local_times().counts.keys().copied().collect();
        let bx = LatticeBox::centered(2, 10).unwrap();
        let base = Environment::zero(bx);
        let mut sum = 0.0;
        for mask in 0..1u32 << sites.len() {
            let mut env = base.clone();
            for (i, s) in sites.iter().enumerate() {
                if mask >> i & 1 == 1 {
                    env = env.with_value(*s, 1.0).unwrap();
                }
            }
            sum += log_quenched_weight(&path, &env, &p).unwrap().exp();
        }
        let avg = sum / (1u64 << sites.len()) as f64;
        let ann = log_annealed_weight(&path, &dist, &p).unwrap().exp();
        assert!((avg / ann - 1.0).abs() < 1e-12);
    }
}

#[test]
fn free_walk_normalization() {
    let dist = PotentialDistribution::bernoulli(0.5, 1.0).unwrap();
    let p0 = WeightParams::new(0.0, 0.0, vec![0.0, 0.0]).unwrap();
    let env = Environment::sample(&dist, LatticeBox::centered(2, 22).unwrap(), 5).unwrap();
    let q = quenched_dp(&env, &p0, 20, &DpOptions::default()).unwrap();
    for n in 0..=20 {
        assert!(q.log_total(n).abs() <= 1e-12, "n = {n}: {}", q.log_total(n));
    }
    let a = enumerated_table(Ensemble::Annealed(&dist), &p0, 8).unwrap();
    for n in 0..=8 {
        assert!(a.log_total(n).abs() <= 1e-12);
    }
    for h in [vec![0.7], vec![0.7, -0.4]] {
        let d = h.len();
        let p = WeightParams::new(0.0, 0.0, h.clone()).unwrap();
        let env = Environment::zero(LatticeBox::centered(d, 16).unwrap());
        let q = quenched_dp(&env, &p, 14, &DpOptions::default()).unwrap();
        let per_step = h.iter().map(|x| x.cosh()).sum::<f64>() / d as f64;
        for n in 0..=14 {
            let expect = n as f64 * per_step.ln();
            assert!((q.log_total(n) - expect).abs() <= 1e-10 * expect.abs().max(1.0));
        }
    }
}

#[test]
fn one_dimensional_free_exponent_has_closed_form() {
    let lambda: f64 = 0.5;
    let u = (-lambda).exp();
    let exact = -((1.0 - (1.0 - u * u).sqrt()) / u).ln();
    let model = DisorderModel::new(PotentialDistribution::bernoulli(0.5, 1.0).unwrap(), 0.0).unwrap();
    let est = estimate_lyapunov(LyapunovKind::Quenched, &model, lambda, Site::new(&[1]), 1, &[50, 100, 200], 1, 0).unwrap();
    assert!(est.exact);
    assert!((est.value / exact - 1.0).abs() < 0.01, "{} vs {exact}", est.value);
}
