//! Self-contained oracle suite behind `patternlab validate`.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use patternlab::asymptotics::{recovery_probability_closed_form, recovery_probability_direct, sample_asymptotic_error, ModelSpec};
use patternlab::numerics::{RngStream, SpdMatrix};
use patternlab::oracle;
use patternlab::polytope::{contains, directional_subdifferential, enumerate_vertices, hausdorff_distance, subdifferential_at};
use patternlab::regularizers::PenaltySpec;
use patternlab::solvers::{isotonic_decreasing, prox_slope, prox_slope_directional, solve_v_min, solve_v_min_vertices, SolverConfig};

#[derive(Debug, Clone)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub instances: usize,
    pub detail: String,
    pub ms: u128,
}

#[derive(Debug, Clone, Default)]
pub struct Report {
    pub checks: Vec<Check>,
}

impl Report {
    pub fn failed(&self) -> usize {
        self.checks.iter().filter(|c| !c.passed).count()
    }
}

fn v(x: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(x)
}

fn run_check(name: &str, f: impl FnOnce() -> (bool, usize, String)) -> Check {
    let t = Instant::now();
    let (passed, instances, detail) = f();
    Check { name: name.into(), passed, instances, detail, ms: t.elapsed().as_millis() }
}

fn random_lambda(rng: &mut RngStream, p: usize) -> Vec<f64> {
    let mut lam: Vec<f64> = (0..p).map(|_| rng.uniform_range(0.1, 2.0)).collect();
    lam.sort_by(|a, b| b.total_cmp(a));
    lam
}

fn prox_checks(k: usize) -> Vec<Check> {
    let mut out = vec![];
    out.push(run_check("prox_slope_vs_enumeration", || {
        let mut rng = RngStream::new(101, 0);
        let mut worst = 0.0f64;
        for i in 0..k {
            let p = 2 + i % 3;
            let lam = random_lambda(&mut rng, p);
            let y = rng.normal_vector(p) * 2.0;
            let verts = oracle::signed_permutations(&lam);
            let fast = prox_slope(&y, &lam).unwrap();
            worst = worst.max((&fast - oracle::prox_support_exhaustive(&verts, &y)).amax());
            worst = worst.max((&fast - oracle::prox_support_dual(&verts, &y)).amax());
        }
        (worst <= 1e-6, k, format!("max error {:.1e}", worst))
    }));
    out.push(run_check("directional_prox_vs_enumeration", || {
        let mut rng = RngStream::new(102, 0);
        let mut worst = 0.0f64;
        for i in 0..k {
            let p = 2 + i % 3;
            let lam = random_lambda(&mut rng, p);
            let y = rng.normal_vector(p) * 2.0;
            let beta0 = DVector::from_iterator(p, (0..p).map(|_| rng.below(5) as f64 - 2.0));
            let dir = prox_slope_directional(&beta0, &lam, &y).unwrap();
            let fv = oracle::slope_subdifferential_vertices(&lam, &beta0);
            worst = worst.max((&dir - oracle::prox_support_exhaustive(&fv, &y)).amax());
            worst = worst.max((&dir - oracle::prox_support_dual(&fv, &y)).amax());
        }
        (worst <= 1e-6, k, format!("max error {:.1e}", worst))
    }));
    out.push(run_check("isotonic_vs_block_search", || {
        let mut rng = RngStream::new(103, 0);
        let mut worst = 0.0f64;
        for i in 0..k {
            let z: Vec<f64> = (0..1 + i % 6).map(|_| rng.standard_normal()).collect();
            let a = isotonic_decreasing(&z);
            let b = oracle::isotonic_exhaustive(&z);
            worst = worst.max(a.iter().zip(&b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max));
        }
        (worst <= 1e-10, k, format!("max error {:.1e}", worst))
    }));
    out
}

fn membership_fixtures() -> Vec<(PenaltySpec, DVector<f64>)> {
    let a = DMatrix::from_row_slice(3, 3, &[1.0, -1.0, 0.0, 0.0, 1.0, 2.0, 1.0, 1.0, 1.0]);
    vec![
        (PenaltySpec::lasso(1.5).unwrap(), v(&[1.0, 0.0, -2.0, 0.0])),
        (PenaltySpec::slope(vec![4.0, 3.0, 2.0, 1.0]).unwrap(), v(&[2.0, -2.0, 0.0, 0.0])),
        (PenaltySpec::fused_lasso(&[1.0, 2.0, 1.0], Some(3.0), 1.0).unwrap(), v(&[0.0, 0.0, 0.0, 0.0])),
        (PenaltySpec::generalized_lasso(a, 0.8).unwrap(), v(&[1.0, 1.0, -2.0])),
    ]
}

fn membership_check(k: usize) -> Check {
    run_check("contains_vs_lp", || {
        let mut rng = RngStream::new(104, 0);
        let mut bad = 0;
        let mut total = 0;
        for (spec, x) in membership_fixtures() {
            let desc = subdifferential_at(&spec, &x).unwrap();
            let verts = enumerate_vertices(&desc, 200).unwrap().vertices;
            let center = desc.center();
            let p = x.len();
            for q in 0..k {
                let mut w: Vec<f64> = (0..verts.len()).map(|_| -rng.uniform().ln()).collect();
                let sw: f64 = w.iter().sum();
                w.iter_mut().for_each(|t| *t /= sw);
                let hull = verts.iter().zip(&w).fold(DVector::zeros(p), |acc, (vv, t)| acc + vv * *t);
                let mut pt = &center + (hull - &center) * rng.uniform_range(0.6, 1.4);
                if q % 4 == 0 {
                    pt += rng.normal_vector(p) * 0.3;
                }
                let lp = oracle::hull_residual_lp(&verts, &pt);
                total += 1;
                if contains(&desc, &pt, Some(1e-8)).unwrap() != (lp <= 1e-8) {
                    bad += 1;
                }
            }
        }
        (bad == 0, total, format!("{} disagreements", bad))
    })
}

fn v_min_check(k: usize) -> Check {
    run_check("v_min_vs_dual_route", || {
        let mut rng = RngStream::new(105, 0);
        let cfg = SolverConfig::default();
        let c = SpdMatrix::new(DMatrix::from_row_slice(3, 3, &[2.0, 0.5, 0.3, 0.5, 1.0, 0.2, 0.3, 0.2, 1.5])).unwrap();
        let a = DMatrix::from_row_slice(2, 3, &[1.0, -1.0, 0.0, 0.0, 1.0, -1.0]);
        let cases = [
            (PenaltySpec::lasso(1.0).unwrap(), v(&[1.0, 0.0, 0.0])),
            (PenaltySpec::slope(vec![3.0, 2.0, 1.0]).unwrap(), v(&[1.0, -1.0, 0.0])),
            (PenaltySpec::fused_lasso(&[1.0, 2.0], Some(4.0), 1.0).unwrap(), v(&[0.0, 0.0, 2.0])),
            (PenaltySpec::generalized_lasso(a, 1.0).unwrap(), v(&[1.0, 1.0, 3.0])),
        ];
        let mut worst = 0.0f64;
        let mut n = 0;
        for (spec, beta0) in &cases {
            for _ in 0..k {
                let w = rng.normal_vector(3) * 2.0;
                let a = solve_v_min(&c, &w, spec, beta0, &cfg).unwrap().solution;
                let b = solve_v_min_vertices(&c, &w, spec, beta0, 1000).unwrap();
                worst = worst.max((a - b).amax());
                n += 1;
            }
        }
        (worst <= 1e-5, n, format!("max difference {:.1e}", worst))
    })
}

fn cross_oracle_check(reps: usize) -> Check {
    run_check("direct_vs_closed_form", || {
        let cfg = SolverConfig::default();
        let cells = [
            (PenaltySpec::lasso(1.0).unwrap(), v(&[1.0, 0.0, -1.0]), 0.3),
            (PenaltySpec::slope(vec![3.0, 2.0, 1.0]).unwrap(), v(&[1.0, 1.0, 0.0]), 0.5),
            (PenaltySpec::fused_lasso(&[1.0, 2.0], Some(4.0), 1.0).unwrap(), v(&[0.0, 1.0, 1.0]), 0.2),
        ];
        let mut zmax = 0.0f64;
        for (i, (spec, beta0, rho)) in cells.iter().enumerate() {
            let m = ModelSpec::new(beta0.clone(), SpdMatrix::equicorrelated(3, *rho).unwrap(), 1.0).unwrap();
            let s = spec.clone().with_alpha(1.5).unwrap();
            let d = recovery_probability_direct(&m, &s, reps, 110 + i as u64, &cfg).unwrap();
            let c = recovery_probability_closed_form(&m, &s, reps, 120 + i as u64).unwrap();
            let se = (d.se.powi(2) + c.se.powi(2)).sqrt();
            if se > 0.0 {
                zmax = zmax.max((d.p_hat - c.p_hat).abs() / se);
            } else if d.p_hat != c.p_hat {
                zmax = f64::INFINITY;
            }
        }
        (zmax <= 3.0, cells.len(), format!("max |z| {:.2}", zmax))
    })
}

fn hausdorff_check(k: usize) -> Check {
    run_check("subdifferential_convergence", || {
        let mut rng = RngStream::new(106, 0);
        let mut ok = true;
        let mut last = 0.0f64;
        for i in 0..k {
            let p = 2 + i % 3;
            let int = |rng: &mut RngStream, r: i64| rng.below((2 * r + 1) as usize) as f64 - r as f64;
            let x = DVector::from_iterator(p, (0..p).map(|_| int(&mut rng, 2)));
            let u = DVector::from_iterator(p, (0..p).map(|_| int(&mut rng, 30)));
            let spec = match i % 3 {
                0 => PenaltySpec::lasso(1.0).unwrap(),
                1 => PenaltySpec::slope((0..p).map(|j| (p - j) as f64).collect()).unwrap(),
                _ => PenaltySpec::fused_lasso(&vec![1.0; p - 1], Some(0.5 * p as f64), 1.0).unwrap(),
            };
            let lim = enumerate_vertices(&directional_subdifferential(&spec, &x, &u).unwrap(), 10_000).unwrap();
            let ds: Vec<f64> = [1e2f64, 1e4, 1e6]
                .iter()
                .map(|n| {
                    let at = enumerate_vertices(&subdifferential_at(&spec, &(&x + &u / n.sqrt())).unwrap(), 10_000).unwrap();
                    hausdorff_distance(&at, &lim)
                })
                .collect();
            last = last.max(ds[2]);
            ok &= ds[1] <= ds[0] + 1e-12 && ds[2] <= ds[1] + 1e-12 && ds[2] <= 1e-9;
        }
        (ok, k, format!("max distance at n=1e6 {:.1e}", last))
    })
}

fn ridge_check(draws: usize) -> Check {
    run_check("ridge_closed_form", || {
        let cfg = SolverConfig::default();
        let c = SpdMatrix::new(DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0])).unwrap();
        let beta0 = v(&[1.0, -2.0]);
        let lam = 1.3;
        let m = ModelSpec::new(beta0.clone(), c.clone(), 0.7).unwrap();
        let s = PenaltySpec::ridge(lam).unwrap();
        let us: Vec<DVector<f64>> =
            (0..draws).map(|r| sample_asymptotic_error(&m, &s, &mut RngStream::new(107, r as u64), &cfg).unwrap()).collect();
        let mean_true = -(c.inverse() * &beta0) * lam;
        let n = draws as f64;
        let mut zmax = 0.0f64;
        for i in 0..2 {
            let xs: Vec<f64> = us.iter().map(|u| u[i]).collect();
            let mean = xs.iter().sum::<f64>() / n;
            let sd = (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
            zmax = zmax.max((mean - mean_true[i]).abs() / (sd / n.sqrt()));
        }
        (zmax <= 4.0, draws, format!("mean max |z| {:.2}", zmax))
    })
}

pub fn run_suite(quick: bool) -> Report {
    let (k, reps, draws) = if quick { (100, 2000, 5000) } else { (1000, 10_000, 50_000) };
    let mut checks = prox_checks(k);
    checks.push(membership_check(k / 4));
    checks.push(v_min_check(k / 10));
    checks.push(cross_oracle_check(reps));
    checks.push(hausdorff_check(k / 20));
    checks.push(ridge_check(draws));
    Report { checks }
}
