use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

use patternlab::asymptotics::closed_form_law;
use patternlab::asymptotics::ModelSpec;
use patternlab::numerics::{matrix_sqrt, weighted_projection, RngStream, SpdMatrix};
use patternlab::oracle;
use patternlab::Error;
use patternlab::polytope::*;
use patternlab::regularizers::*;
use patternlab::solvers::*;

fn spd(p: usize, raw: &[f64]) -> SpdMatrix {
    let b = DMatrix::from_iterator(p, p, raw.iter().copied());
    let m = &b * b.transpose() / p as f64 + DMatrix::identity(p, p) * 0.3;
    SpdMatrix::new((&m + m.transpose()) * 0.5).unwrap()
}

/// 0 lasso, 1 slope, 2 fused with sparsity, 3 generalized lasso with a {-1,0,1} matrix.
fn make_spec(kind: u8, p: usize, raw: &[i8]) -> PenaltySpec {
    match kind % 4 {
        0 => PenaltySpec::lasso(1.3).unwrap(),
        1 => PenaltySpec::slope((0..p).map(|i| (p - i) as f64 + 0.5).collect()).unwrap(),
        2 => PenaltySpec::fused_lasso(&vec![1.0; p - 1], Some(0.7), 1.0).unwrap(),
        _ => {
            let mut a = DMatrix::from_iterator(p, p, raw.iter().map(|r| (*r % 2) as f64));
            for i in 0..p {
                a[(i, i)] = 1.0;
            }
            PenaltySpec::generalized_lasso(a, 0.9).unwrap()
        }
    }
}

fn int_vec(raw: &[i8], r: i8) -> DVector<f64> {
    DVector::from_iterator(raw.len(), raw.iter().map(|x| (x % (r + 1)) as f64))
}

prop_compose! {
    fn case()(p in 2usize..=4)(
        p in Just(p),
        kind in 0u8..4,
        a in prop::collection::vec(any::<i8>(), p * p),
        x in prop::collection::vec(any::<i8>(), p),
        u in prop::collection::vec(any::<i8>(), p),
    ) -> (PenaltySpec, DVector<f64>, DVector<f64>) {
        (make_spec(kind, p, &a), int_vec(&x, 2), int_vec(&u, 3))
    }
}

prop_compose! {
    fn spd_case()(p in 2usize..=5)(p in Just(p), raw in prop::collection::vec(-1.0f64..1.0, p * p)) -> SpdMatrix {
        spd(p, &raw)
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn sqrt_commutes(c in spd_case()) {
        let s = matrix_sqrt(&c);
        let m = c.matrix();
        prop_assert!((&s * m - m * &s).norm() <= 1e-9 * m.norm());
    }

    #[test]
    fn weighted_projection_is_orthogonal_projector(c in spd_case(), seed in any::<u64>()) {
        let p = c.dim();
        let mut rng = RngStream::new(seed, 0);
        let k = 1 + rng.below(p);
        let u = patternlab::numerics::Basis::new(DMatrix::from_fn(p, k, |_, _| rng.standard_normal())).unwrap();
        let wp = weighted_projection(&c, &u).unwrap();
        prop_assert!((&wp.p * &wp.p - &wp.p).amax() <= 1e-10);
        prop_assert!((&wp.p - wp.p.transpose()).amax() <= 1e-10);
        let cu = c.sqrt() * u.matrix();
        prop_assert!((&wp.p * &cu - &cu).amax() <= 1e-10 * (1.0 + cu.amax()));
    }

    #[test]
    fn pattern_scale_invariant((spec, x, _u) in case(), c in 0.01f64..100.0) {
        prop_assert_eq!(pattern_of(&spec, &x).unwrap(), pattern_of(&spec, &(&x * c)).unwrap());
    }

    #[test]
    fn limiting_pattern_stabilizes((spec, x, u) in case()) {
        let lim = limiting_pattern(&spec, &x, &u).unwrap();
        for eps in [1e-4, 1e-5, 1e-6] {
            prop_assert_eq!(&lim, &pattern_of(&spec, &(&x + &u * eps)).unwrap());
        }
    }

    #[test]
    fn limiting_pattern_fixed_iff_in_pattern_space((spec, x, u) in case(), in_span in any::<bool>(), seed in any::<u64>()) {
        let basis = pattern_basis(&spec, &x).unwrap();
        let u = if in_span && basis.dim() > 0 {
            let mut rng = RngStream::new(seed, 1);
            basis.matrix() * DVector::from_fn(basis.dim(), |_, _| rng.below(7) as f64 - 3.0)
        } else {
            u
        };
        let p = x.len();
        let resid = (DMatrix::identity(p, p) - basis.projector()) * &u;
        let in_space = resid.norm() <= 1e-10 * u.norm().max(1e-300);
        let same = limiting_pattern(&spec, &x, &u).unwrap() == pattern_of(&spec, &x).unwrap();
        prop_assert_eq!(same, in_space);
    }

    #[test]
    fn directional_derivative_matches_difference_quotient((spec, x, u) in case()) {
        let d = directional_derivative(&spec, &x, &u).unwrap();
        let f0 = penalty_value(&spec, &x).unwrap();
        for t in [1e-5, 1e-6] {
            let fd = (penalty_value(&spec, &(&x + &u * t)).unwrap() - f0) / t;
            prop_assert!((fd - d).abs() <= 1e-3 * d.abs().max(1.0), "fd {} vs {}", fd, d);
        }
    }

    #[test]
    fn directional_derivative_homogeneous((spec, x, u) in case(), c in 0.01f64..100.0) {
        let d = directional_derivative(&spec, &x, &u).unwrap();
        let dc = directional_derivative(&spec, &x, &(&u * c)).unwrap();
        prop_assert!((dc - c * d).abs() <= 1e-12 * (1.0 + (c * d).abs()));
    }

    #[test]
    fn concavified_sequences_are_concave(m in 2usize..12, nu in 0.1f64..3.0, kappa in 1e-3f64..1.0) {
        let t = concavified_sequence(m, nu, kappa).unwrap();
        prop_assert!(check_concavified(&t).concave);
    }

    #[test]
    fn subdifferential_and_pattern_dimensions_complement((spec, x, _u) in case()) {
        let d = subdifferential_at(&spec, &x).unwrap().dimension();
        prop_assert_eq!(d + pattern_basis(&spec, &x).unwrap().dim(), x.len());
    }

    #[test]
    fn members_differ_orthogonally_to_pattern_space((spec, x, _u) in case()) {
        let desc = subdifferential_at(&spec, &x).unwrap();
        let verts = enumerate_vertices(&desc, 10_000).unwrap().vertices;
        let u = pattern_basis(&spec, &x).unwrap();
        let v0 = desc.center();
        for v1 in verts.iter().chain(std::iter::once(&desc.some_vertex())) {
            prop_assert!((u.matrix().transpose() * (v1 - &v0)).amax() <= 1e-10);
        }
    }

    #[test]
    fn relative_interior_is_consistent((spec, x, _u) in case(), w in prop::collection::vec(0.0f64..1.0, 8), s in 0.0f64..1.5) {
        let desc = subdifferential_at(&spec, &x).unwrap();
        let verts = enumerate_vertices(&desc, 10_000).unwrap().vertices;
        let c = desc.center();
        let total: f64 = w.iter().take(verts.len()).sum::<f64>().max(1e-12);
        let hull = verts.iter().zip(w.iter().chain(std::iter::repeat(&0.0))).fold(DVector::zeros(x.len()), |a, (v, t)| a + v * (*t / total));
        let hull = if w.iter().take(verts.len()).sum::<f64>() == 0.0 { c.clone() } else { hull };
        let pt = &c + (hull - &c) * s;
        let ri = contains_ri(&desc, &pt).unwrap();
        if ri.inside {
            prop_assert!(contains(&desc, &pt, None).unwrap());
        }
        prop_assert_eq!(ri.margin > 0.0, ri.inside);
    }

    #[test]
    fn hausdorff_is_a_metric((s1, x1, _a) in case(), xs in prop::collection::vec(any::<i8>(), 8)) {
        let p = x1.len();
        let x2 = int_vec(&xs[..p], 2);
        let x3 = int_vec(&xs[4..4 + p], 2);
        let get = |x: &DVector<f64>| enumerate_vertices(&subdifferential_at(&s1, x).unwrap(), 10_000).unwrap();
        let (a, b, c) = (get(&x1), get(&x2), get(&x3));
        prop_assert_eq!(hausdorff_distance(&a, &b), hausdorff_distance(&b, &a));
        prop_assert!(hausdorff_distance(&a, &c) <= hausdorff_distance(&a, &b) + hausdorff_distance(&b, &c) + 1e-9);
    }

    #[test]
    fn prox_is_firmly_nonexpansive((spec, x, _u) in case(), a in prop::collection::vec(-5.0f64..5.0, 4), b in prop::collection::vec(-5.0f64..5.0, 4), scale in 0.0f64..3.0) {
        let p = x.len();
        let (a, b) = (DVector::from_column_slice(&a[..p]), DVector::from_column_slice(&b[..p]));
        let pa = prox_penalty(&spec, &a, scale).unwrap();
        let pb = prox_penalty(&spec, &b, scale).unwrap();
        let d = &pa - &pb;
        prop_assert!(d.norm_squared() <= (&a - &b).dot(&d) + 1e-10);
    }

    #[test]
    fn directional_prox_is_stationary(x in prop::collection::vec(any::<i8>(), 2..=5), y in prop::collection::vec(-4.0f64..4.0, 5)) {
        let p = x.len();
        let beta0 = int_vec(&x, 2);
        let lam: Vec<f64> = (0..p).map(|i| 0.5 * (p - i) as f64 + 0.25).collect();
        let y = DVector::from_column_slice(&y[..p]);
        let u = prox_slope_directional(&beta0, &lam, &y).unwrap();
        let spec = PenaltySpec::slope(lam).unwrap();
        let face = directional_subdifferential(&spec, &beta0, &u).unwrap();
        prop_assert!(contains(&face, &(&y - &u), Some(1e-7)).unwrap());
    }

    #[test]
    fn v_min_is_optimal((spec, beta0, _u) in case(), c in spd_case(), seed in any::<u64>()) {
        let p = beta0.len();
        if c.dim() != p {
            return Ok(());
        }
        let mut rng = RngStream::new(seed, 0);
        let w = rng.normal_vector(p) * 2.0;
        let rep = solve_v_min(&c, &w, &spec, &beta0, &SolverConfig::default()).unwrap();
        prop_assert!(rep.converged);
        prop_assert!(rep.kkt_residual <= 1e-8);
        let obj = |u: &DVector<f64>| 0.5 * u.dot(&(c.matrix() * u)) - u.dot(&w) + directional_derivative(&spec, &beta0, u).unwrap();
        let f0 = obj(&rep.solution);
        for _ in 0..1000 {
            let d = rng.normal_vector(p) * (1e-3 * rng.uniform());
            prop_assert!(f0 <= obj(&(&rep.solution + d)) + 1e-12);
        }
    }

    #[test]
    fn v_min_matches_dual_route((spec, beta0, _u) in case(), c in spd_case(), seed in any::<u64>()) {
        let p = beta0.len();
        if c.dim() != p {
            return Ok(());
        }
        let w = RngStream::new(seed, 0).normal_vector(p) * 2.0;
        let fast = solve_v_min(&c, &w, &spec, &beta0, &SolverConfig::default()).unwrap().solution;
        let slow = solve_v_min_vertices(&c, &w, &spec, &beta0, 10_000).unwrap();
        prop_assert!((fast - slow).norm() <= 1e-5);
    }

    #[test]
    fn moreau_decomposition(y in prop::collection::vec(-6.0f64..6.0, 2..=5)) {
        let p = y.len();
        let lam: Vec<f64> = (0..p).map(|i| (p - i) as f64).collect();
        let y = DVector::from_column_slice(&y);
        let spec = PenaltySpec::slope(lam.clone()).unwrap();
        let ball = enumerate_vertices(&subdifferential_at(&spec, &DVector::zeros(p)).unwrap(), 10_000).unwrap();
        let shifted: Vec<DVector<f64>> = ball.vertices.iter().map(|v| v - &y).collect();
        let proj = &y + min_norm_point(&shifted);
        prop_assert!((prox_slope(&y, &lam).unwrap() + proj - &y).amax() <= 1e-8);
    }

    #[test]
    fn prox_slope_matches_enumeration(y in prop::collection::vec(-4.0f64..4.0, 2..=4), lam in prop::collection::vec(0.05f64..2.0, 4)) {
        let p = y.len();
        let mut lam = lam[..p].to_vec();
        lam.sort_by(|a, b| b.total_cmp(a));
        let y = DVector::from_column_slice(&y);
        let brute = oracle::prox_support_exhaustive(&oracle::signed_permutations(&lam), &y);
        prop_assert!((prox_slope(&y, &lam).unwrap() - brute).amax() <= 1e-6);
    }

    #[test]
    fn isotonic_matches_block_search(z in prop::collection::vec(-5.0f64..5.0, 1..=6)) {
        let a = isotonic_decreasing(&z);
        let b = oracle::isotonic_exhaustive(&z);
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() <= 1e-10);
        }
    }

    #[test]
    fn contains_agrees_with_lp((spec, x, _u) in case(), seed in any::<u64>()) {
        let desc = subdifferential_at(&spec, &x).unwrap();
        let verts = match enumerate_vertices(&desc, 200) {
            Ok(v) => v.vertices,
            Err(Error::TooManyVertices { .. }) => return Ok(()),
            Err(e) => panic!("{}", e),
        };
        let mut rng = RngStream::new(seed, 0);
        let c = desc.center();
        let p = x.len();
        for _ in 0..8 {
            let w: Vec<f64> = verts.iter().map(|_| -rng.uniform().ln()).collect();
            let t: f64 = w.iter().sum();
            let h = verts.iter().zip(&w).fold(DVector::zeros(p), |a, (v, s)| a + v * (s / t));
            let pt = &c + (h - &c) * rng.uniform_range(0.5, 1.5);
            prop_assert_eq!(contains(&desc, &pt, Some(1e-8)).unwrap(), oracle::hull_residual_lp(&verts, &pt) <= 1e-8);
        }
    }

    #[test]
    fn mu_independent_of_member(c in spd_case(), x in prop::collection::vec(any::<i8>(), 5), kind in 0u8..3) {
        let p = c.dim();
        let beta0 = int_vec(&x[..p], 2);
        let spec = make_spec(kind, p, &[]);
        let model = ModelSpec::new(beta0.clone(), c.clone(), 1.0).unwrap();
        let law = closed_form_law(&model, &spec).unwrap();
        let verts = enumerate_vertices(&law.desc, 10_000).unwrap().vertices;
        let wp = weighted_projection(&c, &pattern_basis(&spec, &beta0).unwrap()).unwrap();
        let members: Vec<DVector<f64>> = verts.iter().take(3).cloned().chain([law.desc.center(), law.desc.some_vertex()]).collect();
        prop_assert!(members.len() >= 3);
        for v0 in &members {
            prop_assert!((wp.mu_map(v0) - &law.mu).norm() <= 1e-9 * (1.0 + law.mu.norm()));
        }
    }
}

#[test]
fn streams_independent_of_thread_count() {
    use rayon::prelude::*;
    let draw = |threads: usize| -> Vec<Vec<f64>> {
        rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap().install(|| {
            (0..64u64).into_par_iter().map(|s| RngStream::new(9, s).normal_vector(16).as_slice().to_vec()).collect()
        })
    };
    let a = draw(1);
    let b = draw(4);
    assert!(a.iter().flatten().zip(b.iter().flatten()).all(|(x, y)| x.to_bits() == y.to_bits()));
}
