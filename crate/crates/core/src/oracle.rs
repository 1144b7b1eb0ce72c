//! Slow reference implementations used to validate the fast paths.
//! Each one takes a different route from the code it checks.

use minilp::{ComparisonOp, OptimizationDirection, Problem};
use nalgebra::{DMatrix, DVector};

use crate::polytope::min_norm_point;

/// Projection onto nonincreasing sequences by searching all splits into consecutive blocks.
pub fn isotonic_exhaustive(z: &[f64]) -> Vec<f64> {
    let n = z.len();
    if n == 0 {
        return vec![];
    }
    let mut best: Option<(f64, Vec<f64>)> = None;
    for mask in 0..(1u64 << (n - 1)) {
        let mut out = Vec::with_capacity(n);
        let mut start = 0;
        for i in 0..n {
            let cut = i == n - 1 || mask >> i & 1 == 1;
            if cut {
                let m = z[start..=i].iter().sum::<f64>() / (i + 1 - start) as f64;
                out.extend(std::iter::repeat(m).take(i + 1 - start));
                start = i + 1;
            }
        }
        if out.windows(2).any(|w| w[1] > w[0] + 1e-15 * (1.0 + w[0].abs())) {
            continue;
        }
        let obj: f64 = out.iter().zip(z).map(|(a, b)| (a - b).powi(2)).sum();
        if best.as_ref().map_or(true, |(o, _)| obj < *o) {
            best = Some((obj, out));
        }
    }
    best.expect("the fully pooled candidate is always feasible").1
}

/// All signed rank codes of length p (signs, ranks 1..m without gaps, 0 for zero).
pub fn all_rank_sign_codes(p: usize) -> Vec<Vec<i32>> {
    let base = 2 * p + 1;
    let total = (base as u64).pow(p as u32);
    let mut out = vec![];
    for mut k in 0..total {
        let mut code = Vec::with_capacity(p);
        for _ in 0..p {
            code.push((k % base as u64) as i32 - p as i32);
            k /= base as u64;
        }
        let m = code.iter().map(|c| c.abs()).max().unwrap_or(0);
        if (1..=m).all(|r| code.iter().any(|c| c.abs() == r)) {
            out.push(code);
        }
    }
    out
}

/// Support function `max_i <v_i, u>`.
pub fn support(vertices: &[DVector<f64>], u: &DVector<f64>) -> f64 {
    vertices.iter().map(|v| v.dot(u)).fold(f64::NEG_INFINITY, f64::max)
}

/// Prox of the support function of `conv(vertices)` by enumerating every rank-sign cone,
/// solving the linearized problem on its span and keeping the best objective.
pub fn prox_support_exhaustive(vertices: &[DVector<f64>], y: &DVector<f64>) -> DVector<f64> {
    let p = y.len();
    let obj = |u: &DVector<f64>| 0.5 * (u - y).norm_squared() + support(vertices, u);
    let mut best = (obj(&DVector::zeros(p)), DVector::zeros(p));
    for code in all_rank_sign_codes(p) {
        let m = code.iter().map(|c| c.abs()).max().unwrap_or(0) as usize;
        if m == 0 {
            continue;
        }
        let cols: Vec<DVector<f64>> = (1..=m as i32)
            .map(|r| DVector::from_iterator(p, code.iter().map(|c| if c.abs() == r { c.signum() as f64 } else { 0.0 })))
            .collect();
        let u = DMatrix::from_columns(&cols);
        let rep = DVector::from_iterator(p, code.iter().map(|c| *c as f64));
        let g = vertices
            .iter()
            .max_by(|a, b| a.dot(&rep).total_cmp(&b.dot(&rep)))
            .expect("nonempty vertex list")
            .clone();
        let gram = u.transpose() * &u;
        let theta = match gram.cholesky() {
            Some(ch) => ch.solve(&(u.transpose() * (y - &g))),
            None => continue,
        };
        let cand = &u * theta;
        let o = obj(&cand);
        if o < best.0 {
            best = (o, cand);
        }
    }
    best.1
}

/// Prox of the support function through Moreau: `y - proj_{conv V}(y)`.
pub fn prox_support_dual(vertices: &[DVector<f64>], y: &DVector<f64>) -> DVector<f64> {
    let shifted: Vec<DVector<f64>> = vertices.iter().map(|v| v - y).collect();
    -min_norm_point(&shifted)
}

/// All signed permutations of `w`.
pub fn signed_permutations(w: &[f64]) -> Vec<DVector<f64>> {
    let p = w.len();
    let mut perms = vec![vec![]];
    for _ in 0..p {
        let mut next = vec![];
        for pr in &perms {
            for j in 0..p {
                if !pr.contains(&j) {
                    let mut q = pr.clone();
                    q.push(j);
                    next.push(q);
                }
            }
        }
        perms = next;
    }
    let mut out = vec![];
    for pr in perms {
        for mask in 0..(1u64 << p) {
            out.push(DVector::from_iterator(
                p,
                pr.iter().enumerate().map(|(i, &j)| if mask >> i & 1 == 1 { -w[j] } else { w[j] }),
            ));
        }
    }
    out
}

/// Vertices of the sorted-L1 subdifferential at `beta0`, by brute force over signed permutations.
pub fn slope_subdifferential_vertices(lambda: &[f64], beta0: &DVector<f64>) -> Vec<DVector<f64>> {
    let all = signed_permutations(lambda);
    let best = support(&all, beta0);
    let tol = 1e-12 * (1.0 + best.abs());
    let mut out: Vec<DVector<f64>> = vec![];
    for v in all {
        if v.dot(beta0) >= best - tol && !out.iter().any(|q| (q - &v).amax() == 0.0) {
            out.push(v);
        }
    }
    out
}

/// Exact hull membership by LP: minimal L1 residual of `sum l_i v_i = x`, `l` in the simplex.
pub fn hull_residual_lp(vertices: &[DVector<f64>], x: &DVector<f64>) -> f64 {
    let p = x.len();
    let mut prob = Problem::new(OptimizationDirection::Minimize);
    let lam: Vec<_> = vertices.iter().map(|_| prob.add_var(0.0, (0.0, f64::INFINITY))).collect();
    let sp: Vec<_> = (0..p).map(|_| prob.add_var(1.0, (0.0, f64::INFINITY))).collect();
    let sm: Vec<_> = (0..p).map(|_| prob.add_var(1.0, (0.0, f64::INFINITY))).collect();
    let ones: Vec<_> = lam.iter().map(|&l| (l, 1.0)).collect();
    prob.add_constraint(ones.as_slice(), ComparisonOp::Eq, 1.0);
    for j in 0..p {
        let mut row: Vec<_> = lam.iter().zip(vertices).map(|(&l, v)| (l, v[j])).collect();
        row.push((sp[j], 1.0));
        row.push((sm[j], -1.0));
        prob.add_constraint(row.as_slice(), ComparisonOp::Eq, x[j]);
    }
    prob.solve().map(|s| s.objective()).unwrap_or(f64::INFINITY)
}

pub fn hull_contains_lp(vertices: &[DVector<f64>], x: &DVector<f64>, tol: f64) -> bool {
    hull_residual_lp(vertices, x) <= tol
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn code_count_small() {
        // p = 2: zero, 4 single-nonzero, 4 tied, 8 ordered
        assert_eq!(all_rank_sign_codes(2).len(), 17);
    }

    #[test]
    fn lp_membership_square() {
        let v: Vec<DVector<f64>> = [[1.0, 1.0], [1.0, -1.0], [-1.0, 1.0], [-1.0, -1.0]]
            .iter()
            .map(|x| DVector::from_column_slice(x))
            .collect();
        assert!(hull_contains_lp(&v, &DVector::from_column_slice(&[0.5, -0.9]), 1e-9));
        assert!(!hull_contains_lp(&v, &DVector::from_column_slice(&[1.2, 0.0]), 1e-9));
    }

    #[test]
    fn isotonic_exhaustive_example() {
        assert_eq!(isotonic_exhaustive(&[4.0, 1.0, 3.0]), vec![4.0, 2.0, 2.0]);
    }
}
