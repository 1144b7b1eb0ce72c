//! Subdifferential polytopes: structured descriptions, membership, relative interior,
//! dimension, vertex enumeration and Hausdorff distance.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::numerics::{rank, RANK_TOL};
use crate::regularizers::{limiting_pattern, pattern_of, ClusterPartition, Family, Pattern, PenaltySpec};

pub const AFFINE_TOL: f64 = 1e-8;
const RI_SNAP: f64 = 1e-9;
const DEDUP_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn fixed(v: f64) -> Self {
        Self { lo: v, hi: v }
    }
    pub fn sym(r: f64) -> Self {
        Self { lo: -r, hi: r }
    }
    pub fn is_fixed(&self) -> bool {
        self.hi - self.lo <= 0.0
    }
    pub fn mid(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Block {
    /// Signed permutohedron of `weights` on `indices`.
    Zero { indices: Vec<usize>, weights: Vec<f64> },
    /// Permutohedron of `weights`, coordinates multiplied by `signs`.
    Cluster { indices: Vec<usize>, signs: Vec<f64>, weights: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq)]
pub enum SubdifferentialDesc {
    BoxProduct(Vec<Interval>),
    /// `{ at * w : w in box }` with `at` of size p x m.
    AffineImage { at: DMatrix<f64>, boxes: Vec<Interval> },
    ClusterSum { p: usize, blocks: Vec<Block> },
    Shifted { base: Box<SubdifferentialDesc>, offset: DVector<f64> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct VPolytope {
    pub vertices: Vec<DVector<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RiReport {
    pub inside: bool,
    pub margin: f64,
}

pub fn default_tol(pt: &DVector<f64>) -> f64 {
    1e-8 * (1.0 + pt.norm())
}

/// Subdifferential of the polyhedral part (scaled by alpha) for a pattern code.
pub fn subdifferential_for_pattern(spec: &PenaltySpec, pat: &Pattern) -> Result<SubdifferentialDesc> {
    spec.check_dim(pat.dim)?;
    let a = spec.alpha;
    Ok(match &spec.family {
        Family::Lasso { lambda } => SubdifferentialDesc::BoxProduct(
            pat.code
                .iter()
                .map(|&c| if c == 0 { Interval::sym(a * lambda) } else { Interval::fixed(a * lambda * c as f64) })
                .collect(),
        ),
        Family::GeneralizedLasso { a: mat, lambda } => SubdifferentialDesc::AffineImage {
            at: mat.transpose(),
            boxes: pat
                .code
                .iter()
                .map(|&c| if c == 0 { Interval::sym(a * lambda) } else { Interval::fixed(a * lambda * c as f64) })
                .collect(),
        },
        Family::Slope { lambda } => {
            let part = ClusterPartition::from_code(&pat.code);
            let mut blocks = vec![];
            let mut pos = 0;
            for c in part.clusters.iter().rev() {
                let k = c.indices.len();
                let w = (pos..pos + k).map(|j| a * lambda[j]).collect();
                pos += k;
                blocks.push(Block::Cluster { indices: c.indices.clone(), signs: c.signs.clone(), weights: w });
            }
            if !part.zero.is_empty() {
                let k = part.zero.len();
                let w = (pos..pos + k).map(|j| a * lambda[j]).collect();
                blocks.push(Block::Zero { indices: part.zero.clone(), weights: w });
            }
            SubdifferentialDesc::ClusterSum { p: pat.dim, blocks }
        }
        Family::Ridge { .. } => SubdifferentialDesc::BoxProduct(vec![Interval::fixed(0.0); pat.dim]),
    })
}

fn with_smooth(spec: &PenaltySpec, base: SubdifferentialDesc, x: &DVector<f64>) -> SubdifferentialDesc {
    let w = spec.quadratic_weight();
    if w == 0.0 {
        base
    } else {
        SubdifferentialDesc::Shifted { base: Box::new(base), offset: x * w }
    }
}

/// `∂f(x)` including the gradient of the smooth part.
pub fn subdifferential_at(spec: &PenaltySpec, x: &DVector<f64>) -> Result<SubdifferentialDesc> {
    let pat = pattern_of(spec, x)?;
    Ok(with_smooth(spec, subdifferential_for_pattern(spec, &pat)?, x))
}

/// `∂_u f'(x; u)`: the face of `∂f(x)` selected by the limiting pattern.
pub fn directional_subdifferential(spec: &PenaltySpec, x: &DVector<f64>, u: &DVector<f64>) -> Result<SubdifferentialDesc> {
    let pat = limiting_pattern(spec, x, u)?;
    Ok(with_smooth(spec, subdifferential_for_pattern(spec, &pat)?, x))
}

impl SubdifferentialDesc {
    pub fn ambient_dim(&self) -> usize {
        match self {
            Self::BoxProduct(b) => b.len(),
            Self::AffineImage { at, .. } => at.nrows(),
            Self::ClusterSum { p, .. } => *p,
            Self::Shifted { base, .. } => base.ambient_dim(),
        }
    }

    fn check_point(&self, pt: &DVector<f64>) -> Result<()> {
        if pt.len() != self.ambient_dim() {
            return Err(Error::Dimension(format!("point has length {}, polytope lives in R^{}", pt.len(), self.ambient_dim())));
        }
        Ok(())
    }

    /// A point of the relative interior (box midpoints, cluster means).
    pub fn center(&self) -> DVector<f64> {
        match self {
            Self::BoxProduct(b) => DVector::from_iterator(b.len(), b.iter().map(|i| i.mid())),
            Self::AffineImage { at, boxes } => at * DVector::from_iterator(boxes.len(), boxes.iter().map(|i| i.mid())),
            Self::ClusterSum { p, blocks } => {
                let mut v = DVector::zeros(*p);
                for b in blocks {
                    if let Block::Cluster { indices, signs, weights } = b {
                        let m = weights.iter().sum::<f64>() / weights.len() as f64;
                        for (i, s) in indices.iter().zip(signs) {
                            v[*i] = s * m;
                        }
                    }
                }
                v
            }
            Self::Shifted { base, offset } => base.center() + offset,
        }
    }

    /// A member distinct from the center in general (a vertex).
    pub fn some_vertex(&self) -> DVector<f64> {
        match self {
            Self::BoxProduct(b) => DVector::from_iterator(b.len(), b.iter().map(|i| i.lo)),
            Self::AffineImage { at, boxes } => at * DVector::from_iterator(boxes.len(), boxes.iter().map(|i| i.lo)),
            Self::ClusterSum { p, blocks } => {
                let mut v = DVector::zeros(*p);
                for b in blocks {
                    match b {
                        Block::Cluster { indices, signs, weights } => {
                            for ((i, s), w) in indices.iter().zip(signs).zip(weights) {
                                v[*i] = s * w;
                            }
                        }
                        Block::Zero { indices, weights } => {
                            for (i, w) in indices.iter().zip(weights) {
                                v[*i] = *w;
                            }
                        }
                    }
                }
                v
            }
            Self::Shifted { base, offset } => base.some_vertex() + offset,
        }
    }

    /// Nonnegative infeasibility measure: zero exactly on the polytope.
    pub fn violation(&self, pt: &DVector<f64>) -> Result<f64> {
        self.check_point(pt)?;
        Ok(match self {
            Self::BoxProduct(b) => b.iter().zip(pt.iter()).map(|(i, v)| (i.lo - v).max(v - i.hi).max(0.0)).fold(0.0, f64::max),
            Self::AffineImage { at, boxes } => affine_residual(at, boxes, pt, 0.0)?.0,
            Self::ClusterSum { blocks, .. } => blocks.iter().map(|b| block_violation(b, pt)).fold(0.0, f64::max),
            Self::Shifted { base, offset } => base.violation(&(pt - offset))?,
        })
    }

    /// Distance-like measure of how far `pt` is from the affine hull.
    pub fn affine_distance(&self, pt: &DVector<f64>) -> Result<f64> {
        self.check_point(pt)?;
        Ok(match self {
            Self::BoxProduct(b) => b
                .iter()
                .zip(pt.iter())
                .filter(|(i, _)| i.is_fixed())
                .map(|(i, v)| (v - i.lo).abs())
                .fold(0.0, f64::max),
            Self::AffineImage { at, boxes } => {
                let (free, c) = split_affine(at, boxes);
                let r = pt - c;
                if free.ncols() == 0 {
                    r.norm()
                } else {
                    let svd = free.clone().svd(true, false);
                    let u = svd.u.unwrap();
                    let max = svd.singular_values.max();
                    let mut proj = r.clone();
                    for (k, s) in svd.singular_values.iter().enumerate() {
                        if *s > RANK_TOL * max {
                            let col = u.column(k);
                            proj -= col * col.dot(&r);
                        }
                    }
                    proj.norm()
                }
            }
            Self::ClusterSum { blocks, .. } => blocks
                .iter()
                .map(|b| match b {
                    Block::Cluster { indices, signs, weights } => {
                        if is_constant(weights) {
                            indices.iter().zip(signs).map(|(i, s)| (s * pt[*i] - weights[0]).abs()).fold(0.0, f64::max)
                        } else {
                            let t: f64 = indices.iter().zip(signs).map(|(i, s)| s * pt[*i]).sum();
                            (t - weights.iter().sum::<f64>()).abs()
                        }
                    }
                    Block::Zero { indices, weights } => {
                        if weights.iter().all(|w| *w == 0.0) {
                            indices.iter().map(|i| pt[*i].abs()).fold(0.0, f64::max)
                        } else {
                            0.0
                        }
                    }
                })
                .fold(0.0, f64::max),
            Self::Shifted { base, offset } => base.affine_distance(&(pt - offset))?,
        })
    }

    pub fn dimension(&self) -> usize {
        match self {
            Self::BoxProduct(b) => b.iter().filter(|i| !i.is_fixed()).count(),
            Self::AffineImage { at, boxes } => {
                let (free, _) = split_affine(at, boxes);
                rank(&free, RANK_TOL)
            }
            Self::ClusterSum { blocks, .. } => blocks
                .iter()
                .map(|b| match b {
                    Block::Cluster { weights, .. } => {
                        if is_constant(weights) {
                            0
                        } else {
                            weights.len() - 1
                        }
                    }
                    Block::Zero { weights, .. } => {
                        if weights.iter().any(|w| *w > 0.0) {
                            weights.len()
                        } else {
                            0
                        }
                    }
                })
                .sum(),
            Self::Shifted { base, .. } => base.dimension(),
        }
    }
}

fn is_constant(w: &[f64]) -> bool {
    w.iter().all(|x| *x == w[0])
}

fn sorted_desc(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(|a, b| b.total_cmp(a));
    v
}

fn block_violation(b: &Block, pt: &DVector<f64>) -> f64 {
    match b {
        Block::Cluster { indices, signs, weights } => {
            let t = sorted_desc(indices.iter().zip(signs).map(|(i, s)| s * pt[*i]).collect());
            let w = sorted_desc(weights.clone());
            let (mut st, mut sw, mut viol) = (0.0, 0.0, 0.0f64);
            for j in 0..t.len() {
                st += t[j];
                sw += w[j];
                if j + 1 < t.len() {
                    viol = viol.max(st - sw);
                } else {
                    viol = viol.max((st - sw).abs());
                }
            }
            viol
        }
        Block::Zero { indices, weights } => {
            let t = sorted_desc(indices.iter().map(|i| pt[*i].abs()).collect());
            let w = sorted_desc(weights.clone());
            let (mut st, mut sw, mut viol) = (0.0, 0.0, 0.0f64);
            for j in 0..t.len() {
                st += t[j];
                sw += w[j];
                viol = viol.max(st - sw);
            }
            viol
        }
    }
}

/// Minimal slack over the inequalities that are strict on the relative interior.
fn block_margin(b: &Block, pt: &DVector<f64>) -> f64 {
    match b {
        Block::Cluster { indices, signs, weights } => {
            if is_constant(weights) {
                return f64::INFINITY;
            }
            let t = sorted_desc(indices.iter().zip(signs).map(|(i, s)| s * pt[*i]).collect());
            let w = sorted_desc(weights.clone());
            let (mut st, mut sw, mut m) = (0.0, 0.0, f64::INFINITY);
            for j in 0..t.len() - 1 {
                st += t[j];
                sw += w[j];
                m = m.min(sw - st);
            }
            m
        }
        Block::Zero { indices, weights } => {
            if weights.iter().all(|w| *w == 0.0) {
                return f64::INFINITY;
            }
            let t = sorted_desc(indices.iter().map(|i| pt[*i].abs()).collect());
            let w = sorted_desc(weights.clone());
            let (mut st, mut sw, mut m) = (0.0, 0.0, f64::INFINITY);
            for j in 0..t.len() {
                st += t[j];
                sw += w[j];
                m = m.min(sw - st);
            }
            m
        }
    }
}

/// Columns of `at` for the free coordinates, and the image of the fixed ones.
fn split_affine(at: &DMatrix<f64>, boxes: &[Interval]) -> (DMatrix<f64>, DVector<f64>) {
    let free: Vec<usize> = (0..boxes.len()).filter(|&j| !boxes[j].is_fixed()).collect();
    let mut c = DVector::zeros(at.nrows());
    for (j, b) in boxes.iter().enumerate() {
        if b.is_fixed() {
            c += at.column(j) * b.lo;
        }
    }
    (at.select_columns(free.iter()), c)
}

/// Residual norm of the box-constrained least squares `min ||at w - pt||`, box shrunk by `shrink`.
fn affine_residual(at: &DMatrix<f64>, boxes: &[Interval], pt: &DVector<f64>, shrink: f64) -> Result<(f64, DVector<f64>)> {
    let (m, c) = split_affine(at, boxes);
    let target = pt - c;
    let free: Vec<&Interval> = boxes.iter().filter(|b| !b.is_fixed()).collect();
    let lo: Vec<f64> = free.iter().map(|b| b.lo + shrink).collect();
    let hi: Vec<f64> = free.iter().map(|b| b.hi - shrink).collect();
    let w = box_least_squares(&m, &target, &lo, &hi)?;
    Ok(((&target - &m * &w).norm(), w))
}

/// Active-set solver for `min ||M w - t||^2` over `lo <= w <= hi` with a tiny
/// proximal term toward the box center, followed by an unregularized refinement.
pub fn box_least_squares(m: &DMatrix<f64>, t: &DVector<f64>, lo: &[f64], hi: &[f64]) -> Result<DVector<f64>> {
    let k = m.ncols();
    if k == 0 {
        return Ok(DVector::zeros(0));
    }
    let center = DVector::from_iterator(k, lo.iter().zip(hi).map(|(l, h)| 0.5 * (l + h)));
    let gram = m.transpose() * m;
    let eps = 1e-11 * (gram.trace() / k as f64).max(1e-300);
    let h = &gram + DMatrix::identity(k, k) * eps;
    let b = m.transpose() * t + &center * eps;
    #[derive(Clone, Copy, PartialEq)]
    enum St {
        Free,
        Lo,
        Hi,
    }
    let mut st = vec![St::Free; k];
    let mut w = center.clone();
    let max_iter = 20 * k + 100;
    let mut done = false;
    for _ in 0..max_iter {
        let free: Vec<usize> = (0..k).filter(|&j| st[j] == St::Free).collect();
        if !free.is_empty() {
            let hff = h.select_rows(free.iter()).select_columns(free.iter());
            let mut rhs = DVector::from_iterator(free.len(), free.iter().map(|&j| b[j]));
            for (a, &i) in free.iter().enumerate() {
                for j in 0..k {
                    if st[j] != St::Free {
                        rhs[a] -= h[(i, j)] * w[j];
                    }
                }
            }
            let sol = hff
                .cholesky()
                .ok_or_else(|| Error::NotConverged { iterations: 0, residual: f64::NAN })?
                .solve(&rhs);
            let mut tau = 1.0;
            let mut block = None;
            for (a, &j) in free.iter().enumerate() {
                let d = sol[a] - w[j];
                if d < 0.0 && w[j] + d < lo[j] {
                    let s = (lo[j] - w[j]) / d;
                    if s < tau {
                        tau = s;
                        block = Some((j, St::Lo));
                    }
                } else if d > 0.0 && w[j] + d > hi[j] {
                    let s = (hi[j] - w[j]) / d;
                    if s < tau {
                        tau = s;
                        block = Some((j, St::Hi));
                    }
                }
            }
            for (a, &j) in free.iter().enumerate() {
                w[j] += tau.max(0.0) * (sol[a] - w[j]);
            }
            if let Some((j, s)) = block {
                st[j] = s;
                w[j] = if s == St::Lo { lo[j] } else { hi[j] };
                continue;
            }
        }
        let g = &h * &w - &b;
        let scale = b.amax().max(1e-300) * 1e-14;
        let mut worst = None;
        let mut wv = scale;
        for j in 0..k {
            let v = match st[j] {
                St::Lo => -g[j],
                St::Hi => g[j],
                St::Free => 0.0,
            };
            if v > wv {
                wv = v;
                worst = Some(j);
            }
        }
        match worst {
            Some(j) => st[j] = St::Free,
            None => {
                done = true;
                break;
            }
        }
    }
    if !done {
        return Err(Error::NotConverged { iterations: max_iter, residual: (t - m * &w).norm() });
    }
    // refinement without the proximal term on the free block
    let free: Vec<usize> = (0..k).filter(|&j| st[j] == St::Free).collect();
    if !free.is_empty() {
        let r = t - m * &w;
        let mf = m.select_columns(free.iter());
        let svd = mf.svd(true, true);
        if let Ok(delta) = svd.solve(&r, RANK_TOL * svd.singular_values.max()) {
            let mut cand = w.clone();
            let mut ok = true;
            for (a, &j) in free.iter().enumerate() {
                cand[j] += delta[a];
                let slack = 1e-12 * (1.0 + lo[j].abs().max(hi[j].abs()));
                if cand[j] < lo[j] - slack || cand[j] > hi[j] + slack {
                    ok = false;
                }
                cand[j] = cand[j].clamp(lo[j], hi[j]);
            }
            if ok && (t - m * &cand).norm() <= r.norm() {
                w = cand;
            }
        }
    }
    Ok(w)
}

pub fn contains(desc: &SubdifferentialDesc, pt: &DVector<f64>, tol: Option<f64>) -> Result<bool> {
    let tol = tol.unwrap_or_else(|| default_tol(pt));
    Ok(desc.violation(pt)? <= tol)
}

/// Relative-interior membership with the minimal strict slack.
pub fn contains_ri(desc: &SubdifferentialDesc, pt: &DVector<f64>) -> Result<RiReport> {
    let d = desc.affine_distance(pt)?;
    let scale = 1.0 + pt.norm();
    if d > AFFINE_TOL * scale {
        return Err(Error::OffAffineHull(d));
    }
    let raw = raw_margin(desc, pt)?;
    let margin = if raw.abs() <= RI_SNAP * scale { 0.0 } else { raw };
    Ok(RiReport { inside: margin > 0.0, margin })
}

fn raw_margin(desc: &SubdifferentialDesc, pt: &DVector<f64>) -> Result<f64> {
    Ok(match desc {
        SubdifferentialDesc::BoxProduct(b) => b
            .iter()
            .zip(pt.iter())
            .filter(|(i, _)| !i.is_fixed())
            .map(|(i, v)| (v - i.lo).min(i.hi - v))
            .fold(f64::INFINITY, f64::min),
        SubdifferentialDesc::ClusterSum { blocks, .. } => {
            let viol = blocks.iter().map(|b| block_violation(b, pt)).fold(0.0, f64::max);
            let m = blocks.iter().map(|b| block_margin(b, pt)).fold(f64::INFINITY, f64::min);
            if viol > 0.0 && m.is_infinite() {
                -viol
            } else {
                m
            }
        }
        SubdifferentialDesc::AffineImage { at, boxes } => {
            let scale = 1.0 + pt.norm();
            let half = boxes.iter().filter(|b| !b.is_fixed()).map(|b| 0.5 * (b.hi - b.lo)).fold(f64::INFINITY, f64::min);
            if half.is_infinite() {
                return Ok(f64::INFINITY);
            }
            let (r0, _) = affine_residual(at, boxes, pt, 0.0)?;
            if r0 > default_tol(pt) {
                return Ok(-r0);
            }
            let feas_tol = 1e-11 * scale;
            let feasible = |t: f64| -> Result<bool> { Ok(affine_residual(at, boxes, pt, t)?.0 <= feas_tol) };
            if feasible(half)? {
                return Ok(half);
            }
            if !feasible(0.0)? {
                return Ok(0.0);
            }
            let (mut a, mut b) = (0.0, half);
            for _ in 0..60 {
                let mid = 0.5 * (a + b);
                if feasible(mid)? {
                    a = mid;
                } else {
                    b = mid;
                }
            }
            a
        }
        SubdifferentialDesc::Shifted { base, offset } => raw_margin(base, &(pt - offset))?,
    })
}

fn factorial(n: usize) -> u128 {
    (1..=n as u128).product::<u128>().max(1)
}

fn multiset_perm_count(w: &[f64]) -> u128 {
    let mut s = sorted_desc(w.to_vec());
    s.dedup();
    let mut c = factorial(w.len());
    for v in s {
        c /= factorial(w.iter().filter(|x| **x == v).count());
    }
    c
}

fn vertex_count(desc: &SubdifferentialDesc) -> u128 {
    match desc {
        SubdifferentialDesc::BoxProduct(b) => 1u128 << b.iter().filter(|i| !i.is_fixed()).count().min(120),
        SubdifferentialDesc::AffineImage { boxes, .. } => 1u128 << boxes.iter().filter(|i| !i.is_fixed()).count().min(120),
        SubdifferentialDesc::ClusterSum { blocks, .. } => blocks
            .iter()
            .map(|b| match b {
                Block::Cluster { weights, .. } => multiset_perm_count(weights),
                Block::Zero { weights, .. } => {
                    multiset_perm_count(weights) << weights.iter().filter(|w| **w != 0.0).count().min(120)
                }
            })
            .fold(1u128, |a, b| a.saturating_mul(b)),
        SubdifferentialDesc::Shifted { base, .. } => vertex_count(base),
    }
}

/// Distinct permutations of a multiset, lexicographic order.
fn multiset_perms(w: &[f64]) -> Vec<Vec<f64>> {
    let mut cur: Vec<f64> = w.to_vec();
    cur.sort_by(|a, b| a.total_cmp(b));
    let mut out = vec![cur.clone()];
    loop {
        let n = cur.len();
        if n < 2 {
            break;
        }
        let mut i = n - 1;
        while i > 0 && cur[i - 1] >= cur[i] {
            i -= 1;
        }
        if i == 0 {
            break;
        }
        let mut j = n - 1;
        while cur[j] <= cur[i - 1] {
            j -= 1;
        }
        cur.swap(i - 1, j);
        cur[i..].reverse();
        out.push(cur.clone());
    }
    out
}

fn block_points(b: &Block) -> Vec<(Vec<usize>, Vec<f64>)> {
    match b {
        Block::Cluster { indices, signs, weights } => multiset_perms(weights)
            .into_iter()
            .map(|perm| (indices.clone(), perm.iter().zip(signs).map(|(w, s)| w * s).collect()))
            .collect(),
        Block::Zero { indices, weights } => {
            let mut out = vec![];
            for perm in multiset_perms(weights) {
                let nz: Vec<usize> = (0..perm.len()).filter(|&j| perm[j] != 0.0).collect();
                for mask in 0..(1u64 << nz.len()) {
                    let mut v = perm.clone();
                    for (bit, &j) in nz.iter().enumerate() {
                        if mask >> bit & 1 == 1 {
                            v[j] = -v[j];
                        }
                    }
                    out.push((indices.clone(), v));
                }
            }
            out
        }
    }
}

fn corners(boxes: &[Interval]) -> Vec<DVector<f64>> {
    let free: Vec<usize> = (0..boxes.len()).filter(|&j| !boxes[j].is_fixed()).collect();
    let base = DVector::from_iterator(boxes.len(), boxes.iter().map(|b| b.lo));
    (0..(1u64 << free.len()))
        .map(|mask| {
            let mut v = base.clone();
            for (bit, &j) in free.iter().enumerate() {
                if mask >> bit & 1 == 1 {
                    v[j] = boxes[j].hi;
                }
            }
            v
        })
        .collect()
}

fn dedup(points: Vec<DVector<f64>>) -> Vec<DVector<f64>> {
    let mut out: Vec<DVector<f64>> = Vec::with_capacity(points.len());
    for p in points {
        if !out.iter().any(|q| (q - &p).amax() <= DEDUP_TOL) {
            out.push(p);
        }
    }
    out
}

/// Explicit vertex list (generating set, duplicates removed); refuses above `max`.
pub fn enumerate_vertices(desc: &SubdifferentialDesc, max: usize) -> Result<VPolytope> {
    let count = vertex_count(desc);
    if count > max as u128 {
        return Err(Error::TooManyVertices { count, max });
    }
    let vertices = match desc {
        SubdifferentialDesc::BoxProduct(b) => corners(b),
        SubdifferentialDesc::AffineImage { at, boxes } => dedup(corners(boxes).iter().map(|w| at * w).collect()),
        SubdifferentialDesc::ClusterSum { p, blocks } => {
            let mut acc = vec![DVector::zeros(*p)];
            for b in blocks {
                let pts = block_points(b);
                let mut next = Vec::with_capacity(acc.len() * pts.len());
                for a in &acc {
                    for (idx, vals) in &pts {
                        let mut v = a.clone();
                        for (i, x) in idx.iter().zip(vals) {
                            v[*i] = *x;
                        }
                        next.push(v);
                    }
                }
                acc = next;
            }
            acc
        }
        SubdifferentialDesc::Shifted { base, offset } => {
            return Ok(VPolytope { vertices: enumerate_vertices(base, max)?.vertices.into_iter().map(|v| v + offset).collect() })
        }
    };
    Ok(VPolytope { vertices })
}

/// Nearest point of `conv(points)` to the origin (Wolfe's min-norm-point method).
pub fn min_norm_point(points: &[DVector<f64>]) -> DVector<f64> {
    assert!(!points.is_empty());
    let scale = points.iter().map(|p| p.norm_squared()).fold(0.0, f64::max).max(1e-300);
    let start = (0..points.len()).min_by(|&a, &b| points[a].norm_squared().total_cmp(&points[b].norm_squared())).unwrap();
    let mut s = vec![start];
    let mut lam = vec![1.0];
    let mut x = points[start].clone();
    for _ in 0..(10 * points.len() + 100) {
        let (j, dj) = (0..points.len())
            .map(|i| (i, x.dot(&points[i])))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .unwrap();
        if x.norm_squared() - dj <= 1e-13 * scale || s.contains(&j) {
            break;
        }
        s.push(j);
        lam.push(0.0);
        loop {
            let k = s.len();
            let mut sys = DMatrix::zeros(k + 1, k + 1);
            for a in 0..k {
                for b in 0..k {
                    sys[(a, b)] = points[s[a]].dot(&points[s[b]]);
                }
                sys[(a, k)] = 1.0;
                sys[(k, a)] = 1.0;
            }
            let mut rhs = DVector::zeros(k + 1);
            rhs[k] = 1.0;
            let alpha = match sys.clone().lu().solve(&rhs) {
                Some(sol) if sol.iter().all(|v| v.is_finite()) => sol,
                _ => {
                    let svd = sys.svd(true, true);
                    let tol = 1e-13 * svd.singular_values.max();
                    svd.solve(&rhs, tol).unwrap_or_else(|_| DVector::zeros(k + 1))
                }
            };
            let alpha: Vec<f64> = alpha.iter().take(k).cloned().collect();
            if alpha.iter().all(|a| *a > 1e-15) {
                lam = alpha;
                break;
            }
            let mut theta = 1.0;
            for a in 0..k {
                if alpha[a] <= 1e-15 {
                    let d = lam[a] - alpha[a];
                    if d > 0.0 {
                        theta = f64::min(theta, lam[a] / d);
                    }
                }
            }
            for a in 0..k {
                lam[a] = theta * alpha[a] + (1.0 - theta) * lam[a];
            }
            let mut a = 0;
            let mut removed = false;
            while a < s.len() {
                if lam[a] <= 1e-15 {
                    s.remove(a);
                    lam.remove(a);
                    removed = true;
                } else {
                    a += 1;
                }
            }
            if !removed {
                // numerical stall: drop the smallest weight
                let (m, _) = lam.iter().enumerate().min_by(|a, b| a.1.total_cmp(b.1)).unwrap();
                s.remove(m);
                lam.remove(m);
            }
            let tot: f64 = lam.iter().sum();
            for l in lam.iter_mut() {
                *l /= tot;
            }
            if s.len() == 1 {
                lam = vec![1.0];
                break;
            }
        }
        x = s.iter().zip(&lam).fold(DVector::zeros(points[0].len()), |acc, (i, l)| acc + &points[*i] * *l);
    }
    x
}

/// Euclidean distance from `x` to the convex hull of `vertices`.
pub fn distance_to_hull(vertices: &[DVector<f64>], x: &DVector<f64>) -> f64 {
    let shifted: Vec<DVector<f64>> = vertices.iter().map(|v| v - x).collect();
    min_norm_point(&shifted).norm()
}

pub fn hausdorff_distance(a: &VPolytope, b: &VPolytope) -> f64 {
    let ab = a.vertices.iter().map(|v| distance_to_hull(&b.vertices, v)).fold(0.0, f64::max);
    let ba = b.vertices.iter().map(|v| distance_to_hull(&a.vertices, v)).fold(0.0, f64::max);
    ab.max(ba)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn v(x: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(x)
    }

    fn slope_example() -> SubdifferentialDesc {
        let s = PenaltySpec::slope(vec![3.0, 2.0]).unwrap();
        subdifferential_at(&s, &v(&[1.0, 0.0])).unwrap()
    }

    #[test]
    fn slope_segment() {
        let d = slope_example();
        let vp = enumerate_vertices(&d, 100).unwrap();
        assert_eq!(vp.vertices.len(), 2);
        assert!(vp.vertices.contains(&v(&[3.0, 2.0])));
        assert!(vp.vertices.contains(&v(&[3.0, -2.0])));
        assert!(contains(&d, &v(&[3.0, 1.9]), None).unwrap());
        assert!(!contains(&d, &v(&[3.0, 2.4]), None).unwrap());
        let r = contains_ri(&d, &v(&[3.0, 1.6])).unwrap();
        assert!(r.inside);
        assert_relative_eq!(r.margin, 0.4, epsilon = 1e-12);
        let r = contains_ri(&d, &v(&[3.0, 2.0])).unwrap();
        assert!(!r.inside);
        assert_eq!(r.margin, 0.0);
        assert!(matches!(contains_ri(&d, &v(&[2.0, 0.0])), Err(Error::OffAffineHull(_))));
        assert_eq!(d.dimension(), 1);
    }

    #[test]
    fn zero_cluster_membership() {
        let s = PenaltySpec::slope(vec![3.0, 2.0]).unwrap();
        let d = subdifferential_at(&s, &v(&[0.0, 0.0])).unwrap();
        assert!(contains(&d, &v(&[2.5, 2.5]), None).unwrap());
        assert!(!contains(&d, &v(&[3.5, 1.0]), None).unwrap());
        assert_eq!(enumerate_vertices(&d, 100).unwrap().vertices.len(), 8);
        assert!(matches!(enumerate_vertices(&d, 4), Err(Error::TooManyVertices { .. })));
    }

    #[test]
    fn box_margin() {
        let d = SubdifferentialDesc::BoxProduct(vec![Interval::sym(1.0); 2]);
        let r = contains_ri(&d, &v(&[0.0, 0.0])).unwrap();
        assert!(r.inside);
        assert_relative_eq!(r.margin, 1.0);
        let l = PenaltySpec::lasso(1.0).unwrap();
        let z = subdifferential_at(&l, &v(&[0.0, 0.0])).unwrap();
        assert_eq!(enumerate_vertices(&z, 100).unwrap().vertices.len(), 4);
    }

    #[test]
    fn fused_affine_image() {
        let f = PenaltySpec::fused_lasso(&[1.0, 2.0, 3.0], None, 1.0).unwrap();
        let d = subdifferential_at(&f, &v(&[1.0, 2.0, 2.0, 3.0])).unwrap();
        let vp = enumerate_vertices(&d, 100).unwrap();
        assert_eq!(vp.vertices.len(), 2);
        let base = v(&[-1.0, 1.0, -3.0, 3.0]);
        assert!(vp.vertices.iter().any(|x| (x - (&base + v(&[0.0, 2.0, -2.0, 0.0]))).amax() < 1e-12));
        assert!(vp.vertices.iter().any(|x| (x - (&base - v(&[0.0, 2.0, -2.0, 0.0]))).amax() < 1e-12));
        assert_eq!(d.dimension(), 1);
        assert!(contains(&d, &base, None).unwrap());
        let r = contains_ri(&d, &base).unwrap();
        assert!(r.inside);
        assert!(!contains(&d, &(&base + v(&[0.0, 2.5, -2.5, 0.0])), None).unwrap());
    }

    #[test]
    fn hausdorff_segment_box() {
        let delta = 0.3;
        let seg = VPolytope { vertices: vec![v(&[0.0, 0.0]), v(&[1.0, 0.0])] };
        let bx = VPolytope {
            vertices: vec![v(&[0.0, -delta]), v(&[0.0, delta]), v(&[1.0, -delta]), v(&[1.0, delta])],
        };
        assert_relative_eq!(hausdorff_distance(&seg, &bx), delta, epsilon = 1e-12);
    }

    #[test]
    fn min_norm_point_inside_is_zero() {
        let pts = vec![v(&[1.0, 1.0]), v(&[-1.0, 1.0]), v(&[0.0, -1.0])];
        assert!(min_norm_point(&pts).norm() < 1e-14);
        let pts = vec![v(&[1.0, 1.0]), v(&[1.0, -1.0])];
        assert_relative_eq!(min_norm_point(&pts).norm(), 1.0, epsilon = 1e-14);
    }
}
