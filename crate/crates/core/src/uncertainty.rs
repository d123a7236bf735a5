//! Polytope uncertainty sets and their support functions.
//!
//! For `ĥ(x, u) = uᵀx` the robust term `max_{u∈U} uᵀx` of a bounded polytope is
//! attained at a vertex, so enumerating the vertices turns it into a
//! [`PiecewiseAffine`] with one zero-offset piece per vertex.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::problem::{matrix_from_rows, AffinePiece, PiecewiseAffine};

/// Largest dimension accepted by [`box_vertices`].
pub const MAX_BOX_DIM: usize = 20;
/// Largest number of row subsets examined by [`hpolytope_vertices`].
pub const ENUMERATION_BUDGET: u128 = 1_000_000;
/// Points closer than this are treated as the same vertex.
pub const DEDUP_TOL: f64 = 1e-9;
const FEASIBILITY_TOL: f64 = 1e-9;
const MIN_RCOND: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub enum UncertaintySet {
    /// `{u | −δ ≤ u_i ≤ δ}`
    Box { delta: f64, n: usize },
    /// `{u | −δ ≤ (Bu)_i ≤ δ}`
    TransformedBox { transform: DMatrix<f64>, delta: f64 },
    /// `{u | Au ≤ b}`
    HPolytope { a: DMatrix<f64>, b: DVector<f64> },
}

impl UncertaintySet {
    pub fn dim(&self) -> usize {
        match self {
            Self::Box { n, .. } => *n,
            Self::TransformedBox { transform, .. } => transform.ncols(),
            Self::HPolytope { a, .. } => a.ncols(),
        }
    }

    pub fn vertices(&self) -> Result<Vec<DVector<f64>>> {
        match self {
            Self::Box { delta, n } => box_vertices(*delta, *n),
            Self::TransformedBox { transform, delta } => transformed_box_vertices(transform, *delta),
            Self::HPolytope { a, b } => hpolytope_vertices(a, b),
        }
    }

    /// `h(x) = max_{u∈U} uᵀx` as one piece `(v, 0)` per vertex `v`.
    pub fn support_function(&self) -> Result<PiecewiseAffine> {
        let pieces = self
            .vertices()?
            .into_iter()
            .map(|v| AffinePiece { slope: v, offset: 0.0 })
            .collect();
        PiecewiseAffine::new(pieces)
    }
}

/// All sign patterns `(±δ)ⁿ`, first coordinate most significant, `+δ` before `−δ`.
/// With `δ = 0` the single origin is returned.
pub fn box_vertices(delta: f64, n: usize) -> Result<Vec<DVector<f64>>> {
    if !(delta >= 0.0) || !delta.is_finite() {
        return Err(Error::InvalidArgument(format!("box half-width must be ≥ 0, got {delta}")));
    }
    if n == 0 {
        return Err(Error::InvalidArgument("box dimension must be ≥ 1".into()));
    }
    if n > MAX_BOX_DIM {
        return Err(Error::Capacity(format!(
            "box of dimension {n} has 2^{n} vertices (limit 2^{MAX_BOX_DIM})"
        )));
    }
    if delta == 0.0 {
        return Ok(vec![DVector::zeros(n)]);
    }
    Ok((0..1usize << n)
        .map(|k| {
            DVector::from_fn(n, |j, _| {
                if (k >> (n - 1 - j)) & 1 == 1 {
                    -delta
                } else {
                    delta
                }
            })
        })
        .collect())
}

/// Reciprocal 2-norm condition number `σ_min / σ_max`.
pub fn reciprocal_condition(m: &DMatrix<f64>) -> f64 {
    let sv = m.clone().singular_values();
    let max = sv.max();
    if max == 0.0 {
        0.0
    } else {
        sv.min() / max
    }
}

/// `{B⁻¹v : v ∈ box_vertices(δ, n)}`.
pub fn transformed_box_vertices(transform: &DMatrix<f64>, delta: f64) -> Result<Vec<DVector<f64>>> {
    let n = transform.nrows();
    if transform.ncols() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            actual: transform.ncols(),
        });
    }
    let rcond = reciprocal_condition(transform);
    if !(rcond > MIN_RCOND) {
        return Err(Error::Singular(format!(
            "transform has reciprocal condition {rcond:e}"
        )));
    }
    let lu = transform.clone().lu();
    box_vertices(delta, n)?
        .into_iter()
        .map(|v| {
            lu.solve(&v)
                .ok_or_else(|| Error::Singular("transform is not invertible".into()))
        })
        .collect()
}

/// Calls `f` with every `k`-subset of `0..d` in lexicographic order.
fn for_each_subset(d: usize, k: usize, mut f: impl FnMut(&[usize])) {
    if k > d {
        return;
    }
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        f(&idx);
        let mut i = k;
        while i > 0 && idx[i - 1] == i - 1 + d - k {
            i -= 1;
        }
        if i == 0 {
            return;
        }
        idx[i - 1] += 1;
        for j in i..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

fn binomial(d: usize, k: usize) -> u128 {
    if k > d {
        return 0;
    }
    let k = k.min(d - k);
    (0..k).fold(1u128, |acc, i| acc * (d - i) as u128 / (i + 1) as u128)
}

/// Vertices of `{u | Au ≤ b}` by brute force over all `n`-subsets of rows.
pub fn hpolytope_vertices(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<Vec<DVector<f64>>> {
    let (d, n) = a.shape();
    if b.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            actual: b.len(),
        });
    }
    if n == 0 {
        return Err(Error::InvalidArgument("polytope dimension must be ≥ 1".into()));
    }
    if d < n {
        return Err(Error::InvalidSet(format!(
            "{d} constraints cannot bound a set in R^{n}"
        )));
    }
    let subsets = binomial(d, n).max(binomial(d, n - 1));
    if subsets > ENUMERATION_BUDGET {
        return Err(Error::Capacity(format!(
            "{subsets} row subsets exceed the enumeration budget {ENUMERATION_BUDGET}"
        )));
    }
    if a.iter().chain(b.iter()).any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("non-finite polytope data".into()));
    }
    if let Some(ray) = recession_ray(a) {
        return Err(Error::InvalidSet(format!(
            "polytope is unbounded along {:?}",
            ray.as_slice()
        )));
    }

    let mut vertices: Vec<DVector<f64>> = Vec::new();
    for_each_subset(d, n, |rows| {
        let sub = a.select_rows(rows);
        if reciprocal_condition(&sub) <= 1e-12 {
            return;
        }
        let rhs = DVector::from_iterator(n, rows.iter().map(|&r| b[r]));
        let Some(u) = sub.lu().solve(&rhs) else {
            return;
        };
        if !u.iter().all(|v| v.is_finite()) {
            return;
        }
        let feasible = (a * &u - b).iter().all(|&s| s <= FEASIBILITY_TOL);
        if feasible && !vertices.iter().any(|v| (v - &u).norm() < DEDUP_TOL) {
            vertices.push(u);
        }
    });
    if vertices.is_empty() {
        return Err(Error::InvalidSet("polytope is empty".into()));
    }
    Ok(vertices)
}

/// A nonzero `r` with `Ar ≤ 0`, if one exists.
///
/// If `A` has rank below `n` its null space is such a direction. Otherwise the
/// cone `{r | Ar ≤ 0}` is pointed and is nonzero exactly when it has an extreme
/// ray, which lies on `n − 1` linearly independent tight rows.
fn recession_ray(a: &DMatrix<f64>) -> Option<DVector<f64>> {
    let (d, n) = a.shape();
    let row_norm: Vec<f64> = a.row_iter().map(|r| r.norm()).collect();
    let scale = row_norm.iter().cloned().fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let is_recession = |r: &DVector<f64>| {
        (0..d).all(|j| a.row(j).dot(&r.transpose()) <= 1e-10 * row_norm[j].max(scale * 1e-3))
    };

    let svd = a.clone().svd(false, true);
    let smax = svd.singular_values.max();
    let rank = svd
        .singular_values
        .iter()
        .filter(|&&s| s > 1e-12 * smax)
        .count();
    if rank < n {
        return Some(null_direction(a));
    }

    let mut found = None;
    for_each_subset(d, n - 1, |rows| {
        if found.is_some() {
            return;
        }
        let mut sub = DMatrix::zeros(n, n);
        for (k, &r) in rows.iter().enumerate() {
            sub.set_row(k, &a.row(r));
        }
        let sv = sub.clone().singular_values();
        let tiny = sv.iter().filter(|&&s| s <= 1e-12 * sv.max().max(1.0)).count();
        if tiny != 1 {
            return;
        }
        let r = null_direction(&sub);
        if is_recession(&r) {
            found = Some(r);
        } else if is_recession(&-&r) {
            found = Some(-r);
        }
    });
    found
}

/// Right singular vector for the smallest singular value (`m` has at least as many rows as columns).
fn null_direction(m: &DMatrix<f64>) -> DVector<f64> {
    let svd = m.clone().svd(false, true);
    let v_t = svd.v_t.expect("requested v_t");
    let (k, _) = svd
        .singular_values
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |(bk, bs), (k, &s)| if s < bs { (k, s) } else { (bk, bs) });
    v_t.row(k).transpose()
}

/// Serialized form of an uncertainty set inside an instance document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum UncertaintySpec {
    Box {
        delta: f64,
    },
    TransformedBox {
        delta: f64,
        #[serde(rename = "B")]
        transform: Vec<Vec<f64>>,
    },
    Hpolytope {
        #[serde(rename = "A")]
        a: Vec<Vec<f64>>,
        b: Vec<f64>,
    },
}

impl UncertaintySpec {
    pub fn to_set(&self, n: usize) -> Result<UncertaintySet> {
        let set = match self {
            Self::Box { delta } => UncertaintySet::Box { delta: *delta, n },
            Self::TransformedBox { delta, transform } => UncertaintySet::TransformedBox {
                transform: matrix_from_rows(transform, "B")?,
                delta: *delta,
            },
            Self::Hpolytope { a, b } => UncertaintySet::HPolytope {
                a: matrix_from_rows(a, "A")?,
                b: DVector::from_column_slice(b),
            },
        };
        if set.dim() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                actual: set.dim(),
            });
        }
        Ok(set)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(xs)
    }

    #[test]
    fn box_examples() {
        let got = box_vertices(0.1, 2).unwrap();
        let want = [v(&[0.1, 0.1]), v(&[0.1, -0.1]), v(&[-0.1, 0.1]), v(&[-0.1, -0.1])];
        assert_eq!(got, want);

        assert_eq!(box_vertices(0.0, 5).unwrap(), vec![DVector::zeros(5)]);

        let got = box_vertices(0.05, 5).unwrap();
        assert_eq!(got.len(), 32);
        assert!(got.iter().all(|u| u.amax() == 0.05));
    }

    #[test]
    fn box_guards() {
        assert!(matches!(box_vertices(0.1, 21), Err(Error::Capacity(_))));
        assert!(matches!(box_vertices(-0.1, 2), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn transformed_box_examples() {
        let id = DMatrix::identity(2, 2);
        assert_eq!(transformed_box_vertices(&id, 0.1).unwrap(), box_vertices(0.1, 2).unwrap());

        let b = DMatrix::from_diagonal(&v(&[2.0, 1.0]));
        let got = transformed_box_vertices(&b, 0.1).unwrap();
        let want = [v(&[0.05, 0.1]), v(&[0.05, -0.1]), v(&[-0.05, 0.1]), v(&[-0.05, -0.1])];
        for (g, w) in got.iter().zip(&want) {
            assert_abs_diff_eq!(g, w, epsilon = 1e-15);
        }

        let singular = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]);
        assert!(matches!(
            transformed_box_vertices(&singular, 0.1),
            Err(Error::Singular(_))
        ));
    }

    #[test]
    fn transformed_box_vertices_are_tight() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 3;
        let delta = 0.1;
        let b = loop {
            let b = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
            if reciprocal_condition(&b) > 1e-2 {
                break b;
            }
        };
        for u in transformed_box_vertices(&b, delta).unwrap() {
            let bu = &b * &u;
            assert!(bu.iter().all(|&c| c.abs() <= delta + 1e-12));
            let tight = bu.iter().filter(|&&c| (c.abs() - delta).abs() <= 1e-12).count();
            assert!(tight >= n);
        }
    }

    #[test]
    fn hpolytope_square_and_triangle() {
        let a = DMatrix::from_row_slice(4, 2, &[1.0, 0.0, -1.0, 0.0, 0.0, 1.0, 0.0, -1.0]);
        let b = v(&[1.0, 1.0, 1.0, 1.0]);
        let mut got = hpolytope_vertices(&a, &b).unwrap();
        assert_eq!(got.len(), 4);
        got.sort_by(|x, y| x.as_slice().partial_cmp(y.as_slice()).unwrap());
        assert_eq!(got, vec![v(&[-1.0, -1.0]), v(&[-1.0, 1.0]), v(&[1.0, -1.0]), v(&[1.0, 1.0])]);

        let a = DMatrix::from_row_slice(3, 2, &[-1.0, 0.0, 0.0, -1.0, 1.0, 1.0]);
        let b = v(&[0.0, 0.0, 1.0]);
        let got = hpolytope_vertices(&a, &b).unwrap();
        assert_eq!(got.len(), 3);
        for want in [v(&[0.0, 0.0]), v(&[1.0, 0.0]), v(&[0.0, 1.0])] {
            assert!(got.iter().any(|g| (g - &want).norm() < 1e-12));
        }
    }

    #[test]
    fn hpolytope_rejects_unbounded_and_empty() {
        // half-plane strip: unbounded along u_2
        let a = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, -1.0, 0.0, 0.0, 1.0]);
        let b = v(&[1.0, 1.0, 1.0]);
        assert!(matches!(hpolytope_vertices(&a, &b), Err(Error::InvalidSet(_))));

        // u ≤ −1 and u ≥ 1
        let a = DMatrix::from_row_slice(2, 1, &[1.0, -1.0]);
        let b = v(&[-1.0, -1.0]);
        assert!(matches!(hpolytope_vertices(&a, &b), Err(Error::InvalidSet(_))));

        // a cone opening upward: rank 2, but unbounded
        let a = DMatrix::from_row_slice(2, 2, &[1.0, -1.0, -1.0, -1.0]);
        let b = v(&[0.0, 0.0]);
        assert!(matches!(hpolytope_vertices(&a, &b), Err(Error::InvalidSet(_))));
    }

    #[test]
    fn hpolytope_budget() {
        let d = 60;
        let n = 6;
        let a = DMatrix::from_fn(d, n, |i, j| ((i * 7 + j * 3) % 11) as f64 - 5.0);
        let b = DVector::from_element(d, 1.0);
        assert!(matches!(hpolytope_vertices(&a, &b), Err(Error::Capacity(_))));
    }

    /// A basic feasible point is one whose tight rows have full rank.
    fn vertex_oracle(a: &DMatrix<f64>, b: &DVector<f64>) -> Vec<DVector<f64>> {
        let (d, n) = a.shape();
        assert_eq!(n, 3);
        let mut out: Vec<DVector<f64>> = Vec::new();
        for i in 0..d {
            for j in i + 1..d {
                for k in j + 1..d {
                    let m = nalgebra::Matrix3::from_rows(&[
                        a.row(i).fixed_columns::<3>(0).into_owned(),
                        a.row(j).fixed_columns::<3>(0).into_owned(),
                        a.row(k).fixed_columns::<3>(0).into_owned(),
                    ]);
                    let det = m.determinant();
                    if det.abs() < 1e-10 {
                        continue;
                    }
                    // Cramer's rule
                    let rhs = nalgebra::Vector3::new(b[i], b[j], b[k]);
                    let p = DVector::from_fn(3, |c, _| {
                        let mut mc = m;
                        mc.set_column(c, &rhs);
                        mc.determinant() / det
                    });
                    let slack = a * &p - b;
                    if slack.iter().any(|&s| s > 1e-9) {
                        continue;
                    }
                    let tight: Vec<usize> = (0..d).filter(|&r| slack[r].abs() <= 1e-9).collect();
                    let rank = a.select_rows(&tight).rank(1e-9);
                    if rank == 3 && !out.iter().any(|q| (q - &p).norm() < 1e-9) {
                        out.push(p);
                    }
                }
            }
        }
        out
    }

    #[test]
    fn hpolytope_matches_extreme_point_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..20 {
            let d = 8;
            let mut a = DMatrix::zeros(d, 3);
            // the first six rows bound a box, the rest cut corners
            for k in 0..3 {
                a[(2 * k, k)] = 1.0;
                a[(2 * k + 1, k)] = -1.0;
            }
            for r in 6..d {
                for c in 0..3 {
                    a[(r, c)] = rng.random_range(-1.0..1.0);
                }
            }
            let b = DVector::from_fn(d, |r, _| if r < 6 { 1.0 } else { rng.random_range(0.3..1.5) });
            let got = hpolytope_vertices(&a, &b).unwrap();
            let want = vertex_oracle(&a, &b);
            assert_eq!(got.len(), want.len());
            for w in &want {
                assert!(got.iter().any(|g| (g - w).norm() < 1e-9));
            }
        }
    }

    #[test]
    fn support_function_examples() {
        let h = UncertaintySet::Box { delta: 0.0, n: 5 }.support_function().unwrap();
        assert_eq!(h.len(), 1);
        assert!(h.is_zero());

        let h = UncertaintySet::Box { delta: 0.1, n: 2 }.support_function().unwrap();
        assert_abs_diff_eq!(h.value(&v(&[1.0, -2.0])).unwrap(), 0.3, epsilon = 1e-15);
    }

    #[test]
    fn transformed_support_dominates_samples() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let n = 5;
        let delta = 0.05;
        let b = loop {
            let b = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
            if reciprocal_condition(&b) > 1e-3 {
                break b;
            }
        };
        let set = UncertaintySet::TransformedBox {
            transform: b.clone(),
            delta,
        };
        let h = set.support_function().unwrap();
        let lu = b.lu();
        let samples: Vec<DVector<f64>> = (0..10_000)
            .map(|_| lu.solve(&DVector::from_fn(n, |_, _| rng.random_range(-delta..=delta))).unwrap())
            .collect();
        for _ in 0..20 {
            let x = DVector::from_fn(n, |_, _| rng.random_range(-3.0..3.0));
            let sample_max = samples.iter().map(|u| u.dot(&x)).fold(f64::NEG_INFINITY, f64::max);
            assert!(h.value(&x).unwrap() + 1e-9 >= sample_max);
        }
    }

    #[test]
    fn support_function_properties() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let n = 4;
        let b = DMatrix::from_fn(n, n, |i, j| if i == j { 2.0 } else { 0.3 * (i as f64 - j as f64) });
        for _ in 0..50 {
            let x = DVector::from_fn(n, |_, _| rng.random_range(-3.0..3.0));
            let t: f64 = rng.random_range(0.0..5.0);
            let mut prev = 0.0;
            for delta in [0.0, 0.05, 0.1] {
                let h = UncertaintySet::TransformedBox {
                    transform: b.clone(),
                    delta,
                }
                .support_function()
                .unwrap();
                let hx = h.value(&x).unwrap();
                assert!(hx >= 0.0);
                assert!(hx >= prev);
                prev = hx;
                let htx = h.value(&(&x * t)).unwrap();
                assert!((htx - t * hx).abs() <= 1e-12 * (t * hx).abs().max(1e-300));
            }
        }
    }

    #[test]
    fn subsets_enumerate_all() {
        let mut seen = Vec::new();
        for_each_subset(5, 3, |s| seen.push(s.to_vec()));
        assert_eq!(seen.len(), 10);
        assert_eq!(seen[0], vec![0, 1, 2]);
        assert_eq!(seen[9], vec![2, 3, 4]);
        let mut count = 0;
        for_each_subset(4, 0, |s| {
            assert!(s.is_empty());
            count += 1
        });
        assert_eq!(count, 1);
        assert_eq!(binomial(8, 3), 56);
    }
}
