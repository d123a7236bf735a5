//! Slow, independent verifiers for the direction subproblem and for Pareto
//! stationarity. These only share piece evaluation with the fast solver.

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};

use crate::error::{Error, Result};
use crate::metric::MetricSet;
use crate::problem::ProblemInstance;
use crate::subproblem::{build_pieces, solve_direction, QuadraticPiece, SolveOptions};

/// Subgradient iterations used by the stationarity certificate.
pub const CERTIFICATE_ITERS: usize = 10_000;
pub const MAX_GRID_RESOLUTION: usize = 2001;
const GOLDEN_ROUNDS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OracleMethod {
    Subgradient,
    Grid,
}

/// `value` is the objective at `argmin`, so it bounds the true minimum from above.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleReport {
    pub value: f64,
    pub argmin: DVector<f64>,
    pub evaluations: usize,
    pub method: OracleMethod,
}

/// Pieces unpacked into flat arrays so the inner loops do not allocate.
struct Flat {
    n: usize,
    omega: f64,
    lin: Vec<f64>,
    c: Vec<f64>,
    /// Column-major curvature per piece, empty when the metrics are frozen at zero.
    curv: Vec<Vec<f64>>,
}

impl Flat {
    fn new(pieces: &[QuadraticPiece], metrics: &MetricSet, omega: f64) -> Result<Self> {
        let n = pieces
            .first()
            .ok_or_else(|| Error::InvalidArgument("no pieces".into()))?
            .lin
            .len();
        if metrics.dim() != n || pieces.iter().any(|q| q.lin.len() != n || q.metric_index >= metrics.len()) {
            return Err(Error::InvalidArgument("pieces and metrics disagree".into()));
        }
        Ok(Self {
            n,
            omega,
            lin: pieces.iter().flat_map(|q| q.lin.iter().copied()).collect(),
            c: pieces.iter().map(|q| q.c).collect(),
            curv: pieces
                .iter()
                .map(|q| {
                    if metrics.is_frozen() {
                        Vec::new()
                    } else {
                        metrics.get(q.metric_index).as_slice().to_vec()
                    }
                })
                .collect(),
        })
    }

    /// `φ(d)` and the index of a maximal piece; `bd` receives `B d` of that piece.
    fn eval(&self, d: &[f64], bd: &mut [f64], scratch: &mut [f64]) -> (f64, usize) {
        let n = self.n;
        let mut best = (f64::NEG_INFINITY, 0);
        for p in 0..self.c.len() {
            let lin = &self.lin[p * n..(p + 1) * n];
            let mut v = self.c[p];
            for j in 0..n {
                v += lin[j] * d[j];
            }
            let b = &self.curv[p];
            if !b.is_empty() {
                for r in 0..n {
                    scratch[r] = (0..n).map(|k| b[k * n + r] * d[k]).sum();
                }
                v += 0.5 * (0..n).map(|r| scratch[r] * d[r]).sum::<f64>();
            }
            if v > best.0 {
                best = (v, p);
                if b.is_empty() {
                    bd.iter_mut().for_each(|x| *x = 0.0);
                } else {
                    bd.copy_from_slice(scratch);
                }
            }
        }
        let sq: f64 = d.iter().map(|x| x * x).sum();
        (best.0 + 0.5 * self.omega * sq, best.1)
    }

    fn value(&self, d: &[f64]) -> f64 {
        let mut bd = vec![0.0; self.n];
        let mut scratch = vec![0.0; self.n];
        self.eval(d, &mut bd, &mut scratch).0
    }
}

/// Subgradient descent from `d = 0` with steps `c/√k`, `c = 1/(1 + max‖lin_p‖)`,
/// keeping the best point seen.
pub fn subgradient_oracle(
    pieces: &[QuadraticPiece],
    metrics: &MetricSet,
    omega: f64,
    iters: usize,
) -> Result<OracleReport> {
    let flat = Flat::new(pieces, metrics, omega)?;
    let n = flat.n;
    let c = 1.0 / (1.0 + pieces.iter().map(|q| q.lin.norm()).fold(0.0, f64::max));
    let mut d = vec![0.0; n];
    let mut bd = vec![0.0; n];
    let mut scratch = vec![0.0; n];
    let mut value = f64::INFINITY;
    let mut argmin = d.clone();
    for k in 1..=iters + 1 {
        let (v, active) = flat.eval(&d, &mut bd, &mut scratch);
        if v < value {
            value = v;
            argmin.copy_from_slice(&d);
        }
        if k > iters {
            break;
        }
        let step = c / (k as f64).sqrt();
        let lin = &flat.lin[active * n..(active + 1) * n];
        for j in 0..n {
            d[j] -= step * (lin[j] + bd[j] + omega * d[j]);
        }
    }
    Ok(OracleReport {
        value,
        argmin: DVector::from_vec(argmin),
        evaluations: iters + 1,
        method: OracleMethod::Subgradient,
    })
}

/// Radius of a ball certain to contain the minimizer of `φ`.
pub fn minimizer_radius(pieces: &[QuadraticPiece], omega: f64) -> f64 {
    // φ(d) ≥ min_p c_p − max‖lin‖‖d‖ + (ω/2)‖d‖² and φ(d*) ≤ φ(0) ≤ 0
    let lin = pieces.iter().map(|q| q.lin.norm()).fold(0.0, f64::max);
    let cmin = pieces.iter().map(|q| q.c).fold(0.0, f64::min);
    (lin + (lin * lin - 2.0 * omega * cmin).sqrt()) / omega
}

/// Golden-section search for the minimum of a unimodal `f` on `[lo, hi]`.
fn golden(mut f: impl FnMut(f64) -> f64, mut lo: f64, mut hi: f64, rounds: usize) -> (f64, f64) {
    let r = 0.5 * (5f64.sqrt() - 1.0);
    let mut a = hi - r * (hi - lo);
    let mut b = lo + r * (hi - lo);
    let (mut fa, mut fb) = (f(a), f(b));
    for _ in 0..rounds {
        if fa <= fb {
            hi = b;
            b = a;
            fb = fa;
            a = hi - r * (hi - lo);
            fa = f(a);
        } else {
            lo = a;
            a = b;
            fa = fb;
            b = lo + r * (hi - lo);
            fb = f(b);
        }
    }
    if fa <= fb {
        (a, fa)
    } else {
        (b, fb)
    }
}

/// Exhaustive search over a `resolution^n` grid on `[−r, r]^n` (`n ≤ 2`), then
/// refinement by nested golden-section search over the same box. `φ` is convex,
/// so each coordinate-wise partial minimum is unimodal and the nested search
/// is exact up to rounding, kinks included.
pub fn grid_oracle(
    pieces: &[QuadraticPiece],
    metrics: &MetricSet,
    omega: f64,
    box_radius: f64,
    resolution: usize,
) -> Result<OracleReport> {
    let flat = Flat::new(pieces, metrics, omega)?;
    let n = flat.n;
    if n > 2 {
        return Err(Error::Capacity(format!("grid oracle needs n <= 2, got {n}")));
    }
    if !(2..=MAX_GRID_RESOLUTION).contains(&resolution) {
        return Err(Error::Capacity(format!(
            "grid resolution must be in 2..={MAX_GRID_RESOLUTION}, got {resolution}"
        )));
    }
    if !(box_radius > 0.0) {
        return Err(Error::InvalidArgument("box radius must be positive".into()));
    }
    let step = 2.0 * box_radius / (resolution - 1) as f64;
    let coord = |k: usize| -box_radius + step * k as f64;
    let mut evaluations = 0;
    let mut value = f64::INFINITY;
    let mut argmin = vec![0.0; n];
    let mut d = vec![0.0; n];
    for idx in 0..resolution.pow(n as u32) {
        let mut rest = idx;
        for dj in d.iter_mut() {
            *dj = coord(rest % resolution);
            rest /= resolution;
        }
        let v = flat.value(&d);
        evaluations += 1;
        if v < value {
            value = v;
            argmin.copy_from_slice(&d);
        }
    }

    let (lo, hi) = (-box_radius, box_radius);
    let mut count = 0;
    let refined = if n == 1 {
        let (t, v) = golden(
            |t| {
                count += 1;
                flat.value(&[t])
            },
            lo,
            hi,
            GOLDEN_ROUNDS,
        );
        (vec![t], v)
    } else {
        let inner = |t: f64, count: &mut usize| {
            golden(
                |u| {
                    *count += 1;
                    flat.value(&[t, u])
                },
                lo,
                hi,
                GOLDEN_ROUNDS,
            )
        };
        let (t, _) = golden(|t| inner(t, &mut count).1, lo, hi, GOLDEN_ROUNDS);
        let (u, v) = inner(t, &mut count);
        (vec![t, u], v)
    };
    evaluations += count;
    if refined.1 < value {
        value = refined.1;
        argmin = refined.0;
    }
    Ok(OracleReport {
        value,
        argmin: DVector::from_vec(argmin),
        evaluations,
        method: OracleMethod::Grid,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Certificate {
    pub stationary: bool,
    /// The smaller of the two upper estimates of `β_ω(x)`.
    pub beta_est: f64,
}

/// Certifies stationarity through `β_ω(x) ≥ −tol` with identity metrics, using
/// both the dual solver from a random start and the subgradient oracle.
pub fn stationarity_certificate(
    x: &DVector<f64>,
    p: &ProblemInstance,
    omega: f64,
    tol: f64,
) -> Result<Certificate> {
    let metrics = MetricSet::identity(p.m(), p.n());
    let pieces = build_pieces(x, p, &metrics)?;
    let seed = x.iter().fold(0x9e37_79b9_7f4a_7c15u64, |h, v| {
        (h ^ v.to_bits()).wrapping_mul(0x100_0000_01b3)
    });
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let init: Vec<f64> = (0..pieces.len()).map(|_| Exp1.sample(&mut rng)).collect();
    let opts = SolveOptions {
        init: Some(init),
        ..SolveOptions::default()
    };
    let solved = solve_direction(x, p, &metrics, omega, &opts)?;
    let oracle = subgradient_oracle(&pieces, &metrics, omega, CERTIFICATE_ITERS)?;
    Ok(Certificate {
        stationary: solved.beta.max(oracle.value) >= -tol,
        beta_est: solved.beta.min(oracle.value),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::QuadraticObjective;
    use nalgebra::DMatrix;

    fn one_d(lin: f64, c: f64) -> QuadraticPiece {
        QuadraticPiece {
            lin: DVector::from_element(1, lin),
            metric_index: 0,
            c,
        }
    }

    #[test]
    fn subgradient_single_piece() {
        let r = subgradient_oracle(&[one_d(2.0, 0.0)], &MetricSet::identity(1, 1), 1.0, 100_000).unwrap();
        assert!((r.value + 1.0).abs() <= 1e-4);
        assert!(r.value >= -1.0);
        assert_eq!(r.method, OracleMethod::Subgradient);
    }

    #[test]
    fn subgradient_symmetric_pieces() {
        let pieces = [one_d(1.0, 0.0), one_d(-1.0, 0.0)];
        let r = subgradient_oracle(&pieces, &MetricSet::identity(1, 1), 1.0, 10_000).unwrap();
        assert!(r.value.abs() <= 1e-6);
    }

    #[test]
    fn grid_single_piece() {
        let pieces = [one_d(2.0, 0.0)];
        let r = grid_oracle(&pieces, &MetricSet::identity(1, 1), 1.0, minimizer_radius(&pieces, 1.0), 2001).unwrap();
        assert!((r.value + 1.0).abs() <= 1e-6);
        assert!((r.argmin[0] + 1.0).abs() <= 1e-3);
    }

    #[test]
    fn grid_at_stationary_point() {
        let g = QuadraticObjective::new(DMatrix::identity(2, 2), DVector::from_vec(vec![1.0, 1.0])).unwrap();
        let p = ProblemInstance::smooth_only(vec![g]).unwrap();
        let ms = MetricSet::identity(1, 2);
        let pieces = build_pieces(&DVector::from_vec(vec![-1.0, -1.0]), &p, &ms).unwrap();
        let r = grid_oracle(&pieces, &ms, 1.0, 1.0, 101).unwrap();
        assert!(r.value >= -1e-8);
        assert!(r.argmin.norm() <= 1e-6);
    }

    #[test]
    fn grid_rejects_large_inputs() {
        let wide = QuadraticPiece {
            lin: DVector::zeros(3),
            metric_index: 0,
            c: 0.0,
        };
        assert!(matches!(
            grid_oracle(&[wide], &MetricSet::identity(1, 3), 1.0, 1.0, 11),
            Err(Error::Capacity(_))
        ));
        assert!(matches!(
            grid_oracle(&[one_d(1.0, 0.0)], &MetricSet::identity(1, 1), 1.0, 1.0, 5000),
            Err(Error::Capacity(_))
        ));
    }

    #[test]
    fn radius_contains_minimizer() {
        let pieces = [one_d(3.0, -0.5), one_d(-1.0, 0.0)];
        let r = minimizer_radius(&pieces, 2.0);
        let g = grid_oracle(&pieces, &MetricSet::identity(1, 1), 2.0, 2.0 * r, 2001).unwrap();
        assert!(g.argmin.norm() <= r);
    }

    #[test]
    fn certificate_examples() {
        let q = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let lin = DVector::from_vec(vec![1.0, -2.0]);
        let xstar = -q.clone().lu().solve(&lin).unwrap();
        let p = ProblemInstance::smooth_only(vec![QuadraticObjective::new(q, lin).unwrap()]).unwrap();
        let c = stationarity_certificate(&xstar, &p, 5.0, 1e-10).unwrap();
        assert!(c.stationary);

        let far = DVector::from_vec(vec![30.0, -40.0]);
        let c = stationarity_certificate(&far, &p, 5.0, 1e-10).unwrap();
        assert!(!c.stationary);
        assert!(c.beta_est < 0.0);

        let scalar = |l: f64| {
            QuadraticObjective::new(DMatrix::identity(1, 1), DVector::from_element(1, l)).unwrap()
        };
        let bi = ProblemInstance::smooth_only(vec![scalar(0.0), scalar(-2.0)]).unwrap();
        let c = stationarity_certificate(&DVector::from_element(1, 1.0), &bi, 5.0, 1e-10).unwrap();
        assert!(c.stationary);
        let c = stationarity_certificate(&DVector::from_element(1, 3.0), &bi, 5.0, 1e-10).unwrap();
        assert!(!c.stationary);
    }
}
