//! The direction subproblem `min_d θ_x(d) + (ω/2)‖d‖²`.
//!
//! With piecewise-affine `h_i`, `θ_x` is the pointwise max of convex quadratic
//! pieces `lin_pᵀd + ½dᵀB_{i(p)}d + c_p`, one per (objective, affine piece) pair.
//! The solver works on the Lagrangian dual over simplex weights `λ`:
//!
//! ```text
//! H(λ) = ωI + Σ_p λ_p B_{i(p)},   d(λ) = −H(λ)⁻¹ Σ_p λ_p lin_p
//! ψ(λ) = Σ_p λ_p piece_p(d(λ)) + (ω/2)‖d(λ)‖²
//! ```
//!
//! `ψ` is concave and smooth with gradient `(piece_p(d(λ)))_p`, so it is
//! maximized by projected gradient ascent followed by Newton steps on the face
//! spanned by the current support. The duality gap
//! `φ(d(λ)) − ψ(λ) = max_p v_p − Σ_p λ_p v_p` (with `v_p = piece_p(d(λ))`) is
//! the stopping certificate; by strong convexity it bounds
//! `‖d(λ) − d*‖² ≤ 2·gap/ω`.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{check_dim, Error, Result};
use crate::metric::MetricSet;
use crate::problem::ProblemInstance;

/// Pieces with `c` at least this large are active at `d = 0`.
const ACTIVE_TOL: f64 = 1e-12;
const NEWTON_STEPS: usize = 30;
const GRADIENT_CHUNK: usize = 60;

/// `piece(d) = linᵀd + ½dᵀB_{metric_index}d + c`
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticPiece {
    pub lin: DVector<f64>,
    pub metric_index: usize,
    pub c: f64,
}

impl QuadraticPiece {
    pub fn value(&self, d: &DVector<f64>, metrics: &MetricSet) -> f64 {
        let b = metrics.get(self.metric_index);
        let curv = if metrics.is_frozen() { 0.0 } else { d.dot(&(b * d)) };
        self.lin.dot(d) + 0.5 * curv + self.c
    }
}

/// Pieces of `θ_x` at `x`: for objective `i` and affine piece `(a, b)` of `h_i`,
/// `lin = ∇g_i(x) + a` and `c = aᵀx + b − h_i(x)`.
pub fn build_pieces(
    x: &DVector<f64>,
    p: &ProblemInstance,
    metrics: &MetricSet,
) -> Result<Vec<QuadraticPiece>> {
    check_dim(p.n(), x.len())?;
    check_dim(p.m(), metrics.len())?;
    check_dim(p.n(), metrics.dim())?;
    let mut pieces = Vec::new();
    for (i, (g, h)) in p.smooth().iter().zip(p.nonsmooth()).enumerate() {
        let grad = g.gradient(x)?;
        let hx = h.value(x)?;
        for piece in h.pieces() {
            pieces.push(QuadraticPiece {
                lin: &grad + &piece.slope,
                metric_index: i,
                c: (piece.value(x) - hx).min(0.0),
            });
        }
    }
    Ok(pieces)
}

/// `max_p piece_p(d)`
pub fn piece_max(pieces: &[QuadraticPiece], metrics: &MetricSet, d: &DVector<f64>) -> f64 {
    pieces
        .iter()
        .map(|q| q.value(d, metrics))
        .fold(f64::NEG_INFINITY, f64::max)
}

/// `θ_x(d) = max_i {∇g_i(x)ᵀd + ½dᵀB_id + h_i(x+d) − h_i(x)}`, evaluated directly.
pub fn theta_at(
    x: &DVector<f64>,
    d: &DVector<f64>,
    p: &ProblemInstance,
    metrics: &MetricSet,
) -> Result<f64> {
    check_dim(p.n(), x.len())?;
    check_dim(p.n(), d.len())?;
    check_dim(p.m(), metrics.len())?;
    let xd = x + d;
    let mut theta = f64::NEG_INFINITY;
    for (i, (g, h)) in p.smooth().iter().zip(p.nonsmooth()).enumerate() {
        let curv = if metrics.is_frozen() {
            0.0
        } else {
            d.dot(&(metrics.get(i) * d))
        };
        let t = g.gradient(x)?.dot(d) + 0.5 * curv + h.value(&xd)? - h.value(x)?;
        theta = theta.max(t);
    }
    Ok(theta)
}

#[derive(Debug, Clone)]
pub struct SolveOptions {
    /// Target duality gap.
    pub tol: f64,
    /// Budget of dual evaluations.
    pub max_iter: usize,
    /// Starting weights, projected onto the simplex. Defaults to uniform weights
    /// over the pieces active at `d = 0`.
    pub init: Option<Vec<f64>>,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            tol: 1e-12,
            max_iter: 100_000,
            init: None,
        }
    }
}

/// Result of a subproblem solve at `x`.
#[derive(Debug, Clone, PartialEq)]
pub struct SubproblemSolution {
    pub d: DVector<f64>,
    /// `φ_{ω,x}(d) = θ_x(d) + (ω/2)‖d‖²`
    pub beta: f64,
    /// `θ_x(d)`
    pub theta: f64,
    /// Dual weights, one per piece.
    pub weights: Vec<f64>,
    /// Certified duality gap.
    pub gap: f64,
    /// Dual value `ψ(weights)`, a lower bound on the optimal value.
    pub psi: f64,
    /// Dual evaluations used.
    pub iterations: usize,
}

/// Result of solving over an explicit list of pieces.
#[derive(Debug, Clone, PartialEq)]
pub struct PieceSolution {
    pub d: DVector<f64>,
    /// `max_p piece_p(d) + (ω/2)‖d‖²`
    pub phi: f64,
    pub weights: Vec<f64>,
    pub gap: f64,
    pub psi: f64,
    pub iterations: usize,
}

/// Solves for the proximal quasi-Newton direction at `x`.
pub fn solve_direction(
    x: &DVector<f64>,
    p: &ProblemInstance,
    metrics: &MetricSet,
    omega: f64,
    opts: &SolveOptions,
) -> Result<SubproblemSolution> {
    let pieces = build_pieces(x, p, metrics)?;
    let finish = |sol: PieceSolution| -> Result<SubproblemSolution> {
        let theta = theta_at(x, &sol.d, p, metrics)?;
        Ok(SubproblemSolution {
            beta: theta + 0.5 * omega * sol.d.norm_squared(),
            theta,
            d: sol.d,
            weights: sol.weights,
            gap: sol.gap,
            psi: sol.psi,
            iterations: sol.iterations,
        })
    };
    match solve_pieces(&pieces, metrics, omega, opts) {
        Ok(sol) => finish(sol),
        Err(Error::NoConvergence { iterations, gap, best }) => Err(Error::NoConvergence {
            iterations,
            gap,
            best: Box::new(SubproblemSolution {
                theta: theta_at(x, &best.d, p, metrics)?,
                ..*best
            }),
        }),
        Err(e) => Err(e),
    }
}

/// `ψ(λ)` and the inner minimizer `d(λ)`.
pub fn dual_value(
    weights: &[f64],
    pieces: &[QuadraticPiece],
    metrics: &MetricSet,
    omega: f64,
) -> Result<(f64, DVector<f64>)> {
    check_dim(pieces.len(), weights.len())?;
    let sum: f64 = weights.iter().sum();
    if weights.iter().any(|&w| !(w >= 0.0)) || (sum - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidArgument("weights must lie on the simplex".into()));
    }
    let dual = Dual::new(pieces, metrics, omega)?;
    let pt = dual.eval(weights.to_vec())?;
    Ok((pt.psi, pt.d))
}

/// Solves `min_d max_p piece_p(d) + (ω/2)‖d‖²`.
pub fn solve_pieces(
    pieces: &[QuadraticPiece],
    metrics: &MetricSet,
    omega: f64,
    opts: &SolveOptions,
) -> Result<PieceSolution> {
    let dual = Dual::new(pieces, metrics, omega)?;
    let init = match &opts.init {
        Some(w) => {
            check_dim(pieces.len(), w.len())?;
            if w.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidArgument("non-finite initial weights".into()));
            }
            project_simplex(w)
        }
        None => dual.active_uniform(),
    };
    let mut solver = DualSolver {
        dual: &dual,
        evals: 0,
        budget: opts.max_iter.max(1),
    };
    solver.run(init, opts.tol)
}

/// Euclidean projection onto the probability simplex (sort-based).
pub fn project_simplex(v: &[f64]) -> Vec<f64> {
    let mut u = v.to_vec();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut tau = 0.0;
    for (j, &uj) in u.iter().enumerate() {
        cumsum += uj;
        let t = (cumsum - 1.0) / (j + 1) as f64;
        if uj - t > 0.0 {
            tau = t;
        }
    }
    v.iter().map(|&vi| (vi - tau).max(0.0)).collect()
}

struct Dual<'a> {
    pieces: &'a [QuadraticPiece],
    metrics: &'a MetricSet,
    omega: f64,
    n: usize,
}

#[derive(Clone)]
struct Point {
    lambda: Vec<f64>,
    d: DVector<f64>,
    values: Vec<f64>,
    psi: f64,
    gap: f64,
    /// Roundoff scale of the piece values.
    scale: f64,
    chol: Cholesky<f64, Dyn>,
}

impl Point {
    fn argmax(&self) -> usize {
        let mut best = 0;
        for (p, &v) in self.values.iter().enumerate() {
            if v > self.values[best] {
                best = p;
            }
        }
        best
    }

    fn phi(&self, omega: f64) -> f64 {
        self.values[self.argmax()] + 0.5 * omega * self.d.norm_squared()
    }
}

impl<'a> Dual<'a> {
    fn new(pieces: &'a [QuadraticPiece], metrics: &'a MetricSet, omega: f64) -> Result<Self> {
        if !(omega > 0.0) || !omega.is_finite() {
            return Err(Error::InvalidArgument(format!("ω must be positive, got {omega}")));
        }
        let first = pieces
            .first()
            .ok_or_else(|| Error::InvalidArgument("no pieces".into()))?;
        let n = first.lin.len();
        check_dim(n, metrics.dim())?;
        for q in pieces {
            check_dim(n, q.lin.len())?;
            if q.metric_index >= metrics.len() {
                return Err(Error::InvalidArgument(format!(
                    "piece refers to metric {} of {}",
                    q.metric_index,
                    metrics.len()
                )));
            }
            if !q.c.is_finite() || q.lin.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidArgument("non-finite piece".into()));
            }
        }
        Ok(Self {
            pieces,
            metrics,
            omega,
            n,
        })
    }

    fn active_uniform(&self) -> Vec<f64> {
        let active: Vec<bool> = self.pieces.iter().map(|q| q.c >= -ACTIVE_TOL).collect();
        let count = active.iter().filter(|&&a| a).count();
        if count == 0 {
            return vec![1.0 / self.pieces.len() as f64; self.pieces.len()];
        }
        active
            .iter()
            .map(|&a| if a { 1.0 / count as f64 } else { 0.0 })
            .collect()
    }

    fn eval(&self, lambda: Vec<f64>) -> Result<Point> {
        let m = self.metrics.len();
        let mut per_metric = vec![0.0; m];
        let mut g = DVector::zeros(self.n);
        for (q, &w) in self.pieces.iter().zip(&lambda) {
            if w != 0.0 {
                per_metric[q.metric_index] += w;
                g.axpy(w, &q.lin, 1.0);
            }
        }
        let mut h = DMatrix::identity(self.n, self.n) * self.omega;
        if !self.metrics.is_frozen() {
            for (i, &w) in per_metric.iter().enumerate() {
                if w != 0.0 {
                    h += self.metrics.get(i) * w;
                }
            }
        }
        let chol = h
            .cholesky()
            .ok_or_else(|| Error::NotPositiveDefinite("dual Hessian ωI + Σλ_pB_p".into()))?;
        let d = -chol.solve(&g);
        let curv: Vec<f64> = (0..m)
            .map(|i| {
                if self.metrics.is_frozen() {
                    0.0
                } else {
                    d.dot(&(self.metrics.get(i) * &d))
                }
            })
            .collect();
        let d_norm = d.norm();
        let mut scale: f64 = 0.0;
        let values: Vec<f64> = self
            .pieces
            .iter()
            .map(|q| {
                let ld = q.lin.dot(&d);
                let half = 0.5 * curv[q.metric_index];
                scale = scale.max(q.lin.norm() * d_norm + half.abs() + q.c.abs());
                ld + half + q.c
            })
            .collect();
        let vmax = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let weighted: f64 = lambda.iter().zip(&values).map(|(w, v)| w * v).sum();
        let gap: f64 = lambda.iter().zip(&values).map(|(w, v)| w * (vmax - v)).sum();
        Ok(Point {
            psi: weighted + 0.5 * self.omega * d.norm_squared(),
            lambda,
            d,
            values,
            gap,
            scale,
            chol,
        })
    }

    /// Columns `lin_p + B_{i(p)} d` for `p ∈ support`.
    fn jacobian(&self, pt: &Point, support: &[usize]) -> DMatrix<f64> {
        let mut j = DMatrix::zeros(self.n, support.len());
        for (k, &p) in support.iter().enumerate() {
            let q = &self.pieces[p];
            let mut col = q.lin.clone();
            if !self.metrics.is_frozen() {
                col += self.metrics.get(q.metric_index) * &pt.d;
            }
            j.set_column(k, &col);
        }
        j
    }
}

struct DualSolver<'a, 'b> {
    dual: &'b Dual<'a>,
    evals: usize,
    budget: usize,
}

impl DualSolver<'_, '_> {
    fn eval(&mut self, lambda: Vec<f64>) -> Result<Point> {
        self.evals += 1;
        self.dual.eval(lambda)
    }

    /// Gap target, never below the roundoff level of the piece values.
    fn target(tol: f64, pt: &Point) -> f64 {
        tol.max(8.0 * f64::EPSILON * pt.scale)
    }

    fn finish(&self, pt: Point) -> PieceSolution {
        PieceSolution {
            phi: pt.phi(self.dual.omega),
            d: pt.d,
            weights: pt.lambda,
            gap: pt.gap,
            psi: pt.psi,
            iterations: self.evals,
        }
    }

    fn run(&mut self, init: Vec<f64>, tol: f64) -> Result<PieceSolution> {
        let mut best = self.eval(init)?;
        if best.gap <= Self::target(tol, &best) {
            return Ok(self.finish(best));
        }
        loop {
            let polished = self.newton(best.clone(), tol)?;
            if polished.gap < best.gap {
                best = polished;
            }
            if best.gap <= Self::target(tol, &best) {
                return Ok(self.finish(best));
            }
            if self.evals >= self.budget {
                break;
            }
            let ascended = self.gradient_ascent(best.clone(), tol)?;
            if ascended.gap < best.gap || ascended.psi > best.psi {
                best = ascended;
            }
            if best.gap <= Self::target(tol, &best) {
                return Ok(self.finish(best));
            }
            if self.evals >= self.budget {
                break;
            }
        }
        Err(Error::NoConvergence {
            iterations: self.evals,
            gap: best.gap,
            best: Box::new(SubproblemSolution {
                beta: best.phi(self.dual.omega),
                theta: f64::NAN,
                d: best.d,
                weights: best.lambda,
                gap: best.gap,
                psi: best.psi,
                iterations: self.evals,
            }),
        })
    }

    /// Newton ascent of `ψ` on the face of the current support plus the most
    /// violated piece, with a ratio test that drops pieces whose weight hits 0.
    fn newton(&mut self, start: Point, tol: f64) -> Result<Point> {
        let mut cur = start;
        let mut best = cur.clone();
        let mut stalls = 0;
        for _ in 0..NEWTON_STEPS {
            if cur.gap <= Self::target(tol, &cur) || self.evals >= self.budget {
                break;
            }
            let mut support: Vec<usize> = (0..cur.lambda.len()).filter(|&p| cur.lambda[p] > 0.0).collect();
            let top = cur.argmax();
            if !support.contains(&top) {
                support.push(top);
            }

            let Some(step) = self.newton_direction(&cur, &mut support) else {
                break;
            };

            // largest step keeping the weights nonnegative
            let mut alpha_max: f64 = 1.0;
            for (k, &p) in support.iter().enumerate() {
                if step[k] < 0.0 {
                    alpha_max = alpha_max.min(cur.lambda[p] / -step[k]);
                }
            }
            let mut alpha = alpha_max;
            let mut accepted = None;
            for _ in 0..40 {
                if alpha <= 0.0 {
                    break;
                }
                let mut lambda = cur.lambda.clone();
                for (k, &p) in support.iter().enumerate() {
                    lambda[p] += alpha * step[k];
                    if alpha == alpha_max && step[k] < 0.0 && cur.lambda[p] / -step[k] <= alpha_max {
                        lambda[p] = 0.0;
                    }
                }
                normalize(&mut lambda);
                let next = self.eval(lambda)?;
                // ψ is flat to roundoff near the optimum, so a smaller gap also counts
                if next.psi >= cur.psi - 4.0 * f64::EPSILON * cur.scale.max(cur.psi.abs()) || next.gap < cur.gap {
                    accepted = Some(next);
                    break;
                }
                alpha *= 0.5;
            }
            match accepted {
                Some(next) => {
                    if next.gap < best.gap {
                        best = next.clone();
                        stalls = 0;
                    } else {
                        stalls += 1;
                    }
                    cur = next;
                }
                None => break,
            }
            if stalls >= 4 {
                break;
            }
        }
        Ok(best)
    }

    /// Newton step for `ψ` restricted to `{Δ : Σ Δ = 0}` on the support.
    ///
    /// With `Δ = Z w`, `Z = [I; -1ᵀ]`, the reduced system is
    /// `(Zᵀ G Z) w = Zᵀ v_S` where `G = J_Sᵀ H⁻¹ J_S`. Along directions where the
    /// reduced Hessian vanishes `ψ` is linear, so the step goes to the boundary.
    fn newton_direction(&self, pt: &Point, support: &mut Vec<usize>) -> Option<Vec<f64>> {
        loop {
            let k = support.len();
            if k < 2 {
                return None;
            }
            let j = self.dual.jacobian(pt, support);
            let hj = pt.chol.solve(&j);
            let g = j.transpose() * hj;
            let last = k - 1;
            let m = DMatrix::from_fn(last, last, |a, b| {
                g[(a, b)] - g[(a, last)] - g[(last, b)] + g[(last, last)]
            });
            let vl = pt.values[support[last]];
            let r = DVector::from_fn(last, |a, _| pt.values[support[a]] - vl);
            let eig = m.symmetric_eigen();
            let top = eig.eigenvalues.amax();
            let thresh = 1e-12 * top.max(f64::MIN_POSITIVE);
            let mut w = DVector::zeros(last);
            let mut flat = DVector::zeros(last);
            for i in 0..last {
                let q = eig.eigenvectors.column(i);
                let c = q.dot(&r);
                if eig.eigenvalues[i] > thresh {
                    w += q * (c / eig.eigenvalues[i]);
                } else {
                    flat += q * c;
                }
            }
            let linear = flat.norm() > 64.0 * f64::EPSILON * pt.scale.max(r.amax());
            let w = if linear { flat } else { w };
            let mut step: Vec<f64> = w.iter().copied().collect();
            step.push(-w.sum());
            if step.iter().any(|s| !s.is_finite()) {
                return None;
            }
            // A zero-weight piece the model wants to push negative leaves the face.
            let blocked: Vec<usize> = (0..k)
                .filter(|&i| step[i] < 0.0 && pt.lambda[support[i]] == 0.0)
                .collect();
            if !blocked.is_empty() {
                let drop: Vec<usize> = blocked.iter().map(|&i| support[i]).collect();
                support.retain(|p| !drop.contains(p));
                continue;
            }
            if linear {
                // scale so the ratio test stops exactly at the first zero weight
                let reach = (0..k)
                    .filter(|&i| step[i] < 0.0)
                    .map(|i| pt.lambda[support[i]] / -step[i])
                    .fold(f64::INFINITY, f64::min);
                if !reach.is_finite() {
                    return None;
                }
                step.iter_mut().for_each(|s| *s *= reach);
            }
            return Some(step);
        }
    }

    /// Accelerated projected gradient ascent with backtracking and restarts.
    fn gradient_ascent(&mut self, start: Point, tol: f64) -> Result<Point> {
        let omega = self.dual.omega;
        let mut lip = {
            let all: Vec<usize> = (0..start.lambda.len()).collect();
            let j = self.dual.jacobian(&start, &all);
            (j.norm_squared() / omega).max(1e-300)
        };
        let mut x = start.clone();
        let mut y = start;
        let mut t = 1.0f64;
        let mut best = x.clone();
        for _ in 0..GRADIENT_CHUNK {
            if best.gap <= Self::target(tol, &best) || self.evals >= self.budget {
                break;
            }
            let next = loop {
                let trial: Vec<f64> = y
                    .lambda
                    .iter()
                    .zip(&y.values)
                    .map(|(l, v)| l + v / lip)
                    .collect();
                let lambda = project_simplex(&trial);
                let cand = self.eval(lambda)?;
                let diff: Vec<f64> = cand.lambda.iter().zip(&y.lambda).map(|(a, b)| a - b).collect();
                let lin: f64 = diff.iter().zip(&y.values).map(|(d, v)| d * v).sum();
                let sq: f64 = diff.iter().map(|d| d * d).sum();
                let slack = 4.0 * f64::EPSILON * y.scale.max(y.psi.abs());
                if cand.psi >= y.psi + lin - 0.5 * lip * sq - slack || self.evals >= self.budget {
                    break cand;
                }
                lip *= 2.0;
            };
            let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
            if next.psi < x.psi {
                // restart momentum
                t = 1.0;
                y = next.clone();
            } else {
                let beta = (t - 1.0) / t_next;
                let mut lambda: Vec<f64> = next
                    .lambda
                    .iter()
                    .zip(&x.lambda)
                    .map(|(a, b)| a + beta * (a - b))
                    .collect();
                lambda = project_simplex(&lambda);
                y = self.eval(lambda)?;
                t = t_next;
            }
            if next.gap < best.gap {
                best = next.clone();
            }
            x = next;
            lip *= 0.7;
        }
        Ok(best)
    }
}

fn normalize(lambda: &mut [f64]) {
    for w in lambda.iter_mut() {
        if *w < 0.0 {
            *w = 0.0;
        }
    }
    let sum: f64 = lambda.iter().sum();
    if sum > 0.0 {
        lambda.iter_mut().for_each(|w| *w /= sum);
    }
}
