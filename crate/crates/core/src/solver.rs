//! Outer iteration: proximal quasi-Newton directions with either an Armijo
//! line search or a unit step.

use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::metric::{huang_theta_from_decrease, lipschitz_bound, MetricSet, UpdateKind};
use crate::problem::ProblemInstance;
use crate::subproblem::{solve_direction, SolveOptions};

/// Inner tolerance `min(abs, rel·ω·max(‖d_prev‖², floor))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SubTolerance {
    pub abs: f64,
    pub rel: f64,
    pub floor: f64,
    /// Dual evaluation budget per solve.
    pub max_iter: usize,
}

impl Default for SubTolerance {
    fn default() -> Self {
        Self {
            abs: 1e-12,
            rel: 1e-4,
            floor: 1e-8,
            max_iter: 100_000,
        }
    }
}

impl SubTolerance {
    pub fn at(&self, omega: f64, prev_d_norm: Option<f64>) -> f64 {
        match prev_d_norm {
            Some(d) => self.abs.min(self.rel * omega * (d * d).max(self.floor)),
            None => self.abs,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub method: UpdateKind,
    pub line_search: bool,
    pub omega: f64,
    pub tau: f64,
    pub zeta: f64,
    /// Stop once `‖d‖ < eps`.
    pub eps: f64,
    pub max_iter: usize,
    pub max_backtracks: usize,
    pub sub_tol: SubTolerance,
    /// In fixed-step mode, replace `ω` by `1.01·L/2`.
    pub auto_omega: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            method: UpdateKind::Bfgs,
            line_search: true,
            omega: 5.0,
            tau: 0.5,
            zeta: 0.5,
            eps: 1e-6,
            max_iter: 10_000,
            max_backtracks: 60,
            sub_tol: SubTolerance::default(),
            auto_omega: false,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let open_unit = |name: &str, v: f64| {
            if v > 0.0 && v < 1.0 {
                Ok(())
            } else {
                Err(Error::InvalidArgument(format!("{name} must lie in (0, 1), got {v}")))
            }
        };
        open_unit("tau", self.tau)?;
        open_unit("zeta", self.zeta)?;
        if !(self.omega > 0.0 && self.omega.is_finite()) {
            return Err(Error::InvalidArgument(format!("omega must be positive, got {}", self.omega)));
        }
        if !(self.eps > 0.0 && self.eps.is_finite()) {
            return Err(Error::InvalidArgument(format!("eps must be positive, got {}", self.eps)));
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidArgument("max_iter must be at least 1".into()));
        }
        if !(self.sub_tol.abs > 0.0) || !(self.sub_tol.rel > 0.0) || !(self.sub_tol.floor > 0.0) {
            return Err(Error::InvalidArgument("subproblem tolerances must be positive".into()));
        }
        Ok(())
    }

    /// The `ω` a run with this configuration uses on `p`.
    pub fn effective_omega(&self, p: &ProblemInstance) -> f64 {
        if self.auto_omega && !self.line_search {
            1.01 * lipschitz_bound(p) / 2.0
        } else {
            self.omega
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Status {
    Stationary,
    MaxIter,
    LineSearchFailure,
    SubproblemFailure,
}

impl Status {
    pub fn name(self) -> &'static str {
        match self {
            Status::Stationary => "stationary",
            Status::MaxIter => "max_iter",
            Status::LineSearchFailure => "line_search_failure",
            Status::SubproblemFailure => "subproblem_failure",
        }
    }
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Status {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [Status::Stationary, Status::MaxIter, Status::LineSearchFailure, Status::SubproblemFailure]
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown status {s:?}")))
    }
}

/// One direction solve. `step` is `None` on the terminating record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub iteration: usize,
    pub d_norm: f64,
    pub beta: f64,
    pub theta: f64,
    pub gap: f64,
    pub step: Option<f64>,
    pub backtracks: usize,
    /// `F(x^k)` at the point the direction was computed.
    pub f: Vec<f64>,
    pub x: Vec<f64>,
    pub subproblem_iterations: usize,
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub x_final: DVector<f64>,
    pub f_final: DVector<f64>,
    pub iterations: usize,
    pub status: Status,
    pub trace: Vec<TraceRecord>,
    pub wallclock: Duration,
    /// The `ω` actually used.
    pub omega: f64,
    pub warnings: Vec<String>,
    /// Message of the error behind a failure status.
    pub failure: Option<String>,
}

/// Backtracks `λ = ζ^j`, `j = 0, 1, …` until
/// `F_i(x + λd) ≤ F_i(x) + λτθ` for every `i`. Returns `(λ, j)`.
pub fn armijo_search(
    x: &DVector<f64>,
    d: &DVector<f64>,
    theta: f64,
    p: &ProblemInstance,
    tau: f64,
    zeta: f64,
    max_backtracks: usize,
) -> Result<(f64, usize)> {
    check_dim(p.n(), x.len())?;
    check_dim(p.n(), d.len())?;
    let f0 = p.eval(x)?;
    let mut step = 1.0;
    for j in 0..=max_backtracks {
        if armijo_accepts(p, x, d, &f0, step, tau, theta)? {
            return Ok((step, j));
        }
        if j < max_backtracks {
            step *= zeta;
        }
    }
    Err(Error::LineSearch {
        last_step: step,
        backtracks: max_backtracks,
    })
}

/// Whether step `λ` satisfies the sufficient decrease condition for every objective.
pub fn armijo_accepts(
    p: &ProblemInstance,
    x: &DVector<f64>,
    d: &DVector<f64>,
    f0: &DVector<f64>,
    step: f64,
    tau: f64,
    theta: f64,
) -> Result<bool> {
    let f1 = p.eval(&(x + d * step))?;
    Ok(f1.iter().zip(f0.iter()).all(|(a, b)| *a <= b + step * tau * theta))
}

pub fn run(p: &ProblemInstance, x0: &DVector<f64>, cfg: &SolverConfig) -> Result<RunResult> {
    run_with_observer(p, x0, cfg, |_| {})
}

/// The proximal gradient baseline: `run` with `B_i ≡ 0`.
pub fn pgm_baseline(p: &ProblemInstance, x0: &DVector<f64>, cfg: &SolverConfig) -> Result<RunResult> {
    run(
        p,
        x0,
        &SolverConfig {
            method: UpdateKind::FrozenZero,
            ..cfg.clone()
        },
    )
}

/// `run`, calling `observe` on each trace record as it is produced.
pub fn run_with_observer(
    p: &ProblemInstance,
    x0: &DVector<f64>,
    cfg: &SolverConfig,
    mut observe: impl FnMut(&TraceRecord),
) -> Result<RunResult> {
    cfg.validate()?;
    check_dim(p.n(), x0.len())?;
    if x0.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("x0 must be finite".into()));
    }
    let start = Instant::now();
    let omega = cfg.effective_omega(p);
    let mut warnings = Vec::new();
    if !cfg.line_search {
        let l = lipschitz_bound(p);
        if omega <= l / 2.0 {
            let msg = format!("fixed step with omega = {omega} <= L/2 = {}", l / 2.0);
            log::warn!("{msg}");
            warnings.push(msg);
        }
    }

    let (m, n) = (p.m(), p.n());
    let mut metrics = MetricSet::initial(cfg.method, m, n);
    let mut x = x0.clone();
    let mut fx = p.eval(&x)?;
    let mut trace = Vec::new();
    let mut prev_d_norm = None;
    let mut status = Status::MaxIter;
    let mut failure = None;

    for k in 0..cfg.max_iter {
        let opts = SolveOptions {
            tol: cfg.sub_tol.at(omega, prev_d_norm),
            max_iter: cfg.sub_tol.max_iter,
            init: None,
        };
        let sol = match solve_direction(&x, p, &metrics, omega, &opts) {
            Ok(sol) => sol,
            Err(e) => {
                status = Status::SubproblemFailure;
                failure = Some(e.to_string());
                break;
            }
        };
        let d_norm = sol.d.norm();
        let mut record = TraceRecord {
            iteration: k,
            d_norm,
            beta: sol.beta,
            theta: sol.theta,
            gap: sol.gap,
            step: None,
            backtracks: 0,
            f: fx.iter().copied().collect(),
            x: x.iter().copied().collect(),
            subproblem_iterations: sol.iterations,
        };
        if d_norm < cfg.eps {
            observe(&record);
            trace.push(record);
            status = Status::Stationary;
            break;
        }

        let (step, backtracks) = if cfg.line_search {
            match armijo_search(&x, &sol.d, sol.theta, p, cfg.tau, cfg.zeta, cfg.max_backtracks) {
                Ok(r) => r,
                Err(e) => {
                    observe(&record);
                    trace.push(record);
                    status = Status::LineSearchFailure;
                    failure = Some(e.to_string());
                    break;
                }
            }
        } else {
            (1.0, 0)
        };
        record.step = Some(step);
        record.backtracks = backtracks;
        observe(&record);
        trace.push(record);

        let s = &sol.d * step;
        if cfg.method != UpdateKind::FrozenZero {
            for (i, g) in p.smooth().iter().enumerate() {
                let y = g.gradient_change(&s)?;
                let theta = if cfg.method == UpdateKind::HBfgs {
                    let grad_k = g.gradient(&x)?;
                    let grad_k1 = &grad_k + &y;
                    huang_theta_from_decrease(g.decrease(&x, &s)?, &grad_k, &grad_k1, &s)
                } else {
                    0.0
                };
                metrics.update(i, cfg.method, &s, &y, theta);
            }
        }
        x += &s;
        fx = p.eval(&x)?;
        prev_d_norm = Some(d_norm);
    }

    Ok(RunResult {
        iterations: trace.len(),
        f_final: fx,
        x_final: x,
        status,
        trace,
        wallclock: start.elapsed(),
        omega,
        warnings,
        failure,
    })
}
