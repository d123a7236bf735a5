//! Seeded instance generation, batch runs, Pareto filtering and output files.
//!
//! # Reproducibility
//!
//! Every random draw comes from ChaCha20 (`rand_chacha::ChaCha20Rng`) seeded
//! with `seed_from_u64(seed)`. Run `r` uses two streams of that generator:
//! stream `2r` for the instance and stream `2r + 1` for the starting point
//! (with `fixed_instance`, every run takes its instance from stream 0).
//! Standard normals come from `rand_distr::StandardNormal`. Draw order on the
//! instance stream:
//!
//! 1. for each objective `i`: the entries of `M_i` row by row, redrawn while
//!    `σ_min(M_i) < 1e-8`, then the entries of `q_i`;
//! 2. for each odd objective index (the second, fourth, …): the entries of the
//!    transform `B` row by row, redrawn while its reciprocal condition number
//!    is below `1e-6`.
//!
//! `B` is drawn even when `δ = 0`, so instances differ across `δ` only in `h`.
//! Objectives with even index get `h_i` from the box `[−δ, δ]ⁿ` and odd ones
//! from `{u : Bu ∈ [−δ, δ]ⁿ}`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::metric::UpdateKind;
use crate::problem::{ProblemInstance, QuadraticObjective};
use crate::solver::{run, RunResult, SolverConfig, Status};
use crate::uncertainty::{reciprocal_condition, UncertaintySet};

const MAX_REDRAWS: usize = 100;
const MIN_SINGULAR: f64 = 1e-8;
const MIN_TRANSFORM_RCOND: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub n: usize,
    pub m: usize,
    pub runs: usize,
    pub deltas: Vec<f64>,
    pub methods: Vec<UpdateKind>,
    /// Step modes to run: `true` for Armijo, `false` for unit steps.
    pub line_search: Vec<bool>,
    /// Method and mode fields are overridden per job.
    pub solver: SolverConfig,
    pub fixed_instance: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            n: 5,
            m: 2,
            runs: 100,
            deltas: vec![0.0, 0.05, 0.1],
            methods: UpdateKind::ALL.to_vec(),
            line_search: vec![true],
            solver: SolverConfig {
                auto_omega: true,
                ..SolverConfig::default()
            },
            fixed_instance: false,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.runs == 0 {
            return Err(Error::InvalidArgument("runs must be at least 1".into()));
        }
        if self.n == 0 || self.m == 0 {
            return Err(Error::InvalidArgument("n and m must be at least 1".into()));
        }
        if self.deltas.is_empty() || self.methods.is_empty() || self.line_search.is_empty() {
            return Err(Error::InvalidArgument("deltas, methods and modes must be nonempty".into()));
        }
        if let Some(d) = self.deltas.iter().find(|d| !(**d >= 0.0 && d.is_finite())) {
            return Err(Error::InvalidArgument(format!("delta must be finite and >= 0, got {d}")));
        }
        self.solver.validate()
    }

    /// Every (δ, method, mode, run) combination in output order.
    pub fn jobs(&self) -> Vec<Job> {
        let mut jobs = Vec::new();
        for &delta in &self.deltas {
            for &method in &self.methods {
                for &line_search in &self.line_search {
                    for run_id in 0..self.runs {
                        jobs.push(Job {
                            run_id,
                            delta,
                            method,
                            line_search,
                        });
                    }
                }
            }
        }
        jobs
    }

    pub fn solver_for(&self, job: &Job) -> SolverConfig {
        SolverConfig {
            method: job.method,
            line_search: job.line_search,
            ..self.solver.clone()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Job {
    pub run_id: usize,
    pub delta: f64,
    pub method: UpdateKind,
    pub line_search: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrontierRecord {
    pub run_id: usize,
    /// Empty for single solves outside an experiment.
    pub delta: Option<f64>,
    pub method: UpdateKind,
    pub line_search: bool,
    pub status: Status,
    pub iterations: usize,
    pub wallclock_ms: f64,
    pub nondominated: bool,
    pub f: Vec<f64>,
    pub x: Vec<f64>,
}

impl FrontierRecord {
    pub fn from_run(run_id: usize, delta: Option<f64>, cfg: &SolverConfig, r: &RunResult) -> Self {
        Self {
            run_id,
            delta,
            method: cfg.method,
            line_search: cfg.line_search,
            status: r.status,
            iterations: r.iterations,
            wallclock_ms: r.wallclock.as_secs_f64() * 1e3,
            nondominated: true,
            f: r.f_final.iter().copied().collect(),
            x: r.x_final.iter().copied().collect(),
        }
    }
}

fn normal_matrix(rng: &mut ChaCha20Rng, n: usize) -> DMatrix<f64> {
    let entries: Vec<f64> = (0..n * n).map(|_| rng.sample(StandardNormal)).collect();
    DMatrix::from_row_slice(n, n, &entries)
}

fn normal_vector(rng: &mut ChaCha20Rng, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.sample(StandardNormal))
}

fn redraw(
    rng: &mut ChaCha20Rng,
    n: usize,
    what: &str,
    ok: impl Fn(&DMatrix<f64>) -> bool,
) -> Result<DMatrix<f64>> {
    for _ in 0..MAX_REDRAWS {
        let m = normal_matrix(rng, n);
        if ok(&m) {
            return Ok(m);
        }
    }
    Err(Error::InvalidState(format!("no acceptable {what} after {MAX_REDRAWS} draws")))
}

/// Instance and starting point for run `run_id`; see the module docs for the
/// exact draw order.
pub fn generate_instance(
    seed: u64,
    run_id: usize,
    n: usize,
    m: usize,
    delta: f64,
    fixed_instance: bool,
) -> Result<(ProblemInstance, DVector<f64>)> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(if fixed_instance { 0 } else { (run_id as u64) << 1 });
    let mut smooth = Vec::with_capacity(m);
    for _ in 0..m {
        let factor = redraw(&mut rng, n, "M", |a| a.clone().singular_values().min() >= MIN_SINGULAR)?;
        let lin = normal_vector(&mut rng, n);
        smooth.push(QuadraticObjective::new(&factor * factor.transpose(), lin)?);
    }
    let transforms = (0..m)
        .filter(|i| i % 2 == 1)
        .map(|_| redraw(&mut rng, n, "B", |b| reciprocal_condition(b) >= MIN_TRANSFORM_RCOND))
        .collect::<Result<Vec<_>>>()?;
    let nonsmooth = (0..m)
        .map(|i| {
            let set = if i % 2 == 0 {
                UncertaintySet::Box { delta, n }
            } else {
                UncertaintySet::TransformedBox {
                    transform: transforms[i / 2].clone(),
                    delta,
                }
            };
            set.support_function()
        })
        .collect::<Result<Vec<_>>>()?;

    let mut xrng = ChaCha20Rng::seed_from_u64(seed);
    xrng.set_stream(((run_id as u64) << 1) | 1);
    let x0 = normal_vector(&mut xrng, n);
    Ok((ProblemInstance::new(smooth, nonsmooth)?, x0))
}

/// Runs every job, handing each result to `inspect`, and returns the records
/// with nondominated flags set, ordered by (δ, method, mode, run).
pub fn run_batch_with<T: Send>(
    cfg: &ExperimentConfig,
    inspect: impl Fn(&Job, &ProblemInstance, &RunResult) -> T + Sync,
) -> Result<Vec<(FrontierRecord, Option<T>)>> {
    cfg.validate()?;
    let jobs = cfg.jobs();
    let mut out: Vec<(FrontierRecord, Option<T>)> = jobs
        .par_iter()
        .map(|job| {
            let solver = cfg.solver_for(job);
            let attempt = generate_instance(cfg.seed, job.run_id, cfg.n, cfg.m, job.delta, cfg.fixed_instance)
                .and_then(|(p, x0)| run(&p, &x0, &solver).map(|r| (p, r)));
            match attempt {
                Ok((p, r)) => {
                    let extra = inspect(job, &p, &r);
                    (FrontierRecord::from_run(job.run_id, Some(job.delta), &solver, &r), Some(extra))
                }
                Err(e) => {
                    log::error!("run {} (delta {}, {}) failed: {e}", job.run_id, job.delta, job.method);
                    let record = FrontierRecord {
                        run_id: job.run_id,
                        delta: Some(job.delta),
                        method: job.method,
                        line_search: job.line_search,
                        status: Status::SubproblemFailure,
                        iterations: 0,
                        wallclock_ms: 0.0,
                        nondominated: false,
                        f: vec![f64::NAN; cfg.m],
                        x: vec![f64::NAN; cfg.n],
                    };
                    (record, None)
                }
            }
        })
        .collect();
    let mut groups: BTreeMap<(u64, UpdateKind, bool), Vec<usize>> = BTreeMap::new();
    for (k, (r, _)) in out.iter().enumerate() {
        groups
            .entry((r.delta.unwrap_or(0.0).to_bits(), r.method, r.line_search))
            .or_default()
            .push(k);
    }
    for members in groups.values() {
        let points: Vec<Vec<f64>> = members.iter().map(|&k| out[k].0.f.clone()).collect();
        for (&k, flag) in members.iter().zip(pareto_filter(&points)) {
            out[k].0.nondominated = flag;
        }
    }
    Ok(out)
}

pub fn run_batch(cfg: &ExperimentConfig) -> Result<Vec<FrontierRecord>> {
    Ok(run_batch_with(cfg, |_, _, _| ())?.into_iter().map(|(r, _)| r).collect())
}

/// `a` dominates `b`: no worse anywhere and strictly better somewhere.
pub fn dominates(a: &[f64], b: &[f64]) -> bool {
    a.iter().zip(b).all(|(x, y)| x <= y) && a.iter().zip(b).any(|(x, y)| x < y)
}

/// Nondominated flags by pairwise comparison. Points with a NaN component are
/// flagged dominated and never dominate others.
pub fn pareto_filter(points: &[Vec<f64>]) -> Vec<bool> {
    let valid: Vec<bool> = points.iter().map(|p| p.iter().all(|v| !v.is_nan())).collect();
    (0..points.len())
        .map(|r| {
            valid[r]
                && !(0..points.len()).any(|s| s != r && valid[s] && dominates(&points[s], &points[r]))
        })
        .collect()
}

pub const FRONTIER_CSV: &str = "frontier.csv";
pub const SUMMARY_CSV: &str = "summary.csv";

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|source| Error::Io {
        path: path.to_owned(),
        source,
    })
}

fn mode_name(line_search: bool) -> &'static str {
    if line_search {
        "armijo"
    } else {
        "fixed"
    }
}

/// CSV text for `records`; floats carry 17 significant digits.
pub fn frontier_csv(records: &[FrontierRecord], m: usize, n: usize) -> String {
    let mut out = String::from("run_id,delta,method,line_search,status,iterations,wallclock_ms,nondominated");
    for i in 1..=m {
        let _ = write!(out, ",F{i}");
    }
    for j in 1..=n {
        let _ = write!(out, ",x{j}");
    }
    out.push('\n');
    for r in records {
        let delta = r.delta.map(|d| d.to_string()).unwrap_or_default();
        let _ = write!(
            out,
            "{},{},{},{},{},{},{:.3},{}",
            r.run_id, delta, r.method, r.line_search, r.status, r.iterations, r.wallclock_ms, r.nondominated
        );
        for v in r.f.iter().chain(&r.x) {
            let _ = write!(out, ",{v:.16e}");
        }
        out.push('\n');
    }
    out
}

fn median(mut v: Vec<f64>) -> f64 {
    v.retain(|x| !x.is_nan());
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let k = v.len();
    if k % 2 == 1 {
        v[k / 2]
    } else {
        0.5 * (v[k / 2 - 1] + v[k / 2])
    }
}

/// Per (δ, mode, method): run counts, medians, and how many final points stay
/// nondominated when every method's points for that (δ, mode) are pooled.
pub fn summary_csv(records: &[FrontierRecord]) -> String {
    let mut pooled: BTreeMap<(u64, bool), Vec<usize>> = BTreeMap::new();
    for (k, r) in records.iter().enumerate() {
        pooled.entry((r.delta.unwrap_or(0.0).to_bits(), r.line_search)).or_default().push(k);
    }
    let mut out = String::from(
        "delta,line_search,method,runs,stationary,median_iterations,median_f_sum,nondominated,pooled_nondominated\n",
    );
    let mut keys: Vec<(f64, bool)> = pooled.keys().map(|&(d, ls)| (f64::from_bits(d), ls)).collect();
    keys.sort_by(|a, b| a.0.total_cmp(&b.0).then(b.1.cmp(&a.1)));
    for (delta, ls) in keys {
        let members = &pooled[&(delta.to_bits(), ls)];
        let points: Vec<Vec<f64>> = members.iter().map(|&k| records[k].f.clone()).collect();
        let flags = pareto_filter(&points);
        let mut methods: Vec<UpdateKind> = Vec::new();
        for &k in members {
            if !methods.contains(&records[k].method) {
                methods.push(records[k].method);
            }
        }
        for method in methods {
            let idx: Vec<usize> = (0..members.len()).filter(|&j| records[members[j]].method == method).collect();
            let rs: Vec<&FrontierRecord> = idx.iter().map(|&j| &records[members[j]]).collect();
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{:.16e},{},{}",
                delta,
                ls,
                method,
                rs.len(),
                rs.iter().filter(|r| r.status == Status::Stationary).count(),
                median(rs.iter().map(|r| r.iterations as f64).collect()),
                median(rs.iter().map(|r| r.f.iter().sum()).collect()),
                rs.iter().filter(|r| r.nondominated).count(),
                idx.iter().filter(|&&j| flags[j]).count(),
            );
        }
    }
    out
}

const PALETTE: [&str; 6] = ["#1b9e77", "#d95f02", "#7570b3", "#e7298a", "#66a61e", "#e6ab02"];

/// Scatter of `F1` against `F2`, one series per method; nondominated points are
/// drawn larger and filled.
pub fn frontier_svg(records: &[&FrontierRecord], title: &str) -> String {
    let (w, h, pad) = (640.0, 480.0, 60.0);
    let pts: Vec<(f64, f64)> = records
        .iter()
        .filter(|r| r.f.len() >= 2 && r.f[0].is_finite() && r.f[1].is_finite())
        .map(|r| (r.f[0], r.f[1]))
        .collect();
    let span = |vals: Vec<f64>| {
        let lo = vals.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if !lo.is_finite() {
            (0.0, 1.0)
        } else if hi - lo < 1e-12 {
            (lo - 0.5, hi + 0.5)
        } else {
            (lo, hi)
        }
    };
    let (x0, x1) = span(pts.iter().map(|p| p.0).collect());
    let (y0, y1) = span(pts.iter().map(|p| p.1).collect());
    let sx = |v: f64| pad + (v - x0) / (x1 - x0) * (w - 2.0 * pad);
    let sy = |v: f64| h - pad - (v - y0) / (y1 - y0) * (h - 2.0 * pad);

    let mut out = String::new();
    let _ = writeln!(out, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" font-family="sans-serif" font-size="12">"#);
    let _ = writeln!(out, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(out, r#"<text x="{}" y="20" text-anchor="middle">{title}</text>"#, w / 2.0);
    let _ = writeln!(
        out,
        r#"<path d="M{pad} {pad} V{} H{}" fill="none" stroke="black"/>"#,
        h - pad,
        w - pad
    );
    let _ = writeln!(out, r#"<text x="{}" y="{}" text-anchor="middle">F1</text>"#, w / 2.0, h - 15.0);
    let _ = writeln!(out, r#"<text x="15" y="{}" transform="rotate(-90 15 {})" text-anchor="middle">F2</text>"#, h / 2.0, h / 2.0);
    for (v, anchor) in [(x0, "start"), (x1, "end")] {
        let _ = writeln!(out, r#"<text x="{:.2}" y="{}" text-anchor="{anchor}">{v:.4}</text>"#, sx(v), h - pad + 15.0);
    }
    for v in [y0, y1] {
        let _ = writeln!(out, r#"<text x="{}" y="{:.2}" text-anchor="end">{v:.4}</text>"#, pad - 5.0, sy(v));
    }

    let mut methods: Vec<UpdateKind> = Vec::new();
    for r in records {
        if !methods.contains(&r.method) {
            methods.push(r.method);
        }
    }
    for (k, method) in methods.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let _ = writeln!(out, r#"<g class="series" data-method="{method}" stroke="{color}">"#);
        for r in records.iter().filter(|r| r.method == *method) {
            if r.f.len() < 2 || !r.f[0].is_finite() || !r.f[1].is_finite() {
                continue;
            }
            let (cx, cy) = (sx(r.f[0]), sy(r.f[1]));
            if r.nondominated {
                let _ = writeln!(out, r#"<circle cx="{cx:.2}" cy="{cy:.2}" r="4" fill="{color}"/>"#);
            } else {
                let _ = writeln!(out, r#"<circle cx="{cx:.2}" cy="{cy:.2}" r="2" fill="none"/>"#);
            }
        }
        out.push_str("</g>\n");
        let ly = pad + 16.0 * k as f64;
        let _ = writeln!(
            out,
            r#"<circle cx="{}" cy="{ly}" r="4" fill="{color}"/><text x="{}" y="{}">{method}</text>"#,
            w - pad - 70.0,
            w - pad - 60.0,
            ly + 4.0
        );
    }
    out.push_str("</svg>\n");
    out
}

/// Writes `frontier.csv`, `summary.csv` and, if `svg`, one scatter per
/// (δ, mode). Returns the paths written.
pub fn write_outputs(records: &[FrontierRecord], m: usize, n: usize, dir: &Path, svg: bool) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|source| Error::Io {
        path: dir.to_owned(),
        source,
    })?;
    let mut written = Vec::new();
    let path = dir.join(FRONTIER_CSV);
    write_file(&path, &frontier_csv(records, m, n))?;
    written.push(path);
    let path = dir.join(SUMMARY_CSV);
    write_file(&path, &summary_csv(records))?;
    written.push(path);
    if svg && m >= 2 {
        let mut groups: Vec<((f64, bool), Vec<&FrontierRecord>)> = Vec::new();
        for r in records {
            let key = (r.delta.unwrap_or(0.0), r.line_search);
            match groups.iter_mut().find(|(k, _)| k.0.to_bits() == key.0.to_bits() && k.1 == key.1) {
                Some((_, g)) => g.push(r),
                None => groups.push((key, vec![r])),
            }
        }
        for ((delta, ls), group) in groups {
            let title = format!("delta = {delta}, {}", mode_name(ls));
            let path = dir.join(format!("frontier_delta{delta}_{}.svg", mode_name(ls)));
            write_file(&path, &frontier_svg(&group, &title))?;
            written.push(path);
        }
    }
    Ok(written)
}

/// Parses a frontier CSV back into records.
pub fn read_frontier_csv(path: &Path) -> Result<Vec<FrontierRecord>> {
    let text = fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_owned(),
        source,
    })?;
    let parse_err = |line: usize, message: String| Error::Parse {
        path: path.to_owned(),
        message: format!("line {line}: {message}"),
    };
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().ok_or_else(|| parse_err(1, "missing header".into()))?.split(',').collect();
    let m = header.iter().filter(|h| h.starts_with('F')).count();
    let mut out = Vec::new();
    for (k, line) in lines.enumerate() {
        let lineno = k + 2;
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != header.len() {
            return Err(parse_err(lineno, format!("expected {} columns, got {}", header.len(), cols.len())));
        }
        let num = |s: &str| s.parse::<f64>().map_err(|e| parse_err(lineno, format!("{s:?}: {e}")));
        let int = |s: &str| s.parse::<usize>().map_err(|e| parse_err(lineno, format!("{s:?}: {e}")));
        let flag = |s: &str| s.parse::<bool>().map_err(|e| parse_err(lineno, format!("{s:?}: {e}")));
        let values = cols[8..].iter().map(|s| num(s)).collect::<Result<Vec<f64>>>()?;
        out.push(FrontierRecord {
            run_id: int(cols[0])?,
            delta: if cols[1].is_empty() { None } else { Some(num(cols[1])?) },
            method: cols[2].parse().map_err(|e: Error| parse_err(lineno, e.to_string()))?,
            line_search: flag(cols[3])?,
            status: cols[4].parse().map_err(|e: Error| parse_err(lineno, e.to_string()))?,
            iterations: int(cols[5])?,
            wallclock_ms: num(cols[6])?,
            nondominated: flag(cols[7])?,
            f: values[..m].to_vec(),
            x: values[m..].to_vec(),
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pareto_examples() {
        let pts = vec![vec![1.0, 2.0], vec![2.0, 1.0], vec![2.0, 2.0]];
        assert_eq!(pareto_filter(&pts), vec![true, true, false]);
        assert_eq!(pareto_filter(&[vec![3.0, 4.0]]), vec![true]);
        // duplicates do not dominate each other
        assert_eq!(pareto_filter(&[vec![1.0, 1.0], vec![1.0, 1.0]]), vec![true, true]);
        assert_eq!(pareto_filter(&[vec![f64::NAN, 0.0], vec![5.0, 5.0]]), vec![false, true]);
    }

    #[test]
    fn generation_is_deterministic() {
        let (a, xa) = generate_instance(7, 3, 5, 2, 0.05, false).unwrap();
        let (b, xb) = generate_instance(7, 3, 5, 2, 0.05, false).unwrap();
        assert_eq!(a.fingerprint(), b.fingerprint());
        assert_eq!(xa, xb);
        let (c, xc) = generate_instance(7, 4, 5, 2, 0.05, false).unwrap();
        assert_ne!(a.fingerprint(), c.fingerprint());
        assert_ne!(xa, xc);
    }

    #[test]
    fn fixed_instance_only_moves_start() {
        let (a, xa) = generate_instance(7, 1, 5, 2, 0.1, true).unwrap();
        let (b, xb) = generate_instance(7, 2, 5, 2, 0.1, true).unwrap();
        assert_eq!(a.fingerprint(), b.fingerprint());
        assert_ne!(xa, xb);
    }

    #[test]
    fn zero_delta_has_zero_nonsmooth_part() {
        let (p, _) = generate_instance(1, 0, 5, 2, 0.0, false).unwrap();
        assert!(p.nonsmooth().iter().all(|h| h.is_zero() && h.len() == 1));
        let (q, _) = generate_instance(1, 0, 5, 2, 0.05, false).unwrap();
        assert!(q.nonsmooth().iter().all(|h| h.len() == 32));
        for (a, b) in p.smooth().iter().zip(q.smooth()) {
            assert_eq!(a, b);
        }
    }

    #[test]
    fn csv_header_only_when_empty() {
        assert_eq!(
            frontier_csv(&[], 2, 2),
            "run_id,delta,method,line_search,status,iterations,wallclock_ms,nondominated,F1,F2,x1,x2\n"
        );
    }

    #[test]
    fn single_job_batch() {
        let cfg = ExperimentConfig {
            runs: 1,
            deltas: vec![0.05],
            methods: vec![UpdateKind::Bfgs],
            ..ExperimentConfig::default()
        };
        let records = run_batch(&cfg).unwrap();
        assert_eq!(records.len(), 1);
        assert!(records[0].nondominated);
        assert_eq!(records[0].status, Status::Stationary);
    }

    #[test]
    fn invalid_configs() {
        let bad = [
            ExperimentConfig { runs: 0, ..ExperimentConfig::default() },
            ExperimentConfig { deltas: vec![-0.1], ..ExperimentConfig::default() },
            ExperimentConfig { methods: vec![], ..ExperimentConfig::default() },
        ];
        for cfg in bad {
            assert!(cfg.validate().is_err());
        }
    }
}
