//! Quasi-Newton metrics `B_i` and their update formulas.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::problem::ProblemInstance;

/// Which formula evolves the metrics between outer iterations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UpdateKind {
    Bfgs,
    SsBfgs,
    HBfgs,
    /// `B_i ≡ 0`, never updated: the proximal gradient baseline.
    #[serde(rename = "pgm")]
    FrozenZero,
}

impl UpdateKind {
    pub const ALL: [UpdateKind; 4] = [Self::FrozenZero, Self::Bfgs, Self::SsBfgs, Self::HBfgs];

    pub fn name(self) -> &'static str {
        match self {
            Self::Bfgs => "bfgs",
            Self::SsBfgs => "ssbfgs",
            Self::HBfgs => "hbfgs",
            Self::FrozenZero => "pgm",
        }
    }
}

impl fmt::Display for UpdateKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for UpdateKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "bfgs" => Ok(Self::Bfgs),
            "ssbfgs" | "ss-bfgs" => Ok(Self::SsBfgs),
            "hbfgs" | "h-bfgs" => Ok(Self::HBfgs),
            "pgm" | "frozen_zero" | "zero" => Ok(Self::FrozenZero),
            other => Err(Error::InvalidArgument(format!("unknown method `{other}`"))),
        }
    }
}

/// One `n×n` metric per objective.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricSet {
    mats: Vec<DMatrix<f64>>,
    frozen: bool,
}

impl MetricSet {
    /// Validates that every matrix is square, symmetric and positive definite.
    pub fn new(mats: Vec<DMatrix<f64>>) -> Result<Self> {
        let n = mats
            .first()
            .ok_or_else(|| Error::InvalidArgument("empty metric set".into()))?
            .nrows();
        for b in &mats {
            check_dim(n, b.nrows())?;
            check_dim(n, b.ncols())?;
            let scale = b.amax().max(f64::MIN_POSITIVE);
            if (b - b.transpose()).amax() > 1e-10 * scale {
                return Err(Error::InvalidArgument("metric is not symmetric".into()));
            }
            if b.clone().cholesky().is_none() {
                return Err(Error::NotPositiveDefinite("metric".into()));
            }
        }
        Ok(Self { mats, frozen: false })
    }

    pub fn identity(m: usize, n: usize) -> Self {
        Self {
            mats: vec![DMatrix::identity(n, n); m],
            frozen: false,
        }
    }

    /// All-zero metrics that are never updated.
    pub fn frozen_zero(m: usize, n: usize) -> Self {
        Self {
            mats: vec![DMatrix::zeros(n, n); m],
            frozen: true,
        }
    }

    /// Initial metrics for `kind`: identity, or zero for the baseline.
    pub fn initial(kind: UpdateKind, m: usize, n: usize) -> Self {
        match kind {
            UpdateKind::FrozenZero => Self::frozen_zero(m, n),
            _ => Self::identity(m, n),
        }
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen
    }

    pub fn len(&self) -> usize {
        self.mats.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mats.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.mats.first().map(|b| b.nrows()).unwrap_or(0)
    }

    pub fn get(&self, i: usize) -> &DMatrix<f64> {
        &self.mats[i]
    }

    pub fn mats(&self) -> &[DMatrix<f64>] {
        &self.mats
    }

    /// Applies one update to metric `i` unless frozen or the curvature guard fails.
    ///
    /// `theta` is only read for [`UpdateKind::HBfgs`]. Returns whether `B_i` changed.
    pub fn update(
        &mut self,
        i: usize,
        kind: UpdateKind,
        s: &DVector<f64>,
        y: &DVector<f64>,
        theta: f64,
    ) -> bool {
        if self.frozen {
            return false;
        }
        let b = &self.mats[i];
        let next = match kind {
            UpdateKind::FrozenZero => return false,
            UpdateKind::Bfgs => curvature_guard(s, y, b).then(|| bfgs_update(b, s, y)),
            UpdateKind::SsBfgs => curvature_guard(s, y, b).then(|| ss_bfgs_update(b, s, y)),
            UpdateKind::HBfgs => {
                let yhat = huang_corrected(s, y, theta);
                (curvature_guard(s, y, b) && curvature_guard(s, &yhat, b))
                    .then(|| h_bfgs_update(b, s, y, theta))
            }
        };
        match next {
            Some(b) => {
                self.mats[i] = b;
                true
            }
            None => false,
        }
    }
}

/// `B − Bs sᵀB / sᵀBs`, shared by every update.
fn remove_curvature(b: &DMatrix<f64>, s: &DVector<f64>) -> DMatrix<f64> {
    let bs = b * s;
    let sbs = s.dot(&bs);
    b - &bs * bs.transpose() / sbs
}

/// `B − Bs sᵀB / sᵀBs + y yᵀ / sᵀy`
pub fn bfgs_update(b: &DMatrix<f64>, s: &DVector<f64>, y: &DVector<f64>) -> DMatrix<f64> {
    remove_curvature(b, s) + y * y.transpose() / s.dot(y)
}

/// `(sᵀy / sᵀBs)(B − Bs sᵀB / sᵀBs) + y yᵀ / sᵀy`
pub fn ss_bfgs_update(b: &DMatrix<f64>, s: &DVector<f64>, y: &DVector<f64>) -> DMatrix<f64> {
    let sy = s.dot(y);
    let sbs = s.dot(&(b * s));
    remove_curvature(b, s) * (sy / sbs) + y * y.transpose() / sy
}

/// `6[g(x_k) − g(x_{k+1})] + 3[∇g(x_k) + ∇g(x_{k+1})]ᵀs`
pub fn huang_theta(
    g_k: f64,
    g_k1: f64,
    grad_k: &DVector<f64>,
    grad_k1: &DVector<f64>,
    s: &DVector<f64>,
) -> f64 {
    huang_theta_from_decrease(g_k - g_k1, grad_k, grad_k1, s)
}

/// [`huang_theta`] with the decrease `g(x_k) − g(x_{k+1})` supplied directly,
/// so callers that can form it without cancellation keep full precision.
pub fn huang_theta_from_decrease(
    decrease: f64,
    grad_k: &DVector<f64>,
    grad_k1: &DVector<f64>,
    s: &DVector<f64>,
) -> f64 {
    6.0 * decrease + 3.0 * (grad_k + grad_k1).dot(s)
}

/// `ŷ = (1 + θ / sᵀy) y`
pub fn huang_corrected(s: &DVector<f64>, y: &DVector<f64>, theta: f64) -> DVector<f64> {
    y * (1.0 + theta / s.dot(y))
}

/// `B − Bs sᵀB / sᵀBs + ŷ ŷᵀ / sᵀŷ`
pub fn h_bfgs_update(b: &DMatrix<f64>, s: &DVector<f64>, y: &DVector<f64>, theta: f64) -> DMatrix<f64> {
    let yhat = huang_corrected(s, y, theta);
    remove_curvature(b, s) + &yhat * yhat.transpose() / s.dot(&yhat)
}

/// Whether an update along `(s, y)` keeps `B` positive definite with margin.
pub fn curvature_guard(s: &DVector<f64>, y: &DVector<f64>, b: &DMatrix<f64>) -> bool {
    let s_norm = s.norm();
    s_norm > 1e-14 && s.dot(y) > 1e-12 * s_norm * y.norm() && s.dot(&(b * s)) > 1e-14
}

/// `max_i λ_max(Q_i)`, the common Lipschitz constant of the smooth gradients.
pub fn lipschitz_bound(p: &ProblemInstance) -> f64 {
    p.smooth()
        .iter()
        .map(|g| SymmetricEigen::new(g.hessian().clone()).eigenvalues.max())
        .fold(f64::NEG_INFINITY, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::QuadraticObjective;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn e1() -> DVector<f64> {
        DVector::from_vec(vec![1.0, 0.0])
    }

    fn min_eig(b: &DMatrix<f64>) -> f64 {
        SymmetricEigen::new(b.clone()).eigenvalues.min()
    }

    #[test]
    fn bfgs_examples() {
        let id = DMatrix::identity(2, 2);
        assert_eq!(bfgs_update(&id, &e1(), &e1()), id);
        assert_eq!(
            bfgs_update(&id, &e1(), &(e1() * 2.0)),
            DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 1.0]))
        );
    }

    #[test]
    fn ss_bfgs_examples() {
        let id = DMatrix::identity(2, 2);
        assert_eq!(ss_bfgs_update(&id, &e1(), &e1()), id);
        assert_eq!(
            ss_bfgs_update(&id, &e1(), &(e1() * 2.0)),
            DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 2.0]))
        );
    }

    #[test]
    fn huang_examples() {
        // g(x) = x⁴ from 0 to 1
        let theta = huang_theta(
            0.0,
            1.0,
            &DVector::from_element(1, 0.0),
            &DVector::from_element(1, 4.0),
            &DVector::from_element(1, 1.0),
        );
        assert_eq!(theta, 6.0);

        let gk = DVector::from_vec(vec![1.0, -2.0]);
        assert_eq!(huang_theta(3.0, 3.0, &gk, &-&gk, &e1()), 0.0);

        let id = DMatrix::identity(2, 2);
        assert_eq!(h_bfgs_update(&id, &e1(), &e1(), 0.0), bfgs_update(&id, &e1(), &e1()));
        assert_eq!(
            h_bfgs_update(&id, &e1(), &e1(), 1.0),
            DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 1.0]))
        );
    }

    #[test]
    fn huang_theta_vanishes_on_quadratics() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 5;
        let m = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        let g = QuadraticObjective::new(
            &m * m.transpose() + DMatrix::identity(n, n),
            DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0)),
        )
        .unwrap();
        for _ in 0..100 {
            let x = DVector::from_fn(n, |_, _| rng.random_range(-2.0..2.0));
            let s = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
            let x1 = &x + &s;
            let theta = huang_theta(
                g.value(&x).unwrap(),
                g.value(&x1).unwrap(),
                &g.gradient(&x).unwrap(),
                &g.gradient(&x1).unwrap(),
                &s,
            );
            assert!(theta.abs() <= 1e-8, "{theta}");
            let y = g.gradient_change(&s).unwrap();
            let b = DMatrix::identity(n, n) * 2.0;
            let hb = h_bfgs_update(&b, &s, &y, theta);
            let bb = bfgs_update(&b, &s, &y);
            assert!((hb - bb).amax() <= 1e-8);
        }
    }

    #[test]
    fn curvature_guard_examples() {
        let id = DMatrix::identity(2, 2);
        assert!(!curvature_guard(&DVector::zeros(2), &e1(), &id));
        assert!(!curvature_guard(&e1(), &-e1(), &id));
        assert!(curvature_guard(&e1(), &e1(), &id));
    }

    fn random_spd(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
        let m = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        &m * m.transpose() + DMatrix::identity(n, n) * 0.5
    }

    #[test]
    fn random_updates_satisfy_secant_and_stay_spd() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let n = 5;
        let mut done = 0;
        while done < 200 {
            let b = random_spd(&mut rng, n);
            let s: DVector<f64> = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
            let y: DVector<f64> = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
            let theta = rng.random_range(-0.5f64..0.5) * s.dot(&y).abs();
            let yhat = huang_corrected(&s, &y, theta);
            if !(curvature_guard(&s, &y, &b) && curvature_guard(&s, &yhat, &b)) {
                continue;
            }
            done += 1;
            for (next, target) in [
                (bfgs_update(&b, &s, &y), &y),
                (ss_bfgs_update(&b, &s, &y), &y),
                (h_bfgs_update(&b, &s, &y, theta), &yhat),
            ] {
                assert!((&next * &s - target).norm() <= 1e-10 * target.norm());
                assert!(min_eig(&next) > 0.0);
                assert_eq!(next, next.transpose());
            }
        }
    }

    #[test]
    fn metric_set_update_policy() {
        let mut ms = MetricSet::frozen_zero(2, 2);
        assert!(!ms.update(0, UpdateKind::Bfgs, &e1(), &e1(), 0.0));
        assert_eq!(ms.get(0), &DMatrix::zeros(2, 2));

        let mut ms = MetricSet::identity(2, 2);
        // negative curvature: kept
        assert!(!ms.update(0, UpdateKind::Bfgs, &e1(), &-e1(), 0.0));
        assert_eq!(ms.get(0), &DMatrix::identity(2, 2));
        assert!(ms.update(1, UpdateKind::SsBfgs, &e1(), &(e1() * 2.0), 0.0));
        assert_eq!(ms.get(1)[(1, 1)], 2.0);
        // θ that flips the sign of sᵀŷ: skipped
        assert!(!ms.update(0, UpdateKind::HBfgs, &e1(), &e1(), -2.0));
        assert!(MetricSet::new(ms.mats().to_vec()).is_ok());
    }

    #[test]
    fn lipschitz_examples() {
        let diag = |a: f64, b: f64| {
            QuadraticObjective::new(DMatrix::from_diagonal(&DVector::from_vec(vec![a, b])), DVector::zeros(2))
                .unwrap()
        };
        let p = ProblemInstance::smooth_only(vec![diag(1.0, 4.0), diag(3.0, 2.0)]).unwrap();
        assert_abs_diff_eq!(lipschitz_bound(&p), 4.0, epsilon = 1e-12);
        let p = ProblemInstance::smooth_only(vec![diag(1.0, 1.0)]).unwrap();
        assert_abs_diff_eq!(lipschitz_bound(&p), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn lipschitz_dominates_rayleigh_samples() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 5;
        let m = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        let q = &m * m.transpose() + DMatrix::identity(n, n) * 1e-3;
        let p = ProblemInstance::smooth_only(vec![QuadraticObjective::new(q.clone(), DVector::zeros(n)).unwrap()])
            .unwrap();
        let bound = lipschitz_bound(&p);
        let mut best: f64 = 0.0;
        for _ in 0..100_000 {
            let v = DVector::from_fn(n, |_, _| rng.random_range(-1.0f64..1.0));
            let v: DVector<f64> = &v / v.norm();
            best = best.max((&q * v).norm());
        }
        assert!(best <= bound * (1.0 + 1e-12));
        assert!(bound - best <= 0.05 * bound, "sampling should approach the bound");
    }

    #[test]
    fn method_names_round_trip() {
        for k in UpdateKind::ALL {
            assert_eq!(k.name().parse::<UpdateKind>().unwrap(), k);
        }
        assert!("dfp".parse::<UpdateKind>().is_err());
    }
}
