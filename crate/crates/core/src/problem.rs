//! Composite multiobjective problem instances.
//!
//! Each objective is `F_i(x) = g_i(x) + h_i(x)` where `g_i(x) = ½xᵀQ_ix + q_iᵀx`
//! is a strongly convex quadratic and `h_i` is a finite max of affine functions.
//! Instances can be read from and written to a JSON document.

use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{check_dim, Error, Result};
use crate::uncertainty::UncertaintySpec;

const SYMMETRY_TOL: f64 = 1e-12;

/// Smooth part `g(x) = ½xᵀQx + qᵀx` with `Q` symmetric positive definite.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticObjective {
    quad: DMatrix<f64>,
    lin: DVector<f64>,
}

impl QuadraticObjective {
    /// Builds the objective, symmetrizing `quad` and checking positive definiteness.
    pub fn new(quad: DMatrix<f64>, lin: DVector<f64>) -> Result<Self> {
        let n = lin.len();
        if n == 0 {
            return Err(Error::InvalidArgument("empty linear coefficient".into()));
        }
        if quad.nrows() != n || quad.ncols() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                actual: if quad.nrows() != n { quad.nrows() } else { quad.ncols() },
            });
        }
        if quad.iter().chain(lin.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite coefficient".into()));
        }
        let scale = quad.amax().max(f64::MIN_POSITIVE);
        let asym = (&quad - quad.transpose()).amax();
        if asym > SYMMETRY_TOL * scale {
            log::warn!("quadratic coefficient asymmetric by {asym:e}; symmetrizing");
        }
        let quad = (&quad + quad.transpose()) * 0.5;
        if quad.clone().cholesky().is_none() {
            return Err(Error::NotPositiveDefinite(
                "quadratic coefficient of a smooth objective".into(),
            ));
        }
        Ok(Self { quad, lin })
    }

    pub fn dim(&self) -> usize {
        self.lin.len()
    }

    /// `Q`
    pub fn hessian(&self) -> &DMatrix<f64> {
        &self.quad
    }

    /// `q`
    pub fn linear(&self) -> &DVector<f64> {
        &self.lin
    }

    /// `½xᵀQx + qᵀx`
    pub fn value(&self, x: &DVector<f64>) -> Result<f64> {
        check_dim(self.dim(), x.len())?;
        Ok(0.5 * x.dot(&(&self.quad * x)) + self.lin.dot(x))
    }

    /// `Qx + q`
    pub fn gradient(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        check_dim(self.dim(), x.len())?;
        Ok(&self.quad * x + &self.lin)
    }

    /// Gradient change `∇g(x + s) − ∇g(x) = Qs`, exact for quadratics.
    pub fn gradient_change(&self, s: &DVector<f64>) -> Result<DVector<f64>> {
        check_dim(self.dim(), s.len())?;
        Ok(&self.quad * s)
    }

    /// `g(x) − g(x + s)` evaluated without subtracting two full values.
    pub fn decrease(&self, x: &DVector<f64>, s: &DVector<f64>) -> Result<f64> {
        let grad = self.gradient(x)?;
        check_dim(self.dim(), s.len())?;
        Ok(-(grad.dot(s) + 0.5 * s.dot(&(&self.quad * s))))
    }

    /// Strong convexity modulus, the smallest eigenvalue of `Q`.
    pub fn modulus(&self) -> f64 {
        SymmetricEigen::new(self.quad.clone()).eigenvalues.min()
    }

    /// Largest eigenvalue of `Q`, the Lipschitz constant of the gradient.
    pub fn lipschitz(&self) -> f64 {
        SymmetricEigen::new(self.quad.clone()).eigenvalues.max()
    }
}

/// One affine piece `aᵀx + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffinePiece {
    pub slope: DVector<f64>,
    pub offset: f64,
}

impl AffinePiece {
    pub fn value(&self, x: &DVector<f64>) -> f64 {
        self.slope.dot(x) + self.offset
    }
}

/// `h(x) = max_j (a_jᵀx + b_j)` over a nonempty list of pieces.
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseAffine {
    dim: usize,
    pieces: Vec<AffinePiece>,
}

impl PiecewiseAffine {
    pub fn new(pieces: Vec<AffinePiece>) -> Result<Self> {
        let first = pieces
            .first()
            .ok_or_else(|| Error::InvalidArgument("piecewise-affine function needs a piece".into()))?;
        let dim = first.slope.len();
        if dim == 0 {
            return Err(Error::InvalidArgument("zero-dimensional piece".into()));
        }
        for p in &pieces {
            check_dim(dim, p.slope.len())?;
            if !p.offset.is_finite() || p.slope.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidArgument("non-finite affine piece".into()));
            }
        }
        Ok(Self { dim, pieces })
    }

    /// The constant zero function on `R^n`.
    pub fn zero(n: usize) -> Self {
        Self {
            dim: n,
            pieces: vec![AffinePiece {
                slope: DVector::zeros(n),
                offset: 0.0,
            }],
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn pieces(&self) -> &[AffinePiece] {
        &self.pieces
    }

    pub fn len(&self) -> usize {
        self.pieces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pieces.is_empty()
    }

    /// True when every piece is identically zero.
    pub fn is_zero(&self) -> bool {
        self.pieces
            .iter()
            .all(|p| p.offset == 0.0 && p.slope.iter().all(|&v| v == 0.0))
    }

    pub fn value(&self, x: &DVector<f64>) -> Result<f64> {
        check_dim(self.dim, x.len())?;
        self.pieces
            .iter()
            .map(|p| p.value(x))
            .reduce(f64::max)
            .ok_or_else(|| Error::InvalidState("piecewise-affine function has no pieces".into()))
    }
}

/// `m` composite objectives over `R^n`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemInstance {
    n: usize,
    smooth: Vec<QuadraticObjective>,
    nonsmooth: Vec<PiecewiseAffine>,
}

impl ProblemInstance {
    pub fn new(smooth: Vec<QuadraticObjective>, nonsmooth: Vec<PiecewiseAffine>) -> Result<Self> {
        if smooth.is_empty() {
            return Err(Error::InvalidArgument("at least one objective required".into()));
        }
        check_dim(smooth.len(), nonsmooth.len())?;
        let n = smooth[0].dim();
        for g in &smooth {
            check_dim(n, g.dim())?;
        }
        for h in &nonsmooth {
            check_dim(n, h.dim())?;
        }
        Ok(Self { n, smooth, nonsmooth })
    }

    /// Instance with `h_i ≡ 0` for every objective.
    pub fn smooth_only(smooth: Vec<QuadraticObjective>) -> Result<Self> {
        let n = smooth.first().map(|g| g.dim()).unwrap_or(0);
        let nonsmooth = smooth.iter().map(|_| PiecewiseAffine::zero(n)).collect();
        Self::new(smooth, nonsmooth)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.smooth.len()
    }

    pub fn smooth(&self) -> &[QuadraticObjective] {
        &self.smooth
    }

    pub fn nonsmooth(&self) -> &[PiecewiseAffine] {
        &self.nonsmooth
    }

    /// `(F_1(x), …, F_m(x))`
    pub fn eval(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        check_dim(self.n, x.len())?;
        let mut out = DVector::zeros(self.m());
        for (i, (g, h)) in self.smooth.iter().zip(&self.nonsmooth).enumerate() {
            out[i] = g.value(x)? + h.value(x)?;
        }
        Ok(out)
    }

    /// SHA-256 over the bit patterns of every coefficient, as lowercase hex.
    pub fn fingerprint(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update((self.n as u64).to_le_bytes());
        hasher.update((self.m() as u64).to_le_bytes());
        let mut put = |v: f64| hasher.update(v.to_bits().to_le_bytes());
        for g in &self.smooth {
            g.quad.iter().for_each(|&v| put(v));
            g.lin.iter().for_each(|&v| put(v));
        }
        for h in &self.nonsmooth {
            for p in &h.pieces {
                p.slope.iter().for_each(|&v| put(v));
                put(p.offset);
            }
        }
        hasher
            .finalize()
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    pub fn to_document(&self) -> InstanceDocument {
        InstanceDocument {
            n: self.n,
            m: self.m(),
            quad: self.smooth.iter().map(|g| matrix_rows(&g.quad)).collect(),
            lin: self.smooth.iter().map(|g| g.lin.iter().copied().collect()).collect(),
            h: Some(
                self.nonsmooth
                    .iter()
                    .map(|h| {
                        h.pieces
                            .iter()
                            .map(|p| (p.slope.iter().copied().collect(), p.offset))
                            .collect()
                    })
                    .collect(),
            ),
            uncertainty: None,
            x0: None,
        }
    }

    pub fn read(path: &Path) -> Result<(Self, Option<DVector<f64>>)> {
        let text = fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_owned(),
            source,
        })?;
        let doc: InstanceDocument = serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.to_owned(),
            message: e.to_string(),
        })?;
        doc.build()
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(&self.to_document())
            .map_err(|e| Error::InvalidState(e.to_string()))?;
        fs::write(path, text).map_err(|source| Error::Io {
            path: path.to_owned(),
            source,
        })
    }
}

fn matrix_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

pub(crate) fn matrix_from_rows(rows: &[Vec<f64>], what: &str) -> Result<DMatrix<f64>> {
    let nrows = rows.len();
    let ncols = rows.first().map(Vec::len).unwrap_or(0);
    if nrows == 0 || ncols == 0 {
        return Err(Error::InvalidArgument(format!("{what}: empty matrix")));
    }
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::InvalidArgument(format!("{what}: ragged rows")));
    }
    Ok(DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

/// On-disk form of a [`ProblemInstance`].
///
/// Either `h` (explicit pieces) or `uncertainty` (one polytope per objective,
/// converted to its support function) describes the nonsmooth parts; if both
/// are absent every `h_i` is zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceDocument {
    pub n: usize,
    pub m: usize,
    #[serde(rename = "Q")]
    pub quad: Vec<Vec<Vec<f64>>>,
    #[serde(rename = "q")]
    pub lin: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h: Option<Vec<Vec<(Vec<f64>, f64)>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub uncertainty: Option<Vec<UncertaintySpec>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x0: Option<Vec<f64>>,
}

impl InstanceDocument {
    pub fn build(&self) -> Result<(ProblemInstance, Option<DVector<f64>>)> {
        check_dim(self.m, self.quad.len())?;
        check_dim(self.m, self.lin.len())?;
        let mut smooth = Vec::with_capacity(self.m);
        for (rows, lin) in self.quad.iter().zip(&self.lin) {
            check_dim(self.n, lin.len())?;
            let quad = matrix_from_rows(rows, "Q")?;
            smooth.push(QuadraticObjective::new(quad, DVector::from_column_slice(lin))?);
        }
        let nonsmooth = match (&self.h, &self.uncertainty) {
            (Some(_), Some(_)) => {
                return Err(Error::InvalidArgument(
                    "give either `h` or `uncertainty`, not both".into(),
                ))
            }
            (Some(h), None) => {
                check_dim(self.m, h.len())?;
                h.iter()
                    .map(|pieces| {
                        PiecewiseAffine::new(
                            pieces
                                .iter()
                                .map(|(a, b)| AffinePiece {
                                    slope: DVector::from_column_slice(a),
                                    offset: *b,
                                })
                                .collect(),
                        )
                    })
                    .collect::<Result<Vec<_>>>()?
            }
            (None, Some(sets)) => {
                check_dim(self.m, sets.len())?;
                sets.iter()
                    .map(|s| s.to_set(self.n)?.support_function())
                    .collect::<Result<Vec<_>>>()?
            }
            (None, None) => (0..self.m).map(|_| PiecewiseAffine::zero(self.n)).collect(),
        };
        let problem = ProblemInstance::new(smooth, nonsmooth)?;
        check_dim(self.n, problem.n())?;
        let x0 = match &self.x0 {
            Some(v) => {
                check_dim(self.n, v.len())?;
                Some(DVector::from_column_slice(v))
            }
            None => None,
        };
        Ok((problem, x0))
    }
}
