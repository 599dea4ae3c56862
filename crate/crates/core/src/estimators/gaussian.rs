//! Closed-form scores of diffused Gaussians.
//!
//! If `X_0 ~ N(m, S)` then `X_t ~ N(k_t m, k_t² S + v_t I)`, so with
//! `S = U diag(λ) Uᵀ` the score is `-U diag(1 / (k² λ + v)) Uᵀ (x - k m)`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::oracle::{ConditionalOracle, JointOracle, OracleKind, ScoreOracle};
use super::EstimatorError;
use crate::nn::Tensor;
use crate::sde::VpSchedule;

fn check_rows(x: &Tensor, dim: usize, t: &[f64]) -> Result<(), EstimatorError> {
    if x.cols() != dim || x.rows() != t.len() {
        return Err(EstimatorError::Dimension {
            expected: dim,
            got: x.cols(),
        });
    }
    Ok(())
}

fn validate_cov(mean: &[f64], cov: &DMatrix<f64>) -> Result<(), EstimatorError> {
    let d = mean.len();
    if d == 0 || cov.nrows() != d || cov.ncols() != d {
        return Err(EstimatorError::Dimension {
            expected: d,
            got: cov.nrows(),
        });
    }
    if (cov - cov.transpose()).amax() > 1e-10 * cov.amax().max(1.0) {
        return Err(EstimatorError::InvalidCovariance("not symmetric".into()));
    }
    Ok(())
}

/// Eigen-factored covariance: `S = U diag(λ) Uᵀ`, all `λ ≥ 0`.
#[derive(Clone, Debug)]
struct Factor {
    vecs: DMatrix<f64>,
    vals: DVector<f64>,
}

impl Factor {
    fn new(cov: &DMatrix<f64>) -> Result<Self, EstimatorError> {
        let eig = SymmetricEigen::new(cov.clone());
        let tol = 1e-12 * eig.eigenvalues.amax().max(1.0);
        if eig.eigenvalues.iter().any(|&l| l < -tol) {
            return Err(EstimatorError::InvalidCovariance("not positive semi-definite".into()));
        }
        Ok(Self {
            vals: eig.eigenvalues.map(|l| l.max(0.0)),
            vecs: eig.eigenvectors,
        })
    }

    /// `-(k² S + v I)⁻¹ z`.
    fn neg_precision(&self, z: &DVector<f64>, k: f64, v: f64) -> DVector<f64> {
        let mut u = self.vecs.tr_mul(z);
        for (ui, &l) in u.iter_mut().zip(self.vals.iter()) {
            *ui /= -(k * k * l + v);
        }
        &self.vecs * u
    }

    /// `U diag(sqrt λ) e`.
    fn colour(&self, e: &DVector<f64>) -> DVector<f64> {
        let scaled = e.component_mul(&self.vals.map(f64::sqrt));
        &self.vecs * scaled
    }
}

/// Analytic score of a diffused `N(m, S)`.
#[derive(Clone, Debug)]
pub struct GaussianOracle {
    mean: DVector<f64>,
    cov: DMatrix<f64>,
    factor: Factor,
    schedule: VpSchedule,
}

impl GaussianOracle {
    pub fn new(mean: Vec<f64>, cov: DMatrix<f64>, schedule: VpSchedule) -> Result<Self, EstimatorError> {
        validate_cov(&mean, &cov)?;
        Ok(Self {
            factor: Factor::new(&cov)?,
            mean: DVector::from_vec(mean),
            cov,
            schedule,
        })
    }

    /// `N(0, s² I_dim)`.
    pub fn isotropic(dim: usize, std: f64, schedule: VpSchedule) -> Result<Self, EstimatorError> {
        Self::new(vec![0.0; dim], DMatrix::identity(dim, dim) * (std * std), schedule)
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn cov(&self) -> &DMatrix<f64> {
        &self.cov
    }

    /// Draws `n` rows from `N(m, S)`.
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Tensor {
        let d = self.mean.len();
        let mut data = Vec::with_capacity(n * d);
        for _ in 0..n {
            let e = DVector::from_fn(d, |_, _| StandardNormal.sample(rng));
            let x = self.factor.colour(&e) + &self.mean;
            data.extend(x.iter());
        }
        Tensor::matrix(n, d, data).expect("sample shape")
    }

    /// Closed-form `KL(N(m_a, S_a) ‖ N(m_b, S_b))` for non-singular `S_b`.
    pub fn kl_to(&self, other: &GaussianOracle) -> Result<f64, EstimatorError> {
        let d = self.mean.len();
        if other.mean.len() != d {
            return Err(EstimatorError::Dimension {
                expected: d,
                got: other.mean.len(),
            });
        }
        let chol_b = other
            .cov
            .clone()
            .cholesky()
            .ok_or_else(|| EstimatorError::InvalidCovariance("singular reference".into()))?;
        let chol_a = self
            .cov
            .clone()
            .cholesky()
            .ok_or_else(|| EstimatorError::InvalidCovariance("singular covariance".into()))?;
        let inv_b = chol_b.inverse();
        let dm = &other.mean - &self.mean;
        let trace = (&inv_b * &self.cov).trace();
        let quad = dm.dot(&(&inv_b * &dm));
        let logdet = |c: &nalgebra::Cholesky<f64, nalgebra::Dyn>| 2.0 * c.l().diagonal().map(f64::ln).sum();
        Ok(0.5 * (trace + quad - d as f64 + logdet(&chol_b) - logdet(&chol_a)))
    }

    /// Differential entropy `½ log det(2πe S)`.
    pub fn entropy(&self) -> f64 {
        let d = self.mean.len() as f64;
        0.5 * (d * (2.0 * std::f64::consts::PI * std::f64::consts::E).ln() + self.factor.vals.map(f64::ln).sum())
    }
}

impl ScoreOracle for GaussianOracle {
    fn dim(&self) -> usize {
        self.mean.len()
    }
    fn kind(&self) -> OracleKind {
        OracleKind::Analytic
    }
    fn schedule(&self) -> &VpSchedule {
        &self.schedule
    }
    fn score(&self, xt: &Tensor, t: &[f64]) -> Result<Tensor, EstimatorError> {
        let d = self.dim();
        check_rows(xt, d, t)?;
        let mut out = Vec::with_capacity(xt.len());
        for (i, &ti) in t.iter().enumerate() {
            let ker = self.schedule.kernel(ti)?;
            let z = DVector::from_column_slice(xt.row(i)) - &self.mean * ker.k;
            out.extend(self.factor.neg_precision(&z, ker.k, ker.v).iter());
        }
        Ok(Tensor::matrix(xt.rows(), d, out)?)
    }
}

/// Gaussian `A | B = y`: mean `m_a + R (y - m_b)`, fixed covariance.
#[derive(Clone, Debug)]
struct ConditionalGaussian {
    mean_a: DVector<f64>,
    mean_b: DVector<f64>,
    regression: DMatrix<f64>,
    factor: Factor,
}

impl ConditionalGaussian {
    fn new(
        mean_a: DVector<f64>,
        mean_b: DVector<f64>,
        s_aa: DMatrix<f64>,
        s_ab: DMatrix<f64>,
        s_bb: DMatrix<f64>,
    ) -> Result<Self, EstimatorError> {
        let inv_bb = s_bb
            .cholesky()
            .ok_or_else(|| EstimatorError::InvalidCovariance("singular conditioning block".into()))?
            .inverse();
        let regression = &s_ab * inv_bb;
        let cov = &s_aa - &regression * s_ab.transpose();
        let cov = (&cov + cov.transpose()) * 0.5;
        Ok(Self {
            mean_a,
            mean_b,
            regression,
            factor: Factor::new(&cov)?,
        })
    }

    fn score(&self, schedule: &VpSchedule, at: &Tensor, b0: &Tensor, t: &[f64]) -> Result<Tensor, EstimatorError> {
        let (da, db) = (self.mean_a.len(), self.mean_b.len());
        check_rows(at, da, t)?;
        check_rows(b0, db, t)?;
        let mut out = Vec::with_capacity(at.len());
        for (i, &ti) in t.iter().enumerate() {
            let ker = schedule.kernel(ti)?;
            let b = DVector::from_column_slice(b0.row(i)) - &self.mean_b;
            let m = &self.mean_a + &self.regression * b;
            let z = DVector::from_column_slice(at.row(i)) - m * ker.k;
            out.extend(self.factor.neg_precision(&z, ker.k, ker.v).iter());
        }
        Ok(Tensor::matrix(at.rows(), da, out)?)
    }
}

/// Jointly Gaussian `(A, B)` exposing every score the estimators use.
#[derive(Clone, Debug)]
pub struct GaussianPairOracle {
    x_dim: usize,
    joint: GaussianOracle,
    marginal_x: GaussianOracle,
    marginal_y: GaussianOracle,
    cond_x: ConditionalGaussian,
    cond_y: ConditionalGaussian,
}

impl GaussianPairOracle {
    /// `mean` and `cov` describe `[A, B]`; the first `x_dim` coordinates are `A`.
    pub fn new(x_dim: usize, mean: Vec<f64>, cov: DMatrix<f64>, schedule: VpSchedule) -> Result<Self, EstimatorError> {
        validate_cov(&mean, &cov)?;
        let d = mean.len();
        if x_dim == 0 || x_dim >= d {
            return Err(EstimatorError::Dimension { expected: d, got: x_dim });
        }
        let y_dim = d - x_dim;
        let m = DVector::from_vec(mean.clone());
        let (mx, my) = (m.rows(0, x_dim).into_owned(), m.rows(x_dim, y_dim).into_owned());
        let sxx = cov.view((0, 0), (x_dim, x_dim)).into_owned();
        let sxy = cov.view((0, x_dim), (x_dim, y_dim)).into_owned();
        let syy = cov.view((x_dim, x_dim), (y_dim, y_dim)).into_owned();
        Ok(Self {
            x_dim,
            marginal_x: GaussianOracle::new(mx.iter().copied().collect(), sxx.clone(), schedule)?,
            marginal_y: GaussianOracle::new(my.iter().copied().collect(), syy.clone(), schedule)?,
            cond_x: ConditionalGaussian::new(mx.clone(), my.clone(), sxx.clone(), sxy.clone(), syy.clone())?,
            cond_y: ConditionalGaussian::new(my, mx, syy, sxy.transpose(), sxx)?,
            joint: GaussianOracle::new(mean, cov, schedule)?,
        })
    }

    /// Standard bivariate normal with correlation `rho`.
    pub fn bivariate(rho: f64, schedule: VpSchedule) -> Result<Self, EstimatorError> {
        let cov = DMatrix::from_row_slice(2, 2, &[1.0, rho, rho, 1.0]);
        Self::new(1, vec![0.0, 0.0], cov, schedule)
    }

    pub fn joint_oracle(&self) -> &GaussianOracle {
        &self.joint
    }

    pub fn marginal_x(&self) -> &GaussianOracle {
        &self.marginal_x
    }

    pub fn marginal_y(&self) -> &GaussianOracle {
        &self.marginal_y
    }

    /// Draws `n` pairs, returned as `(x, y)`.
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> (Tensor, Tensor) {
        let z = self.joint.sample(n, rng);
        let d = z.cols();
        (
            z.slice_cols(0, self.x_dim).expect("x block"),
            z.slice_cols(self.x_dim, d).expect("y block"),
        )
    }

    /// `I(A; B) = H(A) + H(B) - H(A, B)`.
    pub fn mutual_information(&self) -> f64 {
        self.marginal_x.entropy() + self.marginal_y.entropy() - self.joint.entropy()
    }
}

impl ConditionalOracle for GaussianPairOracle {
    fn x_dim(&self) -> usize {
        self.x_dim
    }
    fn y_dim(&self) -> usize {
        self.joint.dim() - self.x_dim
    }
    fn kind(&self) -> OracleKind {
        OracleKind::Analytic
    }
    fn schedule(&self) -> &VpSchedule {
        &self.joint.schedule
    }
    fn marginal(&self, xt: &Tensor, t: &[f64]) -> Result<Tensor, EstimatorError> {
        self.marginal_x.score(xt, t)
    }
    fn conditional(&self, xt: &Tensor, y0: &Tensor, t: &[f64]) -> Result<Tensor, EstimatorError> {
        self.cond_x.score(&self.joint.schedule, xt, y0, t)
    }
}

impl JointOracle for GaussianPairOracle {
    fn x_dim(&self) -> usize {
        self.x_dim
    }
    fn y_dim(&self) -> usize {
        self.joint.dim() - self.x_dim
    }
    fn kind(&self) -> OracleKind {
        OracleKind::Analytic
    }
    fn schedule(&self) -> &VpSchedule {
        &self.joint.schedule
    }
    fn joint(&self, xt: &Tensor, yt: &Tensor, t: &[f64]) -> Result<Tensor, EstimatorError> {
        self.joint.score(&Tensor::hcat(&[xt, yt])?, t)
    }
    fn cond_x(&self, xt: &Tensor, y0: &Tensor, t: &[f64]) -> Result<Tensor, EstimatorError> {
        self.cond_x.score(&self.joint.schedule, xt, y0, t)
    }
    fn cond_y(&self, x0: &Tensor, yt: &Tensor, t: &[f64]) -> Result<Tensor, EstimatorError> {
        self.cond_y.score(&self.joint.schedule, yt, x0, t)
    }
}

/// Score of `Q X` given the score of `X`, for orthogonal `Q`:
/// `s_Q(z) = Q s(Qᵀ z)`.
#[derive(Clone, Debug)]
pub struct OrthogonalMap<O> {
    inner: O,
    q: DMatrix<f64>,
}

impl<O: ScoreOracle> OrthogonalMap<O> {
    pub fn new(inner: O, q: DMatrix<f64>) -> Result<Self, EstimatorError> {
        check_orthogonal(&q, inner.dim())?;
        Ok(Self { inner, q })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.q
    }
}

/// Errors unless `q` is `dim × dim` with `QᵀQ = I` to 1e-9.
pub fn check_orthogonal(q: &DMatrix<f64>, dim: usize) -> Result<(), EstimatorError> {
    if q.nrows() != dim || q.ncols() != dim {
        return Err(EstimatorError::Dimension {
            expected: dim,
            got: q.nrows(),
        });
    }
    let dev = (q.tr_mul(q) - DMatrix::identity(dim, dim)).amax();
    if dev > 1e-9 {
        return Err(EstimatorError::NotOrthogonal(dev));
    }
    Ok(())
}

/// Right-multiplies rows: each row `r` becomes `(M r)ᵀ`.
pub fn apply_rows(m: &DMatrix<f64>, x: &Tensor) -> Tensor {
    let d = x.cols();
    let xm = DMatrix::from_row_slice(x.rows(), d, x.data());
    let out = xm * m.transpose();
    let mut data = Vec::with_capacity(x.len());
    for i in 0..out.nrows() {
        data.extend(out.row(i).iter());
    }
    Tensor::matrix(x.rows(), m.nrows(), data).expect("mapped shape")
}

impl<O: ScoreOracle> ScoreOracle for OrthogonalMap<O> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }
    fn kind(&self) -> OracleKind {
        self.inner.kind()
    }
    fn schedule(&self) -> &VpSchedule {
        self.inner.schedule()
    }
    fn score(&self, zt: &Tensor, t: &[f64]) -> Result<Tensor, EstimatorError> {
        let pulled = apply_rows(&self.q.transpose(), zt);
        let s = self.inner.score(&pulled, t)?;
        Ok(apply_rows(&self.q, &s))
    }
}
