//! Parameter-space geometry: a constant SPD metric and a drift field with
//! its Jacobian. Together these define the kinetic term of the objective.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::matfun;

/// A differentiable drift (default-dynamics) field.
pub trait DriftField {
    fn dim(&self) -> usize;
    fn eval(&self, theta: &DVector<f64>) -> DVector<f64>;

    /// Analytic Jacobian when available; the default central-differences it.
    fn jacobian(&self, theta: &DVector<f64>) -> DMatrix<f64> {
        let d = self.dim();
        let step = 1e-6;
        let mut jac = DMatrix::zeros(d, d);
        for j in 0..d {
            let mut plus = theta.clone();
            let mut minus = theta.clone();
            plus[j] += step;
            minus[j] -= step;
            let col = (self.eval(&plus) - self.eval(&minus)) / (2.0 * step);
            jac.set_column(j, &col);
        }
        jac
    }
}

/// Built-in drift kinds. All are linear in the state, which is all the
/// closed-form solutions cover; arbitrary fields can still implement
/// [`DriftField`] directly.
#[derive(Debug, Clone)]
pub enum Drift {
    /// No default dynamics.
    Zero { dim: usize },
    /// `f(θ) = Jθ` for a skew-symmetric generator (pure rotation).
    Rotation { generator: DMatrix<f64> },
    /// `f(θ) = -jθ`: weight decay at rate `j >= 0`.
    WeightDecay { rate: f64, dim: usize },
    /// `f(θ) = Aθ` for an arbitrary square matrix.
    Linear { matrix: DMatrix<f64> },
}

impl Drift {
    pub fn rotation(generator: DMatrix<f64>) -> Result<Self> {
        if !matfun::is_skew_symmetric(&generator, 1e-10) {
            return Err(Error::invalid(
                "Drift::rotation",
                "generator is not skew-symmetric",
            ));
        }
        Ok(Drift::Rotation { generator })
    }

    pub fn weight_decay(rate: f64, dim: usize) -> Result<Self> {
        if rate < 0.0 {
            return Err(Error::invalid("Drift::weight_decay", "rate must be >= 0"));
        }
        Ok(Drift::WeightDecay { rate, dim })
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Drift::Zero { .. })
    }
}

impl DriftField for Drift {
    fn dim(&self) -> usize {
        match self {
            Drift::Zero { dim } => *dim,
            Drift::Rotation { generator } => generator.nrows(),
            Drift::WeightDecay { dim, .. } => *dim,
            Drift::Linear { matrix } => matrix.nrows(),
        }
    }

    fn eval(&self, theta: &DVector<f64>) -> DVector<f64> {
        match self {
            Drift::Zero { .. } => DVector::zeros(theta.len()),
            Drift::Rotation { generator } => generator * theta,
            Drift::WeightDecay { rate, .. } => theta * -*rate,
            Drift::Linear { matrix } => matrix * theta,
        }
    }

    fn jacobian(&self, theta: &DVector<f64>) -> DMatrix<f64> {
        match self {
            Drift::Zero { .. } => DMatrix::zeros(theta.len(), theta.len()),
            Drift::Rotation { generator } => generator.clone(),
            Drift::WeightDecay { rate, dim } => DMatrix::identity(*dim, *dim) * -*rate,
            Drift::Linear { matrix } => matrix.clone(),
        }
    }
}

/// A drift field defined by a closure, Jacobian by finite differences.
pub struct FnDrift<F> {
    pub dim: usize,
    pub f: F,
}

impl<F: Fn(&DVector<f64>) -> DVector<f64>> DriftField for FnDrift<F> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval(&self, theta: &DVector<f64>) -> DVector<f64> {
        (self.f)(theta)
    }
}

/// Constant SPD metric plus drift field.
#[derive(Debug, Clone)]
pub struct GeometrySpec {
    metric: Option<DMatrix<f64>>,
    pub drift: Drift,
}

impl GeometrySpec {
    pub fn new(metric: Option<DMatrix<f64>>, drift: Drift) -> Result<Self> {
        if let Some(g) = &metric {
            let eig = matfun::sym_eig(g)?;
            eig.require_spd("GeometrySpec::new")?;
            if g.nrows() != drift.dim() {
                return Err(Error::invalid(
                    "GeometrySpec::new",
                    "metric and drift dimensions differ",
                ));
            }
        }
        Ok(Self { metric, drift })
    }

    pub fn euclidean(dim: usize) -> Self {
        Self { metric: None, drift: Drift::Zero { dim } }
    }

    pub fn with_metric(metric: DMatrix<f64>) -> Result<Self> {
        let dim = metric.nrows();
        Self::new(Some(metric), Drift::Zero { dim })
    }

    pub fn with_drift(drift: Drift) -> Self {
        Self { metric: None, drift }
    }

    pub fn dim(&self) -> usize {
        self.drift.dim()
    }

    pub fn metric(&self) -> Option<&DMatrix<f64>> {
        self.metric.as_ref()
    }

    /// Metric applied to a vector (identity when no metric is set).
    pub fn apply_metric(&self, v: &DVector<f64>) -> DVector<f64> {
        match &self.metric {
            Some(g) => g * v,
            None => v.clone(),
        }
    }
}
