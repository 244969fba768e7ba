//! Loss landscapes with exact analytic value/gradient/Hessian: quadratic
//! expansions, the 2D tilted double well, and the 1D double well with its
//! zero-offset global minimum.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::matfun;

/// Value, gradient and Hessian of a landscape at one point.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub value: f64,
    pub gradient: DVector<f64>,
    pub hessian: DMatrix<f64>,
}

/// An evaluable loss landscape.
pub trait Landscape {
    fn dim(&self) -> usize;
    fn value(&self, theta: &DVector<f64>) -> f64;
    fn gradient(&self, theta: &DVector<f64>) -> DVector<f64>;
    fn hessian(&self, theta: &DVector<f64>) -> DMatrix<f64>;

    /// Dimension-checked full evaluation.
    fn eval(&self, theta: &DVector<f64>) -> Result<Evaluation> {
        if theta.len() != self.dim() {
            return Err(Error::invalid(
                "landscape::eval",
                format!("point has dim {}, landscape has dim {}", theta.len(), self.dim()),
            ));
        }
        Ok(Evaluation {
            value: self.value(theta),
            gradient: self.gradient(theta),
            hessian: self.hessian(theta),
        })
    }
}

/// Quadratic expansion `L(θ) = L₀ + gᵀ(θ-θ₀) + ½(θ-θ₀)ᵀH(θ-θ₀)`.
#[derive(Debug, Clone)]
pub struct QuadraticLoss {
    pub base_point: DVector<f64>,
    pub base_value: f64,
    pub grad: DVector<f64>,
    pub hess: DMatrix<f64>,
}

impl QuadraticLoss {
    pub fn new(
        base_point: DVector<f64>,
        base_value: f64,
        grad: DVector<f64>,
        hess: DMatrix<f64>,
    ) -> Result<Self> {
        let ctx = "QuadraticLoss::new";
        let d = base_point.len();
        if grad.len() != d || hess.nrows() != d || hess.ncols() != d {
            return Err(Error::invalid(ctx, "inconsistent dimensions"));
        }
        let scale = hess.amax().max(1.0);
        if (&hess - hess.transpose()).amax() > 1e-10 * scale {
            return Err(Error::invalid(ctx, "Hessian is not symmetric"));
        }
        if base_point.iter().chain(grad.iter()).chain(hess.iter()).any(|x| !x.is_finite())
            || !base_value.is_finite()
        {
            return Err(Error::invalid(ctx, "non-finite entry"));
        }
        Ok(Self { base_point, base_value, grad, hess })
    }

    /// Isotropic bowl `h/2 ||θ - θ*||²` centered at `minimum`.
    pub fn isotropic(minimum: DVector<f64>, h: f64) -> Self {
        let d = minimum.len();
        Self {
            base_point: minimum,
            base_value: 0.0,
            grad: DVector::zeros(d),
            hess: DMatrix::identity(d, d) * h,
        }
    }

    /// Diagonal quadratic with the given curvatures, minimum at `minimum`.
    pub fn diagonal(minimum: DVector<f64>, curvatures: &[f64]) -> Self {
        let d = minimum.len();
        assert_eq!(curvatures.len(), d);
        Self {
            base_point: minimum,
            base_value: 0.0,
            grad: DVector::zeros(d),
            hess: DMatrix::from_diagonal(&DVector::from_row_slice(curvatures)),
        }
    }

    /// Location of the stationary point `θ₀ - H⁻¹ g` (the minimum when H is SPD).
    pub fn minimum(&self) -> Result<DVector<f64>> {
        let eig = matfun::sym_eig(&self.hess)?;
        let step = eig.solve(&self.grad, "QuadraticLoss::minimum")?;
        Ok(&self.base_point - step)
    }

    /// Re-expand the same polynomial around a new base point.
    pub fn re_anchored(&self, base: DVector<f64>) -> Self {
        let value = self.value(&base);
        let grad = self.gradient(&base);
        Self {
            base_point: base,
            base_value: value,
            grad,
            hess: self.hess.clone(),
        }
    }
}

impl Landscape for QuadraticLoss {
    fn dim(&self) -> usize {
        self.base_point.len()
    }

    fn value(&self, theta: &DVector<f64>) -> f64 {
        let d = theta - &self.base_point;
        self.base_value + self.grad.dot(&d) + 0.5 * d.dot(&(&self.hess * &d))
    }

    fn gradient(&self, theta: &DVector<f64>) -> DVector<f64> {
        let d = theta - &self.base_point;
        &self.grad + &self.hess * d
    }

    fn hessian(&self, _theta: &DVector<f64>) -> DMatrix<f64> {
        self.hess.clone()
    }
}

/// Tilted 2D double well `L(θ₁,θ₂) = a(θ₁²-b)² + cθ₂² + dθ₁`.
#[derive(Debug, Clone, Copy)]
pub struct DoubleWell2D {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
}

impl DoubleWell2D {
    pub fn new(a: f64, b: f64, c: f64, d: f64) -> Result<Self> {
        if !(a > 0.0 && c > 0.0) {
            return Err(Error::invalid("DoubleWell2D::new", "need a > 0 and c > 0"));
        }
        Ok(Self { a, b, c, d })
    }

    /// The two stationary wells `(θ₁, 0)`, found by Newton iteration on
    /// `L'(θ₁) = 4aθ₁(θ₁²-b) + d` from `∓√b`; returned (shallow, deep) by value.
    pub fn wells(&self) -> (DVector<f64>, DVector<f64>) {
        let root = |start: f64| {
            let mut x = start;
            for _ in 0..100 {
                let f = 4.0 * self.a * x * (x * x - self.b) + self.d;
                let fp = 4.0 * self.a * (3.0 * x * x - self.b);
                let step = f / fp;
                x -= step;
                if step.abs() < 1e-15 {
                    break;
                }
            }
            x
        };
        let sqrt_b = self.b.max(0.0).sqrt();
        let left = root(-sqrt_b);
        let right = root(sqrt_b);
        let as_point = |x: f64| DVector::from_vec(vec![x, 0.0]);
        let (l, r) = (as_point(left), as_point(right));
        if self.value(&l) > self.value(&r) {
            (l, r)
        } else {
            (r, l)
        }
    }
}

impl Landscape for DoubleWell2D {
    fn dim(&self) -> usize {
        2
    }

    fn value(&self, theta: &DVector<f64>) -> f64 {
        let (x, y) = (theta[0], theta[1]);
        self.a * (x * x - self.b).powi(2) + self.c * y * y + self.d * x
    }

    fn gradient(&self, theta: &DVector<f64>) -> DVector<f64> {
        let (x, y) = (theta[0], theta[1]);
        DVector::from_vec(vec![
            4.0 * self.a * x * (x * x - self.b) + self.d,
            2.0 * self.c * y,
        ])
    }

    fn hessian(&self, theta: &DVector<f64>) -> DMatrix<f64> {
        let x = theta[0];
        DMatrix::from_vec(2, 2, vec![
            4.0 * self.a * (3.0 * x * x - self.b),
            0.0,
            0.0,
            2.0 * self.c,
        ])
    }
}

/// 1D double well `L(θ) = h/4 (θ²-θ*²)² - q/3 θ³ - L_min`, offset so the
/// global minimum value is exactly zero.
#[derive(Debug, Clone, Copy)]
pub struct DoubleWell1D {
    pub h: f64,
    pub q: f64,
    pub theta_star: f64,
    /// Offset subtracted so that `L(θ₊) = 0`.
    pub l_min: f64,
}

impl DoubleWell1D {
    pub fn new(h: f64, q: f64, theta_star: f64) -> Result<Self> {
        if !(h > 0.0 && q >= 0.0 && theta_star > 0.0) {
            return Err(Error::invalid(
                "DoubleWell1D::new",
                "need h > 0, q >= 0, theta_star > 0",
            ));
        }
        let mut well = Self { h, q, theta_star, l_min: 0.0 };
        well.l_min = well.raw_value(well.deep_minimum());
        Ok(well)
    }

    fn raw_value(&self, x: f64) -> f64 {
        self.h / 4.0 * (x * x - self.theta_star * self.theta_star).powi(2)
            - self.q / 3.0 * x.powi(3)
    }

    /// Deep minimum `θ₊ = +√(θ*² + q²/4h²) + q/2h`.
    pub fn deep_minimum(&self) -> f64 {
        let half = self.q / (2.0 * self.h);
        (self.theta_star * self.theta_star + half * half).sqrt() + half
    }

    /// Shallow minimum `θ₋ = -√(θ*² + q²/4h²) + q/2h`.
    pub fn shallow_minimum(&self) -> f64 {
        let half = self.q / (2.0 * self.h);
        -(self.theta_star * self.theta_star + half * half).sqrt() + half
    }

    /// Roots of `L'` in ascending order: `{θ₋, 0, θ₊}`.
    pub fn critical_points(&self) -> [f64; 3] {
        [self.shallow_minimum(), 0.0, self.deep_minimum()]
    }

    pub fn value_1d(&self, x: f64) -> f64 {
        self.raw_value(x) - self.l_min
    }

    /// `L'(θ) = hθ(θ²-θ*²) - qθ²`.
    pub fn derivative(&self, x: f64) -> f64 {
        self.h * x * (x * x - self.theta_star * self.theta_star) - self.q * x * x
    }

    /// `L''(θ) = h(3θ²-θ*²) - 2qθ`.
    pub fn second_derivative(&self, x: f64) -> f64 {
        self.h * (3.0 * x * x - self.theta_star * self.theta_star) - 2.0 * self.q * x
    }
}

impl Landscape for DoubleWell1D {
    fn dim(&self) -> usize {
        1
    }

    fn value(&self, theta: &DVector<f64>) -> f64 {
        self.value_1d(theta[0])
    }

    fn gradient(&self, theta: &DVector<f64>) -> DVector<f64> {
        DVector::from_vec(vec![self.derivative(theta[0])])
    }

    fn hessian(&self, theta: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::from_vec(1, 1, vec![self.second_derivative(theta[0])])
    }
}

/// Max abs deviation between analytic derivatives and central finite
/// differences at `theta`.
#[derive(Debug, Clone, Copy)]
pub struct FiniteDiffReport {
    pub grad_error: f64,
    pub hess_error: f64,
}

/// Central-difference check of a landscape's analytic gradient and Hessian.
pub fn finite_diff_check(
    landscape: &dyn Landscape,
    theta: &DVector<f64>,
    step: f64,
) -> Result<FiniteDiffReport> {
    if step <= 0.0 {
        return Err(Error::invalid("landscape::finite_diff_check", "step must be > 0"));
    }
    let eval = landscape.eval(theta)?;
    let d = theta.len();

    let mut grad_error: f64 = 0.0;
    for i in 0..d {
        let mut plus = theta.clone();
        let mut minus = theta.clone();
        plus[i] += step;
        minus[i] -= step;
        let fd = (landscape.value(&plus) - landscape.value(&minus)) / (2.0 * step);
        grad_error = grad_error.max((fd - eval.gradient[i]).abs());
    }

    let mut hess_error: f64 = 0.0;
    for j in 0..d {
        let mut plus = theta.clone();
        let mut minus = theta.clone();
        plus[j] += step;
        minus[j] -= step;
        let gp = landscape.gradient(&plus);
        let gm = landscape.gradient(&minus);
        for i in 0..d {
            let fd = (gp[i] - gm[i]) / (2.0 * step);
            hess_error = hess_error.max((fd - eval.hessian[(i, j)]).abs());
        }
    }

    Ok(FiniteDiffReport { grad_error, hess_error })
}
