//! Closed-form solutions of the Euler-Lagrange equations for quadratic
//! losses: the momentum solution, its Newton/gradient-descent/ballistic
//! limits, metric (natural-gradient) variants, rotational and weight-decay
//! drift solutions, and the 1D specialization.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::geometry::DriftField;
use crate::landscape::QuadraticLoss;
use crate::matfun::{self, mat_exp};
use crate::objective::ObjectiveConfig;

/// Stable-branch solution `θ_t = e^{Rt} θ₀ + (I - e^{Rt}) θ_∞`.
///
/// `rates` is the stable rate operator (all eigenvalues have non-positive
/// real part; the growing root is discarded), `bias` the asymptotic bias
/// matrix (identity when the drift contributes none), and
/// `target = bias · (θ₀ - H⁻¹g)` the asymptotic point.
#[derive(Debug, Clone)]
pub struct SpectralSolution {
    pub rates: DMatrix<f64>,
    pub bias: DMatrix<f64>,
    pub target: DVector<f64>,
    pub base: DVector<f64>,
}

impl SpectralSolution {
    /// State at time `t >= 0`.
    pub fn eval(&self, t: f64) -> Result<DVector<f64>> {
        if !(t >= 0.0) {
            return Err(Error::invalid("SpectralSolution::eval", "t must be >= 0"));
        }
        let e = mat_exp(&self.rates, t)?;
        Ok(&e * &self.base + (DMatrix::identity(e.nrows(), e.ncols()) - &e) * &self.target)
    }

    /// Asymptotic (t → ∞) state.
    pub fn asymptote(&self) -> &DVector<f64> {
        &self.target
    }

    /// Sample the solution on a uniform grid over `[0, horizon]`.
    pub fn sample(&self, horizon: f64, segments: usize) -> Result<crate::objective::Trajectory> {
        let times: Vec<f64> = (0..=segments)
            .map(|i| horizon * i as f64 / segments as f64)
            .collect();
        let states = times
            .iter()
            .map(|&t| self.eval(t))
            .collect::<Result<Vec<_>>>()?;
        crate::objective::Trajectory::new(times, states)
    }
}

/// Which limit of the quadratic solution a learning rule realizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RuleRegime {
    /// Full solution at finite Δt; jumps to `-H⁻¹g` as Δt → ∞.
    Newton,
    /// Overdamped small-step limit: `-(ηk/γ) g Δt`.
    GradientDescent,
    /// Frictionless small-step limit: `-√(ηk) H^{-1/2} g Δt`.
    Ballistic,
    /// Overdamped limit under a metric: `-(ηk/γ) G⁻¹ g Δt`.
    NaturalGradient,
    /// Frictionless limit under a metric: `-√(ηk) √(G⁻¹H) H⁻¹ g Δt`.
    NaturalBallistic,
}

/// Per-mode stable rate `γ/2 - √(γ²/4 + ηk λ)`.
fn stable_rate(gamma: f64, etak_lambda: f64) -> f64 {
    gamma / 2.0 - (gamma * gamma / 4.0 + etak_lambda).sqrt()
}

/// Optimal trajectory for a quadratic loss under the plain (metric-free,
/// drift-free) objective:
/// `θ_t = θ₀ - (I - e^{(γ/2 I - √(γ²/4 I + ηkH)) t}) H⁻¹ g`.
pub fn momentum_solution(loss: &QuadraticLoss, cfg: &ObjectiveConfig) -> Result<SpectralSolution> {
    cfg.validate()?;
    let eig = matfun::sym_eig(&loss.hess)?;
    eig.require_spd("closedform::momentum_solution")?;
    let rates = eig.apply(|l| stable_rate(cfg.gamma, cfg.eta * cfg.k * l));
    let target = &loss.base_point - eig.solve(&loss.grad, "closedform::momentum_solution")?;
    let dim = loss.hess.nrows();
    Ok(SpectralSolution {
        rates,
        bias: DMatrix::identity(dim, dim),
        target,
        base: loss.base_point.clone(),
    })
}

/// Momentum solution under a constant SPD metric `G`: the plain solution
/// with `g → G⁻¹g` and `H → G⁻¹H`, every matrix function of `G⁻¹H` taken
/// through the symmetrizing similarity `G^{1/2}(G⁻¹H)G^{-1/2} = G^{-1/2}HG^{-1/2}`.
pub fn natural_momentum_solution(
    loss: &QuadraticLoss,
    cfg: &ObjectiveConfig,
    metric: &DMatrix<f64>,
) -> Result<SpectralSolution> {
    cfg.validate()?;
    let ctx = "closedform::natural_momentum_solution";
    let eig_g = matfun::sym_eig(metric)?;
    eig_g.require_spd(ctx)?;
    let g_sqrt = eig_g.apply(f64::sqrt);
    let g_inv_sqrt = eig_g.apply(|l| 1.0 / l.sqrt());

    let inner = &g_inv_sqrt * &loss.hess * &g_inv_sqrt;
    let eig_inner = matfun::sym_eig(&inner)?;
    eig_inner.require_spd(ctx)?;
    let rates_sym = eig_inner.apply(|l| stable_rate(cfg.gamma, cfg.eta * cfg.k * l));
    let rates = &g_inv_sqrt * rates_sym * &g_sqrt;

    // The asymptote is the loss minimum regardless of the metric:
    // (G⁻¹H)⁻¹ G⁻¹ g = H⁻¹ g.
    let eig_h = matfun::sym_eig(&loss.hess)?;
    let target = &loss.base_point - eig_h.solve(&loss.grad, ctx)?;
    let dim = loss.hess.nrows();
    Ok(SpectralSolution {
        rates,
        bias: DMatrix::identity(dim, dim),
        target,
        base: loss.base_point.clone(),
    })
}

/// One of the limit learning rules of the quadratic solution, as an update
/// vector for time step `dt`.
pub fn limit_rule(
    regime: RuleRegime,
    loss: &QuadraticLoss,
    cfg: &ObjectiveConfig,
    dt: f64,
    metric: Option<&DMatrix<f64>>,
) -> Result<DVector<f64>> {
    cfg.validate()?;
    let ctx = "closedform::limit_rule";
    if !(dt >= 0.0) {
        return Err(Error::invalid(ctx, "dt must be >= 0"));
    }
    let etak = cfg.eta * cfg.k;
    match regime {
        RuleRegime::Newton => {
            let solution = match metric {
                Some(g) => natural_momentum_solution(loss, cfg, g)?,
                None => momentum_solution(loss, cfg)?,
            };
            Ok(solution.eval(dt)? - &loss.base_point)
        }
        RuleRegime::GradientDescent | RuleRegime::NaturalGradient => {
            if cfg.gamma <= 0.0 {
                return Err(Error::invalid(
                    ctx,
                    "gradient-descent regime is undefined at gamma = 0",
                ));
            }
            let g = match (regime, metric) {
                (RuleRegime::NaturalGradient, None) => {
                    return Err(Error::invalid(ctx, "natural regime requires a metric"));
                }
                (_, Some(m)) => {
                    let eig = matfun::sym_eig(m)?;
                    eig.solve(&loss.grad, ctx)?
                }
                (_, None) => loss.grad.clone(),
            };
            Ok(g * (-etak / cfg.gamma * dt))
        }
        RuleRegime::Ballistic => {
            let inv_sqrt = matfun::spd_inv_sqrt(&loss.hess)?;
            Ok(inv_sqrt * &loss.grad * (-etak.sqrt() * dt))
        }
        RuleRegime::NaturalBallistic => {
            let Some(m) = metric else {
                return Err(Error::invalid(ctx, "natural regime requires a metric"));
            };
            let pre = matfun::pair_sqrt(m, &loss.hess)?;
            let eig_h = matfun::sym_eig(&loss.hess)?;
            let hinv_g = eig_h.solve(&loss.grad, ctx)?;
            Ok(pre.value * hinv_g * (-etak.sqrt() * dt))
        }
    }
}

/// Optimal trajectory under a purely rotational drift `f(θ) = Jθ` (skew `J`)
/// and isotropic curvature `H = hI`:
/// `θ_t = e^{Rt} θ₀ + (I - e^{Rt}) B (θ₀ - h⁻¹g)` with
/// `R = J + (γ/2 - √(γ²/4 + ηkh)) I` and `B = ηkh [ηkh·I - J(J + γI)]⁻¹`.
pub fn rotation_drift_solution(
    generator: &DMatrix<f64>,
    curvature: f64,
    grad: &DVector<f64>,
    base: &DVector<f64>,
    cfg: &ObjectiveConfig,
) -> Result<SpectralSolution> {
    cfg.validate()?;
    let ctx = "closedform::rotation_drift_solution";
    if !matfun::is_skew_symmetric(generator, 1e-10) {
        return Err(Error::invalid(ctx, "generator is not skew-symmetric"));
    }
    if !(curvature > 0.0) {
        return Err(Error::invalid(ctx, "curvature must be > 0"));
    }
    let dim = generator.nrows();
    if grad.len() != dim || base.len() != dim {
        return Err(Error::invalid(ctx, "dimension mismatch"));
    }
    let etakh = cfg.eta * cfg.k * curvature;
    let rates = generator + DMatrix::identity(dim, dim) * stable_rate(cfg.gamma, etakh);
    let m = DMatrix::identity(dim, dim) * etakh
        - generator * (generator + DMatrix::identity(dim, dim) * cfg.gamma);
    let bias = m
        .lu()
        .try_inverse()
        .ok_or_else(|| Error::invalid(ctx, "bias matrix ηkh·I - J(J+γI) is singular"))?
        * etakh;
    let target = &bias * (base - grad / curvature);
    Ok(SpectralSolution { rates, bias, target, base: base.clone() })
}

/// Optimal trajectory under weight-decay drift `f(θ) = -jθ`, assembled in
/// the eigenbasis of `H` from
/// `rᵢ = γ/2 - √(γ²/4 + (j-γ)j + ηkλᵢ)` and `bᵢ = ηkλᵢ / (ηkλᵢ + (j-γ)j)`.
pub fn weight_decay_drift_solution(
    decay_rate: f64,
    loss: &QuadraticLoss,
    cfg: &ObjectiveConfig,
) -> Result<SpectralSolution> {
    cfg.validate()?;
    let ctx = "closedform::weight_decay_drift_solution";
    if !(decay_rate >= 0.0) {
        return Err(Error::invalid(ctx, "decay rate must be >= 0"));
    }
    let eig = matfun::sym_eig(&loss.hess)?;
    eig.require_spd(ctx)?;
    let j = decay_rate;
    let shift = (j - cfg.gamma) * j;
    for l in eig.eigenvalues.iter() {
        let radicand = cfg.gamma * cfg.gamma / 4.0 + shift + cfg.eta * cfg.k * l;
        if radicand < 0.0 {
            return Err(Error::invalid(
                ctx,
                format!("negative radicand {radicand:e} at eigenvalue {l:e}"),
            ));
        }
    }
    let rates = eig.apply(|l| {
        cfg.gamma / 2.0
            - (cfg.gamma * cfg.gamma / 4.0 + shift + cfg.eta * cfg.k * l).sqrt()
    });
    let bias = eig.apply(|l| {
        let etakl = cfg.eta * cfg.k * l;
        etakl / (etakl + shift)
    });
    let minimum = &loss.base_point - eig.solve(&loss.grad, ctx)?;
    let target = &bias * minimum;
    Ok(SpectralSolution { rates, bias, target, base: loss.base_point.clone() })
}

/// 1D quadratic solution `θ_t = θ* + (θ₀ - θ*) e^{r₋ t}`,
/// `r₋ = γ/2 - √(γ²/4 + ηkh)`.
pub fn quad_1d_solution(theta0: f64, theta_star: f64, h: f64, cfg: &ObjectiveConfig, t: f64) -> f64 {
    let r = stable_rate(cfg.gamma, cfg.eta * cfg.k * h);
    theta_star + (theta0 - theta_star) * (r * t).exp()
}

/// Diagnostic for whether a drift field is a gradient field, plus the
/// effective discounting operator `γ_eff(θ) = γI + J(θ) - J(θ)ᵀ`.
#[derive(Debug, Clone)]
pub struct NonGradientDiagnostic {
    pub jacobian: DMatrix<f64>,
    pub is_gradient_field: bool,
    pub gamma_eff: DMatrix<f64>,
}

pub fn nongradient_diagnostic(
    field: &dyn DriftField,
    theta: &DVector<f64>,
    gamma: f64,
) -> NonGradientDiagnostic {
    let jac = field.jacobian(theta);
    let skew = &jac - jac.transpose();
    let is_gradient_field = skew.amax() <= 1e-8;
    let dim = jac.nrows();
    let gamma_eff = DMatrix::identity(dim, dim) * gamma + &skew;
    NonGradientDiagnostic { jacobian: jac, is_gradient_field, gamma_eff }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Drift;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn cfg(eta: f64, k: f64, gamma: f64) -> ObjectiveConfig {
        ObjectiveConfig::new(eta, k, gamma, 10.0, 100).unwrap()
    }

    fn scalar_loss(g: f64, h: f64, theta0: f64) -> QuadraticLoss {
        QuadraticLoss::new(
            DVector::from_vec(vec![theta0]),
            0.0,
            DVector::from_vec(vec![g]),
            DMatrix::from_vec(1, 1, vec![h]),
        )
        .unwrap()
    }

    #[test]
    fn momentum_solution_at_zero_and_infinity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let hess = crate::matfun::random_spd(3, 0.5, 3.0, &mut rng);
        let loss = QuadraticLoss::new(
            DVector::from_vec(vec![1.0, -0.5, 0.25]),
            0.0,
            DVector::from_vec(vec![0.4, 0.1, -0.2]),
            hess,
        )
        .unwrap();
        let sol = momentum_solution(&loss, &cfg(1.0, 1.0, 0.3)).unwrap();
        // t = 0: update is zero.
        assert!((sol.eval(0.0).unwrap() - &loss.base_point).amax() <= 1e-12);
        // t -> infinity: Newton point θ₀ - H⁻¹g.
        let newton = loss.minimum().unwrap();
        assert!((sol.eval(200.0).unwrap() - &newton).amax() <= 1e-10);
        assert!((sol.asymptote() - &newton).amax() <= 1e-12);
    }

    #[test]
    fn momentum_solution_scalar_half_step() {
        // g = 1, H = 1, η = k = 1, γ = 0: rate is -1, so at t = ln 2 the
        // update is -(1 - 1/2) = -0.5.
        let loss = scalar_loss(1.0, 1.0, 0.0);
        let sol = momentum_solution(&loss, &cfg(1.0, 1.0, 0.0)).unwrap();
        let update = sol.eval(2.0_f64.ln()).unwrap()[0];
        assert_relative_eq!(update, -0.5, epsilon = 1e-12);
    }

    #[test]
    fn limit_rule_gradient_descent_arithmetic() {
        let loss = QuadraticLoss::new(
            DVector::zeros(2),
            0.0,
            DVector::from_vec(vec![1.0, 0.0]),
            DMatrix::identity(2, 2),
        )
        .unwrap();
        let update = limit_rule(
            RuleRegime::GradientDescent,
            &loss,
            &cfg(1.0, 1.0, 2.0),
            0.1,
            None,
        )
        .unwrap();
        assert_relative_eq!(update[0], -0.05, epsilon = 1e-15);
        assert_relative_eq!(update[1], 0.0);
    }

    #[test]
    fn limit_rule_gradient_descent_rejects_zero_gamma() {
        let loss = scalar_loss(1.0, 1.0, 0.0);
        assert!(matches!(
            limit_rule(RuleRegime::GradientDescent, &loss, &cfg(1.0, 1.0, 0.0), 0.1, None),
            Err(Error::InvalidInput { .. })
        ));
    }

    #[test]
    fn natural_ballistic_with_identity_metric_is_plain_ballistic() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let hess = crate::matfun::random_spd(3, 0.5, 4.0, &mut rng);
        let loss = QuadraticLoss::new(
            DVector::zeros(3),
            0.0,
            DVector::from_vec(vec![1.0, -2.0, 0.5]),
            hess,
        )
        .unwrap();
        let c = cfg(1.3, 0.8, 0.0);
        let id = DMatrix::identity(3, 3);
        let nat = limit_rule(RuleRegime::NaturalBallistic, &loss, &c, 0.05, Some(&id)).unwrap();
        let plain = limit_rule(RuleRegime::Ballistic, &loss, &c, 0.05, None).unwrap();
        assert!((nat - plain).amax() <= 1e-10);
    }

    #[test]
    fn ballistic_vs_overdamped_rate_ratio_on_anisotropic_hessian() {
        // Curvature ratio 4 gives rate ratio 2 in the ballistic regime and
        // 4 in the overdamped regime.
        let rate = |gamma: f64, l: f64| (gamma * gamma / 4.0 + l).sqrt() - gamma / 2.0;
        let ballistic = rate(0.0, 4.0) / rate(0.0, 1.0);
        assert_relative_eq!(ballistic, 2.0, epsilon = 1e-12);
        let gamma = 100.0 * 4.0f64.sqrt();
        let overdamped = rate(gamma, 4.0) / rate(gamma, 1.0);
        assert!((overdamped - 4.0).abs() < 0.01, "ratio {overdamped}");
    }

    #[test]
    fn natural_momentum_reduces_to_plain_for_identity_metric() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let hess = crate::matfun::random_spd(2, 0.5, 2.0, &mut rng);
        let loss = QuadraticLoss::new(
            DVector::from_vec(vec![0.7, -0.3]),
            0.0,
            DVector::from_vec(vec![0.2, 0.9]),
            hess,
        )
        .unwrap();
        let c = cfg(1.0, 1.0, 0.5);
        let plain = momentum_solution(&loss, &c).unwrap();
        let nat = natural_momentum_solution(&loss, &c, &DMatrix::identity(2, 2)).unwrap();
        for t in [0.0, 0.3, 1.0, 4.0] {
            assert!((plain.eval(t).unwrap() - nat.eval(t).unwrap()).amax() <= 1e-10);
        }
    }

    #[test]
    fn natural_momentum_scaled_metric_equals_rescaled_eta() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let hess = crate::matfun::random_spd(3, 0.5, 2.0, &mut rng);
        let loss = QuadraticLoss::new(
            DVector::from_vec(vec![0.1, 0.2, -0.4]),
            0.0,
            DVector::from_vec(vec![-0.3, 0.8, 0.5]),
            hess,
        )
        .unwrap();
        let c_scale = 3.5;
        let scaled_metric = DMatrix::identity(3, 3) * c_scale;
        let nat = natural_momentum_solution(&loss, &cfg(1.0, 1.0, 0.4), &scaled_metric).unwrap();
        let rescaled = momentum_solution(&loss, &cfg(1.0 / c_scale, 1.0, 0.4)).unwrap();
        for t in [0.0, 0.5, 2.0, 8.0] {
            assert!(
                (nat.eval(t).unwrap() - rescaled.eval(t).unwrap()).amax() <= 1e-10,
                "mismatch at t = {t}"
            );
        }
        // Asymptote is the loss minimum regardless of metric.
        assert!((nat.asymptote() - loss.minimum().unwrap()).amax() <= 1e-12);
    }

    #[test]
    fn rotation_drift_reduces_to_momentum_when_generator_vanishes() {
        let loss = QuadraticLoss::new(
            DVector::from_vec(vec![1.0, -1.0]),
            0.0,
            DVector::from_vec(vec![0.5, 0.3]),
            DMatrix::identity(2, 2) * 1.7,
        )
        .unwrap();
        let c = cfg(1.0, 1.0, 0.2);
        let rot = rotation_drift_solution(
            &DMatrix::zeros(2, 2),
            1.7,
            &loss.grad,
            &loss.base_point,
            &c,
        )
        .unwrap();
        let mom = momentum_solution(&loss, &c).unwrap();
        for t in [0.0, 0.4, 1.5, 6.0] {
            assert!((rot.eval(t).unwrap() - mom.eval(t).unwrap()).amax() <= 1e-10);
        }
    }

    #[test]
    fn rotation_drift_bias_for_unit_generator() {
        // J² = -I, γ = 0, ηkh = 1  =>  B = ½I and θ_∞ = ½(θ₀ - g/h).
        let j = DMatrix::from_vec(2, 2, vec![0.0, 1.0, -1.0, 0.0]);
        let g = DVector::from_vec(vec![0.3, -0.2]);
        let base = DVector::from_vec(vec![1.0, 2.0]);
        let sol = rotation_drift_solution(&j, 1.0, &g, &base, &cfg(1.0, 1.0, 0.0)).unwrap();
        assert!((&sol.bias - DMatrix::identity(2, 2) * 0.5).amax() <= 1e-12);
        let expected = (&base - &g) * 0.5;
        assert!((sol.asymptote() - expected).amax() <= 1e-12);
        // The asymptote differs from the loss minimum whenever J != 0.
        let minimum = &base - &g;
        assert!((sol.asymptote() - minimum).amax() > 0.1);
    }

    #[test]
    fn weight_decay_limits() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let hess = crate::matfun::random_spd(3, 0.5, 3.0, &mut rng);
        let loss = QuadraticLoss::new(
            DVector::from_vec(vec![0.5, -0.5, 1.0]),
            0.0,
            DVector::from_vec(vec![0.2, 0.4, -0.6]),
            hess,
        )
        .unwrap();
        let c = cfg(1.0, 1.0, 0.3);
        let mom = momentum_solution(&loss, &c).unwrap();

        // j = 0 reduces exactly to the momentum solution.
        let j0 = weight_decay_drift_solution(0.0, &loss, &c).unwrap();
        for t in [0.0, 0.7, 3.0] {
            assert!((j0.eval(t).unwrap() - mom.eval(t).unwrap()).amax() <= 1e-10);
        }

        // j = γ cancels the shift: unit bias, momentum rates.
        let jg = weight_decay_drift_solution(c.gamma, &loss, &c).unwrap();
        assert!((&jg.bias - DMatrix::identity(3, 3)).amax() <= 1e-10);
        assert!((&jg.rates - &mom.rates).amax() <= 1e-10);

        // j > γ shrinks every bias eigenvalue below one, so the asymptote
        // is not the loss minimum.
        let jb = weight_decay_drift_solution(1.5, &loss, &c).unwrap();
        let bias_eig = crate::matfun::sym_eig(&jb.bias).unwrap();
        assert!(bias_eig.max_eigenvalue() < 1.0);
        let minimum = loss.minimum().unwrap();
        assert!((jb.asymptote() - &minimum).amax() > 1e-3);
        assert!(jb.asymptote().norm() < minimum.norm());
    }

    #[test]
    fn quad_1d_solution_values() {
        let c = cfg(1.0, 1.0, 0.0);
        assert_relative_eq!(quad_1d_solution(1.0, 0.0, 1.0, &c, 0.0), 1.0);
        assert_relative_eq!(
            quad_1d_solution(1.0, 0.0, 1.0, &c, 1.0),
            (-1.0f64).exp(),
            epsilon = 1e-15
        );
        assert!(quad_1d_solution(1.0, 0.0, 1.0, &c, 80.0).abs() <= 1e-30);
    }

    #[test]
    fn nongradient_diagnostic_cases() {
        let theta = DVector::from_vec(vec![0.5, -1.0]);
        // Weight decay is a gradient field.
        let wd = Drift::weight_decay(0.7, 2).unwrap();
        let d = nongradient_diagnostic(&wd, &theta, 0.3);
        assert!(d.is_gradient_field);
        assert!((d.gamma_eff - DMatrix::identity(2, 2) * 0.3).amax() <= 1e-12);

        // A rotation generator is not; γ_eff = γI + 2J.
        let j = DMatrix::from_vec(2, 2, vec![0.0, 1.0, -1.0, 0.0]);
        let rot = Drift::rotation(j.clone()).unwrap();
        let d = nongradient_diagnostic(&rot, &theta, 0.3);
        assert!(!d.is_gradient_field);
        let expected = DMatrix::identity(2, 2) * 0.3 + &j * 2.0;
        assert!((d.gamma_eff - expected).amax() <= 1e-12);

        // Zero field: γ_eff = γI.
        let z = Drift::Zero { dim: 2 };
        let d = nongradient_diagnostic(&z, &theta, 0.5);
        assert!(d.is_gradient_field);
        assert!((d.gamma_eff - DMatrix::identity(2, 2) * 0.5).amax() <= 1e-12);
    }

    #[test]
    fn momentum_first_order_expansion_matches_ballistic() {
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        let hess = crate::matfun::random_spd(3, 0.5, 3.0, &mut rng);
        let loss = QuadraticLoss::new(
            DVector::zeros(3),
            0.0,
            DVector::from_vec(vec![1.0, -0.4, 0.7]),
            hess,
        )
        .unwrap();
        let c = cfg(1.0, 1.0, 0.0);
        let sol = momentum_solution(&loss, &c).unwrap();
        // ||update(dt) - ballistic(dt)|| = O(dt²): halving dt shrinks it 4x.
        let err_at = |dt: f64| {
            let full = sol.eval(dt).unwrap() - &loss.base_point;
            let bal = limit_rule(RuleRegime::Ballistic, &loss, &c, dt, None).unwrap();
            (full - bal).norm()
        };
        let (e1, e2) = (err_at(0.02), err_at(0.01));
        let order = (e1 / e2).log2();
        assert!(order > 1.8, "observed order {order}");
    }

    #[test]
    fn momentum_small_step_overdamped_matches_gradient_descent() {
        let lmax: f64 = 2.0;
        let gamma = 100.0 * lmax.sqrt();
        let loss = QuadraticLoss::new(
            DVector::zeros(2),
            0.0,
            DVector::from_vec(vec![1.0, -0.5]),
            DMatrix::from_diagonal(&DVector::from_vec(vec![0.5, lmax])),
        )
        .unwrap();
        let c = cfg(1.0, 1.0, gamma);
        let dt = 1e-4;
        let full = momentum_solution(&loss, &c).unwrap().eval(dt).unwrap() - &loss.base_point;
        let gd = limit_rule(RuleRegime::GradientDescent, &loss, &c, dt, None).unwrap();
        let rel = (&full - &gd).norm() / gd.norm();
        assert!(rel <= 0.02, "relative deviation {rel}");
    }

    #[test]
    fn stable_branch_distance_decreases() {
        let loss = scalar_loss(0.8, 1.4, 2.0);
        for gamma in [0.0, 0.5, 3.0] {
            let sol = momentum_solution(&loss, &cfg(1.0, 1.0, gamma)).unwrap();
            let mut last = f64::INFINITY;
            for i in 0..40 {
                let t = 0.25 * i as f64;
                let d = (sol.eval(t).unwrap() - sol.asymptote()).norm();
                assert!(d <= last + 1e-12);
                last = d;
            }
        }
    }

    #[test]
    fn rotation_drift_spirals_with_monotone_angle() {
        let j = DMatrix::from_vec(2, 2, vec![0.0, 1.0, -1.0, 0.0]);
        let g = DVector::from_vec(vec![1.0, 0.0]);
        let base = DVector::from_vec(vec![2.0, 0.0]);
        let sol = rotation_drift_solution(&j, 1.0, &g, &base, &cfg(1.0, 1.0, 0.1)).unwrap();
        let target = sol.asymptote().clone();
        let mut prev_angle: Option<f64> = None;
        let mut unwrapped = 0.0;
        for i in 0..200 {
            let t = 0.05 * i as f64;
            let d = sol.eval(t).unwrap() - &target;
            let angle = d[1].atan2(d[0]);
            if let Some(p) = prev_angle {
                let mut delta = angle - p;
                while delta <= -std::f64::consts::PI {
                    delta += 2.0 * std::f64::consts::PI;
                }
                while delta > std::f64::consts::PI {
                    delta -= 2.0 * std::f64::consts::PI;
                }
                assert!(delta > 0.0, "angle went backwards at t = {t}");
                unwrapped += delta;
            }
            prev_angle = Some(angle);
        }
        assert!(unwrapped > std::f64::consts::PI, "should spiral well past a half turn");
    }
}
