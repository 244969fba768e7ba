//! Adaptive learning dynamics from a Bayesian model of local landscape
//! shape: coupled Euler-Lagrange systems for parameters and the (m, v)
//! gradient-mean/variance beliefs, their overdamped-belief reduction, the
//! resulting `V^{-1/2}` update rule, and the OU probe that motivates
//! Cov(g) ∝ H.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::ode::rk4_step;

/// Positivity floor for variance estimates.
pub const VARIANCE_FLOOR: f64 = 1e-12;

/// Model constants: curvature scaling, Ornstein-Uhlenbeck prior rates, and
/// observation noise scales, plus the objective constants η, k, γ.
#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
pub struct AdaptiveParams {
    /// Curvature scaling κ > 0 linking the variance belief to the Hessian
    /// estimate κV.
    pub kappa: f64,
    /// Prior decay rates (>= 0) for m and v.
    pub alpha1: f64,
    pub alpha2: f64,
    /// Prior diffusion scales (> 0).
    pub xi1: f64,
    pub xi2: f64,
    /// Observation noise scales (> 0) of the simplified model.
    pub sigma1: f64,
    pub sigma2: f64,
    pub eta: f64,
    pub k: f64,
    pub gamma: f64,
}

impl AdaptiveParams {
    pub fn validate(&self) -> Result<()> {
        let ctx = "AdaptiveParams";
        if !(self.kappa > 0.0) {
            return Err(Error::invalid(ctx, "kappa must be > 0"));
        }
        if !(self.alpha1 >= 0.0 && self.alpha2 >= 0.0) {
            return Err(Error::invalid(ctx, "alpha1, alpha2 must be >= 0"));
        }
        if !(self.xi1 > 0.0 && self.xi2 > 0.0) {
            return Err(Error::invalid(ctx, "xi1, xi2 must be > 0"));
        }
        if !(self.sigma1 > 0.0 && self.sigma2 > 0.0) {
            return Err(Error::invalid(ctx, "sigma1, sigma2 must be > 0"));
        }
        if !(self.eta > 0.0 && self.k > 0.0 && self.gamma >= 0.0) {
            return Err(Error::invalid(ctx, "need eta > 0, k > 0, gamma >= 0"));
        }
        Ok(())
    }

    /// Default κ from the OU-probe proportionality `Cov(g) = (σ²/2τ²) H`,
    /// i.e. `H = κ V` with `κ = 2τ²/σ²`.
    pub fn kappa_from_probe(tau: f64, sigma: f64) -> f64 {
        2.0 * tau * tau / (sigma * sigma)
    }
}

/// Parameters, belief estimates, and their time derivatives. `anchor` is the
/// expansion point θ₀ of the local landscape model; the variance floor
/// counter reports how often positivity had to be enforced.
#[derive(Debug, Clone)]
pub struct BeliefState {
    pub theta: DVector<f64>,
    pub m: DVector<f64>,
    pub v: DVector<f64>,
    pub theta_dot: DVector<f64>,
    pub m_dot: DVector<f64>,
    pub v_dot: DVector<f64>,
    pub anchor: DVector<f64>,
    pub floor_hits: u64,
}

impl BeliefState {
    /// State at rest: all velocities zero, anchor at θ.
    pub fn at_rest(theta: DVector<f64>, m: DVector<f64>, v: DVector<f64>) -> Result<Self> {
        let d = theta.len();
        if m.len() != d || v.len() != d {
            return Err(Error::invalid("BeliefState::at_rest", "dimension mismatch"));
        }
        if v.iter().any(|&x| x <= 0.0) {
            return Err(Error::invalid("BeliefState::at_rest", "v must be positive"));
        }
        Ok(Self {
            anchor: theta.clone(),
            theta_dot: DVector::zeros(d),
            m_dot: DVector::zeros(d),
            v_dot: DVector::zeros(d),
            theta,
            m,
            v,
            floor_hits: 0,
        })
    }

    pub fn dim(&self) -> usize {
        self.theta.len()
    }

    fn check(&self, g_obs: &DVector<f64>, ctx: &str) -> Result<()> {
        if g_obs.len() != self.dim() {
            return Err(Error::invalid(ctx, "observation dimension mismatch"));
        }
        if self.v.iter().any(|&x| x <= 0.0) {
            return Err(Error::invalid(ctx, "v must be positive"));
        }
        let finite = self
            .theta
            .iter()
            .chain(self.m.iter())
            .chain(self.v.iter())
            .chain(self.theta_dot.iter())
            .chain(self.m_dot.iter())
            .chain(self.v_dot.iter())
            .all(|x| x.is_finite());
        if !finite {
            return Err(Error::overflow(ctx, "non-finite state"));
        }
        Ok(())
    }

    fn pack(&self) -> DVector<f64> {
        let d = self.dim();
        let mut y = DVector::zeros(6 * d);
        for i in 0..d {
            y[i] = self.theta[i];
            y[d + i] = self.m[i];
            y[2 * d + i] = self.v[i];
            y[3 * d + i] = self.theta_dot[i];
            y[4 * d + i] = self.m_dot[i];
            y[5 * d + i] = self.v_dot[i];
        }
        y
    }

    fn unpack(&self, y: &DVector<f64>, ctx: &str) -> Result<Self> {
        if y.iter().any(|x| !x.is_finite()) {
            return Err(Error::overflow(ctx, "non-finite state after step"));
        }
        let d = self.dim();
        let mut next = self.clone();
        for i in 0..d {
            next.theta[i] = y[i];
            next.m[i] = y[d + i];
            next.v[i] = y[2 * d + i];
            next.theta_dot[i] = y[3 * d + i];
            next.m_dot[i] = y[4 * d + i];
            next.v_dot[i] = y[5 * d + i];
        }
        for vi in next.v.iter_mut() {
            if *vi < VARIANCE_FLOOR {
                *vi = VARIANCE_FLOOR;
                next.floor_hits += 1;
            }
        }
        Ok(next)
    }
}

/// Which observation model drives the belief terms.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ObservationModel {
    /// Gradient observed with its own believed covariance: `g ~ N(m, V/Δt)`.
    Full,
    /// Gradients and squared deviations as independent observations with
    /// fixed noise scales σ₁, σ₂.
    Simplified,
}

fn el_accelerations(
    model: ObservationModel,
    y: &DVector<f64>,
    g_obs: &DVector<f64>,
    anchor: &DVector<f64>,
    p: &AdaptiveParams,
) -> DVector<f64> {
    let d = g_obs.len();
    let mut dy = DVector::zeros(6 * d);
    for i in 0..d {
        let theta = y[i];
        let m = y[d + i];
        let v = y[2 * d + i].max(VARIANCE_FLOOR);
        let theta_dot = y[3 * d + i];
        let m_dot = y[4 * d + i];
        let v_dot = y[5 * d + i];
        let g = g_obs[i];
        let dev = theta - anchor[i];

        // positions advance with their velocities
        dy[i] = theta_dot;
        dy[d + i] = m_dot;
        dy[2 * d + i] = v_dot;

        // θ̈ = γθ̇ + ηk [ m + κ v (θ - θ₀) ]
        dy[3 * d + i] = p.gamma * theta_dot + p.eta * p.k * (m + p.kappa * v * dev);

        // m̈ = γ(ṁ + α₁ m) + α₁² m + ξ₁² [ k(θ-θ₀) + (m - g)/denom ]
        let m_denom = match model {
            ObservationModel::Full => v,
            ObservationModel::Simplified => p.sigma1 * p.sigma1,
        };
        dy[4 * d + i] = p.gamma * (m_dot + p.alpha1 * m)
            + p.alpha1 * p.alpha1 * m
            + p.xi1 * p.xi1 * (p.k * dev + (m - g) / m_denom);

        // v̈ = γ(v̇ + α₂ v) + α₂² v + ξ₂² [ kκ/2 (θ-θ₀)² + obs term ]
        let v_obs = match model {
            ObservationModel::Full => 0.5 / v - (g - m) * (g - m) / (2.0 * v * v),
            ObservationModel::Simplified => {
                (v - (g - m) * (g - m)) / (p.sigma2 * p.sigma2)
            }
        };
        dy[5 * d + i] = p.gamma * (v_dot + p.alpha2 * v)
            + p.alpha2 * p.alpha2 * v
            + p.xi2 * p.xi2 * (p.k * p.kappa / 2.0 * dev * dev + v_obs);
    }
    dy
}

fn el_step(
    model: ObservationModel,
    state: &BeliefState,
    g_obs: &DVector<f64>,
    params: &AdaptiveParams,
    dt: f64,
    ctx: &str,
) -> Result<BeliefState> {
    params.validate()?;
    state.check(g_obs, ctx)?;
    let y = state.pack();
    let next = rk4_step(&y, dt, |y| {
        el_accelerations(model, y, g_obs, &state.anchor, params)
    });
    state.unpack(&next, ctx)
}

/// One RK4 step of the full-observation-model EL system
/// (`g ~ N(m, V/Δt)`; the v-equation carries the `1/2v` entropy-like term).
pub fn el_step_full(
    state: &BeliefState,
    g_obs: &DVector<f64>,
    params: &AdaptiveParams,
    dt: f64,
) -> Result<BeliefState> {
    el_step(ObservationModel::Full, state, g_obs, params, dt, "adaptive::el_step_full")
}

/// One RK4 step of the simplified-observation-model EL system (independent
/// gradient and squared-gradient observations with scales σ₁, σ₂).
pub fn el_step_simplified(
    state: &BeliefState,
    g_obs: &DVector<f64>,
    params: &AdaptiveParams,
    dt: f64,
) -> Result<BeliefState> {
    el_step(
        ObservationModel::Simplified,
        state,
        g_obs,
        params,
        dt,
        "adaptive::el_step_simplified",
    )
}

/// One step of the reduced system: first-order belief dynamics (overdamped
/// in γ) plus the ballistic parameter update `-√(ηk) V^{-1/2} m Δt`.
pub fn reduced_step(
    state: &BeliefState,
    g_obs: &DVector<f64>,
    params: &AdaptiveParams,
    dt: f64,
) -> Result<BeliefState> {
    let ctx = "adaptive::reduced_step";
    params.validate()?;
    state.check(g_obs, ctx)?;
    if params.gamma <= 0.0 {
        return Err(Error::invalid(ctx, "the reduced system requires gamma > 0"));
    }
    let mut next = state.clone();
    let d = state.dim();
    for i in 0..d {
        let dev = state.theta[i] - state.anchor[i];
        let m = state.m[i];
        let v = state.v[i];
        let g = g_obs[i];

        let theta_rate = -(params.eta * params.k).sqrt() / v.sqrt() * m;
        let m_rate = -params.alpha1 * m
            - params.xi1 * params.xi1 / params.gamma
                * (params.k * dev + (m - g) / (params.sigma1 * params.sigma1));
        let v_rate = -params.alpha2 * v
            - params.xi2 * params.xi2 / params.gamma
                * (params.k * params.kappa / 2.0 * dev * dev
                    + (v - (g - m) * (g - m)) / (params.sigma2 * params.sigma2));

        next.theta[i] = state.theta[i] + theta_rate * dt;
        next.m[i] = m + m_rate * dt;
        next.v[i] = v + v_rate * dt;
        next.theta_dot[i] = theta_rate;
        next.m_dot[i] = m_rate;
        next.v_dot[i] = v_rate;
        if next.v[i] < VARIANCE_FLOOR {
            next.v[i] = VARIANCE_FLOOR;
            next.floor_hits += 1;
        }
    }
    if next.theta.iter().chain(next.m.iter()).any(|x| !x.is_finite()) {
        return Err(Error::overflow(ctx, "non-finite state after step"));
    }
    Ok(next)
}

/// The adaptive update `Δθ = -√(ηk) V^{-1/2} m Δt` (diagonal V).
pub fn adaptive_rule(
    m: &DVector<f64>,
    v: &DVector<f64>,
    eta: f64,
    k: f64,
    dt: f64,
) -> Result<DVector<f64>> {
    let ctx = "adaptive::adaptive_rule";
    if m.len() != v.len() {
        return Err(Error::invalid(ctx, "dimension mismatch"));
    }
    if v.iter().any(|&x| x <= 0.0) {
        return Err(Error::invalid(ctx, "v must be positive component-wise"));
    }
    let scale = -(eta * k).sqrt() * dt;
    Ok(DVector::from_fn(m.len(), |i, _| scale * m[i] / v[i].sqrt()))
}

/// Configuration of the gradient-noise probe: a noisy parameter explores a
/// quadratic landscape by relaxation plus white noise, and the covariance of
/// the observed gradients is compared with the `(σ²/2τ²) H` prediction.
#[derive(Debug, Clone)]
pub struct OuProbeParams {
    /// Relaxation time τ > 0.
    pub tau: f64,
    /// Noise scale σ > 0.
    pub sigma: f64,
    pub hessian: DMatrix<f64>,
    pub grad: DVector<f64>,
    pub base_point: DVector<f64>,
    pub n_steps: usize,
    pub dt: f64,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct OuProbeReport {
    pub empirical: DMatrix<f64>,
    pub predicted: DMatrix<f64>,
    /// Relative Frobenius error between the two.
    pub relative_error: f64,
}

/// Simulate `dθ̃ = -(1/τ)∇L dt + σ dW` by Euler-Maruyama, discard the first
/// `10τ` as burn-in, and accumulate the second moment of the observed
/// gradients `∇L(θ̃)`.
pub fn ou_probe(params: &OuProbeParams) -> Result<OuProbeReport> {
    let ctx = "adaptive::ou_probe";
    if !(params.tau > 0.0 && params.sigma >= 0.0 && params.dt > 0.0) {
        return Err(Error::invalid(ctx, "need tau > 0, sigma >= 0, dt > 0"));
    }
    if params.dt > params.tau / 10.0 {
        return Err(Error::invalid(ctx, "dt must be <= tau/10 for stability"));
    }
    let d = params.base_point.len();
    if params.hessian.nrows() != d || params.hessian.ncols() != d || params.grad.len() != d {
        return Err(Error::invalid(ctx, "dimension mismatch"));
    }
    let burn_in = (10.0 * params.tau / params.dt).ceil() as usize;
    if params.n_steps <= burn_in {
        return Err(Error::invalid(
            ctx,
            format!("n_steps must exceed the burn-in of {burn_in} steps"),
        ));
    }

    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(params.seed);
    let noise_scale = params.sigma * params.dt.sqrt();
    let mut theta = params.base_point.clone();
    let mut second_moment = DMatrix::zeros(d, d);
    let mut kept = 0usize;

    for step in 0..params.n_steps {
        let grad = &params.grad + &params.hessian * (&theta - &params.base_point);
        if step >= burn_in {
            second_moment.syger(1.0, &grad, &grad, 1.0);
            kept += 1;
        }
        let noise = DVector::from_fn(d, |_, _| -> f64 { StandardNormal.sample(&mut rng) });
        theta += grad * (-params.dt / params.tau) + noise * noise_scale;
        if theta.iter().any(|x| !x.is_finite()) {
            return Err(Error::overflow(ctx, format!("state diverged at step {step}")));
        }
    }
    // syger fills the lower triangle; mirror it.
    let empirical = {
        let mut m = second_moment / kept as f64;
        for i in 0..d {
            for j in (i + 1)..d {
                m[(i, j)] = m[(j, i)];
            }
        }
        m
    };
    let predicted = &params.hessian * (params.sigma * params.sigma / (2.0 * params.tau * params.tau));
    let relative_error = (&empirical - &predicted).norm() / predicted.norm();
    Ok(OuProbeReport { empirical, predicted, relative_error })
}
