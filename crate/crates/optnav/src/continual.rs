//! Distributional learning dynamics: each parameter carries a normal belief
//! N(μᵢ, vᵢ); KL-rate kinetic costs plus an entropy bonus yield coupled
//! second-order dynamics for (μ, v), an overdamped first-order limit with
//! equilibrium variance 1/(k·Hᵢᵢ), and task-transition behavior under a
//! schedule of quadratic losses.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::landscape::{Landscape, QuadraticLoss};
use crate::objective::ObjectiveConfig;
use crate::ode::rk4_step;

/// Positivity floor for belief variances.
pub const VARIANCE_FLOOR: f64 = 1e-12;

/// Mean/variance belief state with time derivatives.
#[derive(Debug, Clone)]
pub struct DistributionalState {
    pub mean: DVector<f64>,
    pub variance: DVector<f64>,
    pub mean_dot: DVector<f64>,
    pub variance_dot: DVector<f64>,
    pub floor_hits: u64,
}

impl DistributionalState {
    pub fn at_rest(mean: DVector<f64>, variance: DVector<f64>) -> Result<Self> {
        let ctx = "DistributionalState::at_rest";
        if mean.len() != variance.len() {
            return Err(Error::invalid(ctx, "dimension mismatch"));
        }
        if variance.iter().any(|&v| v <= 0.0) {
            return Err(Error::invalid(ctx, "variance must be positive"));
        }
        let d = mean.len();
        Ok(Self {
            mean,
            variance,
            mean_dot: DVector::zeros(d),
            variance_dot: DVector::zeros(d),
            floor_hits: 0,
        })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    fn check(&self, ctx: &str) -> Result<()> {
        if self.variance.iter().any(|&v| v <= 0.0) {
            return Err(Error::invalid(ctx, "variance must be positive"));
        }
        let finite = self
            .mean
            .iter()
            .chain(self.variance.iter())
            .chain(self.mean_dot.iter())
            .chain(self.variance_dot.iter())
            .all(|x| x.is_finite());
        if !finite {
            return Err(Error::overflow(ctx, "non-finite state"));
        }
        Ok(())
    }

    fn apply_floor(&mut self) {
        for v in self.variance.iter_mut() {
            if *v < VARIANCE_FLOOR {
                *v = VARIANCE_FLOOR;
                self.floor_hits += 1;
            }
        }
    }
}

/// Exact KL divergence between diagonal Gaussians together with its
/// leading-order quadratic form in the rates (μ̇, v̇).
#[derive(Debug, Clone, Copy)]
pub struct KlRate {
    /// `KL(N(μ₁,v₁) || N(μ₀,v₀))`, summed over coordinates.
    pub exact: f64,
    /// `Σᵢ (½ μ̇ᵢ²/vᵢ + ¼ v̇ᵢ²/vᵢ²)(Δt)²` with rates from finite differences
    /// and vᵢ taken at the base point.
    pub quadratic: f64,
}

/// KL divergence of the step `q = (μ₀,v₀) -> p = (μ₁,v₁)` and its small-Δt
/// quadratic approximation.
pub fn kl_rate(
    p: (&DVector<f64>, &DVector<f64>),
    q: (&DVector<f64>, &DVector<f64>),
    dt: f64,
) -> Result<KlRate> {
    let ctx = "continual::kl_rate";
    let (mu1, v1) = p;
    let (mu0, v0) = q;
    if mu1.len() != mu0.len() || v1.len() != v0.len() || mu1.len() != v1.len() {
        return Err(Error::invalid(ctx, "dimension mismatch"));
    }
    if !(dt > 0.0) {
        return Err(Error::invalid(ctx, "dt must be > 0"));
    }
    if v0.iter().chain(v1.iter()).any(|&v| v <= 0.0) {
        return Err(Error::invalid(ctx, "variances must be positive"));
    }
    let mut exact = 0.0;
    let mut quadratic = 0.0;
    for i in 0..mu1.len() {
        let dm = mu1[i] - mu0[i];
        exact += 0.5 * ((v1[i] + dm * dm) / v0[i] - 1.0 - (v1[i] / v0[i]).ln());
        let mu_rate = dm / dt;
        let v_rate = (v1[i] - v0[i]) / dt;
        quadratic += (0.5 * mu_rate * mu_rate / v0[i]
            + 0.25 * v_rate * v_rate / (v0[i] * v0[i]))
            * dt
            * dt;
    }
    Ok(KlRate { exact, quadratic })
}

fn rates(
    y: &DVector<f64>,
    loss: &QuadraticLoss,
    cfg: &ObjectiveConfig,
) -> DVector<f64> {
    let d = loss.dim();
    let mu = DVector::from_fn(d, |i, _| y[i]);
    let grad = loss.gradient(&mu);
    let mut dy = DVector::zeros(4 * d);
    for i in 0..d {
        let v = y[d + i].max(VARIANCE_FLOOR);
        let mu_dot = y[2 * d + i];
        let v_dot = y[3 * d + i];
        let h_ii = loss.hess[(i, i)];

        dy[i] = mu_dot;
        dy[d + i] = v_dot;
        // μ̈ᵢ = [v̇ᵢ/vᵢ + γ] μ̇ᵢ + ηk vᵢ [gᵢ + Σⱼ Hᵢⱼ(μⱼ-μⱼ₀)]
        dy[2 * d + i] = (v_dot / v + cfg.gamma) * mu_dot + cfg.eta * cfg.k * v * grad[i];
        // v̈ᵢ = γv̇ᵢ + 2η[ k/2 Hᵢᵢ vᵢ² - ½vᵢ ] + v̇ᵢ²/vᵢ - μ̇ᵢ²
        dy[3 * d + i] = cfg.gamma * v_dot
            + 2.0 * cfg.eta * (0.5 * cfg.k * h_ii * v * v - 0.5 * v)
            + v_dot * v_dot / v
            - mu_dot * mu_dot;
    }
    dy
}

/// One RK4 step of the full second-order (μ, v) system.
pub fn el_step(
    state: &DistributionalState,
    loss: &QuadraticLoss,
    cfg: &ObjectiveConfig,
    dt: f64,
) -> Result<DistributionalState> {
    let ctx = "continual::el_step";
    cfg.validate()?;
    state.check(ctx)?;
    if state.dim() != loss.dim() {
        return Err(Error::invalid(ctx, "state and loss dimensions differ"));
    }
    let d = state.dim();
    let mut y = DVector::zeros(4 * d);
    for i in 0..d {
        y[i] = state.mean[i];
        y[d + i] = state.variance[i];
        y[2 * d + i] = state.mean_dot[i];
        y[3 * d + i] = state.variance_dot[i];
    }
    let next = rk4_step(&y, dt, |y| rates(y, loss, cfg));
    if next.iter().any(|x| !x.is_finite()) {
        return Err(Error::overflow(ctx, "non-finite state after step"));
    }
    let mut out = state.clone();
    for i in 0..d {
        out.mean[i] = next[i];
        out.variance[i] = next[d + i];
        out.mean_dot[i] = next[2 * d + i];
        out.variance_dot[i] = next[3 * d + i];
    }
    out.apply_floor();
    Ok(out)
}

/// One explicit Euler step of the overdamped (large γ) limit:
/// `μ̇ᵢ = -(ηk vᵢ/γ)[g + H(μ-μ₀)]ᵢ`, `v̇ᵢ = (η/γ)(vᵢ - k Hᵢᵢ vᵢ²)`.
pub fn overdamped_step(
    state: &DistributionalState,
    loss: &QuadraticLoss,
    cfg: &ObjectiveConfig,
    dt: f64,
) -> Result<DistributionalState> {
    let ctx = "continual::overdamped_step";
    cfg.validate()?;
    state.check(ctx)?;
    if state.dim() != loss.dim() {
        return Err(Error::invalid(ctx, "state and loss dimensions differ"));
    }
    if cfg.gamma <= 0.0 {
        return Err(Error::invalid(ctx, "overdamped limit requires gamma > 0"));
    }
    let grad = loss.gradient(&state.mean);
    let mut out = state.clone();
    for i in 0..state.dim() {
        let v = state.variance[i];
        let mu_rate = -cfg.eta * cfg.k * v / cfg.gamma * grad[i];
        let v_rate = cfg.eta / cfg.gamma * (v - cfg.k * loss.hess[(i, i)] * v * v);
        out.mean[i] += mu_rate * dt;
        out.variance[i] += v_rate * dt;
        out.mean_dot[i] = mu_rate;
        out.variance_dot[i] = v_rate;
    }
    if out.mean.iter().chain(out.variance.iter()).any(|x| !x.is_finite()) {
        return Err(Error::overflow(ctx, "non-finite state after step"));
    }
    out.apply_floor();
    Ok(out)
}

/// Equilibrium variance of the overdamped dynamics: `1/(k Hᵢᵢ)`.
pub fn equilibrium_variance(loss: &QuadraticLoss, k: f64) -> DVector<f64> {
    DVector::from_fn(loss.dim(), |i, _| 1.0 / (k * loss.hess[(i, i)]))
}

/// Integration mode for schedules.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleMode {
    Full,
    Overdamped,
}

/// An ordered sequence of (quadratic loss, duration) tasks.
#[derive(Debug, Clone)]
pub struct TaskSchedule {
    pub segments: Vec<(QuadraticLoss, f64)>,
}

impl TaskSchedule {
    pub fn new(segments: Vec<(QuadraticLoss, f64)>) -> Result<Self> {
        let ctx = "TaskSchedule::new";
        if segments.is_empty() {
            return Err(Error::invalid(ctx, "schedule needs at least one segment"));
        }
        if segments.iter().any(|(_, d)| !(*d > 0.0)) {
            return Err(Error::invalid(ctx, "durations must be positive"));
        }
        let dim = segments[0].0.dim();
        if segments.iter().any(|(l, _)| l.dim() != dim) {
            return Err(Error::invalid(ctx, "all segments must share one dimension"));
        }
        Ok(Self { segments })
    }
}

/// One row of a schedule trace.
#[derive(Debug, Clone)]
pub struct TracePoint {
    pub time: f64,
    pub segment: usize,
    pub state: DistributionalState,
}

/// Integrate the chosen dynamics through a task schedule, swapping the loss
/// at segment boundaries (state and velocities carry across; the quadratic
/// expansion point is re-anchored at the current mean).
pub fn run_schedule(
    initial: &DistributionalState,
    schedule: &TaskSchedule,
    cfg: &ObjectiveConfig,
    dt: f64,
    mode: ScheduleMode,
) -> Result<Vec<TracePoint>> {
    let ctx = "continual::run_schedule";
    if !(dt > 0.0) {
        return Err(Error::invalid(ctx, "dt must be > 0"));
    }
    let mut state = initial.clone();
    let mut trace = vec![TracePoint { time: 0.0, segment: 0, state: state.clone() }];
    let mut t = 0.0;
    for (seg_idx, (loss, duration)) in schedule.segments.iter().enumerate() {
        let loss = loss.re_anchored(state.mean.clone());
        let steps = (duration / dt).round().max(1.0) as usize;
        for _ in 0..steps {
            state = match mode {
                ScheduleMode::Full => el_step(&state, &loss, cfg, dt),
                ScheduleMode::Overdamped => overdamped_step(&state, &loss, cfg, dt),
            }
            .map_err(|e| Error::invalid(ctx, format!("segment {seg_idx}: {e}")))?;
            t += dt;
            trace.push(TracePoint { time: t, segment: seg_idx, state: state.clone() });
        }
    }
    Ok(trace)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::DMatrix;

    fn cfg(eta: f64, k: f64, gamma: f64) -> ObjectiveConfig {
        ObjectiveConfig::new(eta, k, gamma, 1.0, 1).unwrap()
    }

    fn quad_1d(h: f64, minimum: f64) -> QuadraticLoss {
        QuadraticLoss::isotropic(DVector::from_vec(vec![minimum]), h)
    }

    #[test]
    fn kl_rate_identical_distributions_is_zero() {
        let mu = DVector::from_vec(vec![0.3, -0.2]);
        let v = DVector::from_vec(vec![1.0, 2.0]);
        let r = kl_rate((&mu, &v), (&mu, &v), 0.1).unwrap();
        assert_eq!(r.exact, 0.0);
        assert_eq!(r.quadratic, 0.0);
    }

    #[test]
    fn kl_rate_leading_term_hand_value() {
        // μ̇ = 1, v = 1, v̇ = 0 -> quadratic form = ½ (Δt)².
        let dt = 0.01;
        let mu0 = DVector::from_vec(vec![0.0]);
        let mu1 = DVector::from_vec(vec![dt]); // rate 1
        let v = DVector::from_vec(vec![1.0]);
        let r = kl_rate((&mu1, &v), (&mu0, &v), dt).unwrap();
        assert_relative_eq!(r.quadratic, 0.5 * dt * dt, epsilon = 1e-15);
    }

    #[test]
    fn kl_rate_quadratic_form_error_is_third_order() {
        let check = |dt: f64| {
            let mu0 = DVector::from_vec(vec![0.2]);
            let v0 = DVector::from_vec(vec![0.8]);
            let mu1 = DVector::from_vec(vec![0.2 + 0.7 * dt]);
            let v1 = DVector::from_vec(vec![0.8 + 0.5 * dt]);
            let r = kl_rate((&mu1, &v1), (&mu0, &v0), dt).unwrap();
            (r.exact - r.quadratic).abs()
        };
        let order = (check(0.02) / check(0.01)).log2();
        assert!(order > 2.7, "observed order {order}");
    }

    #[test]
    fn el_step_stationary_at_equilibrium() {
        // μ at the loss minimum, v = 1/(kH), zero velocities: fixed point.
        let k = 1.0;
        let h = 2.0;
        let loss = quad_1d(h, 0.5);
        let c = cfg(1.0, k, 0.7);
        let state = DistributionalState::at_rest(
            DVector::from_vec(vec![0.5]),
            DVector::from_vec(vec![1.0 / (k * h)]),
        )
        .unwrap();
        let next = el_step(&state, &loss, &c, 1e-2).unwrap();
        assert!((next.mean[0] - 0.5).abs() <= 1e-12);
        assert!((next.variance[0] - 1.0 / (k * h)).abs() <= 1e-12);
        assert!(next.mean_dot[0].abs() <= 1e-12);
        assert!(next.variance_dot[0].abs() <= 1e-12);
    }

    #[test]
    fn el_step_halving_error_is_rk4_order() {
        let loss = quad_1d(1.5, 0.0);
        let c = cfg(1.0, 1.0, 0.4);
        let mut state = DistributionalState::at_rest(
            DVector::from_vec(vec![1.0]),
            DVector::from_vec(vec![0.9]),
        )
        .unwrap();
        state.mean_dot[0] = -0.3;
        let gap = |dt: f64| {
            let one = el_step(&state, &loss, &c, dt).unwrap();
            let half = el_step(&state, &loss, &c, dt / 2.0).unwrap();
            let half2 = el_step(&half, &loss, &c, dt / 2.0).unwrap();
            ((one.mean[0] - half2.mean[0]).abs()).max((one.variance[0] - half2.variance[0]).abs())
        };
        let order = (gap(0.04) / gap(0.02)).log2();
        assert!(order > 3.8, "observed order {order}");
    }

    #[test]
    fn el_step_fast_mean_drives_variance_down() {
        // The -μ̇² term: two states differing only in μ̇ magnitude; the
        // faster mean produces the smaller v̈.
        let loss = quad_1d(1.0, 0.0);
        let c = cfg(1.0, 1.0, 0.0);
        let mut slow = DistributionalState::at_rest(
            DVector::from_vec(vec![1.0]),
            DVector::from_vec(vec![1.0]),
        )
        .unwrap();
        let mut fast = slow.clone();
        slow.mean_dot[0] = 0.1;
        fast.mean_dot[0] = 2.0;
        let dt = 1e-4;
        let a_slow = el_step(&slow, &loss, &c, dt).unwrap().variance_dot[0] / dt;
        let a_fast = el_step(&fast, &loss, &c, dt).unwrap().variance_dot[0] / dt;
        let expected_gap = fast.mean_dot[0].powi(2) - slow.mean_dot[0].powi(2);
        assert_relative_eq!(a_slow - a_fast, expected_gap, max_relative = 1e-3);
    }

    #[test]
    fn overdamped_equilibrium_and_logistic_relaxation() {
        let k = 1.0;
        let h = 2.0;
        let loss = quad_1d(h, 0.0);
        let c = cfg(1.0, k, 4.0);
        let v_eq = 1.0 / (k * h);
        assert_relative_eq!(equilibrium_variance(&loss, k)[0], 0.5);

        // v below equilibrium rises, above falls.
        for (v0, rising) in [(0.1 * v_eq, true), (10.0 * v_eq, false)] {
            let state = DistributionalState::at_rest(
                DVector::from_vec(vec![0.0]),
                DVector::from_vec(vec![v0]),
            )
            .unwrap();
            let next = overdamped_step(&state, &loss, &c, 1e-3).unwrap();
            assert_eq!(next.variance_dot[0] > 0.0, rising);
        }

        // At equilibrium the variance rate vanishes.
        let state = DistributionalState::at_rest(
            DVector::from_vec(vec![0.0]),
            DVector::from_vec(vec![v_eq]),
        )
        .unwrap();
        let next = overdamped_step(&state, &loss, &c, 1e-3).unwrap();
        assert!(next.variance_dot[0].abs() <= 1e-14);
    }

    #[test]
    fn overdamped_effective_rate_proportional_to_variance() {
        // |μ̇| / v is constant across v at fixed gradient.
        let loss = quad_1d(1.0, 0.0);
        let c = cfg(1.3, 0.9, 2.0);
        let mut ratios = Vec::new();
        for v0 in [0.01, 0.1, 1.0, 10.0] {
            let state = DistributionalState::at_rest(
                DVector::from_vec(vec![2.0]), // fixed gradient h·μ = 2
                DVector::from_vec(vec![v0]),
            )
            .unwrap();
            let next = overdamped_step(&state, &loss, &c, 1e-6).unwrap();
            ratios.push(next.mean_dot[0].abs() / v0);
        }
        for w in ratios.windows(2) {
            assert_relative_eq!(w[0], w[1], epsilon = 1e-10);
        }
    }

    #[test]
    fn schedule_flat_at_equilibrium() {
        let loss = quad_1d(2.0, 0.0);
        let c = cfg(1.0, 1.0, 3.0);
        let init = DistributionalState::at_rest(
            DVector::from_vec(vec![0.0]),
            DVector::from_vec(vec![0.5]),
        )
        .unwrap();
        let schedule = TaskSchedule::new(vec![(loss, 2.0)]).unwrap();
        let trace = run_schedule(&init, &schedule, &c, 1e-2, ScheduleMode::Overdamped).unwrap();
        for p in &trace {
            assert!((p.state.variance[0] - 0.5).abs() <= 1e-12);
            assert!((p.state.mean[0]).abs() <= 1e-12);
        }
    }

    #[test]
    fn schedule_halved_curvature_doubles_equilibrium_variance() {
        let c = cfg(1.0, 1.0, 2.0);
        let schedule = TaskSchedule::new(vec![
            (quad_1d(2.0, 0.0), 60.0),
            (quad_1d(1.0, 0.0), 60.0),
        ])
        .unwrap();
        let init = DistributionalState::at_rest(
            DVector::from_vec(vec![0.0]),
            DVector::from_vec(vec![0.3]),
        )
        .unwrap();
        let trace = run_schedule(&init, &schedule, &c, 1e-3, ScheduleMode::Overdamped).unwrap();
        let end_seg1 = trace.iter().filter(|p| p.segment == 0).last().unwrap();
        let end_seg2 = trace.last().unwrap();
        assert_relative_eq!(end_seg1.state.variance[0], 0.5, epsilon = 1e-6);
        assert_relative_eq!(end_seg2.state.variance[0], 1.0, epsilon = 1e-6);
        // Variance rises after the curvature drop.
        let first_after = trace.iter().find(|p| p.segment == 1).unwrap();
        assert!(first_after.state.variance_dot[0] > 0.0);
    }

    #[test]
    fn gradient_shift_overdamped_returns_no_overshoot() {
        // Equal H, shifted minimum, overdamped mode: v returns to the same
        // equilibrium and never rises above it.
        let c = cfg(1.0, 1.0, 1.2);
        let h = 1.0;
        let v_eq = 1.0;
        let schedule = TaskSchedule::new(vec![
            (quad_1d(h, 0.0), 30.0),
            (quad_1d(h, 3.0), 30.0),
        ])
        .unwrap();
        let init = DistributionalState::at_rest(
            DVector::from_vec(vec![0.0]),
            DVector::from_vec(vec![v_eq]),
        )
        .unwrap();
        let over = run_schedule(&init, &schedule, &c, 1e-3, ScheduleMode::Overdamped).unwrap();
        let over_max_v = over
            .iter()
            .filter(|p| p.segment == 1)
            .map(|p| p.state.variance[0])
            .fold(0.0, f64::max);
        assert!(over_max_v <= v_eq + 1e-9, "overdamped v overshot: {over_max_v}");
        assert_relative_eq!(over.last().unwrap().state.variance[0], v_eq, epsilon = 1e-6);
    }

    #[test]
    fn gradient_shift_full_mode_transient_variance_bump() {
        // On the optimal branch, a task transition that only moves the
        // minimum makes v rise transiently through the μ̇² coupling and then
        // settle back. The EL equations are a boundary-value problem, so the
        // bounded branch fixes the initial rates:
        //   μ̇(0) = r₋ (μ₀ - μ*)         with r₋ = γ/2 - √(γ²/4 + ηkv_eq h)
        //   v(t) = v_eq + A (e^{2r₋t} - e^{s₋t}),
        //   A = -μ̇(0)²/p(2r₋),  p(s) = s² - γs - a_v,  a_v = 2η(k h v_eq - ½),
        //   s₋ = γ/2 - √(γ²/4 + a_v),   v̇(0) = A(2r₋ - s₋).
        let (eta, k, gamma, h) = (1.0, 1.0, 1.2, 1.0);
        let c = cfg(eta, k, gamma);
        let v_eq = 1.0 / (k * h);
        let mu0 = 0.0;
        let mu_star = 0.5; // small enough that the linearized branch is accurate
        let loss = quad_1d(h, mu_star);

        let r_minus = gamma / 2.0 - (gamma * gamma / 4.0 + eta * k * v_eq * h).sqrt();
        let a_v = 2.0 * eta * (k * h * v_eq - 0.5);
        let s_minus = gamma / 2.0 - (gamma * gamma / 4.0 + a_v).sqrt();
        let mu_dot0 = r_minus * (mu0 - mu_star);
        let p_2r = (2.0 * r_minus) * (2.0 * r_minus) - gamma * (2.0 * r_minus) - a_v;
        let amp = -mu_dot0 * mu_dot0 / p_2r;

        let mut state = DistributionalState::at_rest(
            DVector::from_vec(vec![mu0]),
            DVector::from_vec(vec![v_eq]),
        )
        .unwrap();
        state.mean_dot[0] = mu_dot0;
        state.variance_dot[0] = amp * (2.0 * r_minus - s_minus);

        // Forward integration of the EL system is only faithful to the
        // bounded branch while the growing mode stays small; three time
        // units is enough to see the bump rise and come back.
        let dt = 1e-3;
        let mut max_v: f64 = 0.0;
        let mut s = state.clone();
        for _ in 0..(3.0 / dt) as usize {
            s = el_step(&s, &loss, &c, dt).unwrap();
            max_v = max_v.max(s.variance[0]);
        }
        assert!(max_v > v_eq + 0.005, "no variance bump: max v = {max_v}");
        assert!((s.mean[0] - mu_star).abs() < 0.1, "mean at {}", s.mean[0]);
        assert!((s.variance[0] - v_eq).abs() < 0.05, "v at {}", s.variance[0]);
    }
}
