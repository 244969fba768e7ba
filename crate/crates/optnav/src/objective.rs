//! The discounted trajectory objective: a forward-difference discretization
//! of   ∫ [ ½(θ̇-f)ᵀG(θ̇-f)/η + k·L(θ) ] e^{-γt} dt
//! with loss, drift and metric evaluated at the left node of each segment.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::geometry::{DriftField, GeometrySpec};
use crate::landscape::Landscape;

/// Constants of the objective plus horizon/discretization controls.
#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
pub struct ObjectiveConfig {
    /// Learning-rate constant η > 0 (inverse particle mass).
    pub eta: f64,
    /// Loss weight k > 0, units 1/time.
    pub k: f64,
    /// Discount rate γ >= 0.
    pub gamma: f64,
    /// Horizon T > 0.
    pub horizon: f64,
    /// Number of segments N >= 1 (N+1 nodes).
    pub segments: usize,
}

impl ObjectiveConfig {
    pub fn new(eta: f64, k: f64, gamma: f64, horizon: f64, segments: usize) -> Result<Self> {
        let cfg = Self { eta, k, gamma, horizon, segments };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let ctx = "ObjectiveConfig";
        if !(self.eta > 0.0) {
            return Err(Error::invalid(ctx, "eta must be > 0"));
        }
        if !(self.k > 0.0) {
            return Err(Error::invalid(ctx, "k must be > 0"));
        }
        if !(self.gamma >= 0.0) {
            return Err(Error::invalid(ctx, "gamma must be >= 0"));
        }
        if !(self.horizon > 0.0) || self.segments < 1 {
            return Err(Error::invalid(ctx, "need horizon > 0 and segments >= 1"));
        }
        Ok(())
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.segments as f64
    }

    /// Truncation horizon for an effectively infinite objective: large enough
    /// that `e^{-γT} <= 1e-6` when γ > 0. For γ = 0 callers must instead stop
    /// on trajectory convergence.
    pub fn truncation_horizon(gamma: f64) -> Option<f64> {
        (gamma > 0.0).then(|| -(1e-6f64).ln() / gamma)
    }
}

/// Uniform time grid with one parameter state per node.
#[derive(Debug, Clone)]
pub struct Trajectory {
    times: Vec<f64>,
    states: Vec<DVector<f64>>,
}

impl Trajectory {
    pub fn new(times: Vec<f64>, states: Vec<DVector<f64>>) -> Result<Self> {
        let ctx = "Trajectory::new";
        if times.len() != states.len() || times.len() < 2 {
            return Err(Error::invalid(ctx, "need matching times/states, length >= 2"));
        }
        let dt = times[1] - times[0];
        if !(dt > 0.0) {
            return Err(Error::invalid(ctx, "times must be strictly increasing"));
        }
        let scale = times.last().unwrap().abs().max(1.0);
        for w in times.windows(2) {
            if ((w[1] - w[0]) - dt).abs() > 1e-12 * scale.max(dt.recip()) * dt.max(1.0) {
                return Err(Error::invalid(ctx, "time grid is not uniform"));
            }
        }
        let dim = states[0].len();
        if states.iter().any(|s| s.len() != dim) {
            return Err(Error::invalid(ctx, "states have mixed dimensions"));
        }
        Ok(Self { times, states })
    }

    /// Straight-line interpolation between two endpoints on `[0, horizon]`.
    pub fn straight_line(
        start: &DVector<f64>,
        end: &DVector<f64>,
        horizon: f64,
        segments: usize,
    ) -> Result<Self> {
        if start.len() != end.len() {
            return Err(Error::invalid("Trajectory::straight_line", "endpoint dims differ"));
        }
        let n = segments;
        let times = (0..=n).map(|i| horizon * i as f64 / n as f64).collect();
        let states = (0..=n)
            .map(|i| {
                let a = i as f64 / n as f64;
                start * (1.0 - a) + end * a
            })
            .collect();
        Self::new(times, states)
    }

    /// Sample a vector-valued function of time on `[0, horizon]`.
    pub fn sample(
        f: impl Fn(f64) -> DVector<f64>,
        horizon: f64,
        segments: usize,
    ) -> Result<Self> {
        let times: Vec<f64> = (0..=segments)
            .map(|i| horizon * i as f64 / segments as f64)
            .collect();
        let states = times.iter().map(|&t| f(t)).collect();
        Self::new(times, states)
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn states(&self) -> &[DVector<f64>] {
        &self.states
    }

    pub fn state(&self, i: usize) -> &DVector<f64> {
        &self.states[i]
    }

    pub fn set_state(&mut self, i: usize, v: DVector<f64>) {
        self.states[i] = v;
    }

    pub fn dim(&self) -> usize {
        self.states[0].len()
    }

    /// Number of segments (nodes - 1).
    pub fn segments(&self) -> usize {
        self.states.len() - 1
    }

    pub fn dt(&self) -> f64 {
        self.times[1] - self.times[0]
    }

    pub fn last_state(&self) -> &DVector<f64> {
        self.states.last().unwrap()
    }
}

/// Kinetic (per-segment) and potential (per-node) terms, before discounting.
#[derive(Debug, Clone)]
pub struct EnergyProfile {
    pub kinetic: Vec<f64>,
    pub potential: Vec<f64>,
}

/// Objective value together with its energy decomposition.
#[derive(Debug, Clone)]
pub struct ObjectiveValue {
    pub j: f64,
    pub profile: EnergyProfile,
}

/// Summation with compensated accumulation so the result does not depend on
/// chunking of the term stream.
fn kahan_sum(terms: impl Iterator<Item = f64>) -> f64 {
    let mut sum = 0.0;
    let mut c = 0.0;
    for t in terms {
        let y = t - c;
        let s = sum + y;
        c = (s - sum) - y;
        sum = s;
    }
    sum
}

fn check_dims(
    traj: &Trajectory,
    landscape: &dyn Landscape,
    geometry: Option<&GeometrySpec>,
    ctx: &str,
) -> Result<()> {
    if traj.dim() != landscape.dim() {
        return Err(Error::invalid(
            ctx,
            format!("trajectory dim {} != landscape dim {}", traj.dim(), landscape.dim()),
        ));
    }
    if let Some(g) = geometry {
        if g.dim() != traj.dim() {
            return Err(Error::invalid(
                ctx,
                format!("geometry dim {} != trajectory dim {}", g.dim(), traj.dim()),
            ));
        }
    }
    Ok(())
}

/// Reusable evaluator: caches the per-node discount weights `e^{-γ t_k}` for
/// one (config, grid) pair so repeated evaluations inside an optimizer loop
/// avoid recomputing exponentials.
pub struct ObjectiveEvaluator<'a> {
    landscape: &'a dyn Landscape,
    cfg: ObjectiveConfig,
    geometry: Option<&'a GeometrySpec>,
    discounts: Vec<f64>,
}

impl<'a> ObjectiveEvaluator<'a> {
    pub fn new(
        landscape: &'a dyn Landscape,
        cfg: &ObjectiveConfig,
        geometry: Option<&'a GeometrySpec>,
    ) -> Result<Self> {
        cfg.validate()?;
        let n = cfg.segments;
        let dt = cfg.dt();
        let discounts = (0..=n).map(|k| (-cfg.gamma * (k as f64 * dt)).exp()).collect();
        Ok(Self { landscape, cfg: *cfg, geometry, discounts })
    }

    fn check(&self, traj: &Trajectory, ctx: &str) -> Result<()> {
        check_dims(traj, self.landscape, self.geometry, ctx)?;
        let dt = self.cfg.dt();
        if traj.segments() != self.cfg.segments
            || (traj.dt() - dt).abs() > 1e-12 * dt
            || traj.times()[0].abs() > 1e-12 * dt
        {
            return Err(Error::invalid(
                ctx,
                "trajectory grid does not match the config's [0, T]/N grid",
            ));
        }
        Ok(())
    }

    /// Metric-weighted residual velocity `G·w_k` of one segment.
    fn weighted_velocity(&self, traj: &Trajectory, k: usize) -> (DVector<f64>, DVector<f64>) {
        let dt = traj.dt();
        let theta = traj.state(k);
        let mut w = (traj.state(k + 1) - theta) / dt;
        if let Some(geom) = self.geometry {
            if !geom.drift.is_zero() {
                w -= geom.drift.eval(theta);
            }
        }
        let gw = match self.geometry {
            Some(geom) => geom.apply_metric(&w),
            None => w.clone(),
        };
        (w, gw)
    }

    pub fn eval(&self, traj: &Trajectory) -> Result<ObjectiveValue> {
        self.check(traj, "objective::eval_objective")?;
        let n = traj.segments();
        let dt = traj.dt();
        let cfg = &self.cfg;
        let mut kinetic = Vec::with_capacity(n);
        let mut potential = Vec::with_capacity(n + 1);

        for k in 0..n {
            let (w, gw) = self.weighted_velocity(traj, k);
            kinetic.push(0.5 * w.dot(&gw) / cfg.eta);
            potential.push(cfg.k * self.landscape.value(traj.state(k)));
        }
        potential.push(cfg.k * self.landscape.value(traj.last_state()));

        let j = kahan_sum((0..=n).map(|k| {
            let ke = if k < n { kinetic[k] } else { 0.0 };
            self.discounts[k] * dt * (ke + potential[k])
        }));

        Ok(ObjectiveValue { j, profile: EnergyProfile { kinetic, potential } })
    }

    pub fn gradient(&self, traj: &Trajectory) -> Result<Vec<DVector<f64>>> {
        self.check(traj, "objective::objective_gradient")?;
        let n = traj.segments();
        if n < 2 {
            return Err(Error::invalid(
                "objective::objective_gradient",
                "need at least one interior node (N >= 2)",
            ));
        }
        let dt = traj.dt();
        let cfg = &self.cfg;

        let mut grads = Vec::with_capacity(n - 1);
        let mut gw_prev = self.weighted_velocity(traj, 0).1;
        for j in 1..n {
            let gw_here = self.weighted_velocity(traj, j).1;
            let disc_prev = self.discounts[j - 1];
            let disc_here = self.discounts[j];
            let theta = traj.state(j);

            // d/dθ_j of segment j-1: w_{j-1} depends on θ_j through +θ_j/Δt.
            let mut grad = &gw_prev * (disc_prev / cfg.eta);
            // d/dθ_j of segment j: -θ_j/Δt and -f(θ_j) inside w_j.
            grad -= &gw_here * (disc_here / cfg.eta);
            if let Some(geom) = self.geometry {
                if !geom.drift.is_zero() {
                    let jac = geom.drift.jacobian(theta);
                    grad -= jac.transpose() * &gw_here * (disc_here * dt / cfg.eta);
                }
            }
            // Potential term at the left node of segment j.
            grad += self.landscape.gradient(theta) * (disc_here * dt * cfg.k);

            grads.push(grad);
            gw_prev = gw_here;
        }
        Ok(grads)
    }
}

/// Discretized objective
/// `J = Σ_k e^{-γ t_k} Δt [ ½(Δθ_k/Δt - f(θ_k))ᵀ G (Δθ_k/Δt - f(θ_k))/η + k L(θ_k) ]`
/// over segments `k = 0..N-1`, plus the final node's potential-only term
/// `e^{-γ t_N} Δt · k L(θ_N)`.
pub fn eval_objective(
    traj: &Trajectory,
    landscape: &dyn Landscape,
    cfg: &ObjectiveConfig,
    geometry: Option<&GeometrySpec>,
) -> Result<ObjectiveValue> {
    ObjectiveEvaluator::new(landscape, cfg, geometry)?.eval(traj)
}

/// Analytic gradient of the discretized objective with respect to every
/// interior node (endpoints are fixed).
pub fn objective_gradient(
    traj: &Trajectory,
    landscape: &dyn Landscape,
    cfg: &ObjectiveConfig,
    geometry: Option<&GeometrySpec>,
) -> Result<Vec<DVector<f64>>> {
    ObjectiveEvaluator::new(landscape, cfg, geometry)?.gradient(traj)
}
