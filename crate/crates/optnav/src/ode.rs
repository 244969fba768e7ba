//! Fixed-step integrators for the augmented first-order systems built from
//! second-order Euler-Lagrange equations.

use nalgebra::DVector;

/// One classical Runge-Kutta step of `y' = f(y)` with step `dt`.
pub fn rk4_step(y: &DVector<f64>, dt: f64, f: impl Fn(&DVector<f64>) -> DVector<f64>) -> DVector<f64> {
    let k1 = f(y);
    let k2 = f(&(y + &k1 * (dt / 2.0)));
    let k3 = f(&(y + &k2 * (dt / 2.0)));
    let k4 = f(&(y + &k3 * dt));
    y + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0)
}
