//! Implicit trapezoidal integrator for charge-form systems `d q(x)/dt = f(t, x)`.
//!
//! Each step solves `q(x₁) − q(x₀) = h/2·(f(t₁, x₁) + f(t₀, x₀))` by damped
//! Newton iteration with the Jacobian `∂q/∂x − h/2·∂f/∂x`. Writing the step on
//! charges rather than voltages keeps every capacitor's charge balance exact
//! up to the Newton tolerance. The local error is estimated from the second
//! divided difference of `dx/dt` over the last two steps; dense output is
//! cubic Hermite, and event roots are bisected on it.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A network written as `d q(x)/dt = f(t, x)`.
pub trait ChargeSystem {
    fn dim(&self) -> usize;
    /// Node charges `q(x)`.
    fn charge(&self, x: &DVector<f64>) -> DVector<f64>;
    /// Incremental capacitance matrix `∂q/∂x`.
    fn capacitance(&self, x: &DVector<f64>) -> DMatrix<f64>;
    /// Resistive currents `f(t, x)`.
    fn current(&self, t: f64, x: &DVector<f64>) -> DVector<f64>;

    /// `∂f/∂x`; central differences unless overridden.
    fn current_jacobian(&self, t: f64, x: &DVector<f64>) -> DMatrix<f64> {
        let n = self.dim();
        let mut j = DMatrix::zeros(n, n);
        for k in 0..n {
            let h = 1e-7 * x[k].abs().max(1e-3);
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[k] += h;
            xm[k] -= h;
            let col = (self.current(t, &xp) - self.current(t, &xm)) / (2.0 * h);
            j.set_column(k, &col);
        }
        j
    }

    /// `dx/dt = (∂q/∂x)⁻¹ f(t, x)`.
    fn derivative(&self, t: f64, x: &DVector<f64>) -> Result<DVector<f64>> {
        let m = self.capacitance(x);
        let f = self.current(t, x);
        m.clone().lu().solve(&f).ok_or_else(|| {
            Error::Internal(format!(
                "singular capacitance matrix at t = {t:e}, x = {x:?}, M = {m}"
            ))
        })
    }
}

type EventFn<S> = dyn Fn(&S, f64, &DVector<f64>) -> f64 + Send + Sync;

/// Scalar function of `(t, x)` whose sign changes are located and recorded.
pub struct Event<S> {
    pub name: String,
    func: Box<EventFn<S>>,
}

impl<S> Event<S> {
    pub fn new(
        name: &str,
        func: impl Fn(&S, f64, &DVector<f64>) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Event {
            name: name.to_string(),
            func: Box::new(func),
        }
    }

    pub fn eval(&self, sys: &S, t: f64, x: &DVector<f64>) -> Result<f64> {
        let v = (self.func)(sys, t, x);
        if v.is_nan() {
            return Err(Error::Event(format!(
                "event '{}' evaluated to NaN at t = {t:e}",
                self.name
            )));
        }
        Ok(v)
    }
}

impl<S> std::fmt::Debug for Event<S> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Event").field("name", &self.name).finish()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSettings {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_step: f64,
    pub min_step: f64,
    /// Initial step after `t = 0`.
    pub initial_step: f64,
    /// Newton convergence threshold on the error-weighted update norm.
    pub newton_tol: f64,
    pub newton_max_iters: usize,
    pub event_tol: f64,
    /// Disables error control and steps with this size (s).
    pub fixed_step: Option<f64>,
    pub max_steps: usize,
}

impl Default for SolverSettings {
    fn default() -> Self {
        SolverSettings {
            rel_tol: 1e-7,
            abs_tol: 1e-9,
            max_step: 1e-9,
            min_step: 1e-18,
            initial_step: 1e-12,
            newton_tol: 1e-3,
            newton_max_iters: 30,
            event_tol: 1e-12,
            fixed_step: None,
            max_steps: 2_000_000,
        }
    }
}

impl SolverSettings {
    pub fn validate(&self) -> Result<()> {
        let pos = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::Config(format!("solver.{name} must be > 0, got {v}")))
            }
        };
        pos("rel_tol", self.rel_tol)?;
        pos("abs_tol", self.abs_tol)?;
        pos("max_step", self.max_step)?;
        pos("min_step", self.min_step)?;
        pos("initial_step", self.initial_step)?;
        pos("newton_tol", self.newton_tol)?;
        pos("event_tol", self.event_tol)?;
        if self.min_step >= self.max_step {
            return Err(Error::Config(
                "solver.min_step must be below solver.max_step".into(),
            ));
        }
        if self.newton_max_iters == 0 || self.max_steps == 0 {
            return Err(Error::Config("solver iteration limits must be > 0".into()));
        }
        if let Some(h) = self.fixed_step {
            pos("fixed_step", h)?;
        }
        Ok(())
    }

    /// Same settings with both tolerances scaled by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        SolverSettings {
            rel_tol: self.rel_tol * factor,
            abs_tol: self.abs_tol * factor,
            ..*self
        }
    }
}

/// Located sign change of a registered event function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Marker {
    pub name: String,
    pub t: f64,
    /// Index of the accepted sample just before the root.
    pub sample: usize,
    /// `+1` for a rising crossing, `-1` for a falling one.
    pub direction: i8,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepStats {
    pub accepted: usize,
    pub rejected: usize,
    pub newton_failures: usize,
}

/// Accepted samples with their derivatives, enough for Hermite dense output.
#[derive(Debug, Clone)]
pub struct Solution {
    pub t: Vec<f64>,
    pub x: Vec<DVector<f64>>,
    pub dx: Vec<DVector<f64>>,
    pub markers: Vec<Marker>,
    pub stats: StepStats,
}

/// Cubic Hermite interpolation between two samples.
pub fn hermite(t0: f64, t1: f64, x0: f64, x1: f64, d0: f64, d1: f64, t: f64) -> f64 {
    let h = t1 - t0;
    if h == 0.0 {
        return x0;
    }
    let s = (t - t0) / h;
    let s2 = s * s;
    let s3 = s2 * s;
    (2.0 * s3 - 3.0 * s2 + 1.0) * x0
        + (s3 - 2.0 * s2 + s) * h * d0
        + (-2.0 * s3 + 3.0 * s2) * x1
        + (s3 - s2) * h * d1
}

fn hermite_vec(
    t0: f64,
    t1: f64,
    a: (&DVector<f64>, &DVector<f64>),
    b: (&DVector<f64>, &DVector<f64>),
    t: f64,
) -> DVector<f64> {
    DVector::from_iterator(
        a.0.len(),
        (0..a.0.len()).map(|i| hermite(t0, t1, a.0[i], b.0[i], a.1[i], b.1[i], t)),
    )
}

impl Solution {
    /// Dense-output state at `t` (clamped to the solution span).
    pub fn state_at(&self, t: f64) -> DVector<f64> {
        let n = self.t.len();
        if t <= self.t[0] {
            return self.x[0].clone();
        }
        if t >= self.t[n - 1] {
            return self.x[n - 1].clone();
        }
        let k = self.t.partition_point(|&s| s <= t) - 1;
        hermite_vec(
            self.t[k],
            self.t[k + 1],
            (&self.x[k], &self.dx[k]),
            (&self.x[k + 1], &self.dx[k + 1]),
            t,
        )
    }
}

/// Share of the requested tolerance allotted to each step's local error, so
/// the error accumulated over a transient stays within the tolerance.
const LOCAL_FRACTION: f64 = 0.005;

struct Newton {
    x: DVector<f64>,
    iters: usize,
}

/// Error weights `abs_tol + rel_tol·max(scale, |x|)`, where `scale` holds the
/// largest magnitude each component has reached so far. A node swinging
/// hundreds of volts is then not held to the absolute tolerance while it
/// passes through zero.
fn weights(settings: &SolverSettings, a: &DVector<f64>, b: &DVector<f64>) -> DVector<f64> {
    DVector::from_iterator(
        a.len(),
        a.iter()
            .zip(b.iter())
            .map(|(u, v)| settings.abs_tol + settings.rel_tol * u.abs().max(v.abs())),
    )
}

fn wnorm(v: &DVector<f64>, w: &DVector<f64>) -> f64 {
    v.iter()
        .zip(w.iter())
        .fold(0.0f64, |m, (a, b)| m.max(a.abs() / b))
}

/// One trapezoidal step from `(t0, x0)` to `t0 + h`; `None` on Newton failure.
#[allow(clippy::too_many_arguments)]
fn trap_step<S: ChargeSystem>(
    sys: &S,
    settings: &SolverSettings,
    t0: f64,
    x0: &DVector<f64>,
    dx0: &DVector<f64>,
    f0: &DVector<f64>,
    scale: &DVector<f64>,
    h: f64,
) -> Option<Newton> {
    let t1 = t0 + h;
    let q0 = sys.charge(x0);
    let rhs0 = &q0 + f0 * (0.5 * h);
    // explicit predictor
    let mut x = x0 + dx0 * h;
    let residual = |x: &DVector<f64>| sys.charge(x) - &rhs0 - sys.current(t1, x) * (0.5 * h);
    let mut g = residual(&x);
    for iter in 1..=settings.newton_max_iters {
        let jac = sys.capacitance(&x) - sys.current_jacobian(t1, &x) * (0.5 * h);
        let delta = jac.lu().solve(&g)?;
        let w = weights(settings, scale, &x);
        let full_norm = wnorm(&delta, &w);
        if !full_norm.is_finite() {
            return None;
        }
        if full_norm <= settings.newton_tol {
            x -= &delta;
            return Some(Newton { x, iters: iter });
        }
        // damping: shrink the update until the residual stops growing
        let g_norm = g.norm();
        let mut lambda = 1.0;
        let mut x_new;
        let mut g_new;
        loop {
            x_new = &x - &delta * lambda;
            g_new = residual(&x_new);
            if g_new.iter().all(|v| v.is_finite())
                && (g_new.norm() <= g_norm || lambda < 1.0 / 64.0)
            {
                break;
            }
            lambda *= 0.5;
            if lambda < 1.0 / 1024.0 {
                return None;
            }
        }
        x = x_new;
        g = g_new;
    }
    None
}

/// Integrates from the system's `x0` at `t = 0` to `t_end`.
pub fn integrate<S: ChargeSystem>(
    sys: &S,
    x0: DVector<f64>,
    settings: &SolverSettings,
    t_end: f64,
    events: &[Event<S>],
) -> Result<Solution> {
    settings.validate()?;
    if !(t_end > 0.0 && t_end.is_finite()) {
        return Err(Error::Config(format!("t_end must be > 0, got {t_end}")));
    }
    if x0.iter().any(|v| !v.is_finite()) {
        return Err(Error::Input("initial state must be finite".into()));
    }
    let mut t = 0.0;
    let mut x = x0;
    let mut dx = sys.derivative(t, &x)?;
    let mut sol = Solution {
        t: vec![t],
        x: vec![x.clone()],
        dx: vec![dx.clone()],
        markers: Vec::new(),
        stats: StepStats::default(),
    };
    let mut ev_prev: Vec<f64> = events
        .iter()
        .map(|e| e.eval(sys, t, &x))
        .collect::<Result<_>>()?;
    let mut h = settings
        .fixed_step
        .unwrap_or(settings.initial_step)
        .min(settings.max_step);
    let mut scale = x.abs();
    let mut h_prev: Option<f64> = None;
    let mut dx_prev: Option<DVector<f64>> = None;

    while t < t_end {
        if sol.stats.accepted >= settings.max_steps {
            return Err(Error::Integration {
                t,
                reason: format!("step budget of {} exhausted", settings.max_steps),
            });
        }
        let mut last = false;
        if t + h >= t_end || t_end - (t + h) < 1e-3 * h {
            h = t_end - t;
            last = true;
        }
        let f0 = sys.current(t, &x);
        let Some(step) = trap_step(sys, settings, t, &x, &dx, &f0, &scale, h) else {
            sol.stats.newton_failures += 1;
            sol.stats.rejected += 1;
            h *= 0.5;
            if h < settings.min_step {
                return Err(Error::Integration {
                    t,
                    reason: format!(
                        "Newton failed to converge above the step floor; last state {x:?}"
                    ),
                });
            }
            continue;
        };
        let x1 = step.x;
        let t1 = t + h;
        let dx1 = sys.derivative(t1, &x1)?;

        let mut h_next = settings.fixed_step.unwrap_or(h);
        if settings.fixed_step.is_none() {
            // second divided difference of dx/dt; first step reuses dx0 as history
            let dd2 = match (&dx_prev, h_prev) {
                (Some(dp), Some(hp)) => ((&dx1 - &dx) / h - (&dx - dp) / hp) / (h + hp),
                _ => (&dx1 - &dx) / (h * h),
            };
            let lte = dd2 * (h * h * h / 6.0);
            let err = wnorm(&lte, &weights(settings, &scale, &x1)) / LOCAL_FRACTION;
            if !err.is_finite() || err > 1.0 {
                sol.stats.rejected += 1;
                let factor = if err.is_finite() {
                    (0.9 * err.powf(-1.0 / 3.0)).clamp(0.1, 0.5)
                } else {
                    0.25
                };
                h *= factor;
                if h < settings.min_step {
                    return Err(Error::Integration {
                        t,
                        reason: format!(
                            "step size fell below min_step ({:e} s)",
                            settings.min_step
                        ),
                    });
                }
                continue;
            }
            let mut factor = if err > 0.0 {
                0.9 * err.powf(-1.0 / 3.0)
            } else {
                2.0
            };
            if step.iters > 6 {
                factor = factor.min(1.0);
            }
            h_next = (h * factor.clamp(0.2, 2.0)).clamp(settings.min_step, settings.max_step);
        }

        // events on the accepted step
        for (k, ev) in events.iter().enumerate() {
            let v1 = ev.eval(sys, t1, &x1)?;
            let v0 = ev_prev[k];
            if (v0 < 0.0 && v1 >= 0.0) || (v0 > 0.0 && v1 <= 0.0) {
                let (mut a, mut b) = (t, t1);
                let (mut fa, _) = (v0, v1);
                while b - a > settings.event_tol {
                    let m = 0.5 * (a + b);
                    let xm = hermite_vec(t, t1, (&x, &dx), (&x1, &dx1), m);
                    let fm = ev.eval(sys, m, &xm)?;
                    if (fa < 0.0) == (fm < 0.0) && fm != 0.0 {
                        a = m;
                        fa = fm;
                    } else {
                        b = m;
                    }
                }
                sol.markers.push(Marker {
                    name: ev.name.clone(),
                    t: 0.5 * (a + b),
                    sample: sol.t.len() - 1,
                    direction: if v1 > v0 { 1 } else { -1 },
                });
            }
            ev_prev[k] = v1;
        }

        sol.stats.accepted += 1;
        h_prev = Some(h);
        dx_prev = Some(std::mem::replace(&mut dx, dx1.clone()));
        scale = scale.zip_map(&x1, |s, v| s.max(v.abs()));
        x = x1;
        t = t1;
        sol.t.push(t);
        sol.x.push(x.clone());
        sol.dx.push(dx1);
        if last {
            break;
        }
        h = h_next;
    }
    sol.markers.sort_by(|a, b| a.t.total_cmp(&b.t));
    Ok(sol)
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    /// Capacitor `c` charged from `v_s` through `r`.
    pub struct Rc {
        pub c: f64,
        pub r: f64,
        pub v_s: f64,
    }

    impl ChargeSystem for Rc {
        fn dim(&self) -> usize {
            1
        }
        fn charge(&self, x: &DVector<f64>) -> DVector<f64> {
            DVector::from_element(1, self.c * x[0])
        }
        fn capacitance(&self, _x: &DVector<f64>) -> DMatrix<f64> {
            DMatrix::from_element(1, 1, self.c)
        }
        fn current(&self, _t: f64, x: &DVector<f64>) -> DVector<f64> {
            DVector::from_element(1, (self.v_s - x[0]) / self.r)
        }
    }

    #[test]
    fn rc_matches_exponential() {
        let rc = Rc {
            c: 1e-9,
            r: 10.0,
            v_s: 20.0,
        };
        let tau = 1e-8;
        let s = SolverSettings::default();
        let sol = integrate(&rc, DVector::from_element(1, -5.0), &s, 5.0 * tau, &[]).unwrap();
        let v_end = sol.x.last().unwrap()[0];
        let exact = 20.0 - 25.0 * (-5.0f64).exp();
        assert!(
            (v_end - exact).abs() / exact.abs() < s.rel_tol,
            "{v_end} vs {exact}"
        );
        // times strictly increasing
        assert!(sol.t.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn event_is_bracketed() {
        let rc = Rc {
            c: 1e-9,
            r: 10.0,
            v_s: 20.0,
        };
        let ev = Event::new("zero", |_: &Rc, _t, x: &DVector<f64>| x[0]);
        let sol = integrate(
            &rc,
            DVector::from_element(1, -5.0),
            &SolverSettings::default(),
            5e-8,
            &[ev],
        )
        .unwrap();
        assert_eq!(sol.markers.len(), 1);
        let m = &sol.markers[0];
        // v = 20 - 25 e^{-t/τ} = 0 at τ ln(1.25)
        let exact = 1e-8 * 1.25f64.ln();
        assert!((m.t - exact).abs() < 1e-12, "{} vs {exact}", m.t);
        assert!(sol.x[m.sample][0] < 0.0 && sol.x[m.sample + 1][0] >= 0.0);
    }

    #[test]
    fn equilibrium_stays_constant() {
        let rc = Rc {
            c: 1e-9,
            r: 10.0,
            v_s: 3.0,
        };
        let sol = integrate(
            &rc,
            DVector::from_element(1, 3.0),
            &SolverSettings::default(),
            1e-7,
            &[],
        )
        .unwrap();
        assert!(sol.x.iter().all(|x| x[0] == 3.0));
    }

    #[test]
    fn fixed_step_is_second_order() {
        let rc = Rc {
            c: 1e-9,
            r: 10.0,
            v_s: 20.0,
        };
        let exact = 20.0 - 25.0 * (-2.0f64).exp();
        let err = |h: f64| {
            let s = SolverSettings {
                fixed_step: Some(h),
                ..Default::default()
            };
            let sol = integrate(&rc, DVector::from_element(1, -5.0), &s, 2e-8, &[]).unwrap();
            (sol.x.last().unwrap()[0] - exact).abs()
        };
        let ratio = err(2e-10) / err(1e-10);
        assert!((3.0..=5.0).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn deterministic() {
        let rc = Rc {
            c: 2e-9,
            r: 3.0,
            v_s: 1.0,
        };
        let run = || {
            integrate(
                &rc,
                DVector::from_element(1, 0.0),
                &SolverSettings::default(),
                1e-8,
                &[],
            )
            .unwrap()
        };
        let (a, b) = (run(), run());
        assert_eq!(a.t, b.t);
        assert_eq!(a.x, b.x);
    }

    #[test]
    fn bad_settings_rejected() {
        let s = SolverSettings {
            min_step: 1.0,
            ..Default::default()
        };
        assert!(s.validate().is_err());
        let rc = Rc {
            c: 1e-9,
            r: 1.0,
            v_s: 1.0,
        };
        assert!(integrate(
            &rc,
            DVector::from_element(1, 0.0),
            &SolverSettings::default(),
            0.0,
            &[]
        )
        .is_err());
    }

    #[test]
    fn hermite_reproduces_cubic() {
        let f = |t: f64| t * t * t - 2.0 * t;
        let df = |t: f64| 3.0 * t * t - 2.0;
        let v = hermite(1.0, 3.0, f(1.0), f(3.0), df(1.0), df(3.0), 2.2);
        assert!((v - f(2.2)).abs() < 1e-12);
    }
}
