//! Adaptive explicit Runge-Kutta integration with dense output.
//!
//! The solver is an embedded Dormand-Prince 5(4) pair with PI step-size
//! control and the classical 5-coefficient continuous extension, which is
//! of the same order class as the advancing method. Event queries
//! ([`detect_min_distance`], [`detect_tube_entry`]) run on the dense output
//! after the fact, refining between mesh points, so no event machinery is
//! needed inside the stepper.
//!
//! States are never clamped; a component falling below `-100 * abs_tol`
//! is reported as an integration failure rather than silently repaired.

use thiserror::Error;

/// Boxed right-hand side `f(t, y, dy)`.
pub type BoxedRhs<'a> = Box<dyn Fn(f64, &[f64], &mut [f64]) + 'a>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OdeError {
    #[error("invalid integration settings: {0}")]
    BadSettings(String),
    /// Requested tolerance demands a step below the floating-point floor
    /// (stiffness beyond the explicit method's stability).
    #[error("step size underflow at t = {t}")]
    StepSizeUnderflow { t: f64 },
    #[error("exceeded {max_steps} steps at t = {t}")]
    MaxStepsExceeded { t: f64, max_steps: usize },
    #[error("non-finite derivative at t = {t}")]
    NonFiniteDerivative { t: f64 },
    /// A state component dropped below `-100 * abs_tol`.
    #[error("state component {index} became negative ({value}) at t = {t}")]
    NegativeState { t: f64, index: usize, value: f64 },
}

/// Tolerances and limits for a single integration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegrationSettings {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub t_end: f64,
    pub max_steps: usize,
    /// Initial step; selected automatically when `None`.
    pub h0: Option<f64>,
    /// Flag components below `-100 * abs_tol` as failures.
    pub check_nonnegative: bool,
}

impl Default for IntegrationSettings {
    fn default() -> Self {
        Self {
            rel_tol: 1e-9,
            abs_tol: 1e-12,
            t_end: 1.0,
            max_steps: 10_000_000,
            h0: None,
            check_nonnegative: true,
        }
    }
}

impl IntegrationSettings {
    pub fn with_t_end(t_end: f64) -> Self {
        Self {
            t_end,
            ..Self::default()
        }
    }

    fn validate(&self) -> Result<(), OdeError> {
        if !(self.rel_tol.is_finite() && self.rel_tol > 0.0) {
            return Err(OdeError::BadSettings("rel_tol must be > 0".into()));
        }
        if !(self.abs_tol.is_finite() && self.abs_tol > 0.0) {
            return Err(OdeError::BadSettings("abs_tol must be > 0".into()));
        }
        if !(self.t_end.is_finite() && self.t_end > 0.0) {
            return Err(OdeError::BadSettings("t_end must be > 0".into()));
        }
        if self.max_steps == 0 {
            return Err(OdeError::BadSettings("max_steps must be > 0".into()));
        }
        Ok(())
    }
}

/// A labelled point of interest recorded on a trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct Event {
    pub label: String,
    pub time: f64,
    pub state: Vec<f64>,
}

/// Dense-output coefficients for one accepted step.
#[derive(Debug, Clone)]
struct Segment {
    t0: f64,
    h: f64,
    /// Five interpolation coefficients per component.
    cont: Vec<[f64; 5]>,
}

impl Segment {
    fn eval_into(&self, t: f64, out: &mut [f64]) {
        let s = if self.h == 0.0 {
            0.0
        } else {
            (t - self.t0) / self.h
        };
        let s1 = 1.0 - s;
        for (o, c) in out.iter_mut().zip(&self.cont) {
            *o = c[0] + (c[1] + (c[2] + (c[3] + c[4] * s1) * s) * s1) * s;
        }
    }
}

/// Time-stamped solution with an interpolant of the integrator's order.
#[derive(Debug, Clone)]
pub struct Trajectory {
    dim: usize,
    times: Vec<f64>,
    states: Vec<f64>,
    segments: Vec<Segment>,
    pub events: Vec<Event>,
}

impl Trajectory {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn state(&self, i: usize) -> &[f64] {
        &self.states[i * self.dim..(i + 1) * self.dim]
    }

    pub fn first_time(&self) -> f64 {
        self.times[0]
    }

    pub fn last_time(&self) -> f64 {
        *self.times.last().unwrap()
    }

    pub fn last_state(&self) -> &[f64] {
        self.state(self.len() - 1)
    }

    /// Evaluate the dense output at `t`, clamped to the covered interval.
    pub fn eval_into(&self, t: f64, out: &mut [f64]) {
        let t = t.clamp(self.first_time(), self.last_time());
        if self.segments.is_empty() {
            out.copy_from_slice(self.state(0));
            return;
        }
        let idx = match self
            .segments
            .binary_search_by(|seg| seg.t0.partial_cmp(&t).unwrap())
        {
            Ok(i) => i,
            Err(0) => 0,
            Err(i) => i - 1,
        };
        self.segments[idx].eval_into(t, out);
    }

    pub fn eval(&self, t: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        self.eval_into(t, &mut out);
        out
    }

    pub fn push_event(&mut self, label: impl Into<String>, time: f64) {
        let state = self.eval(time);
        self.events.push(Event {
            label: label.into(),
            time,
            state,
        });
    }
}

// Dormand-Prince 5(4) tableau.
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
// Difference between the 5th- and embedded 4th-order weights.
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
// Dense-output weights.
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

// PI controller constants.
const SAFE: f64 = 0.9;
const BETA: f64 = 0.04;
const EXPO1: f64 = 0.2 - BETA * 0.75;
const FAC_MIN: f64 = 0.2;
const FAC_MAX: f64 = 10.0;

fn rms_norm(v: &[f64], sc: &[f64]) -> f64 {
    let sum: f64 = v.iter().zip(sc).map(|(x, s)| (x / s) * (x / s)).sum();
    (sum / v.len() as f64).sqrt()
}

/// Automatic initial step selection after Hairer-Norsett-Wanner.
fn initial_step<F: Fn(f64, &[f64], &mut [f64])>(
    rhs: &F,
    y0: &[f64],
    f0: &[f64],
    settings: &IntegrationSettings,
) -> f64 {
    let n = y0.len();
    let sc: Vec<f64> = y0
        .iter()
        .map(|y| settings.abs_tol + settings.rel_tol * y.abs())
        .collect();
    let d0 = rms_norm(y0, &sc);
    let d1 = rms_norm(f0, &sc);
    let mut h0 = if d0 < 1e-5 || d1 < 1e-5 {
        1e-6
    } else {
        0.01 * d0 / d1
    };
    h0 = h0.min(settings.t_end);
    let y1: Vec<f64> = y0.iter().zip(f0).map(|(y, f)| y + h0 * f).collect();
    let mut f1 = vec![0.0; n];
    rhs(h0, &y1, &mut f1);
    let diff: Vec<f64> = f1.iter().zip(f0).map(|(a, b)| a - b).collect();
    let d2 = rms_norm(&diff, &sc) / h0;
    let dm = d1.max(d2);
    let h1 = if dm <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / dm).powf(0.2)
    };
    (100.0 * h0).min(h1).min(settings.t_end)
}

/// Integrate `dy/dt = rhs(t, y)` from `t = 0` to `settings.t_end`.
///
/// The local error per step is held to `abs_tol + rel_tol * |y|` by the
/// embedded estimate; dense output is attached for every accepted step.
///
/// ```
/// use qsslab_core::ode::{integrate, IntegrationSettings};
///
/// // w' = 0.1 (5 - w): relaxation towards 5.
/// let settings = IntegrationSettings::with_t_end(10.0);
/// let traj = integrate(|_t, y, dy| dy[0] = 0.1 * (5.0 - y[0]), &[0.0], &settings)?;
/// let expected = 5.0 * (1.0 - (-1.0f64).exp());
/// assert!((traj.eval(10.0)[0] - expected).abs() < 1e-8);
/// # Ok::<(), qsslab_core::ode::OdeError>(())
/// ```
pub fn integrate<F: Fn(f64, &[f64], &mut [f64])>(
    rhs: F,
    y0: &[f64],
    settings: &IntegrationSettings,
) -> Result<Trajectory, OdeError> {
    settings.validate()?;
    let n = y0.len();
    let neg_floor = -100.0 * settings.abs_tol;

    let mut t = 0.0;
    let mut y = y0.to_vec();
    let mut k1 = vec![0.0; n];
    rhs(t, &y, &mut k1);
    if !k1.iter().all(|v| v.is_finite()) {
        return Err(OdeError::NonFiniteDerivative { t });
    }

    let mut traj = Trajectory {
        dim: n,
        times: vec![t],
        states: y.clone(),
        segments: Vec::new(),
        events: Vec::new(),
    };

    let mut h = settings
        .h0
        .unwrap_or_else(|| initial_step(&rhs, &y, &k1, settings));
    h = h.min(settings.t_end);
    if !(h.is_finite() && h > 0.0) {
        return Err(OdeError::BadSettings(format!(
            "initial step {h} is not positive"
        )));
    }

    let mut k2 = vec![0.0; n];
    let mut k3 = vec![0.0; n];
    let mut k4 = vec![0.0; n];
    let mut k5 = vec![0.0; n];
    let mut k6 = vec![0.0; n];
    let mut k7 = vec![0.0; n];
    let mut y_stage = vec![0.0; n];
    let mut y_new = vec![0.0; n];
    let mut facold: f64 = 1e-4;
    let mut steps = 0usize;

    while t < settings.t_end {
        if steps >= settings.max_steps {
            return Err(OdeError::MaxStepsExceeded {
                t,
                max_steps: settings.max_steps,
            });
        }
        steps += 1;
        h = h.min(settings.t_end - t);
        if t + h == t {
            return Err(OdeError::StepSizeUnderflow { t });
        }

        for i in 0..n {
            y_stage[i] = y[i] + h * A21 * k1[i];
        }
        rhs(t + h / 5.0, &y_stage, &mut k2);
        for i in 0..n {
            y_stage[i] = y[i] + h * (A31 * k1[i] + A32 * k2[i]);
        }
        rhs(t + 3.0 * h / 10.0, &y_stage, &mut k3);
        for i in 0..n {
            y_stage[i] = y[i] + h * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i]);
        }
        rhs(t + 4.0 * h / 5.0, &y_stage, &mut k4);
        for i in 0..n {
            y_stage[i] = y[i] + h * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i]);
        }
        rhs(t + 8.0 * h / 9.0, &y_stage, &mut k5);
        for i in 0..n {
            y_stage[i] =
                y[i] + h * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i] + A65 * k5[i]);
        }
        rhs(t + h, &y_stage, &mut k6);
        for i in 0..n {
            y_new[i] = y[i] + h * (B1 * k1[i] + B3 * k3[i] + B4 * k4[i] + B5 * k5[i] + B6 * k6[i]);
        }
        rhs(t + h, &y_new, &mut k7);

        let mut err = 0.0;
        let mut finite = true;
        for i in 0..n {
            let ei =
                h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
            finite &= y_new[i].is_finite() && ei.is_finite();
            let sc = settings.abs_tol + settings.rel_tol * y[i].abs().max(y_new[i].abs());
            err += (ei / sc) * (ei / sc);
        }
        if !finite {
            // Retry with a smaller step before giving up; overflow in a
            // trial step is recoverable, a non-finite rhs at y itself not.
            h *= 0.25;
            if t + h == t {
                return Err(OdeError::NonFiniteDerivative { t });
            }
            continue;
        }
        err = (err / n as f64).sqrt();

        let fac11 = err.powf(EXPO1);
        if err <= 1.0 {
            // Accept; the PI term uses the error of the previous step.
            let fac = (fac11 / facold.powf(BETA) / SAFE).clamp(1.0 / FAC_MAX, 1.0 / FAC_MIN);
            facold = err.max(1e-4);

            let mut cont = Vec::with_capacity(n);
            for i in 0..n {
                let ydiff = y_new[i] - y[i];
                let bspl = h * k1[i] - ydiff;
                cont.push([
                    y[i],
                    ydiff,
                    bspl,
                    ydiff - h * k7[i] - bspl,
                    h * (D1 * k1[i]
                        + D3 * k3[i]
                        + D4 * k4[i]
                        + D5 * k5[i]
                        + D6 * k6[i]
                        + D7 * k7[i]),
                ]);
            }
            traj.segments.push(Segment { t0: t, h, cont });

            t += h;
            y.copy_from_slice(&y_new);
            k1.copy_from_slice(&k7);
            traj.times.push(t);
            traj.states.extend_from_slice(&y);

            if settings.check_nonnegative {
                for (i, v) in y.iter().enumerate() {
                    if *v < neg_floor {
                        return Err(OdeError::NegativeState {
                            t,
                            index: i,
                            value: *v,
                        });
                    }
                }
            }
            h /= fac;
        } else {
            // Reject; shrink without the PI memory term.
            h /= (fac11 / SAFE).min(1.0 / FAC_MIN);
        }
    }

    Ok(traj)
}

/// Global minimum of the Euclidean distance from the dense output to
/// `target`, refined between mesh points. Returns `(time, distance)`.
pub fn detect_min_distance(traj: &Trajectory, target: &[f64]) -> (f64, f64) {
    assert_eq!(traj.dim(), target.len(), "target dimension mismatch");
    let mut buf = vec![0.0; traj.dim()];
    let dist2 = |traj: &Trajectory, t: f64, buf: &mut Vec<f64>| -> f64 {
        traj.eval_into(t, buf);
        buf.iter().zip(target).map(|(a, b)| (a - b) * (a - b)).sum()
    };

    let mut best_t = traj.first_time();
    let mut best = dist2(traj, best_t, &mut buf);
    for seg_idx in 0..traj.segments.len().max(1) {
        let (lo, hi) = if traj.segments.is_empty() {
            (traj.first_time(), traj.last_time())
        } else {
            let s = &traj.segments[seg_idx];
            (s.t0, s.t0 + s.h)
        };
        // Coarse scan, then golden-section around the best sample.
        const COARSE: usize = 8;
        let mut jbest = 0;
        let mut fbest = f64::INFINITY;
        for j in 0..=COARSE {
            let tt = lo + (hi - lo) * j as f64 / COARSE as f64;
            let f = dist2(traj, tt, &mut buf);
            if f < fbest {
                fbest = f;
                jbest = j;
            }
        }
        let mut a = lo + (hi - lo) * jbest.saturating_sub(1) as f64 / COARSE as f64;
        let mut b = lo + (hi - lo) * (jbest + 1).min(COARSE) as f64 / COARSE as f64;
        let inv_phi = 0.5 * (5f64.sqrt() - 1.0);
        let mut x1 = b - inv_phi * (b - a);
        let mut x2 = a + inv_phi * (b - a);
        let mut f1 = dist2(traj, x1, &mut buf);
        let mut f2 = dist2(traj, x2, &mut buf);
        for _ in 0..60 {
            if f1 > f2 {
                a = x1;
                x1 = x2;
                f1 = f2;
                x2 = a + inv_phi * (b - a);
                f2 = dist2(traj, x2, &mut buf);
            } else {
                b = x2;
                x2 = x1;
                f2 = f1;
                x1 = b - inv_phi * (b - a);
                f1 = dist2(traj, x1, &mut buf);
            }
        }
        let tm = 0.5 * (a + b);
        let fm = dist2(traj, tm, &mut buf).min(f1).min(f2).min(fbest);
        if fm < best {
            best = fm;
            best_t = tm;
        }
    }
    (best_t, best.sqrt())
}

/// First time at which `|g(y(t))| <= width`, located by bisection on the
/// dense output; `None` when the tube is never entered.
///
/// For a tube around a curve `w -> c`, pass `g = c - curve(w)`.
pub fn detect_tube_entry<G: Fn(&[f64]) -> f64>(traj: &Trajectory, g: G, width: f64) -> Option<f64> {
    let mut buf = vec![0.0; traj.dim()];
    let margin = |traj: &Trajectory, t: f64, buf: &mut Vec<f64>| -> f64 {
        traj.eval_into(t, buf);
        g(buf).abs() - width
    };
    let t_start = traj.first_time();
    if margin(traj, t_start, &mut buf) <= 0.0 {
        return Some(t_start);
    }
    const SAMPLES: usize = 8;
    let mut t_prev = t_start;
    for seg in &traj.segments {
        for j in 1..=SAMPLES {
            let tt = seg.t0 + seg.h * j as f64 / SAMPLES as f64;
            if margin(traj, tt, &mut buf) <= 0.0 {
                // Bisect the sign change of |g| - width in (t_prev, tt].
                let (mut lo, mut hi) = (t_prev, tt);
                for _ in 0..80 {
                    let mid = 0.5 * (lo + hi);
                    if margin(traj, mid, &mut buf) <= 0.0 {
                        hi = mid;
                    } else {
                        lo = mid;
                    }
                }
                return Some(hi);
            }
            t_prev = tt;
        }
    }
    None
}

/// Bounded display reparameterisation of time used for long-run plots;
/// never applied inside the solver.
pub fn t_inf(t: f64) -> f64 {
    1.0 - 1.0 / (t + std::f64::consts::E).ln()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{InitialConditions, RateConstants, System};
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    #[test]
    fn zero_field_constant() {
        let s = IntegrationSettings::with_t_end(5.0);
        let traj = integrate(|_t, _y, dy| dy.fill(0.0), &[1.25, 0.5], &s).unwrap();
        for i in 0..traj.len() {
            assert_eq!(traj.state(i), &[1.25, 0.5]);
        }
        assert_eq!(traj.eval(2.3), vec![1.25, 0.5]);
    }

    #[test]
    fn iaza_without_enzyme_is_constant() {
        let sys = System::new(
            RateConstants::new(1.0, 1.0, 1.0).unwrap(),
            InitialConditions::new(4.0, 0.0).unwrap(),
        );
        let s = IntegrationSettings::with_t_end(10.0);
        let traj = integrate(sys.ode_full(), &[4.0, 0.0, 0.0], &s).unwrap();
        let end = traj.last_state();
        assert_abs_diff_eq!(end[0], 4.0, epsilon = 1e-9);
        assert_abs_diff_eq!(end[1], 0.0, epsilon = 1e-12);
    }

    #[test]
    fn linear_relaxation_matches_analytic() {
        // dw/dt = k2 (z0 - w), w(0) = 0 => w(10) = 5 (1 - e^{-1}).
        let (k2, z0) = (0.1, 5.0);
        let s = IntegrationSettings::with_t_end(10.0);
        let traj = integrate(|_t, y, dy| dy[0] = k2 * (z0 - y[0]), &[0.0], &s).unwrap();
        let expected = z0 * (1.0 - (-1.0f64).exp());
        assert_relative_eq!(traj.last_state()[0], expected, max_relative = 1e-9);
        assert_relative_eq!(traj.last_state()[0], 3.1606028, max_relative = 1e-7);
    }

    #[test]
    fn interpolant_reproduces_mesh_states() {
        let s = IntegrationSettings {
            check_nonnegative: false,
            ..IntegrationSettings::with_t_end(3.0)
        };
        let traj = integrate(|t, y, dy| dy[0] = -y[0] + (2.0 * t).sin(), &[1.0], &s).unwrap();
        for i in 0..traj.len() {
            let v = traj.eval(traj.times()[i]);
            assert_abs_diff_eq!(v[0], traj.state(i)[0], epsilon = 1e-12);
        }
    }

    #[test]
    fn dense_output_close_to_reintegration() {
        let rhs = |_t: f64, y: &[f64], dy: &mut [f64]| {
            dy[0] = y[1];
            dy[1] = -y[0];
        };
        let coarse = IntegrationSettings {
            rel_tol: 1e-6,
            abs_tol: 1e-9,
            check_nonnegative: false,
            ..IntegrationSettings::with_t_end(6.0)
        };
        let traj = integrate(rhs, &[1.0, 0.0], &coarse).unwrap();
        // Compare interpolated midpoints against a tight-tolerance run.
        let tight = IntegrationSettings {
            rel_tol: 1e-12,
            abs_tol: 1e-14,
            check_nonnegative: false,
            ..IntegrationSettings::with_t_end(6.0)
        };
        let reference = integrate(rhs, &[1.0, 0.0], &tight).unwrap();
        for seg in &traj.segments {
            let tm = seg.t0 + 0.5 * seg.h;
            let a = traj.eval(tm);
            let b = reference.eval(tm);
            let tol = 10.0 * (coarse.abs_tol + coarse.rel_tol * b[0].abs());
            assert_abs_diff_eq!(a[0], b[0], epsilon = tol);
        }
    }

    #[test]
    fn tolerance_tightening_reduces_error() {
        let rhs = |_t: f64, y: &[f64], dy: &mut [f64]| dy[0] = -0.7 * y[0];
        let reference = (-0.7f64 * 4.0).exp();
        let mut prev = f64::INFINITY;
        for rtol in [1e-5, 1e-7, 1e-9] {
            let s = IntegrationSettings {
                rel_tol: rtol,
                abs_tol: rtol * 1e-3,
                ..IntegrationSettings::with_t_end(4.0)
            };
            let traj = integrate(rhs, &[1.0], &s).unwrap();
            let err = (traj.last_state()[0] - reference).abs();
            assert!(
                err < prev,
                "error {err} did not shrink below {prev} at rtol {rtol}"
            );
            prev = err;
        }
        assert!(prev < 1e-10);
    }

    #[test]
    fn conservation_holds_along_full_model() {
        let sys = System::new(
            RateConstants::new(2.0, 500.0, 500.0).unwrap(),
            InitialConditions::new(1.0, 9.0).unwrap(),
        );
        let s = IntegrationSettings::with_t_end(1.0);
        let traj = integrate(sys.ode_full(), &[1.0, 0.0, 0.0], &s).unwrap();
        for i in 0..traj.len() {
            let y = traj.state(i);
            let st = sys.state_from_zc(y[0], y[1]);
            let (r1, r2) = sys.conservation_residuals(&st);
            assert_abs_diff_eq!(r1, 0.0, epsilon = 1e-8);
            assert_abs_diff_eq!(r2, 0.0, epsilon = 1e-8);
            // w tracked explicitly must agree with the conservation value.
            assert_abs_diff_eq!(y[2], st.w, epsilon = 1e-7);
        }
    }

    #[test]
    fn min_distance_trivial_cases() {
        let s = IntegrationSettings::with_t_end(1.0);
        let at_target = integrate(|_t, _y, dy| dy.fill(0.0), &[3.0, 4.0], &s).unwrap();
        let (_, d) = detect_min_distance(&at_target, &[3.0, 4.0]);
        assert_abs_diff_eq!(d, 0.0, epsilon = 1e-12);
        let at_origin = integrate(|_t, _y, dy| dy.fill(0.0), &[0.0, 0.0], &s).unwrap();
        let (_, d) = detect_min_distance(&at_origin, &[3.0, 4.0]);
        assert_relative_eq!(d, 5.0, max_relative = 1e-12);
    }

    #[test]
    fn min_distance_refines_between_mesh_points() {
        // Circle of radius 1; distance to (2, 0) dips to 1 at t = 2 pi k.
        let rhs = |_t: f64, y: &[f64], dy: &mut [f64]| {
            dy[0] = -y[1];
            dy[1] = y[0];
        };
        let s = IntegrationSettings {
            check_nonnegative: false,
            ..IntegrationSettings::with_t_end(7.0)
        };
        // Start a quarter turn before the closest point.
        let traj = integrate(rhs, &[0.0, 1.0], &s).unwrap();
        let (tmin, d) = detect_min_distance(&traj, &[2.0, 0.0]);
        assert_relative_eq!(d, 1.0, max_relative = 1e-8);
        assert_relative_eq!(tmin, 1.5 * std::f64::consts::PI, max_relative = 1e-5);
    }

    #[test]
    fn tube_entry_trivial_and_monotone() {
        let rhs = |_t: f64, y: &[f64], dy: &mut [f64]| dy[0] = -y[0];
        let s = IntegrationSettings::with_t_end(20.0);
        let traj = integrate(rhs, &[1.0], &s).unwrap();
        // Start on the curve g = y - 1 => entry at t = 0.
        assert_eq!(detect_tube_entry(&traj, |y| y[0] - 1.0, 1e-6), Some(0.0));
        // Width at least the sup deviation => entry at t = 0.
        assert_eq!(detect_tube_entry(&traj, |y| y[0], 2.0), Some(0.0));
        // y(t) = e^{-t} enters |y| <= w at t = -ln w.
        let mut prev = f64::INFINITY;
        for width in [1e-3, 1e-2, 1e-1] {
            let t = detect_tube_entry(&traj, |y| y[0], width).unwrap();
            assert_relative_eq!(t, -width.ln(), max_relative = 1e-6);
            assert!(t <= prev);
            prev = t;
        }
        // Never entered.
        assert_eq!(detect_tube_entry(&traj, |y| y[0] + 10.0, 1e-3), None);
    }

    #[test]
    fn events_recorded_on_trajectory() {
        let s = IntegrationSettings::with_t_end(20.0);
        let mut traj = integrate(|_t, y, dy| dy[0] = -y[0], &[1.0], &s).unwrap();
        let t = detect_tube_entry(&traj, |y| y[0], 0.5).unwrap();
        traj.push_event("tube-entry", t);
        assert_eq!(traj.events.len(), 1);
        assert_abs_diff_eq!(traj.events[0].state[0], 0.5, epsilon = 1e-6);
    }

    #[test]
    fn negative_state_flagged() {
        let s = IntegrationSettings::with_t_end(2.0);
        let err = integrate(|_t, _y, dy| dy[0] = -1.0, &[1e-6], &s).unwrap_err();
        assert!(matches!(err, OdeError::NegativeState { .. }));
    }

    #[test]
    fn max_steps_exceeded_reported() {
        let s = IntegrationSettings {
            max_steps: 10,
            ..IntegrationSettings::with_t_end(100.0)
        };
        let err = integrate(|t, _y, dy| dy[0] = (10.0 * t).sin(), &[1.0], &s).unwrap_err();
        assert!(matches!(err, OdeError::MaxStepsExceeded { .. }));
    }

    #[test]
    fn non_finite_rhs_reported() {
        let s = IntegrationSettings::with_t_end(1.0);
        let err = integrate(|_t, _y, dy| dy[0] = f64::NAN, &[1.0], &s).unwrap_err();
        assert!(matches!(err, OdeError::NonFiniteDerivative { .. }));
    }

    #[test]
    fn step_underflow_at_finite_time_blowup() {
        // y' = y^2 blows up at t = 1; the controller shrinks the step to
        // the floating-point floor before reaching it.
        let s = IntegrationSettings {
            max_steps: 10_000_000,
            ..IntegrationSettings::with_t_end(2.0)
        };
        let err = integrate(|_t, y, dy| dy[0] = y[0] * y[0], &[1.0], &s).unwrap_err();
        assert!(
            matches!(err, OdeError::StepSizeUnderflow { .. })
                || matches!(err, OdeError::NonFiniteDerivative { .. }),
            "unexpected error {err:?}"
        );
    }

    #[test]
    fn mesh_times_strictly_increasing() {
        let s = IntegrationSettings::with_t_end(5.0);
        let traj = integrate(|_t, y, dy| dy[0] = -0.3 * y[0], &[2.0], &s).unwrap();
        for pair in traj.times().windows(2) {
            assert!(pair[1] > pair[0]);
        }
    }

    #[test]
    fn t_inf_transform_values() {
        assert_abs_diff_eq!(t_inf(0.0), 0.0, epsilon = 1e-15);
        assert!(t_inf(1e6) > 0.9);
        assert!(t_inf(10.0) > t_inf(1.0));
    }
}
