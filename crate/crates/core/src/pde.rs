//! Mild-solution time stepping.
//!
//! In the Legendre eigenbasis the diffusion part of the model is diagonal
//! with eigenvalues -kappa n(n+1), so the variation-of-constants formula
//! turns each mode into a scalar integral that exponential time differencing
//! discretizes without any stiffness restriction.  The only accuracy
//! constraint comes from the reaction term, which an embedded step-doubling
//! controller tracks in the V-norm.
//!
//! The reaction is abstracted behind [`Reaction`] so the same stepper drives
//! the full model, the pure semigroup (a reaction that is identically zero),
//! and the frozen-linear systems used by the qualitative checks.  The public
//! [`integrate`] entry point validates the model hypotheses first;
//! [`integrate_with`] is the generic engine and validates nothing beyond
//! plumbing, which is exactly what the comparison tooling needs when it
//! deliberately runs non-admissible configurations.

use crate::error::{Error, Result};
use crate::legendre::SpectralField;
use crate::model::{energy_h, energy_v, eval_g, validate, Forcing, ModelParams, StateVec};
use crate::ode::SplitTime;

/// Right-hand side seen by the stepper, already divided by heat capacity.
pub trait Reaction {
    fn eval(&self, t: f64, state: &StateVec) -> Result<StateVec>;
}

/// The full two-layer reaction.
pub struct ModelReaction<'a> {
    pub params: &'a ModelParams,
    pub forcing: &'a Forcing,
}

impl Reaction for ModelReaction<'_> {
    fn eval(&self, t: f64, state: &StateVec) -> Result<StateVec> {
        eval_g(t, state, self.params, self.forcing)
    }
}

/// No reaction: the flow is the pure diffusion semigroup.
pub struct ZeroReaction;

impl Reaction for ZeroReaction {
    fn eval(&self, _t: f64, state: &StateVec) -> Result<StateVec> {
        Ok(StateVec::constant(state.grid(), 0.0, 0.0))
    }
}

/// phi1(z) = (e^z - 1)/z, with the Taylor series below |z| = 1e-4 where the
/// closed form loses digits to cancellation.
pub fn phi1(z: f64) -> f64 {
    if z.abs() < 1e-4 {
        1.0 + z * (0.5 + z * (1.0 / 6.0 + z * (1.0 / 24.0 + z / 120.0)))
    } else {
        (z.exp() - 1.0) / z
    }
}

/// phi2(z) = (e^z - 1 - z)/z^2, same switchover.
pub fn phi2(z: f64) -> f64 {
    if z.abs() < 1e-4 {
        0.5 + z * (1.0 / 6.0 + z * (1.0 / 24.0 + z * (1.0 / 120.0 + z / 720.0)))
    } else {
        (z.exp() - 1.0 - z) / (z * z)
    }
}

/// u_n -> e^z u_n + dt phi1(z) g_n with z = -kappa n(n+1) dt.
fn etd1_field(u: &SpectralField, g: &SpectralField, kappa: f64, dt: f64) -> SpectralField {
    let mut out = u.clone();
    for (n, c) in out.coeffs_mut().iter_mut().enumerate() {
        let z = -kappa * (n * (n + 1)) as f64 * dt;
        *c = z.exp() * *c + dt * phi1(z) * g.coeffs()[n];
    }
    out
}

/// u_n -> u_n + dt phi2(z) dg_n, the ETDRK2 corrector increment.
fn phi2_field(u: &SpectralField, dg: &SpectralField, kappa: f64, dt: f64) -> SpectralField {
    let mut out = u.clone();
    for (n, c) in out.coeffs_mut().iter_mut().enumerate() {
        let z = -kappa * (n * (n + 1)) as f64 * dt;
        *c += dt * phi2(z) * dg.coeffs()[n];
    }
    out
}

/// One exponential Euler step of the mild formulation (frozen reaction).
pub fn step_etd1(
    state: &StateVec,
    t: f64,
    dt: f64,
    params: &ModelParams,
    forcing: &Forcing,
) -> Result<StateVec> {
    step_etd1_with(state, t, dt, params, &ModelReaction { params, forcing })
}

pub fn step_etd1_with<R: Reaction + ?Sized>(
    state: &StateVec,
    t: f64,
    dt: f64,
    params: &ModelParams,
    reaction: &R,
) -> Result<StateVec> {
    if !(dt > 0.0) {
        return Err(Error::InvalidArgument("step size must be positive".into()));
    }
    let g = reaction.eval(t, state)?;
    StateVec::new(
        etd1_field(&state.t_a, &g.t_a, params.kappa_a, dt),
        etd1_field(&state.t_s, &g.t_s, params.kappa_s, dt),
    )
}

/// One second-order exponential Runge-Kutta step: exponential Euler
/// predictor, phi2-weighted corrector on the reaction difference.
pub fn step_etdrk2(
    state: &StateVec,
    t: f64,
    dt: f64,
    params: &ModelParams,
    forcing: &Forcing,
) -> Result<StateVec> {
    step_etdrk2_with(state, t, dt, params, &ModelReaction { params, forcing })
}

pub fn step_etdrk2_with<R: Reaction + ?Sized>(
    state: &StateVec,
    t: f64,
    dt: f64,
    params: &ModelParams,
    reaction: &R,
) -> Result<StateVec> {
    if !(dt > 0.0) {
        return Err(Error::InvalidArgument("step size must be positive".into()));
    }
    let g1 = reaction.eval(t, state)?;
    let pred = StateVec::new(
        etd1_field(&state.t_a, &g1.t_a, params.kappa_a, dt),
        etd1_field(&state.t_s, &g1.t_s, params.kappa_s, dt),
    )?;
    let g2 = reaction.eval(t + dt, &pred)?;
    let dg = g2.sub(&g1)?;
    StateVec::new(
        phi2_field(&pred.t_a, &dg.t_a, params.kappa_a, dt),
        phi2_field(&pred.t_s, &dg.t_s, params.kappa_s, dt),
    )
}

/// Step controller configuration.
#[derive(Debug, Clone, Copy)]
pub struct StepControls {
    pub dt_init: f64,
    /// Accepted-step error bound, relative to 1 + the state's V-norm.
    pub rel_tol: f64,
    /// Hard floor; the controller wanting less is a stiffness failure.  Runs
    /// meant to ride a blow-up should set this very low: near the escape the
    /// legitimate step size sinks far below one ulp of absolute time.
    pub dt_min: f64,
    /// Sup-norm escape threshold.
    pub blowup_threshold: f64,
    /// Snapshot spacing (dense output by linear interpolation).
    pub record_every: f64,
    /// Upper step bound; keeps the interpolation error of the snapshot
    /// schedule under control for diagnostics that difference snapshots.
    pub dt_max: f64,
}

impl Default for StepControls {
    fn default() -> Self {
        Self {
            dt_init: 1e-3,
            rel_tol: 1e-7,
            dt_min: 1e-300,
            blowup_threshold: 1e8,
            record_every: 0.1,
            dt_max: f64::INFINITY,
        }
    }
}

impl StepControls {
    fn check(&self) -> Result<()> {
        let all_pos = self.dt_init > 0.0
            && self.rel_tol > 0.0
            && self.dt_min > 0.0
            && self.blowup_threshold > 0.0
            && self.record_every > 0.0
            && self.dt_max > 0.0;
        if !all_pos {
            return Err(Error::InvalidArgument("step controls must all be positive".into()));
        }
        if self.dt_min >= self.dt_init {
            return Err(Error::InvalidArgument("dt_min must be below dt_init".into()));
        }
        if self.dt_init > self.dt_max {
            return Err(Error::InvalidArgument("dt_init must not exceed dt_max".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunStatus {
    Completed,
    BlewUp,
    StiffnessFailure,
}

#[derive(Debug, Clone)]
pub struct TrajectoryRecord {
    pub times: Vec<f64>,
    pub states: Vec<StateVec>,
    /// (E_H, E_V) per recorded state.
    pub energies: Vec<(f64, f64)>,
    pub status: RunStatus,
    /// Escape-time bracket when status is BlewUp; width <= 1e-4 t_hi.
    pub t_star_bracket: Option<(f64, f64)>,
}

impl TrajectoryRecord {
    pub fn last_state(&self) -> &StateVec {
        self.states.last().expect("record holds at least the initial state")
    }
}

/// Bracket iff the run blew up.
pub fn detect_blowup(record: &TrajectoryRecord) -> Option<(f64, f64)> {
    match record.status {
        RunStatus::BlewUp => record.t_star_bracket,
        _ => None,
    }
}

const SUP_POINTS: usize = 513;

struct Recorder<'a> {
    times: Vec<f64>,
    states: Vec<StateVec>,
    energies: Vec<(f64, f64)>,
    params: &'a ModelParams,
}

impl<'a> Recorder<'a> {
    fn new(params: &'a ModelParams) -> Self {
        Self { times: Vec::new(), states: Vec::new(), energies: Vec::new(), params }
    }

    fn push(&mut self, t: f64, state: StateVec) {
        let e = (energy_h(&state, self.params), energy_v(&state, self.params));
        match self.times.last() {
            // Collapsed sub-ulp times keep only the latest state.
            Some(&last) if t <= last => {
                *self.states.last_mut().unwrap() = state;
                *self.energies.last_mut().unwrap() = e;
            }
            _ => {
                self.times.push(t);
                self.states.push(state);
                self.energies.push(e);
            }
        }
    }
}

fn lerp(a: &StateVec, b: &StateVec, th: f64) -> StateVec {
    a.scale(1.0 - th).add(&b.scale(th)).expect("snapshot endpoints share a grid")
}

/// Validated front door: hypothesis failures are reported by clause before
/// any stepping happens.
pub fn integrate(
    t0: &StateVec,
    params: &ModelParams,
    forcing: &Forcing,
    t_max: f64,
    controls: &StepControls,
) -> Result<TrajectoryRecord> {
    let issues = validate(params, forcing);
    if !issues.is_empty() {
        return Err(Error::Hypotheses(issues));
    }
    integrate_with(t0, params, &ModelReaction { params, forcing }, t_max, controls)
}

/// Adaptive ETDRK2 with step-doubling error control in the V-norm.  The
/// outcome is encoded in the record status; an `Err` means bad inputs.
pub fn integrate_with<R: Reaction + ?Sized>(
    t0: &StateVec,
    params: &ModelParams,
    reaction: &R,
    t_max: f64,
    controls: &StepControls,
) -> Result<TrajectoryRecord> {
    controls.check()?;
    if !(t_max > 0.0) || !t_max.is_finite() {
        return Err(Error::InvalidArgument("horizon must be finite and positive".into()));
    }
    if !t0.is_finite() {
        return Err(Error::InvalidArgument("initial state must be finite".into()));
    }

    let mut rec = Recorder::new(params);
    rec.push(0.0, t0.clone());
    if t0.sup_norm(SUP_POINTS)? > controls.blowup_threshold {
        return Ok(TrajectoryRecord {
            times: rec.times,
            states: rec.states,
            energies: rec.energies,
            status: RunStatus::BlewUp,
            t_star_bracket: Some((0.0, 0.0)),
        });
    }

    let slop = 1e-12 * t_max.max(1.0);
    let mut next_rec = controls.record_every;
    let mut t = SplitTime::zero();
    let mut state = t0.clone();
    let mut dt = controls.dt_init.min(controls.dt_max).min(t_max);
    let mut status = RunStatus::Completed;
    let mut bracket = None;

    'outer: loop {
        let tv = t.value();
        if tv >= t_max - slop {
            break;
        }
        dt = dt.min(controls.dt_max).min(t_max - tv);

        let trial: Result<(StateVec, StateVec)> = (|| {
            let big = step_etdrk2_with(&state, tv, dt, params, reaction)?;
            let h1 = step_etdrk2_with(&state, tv, 0.5 * dt, params, reaction)?;
            let h2 = step_etdrk2_with(&h1, tv + 0.5 * dt, 0.5 * dt, params, reaction)?;
            Ok((big, h2))
        })();

        let scale = controls.rel_tol * (1.0 + state.norm_v());
        let (fine, est) = match trial {
            Ok((big, h2)) => {
                let est = big.sub(&h2)?.norm_v() / 3.0;
                if !est.is_finite() {
                    (None, f64::INFINITY)
                } else {
                    (Some((big, h2)), est)
                }
            }
            Err(Error::Overflow(_)) => (None, f64::INFINITY),
            Err(e) => return Err(e),
        };

        match fine {
            Some((big, h2)) if est <= scale => {
                let state_prev = state;
                let t_prev = tv;
                t.advance(dt);
                let tv_new = t.value();
                // Local extrapolation: the doubled step already paid for the
                // data, and the combination cancels the leading error term,
                // so halving the tolerance moves smooth runs far less than
                // the tolerance itself.
                state = h2.scale(4.0 / 3.0).sub(&big.scale(1.0 / 3.0))?;

                while next_rec <= tv_new + slop && next_rec < t_max - slop {
                    let th = if tv_new > t_prev {
                        ((next_rec - t_prev) / (tv_new - t_prev)).clamp(0.0, 1.0)
                    } else {
                        1.0
                    };
                    rec.push(next_rec, lerp(&state_prev, &state, th));
                    next_rec += controls.record_every;
                }

                if state.sup_norm(SUP_POINTS)? > controls.blowup_threshold {
                    let b = bisect_escape(
                        &state_prev,
                        t_prev,
                        dt,
                        params,
                        reaction,
                        controls.blowup_threshold,
                    );
                    rec.push(tv_new, state.clone());
                    status = RunStatus::BlewUp;
                    bracket = Some(b);
                    break 'outer;
                }

                let grow =
                    if est > 0.0 { (0.9 * (scale / est).powf(1.0 / 3.0)).clamp(0.2, 5.0) } else { 5.0 };
                dt *= grow;
            }
            _ => {
                let shrink = if est.is_finite() && est > 0.0 {
                    (0.9 * (scale / est).powf(1.0 / 3.0)).clamp(0.2, 0.9)
                } else {
                    0.5
                };
                dt *= shrink;
                if dt < controls.dt_min {
                    rec.push(tv, state.clone());
                    status = RunStatus::StiffnessFailure;
                    break 'outer;
                }
            }
        }
    }

    if status == RunStatus::Completed {
        rec.push(t_max, state.clone());
    }
    Ok(TrajectoryRecord {
        times: rec.times,
        states: rec.states,
        energies: rec.energies,
        status,
        t_star_bracket: bracket,
    })
}

/// Bracket the sup-norm threshold crossing inside the step from t_prev of
/// length dt, to relative width 1e-4, by bisection on single sub-steps.
fn bisect_escape<R: Reaction + ?Sized>(
    state_in: &StateVec,
    t_prev: f64,
    dt: f64,
    params: &ModelParams,
    reaction: &R,
    threshold: f64,
) -> (f64, f64) {
    let mut lo = 0.0_f64;
    let mut hi = dt;
    for _ in 0..200 {
        if hi - lo <= 1e-4 * (t_prev + hi).abs() {
            break;
        }
        let mid = 0.5 * (lo + hi);
        let outside = match step_etdrk2_with(state_in, t_prev, mid, params, reaction) {
            Ok(s) => s.sup_norm(SUP_POINTS).map(|v| v > threshold).unwrap_or(true),
            Err(_) => true,
        };
        if outside {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let a = t_prev + lo;
    let mut b = t_prev + hi;
    if b <= a {
        b = a.next_up();
    }
    (a, b)
}
