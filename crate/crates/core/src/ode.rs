//! Space-homogeneous companion system.
//!
//! Dropping diffusion and freezing the insolation r(t) q(x) at a constant
//! value q_bar reduces the two-layer model to a plane autonomous system for
//! (T_a, T_s).  The cooperative structure makes its trajectories two-sided
//! bounds for the PDE dynamics, its equilibria order the PDE equilibria, and
//! its invariant rectangles are the absorbing boxes of the qualitative layer.
//!
//! The integrator is an embedded Dormand-Prince 4/5 pair.  One numerical
//! subtlety is worth spelling out: near a quartic blow-up the accepted step
//! size shrinks like (T* - t), far below one ulp of t itself, so absolute
//! time is accumulated as an unevaluated two-float sum.  The system is
//! autonomous, so restarting the clock inside a step costs nothing in
//! accuracy and the integrator can ride a trajectory all the way past the
//! escape threshold instead of stalling just below it.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::legendre::SpectralField;
use crate::model::{Coalbedo, Forcing, ModelParams, StateVec};

/// Escape threshold: a trajectory whose max-norm exceeds this is classified
/// as blown up.  The detected time is threshold-insensitive because the
/// escape is superlinear.
pub const B_STOP: f64 = 1e8;

/// The pair of coalbedo laws used by the box model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoalbedoPair {
    pub a: Coalbedo,
    pub s: Coalbedo,
}

impl CoalbedoPair {
    pub fn new(a: Coalbedo, s: Coalbedo) -> Self {
        Self { a, s }
    }

    /// The configuration of the long-time theory: no atmosphere absorption.
    pub fn surface_only(s: Coalbedo) -> Self {
        Self { a: Coalbedo::Constant { value: 0.0 }, s }
    }

    pub fn from_forcing(f: &Forcing) -> Self {
        Self { a: f.beta_a, s: f.beta_s }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OdeState {
    pub t_a: f64,
    pub t_s: f64,
}

impl OdeState {
    pub fn new(t_a: f64, t_s: f64) -> Self {
        Self { t_a, t_s }
    }

    pub fn max_abs(&self) -> f64 {
        self.t_a.abs().max(self.t_s.abs())
    }

    pub fn is_finite(&self) -> bool {
        self.t_a.is_finite() && self.t_s.is_finite()
    }
}

#[derive(Debug, Clone)]
pub struct OdeTrajectory {
    pub times: Vec<f64>,
    pub states: Vec<OdeState>,
    pub blew_up: bool,
    /// When `blew_up`, (t_lo, t_hi) with the escape inside and
    /// t_hi - t_lo <= 1e-6 t_hi.
    pub t_star_bracket: Option<(f64, f64)>,
}

impl OdeTrajectory {
    pub fn last(&self) -> OdeState {
        *self.states.last().expect("trajectory holds at least the initial state")
    }
}

/// Rectangle [0, m] x [0, mu m] left invariant by the box flow.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct InvariantRectangle {
    /// T_a bound.
    pub m: f64,
    /// Aspect ratio; mu^4 lies strictly between eps_a and 2.
    pub mu: f64,
    /// Set when m exceeds 1e6, i.e. the margin mu^4 - eps_a is degenerating.
    pub range_warning: bool,
}

impl InvariantRectangle {
    pub fn contains(&self, y: OdeState, slack: f64) -> bool {
        y.t_a >= -slack
            && y.t_s >= -slack
            && y.t_a <= self.m + slack
            && y.t_s <= self.mu * self.m + slack
    }
}

#[inline]
fn quartic(u: f64) -> f64 {
    u.abs().powi(3) * u
}

fn rhs_raw(y: OdeState, p: &ModelParams, q_bar: f64, betas: &CoalbedoPair) -> OdeState {
    let (a, s) = (y.t_a, y.t_s);
    let qa = quartic(a);
    let qs = quartic(s);
    let da = (-p.lambda * (a - s) + p.eps_a * p.sigma_b * qs - 2.0 * p.eps_a * p.sigma_b * qa
        + q_bar * betas.a.eval(a))
        / p.gamma_a;
    let ds = (-p.lambda * (s - a) - p.sigma_b * qs + p.eps_a * p.sigma_b * qa
        + q_bar * betas.s.eval(s))
        / p.gamma_s;
    OdeState::new(da, ds)
}

/// Right-hand side of the box system with constant insolation q_bar.  The
/// system is autonomous; `t` is accepted for signature uniformity.
pub fn ode_rhs(
    _t: f64,
    y: OdeState,
    params: &ModelParams,
    q_bar: f64,
    betas: &CoalbedoPair,
) -> Result<OdeState> {
    let d = rhs_raw(y, params, q_bar, betas);
    if !d.is_finite() {
        return Err(Error::Overflow(format!(
            "box right-hand side non-finite at T_a = {:e}, T_s = {:e}",
            y.t_a, y.t_s
        )));
    }
    Ok(d)
}

// Dormand-Prince 5(4) tableau.
const A2: [f64; 1] = [1.0 / 5.0];
const A3: [f64; 2] = [3.0 / 40.0, 9.0 / 40.0];
const A4: [f64; 3] = [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0];
const A5: [f64; 4] = [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0];
const A6: [f64; 5] = [
    9017.0 / 3168.0,
    -355.0 / 33.0,
    46732.0 / 5247.0,
    49.0 / 176.0,
    -5103.0 / 18656.0,
];
const B5: [f64; 6] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0];
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

struct BoxField<'a> {
    params: &'a ModelParams,
    q_bar: f64,
    betas: CoalbedoPair,
}

impl BoxField<'_> {
    fn f(&self, y: OdeState) -> OdeState {
        rhs_raw(y, self.params, self.q_bar, &self.betas)
    }

    /// One explicit step.  Returns the fifth-order solution and the scaled
    /// embedded error estimate; a non-finite stage yields err = infinity so
    /// the caller rejects and shortens.
    fn rk_step(&self, y: OdeState, h: f64, tol: f64) -> (OdeState, f64) {
        let comb = |coef: &[f64], ks: &[OdeState]| {
            let mut a = y.t_a;
            let mut s = y.t_s;
            for (c, k) in coef.iter().zip(ks) {
                a += h * c * k.t_a;
                s += h * c * k.t_s;
            }
            OdeState::new(a, s)
        };
        let k1 = self.f(y);
        let k2 = self.f(comb(&A2, &[k1]));
        let k3 = self.f(comb(&A3, &[k1, k2]));
        let k4 = self.f(comb(&A4, &[k1, k2, k3]));
        let k5 = self.f(comb(&A5, &[k1, k2, k3, k4]));
        let k6 = self.f(comb(&A6, &[k1, k2, k3, k4, k5]));
        let y5 = comb(&B5, &[k1, k2, k3, k4, k5, k6]);
        let k7 = self.f(y5);
        let y4 = comb(&B4, &[k1, k2, k3, k4, k5, k6, k7]);
        if !(y5.is_finite() && y4.is_finite()) {
            return (y5, f64::INFINITY);
        }
        let sc_a = tol * (1.0 + y.t_a.abs().max(y5.t_a.abs()));
        let sc_s = tol * (1.0 + y.t_s.abs().max(y5.t_s.abs()));
        let ea = (y5.t_a - y4.t_a) / sc_a;
        let es = (y5.t_s - y4.t_s) / sc_s;
        let err = (0.5 * (ea * ea + es * es)).sqrt();
        (y5, if err.is_finite() { err } else { f64::INFINITY })
    }
}

/// Absolute time as an unevaluated sum, exact under tiny increments.  Both
/// adaptive loops in this crate ride quartic escapes whose step sizes drop
/// below one ulp of absolute time; a plain accumulator would stall there.
#[derive(Clone, Copy)]
pub(crate) struct SplitTime {
    hi: f64,
    lo: f64,
}

impl SplitTime {
    pub(crate) fn zero() -> Self {
        Self { hi: 0.0, lo: 0.0 }
    }

    pub(crate) fn advance(&mut self, h: f64) {
        let s = self.hi + h;
        let bb = s - self.hi;
        let err = (self.hi - (s - bb)) + (h - bb);
        self.lo += err;
        let s2 = s + self.lo;
        let bb2 = s2 - s;
        self.lo = (s - (s2 - bb2)) + (self.lo - bb2);
        self.hi = s2;
    }

    pub(crate) fn value(&self) -> f64 {
        self.hi + self.lo
    }
}

enum StopReason {
    ReachedEnd,
    BlewUp { bracket: (f64, f64) },
}

/// Core adaptive loop; `checkpoints` (strictly increasing, within [0, t_max])
/// are hit exactly by clamping and reported through `on_record` together
/// with every accepted step when `record_steps` is set.
#[allow(clippy::too_many_arguments)]
fn drive(
    field: &BoxField,
    y0: OdeState,
    t_max: f64,
    tol: f64,
    checkpoints: &[f64],
    record_steps: bool,
    on_record: &mut dyn FnMut(f64, OdeState, bool),
) -> Result<StopReason> {
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument("tolerance must be positive".into()));
    }
    if !(t_max >= 0.0) || !t_max.is_finite() {
        return Err(Error::InvalidArgument("horizon must be finite and nonnegative".into()));
    }
    if !y0.is_finite() {
        return Err(Error::InvalidArgument("initial state must be finite".into()));
    }

    let mut t = SplitTime::zero();
    let mut y = y0;
    let mut next_ck = 0usize;
    while checkpoints.get(next_ck) == Some(&0.0) {
        on_record(0.0, y, true);
        next_ck += 1;
    }
    if record_steps {
        on_record(0.0, y, false);
    }
    if y.max_abs() > B_STOP {
        return Ok(StopReason::BlewUp { bracket: (0.0, 0.0) });
    }

    let d0 = field.f(y);
    let mut h = if d0.is_finite() && d0.max_abs() > 0.0 {
        (tol.powf(0.2) * (1.0 + y.max_abs()) / d0.max_abs()).min(t_max.max(1e-3))
    } else {
        1e-3_f64.min(t_max.max(1e-6))
    };
    if t_max == 0.0 {
        return Ok(StopReason::ReachedEnd);
    }

    let mut steps = 0u64;
    loop {
        let tv = t.value();
        if tv >= t_max {
            break;
        }
        let mut goal_is_ck = false;
        let mut goal = t_max;
        if let Some(&ck) = checkpoints.get(next_ck) {
            if ck <= goal {
                goal = ck;
                goal_is_ck = true;
            }
        }
        if h > goal - tv && goal - tv > 0.0 {
            h = goal - tv;
        }

        let mut rejects = 0u32;
        let (hs, ys, err_acc) = loop {
            let (trial, err) = field.rk_step(y, h, tol);
            if err <= 1.0 {
                break (h, trial, err);
            }
            rejects += 1;
            if rejects > 80 {
                return Err(Error::Stiffness(format!(
                    "no acceptable step after {rejects} rejections at t = {tv:e}"
                )));
            }
            h *= if err.is_finite() { (0.9 * err.powf(-0.2)).clamp(0.2, 1.0) } else { 0.5 };
            if h < 1e-290 {
                return Err(Error::Stiffness(format!("step size underflow at t = {tv:e}")));
            }
        };

        let y_prev = y;
        let t_prev = t;
        t.advance(hs);
        y = ys;
        steps += 1;
        if steps > 50_000_000 {
            return Err(Error::Stiffness("step budget exhausted".into()));
        }

        let mut tv_new = t.value();
        // Snap onto the clamp target so checkpoint comparison is exact.
        if (tv_new - goal).abs() <= 4.0 * f64::EPSILON * goal.abs() && hs == goal - tv {
            t = SplitTime::zero();
            t.advance(goal);
            tv_new = goal;
        }

        if y.max_abs() > B_STOP {
            let bracket = bisect_escape(field, y_prev, t_prev, hs, tol);
            on_record(tv_new, y, false);
            return Ok(StopReason::BlewUp { bracket });
        }

        if goal_is_ck && tv_new >= goal {
            on_record(goal, y, true);
            next_ck += 1;
        }
        if record_steps {
            on_record(tv_new, y, false);
        }

        let grow = if err_acc > 0.0 { (0.9 * err_acc.powf(-0.2)).clamp(0.2, 5.0) } else { 5.0 };
        h = (hs * grow).min(t_max);
    }
    Ok(StopReason::ReachedEnd)
}

/// Bracket the escape time inside the step from (t0, y_in) of length h by
/// bisection on sub-steps, to relative width 1e-6.
fn bisect_escape(field: &BoxField, y_in: OdeState, t0: SplitTime, h: f64, tol: f64) -> (f64, f64) {
    let mut lo = 0.0_f64;
    let mut hi = h;
    for _ in 0..200 {
        let t_hi_abs = t0.value() + hi;
        if hi - lo <= 1e-6 * t_hi_abs.abs() {
            break;
        }
        let mid = 0.5 * (lo + hi);
        let (trial, _) = field.rk_step(y_in, mid, tol);
        if !trial.is_finite() || trial.max_abs() > B_STOP {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let a = t0.value() + lo;
    let mut b = t0.value() + hi;
    if b <= a {
        b = a.next_up();
    }
    (a, b)
}

/// Adaptive integration on [0, t_max] recording every accepted step.
/// Terminates early with `blew_up` when the max-norm exceeds `B_STOP`,
/// bracketing the escape time by step bisection.
pub fn integrate_ode(
    y0: OdeState,
    params: &ModelParams,
    q_bar: f64,
    betas: &CoalbedoPair,
    t_max: f64,
    tol: f64,
) -> Result<OdeTrajectory> {
    let field = BoxField { params, q_bar, betas: *betas };
    let mut times: Vec<f64> = Vec::new();
    let mut states: Vec<OdeState> = Vec::new();
    let mut record = |t: f64, y: OdeState, _ck: bool| match times.last() {
        // Sub-ulp steps near an escape collapse to one output time; keep the
        // latest state so the tail of the record is the exceeding one.
        Some(&last) if t <= last => *states.last_mut().unwrap() = y,
        _ => {
            times.push(t);
            states.push(y);
        }
    };
    let reason = drive(&field, y0, t_max, tol, &[], true, &mut record)?;
    let (blew_up, t_star_bracket) = match reason {
        StopReason::ReachedEnd => (false, None),
        StopReason::BlewUp { bracket } => (true, Some(bracket)),
    };
    Ok(OdeTrajectory { times, states, blew_up, t_star_bracket })
}

/// States at the requested times exactly (steps are clamped onto them).
/// Times must be strictly increasing and nonnegative; an escape or a stall
/// before the last time is an error here, because callers use this for
/// two-sided comparisons that need all requested samples.
pub fn ode_states_at(
    y0: OdeState,
    params: &ModelParams,
    q_bar: f64,
    betas: &CoalbedoPair,
    times: &[f64],
    tol: f64,
) -> Result<Vec<OdeState>> {
    if times.windows(2).any(|w| w[0] >= w[1]) || times.first().is_some_and(|&t| t < 0.0) {
        return Err(Error::InvalidArgument(
            "sample times must be strictly increasing and nonnegative".into(),
        ));
    }
    let Some(&t_end) = times.last() else {
        return Ok(Vec::new());
    };
    let field = BoxField { params, q_bar, betas: *betas };
    let mut out = Vec::with_capacity(times.len());
    let mut record = |_t: f64, y: OdeState, ck: bool| {
        if ck {
            out.push(y);
        }
    };
    match drive(&field, y0, t_end, tol, times, false, &mut record)? {
        StopReason::ReachedEnd => {}
        StopReason::BlewUp { bracket } => {
            return Err(Error::Overflow(format!(
                "trajectory escapes near t = {:e} before the last sample",
                bracket.1
            )));
        }
    }
    if out.len() != times.len() {
        return Err(Error::Convergence("failed to hit every requested sample time".into()));
    }
    Ok(out)
}

/// Inverse of the strictly increasing map x -> lambda x + 2 eps sigma x^4 on
/// [0, inf), evaluated at lambda s + eps sigma s^4; this is the T_a that
/// makes the first stationarity equation hold when beta_a = 0.
fn phi_of_ts(s: f64, p: &ModelParams) -> f64 {
    let target = p.lambda * s + p.eps_a * p.sigma_b * quartic(s);
    if target <= 0.0 {
        return 0.0;
    }
    let f = |x: f64| p.lambda * x + 2.0 * p.eps_a * p.sigma_b * x.powi(4);
    let mut hi = s.max(1e-12);
    while f(hi) < target {
        hi *= 2.0;
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        if hi - lo <= 1e-12 {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if f(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Residual of the second stationarity equation along the curve
/// T_a = phi(T_s); its zeros are the box equilibria.
fn surface_residual(s: f64, p: &ModelParams, q_bar: f64, beta_s: &Coalbedo) -> f64 {
    let a = phi_of_ts(s, p);
    -p.lambda * (s - a) - p.sigma_b * quartic(s) + p.eps_a * p.sigma_b * quartic(a)
        + q_bar * beta_s.eval(s)
}

fn check_equilibrium_preconditions(params: &ModelParams, betas: &CoalbedoPair) -> Result<()> {
    if !(params.eps_a > 0.0 && params.eps_a < 2.0) {
        return Err(Error::Domain(format!(
            "equilibrium theory needs eps_a in (0, 2), got {}",
            params.eps_a
        )));
    }
    if !betas.a.is_zero() {
        return Err(Error::Unsupported(
            "equilibrium search requires beta_a = 0; the general case has no \
             convergence theory"
                .into(),
        ));
    }
    Ok(())
}

/// Default search range: ten times the closed-form equilibrium scale.
pub fn default_search_max(params: &ModelParams, q_bar: f64, beta_s: &Coalbedo) -> f64 {
    10.0 * (q_bar * beta_s.sup() / (params.sigma_b * (2.0 - params.eps_a))).powf(0.25)
}

/// All box equilibria with T_s in [0, search_max], as (phi(T_s), T_s) pairs
/// sorted by T_s.  Sign changes of the surface residual on a 1e4-point grid
/// are refined by bisection.
pub fn find_equilibria(
    params: &ModelParams,
    q_bar: f64,
    betas: &CoalbedoPair,
    search_max: f64,
) -> Result<Vec<OdeState>> {
    check_equilibrium_preconditions(params, betas)?;
    if !(search_max >= 0.0) || !search_max.is_finite() {
        return Err(Error::InvalidArgument("search_max must be finite and nonnegative".into()));
    }
    let res = |s: f64| surface_residual(s, params, q_bar, &betas.s);
    if search_max == 0.0 {
        let r0 = res(0.0);
        return if r0 == 0.0 { Ok(vec![OdeState::new(0.0, 0.0)]) } else { Ok(Vec::new()) };
    }

    const GRID: usize = 10_000;
    let width_tol = 1e-12 * search_max.max(1.0);
    let mut roots: Vec<f64> = Vec::new();
    let mut prev_s = 0.0;
    let mut prev_r = res(0.0);
    if !prev_r.is_finite() {
        return Err(Error::Overflow("equilibrium residual non-finite at 0".into()));
    }
    if prev_r == 0.0 {
        roots.push(0.0);
    }
    for k in 1..=GRID {
        let s = search_max * k as f64 / GRID as f64;
        let r = res(s);
        if !r.is_finite() {
            return Err(Error::Overflow(format!("equilibrium residual non-finite at T_s = {s:e}")));
        }
        if r == 0.0 {
            roots.push(s);
        } else if prev_r != 0.0 && (prev_r > 0.0) != (r > 0.0) {
            let (mut lo, mut hi) = (prev_s, s);
            let mut r_lo = prev_r;
            for _ in 0..200 {
                if hi - lo <= width_tol {
                    break;
                }
                let mid = 0.5 * (lo + hi);
                let rm = res(mid);
                if rm == 0.0 {
                    lo = mid;
                    hi = mid;
                } else if (rm > 0.0) == (r_lo > 0.0) {
                    lo = mid;
                    r_lo = rm;
                } else {
                    hi = mid;
                }
            }
            roots.push(0.5 * (lo + hi));
        }
        prev_s = s;
        prev_r = r;
    }
    roots.dedup_by(|b, a| (*b - *a).abs() <= 4.0 * width_tol);
    Ok(roots.into_iter().map(|s| OdeState::new(phi_of_ts(s, params), s)).collect())
}

/// The equilibrium with the largest T_s (equivalently, by monotonicity of the
/// stationarity curve, the largest T_a).
pub fn warmest_equilibrium(params: &ModelParams, q_bar: f64, betas: &CoalbedoPair) -> Result<OdeState> {
    let all = find_equilibria(params, q_bar, betas, default_search_max(params, q_bar, &betas.s))?;
    all.last().copied().ok_or_else(|| Error::Convergence("no equilibrium located".into()))
}

pub fn coldest_equilibrium(params: &ModelParams, q_bar: f64, betas: &CoalbedoPair) -> Result<OdeState> {
    let all = find_equilibria(params, q_bar, betas, default_search_max(params, q_bar, &betas.s))?;
    all.first().copied().ok_or_else(|| Error::Convergence("no equilibrium located".into()))
}

/// Largest outward component of the vector field over the two outflow edges
/// of [0, m] x [0, mu m]; <= 0 means the field points inward there.
fn worst_edge_outflow(
    m: f64,
    mu: f64,
    params: &ModelParams,
    q_bar: f64,
    betas: &CoalbedoPair,
) -> f64 {
    const EDGE: usize = 512;
    let mut worst = f64::NEG_INFINITY;
    // T_a = m edge: the a-component, monotone in T_s, worst at T_s = mu m;
    // the grid guards the claim.
    for k in 0..=EDGE {
        let s = mu * m * k as f64 / EDGE as f64;
        worst = worst.max(rhs_raw(OdeState::new(m, s), params, q_bar, betas).t_a);
    }
    // T_s = mu m edge: the s-component, worst at T_a = m.
    for k in 0..=EDGE {
        let a = m * k as f64 / EDGE as f64;
        worst = worst.max(rhs_raw(OdeState::new(a, mu * m), params, q_bar, betas).t_s);
    }
    worst
}

/// Smallest m (to 1e-6 relative) such that [0, m] x [0, mu m] is invariant,
/// then re-verified by integrating 32 boundary-seeded trajectories.
pub fn minimal_rectangle(
    params: &ModelParams,
    q_bar: f64,
    betas: &CoalbedoPair,
    mu: f64,
) -> Result<InvariantRectangle> {
    if !(params.eps_a > 0.0 && params.eps_a < 2.0) {
        return Err(Error::Domain(format!(
            "invariant rectangles need eps_a in (0, 2), got {}",
            params.eps_a
        )));
    }
    let mu4 = mu.powi(4);
    if !(mu4 > params.eps_a && mu4 < 2.0) {
        return Err(Error::Domain(format!(
            "mu^4 = {mu4} must lie strictly between eps_a = {} and 2",
            params.eps_a
        )));
    }

    let ok = |m: f64| worst_edge_outflow(m, mu, params, q_bar, betas) <= 0.0;
    let mut hi = default_search_max(params, q_bar, &betas.s).max(1.0) / 10.0;
    let mut grow = 0;
    while !ok(hi) {
        hi *= 2.0;
        grow += 1;
        if grow > 120 {
            return Err(Error::Convergence(
                "no invariant rectangle found below astronomical size".into(),
            ));
        }
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        if hi - lo <= 1e-6 * hi {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if ok(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let rect = InvariantRectangle { m: hi, mu, range_warning: hi > 1e6 };

    // Trajectory re-verification: 8 seeds per edge, horizon 50, exits beyond
    // 1e-8 relative disqualify the rectangle.
    let slack = 1e-8 * rect.m.max(1.0);
    for k in 0..8 {
        let f = (k as f64 + 0.5) / 8.0;
        let seeds = [
            OdeState::new(f * rect.m, mu * rect.m),
            OdeState::new(rect.m, f * mu * rect.m),
            OdeState::new(f * rect.m, 0.0),
            OdeState::new(0.0, f * mu * rect.m),
        ];
        for y0 in seeds {
            let traj = integrate_ode(y0, params, q_bar, betas, 50.0, 1e-9)?;
            if traj.blew_up {
                return Err(Error::Convergence("boundary trajectory escaped the rectangle".into()));
            }
            for y in &traj.states {
                if !rect.contains(*y, slack) {
                    return Err(Error::Convergence(format!(
                        "boundary trajectory left the rectangle: ({:e}, {:e})",
                        y.t_a, y.t_s
                    )));
                }
            }
        }
    }
    Ok(rect)
}

/// Constant bounds extracted from an initial field and its forcing: the
/// effective insolation range and the componentwise extremes of the data.
/// These feed the extremal box trajectories that sandwich the PDE solution.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ExtremalData {
    pub q_bar_min: f64,
    pub q_bar_max: f64,
    pub t_min0: OdeState,
    pub t_max0: OdeState,
}

fn field_range(f: &SpectralField) -> (f64, f64) {
    let mut min = f64::INFINITY;
    let mut max = f64::NEG_INFINITY;
    for k in 0..2049 {
        let x = match k {
            0 => 1.0,
            2048 => -1.0,
            _ => (std::f64::consts::PI * k as f64 / 2048.0).cos(),
        };
        let v = f.eval(x);
        min = min.min(v);
        max = max.max(v);
    }
    (min, max)
}

pub fn extremal_data(t0: &StateVec, forcing: &Forcing) -> ExtremalData {
    let (a_min, a_max) = field_range(&t0.t_a);
    let (s_min, s_max) = field_range(&t0.t_s);
    ExtremalData {
        q_bar_min: forcing.q_bar_min(),
        q_bar_max: forcing.q_bar_max(),
        t_min0: OdeState::new(a_min, s_min),
        t_max0: OdeState::new(a_max, s_max),
    }
}
