//! Physical layer of the two-layer energy balance model.
//!
//! The unknowns are the atmosphere temperature T_a and surface temperature
//! T_s on the latitude variable x in (-1, 1).  After dividing by the heat
//! capacities, the evolution is
//!
//! ```text
//!   dT_a/dt = kappa_a A T_a + F_a(t, x, T_a, T_s)
//!   dT_s/dt = kappa_s A T_s + F_s(t, x, T_a, T_s)
//!
//!   gamma_a F_a = -lambda (T_a - T_s) + eps_a sigma_b |T_s|^3 T_s
//!                 - 2 eps_a sigma_b |T_a|^3 T_a + r(t) q(x) beta_a(T_a)
//!   gamma_s F_s = -lambda (T_s - T_a) - sigma_b |T_s|^3 T_s
//!                 + eps_a sigma_b |T_a|^3 T_a + r(t) q(x) beta_s(T_s)
//! ```
//!
//! The pair G = (F_a, F_s) is evaluated pseudo-spectrally: synthesize to the
//! quadrature nodes, apply the pointwise law, analyze back.  The quadrature
//! margin of the grid makes the quartic products alias-free.
//!
//! Sign conventions worth keeping in mind: the atmosphere radiates from two
//! faces (hence the factor 2), the surface from one, and both coalbedos are
//! nondecreasing in temperature, which makes the coupling cooperative for
//! nonnegative states.

use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::legendre::{SpectralField, SpectralGrid};

/// Bulk parameters.  Plain data; `validate` reports hypothesis violations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelParams {
    /// Atmosphere heat capacity.
    pub gamma_a: f64,
    /// Surface heat capacity.
    pub gamma_s: f64,
    /// Atmosphere horizontal diffusivity.
    pub kappa_a: f64,
    /// Surface horizontal diffusivity.
    pub kappa_s: f64,
    /// Stefan-Boltzmann constant in model units.
    pub sigma_b: f64,
    /// Atmosphere emissivity; solutions stay global for eps_a in (0, 2),
    /// and every nonnegative state blows up for eps_a > 2 when lambda = 0
    /// and beta_a = 0.
    pub eps_a: f64,
    /// Vertical heat exchange coefficient, >= 0.
    pub lambda: f64,
}

impl ModelParams {
    /// Desk-scale defaults: O(1) temperatures, order-one relaxation times.
    pub fn desk() -> Self {
        Self {
            gamma_a: 1.0,
            gamma_s: 1.0,
            kappa_a: 1.0,
            kappa_s: 1.0,
            sigma_b: 1.0,
            eps_a: 1.0,
            lambda: 0.5,
        }
    }
}

/// Temperature-dependent coalbedo, nondecreasing and bounded.
///
/// The ramp variant interpolates between the cold and warm values with the
/// cubic smoothstep 3 s^2 - 2 s^3, which is C^1 with Lipschitz constant
/// (beta_max - beta_min) / (t_high - t_low) * 3/2.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Coalbedo {
    Constant { value: f64 },
    SmoothRamp { beta_min: f64, beta_max: f64, t_low: f64, t_high: f64 },
}

impl Coalbedo {
    pub fn eval(&self, t: f64) -> f64 {
        match *self {
            Coalbedo::Constant { value } => value,
            Coalbedo::SmoothRamp { beta_min, beta_max, t_low, t_high } => {
                if t <= t_low {
                    beta_min
                } else if t >= t_high {
                    beta_max
                } else {
                    let s = (t - t_low) / (t_high - t_low);
                    beta_min + (beta_max - beta_min) * s * s * (3.0 - 2.0 * s)
                }
            }
        }
    }

    /// d beta / dt.  The smoothstep is C^1 (slope 0 at both ramp ends), so
    /// the one-sided-from-the-left convention at the joints coincides with
    /// the two-sided value.
    pub fn derivative(&self, t: f64) -> f64 {
        match *self {
            Coalbedo::Constant { .. } => 0.0,
            Coalbedo::SmoothRamp { beta_min, beta_max, t_low, t_high } => {
                if t <= t_low || t >= t_high {
                    0.0
                } else {
                    let w = t_high - t_low;
                    let s = (t - t_low) / w;
                    (beta_max - beta_min) * 6.0 * s * (1.0 - s) / w
                }
            }
        }
    }

    pub fn lipschitz(&self) -> f64 {
        match *self {
            Coalbedo::Constant { .. } => 0.0,
            Coalbedo::SmoothRamp { beta_min, beta_max, t_low, t_high } => {
                (beta_max - beta_min) / (t_high - t_low) * 1.5
            }
        }
    }

    pub fn sup(&self) -> f64 {
        match *self {
            Coalbedo::Constant { value } => value.abs(),
            Coalbedo::SmoothRamp { beta_min, beta_max, .. } => beta_min.abs().max(beta_max.abs()),
        }
    }

    pub fn min(&self) -> f64 {
        match *self {
            Coalbedo::Constant { value } => value,
            Coalbedo::SmoothRamp { beta_min, beta_max, .. } => beta_min.min(beta_max),
        }
    }

    pub fn max(&self) -> f64 {
        match *self {
            Coalbedo::Constant { value } => value,
            Coalbedo::SmoothRamp { beta_min, beta_max, .. } => beta_min.max(beta_max),
        }
    }

    /// True when the coalbedo is the zero function (the atmosphere case in
    /// the long-time theory).
    pub fn is_zero(&self) -> bool {
        match *self {
            Coalbedo::Constant { value } => value == 0.0,
            Coalbedo::SmoothRamp { beta_min, beta_max, .. } => beta_min == 0.0 && beta_max == 0.0,
        }
    }

    fn clauses(&self, name: &str, out: &mut Vec<String>) {
        match *self {
            Coalbedo::Constant { value } => {
                if !value.is_finite() || value < 0.0 {
                    out.push(format!("Hyp1(ii): {name} >= 0"));
                }
            }
            Coalbedo::SmoothRamp { beta_min, beta_max, t_low, t_high } => {
                if !(beta_min.is_finite() && beta_max.is_finite()) || beta_min < 0.0 {
                    out.push(format!("Hyp1(ii): {name} >= 0"));
                }
                if beta_max < beta_min {
                    out.push(format!("Hyp1(ii): {name} nondecreasing (beta_max >= beta_min)"));
                }
                if !(t_high > t_low) {
                    out.push(format!("Hyp1(ii): {name} ramp needs t_high > t_low"));
                }
            }
        }
    }
}

/// Latitude profile of the insolation, q(x).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InsolationShape {
    Constant { q0: f64 },
    /// q(x) = q0 (1 + s2 P2(x)), the classical second-mode flattening;
    /// s2 in (-1, 1) keeps the profile positive.
    WithP2 { q0: f64, s2: f64 },
}

/// Time modulation of the solar input, r(t).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SolarFactor {
    Constant { r0: f64 },
    /// r(t) = r0 (1 + delta sin(omega t)), delta in [0, 1).
    Sinusoidal { r0: f64, delta: f64, omega: f64 },
}

impl SolarFactor {
    pub fn eval(&self, t: f64) -> f64 {
        match *self {
            SolarFactor::Constant { r0 } => r0,
            SolarFactor::Sinusoidal { r0, delta, omega } => r0 * (1.0 + delta * (omega * t).sin()),
        }
    }

    pub fn lipschitz(&self) -> f64 {
        match *self {
            SolarFactor::Constant { .. } => 0.0,
            SolarFactor::Sinusoidal { r0, delta, omega } => r0 * delta * omega,
        }
    }

    pub fn min(&self) -> f64 {
        match *self {
            SolarFactor::Constant { r0 } => r0,
            SolarFactor::Sinusoidal { r0, delta, .. } => r0 * (1.0 - delta),
        }
    }

    pub fn max(&self) -> f64 {
        match *self {
            SolarFactor::Constant { r0 } => r0,
            SolarFactor::Sinusoidal { r0, delta, .. } => r0 * (1.0 + delta),
        }
    }

    pub fn is_constant(&self) -> bool {
        matches!(self, SolarFactor::Constant { .. })
    }
}

/// Forcing data bound to a grid: the insolation shape with its spectral and
/// nodal caches, the solar factor, and the two coalbedos.
#[derive(Debug, Clone)]
pub struct Forcing {
    shape: InsolationShape,
    solar: SolarFactor,
    pub beta_a: Coalbedo,
    pub beta_s: Coalbedo,
    q_field: SpectralField,
    q_nodes: Vec<f64>,
    q_min: f64,
    q_max: f64,
}

impl Forcing {
    pub fn new(
        grid: &Arc<SpectralGrid>,
        shape: InsolationShape,
        solar: SolarFactor,
        beta_a: Coalbedo,
        beta_s: Coalbedo,
    ) -> Result<Self> {
        if grid.n_modes() < 3 {
            if let InsolationShape::WithP2 { .. } = shape {
                return Err(Error::InvalidArgument(
                    "P2 insolation needs at least 3 modes".into(),
                ));
            }
        }
        let mut q_field = SpectralField::zeros(grid);
        match shape {
            InsolationShape::Constant { q0 } => q_field.coeffs_mut()[0] = q0,
            InsolationShape::WithP2 { q0, s2 } => {
                q_field.coeffs_mut()[0] = q0;
                q_field.coeffs_mut()[2] = q0 * s2;
            }
        }
        let q_nodes = q_field.synthesize();
        // Dense extrema; the shape is at most quadratic so 1025 Lobatto
        // points pin the extremes to rounding accuracy.
        let mut q_min = f64::INFINITY;
        let mut q_max = f64::NEG_INFINITY;
        for k in 0..1025 {
            let x = (std::f64::consts::PI * k as f64 / 1024.0).cos();
            let v = q_field.eval(x);
            q_min = q_min.min(v);
            q_max = q_max.max(v);
        }
        Ok(Self { shape, solar, beta_a, beta_s, q_field, q_nodes, q_min, q_max })
    }

    /// Autonomous unit-solar shorthand used by many tests and probes.
    pub fn constant(grid: &Arc<SpectralGrid>, q0: f64, beta_a: Coalbedo, beta_s: Coalbedo) -> Result<Self> {
        Self::new(
            grid,
            InsolationShape::Constant { q0 },
            SolarFactor::Constant { r0: 1.0 },
            beta_a,
            beta_s,
        )
    }

    pub fn shape(&self) -> InsolationShape {
        self.shape
    }

    pub fn solar(&self) -> SolarFactor {
        self.solar
    }

    pub fn q_field(&self) -> &SpectralField {
        &self.q_field
    }

    pub fn q_nodes(&self) -> &[f64] {
        &self.q_nodes
    }

    pub fn q_min(&self) -> f64 {
        self.q_min
    }

    pub fn q_max(&self) -> f64 {
        self.q_max
    }

    pub fn q_sup(&self) -> f64 {
        self.q_min.abs().max(self.q_max.abs())
    }

    /// Effective constant forcings bounding r(t) q(x) from below and above.
    pub fn q_bar_min(&self) -> f64 {
        self.solar.min() * self.q_min
    }

    pub fn q_bar_max(&self) -> f64 {
        self.solar.max() * self.q_max
    }
}

/// Hypothesis check for a parameter/forcing pair.  Empty means admissible;
/// each entry names the failed clause.
pub fn validate(params: &ModelParams, forcing: &Forcing) -> Vec<String> {
    let mut v = Vec::new();
    let pos = [
        (params.gamma_a, "gamma_a"),
        (params.gamma_s, "gamma_s"),
        (params.kappa_a, "kappa_a"),
        (params.kappa_s, "kappa_s"),
        (params.sigma_b, "sigma_b"),
        (params.eps_a, "eps_a"),
    ];
    for (val, name) in pos {
        if !(val > 0.0) || !val.is_finite() {
            v.push(format!("Hyp1(i): {name} > 0"));
        }
    }
    if !(params.lambda >= 0.0) || !params.lambda.is_finite() {
        v.push("Hyp1(i): lambda >= 0".into());
    }
    forcing.beta_a.clauses("beta_a", &mut v);
    forcing.beta_s.clauses("beta_s", &mut v);
    if !(forcing.q_min >= 0.0) {
        v.push("Hyp1(iii): q >= 0".into());
    }
    match forcing.solar {
        SolarFactor::Constant { r0 } => {
            if !(r0 > 0.0) || !r0.is_finite() {
                v.push("Hyp1(iii): r > 0".into());
            }
        }
        SolarFactor::Sinusoidal { r0, delta, omega } => {
            if !(r0 > 0.0) || !r0.is_finite() {
                v.push("Hyp1(iii): r > 0".into());
            }
            if !(delta >= 0.0 && delta < 1.0) {
                v.push("Hyp1(iii): r > 0 needs delta in [0, 1)".into());
            }
            if !omega.is_finite() {
                v.push("Hyp1(iii): r Lipschitz needs finite omega".into());
            }
        }
    }
    v
}

/// The coupled state (T_a, T_s) on one grid.
#[derive(Debug, Clone)]
pub struct StateVec {
    pub t_a: SpectralField,
    pub t_s: SpectralField,
}

impl StateVec {
    pub fn new(t_a: SpectralField, t_s: SpectralField) -> Result<Self> {
        if !t_a.same_grid(&t_s) {
            return Err(Error::InvalidArgument("state components on different grids".into()));
        }
        Ok(Self { t_a, t_s })
    }

    pub fn constant(grid: &Arc<SpectralGrid>, a: f64, s: f64) -> Self {
        Self { t_a: SpectralField::constant(grid, a), t_s: SpectralField::constant(grid, s) }
    }

    pub fn grid(&self) -> &Arc<SpectralGrid> {
        self.t_a.grid()
    }

    pub fn norm_h(&self) -> f64 {
        let a = self.t_a.norm_h();
        let s = self.t_s.norm_h();
        (a * a + s * s).sqrt()
    }

    pub fn norm_v(&self) -> f64 {
        let a = self.t_a.norms().v;
        let s = self.t_s.norms().v;
        (a * a + s * s).sqrt()
    }

    pub fn sup_norm(&self, n_eval: usize) -> Result<f64> {
        Ok(self.t_a.sup_norm(n_eval)?.max(self.t_s.sup_norm(n_eval)?))
    }

    pub fn add(&self, o: &Self) -> Result<Self> {
        Ok(Self { t_a: self.t_a.add(&o.t_a)?, t_s: self.t_s.add(&o.t_s)? })
    }

    pub fn sub(&self, o: &Self) -> Result<Self> {
        Ok(Self { t_a: self.t_a.sub(&o.t_a)?, t_s: self.t_s.sub(&o.t_s)? })
    }

    pub fn scale(&self, a: f64) -> Self {
        Self { t_a: self.t_a.scale(a), t_s: self.t_s.scale(a) }
    }

    pub fn is_finite(&self) -> bool {
        self.t_a.coeffs().iter().chain(self.t_s.coeffs()).all(|c| c.is_finite())
    }

    /// Random band-limited state: mean `offset`, modes 1..=max_mode with
    /// uniform amplitudes damped by 1/(1+n), shifted up if needed so both
    /// components stay >= floor on a dense evaluation grid.
    pub fn random_nonneg(
        grid: &Arc<SpectralGrid>,
        rng: &mut impl Rng,
        offset: f64,
        amplitude: f64,
        max_mode: usize,
        floor: f64,
    ) -> Self {
        let gen_field = |rng: &mut dyn rand::RngCore| {
            let mut f = SpectralField::zeros(grid);
            f.coeffs_mut()[0] = offset;
            let top = max_mode.min(grid.n_modes() - 1);
            for n in 1..=top {
                f.coeffs_mut()[n] = amplitude * rng.random_range(-1.0..1.0) / (1.0 + n as f64);
            }
            let mut min = f64::INFINITY;
            for k in 0..257 {
                let x = (std::f64::consts::PI * k as f64 / 256.0).cos();
                min = min.min(f.eval(x));
            }
            if min < floor {
                f.coeffs_mut()[0] += floor - min;
            }
            f
        };
        let t_a = gen_field(rng);
        let t_s = gen_field(rng);
        Self { t_a, t_s }
    }
}

/// Pointwise source law at one node.
#[inline]
fn quartic(u: f64) -> f64 {
    u.abs().powi(3) * u
}

/// The reaction pair G = (F_a, F_s) of the model, evaluated pseudo-spectrally
/// and returned in coefficient space.  Non-finite nodal values (the quartic
/// overflowing on its way to blow-up) surface as an overflow error.
pub fn eval_g(t: f64, state: &StateVec, params: &ModelParams, forcing: &Forcing) -> Result<StateVec> {
    let grid = state.grid();
    let ua = state.t_a.synthesize();
    let us = state.t_s.synthesize();
    let r = forcing.solar.eval(t);
    let q = forcing.q_nodes();
    let p = params;

    let mut fa = vec![0.0; grid.n_quad()];
    let mut fs = vec![0.0; grid.n_quad()];
    for j in 0..grid.n_quad() {
        let (a, s) = (ua[j], us[j]);
        let ra = p.eps_a * p.sigma_b * quartic(s) - 2.0 * p.eps_a * p.sigma_b * quartic(a);
        let rs = -p.sigma_b * quartic(s) + p.eps_a * p.sigma_b * quartic(a);
        fa[j] = (-p.lambda * (a - s) + ra + r * q[j] * forcing.beta_a.eval(a)) / p.gamma_a;
        fs[j] = (-p.lambda * (s - a) + rs + r * q[j] * forcing.beta_s.eval(s)) / p.gamma_s;
        if !(fa[j].is_finite() && fs[j].is_finite()) {
            return Err(Error::Overflow(format!(
                "reaction term non-finite at node {j} (T_a = {a:e}, T_s = {s:e})"
            )));
        }
    }
    StateVec::new(SpectralField::analyze(grid, &fa)?, SpectralField::analyze(grid, &fs)?)
}

/// Nodal Jacobian of the reaction pair with respect to (T_a, T_s).
///
/// d(|u|^3 u)/du = 4 |u|^3, so with r q beta' for the forcing feedback:
///
/// ```text
///   dF_a/dT_a = (-lambda - 8 eps_a sigma_b |T_a|^3 + r q beta_a') / gamma_a
///   dF_a/dT_s = ( lambda + 4 eps_a sigma_b |T_s|^3) / gamma_a
///   dF_s/dT_a = ( lambda + 4 eps_a sigma_b |T_a|^3) / gamma_s
///   dF_s/dT_s = (-lambda - 4 sigma_b |T_s|^3 + r q beta_s') / gamma_s
/// ```
///
/// The off-diagonal entries are nonnegative whenever lambda >= 0, which is
/// the cooperativity that drives every comparison argument downstream.
#[derive(Debug, Clone)]
pub struct GJacobian {
    pub dfa_da: Vec<f64>,
    pub dfa_ds: Vec<f64>,
    pub dfs_da: Vec<f64>,
    pub dfs_ds: Vec<f64>,
}

pub fn eval_g_jacobian(
    t: f64,
    state: &StateVec,
    params: &ModelParams,
    forcing: &Forcing,
) -> Result<GJacobian> {
    let grid = state.grid();
    let ua = state.t_a.synthesize();
    let us = state.t_s.synthesize();
    let r = forcing.solar.eval(t);
    let q = forcing.q_nodes();
    let p = params;
    let m = grid.n_quad();
    let mut jac = GJacobian {
        dfa_da: vec![0.0; m],
        dfa_ds: vec![0.0; m],
        dfs_da: vec![0.0; m],
        dfs_ds: vec![0.0; m],
    };
    for j in 0..m {
        let (a, s) = (ua[j], us[j]);
        let cube_a = a.abs().powi(3);
        let cube_s = s.abs().powi(3);
        jac.dfa_da[j] = (-p.lambda - 8.0 * p.eps_a * p.sigma_b * cube_a
            + r * q[j] * forcing.beta_a.derivative(a))
            / p.gamma_a;
        jac.dfa_ds[j] = (p.lambda + 4.0 * p.eps_a * p.sigma_b * cube_s) / p.gamma_a;
        jac.dfs_da[j] = (p.lambda + 4.0 * p.eps_a * p.sigma_b * cube_a) / p.gamma_s;
        jac.dfs_ds[j] = (-p.lambda - 4.0 * p.sigma_b * cube_s
            + r * q[j] * forcing.beta_s.derivative(s))
            / p.gamma_s;
        let finite = jac.dfa_da[j].is_finite()
            && jac.dfa_ds[j].is_finite()
            && jac.dfs_da[j].is_finite()
            && jac.dfs_ds[j].is_finite();
        if !finite {
            return Err(Error::Overflow(format!("jacobian non-finite at node {j}")));
        }
    }
    Ok(jac)
}

/// Constant C with ||G(t, u) - G(s, u)||_H <= C |t - s| uniformly in u:
/// only the solar factor carries explicit time dependence, so
///
/// ```text
///   C = sqrt(2) ||r||_Lip ||q||_inf
///       (||beta_a||_inf^2 / gamma_a^2 + ||beta_s||_inf^2 / gamma_s^2)^(1/2)
/// ```
///
/// (the sqrt(2) is the measure of the interval).
pub fn g_time_lipschitz_bound(params: &ModelParams, forcing: &Forcing) -> f64 {
    let ba = forcing.beta_a.sup() / params.gamma_a;
    let bs = forcing.beta_s.sup() / params.gamma_s;
    std::f64::consts::SQRT_2 * forcing.solar.lipschitz() * forcing.q_sup() * (ba * ba + bs * bs).sqrt()
}

/// Quadratic heat content E_H = gamma_a ||T_a||^2 + gamma_s ||T_s||^2.
pub fn energy_h(state: &StateVec, params: &ModelParams) -> f64 {
    let a = state.t_a.norm_h();
    let s = state.t_s.norm_h();
    params.gamma_a * a * a + params.gamma_s * s * s
}

/// Gradient energy E_V = gamma_a kappa_a int (1-x^2)(dT_a/dx)^2
///                     + gamma_s kappa_s int (1-x^2)(dT_s/dx)^2.
pub fn energy_v(state: &StateVec, params: &ModelParams) -> f64 {
    params.gamma_a * params.kappa_a * state.t_a.seminorm_v_sq()
        + params.gamma_s * params.kappa_s * state.t_s.seminorm_v_sq()
}
