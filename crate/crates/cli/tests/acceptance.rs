//! Acceptance gate: sixteen end-to-end criteria, one test each, every test
//! printing a single pass/fail line with the worst observed value and the
//! pinned tolerance.  Grid sizes stay at or below 64 modes and horizons at
//! or below 200 time units.

use std::process::Command;
use std::sync::Arc;

use ebm2_core::{
    check_comparison, check_positivity, check_rectangle, check_sandwich, dissipation_check,
    energy_series, eval_g, eval_g_jacobian, find_equilibria, g_time_lipschitz_bound, hardy_check,
    integrate, integrate_ode, integrate_with, minimal_rectangle, ode_states_at,
    solve_equilibrium, warmest_equilibrium, Coalbedo, CoalbedoPair, EquilibriumSeed, Forcing,
    InsolationShape, ModelParams, OdeState, RunStatus, SolarFactor, SpectralField, SpectralGrid,
    StateVec, StepControls, ZeroReaction,
};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

fn report(num: u32, name: &str, worst: f64, tol_desc: &str, passed: bool) {
    println!(
        "criterion {num:02} {name}: {} (worst {worst:.3e}, tolerance {tol_desc})",
        if passed { "PASS" } else { "FAIL" }
    );
    assert!(passed, "criterion {num:02} {name}: worst {worst:.3e} vs {tol_desc}");
}

fn desk_forcing(grid: &Arc<SpectralGrid>) -> Forcing {
    Forcing::new(
        grid,
        InsolationShape::WithP2 { q0: 2.0, s2: -0.3 },
        SolarFactor::Constant { r0: 1.0 },
        Coalbedo::Constant { value: 0.0 },
        Coalbedo::Constant { value: 0.5 },
    )
    .unwrap()
}

fn const_forcing(grid: &Arc<SpectralGrid>, q0: f64, beta_s: f64) -> Forcing {
    Forcing::constant(
        grid,
        q0,
        Coalbedo::Constant { value: 0.0 },
        Coalbedo::Constant { value: beta_s },
    )
    .unwrap()
}

fn bary_weights(x: &[f64]) -> Vec<f64> {
    let m = x.len();
    let mut w = vec![1.0_f64; m];
    for i in 0..m {
        for j in 0..m {
            if i != j {
                w[i] /= x[i] - x[j];
            }
        }
    }
    w
}

fn diff_matrix(x: &[f64]) -> Vec<Vec<f64>> {
    let w = bary_weights(x);
    let m = x.len();
    let mut d = vec![vec![0.0_f64; m]; m];
    for i in 0..m {
        let mut diag = 0.0;
        for j in 0..m {
            if i != j {
                d[i][j] = (w[j] / w[i]) / (x[i] - x[j]);
                diag += d[i][j];
            }
        }
        d[i][i] = -diag;
    }
    d
}

fn mat_vec(m: &[Vec<f64>], v: &[f64]) -> Vec<f64> {
    m.iter().map(|row| row.iter().zip(v).map(|(a, b)| a * b).sum()).collect()
}

// 1: the spectral operator satisfies the eigenvalue identity exactly, and
// matches an independent nodal differentiation-matrix evaluation.
#[test]
fn c01_spectral_operator_exactness() {
    let grid = SpectralGrid::new(32).unwrap();
    let mut worst_eig = 0.0_f64;
    for n in 0..32 {
        let mut p = SpectralField::zeros(&grid);
        p.coeffs_mut()[n] = 1.0;
        let r = p.apply_diffusion().add(&p.scale((n * (n + 1)) as f64)).unwrap();
        worst_eig = worst_eig.max(r.norm_h());
    }

    // Independent oracle: barycentric differentiation on the quadrature
    // nodes, applied as d/dx[(1 - x^2) du/dx] to a low-degree field.
    let grid9 = SpectralGrid::new(9).unwrap();
    let mut rng = StdRng::seed_from_u64(0xACC1);
    let coeffs: Vec<f64> = (0..9).map(|_| rng.random_range(-1.0..1.0)).collect();
    let u = SpectralField::from_coeffs(&grid9, coeffs).unwrap();
    let nodes = grid9.nodes().to_vec();
    let d = diff_matrix(&nodes);
    let du = mat_vec(&d, &u.synthesize());
    let flux: Vec<f64> =
        nodes.iter().zip(&du).map(|(x, v)| (1.0 - x * x) * v).collect();
    let oracle = mat_vec(&d, &flux);
    let spectral = u.apply_diffusion().synthesize();
    let worst_nodal = oracle
        .iter()
        .zip(&spectral)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0_f64, f64::max);

    report(1, "spectral-operator-exactness", worst_eig.max(worst_nodal / 1e4), "1e-12 (nodal oracle 1e-8)", worst_eig <= 1e-12 && worst_nodal <= 1e-8);
}

// 2: the diffusion semigroup decays each mode at its exact rate, both in
// closed form and through the exponential integrator.
#[test]
fn c02_semigroup_decay() {
    let grid = SpectralGrid::new(32).unwrap();
    let mut rng = StdRng::seed_from_u64(0xACC2);
    let coeffs: Vec<f64> = (0..32).map(|_| rng.random_range(-1.0..1.0)).collect();
    let u = SpectralField::from_coeffs(&grid, coeffs.clone()).unwrap();
    let s = 0.5;
    let g = u.semigroup(s).unwrap();
    let mut worst = 0.0_f64;
    for (n, c) in g.coeffs().iter().enumerate() {
        worst = worst.max((c - coeffs[n] * (-((n * (n + 1)) as f64) * s).exp()).abs());
    }

    // Drive the same decay through the integrator with the reaction off.
    let p = ModelParams::desk();
    let ic = StateVec::new(
        SpectralField::from_coeffs(&grid, coeffs.clone()).unwrap(),
        SpectralField::from_coeffs(&grid, coeffs.clone()).unwrap(),
    )
    .unwrap();
    let controls = StepControls { rel_tol: 1e-9, record_every: 0.25, ..Default::default() };
    let rec = integrate_with(&ic, &p, &ZeroReaction, s, &controls).unwrap();
    let last = rec.last_state();
    for (n, c) in last.t_a.coeffs().iter().enumerate() {
        worst = worst.max((c - coeffs[n] * (-((n * (n + 1)) as f64) * s).exp()).abs());
    }
    report(2, "semigroup-decay", worst, "1e-10", worst <= 1e-10);
}

// 3: constant data reduces the full solver to the two-box system.
#[test]
fn c03_ode_reduction() {
    let grid = SpectralGrid::new(8).unwrap();
    let mut worst = 0.0_f64;
    for eps in [0.5, 1.0, 1.9] {
        let mut p = ModelParams::desk();
        p.eps_a = eps;
        let f = const_forcing(&grid, 2.0, 0.5);
        let betas = CoalbedoPair::from_forcing(&f);
        let controls = StepControls { rel_tol: 1e-9, record_every: 1.0, ..Default::default() };
        let rec = integrate(&StateVec::constant(&grid, 1.0, 1.2), &p, &f, 10.0, &controls).unwrap();
        let times: Vec<f64> = rec.times[1..].to_vec();
        let ode = ode_states_at(OdeState::new(1.0, 1.2), &p, 2.0, &betas, &times, 1e-12).unwrap();
        for (k, y) in ode.iter().enumerate() {
            let state = &rec.states[k + 1];
            let tail: f64 = state.t_a.coeffs()[1..]
                .iter()
                .chain(&state.t_s.coeffs()[1..])
                .map(|c| c.abs())
                .sum();
            let da = (state.t_a.coeffs()[0] - y.t_a).abs();
            let ds = (state.t_s.coeffs()[0] - y.t_s).abs();
            worst = worst.max(da.max(ds) + tail);
        }
    }
    report(3, "ode-reduction", worst, "1e-6 sup-norm", worst <= 1e-6);
}

// 4: with lambda = 0, unit emissivity, unit insolation and full surface
// absorption, the warm equilibrium is (1, 2^{1/4}) in closed form; both the
// box root finder and the full stationary solver must hit it.
#[test]
fn c04_closed_form_equilibrium() {
    let grid = SpectralGrid::new(8).unwrap();
    let mut p = ModelParams::desk();
    p.lambda = 0.0;
    let f = const_forcing(&grid, 1.0, 1.0);
    let betas = CoalbedoPair::from_forcing(&f);
    let quarter = 2.0_f64.powf(0.25);

    let warm = warmest_equilibrium(&p, 1.0, &betas).unwrap();
    let search = ebm2_core::default_search_max(&p, 1.0, &betas.s);
    let roots = find_equilibria(&p, 1.0, &betas, search).unwrap();
    let mut worst = (warm.t_a - 1.0).abs().max((warm.t_s - quarter).abs());
    worst = worst.max(
        roots
            .iter()
            .map(|r| (r.t_a - 1.0).abs().max((r.t_s - quarter).abs()))
            .fold(f64::INFINITY, f64::min),
    );

    let sol = solve_equilibrium(&p, &f, EquilibriumSeed::Warmest).unwrap();
    let tail: f64 = sol.state.t_a.coeffs()[1..]
        .iter()
        .chain(&sol.state.t_s.coeffs()[1..])
        .map(|c| c.abs())
        .sum();
    worst = worst
        .max((sol.state.t_a.coeffs()[0] - 1.0).abs())
        .max((sol.state.t_s.coeffs()[0] - quarter).abs())
        .max(tail);
    report(4, "closed-form-equilibrium", worst, "1e-8", worst <= 1e-8);
}

// 5: one hundred randomized ordered pairs stay ordered within the
// magnitude-scaled tolerance.
#[test]
fn c05_comparison_ordering() {
    let grid = SpectralGrid::new(8).unwrap();
    let p = ModelParams::desk();
    let f = desk_forcing(&grid);
    // Solver noise sits near 2 rel_tol (1 + |T|_V), well under the 1e-8
    // scale tolerance at this setting.
    let controls = StepControls { rel_tol: 1e-10, record_every: 1.0, ..Default::default() };
    let mut worst = 0.0_f64;
    let mut all = true;
    for seed in 0..100_u64 {
        let mut rng = StdRng::seed_from_u64(1000 + seed);
        let low = StateVec::random_nonneg(&grid, &mut rng, 1.0, 0.8, 5, 0.0);
        let shift = rng.random_range(0.5..1.5);
        let high = low.add(&StateVec::constant(&grid, shift, shift)).unwrap();
        let rep = check_comparison(&low, &high, &p, &f, 8.0, &controls).unwrap();
        worst = worst.max(-rep.max_violation / rep.tol);
        all &= rep.passed;
    }
    report(5, "comparison-ordering", worst, "1e-8 * scale (ratio 1)", all && worst <= 1.0);
}

// 6: positive insolation forces strict positivity past the burn-in time,
// and the unforced problem still preserves nonnegativity.
#[test]
fn c06_positivity() {
    let grid = SpectralGrid::new(8).unwrap();
    let p = ModelParams::desk();
    let f = desk_forcing(&grid);
    assert!(f.q_bar_min() > 0.0);
    let controls = StepControls { rel_tol: 1e-9, record_every: 0.1, ..Default::default() };
    let rec = integrate(&StateVec::constant(&grid, 0.0, 0.0), &p, &f, 2.0, &controls).unwrap();
    let rep = check_positivity(&rec, &f);
    let mut strict_min = f64::INFINITY;
    for (k, t) in rec.times.iter().enumerate() {
        if *t >= 0.1 {
            let a = rec.states[k].t_a.synthesize();
            let s = rec.states[k].t_s.synthesize();
            strict_min = a.iter().chain(&s).fold(strict_min, |m, &v| m.min(v));
        }
    }

    let f0 = Forcing::constant(
        &grid,
        0.0,
        Coalbedo::Constant { value: 0.0 },
        Coalbedo::Constant { value: 0.0 },
    )
    .unwrap();
    let mut rng = StdRng::seed_from_u64(0xACC6);
    let ic = StateVec::random_nonneg(&grid, &mut rng, 1.0, 0.7, 5, 0.0);
    let controls = StepControls { rel_tol: 1e-8, record_every: 0.25, ..Default::default() };
    let rec0 = integrate(&ic, &p, &f0, 5.0, &controls).unwrap();
    let rep0 = check_positivity(&rec0, &f0);

    let ok = rep.passed && strict_min > 0.0 && rep0.passed;
    report(6, "positivity", -rep.max_violation.min(rep0.max_violation).min(strict_min), "strictly positive past t = 0.1; nonnegative unforced", ok);
}

// 7: invariant rectangles hold over a long horizon from corner and interior
// seeds across the emissivity range.
#[test]
fn c07_invariant_rectangles() {
    let grid = SpectralGrid::new(8).unwrap();
    let f = const_forcing(&grid, 2.0, 0.5);
    let betas = CoalbedoPair::from_forcing(&f);
    let controls = StepControls { rel_tol: 1e-8, record_every: 1.0, ..Default::default() };
    let mut worst = 0.0_f64;
    let mut all = true;
    for eps in [0.5, 1.0, 1.9] {
        let mut p = ModelParams::desk();
        p.eps_a = eps;
        // mu^4 midway between the emissivity and the ceiling 2.
        let mu = ((eps + 2.0) / 2.0).powf(0.25);
        let rect = minimal_rectangle(&p, 2.0, &betas, mu).unwrap();
        let seeds = [
            StateVec::constant(&grid, rect.m, rect.mu * rect.m),
            StateVec::constant(&grid, 0.5 * rect.m, 0.4 * rect.mu * rect.m),
        ];
        for seed in &seeds {
            let rec = integrate(seed, &p, &f, 100.0, &controls).unwrap();
            let rep = check_rectangle(&rec, &rect).unwrap();
            worst = worst.max(-rep.max_violation / rep.tol);
            all &= rep.passed;
        }
    }
    report(7, "invariant-rectangles", worst, "1e-8 * scale (ratio 1)", all && worst <= 1.0);
}

// 8: the emissivity scan splits exactly at the theoretical threshold, the
// surviving runs are box-bounded, and the exploding ones escape no later
// than the coldest box sub-solution.
#[test]
fn c08_emissivity_scan() {
    let grid = SpectralGrid::new(8).unwrap();
    let f = desk_forcing(&grid);
    let betas = CoalbedoPair::from_forcing(&f);
    let controls = StepControls { rel_tol: 1e-8, record_every: 1.0, ..Default::default() };
    let ic = StateVec::constant(&grid, 1.0, 1.0);
    let mut worst_ratio = 0.0_f64;
    let mut ok = true;
    for eps in [1.0, 1.5, 1.9, 2.5, 3.0] {
        let mut p = ModelParams::desk();
        p.eps_a = eps;
        p.lambda = 0.0;
        let rec = integrate(&ic, &p, &f, 100.0, &controls).unwrap();
        if eps < 2.0 {
            ok &= rec.status == RunStatus::Completed;
            let rep = check_sandwich(&rec, &p, &f).unwrap();
            ok &= rep.passed;
        } else {
            ok &= rec.status == RunStatus::BlewUp;
            let (_, pde_hi) = rec.t_star_bracket.unwrap();
            let ode =
                integrate_ode(OdeState::new(1.0, 1.0), &p, f.q_bar_min(), &betas, 100.0, 1e-10)
                    .unwrap();
            ok &= ode.blew_up;
            let (_, ode_hi) = ode.t_star_bracket.unwrap();
            worst_ratio = worst_ratio.max(pde_hi / ode_hi);
            ok &= pde_hi <= ode_hi * 1.01;
        }
    }
    report(8, "emissivity-scan", worst_ratio, "completes below 2, blows above; t* ratio <= 1.01", ok);
}

// 9: twenty random solutions stay between the box trajectories built from
// their own extremes.
#[test]
fn c09_box_sandwich() {
    let grid = SpectralGrid::new(10).unwrap();
    let p = ModelParams::desk();
    let f = Forcing::new(
        &grid,
        InsolationShape::WithP2 { q0: 2.0, s2: -0.3 },
        SolarFactor::Sinusoidal { r0: 1.0, delta: 0.1, omega: 3.0 },
        Coalbedo::Constant { value: 0.0 },
        Coalbedo::Constant { value: 0.5 },
    )
    .unwrap();
    let controls = StepControls { rel_tol: 1e-8, record_every: 0.5, ..Default::default() };
    let mut worst = 0.0_f64;
    let mut all = true;
    for seed in 0..20_u64 {
        let mut rng = StdRng::seed_from_u64(900 + seed);
        let ic = StateVec::random_nonneg(&grid, &mut rng, 1.2, 0.8, 6, 0.0);
        let rec = integrate(&ic, &p, &f, 10.0, &controls).unwrap();
        let rep = check_sandwich(&rec, &p, &f).unwrap();
        worst = worst.max(-rep.max_violation / rep.tol);
        all &= rep.passed;
    }
    report(9, "box-sandwich", worst, "1e-8 * scale (ratio 1)", all && worst <= 1.0);
}

// 10: the warmest-seed solve descends monotonically, and stationary states
// reached from random seeds never exceed it.
#[test]
fn c10_warmest_dominance() {
    let grid = SpectralGrid::new(10).unwrap();
    let p = ModelParams::desk();
    let f = desk_forcing(&grid);
    let warm = solve_equilibrium(&p, &f, EquilibriumSeed::Warmest).unwrap();
    let mut ok = !warm.monotone_warning;
    let mut worst = 0.0_f64;
    for seed in 0..10_u64 {
        let mut rng = StdRng::seed_from_u64(700 + seed);
        let ic = StateVec::random_nonneg(&grid, &mut rng, 1.0, 0.4, 5, 0.0);
        let sol = solve_equilibrium(&p, &f, EquilibriumSeed::Custom(ic)).unwrap();
        let da = sol.state.t_a.sub(&warm.state.t_a).unwrap().synthesize();
        let ds = sol.state.t_s.sub(&warm.state.t_s).unwrap().synthesize();
        for v in da.iter().chain(&ds) {
            worst = worst.max(*v);
        }
    }
    ok &= worst <= 1e-7;
    report(10, "warmest-dominance", worst, "1e-7 (descent monotone within 1e-8 * scale)", ok);
}

// 11: the heat-content balance closes at every interior snapshot and its
// residual drops at second order when the snapshot spacing halves.
#[test]
fn c11_energy_identity() {
    let grid = SpectralGrid::new(10).unwrap();
    let p = ModelParams::desk();
    let f = desk_forcing(&grid);
    let mut rng = StdRng::seed_from_u64(0xACC11);
    let raw = StateVec::random_nonneg(&grid, &mut rng, 1.0, 0.6, 5, 0.0);
    let spin = integrate(&raw, &p, &f, 1.5, &StepControls::default()).unwrap();
    let controls = StepControls {
        rel_tol: 1e-10,
        record_every: 0.005,
        dt_max: 1e-3,
        ..Default::default()
    };
    let rec = integrate(spin.last_state(), &p, &f, 0.4, &controls).unwrap();
    let mut worst = 0.0_f64;
    for row in energy_series(&rec, &p, &f).unwrap() {
        let scale = 1.0 + row.e_h.abs() + row.e_v.abs();
        let budget = (1e-4 * row.production.abs()).max(1e-6 * scale);
        worst = worst.max(row.identity_residual / budget);
    }

    let t0 = StateVec::random_nonneg(&grid, &mut rng, 1.2, 0.8, 5, 0.0);
    let run = |record_every: f64, dt_max: f64| {
        let controls = StepControls {
            rel_tol: 1e-10,
            dt_init: dt_max,
            record_every,
            dt_max,
            ..Default::default()
        };
        let rec = integrate(&t0, &p, &f, 0.3, &controls).unwrap();
        energy_series(&rec, &p, &f)
            .unwrap()
            .iter()
            .map(|r| r.identity_residual)
            .fold(0.0_f64, f64::max)
    };
    let ratio = run(0.01, 5e-4) / run(0.005, 2.5e-4);
    let ok = worst <= 1.0 && ratio >= 2.8;
    report(11, "energy-identity", worst.max(2.8 / ratio), "max(1e-4 |production|, 1e-6 scale); halving ratio >= 2.8", ok);
}

// 12: the gradient energy obeys the exponential-decay bound with the
// empirically measured forcing level, across rates and trajectories.
#[test]
fn c12_gradient_energy_decay() {
    let grid = SpectralGrid::new(10).unwrap();
    let p = ModelParams::desk();
    let f = desk_forcing(&grid);
    let controls = StepControls { rel_tol: 1e-8, record_every: 0.02, ..Default::default() };
    let mut ok = true;
    for seed in 0..10_u64 {
        let mut rng = StdRng::seed_from_u64(500 + seed);
        let ic = StateVec::random_nonneg(&grid, &mut rng, 1.5, 0.8, 6, 0.0);
        let rec = integrate(&ic, &p, &f, 30.0, &controls).unwrap();
        for sigma in [0.5, 1.0, 2.0] {
            let rep = dissipation_check(&rec, &p, &f, sigma).unwrap();
            ok &= rep.tau0.is_some() && rep.holds && rep.n_bound.is_finite();
        }
    }
    report(12, "gradient-energy-decay", if ok { 0.0 } else { 1.0 }, "Gronwall bound with empirical level", ok);
}

// 13: the weighted Hardy inequality holds with the constructive constant
// across two hundred random fields and the pinned exponent grid.
#[test]
fn c13_hardy_inequality() {
    let grid = SpectralGrid::new(12).unwrap();
    let mut rng = StdRng::seed_from_u64(0xACC13);
    let mut worst = 0.0_f64;
    let combos: Vec<(f64, f64)> = [0.5, 1.0, 4.0]
        .iter()
        .flat_map(|&n| [0.25, 0.5, 0.9].iter().map(move |&g| (n, g)))
        .collect();
    for k in 0..200 {
        let coeffs: Vec<f64> = (0..12).map(|_| rng.random_range(-1.0..1.0)).collect();
        let v = SpectralField::from_coeffs(&grid, coeffs).unwrap();
        let (n, gamma) = combos[k % combos.len()];
        let rep = hardy_check(&v, n, gamma).unwrap();
        worst = worst.max(rep.lhs / rep.rhs);
        assert!(rep.holds);
    }
    report(13, "hardy-inequality", worst, "lhs/rhs <= 1", worst <= 1.0);
}

// 14: the reaction is Lipschitz in time with the stated constant under a
// seasonal solar factor.
#[test]
fn c14_reaction_time_lipschitz() {
    let grid = SpectralGrid::new(8).unwrap();
    let p = ModelParams::desk();
    let f = Forcing::new(
        &grid,
        InsolationShape::WithP2 { q0: 2.0, s2: -0.3 },
        SolarFactor::Sinusoidal { r0: 1.0, delta: 0.3, omega: 2.0 },
        Coalbedo::Constant { value: 0.2 },
        Coalbedo::Constant { value: 0.5 },
    )
    .unwrap();
    let c = g_time_lipschitz_bound(&p, &f);
    let mut rng = StdRng::seed_from_u64(0xACC14);
    let mut worst = 0.0_f64;
    let mut count = 0;
    while count < 100 {
        let state = StateVec::random_nonneg(&grid, &mut rng, 1.0, 0.5, 5, 0.0);
        let t: f64 = rng.random_range(0.0..10.0);
        let s: f64 = rng.random_range(0.0..10.0);
        if (t - s).abs() < 1e-6 {
            continue;
        }
        let diff = eval_g(t, &state, &p, &f).unwrap().sub(&eval_g(s, &state, &p, &f).unwrap()).unwrap();
        worst = worst.max(diff.norm_h() / (c * (t - s).abs()));
        count += 1;
    }
    report(14, "reaction-time-lipschitz", worst, "ratio <= 1", worst <= 1.0 + 1e-9);
}

// 15: finite differences of the reaction converge to its Jacobian at second
// order over the pinned step set.
#[test]
fn c15_jacobian_consistency() {
    let grid = SpectralGrid::new(8).unwrap();
    let p = ModelParams::desk();
    let f = desk_forcing(&grid);
    let mut rng = StdRng::seed_from_u64(0xACC15);
    let state = StateVec::random_nonneg(&grid, &mut rng, 1.0, 0.5, 5, 0.0);
    let dir = StateVec::random_nonneg(&grid, &mut rng, 0.0, 1.0, 5, 0.0)
        .sub(&StateVec::constant(&grid, 0.5, 0.5))
        .unwrap()
        .scale(3.0);
    let jac = eval_g_jacobian(0.0, &state, &p, &f).unwrap();
    let da = dir.t_a.synthesize();
    let ds = dir.t_s.synthesize();
    let m = grid.n_quad();
    let mut la = vec![0.0; m];
    let mut ls = vec![0.0; m];
    for j in 0..m {
        la[j] = jac.dfa_da[j] * da[j] + jac.dfa_ds[j] * ds[j];
        ls[j] = jac.dfs_da[j] * da[j] + jac.dfs_ds[j] * ds[j];
    }
    let lin = StateVec::new(
        SpectralField::analyze(&grid, &la).unwrap(),
        SpectralField::analyze(&grid, &ls).unwrap(),
    )
    .unwrap();
    let mut errs = Vec::new();
    for eps in [1e-3_f64, 1e-4, 1e-5] {
        let plus = eval_g(0.0, &state.add(&dir.scale(eps)).unwrap(), &p, &f).unwrap();
        let minus = eval_g(0.0, &state.add(&dir.scale(-eps)).unwrap(), &p, &f).unwrap();
        let fd = plus.sub(&minus).unwrap().scale(0.5 / eps);
        errs.push(fd.sub(&lin).unwrap().norm_h());
    }
    let xs = [1e-3_f64.ln(), 1e-4_f64.ln(), 1e-5_f64.ln()];
    let ys: Vec<f64> = errs.iter().map(|e| e.ln()).collect();
    let xm: f64 = xs.iter().sum::<f64>() / 3.0;
    let ym: f64 = ys.iter().sum::<f64>() / 3.0;
    let slope = xs.iter().zip(&ys).map(|(x, y)| (x - xm) * (y - ym)).sum::<f64>()
        / xs.iter().map(|x| (x - xm) * (x - xm)).sum::<f64>();
    report(15, "jacobian-consistency", slope, ">= 1.9 over eps {1e-3, 1e-4, 1e-5}", slope >= 1.9);
}

// 16: the simulate command is bit-for-bit deterministic.
#[test]
fn c16_simulate_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("config.json");
    std::fs::write(
        &config,
        r#"{
  "schema": 1,
  "model": {"gamma_a": 1.0, "gamma_s": 1.0, "kappa_a": 1.0, "kappa_s": 1.0,
            "sigma_b": 1.0, "eps_a": 1.0, "lambda": 0.5},
  "forcing": {
    "shape": {"kind": "with_p2", "q0": 2.0, "s2": -0.3},
    "solar": {"kind": "constant", "r0": 1.0},
    "beta_a": {"kind": "constant", "value": 0.0},
    "beta_s": {"kind": "constant", "value": 0.5}
  },
  "grid": {"n_modes": 8},
  "ic": {"kind": "random", "seed": 11, "offset": 1.0, "amplitude": 0.5, "max_mode": 5, "floor": 0.0},
  "run": {"t_max": 2.0, "record_every": 0.25}
}"#,
    )
    .unwrap();
    for out in ["a", "b"] {
        let status = Command::new(env!("CARGO_BIN_EXE_ebm2"))
            .current_dir(dir.path())
            .args(["simulate", "--config"])
            .arg(&config)
            .args(["--out", out])
            .env_remove("EBM2_OUT")
            .status()
            .unwrap();
        assert!(status.success());
    }
    let mut identical = true;
    for file in ["coeffs.csv", "nodal.csv", "energy.csv"] {
        let a = std::fs::read(dir.path().join("a").join(file)).unwrap();
        let b = std::fs::read(dir.path().join("b").join(file)).unwrap();
        identical &= a == b;
    }
    report(16, "simulate-determinism", if identical { 0.0 } else { 1.0 }, "byte-identical CSVs", identical);
}
