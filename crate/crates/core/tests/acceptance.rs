//! Acceptance suite. Each test prints one `PASS`/`FAIL` line for its
//! criterion and then asserts it. Runs take tens of minutes on one core.

use std::sync::OnceLock;

use nalgebra::DMatrix;
use num_complex::Complex64 as C;
use polaron_core::adiabatic::{
    gap_drift_at, initial_phonons, run_sweep, FitOutcome, InitialPhonons, PhaseIntegrand, ScalingReport,
    SweepConfig, TrajectoryConfig,
};
use polaron_core::dynamics::{conservation_report, evolve_with_samples, LPState, Propagator};
use polaron_core::eigensolver::{
    eigenvalue_velocity, ground_state, ground_state_velocity, pekar_minimize, GroundStateRecord, PekarSolution,
    ResolventContext,
};
use polaron_core::fields::{inequality_report, potential, ElectronField, PhononField};
use polaron_core::fit::loglog_fit;
use polaron_core::fock::{
    bound_checks, build_ccr, coupling_integral_quadrature, comparison_scaling, weyl, BoundOptions,
    FockBasis, FockState, ToyOptions,
};
use polaron_core::grid::{make_grid, Field, SpectralGrid};

fn verdict(id: u32, name: &str, pass: bool, detail: &str) -> bool {
    println!("{} criterion {id:>2} {name}: {detail}", if pass { "PASS" } else { "FAIL" });
    pass
}

fn info(id: u32, detail: &str) {
    println!("INFO criterion {id:>2}: {detail}");
}

fn c(x: f64) -> C {
    C::new(x, 0.0)
}

fn gaussian_psi(grid: &SpectralGrid, width: f64, kick: f64) -> Field {
    grid.sample_position(|x| {
        let r2: f64 = x.iter().map(|v| v * v).sum();
        C::from_polar((-r2 / (2.0 * width * width)).exp(), kick * x[0])
    })
}

fn gaussian_phonons(grid: &SpectralGrid, amplitude: f64, width: f64, angle: f64) -> Field {
    grid.sample_momentum(|k| {
        let k2: f64 = k.iter().map(|v| v * v).sum();
        C::from_polar(-amplitude * (-0.5 * width * width * k2).exp(), angle)
    })
}

// Pekar experiments: three dimensions, box 2, 32 points per axis.
const PEKAR_BOX: f64 = 2.0;
const PEKAR_TOL: f64 = 1e-8;
const SWEEP_ALPHAS: [f64; 5] = [4.0, 6.0, 8.0, 12.0, 16.0];

fn pekar_grid(n: usize) -> SpectralGrid {
    make_grid(n, PEKAR_BOX, 3).unwrap()
}

fn pekar32() -> &'static PekarSolution {
    static SOL: OnceLock<PekarSolution> = OnceLock::new();
    SOL.get_or_init(|| {
        let g = pekar_grid(32);
        let psi0 = ElectronField::normalized(gaussian_psi(&g, PEKAR_BOX / 8.0, 0.0)).unwrap();
        pekar_minimize(&psi0, PEKAR_TOL).unwrap()
    })
}

fn sweep_trajectory() -> TrajectoryConfig {
    TrajectoryConfig {
        dt: 1e-4,
        t_final: 1.0,
        frame_cadence: 500,
        eig_tol: 1e-9,
        gap_floor: 1e-3,
        phase_integrand: PhaseIntegrand::StepEigenphase,
    }
}

fn sweep_config() -> SweepConfig {
    SweepConfig {
        t_star: Some(1.0),
        short_window: (0.05, 0.5),
        short_alpha: Some(16.0),
        ..SweepConfig::new(SWEEP_ALPHAS.to_vec(), sweep_trajectory())
    }
}

/// Sweep from `1.2·φ_Pekar` at 32 points per axis.
fn sweep32() -> &'static ScalingReport {
    static REP: OnceLock<ScalingReport> = OnceLock::new();
    REP.get_or_init(|| {
        let phi0 = pekar32().phi.scaled(c(1.2));
        run_sweep(&phi0, &sweep_config()).unwrap()
    })
}

fn slope_text(f: &FitOutcome) -> String {
    match f {
        FitOutcome::Fitted(l) => format!("slope {:.3} (residual {:.2e}, {} points)", l.slope, l.residual, l.points),
        FitOutcome::InsufficientData { points } => format!("insufficient data ({points} points)"),
        FitOutcome::Degenerate => "degenerate (all errors at the floor)".into(),
    }
}

#[test]
fn criterion_01_conservation() {
    let g = make_grid(32, 16.0, 3).unwrap();
    let psi = ElectronField::normalized(gaussian_psi(&g, 1.5, 0.5)).unwrap();
    let phi = PhononField::new(gaussian_phonons(&g, 0.1, 1.0, 0.0), 8.0).unwrap();
    let run = |dt: f64| {
        let mut s = LPState::new(psi.clone(), phi.clone()).unwrap();
        let samples = evolve_with_samples(&mut s, dt, 5.0, (0.05 / dt).round() as usize).unwrap();
        conservation_report(&samples).unwrap()
    };
    let coarse = run(1e-3);
    let fine = run(5e-4);
    let ratio = coarse.energy_drift / fine.energy_drift;
    let pass = coarse.norm_drift <= 1e-9
        && fine.norm_drift <= 1e-9
        && coarse.energy_drift <= 1e-6
        && (3.0..=5.0).contains(&ratio);
    let detail = format!(
        "norm drift {:.2e}, energy drift {:.2e} (dt 1e-3) and {:.2e} (dt 5e-4), ratio {ratio:.3}",
        coarse.norm_drift.max(fine.norm_drift),
        coarse.energy_drift,
        fine.energy_drift
    );
    assert!(verdict(1, "conservation", pass, &detail));
}

#[test]
fn criterion_02_pekar_stationarity() {
    let sol = pekar32();
    let g = pekar_grid(32);
    let alpha = 8.0;
    let dt = 1e-4;
    let mut s = LPState::new(sol.psi.clone(), sol.phonon(alpha).unwrap()).unwrap();
    let prop = Propagator::new(&g, dt, alpha).unwrap();
    let (mut max_psi, mut max_phi) = (0.0f64, 0.0f64);
    for n in 1..=50_000usize {
        prop.step(&mut s).unwrap();
        if n % 500 == 0 {
            let ov = sol.psi.psi().inner(s.psi.psi());
            let aligned = sol.psi.psi().scaled(ov / ov.norm());
            max_psi = max_psi.max(s.psi.psi().sub(&aligned).l2());
            max_phi = max_phi.max(s.phi.amp().sub(&sol.phi).l2());
        }
    }
    let pass = max_psi <= 1e-5 && max_phi <= 1e-5;
    let detail = format!(
        "max over t ≤ 5: ‖ψ_t − ψ_0‖ {max_psi:.2e} (modulo phase), ‖φ_t − φ_0‖ {max_phi:.2e}; E {:.6}, e {:.6}, gap {:.4}",
        sol.energy, sol.e, sol.gap
    );
    assert!(verdict(2, "Pekar stationarity", pass, &detail));
}

#[test]
fn criterion_03_alpha_scaling() {
    let rep = sweep32();
    info(
        3,
        &format!(
            "N = 32 err²(1) = {:?}",
            rep.err2_at_t_star.iter().map(|e| format!("{e:.3e}")).collect::<Vec<_>>()
        ),
    );
    let coarse = rep.slope_alpha.slope();

    let g48 = pekar_grid(48);
    let phi48 = initial_phonons(&g48, &InitialPhonons::PekarPerturbed { eps: 0.2 }, PEKAR_TOL).unwrap();
    let rep48 = run_sweep(&phi48, &sweep_config()).unwrap();
    info(
        3,
        &format!(
            "N = 48 err²(1) = {:?}",
            rep48.err2_at_t_star.iter().map(|e| format!("{e:.3e}")).collect::<Vec<_>>()
        ),
    );
    let fine = rep48.slope_alpha.slope();

    // Rotated start, where the potential moves at first order.
    let rotated = pekar32().phi.scaled(C::from_polar(1.2, 0.3));
    let rot = run_sweep(&rotated, &sweep_config()).unwrap();
    info(
        3,
        &format!(
            "supplementary e^(0.3i)·1.2·φ_Pekar start, N = 32: {}",
            slope_text(&rot.slope_alpha)
        ),
    );

    let pass = match (coarse, fine) {
        (Some(a), Some(b)) => (-4.6..=-3.4).contains(&a) && (a - b).abs() <= 0.3,
        _ => false,
    };
    let detail = format!(
        "N = 32 {}; N = 48 {}",
        slope_text(&rep.slope_alpha),
        slope_text(&rep48.slope_alpha)
    );
    assert!(verdict(3, "adiabatic alpha scaling", pass, &detail));
}

#[test]
fn criterion_04_short_time_bound() {
    let rep = sweep32();
    let slope = rep.slope_t_short.slope();
    let pass = rep.short_ratio_max.is_finite() && slope.is_some_and(|s| (0.5..=1.5).contains(&s));
    let detail = format!(
        "alpha {}: max err²(t)/t on [0.05, 0.5] = {:.3e}; {}",
        rep.short_alpha,
        rep.short_ratio_max,
        slope_text(&rep.slope_t_short)
    );
    assert!(verdict(4, "short-time bound", pass, &detail));
}

#[test]
fn criterion_05_gap_persistence() {
    let rep = sweep32();
    let fit = rep.gap_drift;
    let drift_at = |alpha: f64| {
        rep.trajectories
            .iter()
            .find(|t| t.alpha == alpha)
            .and_then(|t| gap_drift_at(t, 1.0))
    };
    let mut ratios = Vec::new();
    for (a, b) in [(4.0, 8.0), (6.0, 12.0), (8.0, 16.0)] {
        let r = match (drift_at(a), drift_at(b)) {
            (Some(x), Some(y)) if y > 0.0 => x / y,
            _ => f64::NAN,
        };
        ratios.push(r);
    }
    let envelope_ok = fit.is_some_and(|f| f.c > 0.0 && f.envelope > 0.0 && f.envelope.is_finite());
    let ratios_ok = ratios.iter().all(|r| (2.0..=8.0).contains(r));
    let detail = match fit {
        Some(f) => format!(
            "C {:.3e} (envelope {:.3e}, residual {:.2e}); drift(α)/drift(2α) at t = 1: {:?}",
            f.c,
            f.envelope,
            f.residual,
            ratios.iter().map(|r| format!("{r:.2}")).collect::<Vec<_>>()
        ),
        None => "no drift data".into(),
    };
    assert!(verdict(5, "gap persistence", envelope_ok && ratios_ok, &detail));
}

/// Phonons at three consecutive steps of a 1D trajectory, for the
/// finite-difference checks.
struct Triple {
    dt: f64,
    phis: [PhononField; 3],
}

fn trajectory_triple(dt: f64) -> Triple {
    const ALPHA: f64 = 1.0;
    const T_MID: f64 = 0.0512;
    let g = make_grid(128, 20.0, 1).unwrap();
    let phi0 = gaussian_phonons(&g, 1.0, 1.0, 0.4);
    let rec = ground_state(&potential(&phi0).unwrap(), 1e-12).unwrap();
    let mut s = LPState::new(rec.psi_ground, PhononField::new(phi0, ALPHA).unwrap()).unwrap();
    let prop = Propagator::new(&g, dt, ALPHA).unwrap();
    let mid = (T_MID / dt).round() as usize;
    for _ in 0..mid - 1 {
        prop.step(&mut s).unwrap();
    }
    let a = s.phi.clone();
    prop.step(&mut s).unwrap();
    let b = s.phi.clone();
    prop.step(&mut s).unwrap();
    Triple {
        dt,
        phis: [a, b, s.phi],
    }
}

const FD_STEPS: [f64; 5] = [1.6e-3, 8e-4, 4e-4, 2e-4, 1e-4];

fn fd_errors() -> &'static Vec<(f64, f64, f64)> {
    static ERR: OnceLock<Vec<(f64, f64, f64)>> = OnceLock::new();
    ERR.get_or_init(|| {
        FD_STEPS
            .iter()
            .map(|&dt| {
                let t = trajectory_triple(dt);
                let recs: Vec<GroundStateRecord> = t
                    .phis
                    .iter()
                    .map(|p| ground_state(&potential(p.amp()).unwrap(), 1e-12).unwrap())
                    .collect();
                let centre = recs[1].psi_ground.psi();
                let aligned = |r: &GroundStateRecord| {
                    let ov = centre.inner(r.psi_ground.psi());
                    r.psi_ground.psi().scaled(ov.conj() / ov.norm())
                };
                let fd = aligned(&recs[2]).sub(&aligned(&recs[0])).scaled(c(0.5 / t.dt));
                let ctx = ResolventContext::for_phonons(&t.phis[1], 1e-12, 1e-12).unwrap();
                let v = ground_state_velocity(&ctx, &t.phis[1]).unwrap();
                let psi_err = fd.sub(v.psi()).l2() / v.l2();
                let e_fd = 0.5 * (recs[2].e - recs[0].e) / t.dt;
                let e_dot = eigenvalue_velocity(&ctx, &t.phis[1]).unwrap();
                (dt, psi_err, (e_fd - e_dot).abs() / e_dot.abs())
            })
            .collect()
    })
}

#[test]
fn criterion_06_ground_state_velocity() {
    let errs = fd_errors();
    let (xs, ys): (Vec<f64>, Vec<f64>) = errs.iter().map(|e| (e.0, e.1)).unzip();
    let fit = loglog_fit(&xs, &ys).unwrap();
    let last = ys[ys.len() - 1];
    let pass = (1.8..=2.2).contains(&fit.slope) && last <= 1e-4;
    let detail = format!(
        "dt-convergence slope {:.3}, relative error {last:.2e} at dt = 1e-4; errors {:?}",
        fit.slope,
        ys.iter().map(|e| format!("{e:.2e}")).collect::<Vec<_>>()
    );
    assert!(verdict(6, "ground-state velocity", pass, &detail));
}

#[test]
fn criterion_07_hellmann_feynman() {
    let errs = fd_errors();
    let (xs, ys): (Vec<f64>, Vec<f64>) = errs.iter().map(|e| (e.0, e.2)).unzip();
    let fit = loglog_fit(&xs, &ys).unwrap();
    let pass = (1.8..=2.2).contains(&fit.slope);
    let detail = format!(
        "dt-convergence slope {:.3}; errors {:?}",
        fit.slope,
        ys.iter().map(|e| format!("{e:.2e}")).collect::<Vec<_>>()
    );
    assert!(verdict(7, "Hellmann-Feynman", pass, &detail));
}

/// Dense `-Δ + V` on a 1D grid from the plane-wave sum.
fn dense_hamiltonian(grid: &SpectralGrid, v: &[f64]) -> DMatrix<f64> {
    let n = grid.len();
    let ks = grid.momentum_axis();
    let mut m = DMatrix::<f64>::zeros(n, n);
    for j in 0..n {
        for l in 0..n {
            let d = grid.position(j)[0] - grid.position(l)[0];
            let s: f64 = ks.iter().map(|k| k * k * (k * d).cos()).sum();
            m[(j, l)] = s / n as f64;
        }
        m[(j, j)] += v[j];
    }
    m
}

/// Minimum-image `-1/|x|` with the cell average at the origin.
fn sampled_coulomb(grid: &SpectralGrid) -> Field {
    // Mean of 1/|x| over the unit cube centred at the origin.
    const CUBE_MEAN_INV_R: f64 = 2.380_077_2;
    let dx = grid.dx();
    grid.sample_position(|x| {
        let r = (x[0] * x[0] + x[1] * x[1] + x[2] * x[2]).sqrt();
        c(if r == 0.0 { -CUBE_MEAN_INV_R / dx } else { -1.0 / r })
    })
}

#[test]
fn criterion_08_eigensolver_oracles() {
    let g = make_grid(128, 20.0, 1).unwrap();
    let v = potential(&gaussian_phonons(&g, 1.0, 1.0, 0.0)).unwrap();
    let rec = ground_state(&v, 1e-10).unwrap();
    let eig = nalgebra::SymmetricEigen::new(dense_hamiltonian(&g, &v.real_part()));
    let mut vals: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    vals.sort_by(f64::total_cmp);
    let de = (rec.e - vals[0]).abs();
    let dgap = (rec.gap - (vals[1] - vals[0])).abs();
    let dense_ok = de <= 1e-8 && dgap <= 1e-8;

    // Hydrogen: e = -1/4, gap = 3/16 in these units.
    let mut levels = Vec::new();
    for (n, l) in [(32usize, 32.0), (64, 32.0), (96, 48.0)] {
        let g = make_grid(n, l, 3).unwrap();
        let r = ground_state(&sampled_coulomb(&g), 1e-6).unwrap();
        info(8, &format!("hydrogen N = {n}, L = {l}: e {:.5}, gap {:.5}", r.e, r.gap));
        levels.push((r.e, r.gap));
    }
    let (e, gap) = levels[levels.len() - 1];
    let hydrogen_ok = (e + 0.25).abs() <= 5e-3 && (gap - 0.1875).abs() <= 1e-2;
    let detail = format!(
        "1D dense |Δe| {de:.2e}, |Δgap| {dgap:.2e}; hydrogen at N = 96, L = 48: e {e:.5}, gap {gap:.5}"
    );
    assert!(verdict(8, "eigensolver oracles", dense_ok && hydrogen_ok, &detail));
}

fn unit(dim: usize, i: usize) -> FockState {
    let mut v = vec![c(0.0); dim];
    v[i] = c(1.0);
    FockState::from_amplitudes(v)
}

fn smooth_field(b: &FockBasis, scale: f64) -> Vec<C> {
    (0..b.modes())
        .map(|q| {
            let k = b.momentum(q);
            C::new(scale * (-0.1 * k * k).exp(), 0.3 * scale * k.signum())
        })
        .collect()
}

/// Largest `‖P(W* a W - a - α⁻²f)e‖` over basis states `e` below `max_shell`,
/// with `P` the projection below the top shell.
fn weyl_shift_defect(b: &FockBasis, f: &[C], max_shell: usize) -> f64 {
    let w = weyl(b, f).unwrap();
    let l = build_ccr(b).unwrap();
    let wd = w.operator.adjoint();
    let a2 = b.alpha() * b.alpha();
    let mut worst = 0.0f64;
    for i in (0..b.dim()).filter(|&i| b.shell(i % b.n_tuples()) <= max_shell) {
        let e = unit(b.dim(), i);
        for k in 0..b.modes() {
            let lhs = wd.apply(&l.annihilators[k].apply(&w.operator.apply(&e)));
            let d = lhs
                .sub(&l.annihilators[k].apply(&e))
                .sub(&e.scaled(f[k] / a2))
                .project_below_top(b);
            worst = worst.max(d.norm());
        }
    }
    worst
}

#[test]
fn criterion_09_fock_algebra() {
    let b = FockBasis::new(6, 0.1, 4, 2.0).unwrap();
    let l = build_ccr(&b).unwrap();
    let a2 = b.alpha() * b.alpha();
    let mut ccr = 0.0f64;
    for i in (0..b.dim()).filter(|&i| b.below_top(i)) {
        let e = unit(b.dim(), i);
        for k in 0..b.modes() {
            for kp in 0..b.modes() {
                let comm = l.annihilators[k]
                    .apply(&l.creators[kp].apply(&e))
                    .sub(&l.creators[kp].apply(&l.annihilators[k].apply(&e)));
                let expect = if k == kp { e.scaled(c(1.0 / (a2 * b.dk()))) } else { e.scaled(c(0.0)) };
                ccr = ccr.max(comm.sub(&expect).norm());
            }
        }
    }

    // Every state below the top shell, with a displacement small enough for
    // the truncated exponential; and low shells of a deeper truncation with
    // a larger displacement.
    let shift_all = weyl_shift_defect(&b, &smooth_field(&b, 1e-5), b.n_max() - 1);
    let deep = FockBasis::new(4, 0.5, 6, 2.0).unwrap();
    let shift_low = weyl_shift_defect(&deep, &smooth_field(&deep, 0.01), 2);

    let f = smooth_field(&b, 0.05);
    let norm2: f64 = f.iter().map(|v| v.norm_sqr()).sum::<f64>() * b.dk();
    let expect = (-norm2 / (2.0 * a2)).exp();
    let got = weyl(&b, &f).unwrap().boson[(0, 0)];
    let overlap = (got - c(expect)).norm();

    let pass = ccr <= 1e-8 && shift_all <= 1e-8 && shift_low <= 1e-8 && overlap <= 1e-6;
    let detail = format!(
        "CCR defect {ccr:.2e}; Weyl shift defect {shift_all:.2e} (all shells below top) and {shift_low:.2e} (n_max 6, shells ≤ 2); vacuum overlap error {overlap:.2e}"
    );
    assert!(verdict(9, "Fock-sector algebra", pass, &detail));
}

#[test]
fn criterion_10_toy_scaling() {
    let b = FockBasis::new(6, 0.1, 4, 2.0).unwrap();
    let rep = comparison_scaling(&b, 0.05, &[2.0, 3.0, 4.0], 0.5, 5, &ToyOptions::default()).unwrap();
    for s in &rep.samples {
        info(
            10,
            &format!("alpha {}: error {:.4e}, leakage {:.2e}", s.alpha, s.error, s.leakage),
        );
    }
    let leak = rep.samples.iter().map(|s| s.leakage).fold(0.0, f64::max);
    let slope = rep.fit.map(|f| f.slope);
    let pass = slope.is_some_and(|s| (-1.6..=-0.4).contains(&s)) && leak < 1e-8 && rep.caveat.contains("1D");
    let detail = format!(
        "log-error vs log-alpha slope {}, max leakage {leak:.2e}; caveat: {}",
        slope.map_or("none".into(), |s| format!("{s:.3}")),
        rep.caveat
    );
    assert!(verdict(10, "toy-model scaling", pass, &detail));
}

#[test]
fn criterion_11_bound_checks() {
    let q = coupling_integral_quadrature(400);
    let exact = 2.0 * std::f64::consts::PI * std::f64::consts::PI;
    let quad_ok = (q.value - exact).abs() / exact <= 0.01;
    let b = FockBasis::new(6, 0.1, 4, 2.0).unwrap();
    let app = bound_checks(&b, &BoundOptions::default()).unwrap();
    let stable = app.creation_change() < 0.1 && app.sandwich_change() < 0.1;
    let pass = quad_ok && app.all_finite() && stable;
    let detail = format!(
        "radial quadrature {:.8} vs 2π² = {exact:.8} (rel {:.2e}); annihilator spread {:.2e}; creation supremum {:.4} → {:.4}; sandwich lowest {:.4} → {:.4}",
        q.value,
        q.relative_error,
        app.annihilator_spread,
        app.creation[0].supremum,
        app.creation[1].supremum,
        app.sandwich[0].lowest,
        app.sandwich[1].lowest
    );
    assert!(verdict(11, "bound checks", pass, &detail));
}

#[test]
fn criterion_12_inequality_ratios() {
    let coarse = inequality_report(100, &make_grid(16, 6.0, 3).unwrap(), 11).unwrap();
    let fine = inequality_report(100, &make_grid(32, 6.0, 3).unwrap(), 11).unwrap();
    let change = |a: f64, b: f64| (b - a).abs() / a;
    let changes = [
        change(coarse.max_v6, fine.max_v6),
        change(coarse.max_vpsi, fine.max_vpsi),
        change(coarse.max_sigma, fine.max_sigma),
    ];
    let pass = coarse.all_finite() && fine.all_finite() && changes.iter().all(|c| *c < 0.1);
    let detail = format!(
        "maxima N = 16 → 32: ‖V‖₆/‖φ‖ {:.4} → {:.4}, ‖Vψ‖/(‖φ‖‖ψ‖_H¹) {:.4} → {:.4}, ‖σ‖/‖ψ‖²_H¹ {:.4} → {:.4}; relative changes {:?}",
        coarse.max_v6,
        fine.max_v6,
        coarse.max_vpsi,
        fine.max_vpsi,
        coarse.max_sigma,
        fine.max_sigma,
        changes.iter().map(|c| format!("{c:.2e}")).collect::<Vec<_>>()
    );
    assert!(verdict(12, "inequality ratios", pass, &detail));
}
