//! Acceptance suite: twelve end-to-end criteria, one test each, covering
//! safety invariance, capacity respect, monotone recovery, steady-state
//! optimality, energy dissipation, corrector/projection properties,
//! equilibrium fidelity, controller comparison, robustness, and
//! small-angle model consistency.
//!
//! Each test prints one `criterion NN PASS` line with the measured numbers.
//! Scenario runs are shared through lazily-initialized caches so each
//! simulation executes exactly once per suite run.

use std::sync::LazyLock;

use nalgebra::DVector;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use gridfreq::control::{self, ControllerState, CorrectorBounds};
use gridfreq::graph;
use gridfreq::model::{
    ControllerMode, InitialState, LoadProfile, PiecewiseSignal, PlantMode, ScenarioConfig,
};
use gridfreq::oracle;
use gridfreq::projection;
use gridfreq::scenarios;
use gridfreq::sim::{SimOutput, Simulator};

const NOMINAL_HZ: f64 = 50.0;

/// A simulator paired with its finished run, kept alive for the whole
/// suite so every criterion reads the same trajectory.
struct Cached {
    sim: Simulator,
    out: SimOutput,
}

fn run_cached(config: ScenarioConfig) -> Cached {
    let sim = Simulator::new(config).expect("scenario must validate");
    let out = sim.run().expect("scenario must run to completion");
    Cached { sim, out }
}

/// Shipped step scenario exactly as configured (nonlinear plant, corrector on).
static S1_CBF_NL: LazyLock<Cached> = LazyLock::new(|| run_cached(scenarios::s1_step()));

/// Step scenario with the linear plant, corrector on.
static S1_CBF_LIN: LazyLock<Cached> = LazyLock::new(|| {
    let mut cfg = scenarios::s1_step();
    cfg.sim.plant_mode = PlantMode::Linear;
    run_cached(cfg)
});

/// Step scenario with the corrector disabled (reference applied directly).
/// Only its metrics are consumed, so records are decimated away; metric
/// accumulation is per-step regardless of decimation.
static S1_PLAIN_NL: LazyLock<Cached> = LazyLock::new(|| {
    let mut cfg = scenarios::s1_step();
    cfg.sim.controller_mode = ControllerMode::FoPlain;
    cfg.sim.decimate = 1_000_000;
    run_cached(cfg)
});

/// Shipped out-of-band recovery scenario.
static S2: LazyLock<Cached> = LazyLock::new(|| run_cached(scenarios::s2_restore()));

/// Shipped time-varying robustness scenario.
static S3: LazyLock<Cached> = LazyLock::new(|| run_cached(scenarios::s3_timevarying()));

fn hz(freq_pu: f64) -> f64 {
    NOMINAL_HZ + NOMINAL_HZ * freq_pu
}

/// Largest |frequency - nominal| reached anywhere in a run, in Hz.
fn peak_deviation_hz(out: &SimOutput) -> f64 {
    out.metrics
        .nadir_hz
        .iter()
        .chain(out.metrics.zenith_hz.iter())
        .map(|&f| (f - NOMINAL_HZ).abs())
        .fold(0.0, f64::max)
}

/// Asserts hard capacity respect on every stored record of a run.
fn assert_capacity_exact(c: &Cached, label: &str) {
    let areas = &c.sim.config.areas;
    for rec in &c.out.trajectory.records {
        for i in 0..areas.len() {
            let p = rec.applied[i];
            assert!(
                p >= areas[i].cap_lo && p <= areas[i].cap_hi,
                "{label}: applied power {p} outside [{}, {}] for area {i} at t={}",
                areas[i].cap_lo,
                areas[i].cap_hi,
                rec.t
            );
        }
    }
    assert!(
        c.out.metrics.min_capacity_margin >= 0.0,
        "{label}: per-step capacity margin dipped to {}",
        c.out.metrics.min_capacity_margin
    );
}

#[test]
fn criterion_01_frequencies_stay_inside_the_safety_band() {
    let slack_hz = 1e-4;
    let lo_hz = 49.9 - slack_hz;
    let hi_hz = 50.1 + slack_hz;
    for (c, label) in [(&*S1_CBF_NL, "nonlinear"), (&*S1_CBF_LIN, "linear")] {
        let n = c.out.n_areas;
        for k in 0..=c.out.steps {
            for i in 0..n {
                let f = hz(c.out.freq_at(k, i));
                assert!(
                    (lo_hz..=hi_hz).contains(&f),
                    "{label}: area {i} left the band at step {k}: {f} Hz"
                );
            }
        }
        assert_eq!(
            c.out.metrics.violation_integral_hz_s, 0.0,
            "{label}: violation integral must be exactly zero"
        );
    }
    println!(
        "criterion 01 PASS: all frequencies within [{lo_hz}, {hi_hz}] Hz on both plants; \
         violation integral 0 (nonlinear nadir {:?}, linear nadir {:?})",
        S1_CBF_NL.out.metrics.nadir_hz, S1_CBF_LIN.out.metrics.nadir_hz
    );
}

#[test]
fn criterion_02_applied_power_never_leaves_capacity() {
    assert_capacity_exact(&S1_CBF_NL, "s1_step");
    assert_capacity_exact(&S2, "s2_restore");
    assert_capacity_exact(&S3, "s3_timevarying");
    println!(
        "criterion 02 PASS: zero capacity violations across all shipped scenarios \
         (min margins: s1 {:.6}, s2 {:.6}, s3 {:.6})",
        S1_CBF_NL.out.metrics.min_capacity_margin,
        S2.out.metrics.min_capacity_margin,
        S3.out.metrics.min_capacity_margin
    );
}

#[test]
fn criterion_03_out_of_band_recovery_is_monotone_and_prompt() {
    let c = &*S2;
    let areas = &c.sim.config.areas;
    let mut out_of_band_records = 0_u64;
    for rec in &c.out.trajectory.records {
        for i in 0..areas.len() {
            let w = rec.plant.freq[i];
            // The scenario starts below the band; it must never exit above.
            assert!(
                w <= areas[i].freq_hi,
                "area {i} overshot above the band at t={}: {} p.u.",
                rec.t,
                w
            );
            if w < areas[i].freq_lo {
                out_of_band_records += 1;
                assert!(
                    rec.monitors.freq_dot[i] >= 0.0,
                    "area {i} moved away from the band at t={}: dw/dt={}",
                    rec.t,
                    rec.monitors.freq_dot[i]
                );
            }
        }
    }
    assert!(out_of_band_records > 0, "scenario must start out of band");
    assert_eq!(c.out.metrics.monotone_violation_count, 0);
    let entry = c
        .out
        .metrics
        .safe_entry_time_s
        .expect("every area must enter the band");
    assert!(entry <= 30.0, "band entry took {entry} s");
    for (i, e) in c.out.metrics.entry_time_s.iter().enumerate() {
        assert!(e.is_some(), "area {i} never entered the band");
    }
    println!(
        "criterion 03 PASS: {out_of_band_records} out-of-band samples all moved toward \
         the band; slowest entry {entry:.3} s <= 30 s"
    );
}

#[test]
fn criterion_04_step_scenario_settles_at_the_optimal_dispatch() {
    let c = &*S1_CBF_NL;
    let final_load = c.sim.config.load.load_at(c.sim.config.sim.t_end).plant;
    let steady = oracle::solve_steady_qp(&final_load, &c.sim.config.areas)
        .expect("final load must be dispatchable");
    let last = c.out.trajectory.records.last().expect("non-empty run");

    let w_norm = last.plant.freq.norm();
    let flow_max = last.flows.amax();
    let ref_err = (&last.ctrl.reference - &steady.dispatch).norm();
    let mult_err = (&last.ctrl.multiplier - &steady.multiplier).norm();
    let cost_rel = (last.cost - steady.cost).abs() / steady.cost.abs();

    assert!(w_norm <= 1e-4, "terminal frequency norm {w_norm}");
    assert!(flow_max <= 1e-4, "terminal tie-line flow {flow_max}");
    assert!(ref_err <= 1e-4, "terminal reference error {ref_err}");
    assert!(mult_err <= 1e-3, "terminal multiplier error {mult_err}");
    assert!(cost_rel <= 1e-3, "terminal cost off by {cost_rel:e} relative");
    println!(
        "criterion 04 PASS: |w|={w_norm:.2e}, max flow={flow_max:.2e}, \
         |Pr-P*|={ref_err:.2e}, |xi-xi*|={mult_err:.2e}, cost within {cost_rel:.2e} relative"
    );
}

#[test]
fn criterion_05_energy_decays_on_constant_load_segments() {
    let c = &*S1_CBF_LIN;
    let dt = c.out.dt;
    let summary = &c.out.metrics.lyapunov;
    assert!(
        summary.active,
        "energy monitor must be active on the linear constant-load run"
    );
    let rate_cap = 1e-6 + 10.0 * dt;
    assert!(
        summary.max_rate <= rate_cap,
        "worst per-step energy rate {} exceeds {rate_cap}",
        summary.max_rate
    );
    assert!(
        summary.last_segment_start_value > 0.0,
        "post-step energy must be positive"
    );
    assert!(
        summary.final_value <= 1e-6 * summary.last_segment_start_value,
        "final energy {} vs segment start {}",
        summary.final_value,
        summary.last_segment_start_value
    );
    println!(
        "criterion 05 PASS: max dV/dt {:.3e} <= {rate_cap:.3e}; V(T)={:.3e} <= 1e-6 * V(step+)={:.3e}",
        summary.max_rate,
        summary.final_value,
        1e-6 * summary.last_segment_start_value
    );
}

#[test]
fn criterion_06_corrector_matches_brute_force_qp() {
    const RESOLUTION: f64 = 1e-6;
    const TOTAL: usize = 10_000;
    let areas = scenarios::default_areas();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut checked = 0_usize;
    let mut max_gap = 0.0_f64;
    while checked < TOTAL {
        // Alternate physically generated intervals with synthetic ones so
        // both narrow barrier windows and wide boxes are exercised.
        let (bounds, reference, params) = if checked % 2 == 0 {
            let params = &areas[checked % areas.len()];
            let freq = rng.random_range(-0.006..0.006);
            let load = rng.random_range(-0.9..0.9);
            let phi = rng.random_range(-0.3..0.3);
            let b = control::corrector_bounds(freq, load, phi, params);
            if !b.feasible {
                continue;
            }
            let reference = rng.random_range(params.cap_lo..params.cap_hi);
            (b, reference, params)
        } else {
            let params = &areas[checked % areas.len()];
            let lo = rng.random_range(-1.0..1.0);
            let hi = lo + rng.random_range(0.0..0.3);
            let b = CorrectorBounds {
                raw_lo: lo,
                raw_hi: hi,
                lo,
                hi,
                feasible: true,
            };
            let reference = rng.random_range(-1.5..1.5);
            (b, reference, params)
        };
        let (closed, infeasible) = control::corrector_apply(reference, &bounds, params);
        assert!(!infeasible);
        let brute = oracle::corrector_qp_bruteforce(reference, bounds.lo, bounds.hi, RESOLUTION);
        let gap = (closed - brute).abs();
        assert!(
            gap <= RESOLUTION,
            "closed form {closed} vs brute force {brute} (interval [{}, {}], ref {reference})",
            bounds.lo,
            bounds.hi
        );
        // Nearest-point property: exact clamp of the reference.
        let expected = if reference < bounds.lo {
            bounds.lo
        } else if reference > bounds.hi {
            bounds.hi
        } else {
            reference
        };
        assert_eq!(closed, expected, "corrector is not the nearest point");
        max_gap = max_gap.max(gap);
        checked += 1;
    }
    println!(
        "criterion 06 PASS: {TOTAL} instances, worst closed-vs-brute gap {max_gap:.2e} <= {RESOLUTION:.0e}"
    );
}

#[test]
fn criterion_07_projection_residuals_vanish_at_equilibrium() {
    const TOTAL: usize = 10_000;
    let areas = scenarios::default_areas();
    let topo = scenarios::default_topology();
    let mats = graph::build(&topo).unwrap();
    let (lo, hi) = control::capacity_box(&areas);
    let n = areas.len();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst_r1 = f64::NEG_INFINITY;
    let mut worst_r2 = f64::NEG_INFINITY;

    // Battery 1: the stationary point comes from the dispatch oracle for a
    // random admissible load; the reference field is evaluated at the
    // matching equilibrium conditions (zero frequency deviation, optimal
    // multipliers).
    for _ in 0..TOTAL {
        let load = DVector::from_iterator(
            n,
            (0..n).map(|i| rng.random_range(areas[i].cap_lo + 0.05..areas[i].cap_hi - 0.05)),
        );
        let eq = oracle::equilibrium(&load, &areas, &mats).unwrap();
        let x = DVector::from_iterator(n, (0..n).map(|i| rng.random_range(lo[i]..hi[i])));
        let zero_freq = DVector::zeros(n);
        let ctrl_x = ControllerState {
            reference: x.clone(),
            multiplier: eq.ctrl.multiplier.clone(),
        };
        let field_x = control::fo_rhs(&ctrl_x, &zero_freq, &load, &areas).reference_dot_raw;
        let field_xe =
            control::fo_rhs(&eq.ctrl, &zero_freq, &load, &areas).reference_dot_raw;
        let (r1, r2) = projection::check_normal_cone_inequalities(
            &field_x,
            &field_xe,
            &x,
            &eq.ctrl.reference,
            &lo,
            &hi,
        )
        .unwrap();
        assert!(r1 <= 1e-12, "projection residual r1={r1}");
        assert!(r2 <= 1e-12, "equilibrium residual r2={r2}");
        worst_r1 = worst_r1.max(r1);
        worst_r2 = worst_r2.max(r2);
    }

    // Battery 2 (hardening): off-equilibrium fields whose stationary point
    // sits on the capacity boundary, so the second residual is checked in
    // its strictly-negative regime too.
    for _ in 0..2_000 {
        let freq = DVector::from_iterator(n, (0..n).map(|_| rng.random_range(-0.01..0.01)));
        let mult = DVector::from_iterator(n, (0..n).map(|_| rng.random_range(-16.0..-4.0)));
        let x = DVector::from_iterator(n, (0..n).map(|i| rng.random_range(lo[i]..hi[i])));
        let x_e = DVector::from_iterator(
            n,
            (0..n).map(|i| {
                let unconstrained =
                    -(areas[i].cost_lin + mult[i] + freq[i]) / areas[i].cost_quad;
                unconstrained.clamp(lo[i], hi[i])
            }),
        );
        let load = DVector::zeros(n);
        let ctrl_x = ControllerState {
            reference: x.clone(),
            multiplier: mult.clone(),
        };
        let ctrl_xe = ControllerState {
            reference: x_e.clone(),
            multiplier: mult.clone(),
        };
        let field_x = control::fo_rhs(&ctrl_x, &freq, &load, &areas).reference_dot_raw;
        let field_xe = control::fo_rhs(&ctrl_xe, &freq, &load, &areas).reference_dot_raw;
        let (r1, r2) =
            projection::check_normal_cone_inequalities(&field_x, &field_xe, &x, &x_e, &lo, &hi)
                .unwrap();
        assert!(r1 <= 1e-12, "projection residual r1={r1}");
        assert!(r2 <= 1e-12, "stationary-point residual r2={r2}");
    }
    println!(
        "criterion 07 PASS: {TOTAL} equilibrium samples (plus 2000 boundary-stationary), \
         worst r1={worst_r1:.2e}, worst r2={worst_r2:.2e}"
    );
}

#[test]
fn criterion_08_corrected_power_respects_the_increment_bound() {
    const TOTAL: usize = 10_000;
    let areas = scenarios::default_areas();
    let topo = scenarios::default_topology();
    let mats = graph::build(&topo).unwrap();
    let coupling = graph::coupling_matrix(&mats, &topo.tie_lines);
    let consts = control::lipschitz_constants(&areas, &coupling);
    let load = DVector::from_vec(vec![0.3, 0.2, 0.25]);
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut worst_ratio = 0.0_f64;
    for _ in 0..TOTAL {
        let sample = |rng: &mut ChaCha8Rng| {
            let alpha = DVector::from_iterator(2, (0..2).map(|_| rng.random_range(-0.05..0.05)));
            let freq =
                DVector::from_iterator(3, (0..3).map(|_| rng.random_range(-0.004..0.004)));
            let reference = DVector::from_iterator(
                3,
                (0..3).map(|i| rng.random_range(areas[i].cap_lo..areas[i].cap_hi)),
            );
            (alpha, freq, reference)
        };
        let (alpha_a, freq_a, ref_a) = sample(&mut rng);
        let (alpha_b, freq_b, ref_b) = sample(&mut rng);
        let phi_a = graph::net_tieline_power_linear(&mats, &topo.tie_lines, &alpha_a).unwrap();
        let phi_b = graph::net_tieline_power_linear(&mats, &topo.tie_lines, &alpha_b).unwrap();
        let d_alpha = (&alpha_a - &alpha_b).norm();
        for i in 0..3 {
            let ba = control::corrector_bounds(freq_a[i], load[i], phi_a[i], &areas[i]);
            let bb = control::corrector_bounds(freq_b[i], load[i], phi_b[i], &areas[i]);
            let (pa, _) = control::corrector_apply(ref_a[i], &ba, &areas[i]);
            let (pb, _) = control::corrector_apply(ref_b[i], &bb, &areas[i]);
            let increment =
                (ref_a[i] - ref_b[i]).abs() + (freq_a[i] - freq_b[i]).abs() + d_alpha;
            let allowance = consts[i] * increment + 1e-12;
            assert!(
                (pa - pb).abs() <= allowance,
                "area {i}: |{pa} - {pb}| > {allowance}"
            );
            if increment > 0.0 {
                worst_ratio = worst_ratio.max((pa - pb).abs() / (consts[i] * increment));
            }
        }
    }
    println!(
        "criterion 08 PASS: {TOTAL} state pairs, increment bound never violated \
         (tightest ratio {worst_ratio:.3} of allowance)"
    );
}

#[test]
fn criterion_09_equilibrium_start_stays_put() {
    let areas = scenarios::default_areas();
    let topo = scenarios::default_topology();
    let mats = graph::build(&topo).unwrap();
    let load = DVector::from_vec(vec![0.3, 0.2, 0.25]);
    let eq = oracle::equilibrium(&load, &areas, &mats).unwrap();

    for mode in [PlantMode::Nonlinear, PlantMode::Linear] {
        let cfg = ScenarioConfig {
            topology: topo.clone(),
            areas: areas.clone(),
            load: LoadProfile {
                signals: load.iter().map(|&v| PiecewiseSignal::constant(v)).collect(),
                prediction_error_factor: 1.0,
            },
            schedule: None,
            sim: gridfreq::model::SimSection {
                plant_mode: mode,
                controller_mode: ControllerMode::FoCbf,
                dt: 1e-3,
                t_end: 10.0,
                initial: InitialState {
                    alpha: eq.plant.alpha.iter().copied().collect(),
                    w: eq.plant.freq.iter().copied().collect(),
                    reference: eq.ctrl.reference.iter().copied().collect(),
                    multiplier: eq.ctrl.multiplier.iter().copied().collect(),
                },
                seed: 9,
                decimate: 1,
                scheme: Default::default(),
                controller_tracks_schedule: false,
            },
        };
        let out = Simulator::new(cfg).unwrap().run().unwrap();
        assert_eq!(out.steps, 10_000);
        let mut worst = 0.0_f64;
        for rec in &out.trajectory.records {
            let drift = rec
                .plant
                .freq
                .amax()
                .max(rec.plant.alpha.amax())
                .max((&rec.ctrl.reference - &eq.ctrl.reference).amax())
                .max((&rec.ctrl.multiplier - &eq.ctrl.multiplier).amax());
            assert!(
                drift <= 1e-12,
                "{mode:?}: drift {drift} at t={} exceeds 1e-12",
                rec.t
            );
            worst = worst.max(drift);
        }
        assert!(worst <= 1e-12);
    }
    println!("criterion 09 PASS: equilibrium start drifts <= 1e-12 over 10^4 steps on both plants");
}

#[test]
fn criterion_10_corrector_beats_the_plain_controller() {
    let cbf = &S1_CBF_NL.out.metrics;
    let plain = &S1_PLAIN_NL.out.metrics;
    let plain_violates = plain.violation_integral_hz_s > 0.0;
    let plain_peaks_higher = peak_deviation_hz(&S1_PLAIN_NL.out) > peak_deviation_hz(&S1_CBF_NL.out);
    assert!(
        plain_violates || plain_peaks_higher,
        "the uncorrected controller shows no disadvantage: integral {}, peaks {} vs {}",
        plain.violation_integral_hz_s,
        peak_deviation_hz(&S1_PLAIN_NL.out),
        peak_deviation_hz(&S1_CBF_NL.out)
    );
    let settle_cbf = cbf.settling_time_s.expect("corrected run must settle");
    let settle_plain = plain.settling_time_s.expect("plain run must settle");
    assert!(
        settle_cbf <= settle_plain,
        "corrected settling {settle_cbf} s slower than plain {settle_plain} s"
    );
    println!(
        "criterion 10 PASS: plain integral {:.3} Hz*s / peak {:.3} Hz vs corrected 0 / {:.3} Hz; \
         settling {:.3} s <= {:.3} s",
        plain.violation_integral_hz_s,
        peak_deviation_hz(&S1_PLAIN_NL.out),
        peak_deviation_hz(&S1_CBF_NL.out),
        settle_cbf,
        settle_plain
    );
}

#[test]
fn criterion_11_time_varying_scenario_stays_safe_and_recovers() {
    let c = &*S3;
    let m = &c.out.metrics;
    assert_eq!(m.violation_count, 0, "safety violations detected");
    assert_eq!(m.violation_integral_hz_s, 0.0);
    for (i, &margin) in m.min_safety_margin_hz.iter().enumerate() {
        assert!(margin >= 0.0, "area {i} safety margin dipped to {margin}");
    }
    assert_capacity_exact(c, "s3_timevarying");
    let last = c.out.trajectory.records.last().unwrap();
    let mut terminal_dev = 0.0_f64;
    for i in 0..c.out.n_areas {
        let dev = (hz(last.plant.freq[i]) - NOMINAL_HZ).abs();
        assert!(dev <= 0.01, "area {i} terminal frequency off by {dev} Hz");
        terminal_dev = terminal_dev.max(dev);
    }
    println!(
        "criterion 11 PASS: 900 s with zero safety and capacity violations; \
         terminal deviation {terminal_dev:.4} Hz <= 0.01 Hz"
    );
}

#[test]
fn criterion_12_linear_and_nonlinear_plants_agree_at_small_angles() {
    let nl = &S1_CBF_NL.out;
    let lin = &S1_CBF_LIN.out;
    assert!(
        nl.metrics.max_edge_angle_rad <= 0.05,
        "nonlinear run left the small-angle regime: {} rad",
        nl.metrics.max_edge_angle_rad
    );
    assert!(
        lin.metrics.max_edge_angle_rad <= 0.05,
        "linear run left the small-angle regime: {} rad",
        lin.metrics.max_edge_angle_rad
    );
    assert_eq!(nl.steps, lin.steps);
    assert_eq!(nl.n_areas, lin.n_areas);
    let mut max_gap_hz = 0.0_f64;
    for k in 0..=nl.steps {
        for i in 0..nl.n_areas {
            let gap = NOMINAL_HZ * (nl.freq_at(k, i) - lin.freq_at(k, i)).abs();
            assert!(
                gap <= 1e-3,
                "traces diverge by {gap} Hz at step {k}, area {i}"
            );
            max_gap_hz = max_gap_hz.max(gap);
        }
    }
    println!(
        "criterion 12 PASS: max edge angles {:.4}/{:.4} rad; pointwise trace gap {max_gap_hz:.2e} Hz <= 1e-3",
        nl.metrics.max_edge_angle_rad, lin.metrics.max_edge_angle_rad
    );
}
