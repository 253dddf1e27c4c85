//! Built-in scenario library for the default three-area benchmark system.
//!
//! All three scenarios share the same triangle topology and area
//! parameters (100 MW base, 50 Hz nominal, safe band 49.9-50.1 Hz):
//!
//! | scenario        | what it exercises                                        |
//! |-----------------|----------------------------------------------------------|
//! | s1_step         | simultaneous load steps at t = 10 s, recovery to optimum |
//! | s2_restore      | start outside the safe band, monotone re-entry           |
//! | s3_timevarying  | 900 s of drifting load with inertia/damping changes and a |
//! |                 | systematic controller-side load prediction error          |

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::model::{
    AreaParams, ControllerMode, InitialState, InterpMode, LoadProfile, ParameterSchedule,
    PiecewiseSignal, PlantMode, ScenarioConfig, ScheduleEntry, ScheduledField, Scheme,
    SimSection, TieLineParams, Topology,
};

/// Names of the built-in scenarios, in a stable order.
pub const SCENARIO_NAMES: [&str; 3] = ["s1_step", "s2_restore", "s3_timevarying"];

/// Look a built-in scenario up by name.
pub fn by_name(name: &str) -> Option<ScenarioConfig> {
    match name {
        "s1_step" => Some(s1_step()),
        "s2_restore" => Some(s2_restore()),
        "s3_timevarying" => Some(s3_timevarying()),
        _ => None,
    }
}

/// Default three-area parameter set.
///
/// Inertias 10/8/6, unit damping, quadratic costs (1.0, 2.0, 1.5) and
/// linear costs (10, 12, 11) $/p.u., barrier rate 2/s everywhere, and a
/// +/-0.1 Hz safe band (0.002 p.u. at 50 Hz). Capacity deviation boxes are
/// +/-1.0, +/-0.8 and +/-0.9 p.u. around baseline dispatches of 8.0, 1.0
/// and 2.0 p.u., so the s1 load steps land strictly inside capacity.
pub fn default_areas() -> Vec<AreaParams> {
    let band = 0.002;
    vec![
        AreaParams {
            inertia: 10.0,
            damping: 1.0,
            cost_quad: 1.0,
            cost_lin: 10.0,
            cap_lo: -1.0,
            cap_hi: 1.0,
            freq_lo: -band,
            freq_hi: band,
            cbf_gain: 2.0,
            baseline_setpoint: 8.0,
        },
        AreaParams {
            inertia: 8.0,
            damping: 1.0,
            cost_quad: 2.0,
            cost_lin: 12.0,
            cap_lo: -0.8,
            cap_hi: 0.8,
            freq_lo: -band,
            freq_hi: band,
            cbf_gain: 2.0,
            baseline_setpoint: 1.0,
        },
        AreaParams {
            inertia: 6.0,
            damping: 1.0,
            cost_quad: 1.5,
            cost_lin: 11.0,
            cap_lo: -0.9,
            cap_hi: 0.9,
            freq_lo: -band,
            freq_hi: band,
            cbf_gain: 2.0,
            baseline_setpoint: 2.0,
        },
    ]
}

/// Fully connected three-area triangle, susceptance 10 p.u. on every line.
pub fn default_topology() -> Topology {
    let line = |i, j| TieLineParams {
        i,
        j,
        b_linear: 10.0,
        b_nonlinear: 10.0,
    };
    Topology {
        n_areas: 3,
        tie_lines: vec![line(0, 1), line(1, 2), line(0, 2)],
    }
}

/// Controller state at the pre-disturbance optimum for zero net load:
/// references zero, multipliers -cost_lin.
fn rest_initial(areas: &[AreaParams]) -> InitialState {
    InitialState {
        alpha: vec![0.0; areas.len() - 1],
        w: vec![0.0; areas.len()],
        reference: vec![0.0; areas.len()],
        multiplier: areas.iter().map(|a| -a.cost_lin).collect(),
    }
}

/// s1_step: the system rests at its pre-disturbance optimum, then at
/// t = 10 s the areas take simultaneous load steps of 0.8, 0.5 and 0.7 p.u.
pub fn s1_step() -> ScenarioConfig {
    let areas = default_areas();
    let steps = [0.8, 0.5, 0.7];
    let signals = steps
        .iter()
        .map(|&v| PiecewiseSignal {
            mode: InterpMode::StepHold,
            points: vec![(0.0, 0.0), (10.0, v)],
        })
        .collect();
    ScenarioConfig {
        topology: default_topology(),
        sim: SimSection {
            plant_mode: PlantMode::Nonlinear,
            controller_mode: ControllerMode::FoCbf,
            dt: 1e-3,
            t_end: 200.0,
            initial: rest_initial(&areas),
            seed: 1,
            decimate: 1,
            scheme: Scheme::default(),
            controller_tracks_schedule: false,
        },
        areas,
        load: LoadProfile {
            signals,
            prediction_error_factor: 1.0,
        },
        schedule: None,
    }
}

/// s2_restore: zero load, but every area starts at 49.8 Hz — outside the
/// safe band — with a cold controller (zero references and multipliers).
/// The corrector must drive the frequency monotonically back into the band.
pub fn s2_restore() -> ScenarioConfig {
    let areas = default_areas();
    let n = areas.len();
    ScenarioConfig {
        topology: default_topology(),
        sim: SimSection {
            plant_mode: PlantMode::Nonlinear,
            controller_mode: ControllerMode::FoCbf,
            dt: 1e-3,
            t_end: 60.0,
            initial: InitialState {
                alpha: vec![0.0; n - 1],
                w: vec![-0.004; n], // 49.8 Hz at a 50 Hz nominal
                reference: vec![0.0; n],
                multiplier: vec![0.0; n],
            },
            seed: 2,
            decimate: 1,
            scheme: Scheme::default(),
            controller_tracks_schedule: false,
        },
        areas,
        load: LoadProfile::zero(n),
        schedule: None,
    }
}

/// s3_timevarying: 900 s of drifting net load (fast rise in area 0, a
/// doubling ramp in area 2 between 300 s and 400 s, everything back to zero
/// near the end), a +5% systematic controller-side load prediction error,
/// inertia steps the controller is not told about (x0.8 at 300 s on area 0,
/// x1.5 at 450 s on area 1, x0.6 at 600 s on area 2) and a seeded +/-5%
/// damping fluctuation resampled every 15 s.
pub fn s3_timevarying() -> ScenarioConfig {
    let areas = default_areas();
    let n = areas.len();
    let seed = 7u64;

    let lin = |points: Vec<(f64, f64)>| PiecewiseSignal {
        mode: InterpMode::LinearInterpolate,
        points,
    };
    let signals = vec![
        // Area 0: near-step rise, long plateau, slow descent to zero.
        lin(vec![
            (0.0, 0.0),
            (40.0, 0.0),
            (42.0, 0.025),
            (650.0, 0.025),
            (760.0, 0.0),
            (900.0, 0.0),
        ]),
        // Area 1: gentle rise and fall.
        lin(vec![
            (0.0, 0.0),
            (100.0, 0.0),
            (200.0, 0.02),
            (500.0, 0.02),
            (700.0, 0.0),
            (900.0, 0.0),
        ]),
        // Area 2: rise, then a doubling within 100 s, then descent.
        lin(vec![
            (0.0, 0.0),
            (220.0, 0.0),
            (280.0, 0.015),
            (300.0, 0.015),
            (400.0, 0.03),
            (600.0, 0.03),
            (790.0, 0.0),
            (900.0, 0.0),
        ]),
    ];

    let mut entries = vec![
        ScheduleEntry {
            time: 300.0,
            area: 0,
            field: ScheduledField::Inertia,
            factor: 0.8,
        },
        ScheduleEntry {
            time: 450.0,
            area: 1,
            field: ScheduledField::Inertia,
            factor: 1.5,
        },
        ScheduleEntry {
            time: 600.0,
            area: 2,
            field: ScheduledField::Inertia,
            factor: 0.6,
        },
    ];
    // Damping never matches the controller's model exactly: every 15 s each
    // area's true damping is redrawn within +/-5% of nominal. The draw is
    // seeded, so the scenario is the same config every time it is built.
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut t = 15.0;
    while t < 900.0 {
        for area in 0..n {
            entries.push(ScheduleEntry {
                time: t,
                area,
                field: ScheduledField::Damping,
                factor: rng.random_range(0.95..1.05),
            });
        }
        t += 15.0;
    }

    ScenarioConfig {
        topology: default_topology(),
        sim: SimSection {
            plant_mode: PlantMode::Nonlinear,
            controller_mode: ControllerMode::FoCbf,
            dt: 1e-3,
            t_end: 900.0,
            initial: rest_initial(&areas),
            seed,
            decimate: 1,
            scheme: Scheme::default(),
            controller_tracks_schedule: false,
        },
        areas,
        load: LoadProfile {
            signals,
            prediction_error_factor: 1.05,
        },
        schedule: Some(ParameterSchedule { entries }),
    }
}
