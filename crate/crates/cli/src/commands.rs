//! The five experiment drivers. All data goes to standard output or
//! `--out`; progress lines go to standard error. Every command is
//! byte-reproducible for a fixed config and seed: parallel work is written
//! into pre-indexed slots and every random stream is derived from the
//! master seed.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;
use serde::Serialize;

use riscal_core::channel::{make_sounding_plan, ArrayGeometry, SoundingPlan};
use riscal_core::estimator::{
    candidate_distances, estimate_scene, gauss_newton_refine, initialize, multi_user_initialize,
    ray_box_distance_range, synthesize_measurement, wrap_angle, EstimationOptions,
    InitSearchConfig, Measurement,
};
use riscal_core::fim::{bounds_report, StateVector};
use riscal_core::geometry::{local_direction_from_angles, AnglePair, Position3, UserState};
use riscal_core::scene::Scenario;
use riscal_core::Error as CoreError;

use crate::output::{bound_cell, cell, write_csv_row, writer};
use crate::{CliError, RunContext};

/// Refinement iteration budget.
const GN_MAX_ITER: usize = 30;

/// Reduced sounding budget for heat maps without `--full-fidelity`.
const HEAT_MAP_TRANSMISSIONS: usize = 50;

/// Monte Carlo user area: square of this side length, corner here.
const MC_AREA_CORNER: [f64; 3] = [6.5, 5.5, -5.0];
const MC_AREA_SIDE: f64 = 3.0;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Independent stream seed for one lane (trial, user, ...) of an experiment.
fn stream_seed(master: u64, lane: u64, salt: u64) -> u64 {
    splitmix64(master ^ splitmix64(lane ^ splitmix64(salt)))
}

fn plan_for(scene: &Scenario, seed: u64) -> SoundingPlan {
    make_sounding_plan(
        seed,
        scene.waveform.transmissions,
        scene.ris_array.element_count(),
        scene.bs_array.element_count(),
    )
}

fn singular_or_estimation(e: CoreError) -> CliError {
    match e {
        CoreError::SingularScene => {
            CliError::Singular("scene information is singular at the truth".into())
        }
        other => CliError::Estimation(other.to_string()),
    }
}

/// Lower-bound heat map over user positions on the prior area at the
/// configured user height.
pub fn bounds_map(ctx: &RunContext, nx: usize, ny: usize) -> Result<(), CliError> {
    if nx < 2 || ny < 2 {
        return Err(CliError::Config("heat-map grid must be at least 2x2".into()));
    }
    let mut scene = ctx.config.scenario();
    scene.users.truncate(1);
    if !ctx.full_fidelity {
        scene.waveform.transmissions = scene.waveform.transmissions.min(HEAT_MAP_TRANSMISSIONS);
    }
    let plan = plan_for(&scene, ctx.config.seed);
    let alloc = ctx.config.tone_allocation();
    let known = ctx.config.known.state_indices(1);
    let z = ctx.config.users[0].position[2];
    let clock = ctx.config.users[0].clock_offset_s;
    let lo = &ctx.config.priors.user_box_min;
    let hi = &ctx.config.priors.user_box_max;
    eprintln!(
        "bounds-map: {nx}x{ny} grid over [{}, {}] x [{}, {}] at z = {z}, G = {}",
        lo[0], hi[0], lo[1], hi[1], scene.waveform.transmissions
    );

    let cells: Vec<(f64, f64)> = (0..nx)
        .flat_map(|i| {
            let x = lo[0] + (hi[0] - lo[0]) * i as f64 / (nx - 1) as f64;
            (0..ny).map(move |j| (x, lo[1] + (hi[1] - lo[1]) * j as f64 / (ny - 1) as f64))
        })
        .collect();

    let rows: Vec<Vec<String>> = cells
        .par_iter()
        .map(|&(x, y)| -> Result<Vec<String>, CliError> {
            let mut sc = scene.clone();
            sc.users =
                vec![UserState { position: Position3::new(x, y, z), clock_offset: clock }];
            let report = match bounds_report(&sc, &plan, alloc, &known) {
                Ok(report) => report,
                // A grid point coinciding with a scene node has no defined
                // geometry; report it like any other blind cell.
                Err(CoreError::DegenerateGeometry { .. }) => {
                    riscal_core::fim::BlockBounds::blind(1, &known)
                }
                Err(e) => return Err(CliError::Estimation(e.to_string())),
            };
            Ok(vec![
                cell(x),
                cell(y),
                bound_cell(report.user_position_m[0], report.singular),
                bound_cell(report.ris_position_m, report.singular),
                bound_cell(report.orientation_deg, report.singular),
                bound_cell(report.clock_ns[0], report.singular),
                (report.singular as u8).to_string(),
            ])
        })
        .collect::<Result<_, _>>()?;

    let mut w = writer(&ctx.out)?;
    write_csv_row(
        &mut *w,
        &["x,y,user_bound_m,ris_bound_m,orient_bound_deg,clock_bound_ns,singular".to_string()],
    )?;
    for row in &rows {
        write_csv_row(&mut *w, row)?;
    }
    w.flush()?;
    Ok(())
}

/// Bounds at the configured user as a function of RIS element count, for
/// the benchmark and the three known-state variants.
pub fn bounds_vs_ris_size(ctx: &RunContext, sizes: Option<Vec<usize>>) -> Result<(), CliError> {
    let sizes: Vec<usize> = sizes.unwrap_or_else(|| (1..=15).map(|i| (2 * i) * (2 * i)).collect());
    let mut side = Vec::with_capacity(sizes.len());
    for &s in &sizes {
        let n = (s as f64).sqrt().round() as usize;
        if n == 0 || n * n != s {
            return Err(CliError::Config(format!(
                "RIS sizes must be perfect squares of positive integers, got {s}"
            )));
        }
        side.push(n);
    }
    let mut scene = ctx.config.scenario();
    scene.users.truncate(1);
    let alloc = ctx.config.tone_allocation();
    let variants: [(&str, Vec<usize>); 4] = [
        ("benchmark", vec![]),
        ("known_pRy", vec![1]),
        ("known_oR", vec![3]),
        ("known_pU", vec![4, 5, 6]),
    ];
    eprintln!(
        "bounds-vs-ris-size: {} sizes x {} variants at G = {}",
        sizes.len(),
        variants.len(),
        scene.waveform.transmissions
    );

    let rows: Vec<Vec<Vec<String>>> = side
        .par_iter()
        .map(|&n| -> Result<Vec<Vec<String>>, CliError> {
            let mut sc = scene.clone();
            sc.ris_array =
                ArrayGeometry::square_half_wavelength(n, sc.waveform.wavelength_m());
            let plan = plan_for(&sc, ctx.config.seed);
            variants
                .iter()
                .map(|(name, known)| {
                    let report = bounds_report(&sc, &plan, alloc, known)
                        .map_err(|e| CliError::Estimation(e.to_string()))?;
                    Ok(vec![
                        (n * n).to_string(),
                        name.to_string(),
                        bound_cell(report.user_position_m[0], report.singular),
                        bound_cell(report.ris_position_m, report.singular),
                        bound_cell(report.orientation_deg, report.singular),
                        bound_cell(report.clock_ns[0], report.singular),
                        (report.singular as u8).to_string(),
                    ])
                })
                .collect()
        })
        .collect::<Result<_, _>>()?;

    let mut w = writer(&ctx.out)?;
    write_csv_row(
        &mut *w,
        &["n_ris,variant,user_bound_m,ris_bound_m,orient_bound_deg,clock_bound_ns,singular"
            .to_string()],
    )?;
    for size_rows in &rows {
        for row in size_rows {
            write_csv_row(&mut *w, row)?;
        }
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct UserJson {
    position_m: [f64; 3],
    clock_offset_s: f64,
}

#[derive(Serialize)]
struct StateJson {
    ris_position_m: [f64; 3],
    ris_yaw_rad: f64,
    users: Vec<UserJson>,
}

impl From<&StateVector> for StateJson {
    fn from(s: &StateVector) -> Self {
        Self {
            ris_position_m: s.ris_position.into(),
            ris_yaw_rad: s.ris_yaw,
            users: s
                .users
                .iter()
                .map(|u| UserJson { position_m: u.position.into(), clock_offset_s: u.clock_offset })
                .collect(),
        }
    }
}

#[derive(Serialize)]
struct BlockErrorsJson {
    ris_position_m: f64,
    ris_yaw_deg: f64,
    user_position_m: Vec<f64>,
    clock_ns: Vec<f64>,
}

fn block_errors(state: &StateVector, truth: &StateVector) -> BlockErrorsJson {
    BlockErrorsJson {
        ris_position_m: (state.ris_position - truth.ris_position).norm(),
        ris_yaw_deg: wrap_angle(state.ris_yaw - truth.ris_yaw).abs().to_degrees(),
        user_position_m: state
            .users
            .iter()
            .zip(&truth.users)
            .map(|(a, b)| (a.position - b.position).norm())
            .collect(),
        clock_ns: state
            .users
            .iter()
            .zip(&truth.users)
            .map(|(a, b)| (a.clock_offset - b.clock_offset).abs() * 1e9)
            .collect(),
    }
}

#[derive(Serialize)]
struct EstimateJson {
    converged: bool,
    iterations: usize,
    blind_scene: bool,
    warnings: Vec<String>,
    truth: StateJson,
    initial: StateJson,
    refined: StateJson,
    initial_errors: BlockErrorsJson,
    refined_errors: BlockErrorsJson,
    trace: Vec<StateJson>,
}

/// Ambiguity diagnostics for one user's measurement: distances at which an
/// alternative geometry reproduces it within the prior.
fn ambiguity_roots(
    meas: &Measurement,
    search: &InitSearchConfig,
    p_b: &Position3,
) -> Vec<f64> {
    let t_bu = local_direction_from_angles(&AnglePair {
        azimuth: meas.values[0],
        elevation: meas.values[1],
    });
    let range = ray_box_distance_range(p_b, &t_bu, &search.user_prior)
        .unwrap_or((0.0, (search.user_prior.max - search.user_prior.min).norm()));
    candidate_distances(&meas.values, range)
}

/// One full estimation run, JSON out. Exit is nonzero on initialization
/// failure or non-convergence, after the JSON has been written.
pub fn estimate(ctx: &RunContext) -> Result<(), CliError> {
    let scene = ctx.config.scenario();
    let plan = plan_for(&scene, ctx.config.seed);
    let alloc = ctx.config.tone_allocation();
    let search = ctx.config.search_config();
    eprintln!(
        "estimate: {} user(s), G = {}, {}",
        scene.users.len(),
        scene.waveform.transmissions,
        if ctx.zero_noise { "zero-noise" } else { "noisy" }
    );

    let mut warnings = Vec::new();
    let mut measurements = Vec::with_capacity(scene.users.len());
    for m in 0..scene.users.len() {
        let meas = synthesize_measurement(
            &scene,
            &plan,
            m,
            alloc,
            stream_seed(ctx.config.seed, m as u64, 0),
            ctx.zero_noise,
        )
        .map_err(singular_or_estimation)?;
        let roots = ambiguity_roots(&meas, &search, &scene.bs_position);
        if roots.len() >= 2 {
            warnings.push(format!(
                "user {m}: {} candidate direct-path distances within the prior (ambiguous \
                 initialization): {roots:?}",
                roots.len()
            ));
        }
        measurements.push(meas);
    }

    let report = bounds_report(&scene, &plan, alloc, &[])
        .map_err(|e| CliError::Estimation(e.to_string()))?;
    if report.singular {
        warnings.push(
            "scene is in a blind area: state information is singular at the truth".into(),
        );
    }
    for warning in &warnings {
        eprintln!("warning: {warning}");
    }

    let mut w = writer(&ctx.out)?;
    let (init, _surfaces) =
        match multi_user_initialize(&measurements, &search, &scene.bs_position, &scene.ris.orientation)
        {
            Ok(pair) => pair,
            Err(e) => {
                let body = serde_json::json!({
                    "error": format!("initialization failed: {e}"),
                    "warnings": warnings,
                });
                writeln!(w, "{}", serde_json::to_string_pretty(&body)?)?;
                w.flush()?;
                return Err(CliError::Estimation(format!("initialization failed: {e}")));
            }
        };
    let result = gauss_newton_refine(&scene, &measurements, &init, GN_MAX_ITER)
        .map_err(|e| CliError::Estimation(e.to_string()))?;

    let truth = StateVector::from_scene(&scene);
    let body = EstimateJson {
        converged: result.converged,
        iterations: result.iterations,
        blind_scene: report.singular,
        warnings,
        truth: (&truth).into(),
        initial: (&result.initial).into(),
        refined: (&result.refined).into(),
        initial_errors: block_errors(&result.initial, &truth),
        refined_errors: block_errors(&result.refined, &truth),
        trace: result.trace.iter().map(StateJson::from).collect(),
    };
    writeln!(w, "{}", serde_json::to_string_pretty(&body)?)?;
    w.flush()?;

    if !result.converged {
        return Err(CliError::Estimation("refinement did not converge".into()));
    }
    Ok(())
}

struct ErrAgg {
    user_sq: f64,
    clock_sq: f64,
    ris_sq: f64,
    orient_sq: f64,
}

fn error_aggregate(state: &StateVector, truth: &StateVector) -> ErrAgg {
    let e = block_errors(state, truth);
    ErrAgg {
        user_sq: e.user_position_m.iter().map(|v| v * v).sum(),
        clock_sq: e.clock_ns.iter().map(|v| v * v).sum(),
        ris_sq: e.ris_position_m * e.ris_position_m,
        orient_sq: e.ris_yaw_deg * e.ris_yaw_deg,
    }
}

struct TrialOutcome {
    /// Per-trial bounds [clock ns, user m, orient deg, ris m], user/clock
    /// averaged over users; None when the trial's scene is blind.
    bounds: Option<[f64; 4]>,
    refined: Option<ErrAgg>,
    init: Option<ErrAgg>,
}

/// Monte Carlo sweep over the number of users: per M, mean bounds over
/// non-singular trials and pooled RMSE of the refined estimator, with the
/// initializer-only RMSE as the coarse reference.
pub fn mc_sweep_users(
    ctx: &RunContext,
    user_counts: Option<Vec<usize>>,
    trials_override: Option<usize>,
) -> Result<(), CliError> {
    let counts: Vec<usize> = user_counts.unwrap_or_else(|| (1..=10).collect());
    if counts.iter().any(|&m| m == 0) {
        return Err(CliError::Config("user counts must be positive".into()));
    }
    let trials = trials_override.unwrap_or(ctx.config.trials);
    if trials == 0 {
        return Err(CliError::Config("at least one trial required".into()));
    }
    let base = ctx.config.scenario();
    let plan = plan_for(&base, ctx.config.seed);
    let alloc = ctx.config.tone_allocation();
    let search = ctx.config.search_config();
    let clock = ctx.config.users[0].clock_offset_s;

    let mut w = writer(&ctx.out)?;
    write_csv_row(
        &mut *w,
        &["m_users,trials,failures,singular_trials,\
           bound_clock_ns,bound_user_m,bound_orient_deg,bound_ris_m,\
           rmse_clock_ns,rmse_user_m,rmse_orient_deg,rmse_ris_m,\
           init_rmse_clock_ns,init_rmse_user_m,init_rmse_orient_deg,init_rmse_ris_m"
            .to_string()],
    )?;

    for &m_users in &counts {
        eprintln!("mc-sweep-users: M = {m_users}, {trials} trials");
        let outcomes: Vec<TrialOutcome> = (0..trials)
            .into_par_iter()
            .map(|t| {
                let lane = ((m_users as u64) << 32) | t as u64;
                let mut rng = ChaCha12Rng::seed_from_u64(stream_seed(ctx.config.seed, lane, 1));
                let mut sc = base.clone();
                sc.users = (0..m_users)
                    .map(|_| UserState {
                        position: Position3::new(
                            MC_AREA_CORNER[0] + rng.gen_range(0.0..MC_AREA_SIDE),
                            MC_AREA_CORNER[1] + rng.gen_range(0.0..MC_AREA_SIDE),
                            MC_AREA_CORNER[2],
                        ),
                        clock_offset: clock,
                    })
                    .collect();

                let known = ctx.config.known.state_indices(m_users);
                let bounds = match bounds_report(&sc, &plan, alloc, &known) {
                    Ok(report) if !report.singular => Some([
                        mean(&report.clock_ns),
                        mean(&report.user_position_m),
                        report.orientation_deg.unwrap_or(f64::INFINITY),
                        report.ris_position_m.unwrap_or(f64::INFINITY),
                    ]),
                    _ => None,
                };

                let opts = EstimationOptions {
                    alloc,
                    max_iterations: GN_MAX_ITER,
                    zero_noise: ctx.zero_noise,
                    seed: stream_seed(ctx.config.seed, lane, 2),
                    keep_surface: false,
                };
                let truth = StateVector::from_scene(&sc);
                let (refined, init) = match estimate_scene(&sc, &plan, &search, &opts) {
                    Ok(result) if result.converged => (
                        Some(error_aggregate(&result.refined, &truth)),
                        Some(error_aggregate(&result.initial, &truth)),
                    ),
                    Ok(_) => {
                        eprintln!(
                            "mc-sweep-users: M = {m_users} trial {t}: \
                             refinement stalled without reaching a cost decrease"
                        );
                        (None, None)
                    }
                    Err(err) => {
                        eprintln!("mc-sweep-users: M = {m_users} trial {t}: {err}");
                        (None, None)
                    }
                };
                TrialOutcome { bounds, refined, init }
            })
            .collect();

        let singular_trials = outcomes.iter().filter(|o| o.bounds.is_none()).count();
        let failures = outcomes.iter().filter(|o| o.refined.is_none()).count();
        let successes = trials - failures;

        let mut bound_means = [0.0f64; 4];
        for o in outcomes.iter().filter_map(|o| o.bounds.as_ref()) {
            for (acc, v) in bound_means.iter_mut().zip(o) {
                *acc += v;
            }
        }
        let nonsingular = (trials - singular_trials) as f64;
        let bound_means = bound_means.map(|s| if nonsingular > 0.0 { s / nonsingular } else { f64::INFINITY });

        let rmse = |pick: fn(&TrialOutcome) -> Option<&ErrAgg>| -> [f64; 4] {
            let mut user_sq = 0.0;
            let mut clock_sq = 0.0;
            let mut ris_sq = 0.0;
            let mut orient_sq = 0.0;
            for agg in outcomes.iter().filter_map(pick) {
                user_sq += agg.user_sq;
                clock_sq += agg.clock_sq;
                ris_sq += agg.ris_sq;
                orient_sq += agg.orient_sq;
            }
            if successes == 0 {
                return [f64::INFINITY; 4];
            }
            let per_user = (successes * m_users) as f64;
            let per_trial = successes as f64;
            [
                (clock_sq / per_user).sqrt(),
                (user_sq / per_user).sqrt(),
                (orient_sq / per_trial).sqrt(),
                (ris_sq / per_trial).sqrt(),
            ]
        };
        let refined_rmse = rmse(|o| o.refined.as_ref());
        let init_rmse = rmse(|o| o.init.as_ref());

        let mut row = vec![
            m_users.to_string(),
            trials.to_string(),
            failures.to_string(),
            singular_trials.to_string(),
        ];
        row.extend(bound_means.iter().map(|&v| cell(v)));
        row.extend(refined_rmse.iter().map(|&v| cell(v)));
        row.extend(init_rmse.iter().map(|&v| cell(v)));
        write_csv_row(&mut *w, &row)?;
        w.flush()?;
    }
    Ok(())
}

fn mean(values: &[Option<f64>]) -> f64 {
    let mut sum = 0.0;
    for v in values {
        match v {
            Some(v) => sum += v,
            None => return f64::INFINITY,
        }
    }
    sum / values.len() as f64
}

/// Initialization cost surface for one user position: full Δ(d0, o3) grid
/// dump with the argmin cell flagged.
pub fn cost_surface(ctx: &RunContext, user: Option<Vec<f64>>) -> Result<(), CliError> {
    let mut scene = ctx.config.scenario();
    scene.users.truncate(1);
    if let Some(p) = user {
        if p.len() != 3 {
            return Err(CliError::Config(format!(
                "--user takes exactly three coordinates, got {}",
                p.len()
            )));
        }
        scene.users[0].position = Position3::new(p[0], p[1], p[2]);
    }
    let plan = plan_for(&scene, ctx.config.seed);
    let search = ctx.config.search_config();
    eprintln!(
        "cost-surface: user at {:?}, steps {} m / {} deg",
        scene.users[0].position.as_slice(),
        search.distance_step_m,
        search.yaw_step_rad.to_degrees()
    );

    let meas = synthesize_measurement(
        &scene,
        &plan,
        0,
        ctx.config.tone_allocation(),
        stream_seed(ctx.config.seed, 0, 0),
        ctx.zero_noise,
    )
    .map_err(singular_or_estimation)?;
    let (_, surface) = initialize(&meas, &search, &scene.bs_position, &scene.ris.orientation)
        .map_err(|e| CliError::Estimation(format!("initialization failed: {e}")))?;

    let mut w = writer(&ctx.out)?;
    write_csv_row(&mut *w, &["d0_m,o3_deg,cost,is_argmin".to_string()])?;
    for (di, &d0) in surface.distances.iter().enumerate() {
        for (yi, &yaw) in surface.yaws.iter().enumerate() {
            write_csv_row(
                &mut *w,
                &[
                    cell(d0),
                    cell(yaw.to_degrees()),
                    cell(surface.at(di, yi)),
                    (((di, yi) == surface.best) as u8).to_string(),
                ],
            )?;
        }
    }
    w.flush()?;
    Ok(())
}
