//! Measurement synthesis from the information bounds, grid-search
//! initialization (prior-box ray clipping, ellipsoid candidates, cost
//! surface over direct-path distance and RIS yaw), and damped Gauss-Newton
//! refinement for single- and multi-user scenes.

use nalgebra::{Cholesky, DMatrix, DVector, SMatrix, SVector, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::channel::{
    noise_variance_mw, pilot_energy_mw, user_tones, SoundingPlan, ToneAllocation,
};
use crate::fim::{channel_fim_comb, effective_fim, state_jacobian, Efim, StateVector};
use crate::geometry::{
    euler_to_rotation, local_direction_from_angles, AnglePair, EulerOrientation, Position3,
    UserState,
};
use crate::scene::Scenario;
use crate::{Error, Result, SPEED_OF_LIGHT};

/// Reduce an angle to (-pi, pi].
pub fn wrap_angle(x: f64) -> f64 {
    let two_pi = 2.0 * std::f64::consts::PI;
    let mut y = x % two_pi;
    if y <= -std::f64::consts::PI {
        y += two_pi;
    } else if y > std::f64::consts::PI {
        y -= two_pi;
    }
    y
}

/// Axis-aligned box prior, used for the user area A_U.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aabb {
    pub min: Position3,
    pub max: Position3,
}

impl Aabb {
    pub fn new(min: Position3, max: Position3) -> Result<Self> {
        if (0..3).any(|a| min[a] > max[a]) {
            return Err(Error::InvalidConfig(format!(
                "empty box prior: min {min:?} max {max:?}"
            )));
        }
        Ok(Self { min, max })
    }

    pub fn contains(&self, p: &Position3) -> bool {
        (0..3).all(|a| self.min[a] <= p[a] && p[a] <= self.max[a])
    }

    pub fn center(&self) -> Position3 {
        (self.min + self.max) / 2.0
    }
}

/// Measured geometric parameters with the covariance they were drawn from
/// and the information matrix used as the refinement weight.
#[derive(Debug, Clone, PartialEq)]
pub struct Measurement {
    /// [phi_BU, theta_BU, phi_BR, theta_BR, dirsum_y, dirsum_z, tau_BU, tau_R].
    pub values: SVector<f64, 8>,
    /// Inverse effective FIM.
    pub covariance: SMatrix<f64, 8, 8>,
    /// Effective FIM at generation, the Gauss-Newton weight.
    pub efim: Efim,
}

/// Lower-triangular-like factor L with L L^T = efim^{-1}, plus the product
/// itself, via Jacobi-scaled Cholesky.
fn inverse_factor(efim: &Efim) -> Result<(SMatrix<f64, 8, 8>, SMatrix<f64, 8, 8>)> {
    let mut s = [0.0f64; 8];
    for (i, si) in s.iter_mut().enumerate() {
        let d = efim[(i, i)];
        if !(d > 0.0 && d.is_finite()) {
            return Err(Error::SingularScene);
        }
        *si = 1.0 / d.sqrt();
    }
    let c = SMatrix::<f64, 8, 8>::from_fn(|i, j| efim[(i, j)] * s[i] * s[j]);
    let chol = Cholesky::new(c).ok_or(Error::SingularScene)?;
    let g_inv = chol.l().try_inverse().ok_or(Error::SingularScene)?;
    let mut l = g_inv.transpose();
    for i in 0..8 {
        for j in 0..8 {
            l[(i, j)] *= s[i];
        }
    }
    let cov = l * l.transpose();
    Ok((l, cov))
}

/// Draw a measurement around the true parameters with covariance equal to
/// the inverse effective FIM on the user's subcarrier comb. `zero_noise`
/// returns the truth with the same covariance bookkeeping.
pub fn synthesize_measurement_comb(
    scene: &Scenario,
    plan: &SoundingPlan,
    user: usize,
    tones: &[usize],
    energy_mw: f64,
    noise_mw: f64,
    seed: u64,
    zero_noise: bool,
) -> Result<Measurement> {
    let fim = channel_fim_comb(scene, plan, user, tones, energy_mw, noise_mw)?;
    let efim = effective_fim(&fim)?;
    let (l, covariance) = inverse_factor(&efim)?;
    let truth = scene.path_geometry(user)?.measurements();
    let values = if zero_noise {
        truth
    } else {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let z = SVector::<f64, 8>::from_fn(|_, _| StandardNormal.sample(&mut rng));
        truth + l * z
    };
    Ok(Measurement { values, covariance, efim })
}

/// Measurement on the user's OFDMA comb with the configured power budget.
pub fn synthesize_measurement(
    scene: &Scenario,
    plan: &SoundingPlan,
    user: usize,
    alloc: ToneAllocation,
    seed: u64,
    zero_noise: bool,
) -> Result<Measurement> {
    let tones = user_tones(alloc, scene.waveform.subcarriers, scene.users.len(), user);
    synthesize_measurement_comb(
        scene,
        plan,
        user,
        &tones,
        pilot_energy_mw(&scene.waveform, tones.len()),
        noise_variance_mw(&scene.waveform),
        seed,
        zero_noise,
    )
}

/// Clip the ray `origin + d * direction`, d >= 0, against the box. Returns
/// the entry/exit distances; an ray starting inside enters at zero.
pub fn ray_box_distance_range(
    origin: &Position3,
    direction: &Vector3<f64>,
    prior: &Aabb,
) -> Result<(f64, f64)> {
    let mut lo = 0.0f64;
    let mut hi = f64::INFINITY;
    for a in 0..3 {
        if direction[a].abs() < 1e-15 {
            if origin[a] < prior.min[a] || origin[a] > prior.max[a] {
                return Err(Error::RayMissesPrior);
            }
            continue;
        }
        let t1 = (prior.min[a] - origin[a]) / direction[a];
        let t2 = (prior.max[a] - origin[a]) / direction[a];
        lo = lo.max(t1.min(t2));
        hi = hi.min(t1.max(t2));
    }
    if hi < lo {
        return Err(Error::RayMissesPrior);
    }
    Ok((lo, hi))
}

/// Intersect the ray `p_B + r u`, r > 0, with the ellipsoid of focal points
/// p_B and `p_u_hat` and focal-length sum `focal_sum`. Closed form; `None`
/// when the ray leaves the ellipsoid behind it or the focal sum is too
/// short to reach anything.
pub fn ellipsoid_ray_intersect(
    p_b: &Position3,
    p_u_hat: &Position3,
    focal_sum: f64,
    u: &Vector3<f64>,
) -> Option<Position3> {
    let q = p_b - p_u_hat;
    let denom = 2.0 * (focal_sum + q.dot(u));
    if denom <= 0.0 {
        return None;
    }
    let r = (focal_sum * focal_sum - q.norm_squared()) / denom;
    if r <= 0.0 || !r.is_finite() {
        return None;
    }
    Some(p_b + u * r)
}

/// Grid-search configuration: user prior box, yaw prior interval, and the
/// two step sizes (defaults 0.1 m and 0.1 degrees).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InitSearchConfig {
    pub user_prior: Aabb,
    /// Inclusive yaw interval in radians.
    pub yaw_prior: (f64, f64),
    pub distance_step_m: f64,
    pub yaw_step_rad: f64,
}

impl InitSearchConfig {
    pub fn new(user_prior: Aabb, yaw_prior: (f64, f64)) -> Self {
        Self { user_prior, yaw_prior, distance_step_m: 0.1, yaw_step_rad: 0.1f64.to_radians() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.distance_step_m > 0.0 && self.yaw_step_rad > 0.0) {
            return Err(Error::InvalidConfig("grid steps must be positive".into()));
        }
        if self.yaw_prior.1 < self.yaw_prior.0 {
            return Err(Error::InvalidConfig("empty yaw prior".into()));
        }
        Aabb::new(self.user_prior.min, self.user_prior.max).map(|_| ())
    }
}

/// Search metric over the (distance, yaw) candidate grid; infeasible cells
/// hold +inf.
#[derive(Debug, Clone, PartialEq)]
pub struct CostSurface {
    pub distances: Vec<f64>,
    pub yaws: Vec<f64>,
    /// Row-major `[distance][yaw]`.
    pub cost: Vec<f64>,
    pub best: (usize, usize),
}

impl CostSurface {
    pub fn at(&self, distance_idx: usize, yaw_idx: usize) -> f64 {
        self.cost[distance_idx * self.yaws.len() + yaw_idx]
    }

    pub fn min_cost(&self) -> f64 {
        self.at(self.best.0, self.best.1)
    }

    /// Contiguous distance intervals whose best cost over yaw is below the
    /// threshold. Two or more disjoint runs mean the initialization is
    /// ambiguous: distinct geometries explain the measurements equally well.
    pub fn low_cost_distance_runs(&self, threshold: f64) -> Vec<(f64, f64)> {
        let ny = self.yaws.len();
        let mut runs = Vec::new();
        let mut open: Option<(f64, f64)> = None;
        for (di, &d) in self.distances.iter().enumerate() {
            let best = (0..ny).map(|yi| self.cost[di * ny + yi]).fold(f64::INFINITY, f64::min);
            if best < threshold {
                open = Some(match open {
                    None => (d, d),
                    Some((start, _)) => (start, d),
                });
            } else if let Some(run) = open.take() {
                runs.push(run);
            }
        }
        if let Some(run) = open {
            runs.push(run);
        }
        runs
    }
}

/// Direct-path distances at which a candidate geometry reproduces every
/// measured parameter exactly: roots of a quadratic in d0 obtained by
/// eliminating the candidate chain (clock from tau_BU, user along the BU
/// ray, RIS along the BR ray at the ellipsoid radius) from the z-component
/// of the direction sum, which yaw cannot change. Valid for zero pitch/roll
/// mounting. The true distance of a consistent measurement is always a
/// root; a second root inside the search range is a ghost geometry.
pub fn candidate_distances(values: &SVector<f64, 8>, range: (f64, f64)) -> Vec<f64> {
    let t_bu = local_direction_from_angles(&AnglePair { azimuth: values[0], elevation: values[1] });
    let t_br = local_direction_from_angles(&AnglePair { azimuth: values[2], elevation: values[3] });
    let theta2 = values[4];
    let theta3 = values[5];
    let t = (values[7] - values[6]) * SPEED_OF_LIGHT;
    let u = 1.0 - t_bu.dot(&t_br);
    let s_u = t_bu.z;
    let s_r = t_br.z;
    let v = theta3 + s_r;

    let a2 = 2.0 * u * (s_u - v);
    let a1 = 2.0 * t * (s_u - s_r - u * v);
    let a0 = -t * t * (theta3 + 2.0 * s_r);

    let mut roots = Vec::new();
    let scale = a2.abs().max(a1.abs()).max(a0.abs()).max(1e-300);
    if a2.abs() > 1e-12 * scale {
        let disc = a1 * a1 - 4.0 * a2 * a0;
        if disc >= 0.0 {
            let sq = disc.sqrt();
            roots.push((-a1 + sq) / (2.0 * a2));
            roots.push((-a1 - sq) / (2.0 * a2));
        }
    } else if a1.abs() > 1e-12 * scale {
        roots.push(-a0 / a1);
    }

    let mut out: Vec<f64> = Vec::new();
    for d0 in roots {
        if !(d0.is_finite() && d0 > range.0 && d0 < range.1) {
            continue;
        }
        let r = t * (t + 2.0 * d0) / (2.0 * (t + d0 * u));
        if !(r > 1e-9 && r.is_finite()) {
            continue;
        }
        let d_ru = t + d0 - r;
        if d_ru <= 1e-9 {
            continue;
        }
        // Validate against the actual candidate geometry and check the yaw
        // degree of freedom can reach the horizontal component.
        let p_u = t_bu * d0;
        let p_r = t_br * r;
        let diff: Vector3<f64> = p_u - p_r;
        let norm = diff.norm();
        if norm < 1e-12 {
            continue;
        }
        let t_sum = -t_br + diff / norm;
        if (t_sum.z - theta3).abs() > 1e-6 {
            continue;
        }
        let horizontal = (t_sum.x * t_sum.x + t_sum.y * t_sum.y).sqrt();
        if horizontal + 1e-9 < theta2.abs() {
            continue;
        }
        if out.iter().all(|&prev: &f64| (prev - d0).abs() > 1e-6) {
            out.push(d0);
        }
    }
    out.sort_by(|a, b| a.partial_cmp(b).expect("finite roots"));
    out
}

/// Exhaustive grid search over (d0, o3): for each direct-path distance the
/// clock, user position, and RIS position follow in closed form; the metric
/// is the distance between predicted and measured direction-sum components.
/// `mounting` supplies the fixed pitch/roll; its yaw is ignored.
///
/// Candidates that put the BS or the user behind the candidate RIS plane
/// are infeasible: a reflecting surface only serves its front halfspace,
/// and dropping these removes the exact mirror yaw that the two measured
/// direction-sum components cannot distinguish on their own.
pub fn initialize(
    meas: &Measurement,
    cfg: &InitSearchConfig,
    p_b: &Position3,
    mounting: &EulerOrientation,
) -> Result<(StateVector, CostSurface)> {
    cfg.validate()?;
    let values = &meas.values;
    let t_bu = local_direction_from_angles(&AnglePair { azimuth: values[0], elevation: values[1] });
    let t_br = local_direction_from_angles(&AnglePair { azimuth: values[2], elevation: values[3] });
    let (d_lo, d_hi) = ray_box_distance_range(p_b, &t_bu, &cfg.user_prior)?;

    let nd = ((d_hi - d_lo) / cfg.distance_step_m).floor() as usize + 1;
    let distances: Vec<f64> = (0..nd).map(|i| d_lo + i as f64 * cfg.distance_step_m).collect();
    let ny = ((cfg.yaw_prior.1 - cfg.yaw_prior.0) / cfg.yaw_step_rad).floor() as usize + 1;
    let yaws: Vec<f64> = (0..ny).map(|i| cfg.yaw_prior.0 + i as f64 * cfg.yaw_step_rad).collect();
    let yaw_trig: Vec<(f64, f64)> = yaws.iter().map(|y| y.sin_cos()).collect();
    let m_t = euler_to_rotation(&EulerOrientation { yaw: 0.0, ..*mounting }).transpose();
    let m_row0 = m_t.row(0).transpose();

    // RIS -> BS is along the measured BR ray for every candidate, so its
    // yaw-rotated image and front-halfspace test hoist out of the grid.
    let unrotate = |v: &Vector3<f64>, sy: f64, cy: f64| {
        Vector3::new(cy * v.x + sy * v.y, -sy * v.x + cy * v.y, v.z)
    };
    let t_rb = -t_br;
    let rb_rotated: Vec<Vector3<f64>> =
        yaw_trig.iter().map(|&(sy, cy)| unrotate(&t_rb, sy, cy)).collect();
    let rb_front: Vec<bool> = rb_rotated.iter().map(|v| m_row0.dot(v) > 0.0).collect();

    let mut cost = vec![f64::INFINITY; nd * ny];
    let mut best = (0, 0);
    let mut best_cost = f64::INFINITY;
    let mut best_candidate = None;

    // Keep every emitted candidate clear of coincident-node geometry so the
    // refinement stage can always evaluate it.
    const MIN_CANDIDATE_SEPARATION: f64 = 1e-6;

    for (di, &d0) in distances.iter().enumerate() {
        if d0 < MIN_CANDIDATE_SEPARATION {
            continue;
        }
        let beta = values[6] - d0 / SPEED_OF_LIGHT;
        let p_u = p_b + t_bu * d0;
        let d_r = (values[7] - beta) * SPEED_OF_LIGHT;
        let Some(p_r) = ellipsoid_ray_intersect(p_b, &p_u, d_r, &t_br) else {
            continue;
        };
        let to_user: Vector3<f64> = p_u - p_r;
        let d_ru = to_user.norm();
        if d_ru < MIN_CANDIDATE_SEPARATION || (p_r - p_b).norm() < MIN_CANDIDATE_SEPARATION {
            continue;
        }
        let t_ru = to_user / d_ru;
        for (yi, &(sy, cy)) in yaw_trig.iter().enumerate() {
            if !rb_front[yi] {
                continue;
            }
            let ru_rotated = unrotate(&t_ru, sy, cy);
            if m_row0.dot(&ru_rotated) <= 0.0 {
                continue;
            }
            let local = m_t * (rb_rotated[yi] + ru_rotated);
            let delta = (local.y - values[4]).hypot(local.z - values[5]);
            cost[di * ny + yi] = delta;
            if delta < best_cost {
                best_cost = delta;
                best = (di, yi);
                best_candidate = Some((p_r, yaws[yi], p_u, beta));
            }
        }
    }

    let Some((ris_position, ris_yaw, user_position, clock_offset)) = best_candidate else {
        return Err(Error::InitFailure {
            reason: "every grid candidate was geometrically infeasible".into(),
        });
    };
    let state = StateVector {
        ris_position,
        ris_yaw,
        users: vec![UserState { position: user_position, clock_offset }],
    };
    Ok((state, CostSurface { distances, yaws, cost, best }))
}

/// Per-user grid searches fused into one state: user blocks from their own
/// searches, the shared RIS pose averaged with weights 1/min-cost (yaw
/// averaged circularly). Users whose search fails fall back to the midpoint
/// of their prior ray and do not vote on the RIS pose.
pub fn multi_user_initialize(
    measurements: &[Measurement],
    cfg: &InitSearchConfig,
    p_b: &Position3,
    mounting: &EulerOrientation,
) -> Result<(StateVector, Vec<Option<CostSurface>>)> {
    if measurements.is_empty() {
        return Err(Error::InvalidConfig("at least one measurement required".into()));
    }
    let mut users = Vec::with_capacity(measurements.len());
    let mut surfaces = Vec::with_capacity(measurements.len());
    let mut weight_sum = 0.0;
    let mut position_acc = Position3::zeros();
    let mut yaw_sin = 0.0;
    let mut yaw_cos = 0.0;

    for meas in measurements {
        match initialize(meas, cfg, p_b, mounting) {
            Ok((state, surface)) => {
                let w = 1.0 / surface.min_cost().max(1e-12);
                weight_sum += w;
                position_acc += state.ris_position * w;
                yaw_sin += w * state.ris_yaw.sin();
                yaw_cos += w * state.ris_yaw.cos();
                users.push(state.users[0]);
                surfaces.push(Some(surface));
            }
            Err(_) => {
                let t_bu = local_direction_from_angles(&AnglePair {
                    azimuth: meas.values[0],
                    elevation: meas.values[1],
                });
                let d0 = match ray_box_distance_range(p_b, &t_bu, &cfg.user_prior) {
                    Ok((lo, hi)) => (lo + hi) / 2.0,
                    Err(_) => (cfg.user_prior.center() - p_b).norm(),
                };
                users.push(UserState {
                    position: p_b + t_bu * d0,
                    clock_offset: meas.values[6] - d0 / SPEED_OF_LIGHT,
                });
                surfaces.push(None);
            }
        }
    }

    if weight_sum <= 0.0 {
        return Err(Error::InitFailure {
            reason: "no user produced a feasible RIS candidate".into(),
        });
    }
    let state = StateVector {
        ris_position: position_acc / weight_sum,
        ris_yaw: yaw_sin.atan2(yaw_cos),
        users,
    };
    Ok((state, surfaces))
}

/// Refinement outcome: the accepted iterate trace runs from the initial
/// state to the refined one. `converged` is false when the normal equations
/// stayed singular through all ridge escalations, backtracking could not
/// find a non-increasing step, or an iterate hit degenerate geometry.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimationResult {
    pub initial: StateVector,
    pub refined: StateVector,
    pub trace: Vec<StateVector>,
    pub cost_surface: Option<CostSurface>,
    pub converged: bool,
    pub iterations: usize,
}

fn wrapped_residual(meas: &Measurement, eta: &SVector<f64, 8>) -> SVector<f64, 8> {
    let mut r = meas.values - eta;
    for i in 0..4 {
        r[i] = wrap_angle(r[i]);
    }
    r
}

fn solve_scaled(lhs: &DMatrix<f64>, rhs: &DVector<f64>) -> Option<DVector<f64>> {
    let n = lhs.nrows();
    let s: Vec<f64> = (0..n)
        .map(|i| {
            let d = lhs[(i, i)].abs().sqrt();
            if d > 0.0 {
                1.0 / d
            } else {
                0.0
            }
        })
        .collect();
    if s.iter().any(|&v| v == 0.0) {
        return None;
    }
    let scaled = DMatrix::from_fn(n, n, |i, j| lhs[(i, j)] * s[i] * s[j]);
    let scaled_rhs = DVector::from_fn(n, |i, _| rhs[i] * s[i]);
    let y = Cholesky::new(scaled)?.solve(&scaled_rhs);
    Some(DVector::from_fn(n, |i, _| y[i] * s[i]))
}

/// Weighted Gauss-Newton: step = I(s)^{-1} sum_m J_m^T W_m r_m with W_m the
/// generation-time effective FIM, angle residuals wrapped, backtracking
/// line search (up to 10 halvings) and an escalating ridge when the normal
/// matrix is singular or its undamped step cannot produce a cost decrease.
pub fn gauss_newton_refine(
    base: &Scenario,
    measurements: &[Measurement],
    initial: &StateVector,
    max_iter: usize,
) -> Result<EstimationResult> {
    if measurements.is_empty() || measurements.len() != initial.users.len() {
        return Err(Error::DimensionMismatch {
            expected: initial.users.len(),
            got: measurements.len(),
        });
    }
    let m_users = measurements.len();
    let n = 4 + 4 * m_users;

    let residuals = |state: &StateVector| -> Result<Vec<SVector<f64, 8>>> {
        let scene = state.apply_to(base);
        (0..m_users)
            .map(|m| Ok(wrapped_residual(&measurements[m], &scene.path_geometry(m)?.measurements())))
            .collect()
    };
    let cost_of = |rs: &[SVector<f64, 8>]| -> f64 {
        rs.iter()
            .zip(measurements)
            .map(|(r, meas)| (r.transpose() * meas.efim * r)[0])
            .sum()
    };

    let mut state = initial.clone();
    let mut rs = residuals(&state)?;
    let mut cost = cost_of(&rs);
    let mut trace = vec![state.clone()];
    let mut converged = true;
    let mut iterations = 0;

    'outer: for _ in 0..max_iter {
        iterations += 1;
        let scene = state.apply_to(base);
        let mut info = DMatrix::<f64>::zeros(n, n);
        let mut rhs = DVector::<f64>::zeros(n);
        for m in 0..m_users {
            let Ok(jac) = state_jacobian(&scene, m) else {
                converged = false;
                break 'outer;
            };
            let j8 = jac.fixed_view::<8, 8>(0, 0).into_owned();
            let a = j8.transpose() * measurements[m].efim * j8;
            let g = j8.transpose() * measurements[m].efim * rs[m];
            let off = 4 + 4 * m;
            for i in 0..4 {
                for j in 0..4 {
                    info[(i, j)] += a[(i, j)];
                    info[(i, off + j)] += a[(i, 4 + j)];
                    info[(off + i, j)] += a[(4 + i, j)];
                    info[(off + i, off + j)] += a[(4 + i, 4 + j)];
                }
                rhs[i] += g[i];
                rhs[off + i] += g[4 + i];
            }
        }

        // Damped step search: attempt the plain normal-equation step first,
        // then escalate the diagonal ridge. A near-singular information
        // matrix can pass the factorization yet produce a step so long that
        // no halving rescues it, so ridge escalation must also trigger on
        // backtracking exhaustion, not just on factorization failure.
        // Acceptance allows a one-ulp-scale cost increase: near the optimum
        // the candidate costs differ only by summation noise, and rejecting
        // those would misreport an exact fixed point as a failure.
        let mut accepted_step: Option<DVector<f64>> = None;
        let mut fixed_point = false;
        let mut ridge = 0.0f64;
        'damping: for attempt in 0..8 {
            let mut lhs = info.clone();
            if ridge > 0.0 {
                for i in 0..n {
                    lhs[(i, i)] += ridge * info[(i, i)].abs().max(f64::MIN_POSITIVE);
                }
            }
            ridge = if ridge == 0.0 { 1e-6 } else { ridge * 10.0 };
            let Some(mut step) = solve_scaled(&lhs, &rhs) else {
                continue;
            };
            if attempt == 0 && step.norm() < 1e-9 {
                fixed_point = true;
                break;
            }
            for _ in 0..=10 {
                let candidate = StateVector::from_dvector(&(state.to_dvector() + &step))
                    .expect("same dimension");
                if let Ok(crs) = residuals(&candidate) {
                    let ccost = cost_of(&crs);
                    if ccost <= cost + cost.abs() * 1e-12 {
                        state = candidate;
                        rs = crs;
                        cost = ccost;
                        accepted_step = Some(step);
                        break 'damping;
                    }
                }
                step *= 0.5;
            }
        }
        if fixed_point {
            break;
        }
        let Some(step) = accepted_step else {
            converged = false;
            break;
        };
        trace.push(state.clone());
        if step.norm() < 1e-9 {
            break;
        }
    }

    Ok(EstimationResult {
        initial: initial.clone(),
        refined: state,
        trace,
        cost_surface: None,
        converged,
        iterations,
    })
}

/// Full estimation options for one scene.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimationOptions {
    pub alloc: ToneAllocation,
    pub max_iterations: usize,
    pub zero_noise: bool,
    pub seed: u64,
    /// Attach the first user's cost surface to the result.
    pub keep_surface: bool,
}

impl Default for EstimationOptions {
    fn default() -> Self {
        Self {
            alloc: ToneAllocation::Interleaved,
            max_iterations: 30,
            zero_noise: false,
            seed: 0,
            keep_surface: false,
        }
    }
}

/// Synthesize per-user measurements, initialize, refine. The scene carries
/// the truth; per-user noise streams are derived from the base seed.
pub fn estimate_scene(
    scene: &Scenario,
    plan: &SoundingPlan,
    cfg: &InitSearchConfig,
    opts: &EstimationOptions,
) -> Result<EstimationResult> {
    let measurements: Vec<Measurement> = (0..scene.users.len())
        .map(|m| {
            synthesize_measurement(
                scene,
                plan,
                m,
                opts.alloc,
                opts.seed ^ (m as u64).wrapping_mul(0xD1B5_4A32_D192_ED03),
                opts.zero_noise,
            )
        })
        .collect::<Result<_>>()?;
    let (init, mut surfaces) =
        multi_user_initialize(&measurements, cfg, &scene.bs_position, &scene.ris.orientation)?;
    let mut result = gauss_newton_refine(scene, &measurements, &init, opts.max_iterations)?;
    if opts.keep_surface {
        result.cost_surface = surfaces.swap_remove(0);
    }
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{make_sounding_plan, ArrayGeometry};
    use crate::fim::{extract_bounds, multi_user_state_fim, state_fim};
    use crate::geometry::RisState;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::Rng;

    fn test_scene(user: Position3, transmissions: usize) -> Scenario {
        let mut sc = Scenario::reference(&[user]);
        let lam = sc.waveform.wavelength_m();
        sc.bs_array = ArrayGeometry::square_half_wavelength(4, lam);
        sc.ris_array = ArrayGeometry::square_half_wavelength(6, lam);
        sc.waveform.transmissions = transmissions;
        sc
    }

    fn plan_for(sc: &Scenario, seed: u64) -> SoundingPlan {
        make_sounding_plan(
            seed,
            sc.waveform.transmissions,
            sc.ris_array.element_count(),
            sc.bs_array.element_count(),
        )
    }

    fn default_cfg() -> InitSearchConfig {
        InitSearchConfig::new(
            Aabb::new(Position3::new(0.0, 0.0, -10.0), Position3::new(10.0, 10.0, 0.0)).unwrap(),
            (-std::f64::consts::PI, std::f64::consts::PI),
        )
    }

    #[test]
    fn wrap_angle_cases() {
        assert_eq!(wrap_angle(0.0), 0.0);
        assert_relative_eq!(wrap_angle(std::f64::consts::PI), std::f64::consts::PI);
        assert_relative_eq!(wrap_angle(-std::f64::consts::PI), std::f64::consts::PI);
        assert_relative_eq!(wrap_angle(1.5 * std::f64::consts::PI), -0.5 * std::f64::consts::PI);
        assert_relative_eq!(wrap_angle(-7.0 * std::f64::consts::PI), std::f64::consts::PI);
    }

    proptest! {
        #[test]
        fn wrap_angle_is_periodic_and_bounded(x in -50.0..50.0f64, n in -3i32..=3) {
            let w = wrap_angle(x);
            prop_assert!(w > -std::f64::consts::PI && w <= std::f64::consts::PI);
            let shifted = wrap_angle(x + n as f64 * 2.0 * std::f64::consts::PI);
            prop_assert!((w - shifted).abs() < 1e-9);
        }
    }

    #[test]
    fn ray_box_clipping() {
        let prior = Aabb::new(Position3::new(6.5, 5.5, -5.5), Position3::new(9.5, 8.5, -4.5))
            .unwrap();
        let origin = Position3::zeros();
        let target = Position3::new(8.0, 7.0, -5.0);
        let dir = target / target.norm();
        let (lo, hi) = ray_box_distance_range(&origin, &dir, &prior).unwrap();
        let true_d = target.norm();
        assert!(lo > 0.0 && lo < true_d && true_d < hi, "{lo} .. {true_d} .. {hi}");

        assert!(matches!(
            ray_box_distance_range(&origin, &(-dir), &prior),
            Err(Error::RayMissesPrior)
        ));

        let around_origin =
            Aabb::new(Position3::new(-1.0, -1.0, -1.0), Position3::new(1.0, 1.0, 1.0)).unwrap();
        let (lo, _) = ray_box_distance_range(&origin, &dir, &around_origin).unwrap();
        assert_eq!(lo, 0.0);

        assert!(Aabb::new(Position3::new(1.0, 0.0, 0.0), Position3::zeros()).is_err());
    }

    #[test]
    fn ellipsoid_closed_form_cases() {
        let p = ellipsoid_ray_intersect(
            &Position3::zeros(),
            &Position3::new(2.0, 0.0, 0.0),
            4.0,
            &Vector3::new(0.0, 1.0, 0.0),
        )
        .unwrap();
        assert_relative_eq!(p, Position3::new(0.0, 1.5, 0.0), max_relative = 1e-12);
        let focal = p.norm() + (p - Position3::new(2.0, 0.0, 0.0)).norm();
        assert_relative_eq!(focal, 4.0, epsilon = 1e-9);

        // On-axis: u along the second focus, focal sum twice its distance.
        for d in [1.0, 3.7] {
            let pu = Position3::new(0.0, 0.0, -d);
            let u = Vector3::new(0.0, 0.0, -1.0);
            let p = ellipsoid_ray_intersect(&Position3::zeros(), &pu, 2.0 * d, &u).unwrap();
            assert_relative_eq!(p.norm(), 1.5 * d, max_relative = 1e-12);
        }

        // Degenerate focal sum: no physical intersection.
        assert!(ellipsoid_ray_intersect(
            &Position3::zeros(),
            &Position3::new(2.0, 0.0, 0.0),
            2.0,
            &Vector3::new(0.0, 1.0, 0.0),
        )
        .is_none());
    }

    proptest! {
        #[test]
        fn ellipsoid_focal_sum_property(
            ux in 2.0..8.0f64, uy in -3.0..3.0f64, uz in -3.0..3.0f64,
            extra in 0.5..6.0f64,
            az in -3.1..3.1f64, el in -1.4..1.4f64,
        ) {
            let pu = Position3::new(ux, uy, uz);
            let focal_sum = pu.norm() + extra;
            let u = local_direction_from_angles(&AnglePair { azimuth: az, elevation: el });
            if let Some(p) = ellipsoid_ray_intersect(&Position3::zeros(), &pu, focal_sum, &u) {
                let sum = p.norm() + (p - pu).norm();
                prop_assert!((sum - focal_sum).abs() < 1e-9, "focal sum {sum} vs {focal_sum}");
            }
        }
    }

    #[test]
    fn synthesis_zero_noise_and_determinism() {
        let sc = test_scene(Position3::new(5.0, 6.0, -5.0), 20);
        let plan = plan_for(&sc, 11);
        let truth = sc.path_geometry(0).unwrap().measurements();

        let exact =
            synthesize_measurement(&sc, &plan, 0, ToneAllocation::Interleaved, 5, true).unwrap();
        assert_eq!(exact.values, truth);

        let a = synthesize_measurement(&sc, &plan, 0, ToneAllocation::Interleaved, 5, false)
            .unwrap();
        let b = synthesize_measurement(&sc, &plan, 0, ToneAllocation::Interleaved, 5, false)
            .unwrap();
        let c = synthesize_measurement(&sc, &plan, 0, ToneAllocation::Interleaved, 6, false)
            .unwrap();
        assert_eq!(a.values, b.values);
        assert_ne!(a.values, c.values);
        assert_ne!(a.values, truth);

        // Covariance field really is the inverse of the weight matrix;
        // check in the unit-diagonal scaling where both factors are O(1).
        let s = SVector::<f64, 8>::from_fn(|i, _| a.efim[(i, i)].sqrt());
        let cov_scaled = SMatrix::<f64, 8, 8>::from_fn(|i, j| a.covariance[(i, j)] * s[i] * s[j]);
        let efim_scaled = SMatrix::<f64, 8, 8>::from_fn(|i, j| a.efim[(i, j)] / (s[i] * s[j]));
        let product = cov_scaled * efim_scaled;
        for i in 0..8 {
            for j in 0..8 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((product[(i, j)] - want).abs() < 1e-6, "({i},{j}) {}", product[(i, j)]);
            }
        }
    }

    #[test]
    fn synthesis_sample_covariance_follows_the_law() {
        let sc = test_scene(Position3::new(5.0, 6.0, -5.0), 20);
        let plan = plan_for(&sc, 11);
        let truth = sc.path_geometry(0).unwrap().measurements();
        let trials = 4000;
        let mut acc = SMatrix::<f64, 8, 8>::zeros();
        let mut reference = None;
        for t in 0..trials {
            let m = synthesize_measurement(&sc, &plan, 0, ToneAllocation::Interleaved, t, false)
                .unwrap();
            let d = m.values - truth;
            acc += d * d.transpose();
            reference.get_or_insert(m.covariance);
        }
        let sample = acc / trials as f64;
        let cov = reference.unwrap();
        let mut num = 0.0;
        let mut den = 0.0;
        for i in 0..8 {
            for j in 0..8 {
                num += (sample[(i, j)] - cov[(i, j)]).powi(2);
                den += cov[(i, j)].powi(2);
            }
        }
        let rel = (num / den).sqrt();
        assert!(rel < 0.1, "sample covariance off by {rel}");
    }

    #[test]
    fn candidate_distances_contain_truth() {
        for user in [
            Position3::new(5.0, 6.0, -5.0),
            Position3::new(7.0, 3.0, -4.0),
            Position3::new(2.5, 7.5, -6.0),
        ] {
            let sc = test_scene(user, 8);
            let truth = sc.path_geometry(0).unwrap().measurements();
            let roots = candidate_distances(&truth, (0.1, 50.0));
            let d0 = user.norm();
            assert!(
                roots.iter().any(|r| (r - d0).abs() < 1e-6),
                "true distance {d0} missing from {roots:?} at {user:?}"
            );
        }
    }

    #[test]
    fn candidate_distances_expose_ghost_structure() {
        // In-prior uniqueness at [5,6,-5]: the second root is far outside.
        let sc = test_scene(Position3::new(5.0, 6.0, -5.0), 8);
        let truth = sc.path_geometry(0).unwrap().measurements();
        let near = candidate_distances(&truth, (0.1, 20.0));
        assert_eq!(near.len(), 1, "{near:?}");
        let wide = candidate_distances(&truth, (0.1, 200.0));
        assert!(wide.len() >= 2, "expected a far ghost, got {wide:?}");
        assert!(wide.iter().any(|d| *d > 20.0));

        // Grid search confirms the analytic ghost: both runs of low cost
        // sit around the analytic roots.
        let meas = Measurement {
            values: truth,
            covariance: SMatrix::zeros(),
            efim: Efim::identity(),
        };
        let wide_cfg = InitSearchConfig {
            user_prior: Aabb::new(
                Position3::new(0.0, 0.0, -80.0),
                Position3::new(70.0, 80.0, 0.0),
            )
            .unwrap(),
            yaw_prior: (-std::f64::consts::PI, std::f64::consts::PI),
            distance_step_m: 0.25,
            yaw_step_rad: 0.5f64.to_radians(),
        };
        let (_, surface) = initialize(
            &meas,
            &wide_cfg,
            &sc.bs_position,
            &EulerOrientation::yaw_only(0.0),
        )
        .unwrap();
        let runs = surface.low_cost_distance_runs(5e-3);
        assert!(runs.len() >= 2, "runs {runs:?}");
        for root in &wide {
            assert!(
                runs.iter().any(|(lo, hi)| *lo - 0.5 <= *root && *root <= *hi + 0.5),
                "analytic root {root} not inside any low-cost run {runs:?}"
            );
        }
    }

    #[test]
    fn initialize_recovers_noiseless_scene_to_grid_resolution() {
        let sc = test_scene(Position3::new(5.0, 6.0, -5.0), 8);
        let meas =
            synthesize_measurement(&sc, &plan_for(&sc, 3), 0, ToneAllocation::Interleaved, 0, true)
                .unwrap();
        let (state, surface) =
            initialize(&meas, &default_cfg(), &sc.bs_position, &sc.ris.orientation).unwrap();

        let d0_true = sc.users[0].position.norm();
        let d0_hat = (state.users[0].position - sc.bs_position).norm();
        assert!((d0_hat - d0_true).abs() <= 0.1 + 1e-9, "{d0_hat} vs {d0_true}");
        assert!(
            wrap_angle(state.ris_yaw - sc.ris.orientation.yaw).abs() <= 0.1f64.to_radians() + 1e-9
        );
        assert!((state.ris_position - sc.ris.position).norm() < 0.5);
        assert!(surface.min_cost() < 2e-2);

        // The grid cell nearest the truth is the global minimum.
        let di_true = surface
            .distances
            .iter()
            .enumerate()
            .min_by(|a, b| (a.1 - d0_true).abs().partial_cmp(&(b.1 - d0_true).abs()).unwrap())
            .unwrap()
            .0;
        assert!(surface.best.0.abs_diff(di_true) <= 1);
    }

    #[test]
    fn initialize_errors_when_ray_misses_prior() {
        let sc = test_scene(Position3::new(5.0, 6.0, -5.0), 8);
        let meas =
            synthesize_measurement(&sc, &plan_for(&sc, 3), 0, ToneAllocation::Interleaved, 0, true)
                .unwrap();
        let far_prior = InitSearchConfig::new(
            Aabb::new(Position3::new(-5.0, -5.0, 1.0), Position3::new(-1.0, -1.0, 2.0)).unwrap(),
            (-1.0, 1.0),
        );
        assert!(initialize(&meas, &far_prior, &sc.bs_position, &sc.ris.orientation).is_err());
    }

    #[test]
    fn gauss_newton_fixed_point_at_truth() {
        let sc = test_scene(Position3::new(5.0, 6.0, -5.0), 8);
        let meas =
            synthesize_measurement(&sc, &plan_for(&sc, 3), 0, ToneAllocation::Interleaved, 0, true)
                .unwrap();
        let truth = StateVector::from_scene(&sc);
        let result = gauss_newton_refine(&sc, &[meas], &truth, 30).unwrap();
        assert!(result.converged);
        assert_eq!(result.iterations, 1);
        assert_eq!(result.refined, truth);
    }

    #[test]
    fn gauss_newton_zero_noise_recovery_from_grid_init() {
        let sc = test_scene(Position3::new(5.0, 6.0, -5.0), 8);
        let plan = plan_for(&sc, 3);
        let meas =
            synthesize_measurement(&sc, &plan, 0, ToneAllocation::Interleaved, 0, true).unwrap();
        let (init, _) =
            initialize(&meas, &default_cfg(), &sc.bs_position, &sc.ris.orientation).unwrap();
        let result = gauss_newton_refine(&sc, &[meas], &init, 30).unwrap();
        assert!(result.converged);

        let truth = StateVector::from_scene(&sc);
        assert!((result.refined.ris_position - truth.ris_position).norm() < 1e-6);
        assert!(wrap_angle(result.refined.ris_yaw - truth.ris_yaw).abs() < 1e-6);
        assert!(
            (result.refined.users[0].position - truth.users[0].position).norm() < 1e-6
        );
        assert!(
            (result.refined.users[0].clock_offset - truth.users[0].clock_offset).abs()
                * SPEED_OF_LIGHT
                < 1e-6
        );
    }

    #[test]
    fn gauss_newton_cost_is_non_increasing() {
        let sc = test_scene(Position3::new(5.0, 6.0, -5.0), 8);
        let plan = plan_for(&sc, 3);
        let meas =
            synthesize_measurement(&sc, &plan, 0, ToneAllocation::Interleaved, 77, false).unwrap();
        let (init, _) =
            initialize(&meas, &default_cfg(), &sc.bs_position, &sc.ris.orientation).unwrap();
        let result = gauss_newton_refine(&sc, &[meas.clone()], &init, 30).unwrap();

        let cost_at = |state: &StateVector| -> f64 {
            let eta = state.apply_to(&sc).path_geometry(0).unwrap().measurements();
            let r = wrapped_residual(&meas, &eta);
            (r.transpose() * meas.efim * r)[0]
        };
        let costs: Vec<f64> = result.trace.iter().map(cost_at).collect();
        for pair in costs.windows(2) {
            assert!(pair[1] <= pair[0] * (1.0 + 1e-12), "cost went up: {costs:?}");
        }
    }

    #[test]
    fn multi_user_initialize_reduces_and_averages() {
        let sc = test_scene(Position3::new(5.0, 6.0, -5.0), 8);
        let plan = plan_for(&sc, 3);
        let meas =
            synthesize_measurement(&sc, &plan, 0, ToneAllocation::Interleaved, 0, true).unwrap();
        let cfg = default_cfg();

        let (single, _) = initialize(&meas, &cfg, &sc.bs_position, &sc.ris.orientation).unwrap();
        let (multi, surfaces) = multi_user_initialize(
            &[meas.clone()],
            &cfg,
            &sc.bs_position,
            &sc.ris.orientation,
        )
        .unwrap();
        assert_eq!(multi.ris_position, single.ris_position);
        assert_eq!(multi.users, single.users);
        assert_eq!(surfaces.len(), 1);

        let (two, _) = multi_user_initialize(
            &[meas.clone(), meas.clone()],
            &cfg,
            &sc.bs_position,
            &sc.ris.orientation,
        )
        .unwrap();
        assert_relative_eq!(two.ris_position, single.ris_position, max_relative = 1e-12);
        assert_relative_eq!(
            wrap_angle(two.ris_yaw - single.ris_yaw).abs(),
            0.0,
            epsilon = 1e-12
        );
        assert_eq!(two.users.len(), 2);
    }

    #[test]
    fn multi_user_zero_noise_end_to_end() {
        let mut sc = test_scene(Position3::new(5.0, 6.0, -5.0), 12);
        sc.users.push(UserState { position: Position3::new(7.0, 4.0, -4.0), clock_offset: 2e-8 });
        let plan = plan_for(&sc, 9);
        let opts = EstimationOptions { zero_noise: true, ..Default::default() };
        let result = estimate_scene(&sc, &plan, &default_cfg(), &opts).unwrap();
        assert!(result.converged);
        let truth = StateVector::from_scene(&sc);
        assert!((result.refined.ris_position - truth.ris_position).norm() < 1e-6);
        for m in 0..2 {
            assert!(
                (result.refined.users[m].position - truth.users[m].position).norm() < 1e-6,
                "user {m}"
            );
        }
    }

    #[test]
    fn estimate_scene_attaches_surface_only_on_request() {
        let sc = test_scene(Position3::new(5.0, 6.0, -5.0), 8);
        let plan = plan_for(&sc, 3);
        let bare = estimate_scene(
            &sc,
            &plan,
            &default_cfg(),
            &EstimationOptions { zero_noise: true, ..Default::default() },
        )
        .unwrap();
        assert!(bare.cost_surface.is_none());
        let with = estimate_scene(
            &sc,
            &plan,
            &default_cfg(),
            &EstimationOptions { zero_noise: true, keep_surface: true, ..Default::default() },
        )
        .unwrap();
        assert!(with.cost_surface.is_some());
    }

    /// Random healthy scenes: zero-noise estimation is exact to numerical
    /// convergence, the core identifiability property.
    #[test]
    fn zero_noise_identifiability_across_scenes() {
        let mut rng = ChaCha12Rng::seed_from_u64(99);
        let cfg = default_cfg();
        let mut checked = 0;
        while checked < 6 {
            let user = Position3::new(
                rng.gen_range(2.0..9.0),
                rng.gen_range(1.0..9.0),
                rng.gen_range(-8.0..-2.0),
            );
            let mut sc = test_scene(user, 10);
            // RIS on the y = 10 wall, yaw near -pi/2 so it faces the area.
            sc.ris = RisState {
                position: Position3::new(rng.gen_range(3.0..6.0), 10.0, rng.gen_range(-1.0..1.0)),
                orientation: EulerOrientation::yaw_only(
                    -std::f64::consts::FRAC_PI_2 + rng.gen_range(-0.8..0.8),
                ),
            };
            sc.users[0].clock_offset = rng.gen_range(0.0..3e-8);
            let plan = plan_for(&sc, rng.gen());

            // Skip blind, ambiguous, or non-facing geometries; they are the
            // complement of what this property promises.
            let pg = sc.path_geometry(0).unwrap();
            let rot_t = sc.ris_rotation().transpose();
            if (rot_t * -pg.t_br).x < 0.05 || (rot_t * pg.t_ru).x < 0.05 {
                continue;
            }
            let Ok(fim) = crate::fim::channel_fim(&sc, &plan, 0) else { continue };
            let Ok(efim) = effective_fim(&fim) else { continue };
            let Ok(jac) = state_jacobian(&sc, 0) else { continue };
            let is = state_fim(&efim, &jac);
            if is.singular {
                continue;
            }
            let truth_eta = pg.measurements();
            if candidate_distances(&truth_eta, (0.05, 25.0)).len() != 1 {
                continue;
            }

            let opts = EstimationOptions { zero_noise: true, ..Default::default() };
            let result = estimate_scene(&sc, &plan, &cfg, &opts).unwrap();
            assert!(result.converged, "scene {user:?}");
            let truth = StateVector::from_scene(&sc);
            assert!(
                (result.refined.ris_position - truth.ris_position).norm() < 1e-6,
                "ris at {user:?}"
            );
            assert!(wrap_angle(result.refined.ris_yaw - truth.ris_yaw).abs() < 1e-6);
            assert!(
                (result.refined.users[0].position - truth.users[0].position).norm() < 1e-6,
                "user at {user:?}"
            );
            assert!(
                (result.refined.users[0].clock_offset - truth.users[0].clock_offset).abs()
                    * SPEED_OF_LIGHT
                    < 1e-6
            );
            checked += 1;
        }
    }

    /// Monte Carlo law check on a healthy scene: the refined estimator's
    /// RMSE tracks the information bound from above.
    #[test]
    fn rmse_tracks_bounds_on_healthy_scene() {
        let mut sc = test_scene(Position3::new(5.0, 6.0, -5.0), 60);
        sc.ris_array = ArrayGeometry::square_half_wavelength(8, sc.waveform.wavelength_m());
        // Extra transmit power pushes the small-array scene into the
        // asymptotic regime where the error law is testable.
        sc.waveform.tx_power_dbm += 40.0;
        let plan = plan_for(&sc, 5);
        let efim = effective_fim(&crate::fim::channel_fim(&sc, &plan, 0).unwrap()).unwrap();
        let jac = state_jacobian(&sc, 0).unwrap();
        let bounds = extract_bounds(&multi_user_state_fim(&[(efim, jac)]).unwrap());
        assert!(!bounds.singular);
        let user_bound = bounds.user_position_m[0].unwrap();
        let ris_bound = bounds.ris_position_m.unwrap();

        let trials = 60;
        let cfg = default_cfg();
        let truth = StateVector::from_scene(&sc);
        let mut user_sq = 0.0;
        let mut ris_sq = 0.0;
        for t in 0..trials {
            let opts = EstimationOptions { seed: 1000 + t, ..Default::default() };
            let result = estimate_scene(&sc, &plan, &cfg, &opts).unwrap();
            user_sq += (result.refined.users[0].position - truth.users[0].position).norm_squared();
            ris_sq += (result.refined.ris_position - truth.ris_position).norm_squared();
        }
        let user_rmse = (user_sq / trials as f64).sqrt();
        let ris_rmse = (ris_sq / trials as f64).sqrt();

        // Above the bound (modulo Monte Carlo noise), and efficient enough
        // to stay within a modest factor of it.
        assert!(user_rmse > 0.8 * user_bound, "user rmse {user_rmse} vs bound {user_bound}");
        assert!(user_rmse < 1.6 * user_bound, "user rmse {user_rmse} vs bound {user_bound}");
        assert!(ris_rmse > 0.8 * ris_bound, "ris rmse {ris_rmse} vs bound {ris_bound}");
        assert!(ris_rmse < 1.6 * ris_bound, "ris rmse {ris_rmse} vs bound {ris_bound}");
    }
}
