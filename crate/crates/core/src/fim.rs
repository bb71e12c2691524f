//! Fisher-information pipeline: channel-parameter FIM, effective FIM over
//! the geometric parameters, state Jacobian, single- and multi-user state
//! FIMs, and the per-block lower bounds extracted from them.
//!
//! Parameter ordering follows [`ChannelParams`]; the state is ordered
//! [p_R, o3, p_U, beta] for one user and [p_R, o3, p_U1, beta1, p_U2, ...]
//! for several. Information matrices accumulate in a fixed sequential order
//! so repeated runs are reproducible bit for bit.

use nalgebra::{Cholesky, DMatrix, DVector, Matrix3, SMatrix, SVector, Vector3};
use num_complex::Complex64;

use crate::channel::{
    noise_variance_mw, pilot_energy_mw, ChannelGains, SoundingPlan,
};
use crate::geometry::{AnglePair, Position3, UserState};
use crate::scene::Scenario;
use crate::{Error, Result, SPEED_OF_LIGHT};

pub type ChannelFim = SMatrix<f64, 12, 12>;
pub type Efim = SMatrix<f64, 8, 8>;
pub type StateJacobian = SMatrix<f64, 12, 8>;

/// Scenes whose Jacobi-scaled state FIM conditions worse than this are
/// reported as blind: bounds become infinite instead of numbers dominated
/// by roundoff.
pub const BLIND_CONDITION_THRESHOLD: f64 = 1e12;

/// Delay-phase category of each channel parameter: 0 direct path, 1
/// reflected path, 2 direct-path delay, 3 reflected-path delay.
const CAT: [usize; 12] = [0, 0, 1, 1, 1, 1, 2, 3, 0, 1, 0, 1];

/// Channel-parameter vector: eight geometric measurements followed by the
/// four gain nuisances, ordered [phi_BU, theta_BU, phi_BR, theta_BR,
/// dirsum_y, dirsum_z, tau_BU, tau_R, rho_BU, rho_R, xi_BU, xi_R].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelParams {
    pub geometric: SVector<f64, 8>,
    pub gains: ChannelGains,
}

impl ChannelParams {
    pub fn from_scene(scene: &Scenario, user: usize) -> Result<Self> {
        Ok(Self {
            geometric: scene.path_geometry(user)?.measurements(),
            gains: scene.gains(user)?,
        })
    }

    pub fn to_vector(&self) -> SVector<f64, 12> {
        let g = self.gains.as_parts();
        let mut v = SVector::<f64, 12>::zeros();
        v.fixed_rows_mut::<8>(0).copy_from(&self.geometric);
        v[8] = g[0];
        v[9] = g[1];
        v[10] = g[2];
        v[11] = g[3];
        v
    }
}

/// State FIM with its Jacobi-scaled condition number and blind flag.
#[derive(Debug, Clone, PartialEq)]
pub struct StateFim {
    pub matrix: DMatrix<f64>,
    pub condition: f64,
    pub singular: bool,
}

impl StateFim {
    pub fn new(matrix: DMatrix<f64>) -> Self {
        let condition = scaled_condition(&matrix);
        let singular = !condition.is_finite() || condition > BLIND_CONDITION_THRESHOLD;
        Self { matrix, condition, singular }
    }

    pub fn users(&self) -> usize {
        (self.matrix.nrows() - 4) / 4
    }
}

/// Square-root lower bounds per state block. `None` marks a block whose
/// parameters were all removed as known; singular scenes report infinity.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockBounds {
    pub singular: bool,
    /// Condition number of the (reduced, Jacobi-scaled) state FIM.
    pub condition: f64,
    pub ris_position_m: Option<f64>,
    pub orientation_deg: Option<f64>,
    pub user_position_m: Vec<Option<f64>>,
    pub clock_ns: Vec<Option<f64>>,
}

impl BlockBounds {
    /// All-infinite report for a blind scene.
    pub fn blind(users: usize, known: &[usize]) -> Self {
        let block = |idx: &[usize]| {
            if idx.iter().all(|i| known.contains(i)) {
                None
            } else {
                Some(f64::INFINITY)
            }
        };
        BlockBounds {
            singular: true,
            condition: f64::INFINITY,
            ris_position_m: block(&[0, 1, 2]),
            orientation_deg: block(&[3]),
            user_position_m: (0..users)
                .map(|m| block(&[4 + 4 * m, 5 + 4 * m, 6 + 4 * m]))
                .collect(),
            clock_ns: (0..users).map(|m| block(&[7 + 4 * m])).collect(),
        }
    }
}

/// Unknown state: shared RIS pose (position + yaw) and one position/clock
/// pair per user; vectorized as [p_R, o3, p_U1, beta1, p_U2, ...].
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    pub ris_position: Position3,
    pub ris_yaw: f64,
    pub users: Vec<UserState>,
}

impl StateVector {
    pub fn from_scene(scene: &Scenario) -> Self {
        Self {
            ris_position: scene.ris.position,
            ris_yaw: scene.ris.orientation.yaw,
            users: scene.users.clone(),
        }
    }

    pub fn dim(&self) -> usize {
        4 + 4 * self.users.len()
    }

    pub fn to_dvector(&self) -> DVector<f64> {
        let mut v = DVector::zeros(self.dim());
        v[0] = self.ris_position.x;
        v[1] = self.ris_position.y;
        v[2] = self.ris_position.z;
        v[3] = self.ris_yaw;
        for (m, u) in self.users.iter().enumerate() {
            let off = 4 + 4 * m;
            v[off] = u.position.x;
            v[off + 1] = u.position.y;
            v[off + 2] = u.position.z;
            v[off + 3] = u.clock_offset;
        }
        v
    }

    pub fn from_dvector(v: &DVector<f64>) -> Result<Self> {
        if v.len() < 8 || v.len() % 4 != 0 {
            return Err(Error::DimensionMismatch { expected: 8, got: v.len() });
        }
        let users = (0..(v.len() - 4) / 4)
            .map(|m| {
                let off = 4 + 4 * m;
                UserState {
                    position: Position3::new(v[off], v[off + 1], v[off + 2]),
                    clock_offset: v[off + 3],
                }
            })
            .collect();
        Ok(Self {
            ris_position: Position3::new(v[0], v[1], v[2]),
            ris_yaw: v[3],
            users,
        })
    }

    /// Scenario at this state: RIS pose and users replaced, everything else
    /// (waveform, arrays, mounting pitch/roll, gain seed) from `base`.
    pub fn apply_to(&self, base: &Scenario) -> Scenario {
        let mut scene = base.clone();
        scene.ris.position = self.ris_position;
        scene.ris.orientation.yaw = self.ris_yaw;
        scene.users = self.users.clone();
        scene
    }
}

/// Per-path element-space vectors that do not depend on the transmission
/// index: steering vectors and their parameter-derivative weights.
struct PathTerms {
    a_bu: Vec<Complex64>,
    a_bu_dphi: Vec<Complex64>,
    a_bu_dth: Vec<Complex64>,
    a_br: Vec<Complex64>,
    a_br_dphi: Vec<Complex64>,
    a_br_dth: Vec<Complex64>,
    a_r: Vec<Complex64>,
    a_r_d2: Vec<Complex64>,
    a_r_d3: Vec<Complex64>,
    alpha_bu: Complex64,
    alpha_r: Complex64,
    tau_bu: f64,
    tau_r: f64,
    spacing_hz: f64,
}

/// Per-transmission inner products of the sounding weights with the path
/// terms; everything the gradient needs besides the subcarrier phase.
struct GInner {
    a: Complex64,
    a_phi: Complex64,
    a_th: Complex64,
    b: Complex64,
    b_phi: Complex64,
    b_th: Complex64,
    c: Complex64,
    c2: Complex64,
    c3: Complex64,
}

fn dot(w: &[Complex64], v: &[Complex64]) -> Complex64 {
    w.iter().zip(v.iter()).map(|(a, b)| a * b).sum()
}

/// Derivatives of the azimuth/elevation of unit(p - q) with respect to p.
fn angle_position_derivatives(a: &AnglePair, d: f64) -> Result<(Vector3<f64>, Vector3<f64>)> {
    let (s_az, c_az) = a.azimuth.sin_cos();
    let (s_el, c_el) = a.elevation.sin_cos();
    if c_el.abs() < 1e-12 {
        return Err(Error::SingularScene);
    }
    let d_az = Vector3::new(-s_az, c_az, 0.0) / (d * c_el);
    let d_el = Vector3::new(-c_az * s_el, -s_az * s_el, c_el) / d;
    Ok((d_az, d_el))
}

/// Derivative of the direction vector [cos(az)cos(el), sin(az)cos(el),
/// sin(el)] with respect to each angle.
fn direction_angle_derivatives(a: &AnglePair) -> (Vector3<f64>, Vector3<f64>) {
    let (s_az, c_az) = a.azimuth.sin_cos();
    let (s_el, c_el) = a.elevation.sin_cos();
    (
        Vector3::new(-s_az * c_el, c_az * c_el, 0.0),
        Vector3::new(-c_az * s_el, -s_az * s_el, c_el),
    )
}

impl PathTerms {
    fn new(scene: &Scenario, user: usize) -> Result<Self> {
        let geo = scene.path_geometry(user)?;
        let gains = scene.gains(user)?;
        let lam = scene.waveform.wavelength_m();
        let kappa = 2.0 * std::f64::consts::PI / lam;
        let j = Complex64::new(0.0, 1.0);

        let pb = scene.bs_array.element_positions();
        let pr = scene.ris_array.element_positions();
        let dir_sum = Vector3::new(geo.dir_sum.first, geo.dir_sum.second, geo.dir_sum.third);

        let (dbu_phi, dbu_th) = direction_angle_derivatives(&geo.bu_angles);
        let (dbr_phi, dbr_th) = direction_angle_derivatives(&geo.br_angles);

        let steer = |elems: &[Vector3<f64>], t: &Vector3<f64>| -> Vec<Complex64> {
            elems.iter().map(|p| Complex64::from_polar(1.0, kappa * p.dot(t))).collect()
        };
        let a_bu = steer(&pb, &geo.t_bu);
        let a_br = steer(&pb, &geo.t_br);
        let a_r = steer(&pr, &dir_sum);

        let weight = |elems: &[Vector3<f64>], base: &[Complex64], dir: &Vector3<f64>| {
            elems
                .iter()
                .zip(base.iter())
                .map(|(p, a)| j * kappa * p.dot(dir) * a)
                .collect::<Vec<_>>()
        };
        let a_bu_dphi = weight(&pb, &a_bu, &dbu_phi);
        let a_bu_dth = weight(&pb, &a_bu, &dbu_th);
        let a_br_dphi = weight(&pb, &a_br, &dbr_phi);
        let a_br_dth = weight(&pb, &a_br, &dbr_th);
        let a_r_d2: Vec<Complex64> =
            pr.iter().zip(a_r.iter()).map(|(p, a)| j * kappa * p.y * a).collect();
        let a_r_d3: Vec<Complex64> =
            pr.iter().zip(a_r.iter()).map(|(p, a)| j * kappa * p.z * a).collect();

        Ok(Self {
            a_bu,
            a_bu_dphi,
            a_bu_dth,
            a_br,
            a_br_dphi,
            a_br_dth,
            a_r,
            a_r_d2,
            a_r_d3,
            alpha_bu: gains.alpha_bu,
            alpha_r: gains.alpha_r,
            tau_bu: geo.tau_bu,
            tau_r: geo.tau_r,
            spacing_hz: scene.waveform.subcarrier_spacing_hz(),
        })
    }

    fn per_g(&self, plan: &SoundingPlan, g: usize) -> Result<GInner> {
        let w = plan
            .combiners
            .get(g)
            .ok_or(Error::DimensionMismatch { expected: plan.transmissions(), got: g })?;
        let om = &plan.ris_profiles[g];
        if w.len() != self.a_bu.len() {
            return Err(Error::DimensionMismatch { expected: self.a_bu.len(), got: w.len() });
        }
        if om.len() != self.a_r.len() {
            return Err(Error::DimensionMismatch { expected: self.a_r.len(), got: om.len() });
        }
        Ok(GInner {
            a: dot(w, &self.a_bu),
            a_phi: dot(w, &self.a_bu_dphi),
            a_th: dot(w, &self.a_bu_dth),
            b: dot(w, &self.a_br),
            b_phi: dot(w, &self.a_br_dphi),
            b_th: dot(w, &self.a_br_dth),
            c: dot(om, &self.a_r),
            c2: dot(om, &self.a_r_d2),
            c3: dot(om, &self.a_r_d3),
        })
    }

    /// Subcarrier-independent gradient factors, one per channel parameter.
    fn u_row(&self, inner: &GInner) -> [Complex64; 12] {
        let j = Complex64::new(0.0, 1.0);
        let bu = self.alpha_bu;
        let r = self.alpha_r;
        [
            bu * inner.a_phi,
            bu * inner.a_th,
            r * inner.b_phi * inner.c,
            r * inner.b_th * inner.c,
            r * inner.b * inner.c2,
            r * inner.b * inner.c3,
            bu * inner.a,
            r * inner.b * inner.c,
            inner.a,
            inner.b * inner.c,
            j * inner.a,
            j * inner.b * inner.c,
        ]
    }
}

/// Analytic gradient of the unit-pilot noise-free symbol with respect to
/// the 12 channel parameters at transmission `g`, subcarrier `k`. Pilot
/// energy enters through the FIM prefactor, not here.
pub fn mu_gradient(
    scene: &Scenario,
    plan: &SoundingPlan,
    user: usize,
    g: usize,
    k: usize,
) -> Result<SVector<Complex64, 12>> {
    let terms = PathTerms::new(scene, user)?;
    let row = terms.u_row(&terms.per_g(plan, g)?);
    let psi = 2.0 * std::f64::consts::PI * terms.spacing_hz * k as f64;
    let phases = delay_phases(psi, terms.tau_bu, terms.tau_r);
    let mut out = SVector::<Complex64, 12>::zeros();
    for i in 0..12 {
        out[i] = row[i] * phases[CAT[i]] * plan.pilot;
    }
    Ok(out)
}

/// Delay phase per parameter category at angular frequency offset `psi`.
fn delay_phases(psi: f64, tau_bu: f64, tau_r: f64) -> [Complex64; 4] {
    let j = Complex64::new(0.0, 1.0);
    let d_bu = Complex64::from_polar(1.0, -psi * tau_bu);
    let d_r = Complex64::from_polar(1.0, -psi * tau_r);
    [d_bu, d_r, -j * psi * d_bu, -j * psi * d_r]
}

/// Channel-parameter FIM over an explicit subcarrier comb with explicit
/// per-tone pilot energy and noise power (both mW).
pub fn channel_fim_comb(
    scene: &Scenario,
    plan: &SoundingPlan,
    user: usize,
    tones: &[usize],
    energy_mw: f64,
    noise_mw: f64,
) -> Result<ChannelFim> {
    if noise_mw <= 0.0 {
        return Err(Error::InvalidConfig("noise power must be positive".into()));
    }
    if energy_mw < 0.0 {
        return Err(Error::InvalidConfig("pilot energy must be nonnegative".into()));
    }
    let terms = PathTerms::new(scene, user)?;
    let transmissions = plan.transmissions();

    let mut ug = [[Complex64::new(0.0, 0.0); 12]; 12];
    for g in 0..transmissions {
        let row = terms.u_row(&terms.per_g(plan, g)?);
        for i in 0..12 {
            for jj in i..12 {
                ug[i][jj] += row[i].conj() * row[jj];
            }
        }
    }

    // 4x4 delay-phase Gramian over the comb; the common unit-modulus direct
    // phase cancels, leaving only the excess reflected delay.
    let dtau = terms.tau_r - terms.tau_bu;
    let j = Complex64::new(0.0, 1.0);
    let mut v = [[Complex64::new(0.0, 0.0); 4]; 4];
    for &k in tones {
        let psi = 2.0 * std::f64::consts::PI * terms.spacing_hz * k as f64;
        let e = Complex64::from_polar(1.0, -psi * dtau);
        let vk = [Complex64::new(1.0, 0.0), e, -j * psi, -j * psi * e];
        for a in 0..4 {
            for b in a..4 {
                v[a][b] += vk[a].conj() * vk[b];
            }
        }
    }
    for a in 0..4 {
        for b in 0..a {
            v[a][b] = v[b][a].conj();
        }
    }

    let scale = 2.0 * energy_mw / noise_mw;
    let mut fim = ChannelFim::zeros();
    for i in 0..12 {
        for jj in i..12 {
            let val = scale * (ug[i][jj] * v[CAT[i]][CAT[jj]]).re;
            fim[(i, jj)] = val;
            fim[(jj, i)] = val;
        }
    }
    Ok(fim)
}

/// Channel-parameter FIM for a single user occupying all subcarriers.
pub fn channel_fim(scene: &Scenario, plan: &SoundingPlan, user: usize) -> Result<ChannelFim> {
    let tones: Vec<usize> = (0..scene.waveform.subcarriers).collect();
    channel_fim_comb(
        scene,
        plan,
        user,
        &tones,
        pilot_energy_mw(&scene.waveform, tones.len()),
        noise_variance_mw(&scene.waveform),
    )
}

/// Effective FIM of the eight geometric parameters: Schur complement of the
/// gain-nuisance block.
pub fn effective_fim(fim: &ChannelFim) -> Result<Efim> {
    let a = fim.fixed_view::<8, 8>(0, 0).into_owned();
    let b = fim.fixed_view::<8, 4>(0, 8).into_owned();
    let d = fim.fixed_view::<4, 4>(8, 8).into_owned();
    let chol = Cholesky::new(d).ok_or(Error::SingularScene)?;
    let x = chol.solve(&b.transpose());
    let s = a - b * x;
    Ok((s + s.transpose()) * 0.5)
}

/// Jacobian of the 12 channel parameters with respect to the single-user
/// state [p_R, o3, p_U, beta]; the four gain rows are zero.
pub fn state_jacobian(scene: &Scenario, user: usize) -> Result<StateJacobian> {
    let geo = scene.path_geometry(user)?;
    let mut jac = StateJacobian::zeros();

    let (dphi_bu, dth_bu) = angle_position_derivatives(&geo.bu_angles, geo.d_bu)?;
    let (dphi_br, dth_br) = angle_position_derivatives(&geo.br_angles, geo.d_br)?;
    for c in 0..3 {
        jac[(0, 4 + c)] = dphi_bu[c];
        jac[(1, 4 + c)] = dth_bu[c];
        jac[(2, c)] = dphi_br[c];
        jac[(3, c)] = dth_br[c];
    }

    // Direction-sum rows: ts = R^T (t_RB + t_RU) with R = Rz(yaw) * M and M
    // the fixed pitch/roll mounting.
    let r = scene.ris_rotation();
    let t_rb = -geo.t_br;
    let proj = |t: &Vector3<f64>, d: f64| (Matrix3::identity() - t * t.transpose()) / d;
    let p_rb = proj(&t_rb, geo.d_br);
    let p_ru = proj(&geo.t_ru, geo.d_ru);
    let dts_dpr = -r.transpose() * (p_rb + p_ru);
    let dts_dpu = r.transpose() * p_ru;

    let (sy, cy) = scene.ris.orientation.yaw.sin_cos();
    let drz = Matrix3::new(-sy, -cy, 0.0, cy, -sy, 0.0, 0.0, 0.0, 0.0);
    let mounting = crate::geometry::euler_to_rotation(&crate::geometry::EulerOrientation {
        yaw: 0.0,
        ..scene.ris.orientation
    });
    let dts_do3 = mounting.transpose() * drz.transpose() * (t_rb + geo.t_ru);

    for c in 0..3 {
        jac[(4, c)] = dts_dpr[(1, c)];
        jac[(5, c)] = dts_dpr[(2, c)];
        jac[(4, 4 + c)] = dts_dpu[(1, c)];
        jac[(5, 4 + c)] = dts_dpu[(2, c)];
    }
    jac[(4, 3)] = dts_do3[1];
    jac[(5, 3)] = dts_do3[2];

    for c in 0..3 {
        jac[(6, 4 + c)] = geo.t_bu[c] / SPEED_OF_LIGHT;
        jac[(7, c)] = (geo.t_br[c] - geo.t_ru[c]) / SPEED_OF_LIGHT;
        jac[(7, 4 + c)] = geo.t_ru[c] / SPEED_OF_LIGHT;
    }
    jac[(6, 7)] = 1.0;
    jac[(7, 7)] = 1.0;
    Ok(jac)
}

/// Single-user state FIM: congruence of the effective FIM with the
/// geometric rows of the state Jacobian.
pub fn state_fim(efim: &Efim, jac: &StateJacobian) -> StateFim {
    multi_user_state_fim(&[(*efim, *jac)]).expect("one user is always a valid stack")
}

/// Multi-user state FIM over [p_R, o3, p_U1, beta1, ...]: per-user
/// information embeds into the shared RIS block and the user's own block.
pub fn multi_user_state_fim(parts: &[(Efim, StateJacobian)]) -> Result<StateFim> {
    if parts.is_empty() {
        return Err(Error::InvalidConfig("at least one user required".into()));
    }
    let n = 4 + 4 * parts.len();
    let mut big = DMatrix::<f64>::zeros(n, n);
    for (m, (efim, jac)) in parts.iter().enumerate() {
        let j8 = jac.fixed_view::<8, 8>(0, 0).into_owned();
        let f = j8.transpose() * efim * j8;
        let off = 4 + 4 * m;
        for i in 0..4 {
            for jj in 0..4 {
                big[(i, jj)] += f[(i, jj)];
                big[(i, off + jj)] += f[(i, 4 + jj)];
                big[(off + i, jj)] += f[(4 + i, jj)];
                big[(off + i, off + jj)] += f[(4 + i, 4 + jj)];
            }
        }
    }
    Ok(StateFim::new(big))
}

/// Condition number of the Jacobi-scaled matrix.
fn scaled_condition(m: &DMatrix<f64>) -> f64 {
    let (scaled, _) = jacobi_scale(m);
    let sv = scaled.singular_values();
    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    for v in sv.iter() {
        lo = lo.min(*v);
        hi = hi.max(*v);
    }
    if !(lo.is_finite() && hi.is_finite()) || lo <= 0.0 {
        f64::INFINITY
    } else {
        hi / lo
    }
}

fn jacobi_scale(m: &DMatrix<f64>) -> (DMatrix<f64>, Vec<f64>) {
    let n = m.nrows();
    let s: Vec<f64> = (0..n)
        .map(|i| {
            let d = m[(i, i)].abs().sqrt();
            if d > 0.0 {
                1.0 / d
            } else {
                1.0
            }
        })
        .collect();
    let mut out = m.clone();
    for i in 0..n {
        for j in 0..n {
            out[(i, j)] *= s[i] * s[j];
        }
    }
    (out, s)
}

/// Inverse computed through Jacobi pre-scaling, with the condition number
/// of the scaled matrix. The inverse is `None` when inversion fails.
pub(crate) fn scaled_inverse(m: &DMatrix<f64>) -> (f64, Option<DMatrix<f64>>) {
    let (scaled, s) = jacobi_scale(m);
    let cond = scaled_condition(m);
    let inv = scaled.try_inverse().map(|mut inv| {
        let n = inv.nrows();
        for i in 0..n {
            for j in 0..n {
                inv[(i, j)] *= s[i] * s[j];
            }
        }
        inv
    });
    (cond, inv)
}

/// Bounds with a subset of state entries assumed perfectly known: those
/// rows and columns are deleted before inversion.
pub fn known_state_bounds(state: &StateFim, known: &[usize]) -> BlockBounds {
    let n = state.matrix.nrows();
    let users = state.users();
    let keep: Vec<usize> = (0..n).filter(|i| !known.contains(i)).collect();
    if keep.is_empty() {
        return BlockBounds {
            singular: false,
            condition: 1.0,
            ris_position_m: None,
            orientation_deg: None,
            user_position_m: vec![None; users],
            clock_ns: vec![None; users],
        };
    }

    let reduced = DMatrix::from_fn(keep.len(), keep.len(), |i, j| state.matrix[(keep[i], keep[j])]);
    let (cond, inv) = scaled_inverse(&reduced);
    let singular = !cond.is_finite() || cond > BLIND_CONDITION_THRESHOLD || inv.is_none();
    if singular {
        let mut out = BlockBounds::blind(users, known);
        out.condition = cond;
        return out;
    }
    let cov = inv.expect("checked above");

    let mut new_index = vec![None; n];
    for (pos, &orig) in keep.iter().enumerate() {
        new_index[orig] = Some(pos);
    }
    let block = |idx: &[usize]| -> Option<f64> {
        let present: Vec<usize> = idx.iter().filter_map(|&i| new_index[i]).collect();
        if present.is_empty() {
            None
        } else {
            Some(present.iter().map(|&p| cov[(p, p)]).sum::<f64>().sqrt())
        }
    };

    BlockBounds {
        singular: false,
        condition: cond,
        ris_position_m: block(&[0, 1, 2]),
        orientation_deg: block(&[3]).map(f64::to_degrees),
        user_position_m: (0..users).map(|m| block(&[4 + 4 * m, 5 + 4 * m, 6 + 4 * m])).collect(),
        clock_ns: (0..users).map(|m| block(&[7 + 4 * m]).map(|v| v * 1e9)).collect(),
    }
}

/// Bounds over the full state.
pub fn extract_bounds(state: &StateFim) -> BlockBounds {
    known_state_bounds(state, &[])
}

/// Full pipeline for one scenario: per-user channel FIMs on their OFDMA
/// combs, effective FIMs, state FIM, bounds. Blind scenes come back as an
/// infinite report rather than an error.
pub fn bounds_report(
    scene: &Scenario,
    plan: &SoundingPlan,
    alloc: crate::channel::ToneAllocation,
    known: &[usize],
) -> Result<BlockBounds> {
    scene.validate()?;
    let users = scene.users.len();
    let k = scene.waveform.subcarriers;
    let noise = noise_variance_mw(&scene.waveform);
    let mut parts = Vec::with_capacity(users);
    for m in 0..users {
        let tones = crate::channel::user_tones(alloc, k, users, m);
        let energy = pilot_energy_mw(&scene.waveform, tones.len());
        let stage = scene
            .path_geometry(m)
            .and_then(|_| channel_fim_comb(scene, plan, m, &tones, energy, noise))
            .and_then(|fim| Ok((effective_fim(&fim)?, state_jacobian(scene, m)?)));
        match stage {
            Ok(part) => parts.push(part),
            Err(Error::SingularScene) => return Ok(BlockBounds::blind(users, known)),
            Err(e) => return Err(e),
        }
    }
    Ok(known_state_bounds(&multi_user_state_fim(&parts)?, known))
}
