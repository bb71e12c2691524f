//! Scratch probe: replay a non-converging Monte-Carlo trial and print the
//! Gauss-Newton cost/step trace for the stacked multi-user system.

use nalgebra::{DMatrix, DVector, SVector, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use riscal_core::channel::{make_sounding_plan, ToneAllocation};
use riscal_core::estimator::{
    estimate_scene, synthesize_measurement, wrap_angle, Aabb, EstimationOptions, InitSearchConfig,
    Measurement,
};
use riscal_core::fim::{state_jacobian, StateVector};
use riscal_core::geometry::{Position3, UserState};
use riscal_core::scene::Scenario;

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn stream_seed(master: u64, lane: u64, salt: u64) -> u64 {
    splitmix64(master ^ splitmix64(lane ^ splitmix64(salt)))
}

fn main() {
    let (m_users, t) = (3usize, 0u64);
    let master = 7u64;
    let base = Scenario::reference(&[Position3::new(8.0, 8.0, -5.0)]);
    let clock = base.users[0].clock_offset;
    let lane = ((m_users as u64) << 32) | t;
    let mut rng = ChaCha12Rng::seed_from_u64(stream_seed(master, lane, 1));
    let mut sc = base.clone();
    sc.users = (0..m_users)
        .map(|_| UserState {
            position: Position3::new(
                6.5 + rng.gen_range(0.0..3.0),
                5.5 + rng.gen_range(0.0..3.0),
                -5.0,
            ),
            clock_offset: clock,
        })
        .collect();
    for (m, u) in sc.users.iter().enumerate() {
        println!("user {m} truth: {:?}", u.position);
    }

    let plan = make_sounding_plan(
        master,
        sc.waveform.transmissions,
        sc.ris_array.element_count(),
        sc.bs_array.element_count(),
    );
    let search = InitSearchConfig::new(
        Aabb::new(Vector3::new(0.0, 0.0, -10.0), Vector3::new(10.0, 10.0, 0.0)).unwrap(),
        (-std::f64::consts::PI, std::f64::consts::PI),
    );
    let opts = EstimationOptions {
        alloc: ToneAllocation::Interleaved,
        max_iterations: 120,
        zero_noise: false,
        seed: stream_seed(master, lane, 2),
        keep_surface: false,
    };
    let result = estimate_scene(&sc, &plan, &search, &opts).unwrap();
    println!(
        "converged {} iterations {} trace len {}",
        result.converged,
        result.iterations,
        result.trace.len()
    );

    let measurements: Vec<Measurement> = (0..m_users)
        .map(|m| {
            synthesize_measurement(
                &sc,
                &plan,
                m,
                ToneAllocation::Interleaved,
                opts.seed ^ (m as u64).wrapping_mul(0xD1B5_4A32_D192_ED03),
                false,
            )
            .unwrap()
        })
        .collect();
    let residuals = |s: &StateVector| -> Vec<SVector<f64, 8>> {
        let scene = s.apply_to(&sc);
        (0..m_users)
            .map(|m| {
                let mu = scene.path_geometry(m).unwrap().measurements();
                let mut r = measurements[m].values - mu;
                for i in 0..5 {
                    r[i] = wrap_angle(r[i]);
                }
                r
            })
            .collect()
    };
    let cost_of = |rs: &[SVector<f64, 8>]| -> f64 {
        rs.iter()
            .zip(&measurements)
            .map(|(r, meas)| (r.transpose() * meas.efim * r)[0])
            .sum()
    };
    let cost_at = |s: &StateVector| cost_of(&residuals(s));

    let truth = StateVector::from_scene(&sc);
    println!("cost at truth: {:.6e}", cost_at(&truth));
    for (k, s) in result.trace.iter().enumerate() {
        println!(
            "iter {k:3}: cost {:.9e}  ris [{:.4}, {:.4}, {:.4}] yaw {:.5}",
            cost_at(s),
            s.ris_position.x,
            s.ris_position.y,
            s.ris_position.z,
            s.ris_yaw
        );
    }

    // Manual damped iteration at the stuck state.
    let last = result.trace.last().unwrap();
    let scene = last.apply_to(&sc);
    let n = 4 + 4 * m_users;
    let mut info = DMatrix::<f64>::zeros(n, n);
    let mut rhs = DVector::<f64>::zeros(n);
    let rs = residuals(last);
    let c0 = cost_of(&rs);
    for m in 0..m_users {
        let jac = state_jacobian(&scene, m).unwrap();
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
    println!("cost at stuck state: {:.12e}", c0);
    println!("condition of stacked info: {:.3e}", {
        let svd = info.clone().svd(false, false);
        svd.singular_values[0] / svd.singular_values[n - 1]
    });
    let sv = last.to_dvector();
    let mut lambda = 0.0f64;
    for attempt in 0..8 {
        let mut lhs = info.clone();
        if lambda > 0.0 {
            for i in 0..n {
                lhs[(i, i)] += lambda * info[(i, i)].abs().max(f64::MIN_POSITIVE);
            }
        }
        let solved = lhs.cholesky().map(|c| c.solve(&rhs));
        lambda = if lambda == 0.0 { 1e-6 } else { lambda * 10.0 };
        let Some(step) = solved else {
            println!("attempt {attempt}: factorization failed");
            continue;
        };
        let deltas: Vec<String> = (0..=10)
            .map(|k| {
                let cand = StateVector::from_dvector(&(&sv + &step * 0.5f64.powi(k))).unwrap();
                format!("{:+.1e}", cost_at(&cand) - c0)
            })
            .collect();
        println!(
            "attempt {attempt}: |step| {:.3e}  deltas by halving: {}",
            step.norm(),
            deltas.join(" ")
        );
    }
}
