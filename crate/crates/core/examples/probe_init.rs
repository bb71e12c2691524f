//! Scratch probe: enumerate zero-cost yaw candidates at the true direct-path
//! distance for a reference scene, to understand the init metric's yaw
//! ambiguity structure.

use nalgebra::Vector3;
use riscal_core::channel::{make_sounding_plan, ArrayGeometry, ToneAllocation};
use riscal_core::estimator::{synthesize_measurement, wrap_angle};
use riscal_core::geometry::{
    euler_to_rotation, local_direction_from_angles, AnglePair, EulerOrientation, Position3,
};
use riscal_core::scene::Scenario;
use riscal_core::SPEED_OF_LIGHT;

fn main() {
    let mut sc = Scenario::reference(&[Position3::new(5.0, 6.0, -5.0)]);
    let lam = sc.waveform.wavelength_m();
    sc.bs_array = ArrayGeometry::square_half_wavelength(4, lam);
    sc.ris_array = ArrayGeometry::square_half_wavelength(6, lam);
    sc.waveform.transmissions = 8;
    let plan = make_sounding_plan(
        3,
        sc.waveform.transmissions,
        sc.ris_array.element_count(),
        sc.bs_array.element_count(),
    );
    let meas = synthesize_measurement(&sc, &plan, 0, ToneAllocation::Interleaved, 0, true).unwrap();
    let v = &meas.values;
    println!("truth yaw {:.6}", sc.ris.orientation.yaw);
    println!("measured dirsum ({:.6}, {:.6})", v[4], v[5]);

    let t_bu = local_direction_from_angles(&AnglePair { azimuth: v[0], elevation: v[1] });
    let t_br = local_direction_from_angles(&AnglePair { azimuth: v[2], elevation: v[3] });
    let d0 = sc.users[0].position.norm();
    let beta = v[6] - d0 / SPEED_OF_LIGHT;
    let p_u = sc.bs_position + t_bu * d0;
    let d_r = (v[7] - beta) * SPEED_OF_LIGHT;
    let p_r = riscal_core::estimator::ellipsoid_ray_intersect(&sc.bs_position, &p_u, d_r, &t_br)
        .unwrap();
    println!("candidate p_r {:?} (true {:?})", p_r, sc.ris.position);

    let to_user: Vector3<f64> = p_u - p_r;
    let t_sum = -t_br + to_user / to_user.norm();
    println!("t_sum global {:?}", t_sum);

    let m_t = euler_to_rotation(&EulerOrientation { yaw: 0.0, ..sc.ris.orientation }).transpose();
    let mut zero_yaws = vec![];
    for i in 0..36000 {
        let yaw = -std::f64::consts::PI + i as f64 * (2.0 * std::f64::consts::PI / 36000.0);
        let (sy, cy) = yaw.sin_cos();
        let rotated = Vector3::new(
            cy * t_sum.x + sy * t_sum.y,
            -sy * t_sum.x + cy * t_sum.y,
            t_sum.z,
        );
        let local = m_t * rotated;
        let delta = (local.y - v[4]).hypot(local.z - v[5]);
        if delta < 2e-4 {
            zero_yaws.push((yaw, delta, local.x));
        }
    }
    // Collapse to local minima clusters.
    println!("near-zero cells: {}", zero_yaws.len());
    let mut last = f64::NEG_INFINITY;
    for (yaw, delta, lx) in &zero_yaws {
        if yaw - last > 0.01 {
            println!("  cluster at yaw {:.5} delta {:.2e} local.x {:.5} (err to truth {:.5})",
                yaw, delta, lx, wrap_angle(yaw - sc.ris.orientation.yaw));
        }
        last = *yaw;
    }
}
