//! Scratch probe: reference-scene bound levels and condition numbers.

use riscal_core::channel::{make_sounding_plan, ArrayGeometry, ToneAllocation};
use riscal_core::fim::{bounds_report, channel_fim, effective_fim, state_fim, state_jacobian};
use riscal_core::geometry::Position3;
use riscal_core::scene::Scenario;

fn main() {
    for user in [[5.0, 6.0, -5.0], [9.0, 8.0, -5.0], [8.0, 8.0, -5.0]] {
        let sc = Scenario::reference(&[Position3::from(user)]);
        let plan = make_sounding_plan(
            7,
            sc.waveform.transmissions,
            sc.ris_array.element_count(),
            sc.bs_array.element_count(),
        );
        let fim = channel_fim(&sc, &plan, 0).unwrap();
        let efim = effective_fim(&fim).unwrap();
        let jac = state_jacobian(&sc, 0).unwrap();
        let is = state_fim(&efim, &jac);
        let b = bounds_report(&sc, &plan, ToneAllocation::Interleaved, &[]).unwrap();
        println!(
            "user {user:?}: cond {:.4e} singular {} ris {:?} orient {:?} user {:?} clock {:?}",
            is.condition, is.singular, b.ris_position_m, b.orientation_deg,
            b.user_position_m[0], b.clock_ns[0]
        );
    }

    println!("\nRIS-size sweep at [8,8,-5]:");
    for side in [2usize, 10, 20, 30] {
        let mut sc = Scenario::reference(&[Position3::new(8.0, 8.0, -5.0)]);
        sc.ris_array = ArrayGeometry::square_half_wavelength(side, sc.waveform.wavelength_m());
        let plan = make_sounding_plan(
            7,
            sc.waveform.transmissions,
            sc.ris_array.element_count(),
            sc.bs_array.element_count(),
        );
        let all = bounds_report(&sc, &plan, ToneAllocation::Interleaved, &[]).unwrap();
        let known_pry = bounds_report(&sc, &plan, ToneAllocation::Interleaved, &[0, 1, 2, 3]).unwrap();
        let known_or = bounds_report(&sc, &plan, ToneAllocation::Interleaved, &[3]).unwrap();
        let known_pu = bounds_report(&sc, &plan, ToneAllocation::Interleaved, &[4, 5, 6]).unwrap();
        println!(
            "N_R={:4}: bench(user {:.6?} ris {:.6?} or {:.6?} clk {:.6?}) knownpRy(user {:.6?}) knownoR(user {:.6?} ris {:.6?}) knownpU(ris {:.6?} or {:.6?}) cond {:.3e}",
            side * side,
            all.user_position_m[0], all.ris_position_m, all.orientation_deg, all.clock_ns[0],
            known_pry.user_position_m[0],
            known_or.user_position_m[0], known_or.ris_position_m,
            known_pu.ris_position_m, known_pu.orientation_deg,
            all.condition,
        );
    }
}
