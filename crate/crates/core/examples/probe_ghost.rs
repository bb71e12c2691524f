//! Scratch probe: check whether the in-prior ghost at the reference user
//! reproduces the full measurement vector, and scan the MC user area for
//! multi-root scenes.

use nalgebra::Vector3;
use riscal_core::estimator::{candidate_distances, ray_box_distance_range, Aabb};
use riscal_core::geometry::Position3;
use riscal_core::scene::Scenario;

fn main() {
    let truth = Scenario::reference(&[Position3::new(8.0, 8.0, -5.0)]);
    let mu_true = truth.path_geometry(0).unwrap().measurements();

    let mut ghost = truth.clone();
    ghost.ris.position = Position3::new(4.357657039673194, 10.894142599182993, 0.0);
    ghost.ris.orientation.yaw = -1.5343529134001896;
    ghost.users[0].position = Position3::new(
        9.360892900038701,
        9.360892900038701,
        -5.850558062524189,
    );
    ghost.users[0].clock_offset = 2.98126292588466e-9;
    let mu_ghost = ghost.path_geometry(0).unwrap().measurements();

    println!("component-wise |ghost - truth|:");
    for i in 0..8 {
        println!(
            "  [{}] true {:+.12e}  ghost {:+.12e}  diff {:.3e}",
            i,
            mu_true[i],
            mu_ghost[i],
            (mu_ghost[i] - mu_true[i]).abs()
        );
    }

    let prior = Aabb::new(
        Vector3::new(0.0, 0.0, -10.0),
        Vector3::new(10.0, 10.0, 0.0),
    )
    .unwrap();

    println!("\nroot counts over the MC user area (corner [6.5,5.5,-5], side 3):");
    let mut hist = [0usize; 4];
    let mut examples: Vec<(f64, f64, Vec<f64>)> = Vec::new();
    let n = 13;
    for i in 0..n {
        for j in 0..n {
            let x = 6.5 + 3.0 * i as f64 / (n - 1) as f64;
            let y = 5.5 + 3.0 * j as f64 / (n - 1) as f64;
            let mut sc = truth.clone();
            sc.users[0].position = Position3::new(x, y, -5.0);
            let mu = sc.path_geometry(0).unwrap().measurements();
            let t_bu = Vector3::new(
                mu[1].cos() * mu[0].cos(),
                mu[1].cos() * mu[0].sin(),
                mu[1].sin(),
            );
            let range = ray_box_distance_range(&truth.bs_position, &t_bu, &prior).unwrap();
            let roots = candidate_distances(&mu, range);
            let k = roots.len().min(3);
            hist[k] += 1;
            if k >= 2 && examples.len() < 8 {
                examples.push((x, y, roots));
            }
        }
    }
    println!("  0 roots: {}  1 root: {}  2 roots: {}  3+: {}", hist[0], hist[1], hist[2], hist[3]);
    for (x, y, roots) in examples {
        println!("  multi-root at ({:.2}, {:.2}): {:?}", x, y, roots);
    }
}
