//! Serial vs data-parallel evaluation of the grid-summed objective and its
//! gradient. The parallel path engages rayon only above a minimum grid size,
//! so the small cases also measure that dispatch overhead.

use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};

use beamflow_core::gradients::{grid_gradient, grid_gradient_seq};
use beamflow_core::model::{pattern_term, pattern_term_seq, AgentState, SampleGrid};
use beamflow_core::scenario::{random_agents, GainModel};
use beamflow_core::PhysicalConstants;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn fixture(theta_count: usize, rings: &[f64]) -> (Vec<AgentState>, SampleGrid, PhysicalConstants) {
    let constants = PhysicalConstants::from_frequency(40e6, 2.0);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let agents = random_agents(&mut rng, 5, 2.0 * constants.wavelength, GainModel::Fixed(1.0));
    let mut points = Vec::new();
    let mut targets = Vec::new();
    for (i, &rho) in rings.iter().enumerate() {
        for j in 0..theta_count {
            points.push((rho, 2.0 * std::f64::consts::PI * j as f64 / theta_count as f64));
            targets.push(0.5 + 0.1 * ((i + j) % 7) as f64);
        }
    }
    let grid = SampleGrid::new(points, targets).unwrap();
    (agents, grid, constants)
}

fn bench_grid_eval(c: &mut Criterion) {
    let cases = [("small", 36, vec![10.0, 15.0, 20.0]), ("large", 512, vec![2.5, 5.5, 8.75])];
    let mut group = c.benchmark_group("pattern_term");
    for (label, theta_count, rings) in &cases {
        let (agents, grid, constants) = fixture(*theta_count, rings);
        let d_min = 1e-3 * constants.wavelength;
        group.bench_with_input(BenchmarkId::new("parallel", label), &(), |b, _| {
            b.iter(|| pattern_term(black_box(&agents), &grid, &constants, d_min))
        });
        group.bench_with_input(BenchmarkId::new("sequential", label), &(), |b, _| {
            b.iter(|| pattern_term_seq(black_box(&agents), &grid, &constants, d_min))
        });
    }
    group.finish();

    let mut group = c.benchmark_group("grid_gradient");
    for (label, theta_count, rings) in &cases {
        let (agents, grid, constants) = fixture(*theta_count, rings);
        let d_min = 1e-3 * constants.wavelength;
        group.bench_with_input(BenchmarkId::new("parallel", label), &(), |b, _| {
            b.iter(|| grid_gradient(black_box(&agents), &grid, &constants, d_min))
        });
        group.bench_with_input(BenchmarkId::new("sequential", label), &(), |b, _| {
            b.iter(|| grid_gradient_seq(black_box(&agents), &grid, &constants, d_min))
        });
    }
    group.finish();
}

criterion_group!(benches, bench_grid_eval);
criterion_main!(benches);
