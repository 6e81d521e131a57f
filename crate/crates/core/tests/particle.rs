//! Particle-filter consistency against the exact filter.

use declab::filtering::{run_filter, ParticleEnsemble, particle_update};
use declab::processes::{build_model, sample_path, ModelSpec, ProcessModel};
use declab::rng::strategy_rng;

fn three_state() -> ModelSpec {
    ModelSpec::FiniteHmm {
        transition: vec![
            vec![0.5, 0.3, 0.2],
            vec![0.1, 0.6, 0.3],
            vec![0.3, 0.2, 0.5],
        ],
        observation: vec![
            vec![0.7, 0.2, 0.1],
            vec![0.15, 0.7, 0.15],
            vec![0.1, 0.3, 0.6],
        ],
    }
}

/// Mean-over-time TV distance between the particle occupancy and the exact
/// filter along one path.
fn mean_tv(model: &ProcessModel, horizon: usize, n_particles: usize, seed: u64) -> f64 {
    let hmm = model.finite_hmm().unwrap();
    let path = sample_path(model, horizon, 314, seed);
    let exact = run_filter(hmm, &path.y).unwrap();
    let mut rng = strategy_rng(314, seed);
    let mut ens = ParticleEnsemble::from_stationary(model, n_particles, &mut rng).unwrap();
    let mut total = 0.0;
    for k in 0..=horizon {
        ens = particle_update(model, &ens, path.y[k], &mut rng).unwrap();
        total += ens.tv_to_belief(&exact[k]);
    }
    total / (horizon + 1) as f64
}

#[test]
fn tv_error_decreases_with_more_particles() {
    let model = build_model(&three_state()).unwrap();
    let seeds = 10u64;
    let avg = |n: usize| -> f64 {
        (0..seeds).map(|s| mean_tv(&model, 100, n, s)).sum::<f64>() / seeds as f64
    };
    let coarse = avg(100);
    let medium = avg(1000);
    let fine = avg(10_000);
    assert!(
        coarse > medium && medium > fine,
        "expected monotone decay, got {coarse} > {medium} > {fine}"
    );
}

#[test]
fn large_ensembles_track_the_filter_closely() {
    let model = build_model(&three_state()).unwrap();
    let tv = mean_tv(&model, 200, 50_000, 0);
    assert!(tv < 0.03, "mean TV {tv}");
}

#[test]
fn particle_updates_are_deterministic_in_seed() {
    let model = build_model(&three_state()).unwrap();
    let run = || {
        let mut rng = strategy_rng(7, 3);
        let mut ens = ParticleEnsemble::from_stationary(&model, 256, &mut rng).unwrap();
        for y in [0u32, 2, 1, 1, 0] {
            ens = particle_update(&model, &ens, y, &mut rng).unwrap();
        }
        ens
    };
    assert_eq!(run(), run());
}

#[test]
fn dyadic_particles_follow_the_word_dynamics() {
    let depth = 16u32;
    let model = build_model(&ModelSpec::DoublingMap { depth }).unwrap();
    let mut rng = strategy_rng(2, 0);
    let ens = ParticleEnsemble::from_stationary(&model, 128, &mut rng).unwrap();
    let next = particle_update(&model, &ens, 0, &mut rng).unwrap();
    let mask = (1u64 << depth) - 1;
    assert!(next.states().iter().all(|&s| s <= mask));
    // Uniform weights after resampling.
    assert!(next.weights().iter().all(|&w| (w - 1.0 / 128.0).abs() < 1e-15));
}
