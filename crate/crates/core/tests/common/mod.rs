#![allow(dead_code)]

use std::path::PathBuf;

use rand::Rng;
use senseplace::config::RunConfig;
use senseplace::dqn::{QNetwork, Sample};
use senseplace::PlacementProblem;

pub fn config_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

pub fn load(name: &str) -> RunConfig {
    RunConfig::load(&config_path(name)).unwrap()
}

pub fn toy_problem() -> PlacementProblem {
    load("toy_two_story.toml").problem().unwrap()
}

/// Random 0/1 states with one fitted action each and random targets.
pub fn random_batch<R: Rng>(rng: &mut R, n_in: usize, n_out: usize, size: usize) -> (Vec<Vec<f64>>, Vec<usize>, Vec<f64>) {
    let states = (0..size)
        .map(|_| (0..n_in).map(|_| if rng.random_bool(0.3) { 1.0 } else { 0.0 }).collect())
        .collect();
    let actions = (0..size).map(|_| rng.random_range(0..n_out)).collect();
    let targets = (0..size).map(|_| rng.random_range(-3.0..3.0)).collect();
    (states, actions, targets)
}

pub fn samples<'a>(states: &'a [Vec<f64>], actions: &[usize], targets: &[f64]) -> Vec<Sample<'a>> {
    states
        .iter()
        .zip(actions)
        .zip(targets)
        .map(|((s, &action), &target)| Sample { state: s, action, target })
        .collect()
}

/// Glorot network with random non-zero biases, so that no hidden unit sits
/// exactly on the rectifier kink for an all-zero state.
pub fn random_network<R: Rng>(rng: &mut R, n_in: usize, n_h: usize, n_out: usize) -> QNetwork {
    let mut net = QNetwork::new(n_in, n_h, n_out, rng);
    for b in net.b1.iter_mut().chain(net.b2.iter_mut()) {
        *b = rng.random_range(-0.5..0.5);
    }
    net
}

/// Smallest |pre-activation| over the batch; central differences are only
/// meaningful away from the kink.
pub fn kink_distance(net: &QNetwork, batch: &[Sample<'_>]) -> f64 {
    batch
        .iter()
        .flat_map(|s| net.pre_activations(s.state).unwrap())
        .fold(f64::INFINITY, |m, z| m.min(z.abs()))
}

/// Relative 2-norm distance between backpropagated and central-difference gradients.
pub fn gradient_error(net: &QNetwork, batch: &[Sample<'_>]) -> f64 {
    let (_, grad) = net.loss_and_gradients(batch).unwrap();
    let analytic = grad.flatten();
    let params = net.parameters();
    let mut probe = net.clone();
    let mut num = 0.0;
    let mut den = 0.0;
    for i in 0..params.len() {
        let h = 1e-6 * params[i].abs().max(1.0);
        let mut p = params.clone();
        p[i] = params[i] + h;
        probe.set_parameters(&p).unwrap();
        let up = probe.loss_and_gradients(batch).unwrap().0;
        p[i] = params[i] - h;
        probe.set_parameters(&p).unwrap();
        let down = probe.loss_and_gradients(batch).unwrap().0;
        let fd = (up - down) / (2.0 * h);
        num += (fd - analytic[i]).powi(2);
        den += analytic[i].powi(2);
    }
    num.sqrt() / den.sqrt().max(1e-12)
}
