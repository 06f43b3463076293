//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any hard criterion fails. Criterion 7 is a soft check: its
//! outcome is reported together with the oracle ranking but never fails
//! the run.

mod common;

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fs;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use senseplace::building::{assemble_matrices, modal_properties, BuildingParams, SensorKind};
use senseplace::dqn::{greedy_policy, train, QNetwork, TrainOutcome};
use senseplace::ground_motion::{filter_frequency_response, generate};
use senseplace::info::{fisher_matrix, info_gain, sensitivities_with_step, SensitivityTensor};
use senseplace::oracle::{
    exhaustive_optimum, expected_config_reward, expected_rewards, sample_gains,
};
use senseplace::runner::{self, RunOptions};
use senseplace::{ParameterPrior, PlacementProblem, SensorType};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn within(elapsed: Duration, limit_s: f64) -> bool {
    elapsed.as_secs_f64() < limit_s
}

fn modal_reproduction() -> Outcome {
    let start = Instant::now();
    let problem = PlacementProblem::benchmark();
    let modes = modal_properties(&assemble_matrices(problem.building()).unwrap());
    let (t1, z1) = (modes[0].period(), modes[0].damping_ratio);
    let elapsed = start.elapsed();
    let pass = (t1 - 0.45).abs() <= 0.0045 && (z1 - 0.07).abs() <= 0.002 && within(elapsed, 1.0);
    outcome(pass, format!("T1 = {t1:.4} s, zeta1 = {:.2}% ({elapsed:.2?})", 100.0 * z1))
}

/// Periodogram |X(w_k)|^2 at bins `1..=k_max` by direct summation.
fn periodogram(x: &[f64], k_max: usize) -> Vec<f64> {
    let n = x.len();
    (1..=k_max)
        .map(|k| {
            let w = 2.0 * PI * k as f64 / n as f64;
            let (mut re, mut im) = (0.0, 0.0);
            for (i, v) in x.iter().enumerate() {
                re += v * (w * i as f64).cos();
                im -= v * (w * i as f64).sin();
            }
            re * re + im * im
        })
        .collect()
}

fn ground_motion_contract() -> Outcome {
    let start = Instant::now();
    let problem = PlacementProblem::benchmark();
    let params = *problem.excitation();
    let k_max = 160;
    let mut psd = vec![0.0; k_max];
    let mut contract = true;
    for seed in 0..200 {
        let record = generate(&params, seed).unwrap();
        let peak = record.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        contract &= record.len() == 1001 && peak == 1.5;
        for (acc, p) in psd.iter_mut().zip(periodogram(&record, k_max)) {
            *acc += p;
        }
    }
    let n = params.n_samples() as f64;
    let omega: Vec<f64> = (1..=k_max).map(|k| 2.0 * PI * k as f64 / (n * params.dt)).collect();
    // Three-bin moving average to tame periodogram scatter.
    let smooth: Vec<f64> = (0..k_max)
        .map(|i| {
            let lo = i.saturating_sub(1);
            let hi = (i + 1).min(k_max - 1);
            psd[lo..=hi].iter().sum::<f64>() / (hi - lo + 1) as f64
        })
        .collect();
    let model: Vec<f64> = omega.iter().map(|&w| filter_frequency_response(&params, w).norm_sqr()).collect();
    let scale = smooth.iter().zip(&model).map(|(a, b)| a * b).sum::<f64>() / model.iter().map(|b| b * b).sum::<f64>();
    let err = smooth.iter().zip(&model).map(|(a, b)| (a - scale * b).powi(2)).sum::<f64>().sqrt()
        / model.iter().map(|b| (scale * b).powi(2)).sum::<f64>().sqrt();
    let peak_idx = (0..k_max).max_by(|&a, &b| smooth[a].total_cmp(&smooth[b])).unwrap();
    let peak_w = omega[peak_idx];
    let elapsed = start.elapsed();
    let pass = contract && (12.0..=22.0).contains(&peak_w) && err < 0.15 && within(elapsed, 10.0);
    outcome(
        pass,
        format!(
            "PGA/length contract {}, PSD peak at {peak_w:.1} rad/s, shape error {:.1}% ({elapsed:.2?})",
            if contract { "holds" } else { "broken" },
            100.0 * err
        ),
    )
}

fn random_psd(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
    let mut f = DMatrix::zeros(n, n);
    for _ in 0..rng.random_range(0..=n) {
        let v = DVector::from_fn(n, |_, _| rng.random_range(-3.0..3.0));
        f += &v * v.transpose();
    }
    f
}

fn information_math() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);

    let mut sens = SensitivityTensor::zeros(200, 6, 4);
    for i in 0..200 {
        for j in 0..6 {
            for k in 0..4 {
                sens.set(i, j, k, rng.random_range(-1.0..1.0));
            }
        }
    }
    let noise = [1e-3, 1e-3, 1e-5, 1e-5, 1e-6, 1e-6];
    let a = fisher_matrix(&sens, &[0, 2, 4], &noise).unwrap();
    let b = fisher_matrix(&sens, &[1, 3, 5], &noise).unwrap();
    let ab = fisher_matrix(&sens, &[0, 2, 4, 1, 3, 5], &noise).unwrap();
    let additivity = (&ab - (&a + &b)).amax() / ab.amax();

    let mut min_gain = f64::INFINITY;
    let mut worst_monotone = f64::INFINITY;
    for _ in 0..1000 {
        let n = rng.random_range(1..=8);
        let f1 = random_psd(&mut rng, n);
        let f2 = random_psd(&mut rng, n);
        let p0 = DMatrix::from_diagonal(&DVector::from_fn(n, |_, _| rng.random_range(0.01..5.0)));
        let g1 = info_gain(&f1, &p0).unwrap();
        let g12 = info_gain(&(&f1 + &f2), &p0).unwrap();
        min_gain = min_gain.min(g1);
        worst_monotone = worst_monotone.min(g12 - g1);
    }

    // One story, unit step input: static drift -m a / k, so dx/dk = m / k^2.
    let building = BuildingParams::new(vec![100.0], vec![2.0], vec![4.0]).unwrap();
    let prior = ParameterPrior::uniform_cov(building.theta(), 0.2).unwrap();
    let excitation = senseplace::ground_motion::KanaiTajimiParams { duration: 200.0, ..Default::default() };
    let sensors = vec![SensorType { kind: SensorKind::Drift, noise_variance: 1e-6 }];
    let problem = PlacementProblem::new(building, sensors, prior, excitation, 1).unwrap();
    let step = vec![1.0; excitation.n_samples()];
    let exact = 4.0 / 100.0f64.powi(2);
    let errors: Vec<f64> = [1e-2, 5e-3, 2.5e-3]
        .iter()
        .map(|&h| {
            let s = sensitivities_with_step(&problem, &[100.0, 2.0], &step, h).unwrap();
            (s.get(step.len() - 1, 0, 0) - exact).abs()
        })
        .collect();
    let orders: Vec<f64> = errors.windows(2).map(|w| (w[0] / w[1]).log2()).collect();

    let elapsed = start.elapsed();
    let pass = additivity <= 1e-13
        && min_gain >= 0.0
        && worst_monotone >= -1e-10
        && orders.iter().all(|o| (1.8..=2.2).contains(o))
        && within(elapsed, 30.0);
    outcome(
        pass,
        format!(
            "additivity residual {additivity:.1e}, min gain {min_gain:.2e}, min increment {worst_monotone:.2e}, \
             FD orders {:.3}/{:.3} ({elapsed:.2?})",
            orders[0], orders[1]
        ),
    )
}

fn gradient_oracle() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    let mut skipped = 0;
    while checked < 100 {
        let net: QNetwork = common::random_network(&mut rng, 12, 6, 12);
        let (s, a, t) = common::random_batch(&mut rng, 12, 12, 1);
        let batch = common::samples(&s, &a, &t);
        if common::kink_distance(&net, &batch) < 1e-4 {
            skipped += 1;
            continue;
        }
        worst = worst.max(common::gradient_error(&net, &batch));
        checked += 1;
    }
    let elapsed = start.elapsed();
    outcome(
        worst < 1e-5 && within(elapsed, 5.0),
        format!("max relative error {worst:.2e} over {checked} pairs, {skipped} near-kink pairs redrawn ({elapsed:.2?})"),
    )
}

fn desk_scale_equivalence() -> Outcome {
    let start = Instant::now();
    let cfg = common::load("toy_two_story.toml");
    let problem = cfg.problem().unwrap();
    let out = train(&problem, &cfg.train_config()).unwrap();
    let policy = greedy_policy(&out.network, &problem).unwrap();
    let gains = sample_gains(&problem, 500, 0x5eed, 1).unwrap();
    let achieved = expected_config_reward(&gains, &policy);
    let (best, optimum) = exhaustive_optimum(&gains, problem.budget()).unwrap();
    let elapsed = start.elapsed();
    let ratio = achieved / optimum;
    let labels = |c: &[usize]| c.iter().map(|&i| problem.channel_label(i)).collect::<Vec<_>>().join("+");
    outcome(
        ratio >= 0.95 && within(elapsed, 300.0),
        format!(
            "agent {} = {achieved:.4}, optimum {} = {optimum:.4}, ratio {:.1}% ({elapsed:.2?})",
            labels(&policy),
            labels(&best),
            100.0 * ratio
        ),
    )
}

fn window_mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn training_trend(run: &TrainOutcome, elapsed: Duration) -> Outcome {
    let rewards = run.total_rewards();
    let first = window_mean(&rewards[..550]);
    let last = window_mean(&rewards[rewards.len() - 550..]);
    outcome(
        rewards.len() == 5500 && last >= 1.1 * first && within(elapsed, 1800.0),
        format!(
            "first-550 mean {first:.3}, last-550 mean {last:.3}, change {:+.1}% ({elapsed:.2?})",
            100.0 * (last / first - 1.0)
        ),
    )
}

fn policy_plausibility(problem: &PlacementProblem, policies: &[Vec<usize>]) -> Outcome {
    let mut counts: BTreeMap<Vec<usize>, usize> = BTreeMap::new();
    for p in policies {
        let mut sorted = p.clone();
        sorted.sort_unstable();
        *counts.entry(sorted).or_default() += 1;
    }
    let (majority, votes) = counts.iter().max_by_key(|(_, n)| **n).map(|(c, n)| (c.clone(), *n)).unwrap();
    let kind = |c: usize| problem.channels()[c].kind;
    let no_accel = majority.iter().all(|&c| kind(c) != SensorKind::Acceleration);
    let drift_12 = policies.iter().filter(|p| p.contains(&8) && p.contains(&9)).count();
    let labels = |c: &[usize]| c.iter().map(|&i| problem.channel_label(i)).collect::<Vec<_>>().join("+");

    let table = expected_rewards(problem, 500, 0x0dd).unwrap();
    let ranking: Vec<String> = table
        .ranking()
        .iter()
        .map(|&c| format!("{}={:.2}", problem.channel_label(c), table.mean[c]))
        .collect();
    outcome(
        no_accel && drift_12 >= 3,
        format!(
            "majority {} ({votes}/{}), drift at stories 1 and 2 in {drift_12}/{} seeds; oracle ranking: {}",
            labels(&majority),
            policies.len(),
            policies.len(),
            ranking.join(", ")
        ),
    )
}

fn determinism() -> Outcome {
    let start = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let mut same = true;
    for (name, episodes) in [("toy_two_story.toml", None), ("paper_case.toml", Some(600))] {
        let mut artifacts = Vec::new();
        for run in 0..2 {
            let out = dir.path().join(format!("{name}-{run}"));
            let opts = RunOptions { out: Some(out.clone()), episodes, threads: 1, ..RunOptions::default() };
            runner::run_train(&common::config_path(name), &opts).unwrap();
            artifacts.push((
                fs::read(out.join(runner::REWARD_HISTORY)).unwrap(),
                fs::read(out.join(runner::CHECKPOINT)).unwrap(),
            ));
        }
        same &= artifacts[0] == artifacts[1];
    }
    let elapsed = start.elapsed();
    outcome(same, format!("reward histories and checkpoints byte-identical: {same} ({elapsed:.2?})"))
}

fn report(id: usize, name: &str, soft: bool, o: &Outcome) {
    let status = match (o.pass, soft) {
        (true, _) => "PASS",
        (false, false) => "FAIL",
        (false, true) => "FAIL (soft)",
    };
    println!("[{id}] {status} {name}: {}", o.detail);
}

fn main() {
    let mut hard_failures = 0;
    let mut check = |id: usize, name: &str, soft: bool, o: Outcome| {
        report(id, name, soft, &o);
        if !o.pass && !soft {
            hard_failures += 1;
        }
    };

    check(1, "modal reproduction", false, modal_reproduction());
    check(2, "ground-motion contract", false, ground_motion_contract());
    check(3, "information math", false, information_math());
    check(4, "gradient oracle", false, gradient_oracle());
    check(5, "oracle equivalence at desk scale", false, desk_scale_equivalence());

    let cfg = common::load("paper_case.toml");
    let problem = cfg.problem().unwrap();
    let mut policies = Vec::new();
    for offset in 0..5u64 {
        let mut seeded = cfg.clone();
        seeded.seed = cfg.seed + offset;
        let start = Instant::now();
        let run = train(&problem, &seeded.train_config()).unwrap();
        let elapsed = start.elapsed();
        if offset == 0 {
            check(6, "full-scale training trend", false, training_trend(&run, elapsed));
        }
        policies.push(greedy_policy(&run.network, &problem).unwrap());
    }
    check(7, "final-policy plausibility", true, policy_plausibility(&problem, &policies));
    check(8, "determinism", false, determinism());

    if hard_failures > 0 {
        println!("{hard_failures} hard acceptance criteria failed");
        std::process::exit(1);
    }
}
