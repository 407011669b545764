use heavy_bandit::env::{make_gap_instance, make_ucb_counterexample, BanditInstance, NoiseSpec};
use heavy_bandit::influence::InfluenceParams;
use heavy_bandit::perturbation::PerturbationSpec;
use heavy_bandit::policy::{Ape2, Policy, PolicyConfig, UcbEstimator};
use heavy_bandit::sim::{open_uniform, play, run_bandit_trial, stream_rng};

fn ucb(c: f64, nu: f64) -> PolicyConfig {
    PolicyConfig::RobustUcb { c, estimator: UcbEstimator::TruncatedMean, eta: Some(1.0), nu_p: Some(nu), p: None }
}

#[test]
fn noise_draws_average_to_the_arm_mean() {
    let (alpha, lambda) = (3.0, 1.0);
    let instance = BanditInstance::new(vec![0.3, 0.8], NoiseSpec::pareto(alpha, lambda)).unwrap();
    let sigma = (alpha * lambda * lambda / ((alpha - 1.0) * (alpha - 1.0) * (alpha - 2.0))).sqrt();
    let mut rng = stream_rng(5, 0, 0, 1);
    let n = 1_000_000;
    let mean = (0..n).map(|_| instance.draw_reward(1, open_uniform(&mut rng)).unwrap()).sum::<f64>() / n as f64;
    assert!((mean - 0.8).abs() <= 3.0 * sigma / (n as f64).sqrt(), "mean {mean}");
}

#[test]
fn ucb_lower_bound_instance_is_pinned_at_1000_rounds() {
    let instance = make_ucb_counterexample(4, 1000, 1.5, 1.0, 1.0).unwrap();
    let a = run_bandit_trial(&instance, &ucb(1.0, 1.0), 1.5, 1000, 1, 0, 0).unwrap();
    let b = run_bandit_trial(&instance, &ucb(1.0, 1.0), 1.5, 1000, 99, 3, 7).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.suboptimal_pulls(0), 264);
}

#[test]
fn ucb_keeps_exploring_while_the_width_gap_exceeds_the_reward_gap() {
    let (arms, p, c) = (4usize, 1.5, 1.0);
    for horizon in [1000u64, 10_000] {
        let instance = make_ucb_counterexample(arms, horizon, p, 1.0, 1.0).unwrap();
        let gap = instance.means()[0];
        let trace = run_bandit_trial(&instance, &ucb(c, 1.0), p, horizon, 0, 0, 0).unwrap();
        let log_t2 = (horizon as f64 * horizon as f64).ln();
        let width = |n: u64| c * (log_t2 / n as f64).powf(1.0 - 1.0 / p);
        // a suboptimal arm keeps winning while its width exceeds Δ plus the optimal arm's width
        let n0 = trace.counts[0];
        let m = (1..=horizon).take_while(|&m| width(m) >= gap + width(n0)).last().unwrap();
        for &n in &trace.counts[1..] {
            assert!(n >= m, "T={horizon}: {n} pulls < {m}");
        }
    }
}

#[test]
fn ucb_with_zero_scale_is_greedy() {
    let instance = BanditInstance::new(vec![0.2, 0.9, 0.5], NoiseSpec::Noiseless).unwrap();
    // large ν keeps the truncated mean from discarding the rewards
    let trace = run_bandit_trial(&instance, &ucb(0.0, 100.0), 1.5, 200, 0, 0, 0).unwrap();
    assert_eq!(trace.counts, vec![1, 198, 1]);
}

#[test]
fn ape2_history_lengths_track_counts() {
    let instance = make_gap_instance(4, 0.2, NoiseSpec::pareto(1.8, 1.0)).unwrap();
    let params = InfluenceParams::new(1.5, 0.5).unwrap();
    let mut policy = Policy::Ape2(Ape2::new(4, params, PerturbationSpec::gumbel(1.0)));
    let mut noise = stream_rng(1, 0, 0, 1);
    let mut perturb = stream_rng(1, 0, 0, 2);
    play(
        &instance,
        &mut policy,
        500,
        || open_uniform(&mut noise),
        |us| us.iter_mut().for_each(|u| *u = open_uniform(&mut perturb)),
    )
    .unwrap();
    let Policy::Ape2(state) = &policy else { unreachable!() };
    assert_eq!(state.counts().iter().sum::<u64>(), 500);
    for arm in 0..4 {
        assert_eq!(state.history_len(arm) as u64, state.counts()[arm]);
    }
}

#[test]
fn ape2_constant_rewards_converge_to_the_reward() {
    let instance = BanditInstance::new(vec![0.6, 0.6], NoiseSpec::Noiseless).unwrap();
    let params = InfluenceParams::new(1.5, 1.0).unwrap();
    let mut policy = Policy::Ape2(Ape2::new(2, params, PerturbationSpec::gumbel(1.0)));
    let mut perturb = stream_rng(2, 0, 0, 2);
    play(&instance, &mut policy, 20_000, || 0.5, |us| us.iter_mut().for_each(|u| *u = open_uniform(&mut perturb))).unwrap();
    let Policy::Ape2(state) = &policy else { unreachable!() };
    for (&r, &n) in state.estimates().iter().zip(state.counts()) {
        // bias shrinks like n^(−(p−1)/p)
        assert!((r - 0.6).abs() < 2.0 * (n as f64).powf(-1.0 / 3.0), "estimate {r} after {n} pulls");
    }
}

#[test]
fn dsee_exploration_grows_with_log_horizon() {
    let instance = BanditInstance::new(vec![1.0, 0.0, 0.0], NoiseSpec::Noiseless).unwrap();
    let policy = PolicyConfig::Dsee { w: 2.0 };
    for horizon in [100u64, 1000, 10_000] {
        let trace = run_bandit_trial(&instance, &policy, 1.5, horizon, 0, 0, 0).unwrap();
        let quota = (2.0 * (horizon as f64).ln()).ceil() as u64;
        for &n in &trace.counts[1..] {
            assert!(n + 1 >= quota && n <= quota, "T={horizon}: {n} pulls vs quota {quota}");
        }
    }
}
