use pica_core::datagen::{build_dataset, DatagenConfig};
use pica_core::reward_model::{dataset_losses, step_rewards, train_reward_model, RewardScaling, RmTrainConfig};

#[test]
fn training_separates_pivot_turns() {
    let data = build_dataset(&DatagenConfig::default()).unwrap();
    assert_eq!(data.dataset.len() + data.report.filtered, 5000);
    let cfg = RmTrainConfig::default();
    let model = train_reward_model(&data.dataset, &cfg).unwrap();

    let first = model.history.first().unwrap();
    let last = model.history.last().unwrap();
    assert_eq!(model.history.len(), cfg.epochs + 1);
    assert!(last.final_loss < first.final_loss, "{first:?} -> {last:?}");
    let after = dataset_losses(&model.params, &data.dataset, &cfg.loss).unwrap();
    assert!((after.total - last.total).abs() < 1e-9);

    let scaling = RewardScaling::default();
    let (mut piv, mut non) = (Vec::new(), Vec::new());
    for t in &data.dataset.trajectories {
        let rewards = step_rewards(&model.params, t, &scaling).unwrap();
        for (r, z) in rewards.iter().zip(t.pivot_by_turn()) {
            match z {
                Some(true) => piv.push(*r),
                Some(false) => non.push(*r),
                None => {}
            }
        }
    }
    let mean = |v: &[pica_core::reward_model::StepReward]| v.iter().map(|r| r.normalized).sum::<f64>() / v.len() as f64;
    let positive = piv.iter().filter(|r| r.deployed > 0.0).count() as f64 / piv.len() as f64;
    println!("pivot {:.3} non-pivot {:.3} positive {:.3} history {:?}", mean(&piv), mean(&non), positive, model.history);
    assert!(mean(&piv) - mean(&non) >= 0.2);
    assert!(positive >= 0.8);
}

#[test]
fn training_is_deterministic() {
    let data = build_dataset(&DatagenConfig { tasks: 100, ..Default::default() }).unwrap();
    let cfg = RmTrainConfig { epochs: 3, ..Default::default() };
    let a = train_reward_model(&data.dataset, &cfg).unwrap();
    let b = train_reward_model(&data.dataset, &cfg).unwrap();
    assert_eq!(a, b);
}
