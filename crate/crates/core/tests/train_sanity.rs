use lierep::spacetimenet::{batch_loss, spread_task, train, NetworkConfig, NetworkWeights, RepCatalog, TrainConfig};

#[test]
fn spread_task_loss_halves_within_two_hundred_steps() {
    let cat = RepCatalog::spacetime(2).unwrap();
    let data = spread_task(128, 16, 2, 2.0, 3).unwrap();
    let labels: Vec<usize> = data.iter().map(|c| c.label).collect();
    let config = TrainConfig { epochs: 25, ..Default::default() };
    let initial = NetworkWeights::init(&config.network, &cat).unwrap();
    let before = batch_loss(&data, &labels, &initial, &cat, &config.network).unwrap();
    let out = train(&data, &[], &cat, &config).unwrap();
    assert_eq!(out.steps, 200);
    let after = batch_loss(&data, &labels, &out.weights, &cat, &config.network).unwrap();
    assert!(after <= 0.5 * before, "{before} -> {after}");
}

#[test]
fn default_configuration() {
    let c = TrainConfig::default();
    assert_eq!((c.network.num_layers, c.network.num_channels, c.network.batch_size), (3, 3, 16));
    let _ = NetworkConfig::default();
}
