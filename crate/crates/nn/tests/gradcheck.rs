mod support;

use heterodet_nn::{LayerSpec, Network};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use support::reference::{check_network, random_config, sweep};

#[test]
fn conv_stacks_match_finite_differences() {
    let (worst, done, skipped, params) = sweep(24, 500, 1e-3);
    eprintln!("worst {worst:.3e}, {params} params, {skipped} skipped");
    assert_eq!(done, 24);
    assert!(worst <= 1e-3, "max relative error {worst:.3e} over {params} parameters ({skipped} kinked draws skipped)");
}

#[test]
fn tanh_autoencoder_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let net = Network::new(
        &[10],
        &[LayerSpec::dense(8), LayerSpec::tanh(), LayerSpec::dense(4), LayerSpec::tanh(), LayerSpec::dense(8), LayerSpec::tanh(), LayerSpec::dense(10)],
        &mut rng,
    )
    .unwrap();
    let xs: Vec<Vec<f32>> = (0..3).map(|_| (0..10).map(|_| rng.random_range(0.0..1.0)).collect()).collect();
    let r = check_network(&net, &xs, &xs, 1e-3).expect("tanh network has no kinks");
    assert!(r.max_rel_error <= 1e-3, "{}", r.max_rel_error);
}

#[test]
fn random_configs_respect_parameter_budget() {
    for seed in 0..30 {
        let (net, _, _) = random_config(seed, 500);
        assert!(net.parameter_count() <= 500);
        let kinds: Vec<_> = net.specs().iter().map(LayerSpec::kind).collect();
        for k in ["conv2d", "maxpool2d", "flatten", "dense", "activation"] {
            assert!(kinds.contains(&k));
        }
    }
}
