//! Scratch: MLP share-calibration experiments; not part of the suite.

use std::time::Instant;

use rumbench::metrics::{market_shares, share_error};
use rumbench::models::{Mlp, MlpConfig};
use rumbench::rng::child_seed;
use rumbench::synth::{self, canonical_configs};

#[test]
fn mlptune() {
    let seed: u64 = std::env::var("SEED").map(|v| v.parse().unwrap()).unwrap_or(892);
    let s1 = [100.0 / 3.0; 3];
    let variants: Vec<(&str, Box<dyn Fn(&mut MlpConfig)>)> = vec![
        (
            "b2000-lr05-e400",
            Box::new(|c: &mut MlpConfig| {
                c.learning_rate = 0.05;
                c.batch_size = 2000;
                c.epochs = 400;
                c.patience = 400;
                c.tolerance = 0.0;
            }),
        ),
        (
            "b2000-lr05-e600",
            Box::new(|c: &mut MlpConfig| {
                c.learning_rate = 0.05;
                c.batch_size = 2000;
                c.epochs = 600;
                c.patience = 600;
                c.tolerance = 0.0;
            }),
        ),
        (
            "b2000-lr10-e400",
            Box::new(|c: &mut MlpConfig| {
                c.learning_rate = 0.1;
                c.batch_size = 2000;
                c.epochs = 400;
                c.patience = 400;
                c.tolerance = 0.0;
            }),
        ),
        (
            "b2000-lr10-e600",
            Box::new(|c: &mut MlpConfig| {
                c.learning_rate = 0.1;
                c.batch_size = 2000;
                c.epochs = 600;
                c.patience = 600;
                c.tolerance = 0.0;
            }),
        ),
    ];
    for config in canonical_configs(seed, 10_000, 1_000) {
        if !["logit-cd-1", "logit-cd-2", "probit-cd-1", "logit-linear-0.5"]
            .contains(&config.name.as_str())
        {
            continue;
        }
        let data = synth::generate(&config).unwrap();
        let label_err = share_error(&data.train.label_shares(), &s1).unwrap();
        println!("{} label_err {label_err:.3}", config.name);
        for (tag, tweak) in &variants {
            let mut mc = MlpConfig::new(vec![7]);
            mc.seed = child_seed(seed, &format!("fit/{}/mlp", config.name));
            tweak(&mut mc);
            let t = Instant::now();
            let model = Mlp::fit(&data.train, &mc).unwrap();
            let shares = market_shares(&model, &data.train).unwrap();
            let e = share_error(&shares, &s1).unwrap();
            let epochs_run = model.train_loss.len();
            println!(
                "  {tag:<10} s1_err {e:.3} epochs {epochs_run:>3} loss {:.5} [{:?}]",
                model.train_loss.last().unwrap(),
                t.elapsed()
            );
        }
    }
}
