//! Trains one supervision setup on the in-memory synthetic set and prints
//! test mean IoU at one and three scales.
//!
//! `cargo run --release --example desk_run -- box`
//!
//! Modes: mask, box, semi, rect, color, wta. An optional second argument sets
//! the number of epochs.

use std::time::Instant;

use boxsup::datasets::{synth_samples, Split, SynthConfig, SYNTH_NUM_CLASSES};
use boxsup::eval::evaluate;
use boxsup::proposals::{generate_pools, ProposerConfig};
use boxsup::trainer::{
    predict_all, train_with, Baseline, Sampling, SupervisionMode, TrainConfig, TrainingSet,
};

fn main() -> boxsup::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let mode = args.get(1).map_or("box", String::as_str);
    let epochs = args.get(2).map_or(20, |s| s.parse().expect("epochs"));

    let mut config = TrainConfig {
        epochs,
        base_lr: 0.01,
        batch_size: 5,
        overlap_only_epochs: 5,
        ..TrainConfig::default()
    };
    match mode {
        "mask" => config.supervision_mode = SupervisionMode::Mask,
        "box" => {}
        "semi" => config.supervision_mode = SupervisionMode::Semi,
        "rect" => config.baseline = Baseline::Rectangles,
        "color" => config.baseline = Baseline::Colormodel,
        "wta" => config.sampling = Sampling::WinnerTakesAll,
        other => panic!("unknown mode {other}"),
    }

    let all = synth_samples(&SynthConfig::default())?;
    let (train, test): (Vec<_>, Vec<_>) = all.into_iter().partition(|(s, _)| *s == Split::Train);
    let train: Vec<_> = train.into_iter().map(|(_, s)| s).collect();
    let test: Vec<_> = test.into_iter().map(|(_, s)| s).collect();

    let t = Instant::now();
    let images: Vec<_> = train
        .iter()
        .map(|s| (s.image_id.as_str(), &s.image))
        .collect();
    let pools = generate_pools(&images, &ProposerConfig::default())?;
    eprintln!("proposals {:.1}s", t.elapsed().as_secs_f64());

    let data = TrainingSet {
        samples: train,
        pools: pools.into_iter().map(Some).collect(),
        num_classes: SYNTH_NUM_CLASSES,
    };
    let t = Instant::now();
    let (params, _) = train_with(&data, &config, 1, |s| {
        let r = s.history.last().expect("one record per epoch");
        eprintln!(
            "epoch {:>2} lr {:.4} loss {:.4} supervision {:?} ({:.0}s)",
            r.epoch,
            r.lr,
            r.mean_loss,
            r.supervision_miou,
            t.elapsed().as_secs_f64()
        );
        Ok(())
    })?;

    let gts: Vec<_> = test
        .iter()
        .map(|s| s.gt_mask.clone().expect("test masks"))
        .collect();
    for scales in [vec![1.0], vec![0.8, 1.0, 1.2]] {
        let preds = predict_all(&config.net, &params, &test, &scales)?;
        let r = evaluate(&preds, &gts, SYNTH_NUM_CLASSES)?;
        println!("{mode} scales {scales:?}: mean IoU {:.4}", r.mean);
    }
    Ok(())
}
