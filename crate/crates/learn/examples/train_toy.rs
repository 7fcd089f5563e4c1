//! Train a small MLP scorer on a synthetic two-blob dataset, persist it to
//! a parameter store, reload it, and score a few held-back examples.
//!
//! Run with: cargo run -p vantage-learn --example train_toy

use rand::Rng;
use vantage_core::features::NormRanges;
use vantage_core::rng::{derive_rng, sample_normal};
use vantage_learn::{train, Arch, Dataset, ParamStore, TrainConfig};

fn blob_dataset(n: usize, dim: usize, seed: u64) -> Dataset {
    let mut rng = derive_rng(seed, &[0]);
    let mut inputs = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let positive = i % 2 == 0;
        let center = if positive { 0.7 } else { -0.7 };
        inputs.push(
            (0..dim)
                .map(|_| center + 0.35 * sample_normal(&mut rng))
                .collect(),
        );
        labels.push(positive);
    }
    Dataset::Aggregate { inputs, labels }
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dim = 6;
    let data = blob_dataset(160, dim, 42);
    let holdout = blob_dataset(20, dim, 43);

    let config = TrainConfig {
        epochs: 40,
        hidden: (16, 16),
        ..TrainConfig::default_for(Arch::Mlp)
    };
    let (params, report) = train(&data, &config, 7)?;
    println!(
        "trained on {} examples ({} train / {} val): best val accuracy {:.3} at epoch {}",
        data.len(),
        report.n_train,
        report.n_val,
        report.best_val_accuracy,
        report.best_epoch
    );
    println!(
        "train loss: {:.4} (first epoch) -> {:.4} (last epoch)",
        report.train_loss.first().copied().unwrap_or(f64::NAN),
        report.train_loss.last().copied().unwrap_or(f64::NAN)
    );

    // Persist with the metadata a consumer needs to reproduce the inputs:
    // an input-schema description, normalization ranges, the label
    // threshold, and the training configuration.
    let ranges = NormRanges {
        distance: [0.0, 1.0],
        view_angle: [0.0, 1.0],
        dist_min: [0.0, 1.0],
        dist_max: [0.0, 1.0],
        ang_min: [0.0, 1.0],
        ang_max: [0.0, 1.0],
        dir_deviation: [0.0, 1.0],
        dist_margin_lo: [0.0, 1.0],
        dist_margin_hi: [0.0, 1.0],
        ang_margin_lo: [0.0, 1.0],
        ang_margin_hi: [0.0, 1.0],
        hist_cell_max: 1.0,
        heat_cell_max: 1.0,
        seen_count_max: 1.0,
    };
    let store = ParamStore::new(
        params,
        format!("toy-blobs-{dim}d-v1"),
        ranges,
        (0.1, 1.0),
        config,
    );
    let path = std::env::temp_dir().join("vantage_train_toy.store");
    store.save(&path)?;
    let reloaded = ParamStore::load(&path)?;
    reloaded.check_schema(&format!("toy-blobs-{dim}d-v1"))?;
    println!("parameter store round-tripped through {}", path.display());

    let mut correct = 0;
    let mut rng = derive_rng(44, &[0]);
    for i in 0..holdout.len() {
        let score = reloaded.params.score_example(&holdout.example(i))?;
        let predicted = score > 0.5;
        if predicted == holdout.label(i) {
            correct += 1;
        }
        if rng.gen::<f64>() < 0.2 {
            println!(
                "  example {i:2}: score {score:.3} -> predicted {predicted}, label {}",
                holdout.label(i)
            );
        }
    }
    println!("holdout accuracy: {correct}/{}", holdout.len());
    std::fs::remove_file(&path)?;
    Ok(())
}
