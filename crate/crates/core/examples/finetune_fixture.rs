//! Fine-tunes a small randomly initialised trunk on the colour-separable
//! fixture and saves the best checkpoint.
//!
//! `cargo run --release -p polyview --example finetune_fixture [classification|regression] [v1|v2|v3]`

use polyview::dataset::make_split;
use polyview::dataset::synthetic::color_fixture_examples;
use polyview::labels::Variable;
use polyview::model::{build_model, BackboneFamily, FreezeVersion, ModelConfig, Task};
use polyview::train::{train_with_observer, TrainingConfig};

fn main() -> anyhow::Result<()> {
    let mut args = std::env::args().skip(1);
    let task: Task = args.next().as_deref().unwrap_or("classification").parse().map_err(anyhow::Error::msg)?;
    let version: FreezeVersion = args.next().as_deref().unwrap_or("v1").parse().map_err(anyhow::Error::msg)?;

    let config = ModelConfig::tiny(BackboneFamily::ResNet50V2, version, task);
    let examples = color_fixture_examples(64, 7, Variable::Sentiment, config.preprocessing());
    let split = make_split(examples.len(), 7)?;
    let model = build_model(&config)?;
    let training = TrainingConfig {
        max_epochs: 20,
        seed: 7,
        ..TrainingConfig::default()
    };
    println!(
        "{} train / {} validation images, {} trainable tensors",
        split.train.len(),
        split.validation.len(),
        model.trainable_vars().len()
    );
    let (checkpoint, state) = train_with_observer(&model, &examples, &split, &training, |r| println!("{r}"))?;
    println!(
        "best epoch {} of {}; validation {} dem {:.3}, rep {:.3}",
        state.best_epoch, state.epoch, checkpoint.metrics.metric, checkpoint.metrics.dem, checkpoint.metrics.rep
    );
    let dir = checkpoint.save(&std::env::temp_dir().join("polyview_checkpoint"))?;
    println!("checkpoint saved to {}", dir.display());
    Ok(())
}
