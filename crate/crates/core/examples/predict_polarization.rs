//! Trains a regression model on the colour fixture, then scores fresh images
//! and reports each one's Dem/Rep gap.

use polyview::dataset::make_split;
use polyview::dataset::synthetic::{color_fixture, color_fixture_examples};
use polyview::dataset::ImageRecord;
use polyview::labels::Variable;
use polyview::model::{build_model, BackboneFamily, FreezeVersion, ModelConfig, Task};
use polyview::train::{train, Predictor, TrainingConfig};

fn main() -> anyhow::Result<()> {
    let config = ModelConfig::tiny(BackboneFamily::ResNet50V2, FreezeVersion::V1, Task::Regression);
    let preprocessing = config.preprocessing();
    let examples = color_fixture_examples(64, 1, Variable::Sentiment, preprocessing);
    let split = make_split(examples.len(), 1)?;
    let model = build_model(&config)?;
    let training = TrainingConfig {
        seed: 1,
        ..TrainingConfig::default()
    };
    let (checkpoint, _) = train(&model, &examples, &split, &training)?;

    // Unseen images drawn with a different seed.
    let fresh: Vec<ImageRecord> = color_fixture(6, 99)
        .into_iter()
        .map(|item| {
            let path = format!("{}.png", item.image_id);
            ImageRecord::from_rgb(item.image_id, &item.image, path.into(), preprocessing)
        })
        .collect();
    let predictor = Predictor::new(model, checkpoint.preprocessing, checkpoint.variable);
    for p in predictor.predict(&fresh)? {
        println!(
            "{}  dem {:.2} ({})  rep {:.2} ({})  polarization {:.2}",
            p.image_id,
            p.dem.scale_value(),
            p.dem.category,
            p.rep.scale_value(),
            p.rep.category,
            p.polarization()
        );
    }
    Ok(())
}
