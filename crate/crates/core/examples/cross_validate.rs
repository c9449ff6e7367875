//! Five-fold cross-validation on the colour fixture, printed as a table.

use polyview::dataset::synthetic::color_fixture_examples;
use polyview::eval::run_cv_with;
use polyview::labels::Variable;
use polyview::model::{BackboneFamily, FreezeVersion, ModelConfig, Task};
use polyview::train::TrainingConfig;

fn main() -> anyhow::Result<()> {
    let model = ModelConfig::tiny(BackboneFamily::ResNet50V2, FreezeVersion::V1, Task::Regression);
    let examples = color_fixture_examples(60, 3, Variable::Sentiment, model.preprocessing());
    let training = TrainingConfig {
        learning_rate: 1e-3,
        max_epochs: 40,
        seed: 3,
        ..TrainingConfig::default()
    };
    let report = run_cv_with(&examples, &model, &training, 5, 3, |fold, r| {
        if r.epoch % 10 == 0 {
            println!("fold {fold}  {r}");
        }
    })?;
    println!("\n{}", report.render_text());
    Ok(())
}
