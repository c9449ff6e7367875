//! Classification and regression metrics on hand-made predictions.

use polyview::eval::{
    accuracy, confusion_matrix, mae, mse, polarization_index, precision_recall_f1, weighted_f1,
};
use polyview::labels::Category::{self, Negative, Neutral, Positive};

fn main() -> anyhow::Result<()> {
    let truth = [Negative, Negative, Neutral, Neutral, Neutral, Neutral, Positive, Positive];
    let predicted = [Negative, Neutral, Neutral, Neutral, Neutral, Positive, Positive, Neutral];
    let cm = confusion_matrix(&truth, &predicted)?;
    print!("{}", cm.to_delimited());
    for class in Category::ALL {
        let s = precision_recall_f1(&cm, class);
        println!(
            "{:<9} precision {:.3}  recall {:.3}  f1 {:.3}  support {}",
            class.key(),
            s.precision,
            s.recall,
            s.f1,
            cm.support(class)
        );
    }
    println!("weighted F1 {:.4}, accuracy {:.4}", weighted_f1(&cm)?, accuracy(&cm)?);

    let actual = [2.0, 3.5, 4.0, 6.5];
    let scores = [2.4, 3.0, 4.9, 6.1];
    println!("MAE {:.4}, MSE {:.4}", mae(&actual, &scores)?, mse(&actual, &scores)?);

    // Same image, Dem sees it as positive and Rep as negative.
    println!("polarization of (6, 2): {}", polarization_index(6.0, 2.0)?);
    Ok(())
}
