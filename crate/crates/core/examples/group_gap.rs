//! How far apart the two parties' scores are, per survey variable, with an
//! SVG density overlay for each.

use polyview::labels::{aggregate_image_labels, compute_group_gap, ingest_path, Group};
use polyview::report::plot::density_overlay;

fn main() -> anyhow::Result<()> {
    let survey = concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures/survey_816.csv");
    let sets = aggregate_image_labels(&ingest_path(survey)?.records)?;
    let report = compute_group_gap(&sets)?;
    print!("{}", report.render_table());

    let dir = std::env::temp_dir().join("polyview_gap");
    std::fs::create_dir_all(&dir)?;
    for (variable, gap) in &report.variables {
        let means: Vec<String> = [Group::All, Group::Dem, Group::Rep]
            .iter()
            .filter_map(|g| gap.distributions.get(g).map(|d| format!("{} {:.2}", g.key(), d.mean_aes)))
            .collect();
        println!("{:<16} mean AES: {}", variable.key(), means.join(", "));
        let path = dir.join(format!("density_{}.svg", variable.key()));
        std::fs::write(&path, density_overlay(variable.title(), gap))?;
    }
    println!("density plots in {}", dir.display());
    Ok(())
}
