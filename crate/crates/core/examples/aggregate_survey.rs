//! Survey CSV to per-party image labels.
//!
//! `cargo run -p polyview --example aggregate_survey [survey.csv]`
//! defaults to the bundled 816-image fixture.

use std::path::PathBuf;

use polyview::labels::{
    aggregate_image_labels, category_counts, export_labels, ingest_path, render_category_table, Group,
    Variable,
};

fn main() -> anyhow::Result<()> {
    let survey = std::env::args_os()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures/survey_816.csv")));

    let ingested = ingest_path(&survey)?;
    println!(
        "{} rows read: {} kept, {} non-partisan dropped, {} rejected",
        ingested.rows_seen(),
        ingested.records.len(),
        ingested.dropped_other,
        ingested.rejected.len()
    );

    let sets = aggregate_image_labels(&ingested.records)?;
    println!("{} images labelled\n", sets.len());
    print!("{}", render_category_table(&sets));

    let first = &sets[0];
    let sentiment = first.variable(Variable::Sentiment);
    if let (Some(d), Some(r)) = (&sentiment.dem, &sentiment.rep) {
        println!(
            "\n{}: Dem AES {:.2} ({}), Rep AES {:.2} ({})",
            first.image_id, d.aes, d.category, r.aes, r.category
        );
    }

    let [neg, neu, pos] = category_counts(&sets, Variable::SubjectOfHarm, Group::All);
    println!("subject of harm, all respondents: {neg} negative / {neu} neutral / {pos} positive");

    let out = std::env::temp_dir().join("polyview_labels.json");
    export_labels(&sets, &out)?;
    println!("labels written to {}", out.display());
    Ok(())
}
