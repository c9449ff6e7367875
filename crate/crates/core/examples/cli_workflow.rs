//! The full command-line workflow in a scratch directory: aggregate a survey,
//! train on the colour fixture, evaluate, cross-validate and predict.
//! Each step is the same call the `polyview` binary makes.

use std::fs;

use polyview::cli::run;
use polyview::dataset::synthetic::write_color_fixture;

fn polyview(args: &[&str]) -> anyhow::Result<()> {
    println!("\n$ polyview {}", args.join(" "));
    match run(std::iter::once("polyview").chain(args.iter().copied())) {
        0 => Ok(()),
        code => anyhow::bail!("exit code {code}"),
    }
}

fn main() -> anyhow::Result<()> {
    let dir = tempfile::tempdir()?;
    let root = dir.path();
    let p = |rel: &str| root.join(rel).display().to_string();

    let survey = concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures/survey_816.csv");
    polyview(&["aggregate", survey, "--out", &p("survey/labels.json")])?;

    write_color_fixture(&root.join("fixture"), 40, 5)?;
    fs::write(
        root.join("run.toml"),
        r#"labels = "fixture/labels.json"
images = "fixture/images"
run_id = "demo"

[model]
backbone = "resnet50v2"
version = "v1"
task = "regression"
pretrained = "none"
trunk = { width = 0.125, depths = [1, 1, 1, 1] }

[training]
max_epochs = 10
patience = 5
seed = 5
"#,
    )?;
    polyview(&["train", &p("run.toml")])?;
    polyview(&[
        "evaluate",
        &p("runs/demo/checkpoint"),
        "--labels",
        &p("fixture/labels.json"),
        "--images",
        &p("fixture/images"),
        "--out-dir",
        &p("evaluation"),
        "--validation-only",
    ])?;
    polyview(&["cv", &p("run.toml"), "--k", "4"])?;
    polyview(&["predict", &p("runs/demo/checkpoint"), &p("fixture/images/syn_000.png"), &p("fixture/images/syn_001.png")])?;

    let mut produced: Vec<String> = walk(root)?;
    produced.sort();
    println!("\nfiles written:\n  {}", produced.join("\n  "));
    Ok(())
}

fn walk(dir: &std::path::Path) -> anyhow::Result<Vec<String>> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        if path.is_dir() {
            if path.file_name().is_some_and(|n| n != "images") {
                out.extend(walk(&path)?);
            }
        } else {
            out.push(path.display().to_string());
        }
    }
    Ok(out)
}
