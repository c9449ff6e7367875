//! Which trunk layers each fine-tuning strategy retrains, for every backbone
//! at full size. Only layer graphs are built; no weights are allocated.

use polyview::model::{BackboneFamily, FreezeVersion, TrunkScale};

fn main() -> anyhow::Result<()> {
    for family in BackboneFamily::ALL {
        let graph = family.graph(&TrunkScale::default());
        let table = graph.block_table(family).expect("every family has a block table");
        println!("{family}: {} layers, {} output channels", graph.len(), graph.output_channels());
        let anchors: Vec<String> = table.anchors.iter().map(|(n, i)| format!("{n}@{i}")).collect();
        println!("  anchors: {}", anchors.join(" "));
        for version in [FreezeVersion::V1, FreezeVersion::V2, FreezeVersion::V3] {
            let mask = graph.trainable_mask(family, version)?;
            let trainable: Vec<&str> = graph
                .layers
                .iter()
                .zip(&mask)
                .filter(|(l, &t)| t && l.kind.has_params())
                .map(|(l, _)| l.name.as_str())
                .collect();
            match (trainable.first(), trainable.last()) {
                (Some(first), Some(last)) => println!(
                    "  {version}: {} parameterised layers retrained, {first} .. {last}",
                    trainable.len()
                ),
                _ => println!("  {version}: trunk frozen, heads only"),
            }
        }
    }
    Ok(())
}
