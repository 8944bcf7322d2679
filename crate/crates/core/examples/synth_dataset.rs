//! Generate a planted-truth dataset, write it to disk and read it back.
//!
//! Usage: cargo run --example synth_dataset [out_dir]

use std::collections::BTreeMap;
use std::path::PathBuf;

use latent_verifier::io::{read_dataset, write_dataset, DatasetManifest};
use latent_verifier::synthetic::{generate, SyntheticSpec};
use latent_verifier::inference::is_correct;
use latent_verifier::*;

fn main() -> Result<()> {
    let out: PathBuf = std::env::args().nth(1).map(Into::into).unwrap_or_else(|| std::env::temp_dir().join("lv_synth_demo"));
    let spec = SyntheticSpec {
        questions: 200,
        dim: 16,
        ..SyntheticSpec::default()
    };
    let data = generate(&spec)?;

    let mut by_groups: BTreeMap<usize, usize> = BTreeMap::new();
    let mut majority_right = 0;
    for q in &data {
        *by_groups.entry(q.num_groups()).or_default() += 1;
        if is_correct(&majority_vote(q), q.gold_answer().unwrap()) {
            majority_right += 1;
        }
    }
    println!("{} questions, {} paths each, dim {}", data.len(), spec.paths, spec.dim);
    println!("questions by group count: {by_groups:?}");
    println!("majority vote right on {majority_right} ({:.2})", majority_right as f64 / data.len() as f64);

    let manifest = DatasetManifest::for_instances(&data, "synthetic")?;
    write_dataset(&out, &data, &manifest)?;
    let (back, _) = read_dataset(&out)?;
    assert_eq!(back, data);
    println!("wrote and re-read {}", out.display());
    Ok(())
}
