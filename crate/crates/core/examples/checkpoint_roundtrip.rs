//! Save a trained verifier with its optimizer state, load it back and check
//! that it scores paths bit for bit the same.

use latent_verifier::io::{read_checkpoint, write_checkpoint};
use latent_verifier::synthetic::{generate, SyntheticSpec};
use latent_verifier::*;

fn main() -> Result<()> {
    let data = generate(&SyntheticSpec {
        questions: 50,
        dim: 8,
        ..SyntheticSpec::default()
    })?;
    let report = train(
        &data,
        &TrainConfig {
            max_steps: 20,
            hidden1: 8,
            hidden2: 4,
            ..TrainConfig::default()
        },
    )?;
    let path = std::env::temp_dir().join("lv_demo_checkpoint.bin");
    write_checkpoint(&path, &report.verifier, Some(&report.optimizer))?;
    let (loaded, optimizer) = read_checkpoint(&path)?;
    println!(
        "{} params, optimizer at step {}, {} bytes on disk",
        loaded.model.param_count(),
        optimizer.map_or(0, |o| o.t),
        std::fs::metadata(&path).map(|m| m.len()).unwrap_or(0)
    );

    for q in &data {
        let a = report.verifier.score(q)?;
        let b = loaded.score(q)?;
        assert!(a.iter().zip(&b).all(|(x, y)| x.score.to_bits() == y.score.to_bits()));
    }
    println!("scores identical on all {} questions", data.len());
    Ok(())
}
