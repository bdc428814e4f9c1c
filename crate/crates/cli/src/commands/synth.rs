use cyclelife_core::datapipe::save_dataset;
use cyclelife_core::synthgen::{generate_corpus, SynthConfig};

use super::positive;
use crate::settings::{usage, Settings};
use crate::SynthArgs;

pub fn run(s: &Settings, a: SynthArgs) -> anyhow::Result<()> {
    let defaults = SynthConfig::default();
    let cfg = SynthConfig {
        n_batteries: positive(s.or(a.n, "n", defaults.n_batteries as u64)?, "n")?,
        noise_sigma: s.or(a.noise, "noise", defaults.noise_sigma)?,
        points_per_cycle: s.or(a.points, "points", defaults.points_per_cycle as u64)? as usize,
        stored_cycles: Some(positive(s.or(a.cycles, "cycles", 100)?, "cycles")?),
        seed: s.seed(a.seed, "seed")?,
        ..defaults
    };
    cfg.validate().map_err(|e| usage(e.to_string()))?;
    let corpus = generate_corpus(&cfg)?;
    save_dataset(&a.out, &corpus)?;
    println!("wrote {} batteries to {}", corpus.len(), a.out.display());
    Ok(())
}
