//! Full estimation run through the library: simulate inputs, estimate every
//! model on full, pre and post samples, then write tables and figure data.

use volquant::cli::config::{ModelChoice, RunConfig};
use volquant::cli::pipeline::{estimate_all, write_report, write_tables, Inputs};
use volquant::synth::{generate_panel, ImpliedSpec, Innovation, SynthSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut spec = SynthSpec::new(4, 500, Innovation::Normal, 5);
    spec.implied = Some(ImpliedSpec { noise: 0.15 });
    let s = generate_panel(&spec)?;
    let out = std::env::temp_dir().join("volquant_end_to_end");
    std::fs::create_dir_all(&out)?;
    let cfg = RunConfig {
        output_dir: out.clone(),
        seed: 1,
        models: vec![ModelChoice::Rv, ModelChoice::Index, ModelChoice::Both],
        split: Some("2008-05-30:2008-06-02".into()),
        bootstrap: volquant::cli::config::BootstrapSettings {
            replicates: 50,
            ..Default::default()
        },
        ..Default::default()
    };
    let inputs = Inputs {
        returns: s.returns,
        realized: s.realized,
        index: s.implied,
    };
    let est = estimate_all(&inputs, &cfg)?;
    for path in write_tables(&out, &est)? {
        println!("wrote {}", path.display());
    }
    write_report(&out, &est, cfg.tail_tolerance)?;
    let table = std::fs::read_to_string(out.join("table_full_both.csv"))?;
    println!("\n{table}");
    Ok(())
}
