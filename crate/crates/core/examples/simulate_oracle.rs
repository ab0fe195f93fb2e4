//! Checks the exact solver against brute-force enumeration of candidate
//! bases on tiny simulated panels.

use volquant::panelqr::fit_panel_qr;
use volquant::synth::{design_matrix, generate_panel, oracle_qr, Innovation, SynthSpec};

fn main() -> volquant::Result<()> {
    for seed in 0..5 {
        let s = generate_panel(&SynthSpec::new(2, 10, Innovation::Uniform, seed))?;
        let (y, x) = design_matrix(&s.panel);
        for tau in [0.1, 0.5, 0.9] {
            let fit = fit_panel_qr(&s.panel, tau)?;
            let oracle = oracle_qr(&y, &x, 3, tau)?;
            println!(
                "seed {seed} tau {tau}: solver {:.10}  oracle {:.10}  ({} bases)",
                fit.objective, oracle.objective, oracle.bases_enumerated
            );
        }
    }
    Ok(())
}
