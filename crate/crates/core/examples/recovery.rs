//! Fits a model to a synthetic class and prints how well it recovers the
//! generator's mastery. Usage: `recovery [lr] [epochs] [seed]`.

use neurocd_core::model::sigmoid;
use neurocd_core::synth::{generate, recovery_metrics, SynthConfig};
use neurocd_core::train::{fit, TrainConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let mut train = TrainConfig::default();
    if let Some(v) = args.first() {
        train.learning_rate = v.parse()?;
    }
    if let Some(v) = args.get(1) {
        train.epochs = v.parse()?;
    }
    let seed = args.get(2).map(|s| s.parse()).transpose()?.unwrap_or(0);
    let synth = SynthConfig {
        seed,
        ..SynthConfig::default()
    };
    train.seed = seed;
    let (truth, dataset) = generate(&synth)?;
    let (params, report) = fit(&dataset, &train)?;
    let estimated: Vec<Vec<f64>> = (0..params.n_students())
        .map(|s| params.a.row(s).iter().map(|&v| sigmoid(v)).collect())
        .collect();
    let m = recovery_metrics(&truth, &dataset, &estimated)?;
    println!("loss {:.4} -> {:.4}", report.losses[0], report.final_loss);
    println!("spearman {:?}", m.spearman);
    println!("alignment {:?} overall {:?}", m.alignment, m.alignment_overall);
    Ok(())
}
