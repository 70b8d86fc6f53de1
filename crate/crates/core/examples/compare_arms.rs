//! Trains the baseline arm (no ratio-log term) and the ratio arm on the same
//! data and initialization, then prints the per-seed comparison.
//!
//! Usage: `cargo run --release --example compare_arms [epochs] [seeds]`

use dwiratio::io::RunConfig;
use dwiratio::phantom::make_dataset;
use dwiratio::trainer::compare_arms;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let epochs = args.next().map(|s| s.parse()).transpose()?.unwrap_or(4);
    let seeds: u64 = args.next().map(|s| s.parse()).transpose()?.unwrap_or(2);

    let mut cfg = RunConfig::default();
    cfg.train.epochs = epochs;
    cfg.seeds = (0..seeds).collect();
    let ds = make_dataset(&cfg.dataset, &cfg.phantom, &cfg.acquisition.to_spec()?, cfg.seed)?;
    let report = compare_arms(&ds, &cfg.train, &cfg.seeds)?;
    for s in &report.seeds {
        println!(
            "seed {}: baseline {:.3} dB / {:.5} | ratio {:.3} dB / {:.5} | delta psnr {:+.3} dB",
            s.seed,
            s.baseline.summary.final_psnr,
            s.baseline.summary.converged_d_ratio,
            s.ratio.summary.final_psnr,
            s.ratio.summary.converged_d_ratio,
            s.final_psnr_delta_db
        );
    }
    println!(
        "ratio arm lower d_ratio in {}/{} seeds, PSNR within 0.5 dB in {}/{}",
        report.ratio_lower_d_ratio,
        report.seeds.len(),
        report.ratio_psnr_within_half_db,
        report.seeds.len()
    );
    Ok(())
}
