//! Trains the residual refiner for a few epochs on a small phantom dataset
//! and prints the validation log.
//!
//! Usage: `cargo run --release --example train_refiner [epochs]`

use dwiratio::phantom::{make_dataset, AcquisitionSpec, DatasetConfig, PhantomSpec};
use dwiratio::trainer::{evaluate, init_network, train, TrainConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let epochs = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(3);
    let ds_cfg = DatasetConfig { field_count: 4, ..DatasetConfig::default() };
    let ds = make_dataset(&ds_cfg, &PhantomSpec::desk(), &AcquisitionSpec::default(), 0)?;
    let start = evaluate(&init_network(0), &ds.validation)?;
    println!("untrained: psnr {:.2} dB, d_ratio {:.5}", start.psnr_mean, start.d_ratio_mean);

    let cfg = TrainConfig { epochs, ..TrainConfig::default() };
    let (params, log) = train(&ds, &cfg)?;
    println!("{:>6} {:>5} {:>9} {:>11} {:>9} {:>9}", "step", "epoch", "lr", "loss", "psnr", "d_ratio");
    for r in &log.records {
        println!(
            "{:>6} {:>5} {:>9.2e} {:>11.5e} {:>9.3} {:>9.5}",
            r.step, r.epoch, r.lr, r.loss.total, r.val_psnr, r.val_d_ratio
        );
    }
    println!("{} parameters, fingerprint {:016x}", params.param_count(), params.fingerprint());
    Ok(())
}
