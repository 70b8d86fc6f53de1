//! Evaluates each loss term on a toy DWI slice: MSE, the frequency loss,
//! the ratio-log loss, the ratio distance, the composite loss and PSNR.

use dwiratio::losses::{
    fft_loss, mse_loss, psnr, ratio_distance, ratio_log_loss, total_loss_with_components, LossWeights,
};
use ndarray::Array2;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let b0 = Array2::from_shape_fn((8, 8), |(i, j)| 0.6 + 0.05 * ((i + j) % 5) as f64);
    let gt = b0.mapv(|v| v * 0.4);
    let pred = Array2::from_shape_fn((8, 8), |(i, j)| gt[[i, j]] * (1.0 + 0.05 * ((i * 3 + j) % 4) as f64 - 0.075));

    println!("mse        {:.6e}", mse_loss(&pred, &gt)?.value);
    println!("fft        {:.6e}  (64 x mse)", fft_loss(&pred, &gt)?.value);
    println!("ratio_log  {:.6e}", ratio_log_loss(&pred, &gt, &b0)?.value);
    println!("d_ratio    {:.6e}", ratio_distance(&pred, &gt, &b0)?);
    println!("psnr       {:.3} dB", psnr(&pred, &gt)?);

    for (name, w) in [("baseline", LossWeights::baseline()), ("ratio", LossWeights::default())] {
        let (lv, parts) = total_loss_with_components(&pred, &gt, &b0, &w)?;
        let grad_norm = lv.gradient.iter().map(|g| g * g).sum::<f64>().sqrt();
        println!("{name:<9} total {:.6e}  |grad| {grad_norm:.3e}  terms {parts:?}", lv.value);
    }
    Ok(())
}
