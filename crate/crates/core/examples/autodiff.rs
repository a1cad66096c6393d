//! Fits a two-layer tanh network to XOR with the tensor library's reverse
//! mode and Adam.
//!
//! ```text
//! cargo run --example autodiff
//! ```

use cpgsum::rng::seeded;
use cpgsum::tensor::{Adam, AdamConfig, ModelParams, Tensor};

fn main() -> cpgsum::Result<()> {
    let mut rng = seeded(0);
    let mut params = ModelParams::new();
    let w1 = params.matrix("w1", 2, 8, &mut rng)?;
    let b1 = params.bias("b1", 8)?;
    let w2 = params.matrix("w2", 8, 1, &mut rng)?;
    let x = Tensor::from_vec(4, 2, vec![0.0, 0.0, 0.0, 1.0, 1.0, 0.0, 1.0, 1.0])?;
    let y = Tensor::from_vec(4, 1, vec![0.0, 1.0, 1.0, 0.0])?;
    let mut adam = Adam::new(&params, AdamConfig { lr: 0.02, ..AdamConfig::default() });

    let forward = || -> cpgsum::Result<Tensor> { x.matmul(&w1)?.add_row(&b1)?.tanh().matmul(&w2) };
    for epoch in 0..=300 {
        let err = forward()?.sub(&y)?;
        let loss = err.mul(&err)?.mean();
        if epoch % 50 == 0 {
            println!("epoch {epoch:>3}  mse {:.6}", loss.item());
        }
        loss.backward()?;
        adam.step(&params)?;
    }
    println!("predictions {:?}", forward()?.to_vec().iter().map(|p| (p * 100.0).round() / 100.0).collect::<Vec<_>>());
    Ok(())
}
