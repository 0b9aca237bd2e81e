//! Central-difference check of backpropagation through time.
//!
//!     cargo run --example gradient_check

use litevr::nn::{Activation, GruVariant, LabeledBatch, LayerSpec, Mode, Network, NetworkSpec};
use litevr::{seed, Tensor3};
use rand::Rng;

fn main() -> litevr::Result<()> {
    let (b, t, f) = (4, 5, 3);
    let mut rng = seed::rng(1);
    let x = Tensor3::from_vec((b, t, f), (0..b * t * f).map(|_| rng.random_range(-1.0..1.0)).collect())?;
    let batch = LabeledBatch::classification(x, &[0, 1, 2, 3], 4)?;

    let stacks = [
        ("lstm", vec![LayerSpec::lstm(4, 0.0), LayerSpec::lstm(3, 0.0)], GruVariant::ResetAfter),
        ("gru (reset after)", vec![LayerSpec::gru(4, 0.0), LayerSpec::gru(3, 0.0)], GruVariant::ResetAfter),
        ("gru (reset before)", vec![LayerSpec::gru(4, 0.0), LayerSpec::gru(3, 0.0)], GruVariant::ResetBefore),
    ];
    for (name, mut layers, variant) in stacks {
        layers.push(LayerSpec::dense(5, Activation::Relu));
        layers.push(LayerSpec::dense(4, Activation::Softmax));
        let net = Network::new(NetworkSpec::new(f, Some(t), layers).with_gru_variant(variant), 7)?;
        let (_, grad) = net.loss_and_gradient(&batch, Mode::Inference)?;
        let h = 1e-5;
        let mut probe = net.clone();
        let mut worst: f64 = 0.0;
        for (k, &g) in grad.iter().enumerate() {
            let p = net.params()[k];
            probe.params_mut()[k] = p + h;
            let up = probe.loss(&batch, Mode::Inference)?;
            probe.params_mut()[k] = p - h;
            let down = probe.loss(&batch, Mode::Inference)?;
            probe.params_mut()[k] = p;
            let numeric = (up - down) / (2.0 * h);
            worst = worst.max((g - numeric).abs() / g.abs().max(numeric.abs()).max(1e-7));
        }
        println!("{name:<20} {} params, max relative error {worst:.2e}", net.parameter_count());
    }
    Ok(())
}
