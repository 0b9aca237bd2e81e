//! Exact and permutation-sampled Shapley values on a model with a known answer.
//!
//!     cargo run --release --example shapley_toy

use litevr::explain::{exact_shapley, sampled_shapley, Background, FnModel};
use litevr::Tensor3;
use ndarray::ArrayView2;

fn main() -> litevr::Result<()> {
    // f(x) = 2 x0 - x1 + x2 x3, on window means
    let model = FnModel::new(4, 1, |w: ArrayView2<'_, f64>| {
        let m: Vec<f64> = (0..4).map(|j| w.column(j).mean().unwrap()).collect();
        vec![2.0 * m[0] - m[1] + m[2] * m[3]]
    });
    let x = Tensor3::from_vec((1, 1, 4), vec![1.0, 2.0, 3.0, 4.0])?;
    let bg = Background::from_values(vec![0.0; 4])?;

    let exact = exact_shapley(&model, x.window(0), &bg, 0)?;
    // the product term splits evenly: 12 / 2 each
    println!("exact      {:?}  (expected [2, -2, 6, 6])", exact.phi);
    println!("efficiency gap {:.1e}", exact.efficiency_gap());
    for n in [10, 24, 100, 1000] {
        let s = sampled_shapley(&model, x.window(0), &bg, n, 3, 0)?;
        let se: Vec<String> = s.std_errors.iter().map(|e| format!("{e:.3}")).collect();
        println!("{n:>5} perms {:?}  se [{}]", round(&s.phi), se.join(", "));
    }
    Ok(())
}

fn round(v: &[f64]) -> Vec<f64> {
    v.iter().map(|x| (x * 1000.0).round() / 1000.0).collect()
}
