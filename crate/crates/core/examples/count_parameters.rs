//! Parameter counts of the full and reduced architectures.
//!
//!     cargo run --example count_parameters -- 43 18

use litevr::nn::{count_parameters, layer_parameter_counts, Task};
use litevr::reduce::{full_spec, reduced_spec, ModelKind};

fn main() -> litevr::Result<()> {
    let args: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let full_f = args.first().copied().unwrap_or(43);
    let reduced_f = args.get(1).copied().unwrap_or(18);
    println!("{:<6} {:>9} {:>9}  {:>9} {:>9}  layers", "model", "full", "table", "reduced", "table");
    for kind in ModelKind::ALL {
        let full = full_spec(kind, full_f, 60, Task::Classification);
        let reduced = reduced_spec(kind, reduced_f, 60, Task::Classification);
        println!(
            "{:<6} {:>9} {:>9}  {:>9} {:>9}  {:?} / {:?}",
            kind.name(),
            count_parameters(&full)?,
            kind.reference_param_count(false),
            count_parameters(&reduced)?,
            kind.reference_param_count(true),
            layer_parameter_counts(&full),
            layer_parameter_counts(&reduced),
        );
    }
    // the reference totals do not fix the input width; at one input the
    // reduced LSTM lands exactly on its reference value
    let one = reduced_spec(ModelKind::Lstm, 1, 60, Task::Classification);
    println!("reduced lstm at 1 input: {}", count_parameters(&one)?);
    Ok(())
}
