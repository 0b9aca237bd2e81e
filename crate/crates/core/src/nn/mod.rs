//! Dense, LSTM and GRU layers with analytic gradients, Adam, and the two losses.

pub mod adam;
pub mod batch;
pub mod loss;
pub mod network;
pub mod spec;


pub use adam::AdamState;
pub use batch::{argmax, LabeledBatch, Targets};
pub use loss::{categorical_cross_entropy, rmse_loss};
pub use network::{parameter_blocks, Act, ForwardPass, Mode, Network, ParamBlock};
pub use spec::{count_parameters, layer_parameter_counts, Activation, GruVariant, LayerSpec, NetworkSpec, Task};

impl Network {
    /// One Adam update with `grads`.
    pub fn adam_step(&mut self, grads: &[f64], state: &mut AdamState) -> crate::Result<()> {
        state.step(self.params_mut(), grads)
    }
}
