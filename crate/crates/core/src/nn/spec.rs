//! Layer descriptors and closed-form parameter accounting.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Softmax,
    Linear,
}

/// Which GRU formulation to use.
///
/// `ResetAfter` keeps separate input and recurrent biases and applies the
/// reset gate after the recurrent product: `3·u·(fan_in + u + 2)` parameters.
/// `ResetBefore` has one bias per gate and resets the hidden state before the
/// product: `3·u·(fan_in + u + 1)` parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GruVariant {
    #[default]
    ResetAfter,
    ResetBefore,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum LayerSpec {
    Lstm { units: usize, recurrent_dropout: f64 },
    Gru { units: usize, recurrent_dropout: f64 },
    Dense { units: usize, activation: Activation },
    Dropout { rate: f64 },
}

impl LayerSpec {
    pub fn lstm(units: usize, recurrent_dropout: f64) -> Self {
        LayerSpec::Lstm {
            units,
            recurrent_dropout,
        }
    }

    pub fn gru(units: usize, recurrent_dropout: f64) -> Self {
        LayerSpec::Gru {
            units,
            recurrent_dropout,
        }
    }

    pub fn dense(units: usize, activation: Activation) -> Self {
        LayerSpec::Dense { units, activation }
    }

    pub fn dropout(rate: f64) -> Self {
        LayerSpec::Dropout { rate }
    }

    pub fn is_recurrent(&self) -> bool {
        matches!(self, LayerSpec::Lstm { .. } | LayerSpec::Gru { .. })
    }

    /// Output width, or `None` for dropout (width passes through).
    pub fn units(&self) -> Option<usize> {
        match *self {
            LayerSpec::Lstm { units, .. }
            | LayerSpec::Gru { units, .. }
            | LayerSpec::Dense { units, .. } => Some(units),
            LayerSpec::Dropout { .. } => None,
        }
    }

    /// Parameters of this layer given its input width.
    pub fn parameter_count(&self, fan_in: usize, gru: GruVariant) -> usize {
        match *self {
            LayerSpec::Dense { units, .. } => units * (fan_in + 1),
            LayerSpec::Lstm { units, .. } => 4 * units * (fan_in + units + 1),
            LayerSpec::Gru { units, .. } => match gru {
                GruVariant::ResetAfter => 3 * units * (fan_in + units + 2),
                GruVariant::ResetBefore => 3 * units * (fan_in + units + 1),
            },
            LayerSpec::Dropout { .. } => 0,
        }
    }
}

/// Regression or four-way severity classification, decided by the head.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Classification,
    Regression,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub input_features: usize,
    /// `None` for pure dense models, which read only the last row of a window.
    pub timesteps: Option<usize>,
    pub layers: Vec<LayerSpec>,
    #[serde(default)]
    pub gru_variant: GruVariant,
}

impl NetworkSpec {
    pub fn new(input_features: usize, timesteps: Option<usize>, layers: Vec<LayerSpec>) -> Self {
        NetworkSpec {
            input_features,
            timesteps,
            layers,
            gru_variant: GruVariant::default(),
        }
    }

    pub fn with_gru_variant(mut self, variant: GruVariant) -> Self {
        self.gru_variant = variant;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_features == 0 {
            return Err(Error::Spec("input_features must be positive".into()));
        }
        if self.timesteps == Some(0) {
            return Err(Error::Spec("timesteps must be positive".into()));
        }
        if self.layers.is_empty() {
            return Err(Error::Spec("no layers".into()));
        }
        let mut seen_dense = false;
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            match *layer {
                LayerSpec::Lstm {
                    units,
                    recurrent_dropout: rate,
                }
                | LayerSpec::Gru {
                    units,
                    recurrent_dropout: rate,
                } => {
                    if self.timesteps.is_none() {
                        return Err(Error::Spec(format!(
                            "layer {i}: recurrent layer in a spec without timesteps"
                        )));
                    }
                    if seen_dense {
                        return Err(Error::Spec(format!(
                            "layer {i}: recurrent layer after dense flattening"
                        )));
                    }
                    check_units(i, units)?;
                    check_rate(i, rate)?;
                }
                LayerSpec::Dense { units, activation } => {
                    seen_dense = true;
                    check_units(i, units)?;
                    if activation == Activation::Softmax && i != last {
                        return Err(Error::Spec(format!(
                            "layer {i}: softmax is only allowed on the output layer"
                        )));
                    }
                }
                LayerSpec::Dropout { rate } => check_rate(i, rate)?,
            }
        }
        self.task()?;
        Ok(())
    }

    /// Task implied by the output layer.
    pub fn task(&self) -> Result<Task> {
        match self.layers.last() {
            Some(LayerSpec::Dense {
                activation: Activation::Softmax,
                units,
            }) if *units >= 2 => Ok(Task::Classification),
            Some(LayerSpec::Dense {
                activation: Activation::Linear,
                units: 1,
            }) => Ok(Task::Regression),
            _ => Err(Error::Spec(
                "last layer must be Dense softmax (>= 2 units) or Dense(1, linear)".into(),
            )),
        }
    }

    pub fn output_width(&self) -> usize {
        self.layers
            .iter()
            .rev()
            .find_map(LayerSpec::units)
            .unwrap_or(self.input_features)
    }

    /// Input width seen by each layer.
    pub fn fan_ins(&self) -> Vec<usize> {
        let mut width = self.input_features;
        self.layers
            .iter()
            .map(|layer| {
                let fan_in = width;
                if let Some(u) = layer.units() {
                    width = u;
                }
                fan_in
            })
            .collect()
    }

    /// Whether recurrent layer `i` must emit its full hidden sequence, i.e.
    /// another recurrent layer follows it.
    pub fn returns_sequence(&self, i: usize) -> bool {
        self.layers[i].is_recurrent() && self.layers[i + 1..].iter().any(LayerSpec::is_recurrent)
    }

    /// True when the first weighted layer is dense, so the model reads only
    /// the final timestep of each window.
    pub fn reads_last_step(&self) -> bool {
        self.layers
            .iter()
            .find(|l| !matches!(l, LayerSpec::Dropout { .. }))
            .is_some_and(|l| !l.is_recurrent())
    }
}

fn check_units(i: usize, units: usize) -> Result<()> {
    if units == 0 {
        return Err(Error::Spec(format!("layer {i}: units must be positive")));
    }
    Ok(())
}

fn check_rate(i: usize, rate: f64) -> Result<()> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::Spec(format!(
            "layer {i}: dropout rate {rate} outside [0, 1)"
        )));
    }
    Ok(())
}

/// Per-layer parameter counts, chaining widths from `input_features`.
pub fn layer_parameter_counts(spec: &NetworkSpec) -> Vec<usize> {
    spec.layers
        .iter()
        .zip(spec.fan_ins())
        .map(|(layer, fan_in)| layer.parameter_count(fan_in, spec.gru_variant))
        .collect()
}

pub fn count_parameters(spec: &NetworkSpec) -> Result<usize> {
    spec.validate()?;
    Ok(layer_parameter_counts(spec).iter().sum())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dense_only(fan_in: usize, units: usize) -> NetworkSpec {
        NetworkSpec::new(
            fan_in,
            None,
            vec![LayerSpec::dense(units, Activation::Softmax)],
        )
    }

    #[test]
    fn dense_closed_form() {
        assert_eq!(count_parameters(&dense_only(16, 4)).unwrap(), 68);
    }

    #[test]
    fn recurrent_closed_forms() {
        assert_eq!(LayerSpec::lstm(64, 0.0).parameter_count(64, GruVariant::ResetAfter), 33024);
        assert_eq!(LayerSpec::gru(32, 0.0).parameter_count(1, GruVariant::ResetAfter), 3360);
        assert_eq!(LayerSpec::gru(32, 0.0).parameter_count(1, GruVariant::ResetBefore), 3264);
        assert_eq!(LayerSpec::dropout(0.3).parameter_count(99, GruVariant::ResetAfter), 0);
    }

    #[test]
    fn recurrent_after_dense_is_rejected() {
        let spec = NetworkSpec::new(
            3,
            Some(5),
            vec![
                LayerSpec::dense(4, Activation::Relu),
                LayerSpec::lstm(4, 0.0),
                LayerSpec::dense(2, Activation::Softmax),
            ],
        );
        assert!(matches!(count_parameters(&spec), Err(Error::Spec(_))));
    }

    #[test]
    fn recurrent_without_timesteps_is_rejected() {
        let spec = NetworkSpec::new(
            3,
            None,
            vec![LayerSpec::gru(4, 0.0), LayerSpec::dense(2, Activation::Softmax)],
        );
        assert!(spec.validate().is_err());
    }

    #[test]
    fn bad_head_and_rates() {
        let spec = NetworkSpec::new(3, None, vec![LayerSpec::dense(2, Activation::Relu)]);
        assert!(spec.validate().is_err());
        let spec = NetworkSpec::new(
            3,
            None,
            vec![LayerSpec::dropout(1.0), LayerSpec::dense(1, Activation::Linear)],
        );
        assert!(spec.validate().is_err());
    }

    #[test]
    fn sequence_handoff() {
        let spec = NetworkSpec::new(
            3,
            Some(4),
            vec![
                LayerSpec::lstm(8, 0.1),
                LayerSpec::dropout(0.1),
                LayerSpec::lstm(4, 0.1),
                LayerSpec::dense(2, Activation::Softmax),
            ],
        );
        assert!(spec.returns_sequence(0));
        assert!(!spec.returns_sequence(2));
        assert!(!spec.reads_last_step());
        assert_eq!(spec.fan_ins(), vec![3, 8, 8, 4]);
    }
}
