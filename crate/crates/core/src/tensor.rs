use ndarray::{Array2, Array3, ArrayView2, Axis};

use crate::error::{Error, Result};

/// Batch of multichannel windows, shaped `(batch, timesteps, features)`.
///
/// All entries are finite; constructors reject anything else.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor3 {
    data: Array3<f64>,
}

impl Tensor3 {
    pub fn from_vec(shape: (usize, usize, usize), data: Vec<f64>) -> Result<Self> {
        let (b, t, f) = shape;
        if b * t * f != data.len() {
            return Err(Error::shape(format!(
                "shape {b}x{t}x{f} needs {} values, got {}",
                b * t * f,
                data.len()
            )));
        }
        let data = Array3::from_shape_vec(shape, data).map_err(|e| Error::shape(e.to_string()))?;
        Self::from_array(data)
    }

    pub fn from_array(data: Array3<f64>) -> Result<Self> {
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::numeric(format!("input value at flat index {pos}"), None));
        }
        Ok(Tensor3 {
            data: data.as_standard_layout().into_owned(),
        })
    }

    pub fn zeros(shape: (usize, usize, usize)) -> Self {
        Tensor3 {
            data: Array3::zeros(shape),
        }
    }

    /// Stack `(timesteps, features)` windows into one batch.
    pub fn stack(windows: &[ArrayView2<'_, f64>]) -> Result<Self> {
        let first = windows
            .first()
            .ok_or_else(|| Error::shape("cannot stack zero windows"))?;
        let (t, f) = first.dim();
        let mut data = Array3::zeros((windows.len(), t, f));
        for (i, w) in windows.iter().enumerate() {
            if w.dim() != (t, f) {
                return Err(Error::shape(format!(
                    "window {i} is {:?}, expected {:?}",
                    w.dim(),
                    (t, f)
                )));
            }
            data.index_axis_mut(Axis(0), i).assign(w);
        }
        Self::from_array(data)
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        self.data.dim()
    }

    pub fn batch(&self) -> usize {
        self.data.dim().0
    }

    pub fn timesteps(&self) -> usize {
        self.data.dim().1
    }

    pub fn features(&self) -> usize {
        self.data.dim().2
    }

    pub fn as_array(&self) -> &Array3<f64> {
        &self.data
    }

    pub fn into_array(self) -> Array3<f64> {
        self.data
    }

    pub fn window(&self, i: usize) -> ArrayView2<'_, f64> {
        self.data.index_axis(Axis(0), i)
    }

    /// Copy out the windows at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> Tensor3 {
        Tensor3 {
            data: self.data.select(Axis(0), indices),
        }
    }

    /// Keep only the feature columns at `features`, in that order.
    pub fn select_features(&self, features: &[usize]) -> Tensor3 {
        Tensor3 {
            data: self
                .data
                .select(Axis(2), features)
                .as_standard_layout()
                .into_owned(),
        }
    }

    /// Last timestep of every window, `(batch, features)`.
    pub fn last_step(&self) -> Array2<f64> {
        let t = self.timesteps();
        self.data.index_axis(Axis(1), t - 1).to_owned()
    }

    /// Row-major flat values.
    pub fn as_slice(&self) -> &[f64] {
        self.data
            .as_slice()
            .expect("Tensor3 is kept in standard layout")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_wrong_length() {
        assert!(matches!(
            Tensor3::from_vec((2, 2, 2), vec![0.0; 7]),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn rejects_non_finite() {
        let mut v = vec![0.0; 8];
        v[3] = f64::NAN;
        assert!(matches!(
            Tensor3::from_vec((2, 2, 2), v),
            Err(Error::Numeric { .. })
        ));
    }

    #[test]
    fn select_features_keeps_order() {
        let t = Tensor3::from_vec((1, 2, 3), vec![0., 1., 2., 3., 4., 5.]).unwrap();
        let s = t.select_features(&[2, 0]);
        assert_eq!(s.as_slice(), &[2., 0., 5., 3.]);
        assert_eq!(t.last_step().into_raw_vec_and_offset().0, vec![3., 4., 5.]);
    }
}
