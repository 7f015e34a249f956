use crate::error::NnError;
use crate::{Layer, Result, Scalar, Tensor};

/// A plain stack of layers applied in order.
pub struct Sequential<T: Scalar> {
    layers: Vec<Box<dyn Layer<T>>>,
}

impl<T: Scalar> Default for Sequential<T> {
    fn default() -> Self {
        Self { layers: Vec::new() }
    }
}

fn label<T: Scalar>(i: usize, layer: &dyn Layer<T>) -> String {
    format!("layer {} ({})", i, layer.name())
}

fn relabel(e: NnError, at: String) -> NnError {
    match e {
        NnError::Shape { detail, .. } => NnError::Shape { layer: at, detail },
        NnError::NoForwardCache { .. } => NnError::NoForwardCache { layer: at },
        other => other,
    }
}

impl<T: Scalar> Sequential<T> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(mut self, layer: impl Layer<T> + 'static) -> Self {
        self.layers.push(Box::new(layer));
        self
    }

    pub fn len(&self) -> usize {
        self.layers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.layers.is_empty()
    }

    pub fn layers(&self) -> &[Box<dyn Layer<T>>] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Box<dyn Layer<T>>] {
        &mut self.layers
    }

    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        let mut s = input.to_vec();
        for (i, l) in self.layers.iter().enumerate() {
            s = l.output_shape(&s).map_err(|e| relabel(e, label(i, l.as_ref())))?;
        }
        Ok(s)
    }

    pub fn infer(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let mut h = x.clone();
        for (i, l) in self.layers.iter().enumerate() {
            h = l.infer(&h).map_err(|e| relabel(e, label(i, l.as_ref())))?;
        }
        Ok(h)
    }

    pub fn forward(&mut self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let mut h = x.clone();
        for (i, l) in self.layers.iter_mut().enumerate() {
            h = l.forward(&h).map_err(|e| relabel(e, label(i, l.as_ref())))?;
        }
        Ok(h)
    }

    /// Backpropagates `grad_out` through the stack, accumulating parameter
    /// gradients, and returns the gradient with respect to the input.
    pub fn backward(&mut self, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
        let mut g = grad_out.clone();
        for (i, l) in self.layers.iter_mut().enumerate().rev() {
            g = l.backward(&g).map_err(|e| relabel(e, label(i, l.as_ref())))?;
        }
        Ok(g)
    }

    pub fn params(&self) -> Vec<&Tensor<T>> {
        self.layers.iter().flat_map(|l| l.params()).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor<T>> {
        self.layers.iter_mut().flat_map(|l| l.params_mut()).collect()
    }

    pub fn zero_grad(&mut self) {
        for p in self.params_mut() {
            p.zero_grad();
        }
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }
}
