use ndarray::{Array2, ArrayView2, Axis};
use rand::Rng;

use super::param::{glorot_uniform, Gradients, ParamId, ParamStore};
use super::NnError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Tanh,
    Linear,
}

impl Activation {
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::Linear => x,
        }
    }

    /// Derivative expressed through the activation output.
    fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - y * y,
            Activation::Linear => 1.0,
        }
    }
}

/// Frame-wise affine layer `y = act(W x + b)`, `W: out x in`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub w: ParamId,
    pub b: ParamId,
    pub input: usize,
    pub output: usize,
    pub activation: Activation,
}

#[derive(Debug, Clone)]
pub struct DenseCache {
    input: Array2<f64>,
    output: Array2<f64>,
}

impl DenseCache {
    pub fn output(&self) -> &Array2<f64> {
        &self.output
    }

    pub fn into_output(self) -> Array2<f64> {
        self.output
    }
}

impl Dense {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        input: usize,
        output: usize,
        activation: Activation,
        rng: &mut R,
    ) -> Self {
        let w = store.add(
            format!("{name}.w"),
            &[output, input],
            glorot_uniform(rng, input, output, input * output),
        );
        let b = store.add(format!("{name}.b"), &[output], vec![0.0; output]);
        Self {
            w,
            b,
            input,
            output,
            activation,
        }
    }

    /// Rebind to tensors already present in `store` (checkpoint loading).
    pub fn bind(store: &ParamStore, name: &str, activation: Activation) -> Result<Self, NnError> {
        let w = store
            .find(&format!("{name}.w"))
            .ok_or_else(|| NnError::MissingParam(format!("{name}.w")))?;
        let b = store
            .find(&format!("{name}.b"))
            .ok_or_else(|| NnError::MissingParam(format!("{name}.b")))?;
        let shape = &store.tensor(w).shape;
        let (output, input) = (shape[0], shape[1]);
        if store.tensor(b).shape != [output] {
            return Err(NnError::ShapeMismatch(format!("{name}.b")));
        }
        Ok(Self {
            w,
            b,
            input,
            output,
            activation,
        })
    }

    pub fn forward(&self, store: &ParamStore, x: ArrayView2<'_, f64>) -> Result<DenseCache, NnError> {
        if x.ncols() != self.input {
            return Err(NnError::ShapeMismatch(format!(
                "dense layer expects {} inputs, got {}",
                self.input,
                x.ncols()
            )));
        }
        let mut y = x.dot(&store.matrix(self.w).t());
        y += &store.vector(self.b);
        let act = self.activation;
        if act != Activation::Linear {
            y.mapv_inplace(|v| act.apply(v));
        }
        Ok(DenseCache {
            input: x.to_owned(),
            output: y,
        })
    }

    /// Accumulate parameter gradients and return the input gradient.
    pub fn backward(
        &self,
        store: &ParamStore,
        grads: &mut Gradients,
        cache: &DenseCache,
        dy: ArrayView2<'_, f64>,
    ) -> Array2<f64> {
        let act = self.activation;
        let dz = if act == Activation::Linear {
            dy.to_owned()
        } else {
            let mut dz = dy.to_owned();
            dz.zip_mut_with(&cache.output, |d, y| *d *= act.derivative_from_output(*y));
            dz
        };
        {
            let mut gw = grads.matrix_mut(self.w, self.output, self.input);
            ndarray::linalg::general_mat_mul(1.0, &dz.t(), &cache.input, 1.0, &mut gw);
        }
        grads.vector_mut(self.b).scaled_add(1.0, &dz.sum_axis(Axis(0)));
        dz.dot(&store.matrix(self.w))
    }
}
