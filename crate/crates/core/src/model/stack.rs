use ndarray::{Array2, ArrayView2};
use rand::Rng;

use crate::nn::{Activation, Dense, DenseCache, Gradients, Gru, GruCache, NnError, ParamStore};

/// Feedforward tanh layer, a stack of GRU layers, and a linear projection.
#[derive(Debug, Clone, PartialEq)]
pub struct Stack {
    pub input: Dense,
    pub grus: Vec<Gru>,
    pub output: Dense,
}

#[derive(Debug, Clone)]
pub struct StackCache {
    input: DenseCache,
    grus: Vec<GruCache>,
    output: DenseCache,
}

impl StackCache {
    pub fn output(&self) -> &Array2<f64> {
        self.output.output()
    }
}

/// Layer sizes of a [`Stack`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StackShape {
    pub input: usize,
    pub ff_units: usize,
    pub gru_units: usize,
    pub gru_layers: usize,
    pub output: usize,
}

impl Stack {
    pub fn new<R: Rng + ?Sized>(store: &mut ParamStore, name: &str, shape: StackShape, rng: &mut R) -> Self {
        let input = Dense::new(
            store,
            &format!("{name}.ff"),
            shape.input,
            shape.ff_units,
            Activation::Tanh,
            rng,
        );
        let mut grus = Vec::with_capacity(shape.gru_layers);
        let mut width = shape.ff_units;
        for i in 0..shape.gru_layers {
            grus.push(Gru::new(store, &format!("{name}.gru{i}"), width, shape.gru_units, rng));
            width = shape.gru_units;
        }
        let output = Dense::new(
            store,
            &format!("{name}.out"),
            width,
            shape.output,
            Activation::Linear,
            rng,
        );
        Self { input, grus, output }
    }

    pub fn bind(store: &ParamStore, name: &str) -> Result<Self, NnError> {
        let input = Dense::bind(store, &format!("{name}.ff"), Activation::Tanh)?;
        let mut grus = Vec::new();
        while store.find(&format!("{name}.gru{}.w_x", grus.len())).is_some() {
            grus.push(Gru::bind(store, &format!("{name}.gru{}", grus.len()))?);
        }
        let output = Dense::bind(store, &format!("{name}.out"), Activation::Linear)?;
        let mut width = input.output;
        for g in &grus {
            if g.input != width {
                return Err(NnError::ShapeMismatch(format!("{name}: gru input {} vs {width}", g.input)));
            }
            width = g.hidden;
        }
        if output.input != width {
            return Err(NnError::ShapeMismatch(format!("{name}: output input {} vs {width}", output.input)));
        }
        Ok(Self { input, grus, output })
    }

    pub fn input_width(&self) -> usize {
        self.input.input
    }

    pub fn output_width(&self) -> usize {
        self.output.output
    }

    pub fn forward(&self, store: &ParamStore, x: ArrayView2<'_, f64>) -> Result<StackCache, NnError> {
        let input = self.input.forward(store, x)?;
        let mut grus: Vec<GruCache> = Vec::with_capacity(self.grus.len());
        for gru in &self.grus {
            let prev = grus.last().map_or(input.output(), |c| c.output());
            let cache = gru.forward(store, prev.view(), None)?;
            grus.push(cache);
        }
        let last = grus.last().map_or(input.output(), |c| c.output());
        let output = self.output.forward(store, last.view())?;
        Ok(StackCache { input, grus, output })
    }

    /// Accumulate parameter gradients for output gradient `dy`; returns the
    /// input gradient.
    pub fn backward(
        &self,
        store: &ParamStore,
        grads: &mut Gradients,
        cache: &StackCache,
        dy: ArrayView2<'_, f64>,
    ) -> Array2<f64> {
        let mut d = self.output.backward(store, grads, &cache.output, dy);
        for (gru, gc) in self.grus.iter().zip(&cache.grus).rev() {
            d = gru.backward(store, grads, gc, d.view()).0;
        }
        self.input.backward(store, grads, &cache.input, d.view())
    }
}
