use ndarray::{s, Array2, ArrayView2, Axis};
use rand::Rng;

use super::param::{glorot_uniform, orthogonal, Gradients, ParamId, ParamStore};
use super::NnError;

/// Gated recurrent layer, gates stacked as `[update; reset; candidate]`:
///
/// ```text
/// z = sigmoid(Wz x + Uz h + bz)
/// r = sigmoid(Wr x + Ur h + br)
/// n = tanh(Wn x + Un (r * h) + bn)
/// h' = (1 - z) * h + z * n
/// ```
#[derive(Debug, Clone, PartialEq)]
pub struct Gru {
    pub w_x: ParamId,
    pub w_h: ParamId,
    pub b: ParamId,
    pub input: usize,
    pub hidden: usize,
}

#[derive(Debug, Clone)]
pub struct GruCache {
    input: Array2<f64>,
    h0: Vec<f64>,
    z: Array2<f64>,
    r: Array2<f64>,
    n: Array2<f64>,
    rh: Array2<f64>,
    h: Array2<f64>,
}

impl GruCache {
    /// Hidden states, one row per frame.
    pub fn output(&self) -> &Array2<f64> {
        &self.h
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for c in 0..chunks {
        let i = c * 4;
        acc[0] += a[i] * b[i];
        acc[1] += a[i + 1] * b[i + 1];
        acc[2] += a[i + 2] * b[i + 2];
        acc[3] += a[i + 3] * b[i + 3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for i in chunks * 4..a.len() {
        s += a[i] * b[i];
    }
    s
}

#[inline]
fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

impl Gru {
    pub fn new<R: Rng + ?Sized>(store: &mut ParamStore, name: &str, input: usize, hidden: usize, rng: &mut R) -> Self {
        let mut w_x = Vec::with_capacity(3 * hidden * input);
        let mut w_h = Vec::with_capacity(3 * hidden * hidden);
        for _ in 0..3 {
            w_x.extend(glorot_uniform(rng, input, hidden, hidden * input));
            w_h.extend(orthogonal(rng, hidden));
        }
        let w_x = store.add(format!("{name}.w_x"), &[3 * hidden, input], w_x);
        let w_h = store.add(format!("{name}.w_h"), &[3 * hidden, hidden], w_h);
        let b = store.add(format!("{name}.b"), &[3 * hidden], vec![0.0; 3 * hidden]);
        Self {
            w_x,
            w_h,
            b,
            input,
            hidden,
        }
    }

    pub fn bind(store: &ParamStore, name: &str) -> Result<Self, NnError> {
        let find = |suffix: &str| {
            let full = format!("{name}.{suffix}");
            store.find(&full).ok_or(NnError::MissingParam(full))
        };
        let (w_x, w_h, b) = (find("w_x")?, find("w_h")?, find("b")?);
        let shape = &store.tensor(w_x).shape;
        let (hidden, input) = (shape[0] / 3, shape[1]);
        if store.tensor(w_h).shape != [3 * hidden, hidden] || store.tensor(b).shape != [3 * hidden] {
            return Err(NnError::ShapeMismatch(format!("gru {name}")));
        }
        Ok(Self {
            w_x,
            w_h,
            b,
            input,
            hidden,
        })
    }

    /// One recurrence step, standalone (no cache).
    pub fn step(&self, store: &ParamStore, x: &[f64], h_prev: &[f64]) -> Vec<f64> {
        let hs = self.hidden;
        let w_x = &store.tensor(self.w_x).values;
        let w_h = &store.tensor(self.w_h).values;
        let b = &store.tensor(self.b).values;
        let pre = |g: usize, j: usize| {
            let row = g * hs + j;
            dot(&w_x[row * self.input..(row + 1) * self.input], x) + b[row]
        };
        let z: Vec<f64> = (0..hs)
            .map(|j| sigmoid(pre(0, j) + dot(&w_h[j * hs..(j + 1) * hs], h_prev)))
            .collect();
        let r: Vec<f64> = (0..hs)
            .map(|j| sigmoid(pre(1, j) + dot(&w_h[(hs + j) * hs..(hs + j + 1) * hs], h_prev)))
            .collect();
        let rh: Vec<f64> = r.iter().zip(h_prev).map(|(a, b)| a * b).collect();
        (0..hs)
            .map(|j| {
                let n = (pre(2, j) + dot(&w_h[(2 * hs + j) * hs..(2 * hs + j + 1) * hs], &rh)).tanh();
                (1.0 - z[j]) * h_prev[j] + z[j] * n
            })
            .collect()
    }

    pub fn forward(
        &self,
        store: &ParamStore,
        x: ArrayView2<'_, f64>,
        h0: Option<&[f64]>,
    ) -> Result<GruCache, NnError> {
        let hs = self.hidden;
        if x.ncols() != self.input {
            return Err(NnError::ShapeMismatch(format!(
                "gru expects {} inputs, got {}",
                self.input,
                x.ncols()
            )));
        }
        let h0 = match h0 {
            Some(h) if h.len() != hs => {
                return Err(NnError::ShapeMismatch(format!("h0 has {} values, expected {hs}", h.len())))
            }
            Some(h) => h.to_vec(),
            None => vec![0.0; hs],
        };
        let t_len = x.nrows();
        let mut gx = x.dot(&store.matrix(self.w_x).t());
        gx += &store.vector(self.b);
        let w_h = &store.tensor(self.w_h).values;

        let mut z = Array2::zeros((t_len, hs));
        let mut r = Array2::zeros((t_len, hs));
        let mut n = Array2::zeros((t_len, hs));
        let mut rh = Array2::zeros((t_len, hs));
        let mut h = Array2::zeros((t_len, hs));
        let mut h_prev = h0.clone();
        let mut rh_t = vec![0.0; hs];
        for t in 0..t_len {
            let g = gx.row(t);
            let g = g.as_slice().expect("contiguous row");
            for j in 0..hs {
                let zj = sigmoid(g[j] + dot(&w_h[j * hs..(j + 1) * hs], &h_prev));
                let rj = sigmoid(g[hs + j] + dot(&w_h[(hs + j) * hs..(hs + j + 1) * hs], &h_prev));
                z[[t, j]] = zj;
                r[[t, j]] = rj;
                rh_t[j] = rj * h_prev[j];
            }
            for j in 0..hs {
                let row = 2 * hs + j;
                let nj = (g[row] + dot(&w_h[row * hs..(row + 1) * hs], &rh_t)).tanh();
                n[[t, j]] = nj;
                let zj = z[[t, j]];
                let hj = (1.0 - zj) * h_prev[j] + zj * nj;
                h[[t, j]] = hj;
                rh[[t, j]] = rh_t[j];
            }
            h_prev.copy_from_slice(h.row(t).as_slice().expect("contiguous row"));
        }
        Ok(GruCache {
            input: x.to_owned(),
            h0,
            z,
            r,
            n,
            rh,
            h,
        })
    }

    /// Backpropagation through time. `dh` is the gradient of the loss with
    /// respect to every output state. Returns `(d input, d h0)`.
    pub fn backward(
        &self,
        store: &ParamStore,
        grads: &mut Gradients,
        cache: &GruCache,
        dh: ArrayView2<'_, f64>,
    ) -> (Array2<f64>, Vec<f64>) {
        let hs = self.hidden;
        let t_len = cache.h.nrows();
        let w_h = &store.tensor(self.w_h).values;
        let mut da = Array2::<f64>::zeros((t_len, 3 * hs));
        let mut h_prev_all = Array2::<f64>::zeros((t_len, hs));
        let mut dh_next = vec![0.0; hs];
        let mut dh_prev = vec![0.0; hs];
        let mut d_rh = vec![0.0; hs];
        let mut da_zr = vec![0.0; 2 * hs];
        for t in (0..t_len).rev() {
            let h_prev: Vec<f64> = if t == 0 {
                cache.h0.clone()
            } else {
                cache.h.row(t - 1).to_vec()
            };
            h_prev_all.row_mut(t).assign(&ndarray::ArrayView1::from(&h_prev[..]));
            let mut da_t = da.row_mut(t);
            let da_t = da_t.as_slice_mut().expect("contiguous row");
            d_rh.fill(0.0);
            for j in 0..hs {
                let d = dh[[t, j]] + dh_next[j];
                let (zj, nj) = (cache.z[[t, j]], cache.n[[t, j]]);
                dh_prev[j] = d * (1.0 - zj);
                let dn = d * zj;
                let dz = d * (nj - h_prev[j]);
                da_t[2 * hs + j] = dn * (1.0 - nj * nj);
                da_t[j] = dz * zj * (1.0 - zj);
            }
            // d(r*h) = Un^T da_n
            for i in 0..hs {
                let row = 2 * hs + i;
                axpy(da_t[row], &w_h[row * hs..(row + 1) * hs], &mut d_rh);
            }
            for j in 0..hs {
                let rj = cache.r[[t, j]];
                dh_prev[j] += d_rh[j] * rj;
                let dr = d_rh[j] * h_prev[j];
                da_t[hs + j] = dr * rj * (1.0 - rj);
            }
            da_zr.copy_from_slice(&da_t[..2 * hs]);
            for (i, &a) in da_zr.iter().enumerate() {
                axpy(a, &w_h[i * hs..(i + 1) * hs], &mut dh_prev);
            }
            dh_next.copy_from_slice(&dh_prev);
        }
        {
            let mut gwh = grads.matrix_mut(self.w_h, 3 * hs, hs);
            ndarray::linalg::general_mat_mul(
                1.0,
                &da.slice(s![.., ..2 * hs]).t(),
                &h_prev_all,
                1.0,
                &mut gwh.slice_mut(s![..2 * hs, ..]),
            );
            ndarray::linalg::general_mat_mul(
                1.0,
                &da.slice(s![.., 2 * hs..]).t(),
                &cache.rh,
                1.0,
                &mut gwh.slice_mut(s![2 * hs.., ..]),
            );
        }
        {
            let mut gwx = grads.matrix_mut(self.w_x, 3 * hs, self.input);
            ndarray::linalg::general_mat_mul(1.0, &da.t(), &cache.input, 1.0, &mut gwx);
        }
        grads.vector_mut(self.b).scaled_add(1.0, &da.sum_axis(Axis(0)));
        let dx = da.dot(&store.matrix(self.w_x));
        (dx, dh_next)
    }
}
