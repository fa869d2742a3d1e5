use ndarray::{Array1, Array2};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Float, LmConfig};

const INIT_RANGE: f64 = 0.1;

/// One LSTM layer. Gate blocks along the `4H` axis are ordered
/// input, forget, candidate, output.
#[derive(Clone, Debug, PartialEq)]
pub struct LstmLayer<F> {
    /// `in x 4H`
    pub w_ih: Array2<F>,
    /// `H x 4H`
    pub w_hh: Array2<F>,
    pub bias: Array1<F>,
}

impl<F: Float> LstmLayer<F> {
    pub fn input_dim(&self) -> usize {
        self.w_ih.nrows()
    }

    pub fn hidden_dim(&self) -> usize {
        self.w_hh.nrows()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LmParameters<F = f32> {
    /// `V x E`
    pub embedding: Array2<F>,
    pub layers: Vec<LstmLayer<F>>,
    /// `H x V`
    pub out_w: Array2<F>,
    pub out_b: Array1<F>,
}

/// Borrowed view of one named tensor, row-major.
pub struct TensorRef<'a, F> {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: &'a [F],
}

impl<F: Float> LmParameters<F> {
    /// Weights uniform in [-0.1, 0.1] from a seeded stream, biases zero.
    pub fn init(config: &LmConfig, vocab_size: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut uniform = |rows: usize, cols: usize| {
            Array2::from_shape_simple_fn((rows, cols), || {
                F::from_f64(rng.gen_range(-INIT_RANGE..=INIT_RANGE)).unwrap()
            })
        };
        let (e, h) = (config.embed_dim, config.hidden_dim);
        let embedding = uniform(vocab_size, e);
        let mut layers = Vec::with_capacity(config.num_layers);
        for l in 0..config.num_layers {
            let input = if l == 0 { e } else { h };
            let w_ih = uniform(input, 4 * h);
            let w_hh = uniform(h, 4 * h);
            layers.push(LstmLayer {
                w_ih,
                w_hh,
                bias: Array1::zeros(4 * h),
            });
        }
        let out_w = uniform(h, vocab_size);
        LmParameters {
            embedding,
            layers,
            out_w,
            out_b: Array1::zeros(vocab_size),
        }
    }

    pub fn zeros_like(&self) -> Self {
        LmParameters {
            embedding: Array2::zeros(self.embedding.raw_dim()),
            layers: self
                .layers
                .iter()
                .map(|l| LstmLayer {
                    w_ih: Array2::zeros(l.w_ih.raw_dim()),
                    w_hh: Array2::zeros(l.w_hh.raw_dim()),
                    bias: Array1::zeros(l.bias.raw_dim()),
                })
                .collect(),
            out_w: Array2::zeros(self.out_w.raw_dim()),
            out_b: Array1::zeros(self.out_b.raw_dim()),
        }
    }

    pub fn vocab_size(&self) -> usize {
        self.embedding.nrows()
    }

    pub fn embed_dim(&self) -> usize {
        self.embedding.ncols()
    }

    pub fn hidden_dim(&self) -> usize {
        self.out_w.nrows()
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn num_parameters(&self) -> usize {
        self.tensors().iter().map(|t| t.data.len()).sum()
    }

    pub fn tensors(&self) -> Vec<TensorRef<'_, F>> {
        let mut out = Vec::with_capacity(3 + 3 * self.layers.len());
        out.push(view2("embedding".into(), &self.embedding));
        for (l, layer) in self.layers.iter().enumerate() {
            out.push(view2(format!("lstm.{l}.w_ih"), &layer.w_ih));
            out.push(view2(format!("lstm.{l}.w_hh"), &layer.w_hh));
            out.push(view1(format!("lstm.{l}.bias"), &layer.bias));
        }
        out.push(view2("output.weight".into(), &self.out_w));
        out.push(view1("output.bias".into(), &self.out_b));
        out
    }

    /// Mutable flat slices in the same order as [`tensors`](Self::tensors).
    pub fn tensors_mut(&mut self) -> Vec<&mut [F]> {
        let mut out: Vec<&mut [F]> = Vec::with_capacity(3 + 3 * self.layers.len());
        out.push(self.embedding.as_slice_mut().expect("standard layout"));
        for layer in &mut self.layers {
            out.push(layer.w_ih.as_slice_mut().expect("standard layout"));
            out.push(layer.w_hh.as_slice_mut().expect("standard layout"));
            out.push(layer.bias.as_slice_mut().expect("standard layout"));
        }
        out.push(self.out_w.as_slice_mut().expect("standard layout"));
        out.push(self.out_b.as_slice_mut().expect("standard layout"));
        out
    }

    pub fn squared_norm(&self) -> f64 {
        self.tensors()
            .iter()
            .flat_map(|t| t.data.iter())
            .map(|&x| {
                let v = x.to_f64().unwrap();
                v * v
            })
            .sum()
    }

    pub fn all_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.data.iter().all(|x| x.is_finite()))
    }

    /// `self += alpha * other`
    pub fn add_scaled(&mut self, alpha: F, other: &Self) {
        let src = other.tensors();
        for (dst, s) in self.tensors_mut().into_iter().zip(src) {
            for (d, &x) in dst.iter_mut().zip(s.data) {
                *d += alpha * x;
            }
        }
    }

    pub fn cast<G: Float>(&self) -> LmParameters<G> {
        let c2 = |a: &Array2<F>| a.mapv(|x| G::from_f64(x.to_f64().unwrap()).unwrap());
        let c1 = |a: &Array1<F>| a.mapv(|x| G::from_f64(x.to_f64().unwrap()).unwrap());
        LmParameters {
            embedding: c2(&self.embedding),
            layers: self
                .layers
                .iter()
                .map(|l| LstmLayer {
                    w_ih: c2(&l.w_ih),
                    w_hh: c2(&l.w_hh),
                    bias: c1(&l.bias),
                })
                .collect(),
            out_w: c2(&self.out_w),
            out_b: c1(&self.out_b),
        }
    }
}

fn view2<F: Float>(name: String, a: &Array2<F>) -> TensorRef<'_, F> {
    TensorRef {
        name,
        shape: a.shape().to_vec(),
        data: a.as_slice().expect("standard layout"),
    }
}

fn view1<F: Float>(name: String, a: &Array1<F>) -> TensorRef<'_, F> {
    TensorRef {
        name,
        shape: a.shape().to_vec(),
        data: a.as_slice().expect("standard layout"),
    }
}
