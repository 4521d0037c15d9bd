use nalgebra::{DMatrix, DVector};

use crate::error::{check_dim, Error, Result};
use crate::rng::Philox;

/// Affine layer `y = W x + b` with `W` of shape `out × in`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dense {
    pub w: DMatrix<f64>,
    pub b: DVector<f64>,
}

impl Dense {
    pub fn zeros(input: usize, output: usize) -> Self {
        Self {
            w: DMatrix::zeros(output, input),
            b: DVector::zeros(output),
        }
    }

    /// Uniform `(-1/√in, 1/√in)` initialization for weights and biases.
    pub fn init(input: usize, output: usize, rng: &mut Philox) -> Self {
        let bound = 1.0 / (input.max(1) as f64).sqrt();
        let mut draw = || (2.0 * rng.uniform() - 1.0) * bound;
        // Fill row by row so the layout of random draws is independent of
        // the column-major storage.
        let mut w = DMatrix::zeros(output, input);
        for r in 0..output {
            for c in 0..input {
                w[(r, c)] = draw();
            }
        }
        let b = DVector::from_fn(output, |_, _| draw());
        Self { w, b }
    }

    pub fn input_dim(&self) -> usize {
        self.w.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.w.nrows()
    }

    /// Batched forward pass; rows of `x` are examples.
    pub fn forward(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        check_dim(self.input_dim(), x.ncols(), "layer input width")?;
        let mut y = x * self.w.transpose();
        for mut row in y.row_iter_mut() {
            row += self.b.transpose();
        }
        Ok(y)
    }

    /// Accumulates parameter gradients and returns the gradient with
    /// respect to the layer input.
    pub fn backward(&self, x: &DMatrix<f64>, dy: &DMatrix<f64>, grad: &mut Dense) -> DMatrix<f64> {
        grad.w += dy.transpose() * x;
        for row in dy.row_iter() {
            grad.b += row.transpose();
        }
        dy * &self.w
    }

    pub fn is_finite(&self) -> bool {
        self.w.iter().chain(self.b.iter()).all(|v| v.is_finite())
    }

    pub fn tensors_mut(&mut self) -> [&mut [f64]; 2] {
        [self.w.as_mut_slice(), self.b.as_mut_slice()]
    }

    pub fn tensors(&self) -> [&[f64]; 2] {
        [self.w.as_slice(), self.b.as_slice()]
    }
}

pub fn relu(a: &DMatrix<f64>) -> DMatrix<f64> {
    a.map(|v| v.max(0.0))
}

/// Zeroes entries of `d` where the pre-activation was not positive.
pub fn relu_backward(pre: &DMatrix<f64>, d: &mut DMatrix<f64>) {
    for (g, &p) in d.iter_mut().zip(pre.iter()) {
        if p <= 0.0 {
            *g = 0.0;
        }
    }
}

pub fn sigmoid(v: f64) -> f64 {
    crate::samplers::logistic(v)
}

/// Input → hidden (rectified) → latent head. The head has `L` outputs
/// (Bernoulli logits) for the Boltzmann prior and `2L` (mean, log-variance)
/// for the Gaussian baseline.
#[derive(Clone, Debug, PartialEq)]
pub struct EncoderParams {
    pub hidden: Dense,
    pub head: Dense,
}

/// `[latent ‖ batch one-hot]` → hidden (rectified) → reconstruction.
#[derive(Clone, Debug, PartialEq)]
pub struct DecoderParams {
    pub hidden: Dense,
    pub out: Dense,
}

impl EncoderParams {
    pub fn init(input: usize, hidden: usize, head: usize, rng: &mut Philox) -> Self {
        Self {
            hidden: Dense::init(input, hidden, rng),
            head: Dense::init(hidden, head, rng),
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            hidden: Dense::zeros(self.hidden.input_dim(), self.hidden.output_dim()),
            head: Dense::zeros(self.head.input_dim(), self.head.output_dim()),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.hidden.input_dim()
    }

    /// Parameter tensors in a fixed order: hidden W, hidden b, head W, head b.
    pub fn tensors(&self) -> [&[f64]; 4] {
        let [a, b] = self.hidden.tensors();
        let [c, d] = self.head.tensors();
        [a, b, c, d]
    }

    pub fn tensors_mut(&mut self) -> [&mut [f64]; 4] {
        let [a, b] = self.hidden.tensors_mut();
        let [c, d] = self.head.tensors_mut();
        [a, b, c, d]
    }

    pub fn validate(&self) -> Result<()> {
        check_dim(self.hidden.output_dim(), self.head.input_dim(), "encoder hidden width")?;
        if !self.hidden.is_finite() || !self.head.is_finite() {
            return Err(Error::NonFinite("encoder parameters"));
        }
        Ok(())
    }
}

impl DecoderParams {
    pub fn init(latent: usize, n_batches: usize, hidden: usize, output: usize, rng: &mut Philox) -> Self {
        Self {
            hidden: Dense::init(latent + n_batches, hidden, rng),
            out: Dense::init(hidden, output, rng),
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            hidden: Dense::zeros(self.hidden.input_dim(), self.hidden.output_dim()),
            out: Dense::zeros(self.out.input_dim(), self.out.output_dim()),
        }
    }

    pub fn tensors(&self) -> [&[f64]; 4] {
        let [a, b] = self.hidden.tensors();
        let [c, d] = self.out.tensors();
        [a, b, c, d]
    }

    pub fn tensors_mut(&mut self) -> [&mut [f64]; 4] {
        let [a, b] = self.hidden.tensors_mut();
        let [c, d] = self.out.tensors_mut();
        [a, b, c, d]
    }

    pub fn validate(&self) -> Result<()> {
        check_dim(self.hidden.output_dim(), self.out.input_dim(), "decoder hidden width")?;
        if !self.hidden.is_finite() || !self.out.is_finite() {
            return Err(Error::NonFinite("decoder parameters"));
        }
        Ok(())
    }
}

/// Encoder forward pass for one example, returning Bernoulli means in
/// `(0, 1)` (before clamping).
pub fn encode(x: &[f64], enc: &EncoderParams) -> Result<Vec<f64>> {
    let xm = DMatrix::from_row_slice(1, x.len(), x);
    let h = relu(&enc.hidden.forward(&xm)?);
    let logits = enc.head.forward(&h)?;
    let q: Vec<f64> = logits.iter().map(|&v| sigmoid(v)).collect();
    if q.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("encoder activations"));
    }
    Ok(q)
}

/// Decoder forward pass over `[latent ‖ batch_onehot]`.
pub fn decode(latent: &[f64], batch_onehot: &[f64], dec: &DecoderParams) -> Result<Vec<f64>> {
    let mut input = latent.to_vec();
    input.extend_from_slice(batch_onehot);
    let xm = DMatrix::from_row_slice(1, input.len(), &input);
    let h = relu(&dec.hidden.forward(&xm)?);
    Ok(dec.out.forward(&h)?.iter().copied().collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    // Straight-line loops, no matrix types.
    fn naive_mlp(x: &[f64], l1: &Dense, l2: &Dense, sig: bool) -> Vec<f64> {
        let mut hidden = vec![0.0; l1.output_dim()];
        for (j, hj) in hidden.iter_mut().enumerate() {
            let mut acc = l1.b[j];
            for (i, xi) in x.iter().enumerate() {
                acc += l1.w[(j, i)] * xi;
            }
            *hj = if acc > 0.0 { acc } else { 0.0 };
        }
        (0..l2.output_dim())
            .map(|k| {
                let mut acc = l2.b[k];
                for (j, hj) in hidden.iter().enumerate() {
                    acc += l2.w[(k, j)] * hj;
                }
                if sig {
                    1.0 / (1.0 + (-acc).exp())
                } else {
                    acc
                }
            })
            .collect()
    }

    #[test]
    fn zero_encoder_gives_one_half() {
        let enc = EncoderParams {
            hidden: Dense::zeros(4, 3),
            head: Dense::zeros(3, 5),
        };
        assert_eq!(encode(&[1.0, 2.0, 3.0, 4.0], &enc).unwrap(), vec![0.5; 5]);
    }

    #[test]
    fn zero_decoder_gives_zero() {
        let dec = DecoderParams {
            hidden: Dense::zeros(5, 3),
            out: Dense::zeros(3, 4),
        };
        assert_eq!(decode(&[0.3, 0.1, 0.9], &[1.0, 0.0], &dec).unwrap(), vec![0.0; 4]);
    }

    #[test]
    fn encoder_matches_naive_forward() {
        let mut rng = Philox::new(1, 0);
        let enc = EncoderParams::init(6, 7, 4, &mut rng);
        let x = [0.3, -1.0, 2.0, 0.0, 0.5, 1.5];
        let got = encode(&x, &enc).unwrap();
        let want = naive_mlp(&x, &enc.hidden, &enc.head, true);
        for (a, b) in got.iter().zip(&want) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn decoder_matches_naive_forward() {
        let mut rng = Philox::new(2, 0);
        let dec = DecoderParams::init(3, 2, 5, 4, &mut rng);
        let z = [0.2, 0.0, 0.7];
        let b = [0.0, 1.0];
        let got = decode(&z, &b, &dec).unwrap();
        let want = naive_mlp(&[0.2, 0.0, 0.7, 0.0, 1.0], &dec.hidden, &dec.out, false);
        for (a, b) in got.iter().zip(&want) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn hidden_permutation_leaves_output_unchanged() {
        let mut rng = Philox::new(3, 0);
        let enc = EncoderParams::init(4, 6, 3, &mut rng);
        let mut swapped = enc.clone();
        swapped.hidden.w.swap_rows(1, 4);
        swapped.hidden.b.swap_rows(1, 4);
        swapped.head.w.swap_columns(1, 4);
        let x = [0.5, -0.2, 1.0, 0.3];
        let a = encode(&x, &enc).unwrap();
        let b = encode(&x, &swapped).unwrap();
        for (u, v) in a.iter().zip(&b) {
            assert!((u - v).abs() < 1e-15);
        }
    }

    #[test]
    fn batch_input_acts_only_through_its_columns() {
        let mut rng = Philox::new(4, 0);
        let mut dec = DecoderParams::init(3, 2, 5, 4, &mut rng);
        let z = [0.2, 0.4, 0.7];
        let a = decode(&z, &[1.0, 0.0], &dec).unwrap();
        let b = decode(&z, &[0.0, 1.0], &dec).unwrap();
        assert_ne!(a, b);
        // Equalizing the two batch columns removes the dependence.
        for r in 0..5 {
            dec.hidden.w[(r, 4)] = dec.hidden.w[(r, 3)];
        }
        let a = decode(&z, &[1.0, 0.0], &dec).unwrap();
        let b = decode(&z, &[0.0, 1.0], &dec).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn dimension_errors() {
        let mut rng = Philox::new(5, 0);
        let enc = EncoderParams::init(4, 6, 3, &mut rng);
        assert!(encode(&[1.0, 2.0], &enc).is_err());
        let dec = DecoderParams::init(3, 2, 5, 4, &mut rng);
        assert!(decode(&[1.0], &[1.0, 0.0], &dec).is_err());
    }
}
