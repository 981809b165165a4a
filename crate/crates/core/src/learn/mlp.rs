use rand::Rng;

/// Fully connected ReLU network with a linear output layer. Parameters are
/// stored flat, layer by layer: weights (row-major, `out x in`) then biases.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Mlp {
    sizes: Vec<usize>,
    params: Vec<f64>,
}

/// Gradient with the same flat layout as [`Mlp`] parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpGrads(pub Vec<f64>);

impl Mlp {
    /// He-uniform weights, zero biases.
    pub fn new(sizes: &[usize], rng: &mut impl Rng) -> Mlp {
        assert!(sizes.len() >= 2 && sizes.iter().all(|s| *s > 0));
        let mut net = Mlp::zeros(sizes);
        for (l, &fan_in) in sizes[..sizes.len() - 1].iter().enumerate() {
            let (w, _) = net.layer_ranges(l);
            let limit = (6.0 / fan_in as f64).sqrt();
            for p in &mut net.params[w] {
                *p = rng.gen_range(-limit..limit);
            }
        }
        net
    }

    pub fn zeros(sizes: &[usize]) -> Mlp {
        let n = (0..sizes.len() - 1)
            .map(|l| sizes[l] * sizes[l + 1] + sizes[l + 1])
            .sum();
        Mlp {
            sizes: sizes.to_vec(),
            params: vec![0.0; n],
        }
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    fn layer_ranges(&self, layer: usize) -> (std::ops::Range<usize>, std::ops::Range<usize>) {
        let mut off = 0;
        for l in 0..layer {
            off += self.sizes[l] * self.sizes[l + 1] + self.sizes[l + 1];
        }
        let nw = self.sizes[layer] * self.sizes[layer + 1];
        (off..off + nw, off + nw..off + nw + self.sizes[layer + 1])
    }

    /// Activations of every layer, input first, linear output last.
    fn trace(&self, input: &[f64]) -> Vec<Vec<f64>> {
        assert_eq!(input.len(), self.sizes[0], "input width");
        let layers = self.sizes.len() - 1;
        let mut acts = Vec::with_capacity(layers + 1);
        acts.push(input.to_vec());
        for l in 0..layers {
            let (wr, br) = self.layer_ranges(l);
            let (w, b) = (&self.params[wr], &self.params[br]);
            let x = &acts[l];
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let mut y = b.to_vec();
            for o in 0..n_out {
                let row = &w[o * n_in..(o + 1) * n_in];
                y[o] += row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
            }
            if l + 1 < layers {
                for v in &mut y {
                    *v = v.max(0.0);
                }
            }
            acts.push(y);
        }
        acts
    }

    pub fn forward(&self, input: &[f64]) -> Vec<f64> {
        self.trace(input).pop().expect("output layer")
    }

    fn backward(&self, acts: &[Vec<f64>], mut delta: Vec<f64>, grads: &mut [f64]) {
        let layers = self.sizes.len() - 1;
        for l in (0..layers).rev() {
            let (wr, br) = self.layer_ranges(l);
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let x = &acts[l];
            for o in 0..n_out {
                let d = delta[o];
                if d == 0.0 {
                    continue;
                }
                grads[br.start + o] += d;
                let g = &mut grads[wr.start + o * n_in..wr.start + (o + 1) * n_in];
                for (gi, xi) in g.iter_mut().zip(x) {
                    *gi += d * xi;
                }
            }
            if l == 0 {
                break;
            }
            let w = &self.params[wr];
            let mut prev = vec![0.0; n_in];
            for o in 0..n_out {
                let d = delta[o];
                if d == 0.0 {
                    continue;
                }
                for (p, wi) in prev.iter_mut().zip(&w[o * n_in..(o + 1) * n_in]) {
                    *p += d * wi;
                }
            }
            // ReLU derivative from the post-activation value
            for (p, a) in prev.iter_mut().zip(&acts[l]) {
                if *a <= 0.0 {
                    *p = 0.0;
                }
            }
            delta = prev;
        }
    }

    /// Mean squared error of the chosen outputs against `targets` over the
    /// batch `(input, output index, target)`.
    pub fn loss(&self, batch: &[(&[f64], usize, f64)]) -> f64 {
        batch
            .iter()
            .map(|(x, a, y)| (self.forward(x)[*a] - y).powi(2))
            .sum::<f64>()
            / batch.len() as f64
    }

    pub fn loss_and_grads(&self, batch: &[(&[f64], usize, f64)]) -> (f64, MlpGrads) {
        let mut grads = vec![0.0; self.params.len()];
        let mut loss = 0.0;
        let n = batch.len() as f64;
        let out = *self.sizes.last().expect("output width");
        for (x, a, y) in batch {
            let acts = self.trace(x);
            let err = acts.last().expect("output")[*a] - y;
            loss += err * err;
            let mut delta = vec![0.0; out];
            delta[*a] = 2.0 * err / n;
            self.backward(&acts, delta, &mut grads);
        }
        (loss / n, MlpGrads(grads))
    }
}

/// Adam optimizer state for one parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(params: usize, lr: f64) -> Adam {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: vec![0.0; params],
            v: vec![0.0; params],
            t: 0,
        }
    }

    pub fn step(&mut self, net: &mut Mlp, grads: &MlpGrads) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for (i, p) in net.params.iter_mut().enumerate() {
            let g = grads.0[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            *p -= self.lr * (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + self.eps);
        }
    }
}
