use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::activation::Activation;
use crate::error::{Error, Result};
use crate::nn::init::Initialization;
use crate::spline::{spline_eval, SplineCoeffs, SplineSpec};
use crate::tensor::{Graph, Param, Tensor, Var};

/// Parameters of a single KA unit `φ(x) = w_b·α(x) + w_s·Σ c_i B_i(x)`.
#[derive(Clone, Debug, PartialEq)]
pub struct KaUnitParams {
    pub w_base: f64,
    pub w_spline: f64,
    pub coeffs: SplineCoeffs,
    pub activation: Activation,
}

pub fn ka_unit_forward(x: f64, p: &KaUnitParams, spec: &SplineSpec) -> Result<f64> {
    let spline = spline_eval(x, spec, &p.coeffs)?;
    Ok(p.w_base * p.activation.apply(x) + p.w_spline * spline)
}

/// Output variable of a layer plus the graph leaves bound to its parameters,
/// in the same order as the layer's `params()`.
pub struct LayerOutput {
    pub out: Var,
    pub bindings: Vec<Var>,
}

/// A layer of KA units with one spline per edge (`out × in` units).
///
/// Storage: `w_base` and `w_spline` are `[out × in]`; `coeffs` is
/// `[out × in·nb]` with the basis index varying fastest, so the coefficients
/// of edge `(j, i)` occupy row `j`, columns `i·nb .. (i+1)·nb`.
#[derive(Clone, Debug)]
pub struct KanLayer {
    in_dim: usize,
    out_dim: usize,
    spec: SplineSpec,
    activation: Activation,
    dropout: f64,
    pub w_base: Param,
    pub w_spline: Param,
    pub coeffs: Param,
}

impl KanLayer {
    pub fn new(
        in_dim: usize,
        out_dim: usize,
        spec: SplineSpec,
        activation: Activation,
        dropout: f64,
        init: Initialization,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        check_dims(in_dim, out_dim)?;
        check_dropout(dropout)?;
        let nb = spec.basis_count();
        let w_base = init.weights(out_dim, in_dim, rng)?;
        let coeffs = init.coeff_noise(&[out_dim, in_dim * nb], rng)?;
        Ok(KanLayer {
            in_dim,
            out_dim,
            spec,
            activation,
            dropout,
            w_base: Param::new(w_base),
            w_spline: Param::new(Tensor::full(&[out_dim, in_dim], 1.0)),
            coeffs: Param::new(coeffs),
        })
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    pub fn spec(&self) -> &SplineSpec {
        &self.spec
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn param_count(&self) -> usize {
        self.w_base.len() + self.w_spline.len() + self.coeffs.len()
    }

    /// Parameters of the edge from input `i` to output `j`.
    pub fn unit(&self, j: usize, i: usize) -> KaUnitParams {
        let nb = self.spec.basis_count();
        let row = self.coeffs.value.row(j);
        KaUnitParams {
            w_base: self.w_base.value.get2(j, i),
            w_spline: self.w_spline.value.get2(j, i),
            coeffs: SplineCoeffs(row[i * nb..(i + 1) * nb].to_vec()),
            activation: self.activation,
        }
    }

    pub fn set_unit(&mut self, j: usize, i: usize, p: &KaUnitParams) -> Result<()> {
        let nb = self.spec.basis_count();
        if p.coeffs.len() != nb {
            return Err(Error::Contract(format!(
                "unit needs {nb} coefficients, got {}",
                p.coeffs.len()
            )));
        }
        let in_dim = self.in_dim;
        self.w_base.value.data_mut()[j * in_dim + i] = p.w_base;
        self.w_spline.value.data_mut()[j * in_dim + i] = p.w_spline;
        let start = j * in_dim * nb + i * nb;
        self.coeffs.value.data_mut()[start..start + nb].copy_from_slice(&p.coeffs.0);
        Ok(())
    }

    /// `out_j = Σ_i φ_{j,i}(x_i)` for every row of `x`.
    pub fn forward(
        &self,
        g: &mut Graph,
        x: Var,
        training: bool,
        rng: &mut ChaCha8Rng,
    ) -> Result<LayerOutput> {
        let (_, width) = g.value(x).dims2()?;
        if width != self.in_dim {
            return Err(Error::Dimension(format!(
                "KAN layer expects {} inputs, got {width}",
                self.in_dim
            )));
        }
        let wb = g.leaf(self.w_base.value.clone());
        let ws = g.leaf(self.w_spline.value.clone());
        let c = g.leaf(self.coeffs.value.clone());

        let act = g.map(x, self.activation);
        let base = g.matmul_t(act, wb)?;
        let basis = g.basis(x, &self.spec)?;
        let ws_rep = g.repeat_cols(ws, self.spec.basis_count())?;
        let scaled = g.mul(ws_rep, c)?;
        let spline = g.matmul_t(basis, scaled)?;
        let mut out = g.add(base, spline)?;
        if training && self.dropout > 0.0 {
            out = dropout(g, out, self.dropout, rng);
        }
        Ok(LayerOutput {
            out,
            bindings: vec![wb, ws, c],
        })
    }

    pub fn params(&self) -> Vec<&Param> {
        vec![&self.w_base, &self.w_spline, &self.coeffs]
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![&mut self.w_base, &mut self.w_spline, &mut self.coeffs]
    }
}

/// Fully connected Perceptron layer `activation(x·Wᵀ + b)` with optional
/// inverted dropout after the activation.
#[derive(Clone, Debug)]
pub struct DenseLayer {
    in_dim: usize,
    out_dim: usize,
    activation: Activation,
    dropout: f64,
    pub weight: Param,
    pub bias: Param,
}

impl DenseLayer {
    pub fn new(
        in_dim: usize,
        out_dim: usize,
        activation: Activation,
        dropout: f64,
        init: Initialization,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        check_dims(in_dim, out_dim)?;
        check_dropout(dropout)?;
        Ok(DenseLayer {
            in_dim,
            out_dim,
            activation,
            dropout,
            weight: Param::new(init.weights(out_dim, in_dim, rng)?),
            bias: Param::new(Tensor::zeros(&[out_dim])),
        })
    }

    pub fn from_parts(weight: Tensor, bias: Tensor, activation: Activation, dropout: f64) -> Result<Self> {
        let (out_dim, in_dim) = weight.dims2()?;
        if bias.len() != out_dim {
            return Err(Error::Dimension(format!(
                "bias length {} does not match {out_dim} outputs",
                bias.len()
            )));
        }
        check_dropout(dropout)?;
        Ok(DenseLayer {
            in_dim,
            out_dim,
            activation,
            dropout,
            weight: Param::new(weight),
            bias: Param::new(bias),
        })
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn param_count(&self) -> usize {
        self.out_dim * (self.in_dim + 1)
    }

    pub fn forward(
        &self,
        g: &mut Graph,
        x: Var,
        training: bool,
        rng: &mut ChaCha8Rng,
    ) -> Result<LayerOutput> {
        let (_, width) = g.value(x).dims2()?;
        if width != self.in_dim {
            return Err(Error::Dimension(format!(
                "dense layer expects {} inputs, got {width}",
                self.in_dim
            )));
        }
        let w = g.leaf(self.weight.value.clone());
        let b = g.leaf(self.bias.value.clone());
        let z = g.matmul_t(x, w)?;
        let z = g.add_row(z, b)?;
        let mut out = g.map(z, self.activation);
        if training && self.dropout > 0.0 {
            out = dropout(g, out, self.dropout, rng);
        }
        Ok(LayerOutput {
            out,
            bindings: vec![w, b],
        })
    }

    pub fn params(&self) -> Vec<&Param> {
        vec![&self.weight, &self.bias]
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![&mut self.weight, &mut self.bias]
    }
}

#[derive(Clone, Debug)]
pub enum Layer {
    Kan(KanLayer),
    Dense(DenseLayer),
}

impl Layer {
    pub fn forward(
        &self,
        g: &mut Graph,
        x: Var,
        training: bool,
        rng: &mut ChaCha8Rng,
    ) -> Result<LayerOutput> {
        match self {
            Layer::Kan(l) => l.forward(g, x, training, rng),
            Layer::Dense(l) => l.forward(g, x, training, rng),
        }
    }

    pub fn param_count(&self) -> usize {
        match self {
            Layer::Kan(l) => l.param_count(),
            Layer::Dense(l) => l.param_count(),
        }
    }

    pub fn in_dim(&self) -> usize {
        match self {
            Layer::Kan(l) => l.in_dim(),
            Layer::Dense(l) => l.in_dim(),
        }
    }

    pub fn out_dim(&self) -> usize {
        match self {
            Layer::Kan(l) => l.out_dim(),
            Layer::Dense(l) => l.out_dim(),
        }
    }

    pub fn params(&self) -> Vec<&Param> {
        match self {
            Layer::Kan(l) => l.params(),
            Layer::Dense(l) => l.params(),
        }
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        match self {
            Layer::Kan(l) => l.params_mut(),
            Layer::Dense(l) => l.params_mut(),
        }
    }
}

/// Inverted dropout: zero each entry with probability `p` and scale the
/// survivors by `1/(1-p)`.
pub fn dropout(g: &mut Graph, x: Var, p: f64, rng: &mut ChaCha8Rng) -> Var {
    let keep = 1.0 / (1.0 - p);
    let shape = g.value(x).shape().to_vec();
    let n = g.value(x).len();
    let mask: Vec<f64> = (0..n)
        .map(|_| if rng.gen::<f64>() < p { 0.0 } else { keep })
        .collect();
    let m = g.constant(Tensor::new(shape, mask).expect("mask matches input shape"));
    g.mul(x, m).expect("mask matches input shape")
}

fn check_dims(in_dim: usize, out_dim: usize) -> Result<()> {
    if in_dim == 0 || out_dim == 0 {
        return Err(Error::Config(format!(
            "layer extents must be positive, got {in_dim}->{out_dim}"
        )));
    }
    Ok(())
}

fn check_dropout(p: f64) -> Result<()> {
    if !(0.0..1.0).contains(&p) {
        return Err(Error::Config(format!("dropout probability {p} not in [0, 1)")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::grad_check;
    use rand::SeedableRng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn random_matrix(r: usize, c: usize, rng: &mut ChaCha8Rng) -> Tensor {
        Tensor::new(vec![r, c], (0..r * c).map(|_| rng.gen_range(-1.2..1.2)).collect()).unwrap()
    }

    fn randomize(layer: &mut KanLayer, rng: &mut ChaCha8Rng) {
        for p in layer.params_mut() {
            for v in p.value.data_mut() {
                *v = rng.gen_range(-1.0..1.0);
            }
        }
    }

    #[test]
    fn ka_unit_examples() {
        let spec = SplineSpec::default_domain(5, 3).unwrap();
        let relu_only = KaUnitParams {
            w_base: 1.0,
            w_spline: 0.0,
            coeffs: SplineCoeffs::zeros(8),
            activation: Activation::Relu,
        };
        assert_eq!(ka_unit_forward(2.0, &relu_only, &spec).unwrap(), 2.0);

        let ones = KaUnitParams {
            w_base: 0.0,
            w_spline: 1.0,
            coeffs: SplineCoeffs(vec![1.0; 8]),
            activation: Activation::Relu,
        };
        assert!((ka_unit_forward(0.3, &ones, &spec).unwrap() - 1.0).abs() < 1e-12);

        let c: Vec<f64> = (0..8).map(|i| 0.1 * i as f64 - 0.3).collect();
        let mixed = KaUnitParams {
            w_base: 0.5,
            w_spline: 2.0,
            coeffs: SplineCoeffs(c.clone()),
            activation: Activation::Silu,
        };
        // basis at 0 on the uniform [-1,1] grid computed from the full recursion
        let b = crate::spline::cox_de_boor(0.0, spec.knots(), 3);
        let s0: f64 = b.iter().zip(&c).map(|(b, c)| b * c).sum();
        assert!((ka_unit_forward(0.0, &mixed, &spec).unwrap() - 2.0 * s0).abs() < 1e-12);
    }

    #[test]
    fn single_edge_layer_equals_unit() {
        let spec = SplineSpec::default_domain(5, 3).unwrap();
        let mut r = rng(1);
        let mut layer = KanLayer::new(1, 1, spec.clone(), Activation::Gelu, 0.0, Initialization::KaimingNormal, &mut r).unwrap();
        randomize(&mut layer, &mut r);
        let x = random_matrix(6, 1, &mut r);
        let mut g = Graph::new();
        let xv = g.leaf(x.clone());
        let out = layer.forward(&mut g, xv, false, &mut r).unwrap().out;
        let unit = layer.unit(0, 0);
        for i in 0..6 {
            let want = ka_unit_forward(x.get2(i, 0), &unit, &spec).unwrap();
            assert!((g.value(out).get2(i, 0) - want).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_weights_give_zero_output() {
        let spec = SplineSpec::default_domain(5, 3).unwrap();
        let mut r = rng(2);
        let mut layer = KanLayer::new(3, 4, spec, Activation::Gelu, 0.0, Initialization::KaimingNormal, &mut r).unwrap();
        layer.w_base.value.data_mut().fill(0.0);
        layer.w_spline.value.data_mut().fill(0.0);
        let mut g = Graph::new();
        let xv = g.leaf(random_matrix(5, 3, &mut r));
        let out = layer.forward(&mut g, xv, false, &mut r).unwrap().out;
        assert_eq!(g.value(out).shape(), &[5, 4]);
        assert!(g.value(out).data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn kan_layer_matches_per_edge_loop() {
        let mut r = rng(3);
        for (n_in, n_out) in [(2, 3), (1, 8), (8, 8), (5, 2)] {
            let spec = SplineSpec::default_domain(r.gen_range(3..9), r.gen_range(1..5)).unwrap();
            let mut layer = KanLayer::new(n_in, n_out, spec.clone(), Activation::Silu, 0.0, Initialization::Orthogonal, &mut r).unwrap();
            randomize(&mut layer, &mut r);
            let x = random_matrix(7, n_in, &mut r);
            let mut g = Graph::new();
            let xv = g.leaf(x.clone());
            let out = layer.forward(&mut g, xv, false, &mut r).unwrap().out;
            for b in 0..7 {
                for j in 0..n_out {
                    let mut want = 0.0;
                    for i in 0..n_in {
                        want += ka_unit_forward(x.get2(b, i), &layer.unit(j, i), &spec).unwrap();
                    }
                    assert!((g.value(out).get2(b, j) - want).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn kan_layer_width_mismatch() {
        let spec = SplineSpec::default_domain(5, 3).unwrap();
        let mut r = rng(4);
        let layer = KanLayer::new(3, 2, spec, Activation::Gelu, 0.0, Initialization::KaimingNormal, &mut r).unwrap();
        let mut g = Graph::new();
        let xv = g.leaf(random_matrix(2, 4, &mut r));
        assert!(matches!(layer.forward(&mut g, xv, false, &mut r), Err(Error::Dimension(_))));
    }

    #[test]
    fn kan_layer_parameter_gradients() {
        let spec = SplineSpec::default_domain(5, 3).unwrap();
        let mut r = rng(5);
        let mut layer = KanLayer::new(3, 2, spec, Activation::Gelu, 0.0, Initialization::KaimingNormal, &mut r).unwrap();
        randomize(&mut layer, &mut r);
        let x = random_matrix(4, 3, &mut r);
        let mut g = Graph::new();
        let xv = g.leaf(x.clone());
        let out = layer.forward(&mut g, xv, false, &mut r).unwrap();
        let sq = g.mul(out.out, out.out).unwrap();
        let loss = g.sum(sq);
        let grads = g.backward(loss).unwrap();
        let h = 1e-5;
        for (group, &bind) in out.bindings.iter().enumerate() {
            let analytic = grads.get_or_zeros(bind, &g);
            for idx in 0..analytic.len() {
                let eval = |delta: f64| {
                    let mut l = layer.clone();
                    l.params_mut()[group].value.data_mut()[idx] += delta;
                    let mut g = Graph::untraced();
                    let xv = g.leaf(x.clone());
                    let o = l.forward(&mut g, xv, false, &mut rng(0)).unwrap().out;
                    g.value(o).data().iter().map(|v| v * v).sum::<f64>()
                };
                let numeric = (eval(h) - eval(-h)) / (2.0 * h);
                let a = analytic.data()[idx];
                assert!((a - numeric).abs() / a.abs().max(1.0) < 1e-5, "group {group} idx {idx}");
            }
        }
        // and w.r.t. the input
        let l2 = layer.clone();
        let f = move |g: &mut Graph, v: Var| {
            let o = l2.forward(g, v, false, &mut rng(0))?;
            let sq = g.mul(o.out, o.out)?;
            Ok(g.sum(sq))
        };
        assert!(grad_check(f, &x, 1e-5).unwrap() < 1e-5);
    }

    #[test]
    fn dense_identity_and_relu() {
        let mut r = rng(6);
        let eye = Tensor::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let layer = DenseLayer::from_parts(eye, Tensor::zeros(&[2]), Activation::Identity, 0.0).unwrap();
        let x = random_matrix(3, 2, &mut r);
        let mut g = Graph::new();
        let xv = g.leaf(x.clone());
        let out = layer.forward(&mut g, xv, false, &mut r).unwrap().out;
        assert_eq!(g.value(out), &x);

        let neg = Tensor::from_rows(&[vec![-1.0, -1.0]]).unwrap();
        let layer = DenseLayer::from_parts(neg, Tensor::zeros(&[1]), Activation::Relu, 0.0).unwrap();
        let pos = Tensor::new(vec![4, 2], vec![0.5; 8]).unwrap();
        let mut g = Graph::new();
        let xv = g.leaf(pos);
        let out = layer.forward(&mut g, xv, false, &mut r).unwrap().out;
        assert!(g.value(out).data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn dense_parameter_gradients() {
        let mut r = rng(7);
        let layer = DenseLayer::new(4, 3, Activation::Elu, 0.0, Initialization::KaimingUniform, &mut r).unwrap();
        let x = random_matrix(5, 4, &mut r);
        let mut g = Graph::new();
        let xv = g.leaf(x.clone());
        let out = layer.forward(&mut g, xv, false, &mut r).unwrap();
        let sq = g.mul(out.out, out.out).unwrap();
        let loss = g.sum(sq);
        let grads = g.backward(loss).unwrap();
        let h = 1e-5;
        for (group, &bind) in out.bindings.iter().enumerate() {
            let analytic = grads.get_or_zeros(bind, &g);
            for idx in 0..analytic.len() {
                let eval = |delta: f64| {
                    let mut l = layer.clone();
                    l.params_mut()[group].value.data_mut()[idx] += delta;
                    let mut g = Graph::untraced();
                    let xv = g.leaf(x.clone());
                    let o = l.forward(&mut g, xv, false, &mut rng(0)).unwrap().out;
                    g.value(o).data().iter().map(|v| v * v).sum::<f64>()
                };
                let numeric = (eval(h) - eval(-h)) / (2.0 * h);
                let a = analytic.data()[idx];
                assert!((a - numeric).abs() / a.abs().max(1.0) < 1e-5);
            }
        }
    }

    #[test]
    fn dropout_expectation_matches_eval_mode() {
        let mut r = rng(8);
        let layer = DenseLayer::new(3, 2, Activation::Relu, 0.2, Initialization::KaimingNormal, &mut r).unwrap();
        let x = Tensor::new(vec![1, 3], vec![0.7, 0.4, 0.9]).unwrap();
        let mut g = Graph::untraced();
        let xv = g.leaf(x.clone());
        let eval = layer.forward(&mut g, xv, false, &mut r).unwrap().out;
        let eval = g.value(eval).clone();

        let trials = 100_000;
        let mut acc = [0.0; 2];
        for _ in 0..trials {
            let mut g = Graph::untraced();
            let xv = g.leaf(x.clone());
            let out = layer.forward(&mut g, xv, true, &mut r).unwrap().out;
            for (a, v) in acc.iter_mut().zip(g.value(out).data()) {
                *a += v;
            }
        }
        for (a, e) in acc.iter().zip(eval.data()) {
            if *e == 0.0 {
                assert_eq!(*a, 0.0);
            } else {
                let mean = a / trials as f64;
                assert!((mean - e).abs() / e.abs() < 0.02, "{mean} vs {e}");
            }
        }
    }

    #[test]
    fn dropout_is_identity_in_eval_mode() {
        let mut r = rng(9);
        let layer = DenseLayer::new(3, 5, Activation::Gelu, 0.5, Initialization::KaimingNormal, &mut r).unwrap();
        let x = random_matrix(4, 3, &mut r);
        let mut a = Graph::untraced();
        let av = a.leaf(x.clone());
        let ao = layer.forward(&mut a, av, false, &mut rng(1)).unwrap().out;
        let mut b = Graph::untraced();
        let bv = b.leaf(x);
        let bo = layer.forward(&mut b, bv, false, &mut rng(2)).unwrap().out;
        assert_eq!(a.value(ao), b.value(bo));
    }

    #[test]
    fn rejects_bad_dropout() {
        let mut r = rng(10);
        assert!(DenseLayer::new(2, 2, Activation::Relu, 1.0, Initialization::KaimingNormal, &mut r).is_err());
        assert!(DenseLayer::new(2, 2, Activation::Relu, -0.1, Initialization::KaimingNormal, &mut r).is_err());
    }
}
