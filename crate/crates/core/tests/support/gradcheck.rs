//! Central finite-difference checks for every layer and loss.
//!
//! Each check evaluates `f = Σ forward(x) ⊙ R` for a fixed random `R`,
//! compares the analytic input and parameter gradients with central
//! differences, and reports `max |analytic - numeric| / max(|analytic|, |numeric|)`.

#![allow(dead_code)]

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use specsense::geom::Interval;
use specsense::nn::{
    bce_with_logits, binary_crossentropy, smooth_l1, softmax_cross_entropy, BatchNorm, Conv1d,
    Layer, Linear, MaxPool2, Mode, Parameterized, Relu, RoiPool, Sequential, Shape, SkipConcat,
    Tensor,
};

pub const STEP: f64 = 1e-4;
pub const REL_TOL: f64 = 1e-4;

#[derive(Debug, Clone)]
pub struct Outcome {
    pub name: &'static str,
    pub shape: String,
    pub rel_err: f64,
}

impl Outcome {
    pub fn passed(&self) -> bool {
        self.rel_err <= REL_TOL
    }
}

fn rel_err(analytic: &[f64], numeric: &[f64]) -> f64 {
    let scale = analytic
        .iter()
        .chain(numeric)
        .fold(0.0f64, |m, v| m.max(v.abs()))
        .max(1e-10);
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs())
        .fold(0.0, f64::max)
        / scale
}

fn uniform(shape: Shape, lo: f64, hi: f64, rng: &mut ChaCha8Rng) -> Tensor<f64> {
    Tensor::from_vec(
        shape,
        (0..shape.numel())
            .map(|_| rng.random_range(lo..hi))
            .collect(),
    )
    .unwrap()
}

/// Distinct values spaced 0.05 apart in random order, so no perturbation
/// can change an argmax.
fn distinct(shape: Shape, rng: &mut ChaCha8Rng) -> Tensor<f64> {
    let mut v: Vec<f64> = (0..shape.numel()).map(|i| i as f64 * 0.05 - 1.0).collect();
    v.shuffle(rng);
    Tensor::from_vec(shape, v).unwrap()
}

/// Values bounded away from zero, for ReLU.
fn away_from_zero(shape: Shape, rng: &mut ChaCha8Rng) -> Tensor<f64> {
    let v = (0..shape.numel())
        .map(|_| {
            let m = rng.random_range(0.05..2.0);
            if rng.random_bool(0.5) {
                m
            } else {
                -m
            }
        })
        .collect();
    Tensor::from_vec(shape, v).unwrap()
}

fn dot(a: &Tensor<f64>, b: &Tensor<f64>) -> f64 {
    a.data().iter().zip(b.data()).map(|(x, y)| x * y).sum()
}

/// Checks a layer's input and parameter gradients.
pub fn check_layer<L: Layer<f64>>(
    name: &'static str,
    layer: &mut L,
    x: &Tensor<f64>,
    mode: Mode,
    rng: &mut ChaCha8Rng,
) -> Outcome {
    let y = layer.forward(x, mode).unwrap();
    let r = uniform(y.shape(), -1.0, 1.0, rng);
    layer.zero_grad();
    layer.forward(x, mode).unwrap();
    let dx = layer.backward(&r).unwrap();
    let mut analytic: Vec<f64> = dx.data().to_vec();
    for p in layer.params_mut() {
        analytic.extend_from_slice(&p.grad);
    }

    let mut numeric = Vec::with_capacity(analytic.len());
    let f = |layer: &mut L, x: &Tensor<f64>| dot(&layer.forward(x, mode).unwrap(), &r);
    let mut xp = x.clone();
    for i in 0..x.data().len() {
        let orig = xp.data()[i];
        xp.data_mut()[i] = orig + STEP;
        let hi = f(layer, &xp);
        xp.data_mut()[i] = orig - STEP;
        let lo = f(layer, &xp);
        xp.data_mut()[i] = orig;
        numeric.push((hi - lo) / (2.0 * STEP));
    }
    let n_params = layer.params_mut().len();
    for pi in 0..n_params {
        let len = layer.params_mut()[pi].value.len();
        for j in 0..len {
            let orig = layer.params_mut()[pi].value[j];
            layer.params_mut()[pi].value[j] = orig + STEP;
            let hi = f(layer, x);
            layer.params_mut()[pi].value[j] = orig - STEP;
            let lo = f(layer, x);
            layer.params_mut()[pi].value[j] = orig;
            numeric.push((hi - lo) / (2.0 * STEP));
        }
    }
    Outcome {
        name,
        shape: x.shape().to_string(),
        rel_err: rel_err(&analytic, &numeric),
    }
}

fn check_roi(rng: &mut ChaCha8Rng) -> Outcome {
    let stride = [1usize, 2, 4][rng.random_range(0..3)];
    let n = rng.random_range(8..24);
    let c = rng.random_range(1..4);
    let f = distinct(Shape::new(1, n, c), rng);
    let extent = (n * stride) as f64;
    let regions: Vec<Interval> = (0..rng.random_range(1..4))
        .map(|_| {
            let s = rng.random_range(0.0..extent * 0.6);
            let e = rng
                .random_range(s + stride as f64..extent + 0.01)
                .min(extent);
            Interval::new(s, e).unwrap()
        })
        .collect();
    let out_len = rng.random_range(2..8);
    let mut pool = RoiPool::new(stride, out_len);
    let y = pool.forward(&f, &regions).unwrap();
    let r = uniform(y.shape(), -1.0, 1.0, rng);
    let analytic = pool.backward(&r).unwrap().data().to_vec();
    let mut fp = f.clone();
    let numeric: Vec<f64> = (0..f.data().len())
        .map(|i| {
            let orig = fp.data()[i];
            fp.data_mut()[i] = orig + STEP;
            let hi = dot(&pool.infer(&fp, &regions).unwrap(), &r);
            fp.data_mut()[i] = orig - STEP;
            let lo = dot(&pool.infer(&fp, &regions).unwrap(), &r);
            fp.data_mut()[i] = orig;
            (hi - lo) / (2.0 * STEP)
        })
        .collect();
    Outcome {
        name: "roi_pool",
        shape: format!("{} x {} regions", f.shape(), regions.len()),
        rel_err: rel_err(&analytic, &numeric),
    }
}

fn numeric_grad(x: &[f64], f: impl Fn(&[f64]) -> f64) -> Vec<f64> {
    let mut xp = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = xp[i];
            xp[i] = orig + STEP;
            let hi = f(&xp);
            xp[i] = orig - STEP;
            let lo = f(&xp);
            xp[i] = orig;
            (hi - lo) / (2.0 * STEP)
        })
        .collect()
}

fn check_losses(rng: &mut ChaCha8Rng) -> Vec<Outcome> {
    let n = rng.random_range(1..12);
    let targets: Vec<f64> = (0..n)
        .map(|_| f64::from(rng.random_range(0..2u8)))
        .collect();

    let z: Vec<f64> = (0..n).map(|_| rng.random_range(-4.0..4.0)).collect();
    let (_, g) = bce_with_logits(&z, &targets);
    let bce_logits = rel_err(&g, &numeric_grad(&z, |z| bce_with_logits(z, &targets).0));

    let p: Vec<f64> = (0..n).map(|_| rng.random_range(0.05..0.95)).collect();
    let (_, g) = binary_crossentropy(&p, &targets);
    let bce = rel_err(
        &g,
        &numeric_grad(&p, |p| binary_crossentropy(p, &targets).0),
    );

    let classes = rng.random_range(2..6);
    let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..classes)).collect();
    let logits: Vec<f64> = (0..n * classes)
        .map(|_| rng.random_range(-3.0..3.0))
        .collect();
    let (_, _, g) = softmax_cross_entropy(&logits, classes, &labels);
    let cce = rel_err(
        &g,
        &numeric_grad(&logits, |l| softmax_cross_entropy(l, classes, &labels).0),
    );

    // Differences kept away from the |d| = 1 seam.
    let t_star: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
    let t: Vec<f64> = t_star
        .iter()
        .map(|&s| {
            let mag = if rng.random_bool(0.5) {
                rng.random_range(0.0..0.9)
            } else {
                rng.random_range(1.1..3.0)
            };
            s + if rng.random_bool(0.5) { mag } else { -mag }
        })
        .collect();
    let (_, g) = smooth_l1(&t, &t_star);
    let sl1 = rel_err(&g, &numeric_grad(&t, |t| smooth_l1(t, &t_star).0));

    let shape = format!("n={n}");
    vec![
        Outcome {
            name: "bce_with_logits",
            shape: shape.clone(),
            rel_err: bce_logits,
        },
        Outcome {
            name: "binary_crossentropy",
            shape: shape.clone(),
            rel_err: bce,
        },
        Outcome {
            name: "softmax_cross_entropy",
            shape: format!("n={n} c={classes}"),
            rel_err: cce,
        },
        Outcome {
            name: "smooth_l1",
            shape,
            rel_err: sl1,
        },
    ]
}

/// Runs every check on `shapes` random shapes each.
pub fn run_suite(seed: u64, shapes: usize) -> Vec<Outcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for _ in 0..shapes {
        let b = rng.random_range(1..3);
        let len = 2 * rng.random_range(2..6);
        let cin = rng.random_range(1..4);
        let cout = rng.random_range(1..4);
        let k = [1usize, 3, 5, 7][rng.random_range(0..4)];

        let mut conv = Conv1d::<f64>::new("c", cin, cout, k, &mut rng).unwrap();
        let x = uniform(Shape::new(b, len, cin), -1.0, 1.0, &mut rng);
        out.push(check_layer("conv1d", &mut conv, &x, Mode::Train, &mut rng));

        let mut fc = Linear::<f64>::new("fc", cin, cout, &mut rng).unwrap();
        out.push(check_layer("linear", &mut fc, &x, Mode::Train, &mut rng));

        let xd = distinct(Shape::new(b, len, cin), &mut rng);
        out.push(check_layer(
            "maxpool",
            &mut MaxPool2::new(),
            &xd,
            Mode::Train,
            &mut rng,
        ));

        let xz = away_from_zero(Shape::new(b, len, cin), &mut rng);
        out.push(check_layer(
            "relu",
            &mut Relu::new(),
            &xz,
            Mode::Train,
            &mut rng,
        ));

        let xb = uniform(Shape::new(b, len, cin), -2.0, 3.0, &mut rng);
        let mut bn = BatchNorm::<f64>::new("bn", cin);
        perturb_affine(&mut bn, &mut rng);
        out.push(check_layer(
            "batchnorm_train",
            &mut bn,
            &xb,
            Mode::Train,
            &mut rng,
        ));
        out.push(check_layer(
            "batchnorm_eval",
            &mut bn,
            &xb,
            Mode::Eval,
            &mut rng,
        ));

        let mut body = Sequential::new();
        body.push(Conv1d::<f64>::new("s.c", cin, cout, 3, &mut rng).unwrap());
        let mut skip = SkipConcat::new("s", body, cin + cout, true);
        out.push(check_layer(
            "skip_concat",
            &mut skip,
            &xb,
            Mode::Train,
            &mut rng,
        ));

        out.push(check_roi(&mut rng));
        out.extend(check_losses(&mut rng));
    }
    out
}

fn perturb_affine(bn: &mut BatchNorm<f64>, rng: &mut ChaCha8Rng) {
    for p in bn.state_mut() {
        for v in &mut p.value {
            if p.name.ends_with("running_var") {
                *v = rng.random_range(0.5..2.0);
            } else {
                *v += rng.random_range(-0.5..0.5);
            }
        }
    }
}
