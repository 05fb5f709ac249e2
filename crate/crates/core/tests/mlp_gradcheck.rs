//! Backprop baseline against central finite differences of its own loss.

use pcnet::baseline::Mlp;
use pcnet::encodings::Bias;
use pcnet::gradcheck::relative_error;
use pcnet::linalg::ActivationKind;
use pcnet::Matrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn numeric_grad(mlp: &Mlp, x: &Matrix, y: &Matrix, layer: usize, h: f64) -> Matrix {
    let w = &mlp.weights()[layer];
    let mut g = Matrix::zeros(w.rows(), w.cols());
    let loss_with = |wp: Matrix| {
        let mut ws = mlp.weights().to_vec();
        ws[layer] = wp;
        let m = Mlp::from_parts(mlp.dims(), ws, mlp.hidden_activation(), mlp.output_activation(), mlp.bias()).unwrap();
        Mlp::loss(&m.forward(x).unwrap(), y).unwrap()
    };
    for r in 0..w.rows() {
        for c in 0..w.cols() {
            let mut p = w.clone();
            p.set(r, c, w.get(r, c) + h);
            let mut m = w.clone();
            m.set(r, c, w.get(r, c) - h);
            g.set(r, c, (loss_with(p) - loss_with(m)) / (2.0 * h));
        }
    }
    g
}

#[test]
fn backward_matches_finite_differences_over_100_trials() {
    let mut worst: f64 = 0.0;
    for trial in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(trial);
        let hidden = [ActivationKind::Sigmoid, ActivationKind::Tanh][trial as usize % 2];
        let bias = Bias::new(rng.gen_range(0.0..0.5)).unwrap();
        let mlp = Mlp::init(&[5, 4, 3], hidden, ActivationKind::Sigmoid, bias, trial).unwrap();
        let batch = rng.gen_range(1..=4);
        let x = Matrix::from_fn(5, batch, |_, _| rng.gen_range(-1.0..1.0));
        let y = Matrix::from_fn(3, batch, |_, _| rng.gen_range(0.0..1.0));
        let grads = mlp.backward(&x, &y).unwrap();
        for (l, g) in grads.iter().enumerate() {
            let num = numeric_grad(&mlp, &x, &y, l, 1e-6);
            let rel = relative_error(g, &num);
            worst = worst.max(rel);
            assert!(rel <= 1e-6, "trial {trial} layer {l}: relative error {rel}");
        }
    }
    eprintln!("worst relative error {worst:e}");
}
