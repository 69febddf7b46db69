//! Finite-difference helpers shared by test targets.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wembed::nn::{Tape, Tensor, Var};

pub const H: f64 = 1e-5;
pub const REL: f64 = 1e-4;

pub fn random(rows: usize, cols: usize, seed: u64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Tensor::new(rows, cols, (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

pub fn close(analytic: f64, numeric: f64) -> bool {
    let scale = analytic.abs().max(numeric.abs());
    scale < 1e-8 || (analytic - numeric).abs() <= REL * scale.max(1e-3)
}

/// `f` records a scalar loss from leaf handles; compares tape gradients to
/// central differences for every input entry.
pub fn check<F>(inputs: Vec<Tensor>, f: F)
where
    F: Fn(&mut Tape, &[Var]) -> Var,
{
    if let Err(msg) = try_check(inputs, f) {
        panic!("{msg}");
    }
}

pub fn try_check<F>(inputs: Vec<Tensor>, f: F) -> Result<(), String>
where
    F: Fn(&mut Tape, &[Var]) -> Var,
{
    let eval = |xs: &[Tensor]| {
        let mut tape = Tape::new();
        let vars: Vec<Var> = xs.iter().map(|x| tape.leaf(x.clone())).collect();
        let out = f(&mut tape, &vars);
        tape.value(out).item()
    };
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|x| tape.leaf(x.clone())).collect();
    let out = f(&mut tape, &vars);
    tape.backward(out).unwrap();
    for (k, v) in vars.iter().enumerate() {
        let grad = tape.grad(*v).cloned().unwrap_or_else(|| Tensor::zeros(inputs[k].rows(), inputs[k].cols()));
        for e in 0..inputs[k].len() {
            let mut plus = inputs.clone();
            plus[k].data_mut()[e] += H;
            let mut minus = inputs.clone();
            minus[k].data_mut()[e] -= H;
            let numeric = (eval(&plus) - eval(&minus)) / (2.0 * H);
            let analytic = grad.data()[e];
            if !close(analytic, numeric) {
                return Err(format!("input {k} entry {e}: analytic {analytic} numeric {numeric}"));
            }
        }
    }
    Ok(())
}

/// Weighted sum so every output entry gets a distinct upstream gradient.
pub fn probe(tape: &mut Tape, x: Var, seed: u64) -> Var {
    let (r, c) = tape.value(x).shape();
    let w = tape.leaf(random(r, c, seed));
    let wx = elementwise(tape, x, w);
    tape.sum_all(wx)
}

fn elementwise(tape: &mut Tape, x: Var, w: Var) -> Var {
    // (x + w)^2 - x^2 - w^2 = 2 x w
    let s = tape.add(x, w).unwrap();
    let s2 = tape.square(s);
    let x2 = tape.square(x);
    let w2 = tape.square(w);
    let a = tape.sub(s2, x2).unwrap();
    let b = tape.sub(a, w2).unwrap();
    tape.scale(b, 0.5)
}
