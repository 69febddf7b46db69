//! Central-difference checks of every tape primitive and of the full loss.

mod common;

use std::sync::Arc;

use common::{check, close, probe, random, H};

use wembed::dist::{sample, DistributionSpec};
use wembed::nn::{ArchConfig, EncoderParams, InitMode};
use wembed::train::{loss_and_grad, loss_full, PairBatch, RegMode, RegWeights};

#[test]
fn matmul_gradient() {
    check(vec![random(3, 4, 1), random(4, 2, 2)], |t, v| {
        let y = t.matmul(v[0], v[1]).unwrap();
        probe(t, y, 3)
    });
}

#[test]
fn add_row_gradient() {
    check(vec![random(4, 3, 4), random(1, 3, 5)], |t, v| {
        let y = t.add_row(v[0], v[1]).unwrap();
        probe(t, y, 6)
    });
}

#[test]
fn add_sub_scale_gradient() {
    check(vec![random(2, 3, 7), random(2, 3, 8)], |t, v| {
        let a = t.add(v[0], v[1]).unwrap();
        let b = t.sub(a, v[1]).unwrap();
        let c = t.sub(b, v[1]).unwrap();
        let d = t.scale(c, -1.7);
        probe(t, d, 9)
    });
}

#[test]
fn tanh_and_square_gradient() {
    check(vec![random(3, 3, 10)], |t, v| {
        let a = t.tanh(v[0]);
        let b = t.square(a);
        probe(t, b, 11)
    });
}

#[test]
fn softplus_gradient() {
    check(vec![random(4, 3, 19)], |t, v| {
        let a = t.scale(v[0], 8.0);
        let b = t.softplus(a);
        probe(t, b, 20)
    });
}

#[test]
fn segment_pool_gradient() {
    for mean in [true, false] {
        check(vec![random(6, 2, 12)], move |t, v| {
            let y = t.segment_pool(v[0], Arc::new(vec![0, 1, 4, 6]), mean).unwrap();
            probe(t, y, 13)
        });
    }
}

#[test]
fn gather_rows_gradient_with_repeats() {
    check(vec![random(4, 3, 14)], |t, v| {
        let y = t.gather_rows(v[0], Arc::new(vec![2, 0, 2, 3])).unwrap();
        probe(t, y, 15)
    });
}

#[test]
fn row_norm_gradient() {
    check(vec![random(5, 3, 16)], |t, v| {
        let y = t.row_norm(v[0]);
        probe(t, y, 17)
    });
}

#[test]
fn mean_all_gradient() {
    check(vec![random(3, 2, 18)], |t, v| {
        let y = t.square(v[0]);
        t.mean_all(y).unwrap()
    });
}

fn small_batch() -> (EncoderParams, PairBatch) {
    let arch = ArchConfig { input_dim: 1, phi_widths: vec![5, 4], rho_hidden: vec![3], ..ArchConfig::default() };
    let params = EncoderParams::init(&arch, 21, InitMode::Xavier).unwrap();
    let sets = vec![
        sample(&DistributionSpec::normal(0.0, 1.0), 6, 1).unwrap(),
        sample(&DistributionSpec::uniform(-1.0, 2.0), 5, 2).unwrap(),
        sample(&DistributionSpec::normal(1.5, 0.5), 7, 3).unwrap(),
    ];
    let batch = PairBatch::new(sets, vec![(0, 1), (0, 2), (1, 2)], vec![0.7, 1.2, 0.9])
        .unwrap()
        .with_translation(&[0.8])
        .unwrap()
        .with_scaling(-1.3)
        .unwrap();
    (params, batch)
}

#[test]
fn full_loss_gradient_matches_finite_differences() {
    let (params, batch) = small_batch();
    for mode in RegMode::ALL {
        let (_, grads) = loss_and_grad(&params, &batch, mode, RegWeights::default()).unwrap();
        for (k, g) in grads.iter().enumerate() {
            for e in 0..g.len() {
                let bump = |delta: f64| {
                    let mut p = params.clone();
                    p.tensors_mut().nth(k).unwrap().data_mut()[e] += delta;
                    loss_full(&p, &batch, mode, RegWeights::default()).unwrap().total
                };
                let numeric = (bump(H) - bump(-H)) / (2.0 * H);
                assert!(
                    close(g.data()[e], numeric),
                    "{} tensor {k} entry {e}: analytic {} numeric {numeric}",
                    mode.name(),
                    g.data()[e]
                );
            }
        }
    }
}
