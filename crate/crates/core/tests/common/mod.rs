#![allow(dead_code)]

use nnse::model::{Model, ModelBuilder, Tensor, TensorShape};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-scale..scale)).collect()
}

pub fn vector(values: &[f64]) -> Tensor {
    Tensor::from_vec(values.to_vec())
}

pub fn image(h: usize, w: usize, ch: usize, data: Vec<f64>) -> Tensor {
    Tensor::new(TensorShape::new(vec![h, w, ch]).unwrap(), data).unwrap()
}

/// Fully connected net `inputs -> hidden... -> classes` with ReLU between
/// dense layers.
pub fn random_mlp(rng: &mut ChaCha8Rng, inputs: usize, hidden: &[usize], classes: usize) -> Model {
    let mut b = ModelBuilder::new("mlp", &[inputs]);
    let mut fan_in = inputs;
    for &h in hidden {
        b = b.dense(uniform(rng, fan_in * h, 1.0), uniform(rng, h, 0.5)).relu();
        fan_in = h;
    }
    b.dense(uniform(rng, fan_in * classes, 1.0), uniform(rng, classes, 0.5))
        .build()
        .unwrap()
}

/// Small 2-input classifier: up to three ReLU layers of at most four units.
pub fn random_toy(seed: u64) -> Model {
    let mut r = rng(seed);
    let depth = r.gen_range(1..=3);
    let hidden: Vec<usize> = (0..depth).map(|_| r.gen_range(1..=4)).collect();
    let classes = r.gen_range(2..=3);
    random_mlp(&mut r, 2, &hidden, classes)
}

/// 28x28x1 conv net with ten layers, He-style random weights.
pub fn mnist_like(seed: u64) -> Model {
    let mut r = rng(seed);
    let he = |fan_in: usize| (6.0 / fan_in as f64).sqrt();
    let w1 = uniform(&mut r, 3 * 3 * 4, he(9));
    let w2 = uniform(&mut r, 3 * 3 * 4 * 8, he(36));
    let flat = 12 * 12 * 8;
    let w3 = uniform(&mut r, flat * 80, he(flat));
    let w4 = uniform(&mut r, 80 * 10, he(80));
    ModelBuilder::new("mnist-like", &[28, 28, 1])
        .conv2d([3, 3], [1, 1], w1, uniform(&mut r, 4, 0.1))
        .relu()
        .conv2d([3, 3], [1, 1], w2, uniform(&mut r, 8, 0.1))
        .relu()
        .maxpool2d([2, 2], [2, 2])
        .flatten()
        .dense(w3, uniform(&mut r, 80, 0.1))
        .relu()
        .dense(w4, uniform(&mut r, 10, 0.1))
        .softmax()
        .build()
        .unwrap()
}

/// Digit-like 28x28 image: a few bright strokes on a dark background, values in [0, 255].
pub fn digit_image(seed: u64) -> Tensor {
    let mut r = rng(seed ^ 0x5eed);
    let mut px = vec![0.0; 28 * 28];
    for _ in 0..r.gen_range(2..5) {
        let (mut y, mut x) = (r.gen_range(6.0..22.0), r.gen_range(6.0..22.0));
        let (dy, dx): (f64, f64) = (r.gen_range(-1.0..1.0), r.gen_range(-1.0..1.0));
        for _ in 0..12 {
            for (oy, ox) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
                let (py, pxx) = (y as usize + oy, x as usize + ox);
                if py < 28 && pxx < 28 {
                    px[py * 28 + pxx] = r.gen_range(180.0..255.0f64).round();
                }
            }
            y = (y + dy).clamp(2.0, 25.0);
            x = (x + dx).clamp(2.0, 25.0);
        }
    }
    image(28, 28, 1, px)
}

/// Runs z3 on an SMT-LIB script and returns its first answer line, or
/// `None` if no z3 binary is available.
pub fn z3_answer(script: &str) -> Option<String> {
    use std::io::Write;
    use std::process::{Command, Stdio};
    let bin = std::env::var("Z3").unwrap_or_else(|_| "z3".into());
    let mut child = Command::new(bin)
        .args(["-in", "-T:60"])
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::null())
        .spawn()
        .ok()?;
    child.stdin.take()?.write_all(script.as_bytes()).ok()?;
    let out = child.wait_with_output().ok()?;
    String::from_utf8_lossy(&out.stdout)
        .lines()
        .next()
        .map(|l| l.trim().to_string())
}

/// Random constraint system over `n` variables in `[-2, 2]`, sometimes with
/// a row and its complement to create boundary cases.
pub fn random_system(seed: u64) -> (Vec<nnse::symexpr::SymVar>, Vec<nnse::symexpr::LinearConstraint>) {
    use nnse::symexpr::*;
    let mut r = rng(seed);
    let n = r.gen_range(1..=4);
    let vars: Vec<SymVar> = (0..n)
        .map(|i| SymVar {
            id: SymVarId(i as u32),
            name: format!("x{i}"),
            lower: -2.0,
            upper: 2.0,
        })
        .collect();
    let m = r.gen_range(0..=8);
    let prov = Provenance {
        layer: Some(0),
        index: 0,
        branch: Branch::ReluActive,
    };
    let mut cs = Vec::new();
    while cs.len() < m {
        let integral = r.gen_bool(0.5);
        let coef = |r: &mut ChaCha8Rng| {
            if integral {
                r.gen_range(-3..=3) as f64
            } else {
                r.gen_range(-3.0..3.0)
            }
        };
        let terms: Vec<(SymVarId, f64)> = (0..n).map(|i| (SymVarId(i as u32), coef(&mut r))).collect();
        let c = if integral {
            r.gen_range(-5..=5) as f64
        } else {
            r.gen_range(-5.0..5.0)
        };
        let rel = if r.gen_bool(0.5) { Relation::Gt } else { Relation::Ge };
        let e = AffineExpr::new(c, terms);
        if let BranchOutcome::Constraint(k) = LinearConstraint::build(e.clone(), rel, prov) {
            cs.push(k);
            if r.gen_bool(0.15) {
                let flip = if rel == Relation::Gt {
                    Relation::Ge
                } else {
                    Relation::Gt
                };
                if let BranchOutcome::Constraint(k) = LinearConstraint::build(e.neg(), flip, prov) {
                    cs.push(k);
                }
            }
        }
    }
    (vars, cs)
}
