//! WebAssembly bindings for three interactive views: a Sinkhorn plan heatmap,
//! Gromov-Wasserstein matching of 2-D point clouds, and end-to-end recovery
//! of a synthetic embedding pair.

use std::f64::consts::PI;

use hyperalign::bilingual::{
    align_bilingual_from, assignment_accuracy, init_gw, nearest_neighbors, AlignerConfig,
};
use hyperalign::synthetic::generate_family;
use hyperalign::transport::{gromov_wasserstein, sinkhorn, GwParams};
use hyperalign::Result;
use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wasm_bindgen::prelude::*;

fn js(e: hyperalign::Error) -> JsError {
    JsError::new(&e.to_string())
}

/// Transport plan between two sorted samples of `[0, 1]`.
#[wasm_bindgen]
pub struct PlanView {
    n: usize,
    plan: Vec<f64>,
    iterations: usize,
    converged: bool,
}

#[wasm_bindgen]
impl PlanView {
    pub fn size(&self) -> usize {
        self.n
    }

    /// Row-major plan rescaled so each row sums to one.
    pub fn plan(&self) -> Vec<f64> {
        self.plan.clone()
    }

    pub fn iterations(&self) -> usize {
        self.iterations
    }

    pub fn converged(&self) -> bool {
        self.converged
    }
}

pub fn sinkhorn_view(n: usize, reg: f64, seed: u64) -> Result<PlanView> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sample = || {
        let mut v: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        v.sort_by(f64::total_cmp);
        v
    };
    let (xs, ys) = (sample(), sample());
    let cost = Array2::from_shape_fn((n, n), |(i, j)| (xs[i] - ys[j]).powi(2));
    let out = sinkhorn(cost.view(), reg, 1e-9, 5000)?;
    Ok(PlanView {
        n,
        plan: out.plan.row_stochastic().into_iter().collect(),
        iterations: out.iterations,
        converged: out.converged,
    })
}

#[wasm_bindgen(js_name = sinkhornPlan)]
pub fn sinkhorn_plan(n: usize, reg: f64, seed: u64) -> std::result::Result<PlanView, JsError> {
    sinkhorn_view(n, reg, seed).map_err(js)
}

/// A spiral matched against a rotated, jittered and shuffled copy of itself.
#[wasm_bindgen]
pub struct ShapeMatch {
    source: Vec<f64>,
    target: Vec<f64>,
    matches: Vec<u32>,
    accuracy: f64,
}

#[wasm_bindgen]
impl ShapeMatch {
    /// Interleaved `x, y` coordinates of the source cloud.
    pub fn source(&self) -> Vec<f64> {
        self.source.clone()
    }

    /// Interleaved `x, y` coordinates of the target cloud.
    pub fn target(&self) -> Vec<f64> {
        self.target.clone()
    }

    /// Target index receiving the most mass from each source point.
    pub fn matches(&self) -> Vec<u32> {
        self.matches.clone()
    }

    pub fn accuracy(&self) -> f64 {
        self.accuracy
    }
}

pub fn shape_match(n: usize, angle: f64, jitter: f64, eps: f64, seed: u64) -> Result<ShapeMatch> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let source = Array2::from_shape_fn((n, 2), |(i, c)| {
        let t = i as f64 / n as f64;
        let r = 0.2 + 0.8 * t;
        let a = 3.0 * PI * t;
        if c == 0 { r * a.cos() } else { r * a.sin() }
    });
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let (s, c) = angle.sin_cos();
    let mut target = Array2::zeros((n, 2));
    for (row, &i) in order.iter().enumerate() {
        let (x, y) = (source[[i, 0]], source[[i, 1]]);
        target[[row, 0]] = c * x - s * y + jitter * (rng.random::<f64>() - 0.5);
        target[[row, 1]] = s * x + c * y + jitter * (rng.random::<f64>() - 0.5);
    }
    let mut truth = vec![0usize; n];
    for (row, &i) in order.iter().enumerate() {
        truth[i] = row;
    }
    let params = GwParams {
        eps,
        ..GwParams::default()
    };
    let plan = gromov_wasserstein(source.view(), target.view(), params)?.plan;
    let matches: Vec<u32> = plan
        .matrix()
        .rows()
        .into_iter()
        .map(|r| {
            let best = r.iter().enumerate().fold((0, f64::NEG_INFINITY), |acc, (j, &v)| if v > acc.1 { (j, v) } else { acc });
            best.0 as u32
        })
        .collect();
    let hits = matches.iter().zip(&truth).filter(|(m, t)| **m as usize == **t).count();
    Ok(ShapeMatch {
        source: source.into_iter().collect(),
        target: target.into_iter().collect(),
        matches,
        accuracy: hits as f64 / n.max(1) as f64,
    })
}

#[wasm_bindgen(js_name = matchShapes)]
pub fn match_shapes(n: usize, angle: f64, jitter: f64, eps: f64, seed: u64) -> std::result::Result<ShapeMatch, JsError> {
    shape_match(n, angle, jitter, eps, seed).map_err(js)
}

/// Nearest-neighbor accuracy after initialization and after training.
#[wasm_bindgen]
#[derive(Debug, Clone, Copy)]
pub struct Recovery {
    pub initial: f64,
    pub trained: f64,
}

pub fn recover_pair(n: usize, d: usize, sigma: f64, seed: u64) -> Result<Recovery> {
    let family = generate_family(2, n, d, sigma, seed)?;
    let cfg = AlignerConfig {
        gw_size: n,
        knn_subsample: n,
        seed,
        ..AlignerConfig::default()
    };
    let (x, y) = (&family.sets[1], &family.sets[0]);
    let truth = family.correspondence(1, 0);
    let accuracy = |q| -> Result<f64> { Ok(assignment_accuracy(&nearest_neighbors(x.matrix(), q, y.matrix())?, &truth)) };
    let q0 = init_gw(x, y, &cfg)?;
    let model = align_bilingual_from(x, y, &q0, &cfg)?;
    Ok(Recovery {
        initial: accuracy(&q0)?,
        trained: accuracy(&model.q)?,
    })
}

#[wasm_bindgen(js_name = recoverSyntheticPair)]
pub fn recover_synthetic_pair(n: usize, d: usize, sigma: f64, seed: u64) -> std::result::Result<Recovery, JsError> {
    recover_pair(n, d, sigma, seed).map_err(js)
}
