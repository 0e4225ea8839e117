//! Three-layer tanh MLP velocity field `v(x, t)` with hand-written backprop.
//!
//! Layout of the flat parameter vector, for hidden width `H`:
//!
//! | block | shape   | offset            |
//! |-------|---------|-------------------|
//! | `w1`  | `H x 3` | `0`               |
//! | `b1`  | `H`     | `3H`              |
//! | `w2`  | `H x H` | `4H`              |
//! | `b2`  | `H`     | `4H + H^2`        |
//! | `w3`  | `2 x H` | `5H + H^2`        |
//! | `b3`  | `2`     | `7H + H^2`        |
//!
//! Matrices are row-major with rows indexing outputs.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::{Error, Result, Vec2};

pub const INPUT_DIM: usize = 3;
pub const OUTPUT_DIM: usize = 2;
pub const DEFAULT_HIDDEN: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Layout {
    h: usize,
}

impl Layout {
    fn w1(self) -> usize {
        0
    }
    fn b1(self) -> usize {
        3 * self.h
    }
    fn w2(self) -> usize {
        4 * self.h
    }
    fn b2(self) -> usize {
        4 * self.h + self.h * self.h
    }
    fn w3(self) -> usize {
        5 * self.h + self.h * self.h
    }
    fn b3(self) -> usize {
        7 * self.h + self.h * self.h
    }
    fn len(self) -> usize {
        7 * self.h + self.h * self.h + 2
    }
}

/// Number of parameters for hidden width `h`: `3h + h + h^2 + h + 2h + 2`.
pub fn param_count(h: usize) -> usize {
    Layout { h }.len()
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyParams {
    hidden: usize,
    data: Vec<f64>,
}

impl PolicyParams {
    pub fn zeros(hidden: usize) -> Self {
        Self {
            hidden,
            data: vec![0.0; param_count(hidden)],
        }
    }

    /// Gaussian init scaled by `1/sqrt(fan_in)`, biases at zero.
    pub fn init(hidden: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = Self::zeros(hidden);
        let l = p.layout();
        let mut fill = |range: std::ops::Range<usize>, fan_in: usize, data: &mut [f64]| {
            let scale = 1.0 / (fan_in as f64).sqrt();
            for w in &mut data[range] {
                *w = scale * rng.sample::<f64, _>(StandardNormal);
            }
        };
        fill(l.w1()..l.b1(), INPUT_DIM, &mut p.data);
        fill(l.w2()..l.b2(), hidden, &mut p.data);
        fill(l.w3()..l.b3(), hidden, &mut p.data);
        p
    }

    pub fn from_flat(hidden: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != param_count(hidden) {
            return Err(Error::LengthMismatch {
                expected: param_count(hidden),
                got: data.len(),
            });
        }
        Ok(Self { hidden, data })
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Mutable view of the output bias.
    pub fn output_bias_mut(&mut self) -> &mut [f64] {
        let o = self.layout().b3();
        &mut self.data[o..o + OUTPUT_DIM]
    }

    fn layout(&self) -> Layout {
        Layout { h: self.hidden }
    }

    /// Forward pass that keeps the hidden activations for backprop.
    fn forward_cached(&self, x: Vec2, t: f64) -> Activations {
        let h = self.hidden;
        let l = self.layout();
        let d = &self.data;
        let input = [x[0], x[1], t];
        let mut a1 = vec![0.0; h];
        for (j, a) in a1.iter_mut().enumerate() {
            let row = &d[l.w1() + 3 * j..l.w1() + 3 * j + 3];
            let pre = d[l.b1() + j] + row[0] * input[0] + row[1] * input[1] + row[2] * input[2];
            *a = pre.tanh();
        }
        let mut a2 = vec![0.0; h];
        for (j, a) in a2.iter_mut().enumerate() {
            let row = &d[l.w2() + h * j..l.w2() + h * (j + 1)];
            let pre = d[l.b2() + j] + dot(row, &a1);
            *a = pre.tanh();
        }
        let mut out = [0.0; 2];
        for (k, o) in out.iter_mut().enumerate() {
            let row = &d[l.w3() + h * k..l.w3() + h * (k + 1)];
            *o = d[l.b3() + k] + dot(row, &a2);
        }
        Activations { input, a1, a2, out }
    }
}

struct Activations {
    input: [f64; 3],
    a1: Vec<f64>,
    a2: Vec<f64>,
    out: Vec2,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Accumulated `dLoss/dtheta`, same layout as [`PolicyParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct GradBuffer {
    hidden: usize,
    data: Vec<f64>,
}

impl GradBuffer {
    pub fn zeros_like(params: &PolicyParams) -> Self {
        Self {
            hidden: params.hidden,
            data: vec![0.0; params.data.len()],
        }
    }

    pub fn zero(&mut self) {
        self.data.iter_mut().for_each(|g| *g = 0.0);
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Adds another buffer (e.g. from a parallel worker).
    pub fn merge(&mut self, other: &GradBuffer) {
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn scale(&mut self, s: f64) {
        self.data.iter_mut().for_each(|g| *g *= s);
    }

    pub fn norm(&self) -> f64 {
        self.data.iter().map(|g| g * g).sum::<f64>().sqrt()
    }
}

/// `v_theta(x, t)`.
pub fn velocity(params: &PolicyParams, x: Vec2, t: f64) -> Result<Vec2> {
    if !x.iter().all(|v| v.is_finite()) || !t.is_finite() {
        return Err(Error::InvalidInput(format!("non-finite input x={x:?} t={t}")));
    }
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::InvalidInput(format!("time {t} outside [0, 1]")));
    }
    Ok(velocity_unchecked(params, x, t))
}

#[inline]
pub(crate) fn velocity_unchecked(params: &PolicyParams, x: Vec2, t: f64) -> Vec2 {
    params.forward_cached(x, t).out
}

/// Accumulates `d(upstream . v)/dtheta` into `grads` and returns
/// `d(upstream . v)/dx`.
pub fn velocity_backward(params: &PolicyParams, x: Vec2, t: f64, upstream: Vec2, grads: &mut GradBuffer) -> Vec2 {
    debug_assert_eq!(grads.hidden, params.hidden);
    if upstream == [0.0, 0.0] {
        return [0.0, 0.0];
    }
    let h = params.hidden;
    let l = params.layout();
    let d = &params.data;
    let act = params.forward_cached(x, t);
    let g = &mut grads.data;

    // Output layer.
    let mut d_a2 = vec![0.0; h];
    for k in 0..OUTPUT_DIM {
        let u = upstream[k];
        g[l.b3() + k] += u;
        let w_row = l.w3() + h * k;
        for j in 0..h {
            g[w_row + j] += u * act.a2[j];
            d_a2[j] += u * d[w_row + j];
        }
    }

    // Second hidden layer, through tanh' = 1 - a^2.
    let mut d_a1 = vec![0.0; h];
    for j in 0..h {
        let dz = d_a2[j] * (1.0 - act.a2[j] * act.a2[j]);
        if dz == 0.0 {
            continue;
        }
        g[l.b2() + j] += dz;
        let w_row = l.w2() + h * j;
        for i in 0..h {
            g[w_row + i] += dz * act.a1[i];
            d_a1[i] += dz * d[w_row + i];
        }
    }

    // First hidden layer.
    let mut d_in = [0.0; 3];
    for j in 0..h {
        let dz = d_a1[j] * (1.0 - act.a1[j] * act.a1[j]);
        g[l.b1() + j] += dz;
        let w_row = l.w1() + 3 * j;
        for i in 0..INPUT_DIM {
            g[w_row + i] += dz * act.input[i];
            d_in[i] += dz * d[w_row + i];
        }
    }
    [d_in[0], d_in[1]]
}
