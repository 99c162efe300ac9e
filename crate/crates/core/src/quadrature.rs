//! Globally adaptive Gauss–Kronrod (7/15) quadrature.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_728_0,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

#[derive(Debug, Clone, Copy)]
pub struct QuadratureOptions {
    pub rel_tol: f64,
    pub abs_tol: f64,
    /// Each input interval is first split into this many equal panels.
    pub initial_panels: usize,
    pub max_panels: usize,
}

impl Default for QuadratureOptions {
    fn default() -> Self {
        Self {
            rel_tol: 1e-13,
            abs_tol: 0.0,
            initial_panels: 16,
            max_panels: 20_000,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Panel {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Panel {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Panel {}
impl PartialOrd for Panel {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Panel {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> Panel {
    let c = 0.5 * (a + b);
    let r = 0.5 * (b - a);
    let fc = f(c);
    let mut kron = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    for j in 0..7 {
        let dx = r * XGK[j];
        let s = f(c - dx) + f(c + dx);
        kron += WGK[j] * s;
        if j % 2 == 1 {
            gauss += WG[j / 2] * s;
        }
    }
    Panel {
        a,
        b,
        value: kron * r,
        error: ((kron - gauss) * r).abs(),
    }
}

/// Integrates `f` over the union of `[breaks[i], breaks[i+1]]`.
pub fn integrate<F: Fn(f64) -> f64>(f: F, breaks: &[f64], opts: &QuadratureOptions) -> Result<f64> {
    if breaks.len() < 2 || breaks.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::Quadrature("breakpoints must be strictly increasing".into()));
    }
    let mut heap = BinaryHeap::new();
    for w in breaks.windows(2) {
        let n = opts.initial_panels.max(1);
        let width = (w[1] - w[0]) / n as f64;
        for i in 0..n {
            let a = w[0] + i as f64 * width;
            let b = if i + 1 == n { w[1] } else { a + width };
            heap.push(gk15(&f, a, b));
        }
    }
    let (mut value, mut error) = heap
        .iter()
        .fold((0.0, 0.0), |(v, e), p: &Panel| (v + p.value, e + p.error));
    loop {
        if !value.is_finite() {
            return Err(Error::Quadrature(format!("non-finite integral ({value})")));
        }
        if error <= opts.abs_tol.max(opts.rel_tol * value.abs()) {
            // Re-sum to drop the drift of the running totals.
            return Ok(heap.iter().map(|p| p.value).sum());
        }
        if heap.len() >= opts.max_panels {
            return Err(Error::Quadrature(format!(
                "no convergence after {} panels: value {value}, error estimate {error}",
                heap.len()
            )));
        }
        let worst = heap.pop().expect("heap is never empty");
        let mid = 0.5 * (worst.a + worst.b);
        if !(mid > worst.a && mid < worst.b) {
            return Err(Error::Quadrature(format!(
                "panel [{}, {}] cannot be split further",
                worst.a, worst.b
            )));
        }
        let left = gk15(&f, worst.a, mid);
        let right = gk15(&f, mid, worst.b);
        value += left.value + right.value - worst.value;
        error += left.error + right.error - worst.error;
        heap.push(left);
        heap.push(right);
    }
}
