//! Daubechies wavelet tables by the cascade algorithm.
//!
//! The filter has eight vanishing moments (length 16), the shortest member of
//! the family whose scaling function is twice continuously differentiable.
//! Function values and the first two derivatives are tabulated on the dyadic
//! grid of depth [`CASCADE_DEPTH`] over the support `[0, 15]` and read back by
//! linear interpolation.

use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector};

pub const CASCADE_DEPTH: u32 = 12;

/// Low-pass filter, normalized to `Σ h = √2`.
pub const FILTER: [f64; 16] = [
    0.05441584224310401,
    0.31287159091429995,
    0.6756307362972898,
    0.5853546836542067,
    -0.015829105256349306,
    -0.2840155429615469,
    0.0004724845739132828,
    0.12874742662047847,
    -0.017369301001807547,
    -0.044088253930794755,
    0.013981027917398282,
    0.008746094047405777,
    -0.004870352993451574,
    -0.00039174037337694705,
    0.0006754494064505693,
    -0.00011747678412476953,
];

/// High-pass filter `g_k = (−1)^k h_{L−1−k}`.
pub fn high_pass() -> [f64; 16] {
    let l = FILTER.len();
    std::array::from_fn(|k| if k % 2 == 0 { FILTER[l - 1 - k] } else { -FILTER[l - 1 - k] })
}

/// Tabulated `φ^{(d)}` and `ψ^{(d)}` for `d = 0, 1, 2`.
#[derive(Debug)]
pub struct WaveletTables {
    pub phi: [Vec<f64>; 3],
    pub psi: [Vec<f64>; 3],
    scale: f64,
    support: f64,
}

impl WaveletTables {
    pub fn support(&self) -> f64 {
        self.support
    }

    fn lookup(&self, table: &[f64], x: f64) -> f64 {
        if !(x >= 0.0) || x > self.support {
            return 0.0;
        }
        let pos = x * self.scale;
        let i = pos.floor() as usize;
        if i + 1 >= table.len() {
            return table[table.len() - 1];
        }
        let fr = pos - i as f64;
        table[i] * (1.0 - fr) + table[i + 1] * fr
    }

    /// `ψ^{(order)}(x)`.
    pub fn psi(&self, order: usize, x: f64) -> f64 {
        self.lookup(&self.psi[order], x)
    }

    /// `φ^{(order)}(x)`.
    pub fn phi(&self, order: usize, x: f64) -> f64 {
        self.lookup(&self.phi[order], x)
    }
}

/// Values of `φ^{(d)}` at the integers `0..L−1`.
fn integer_values(order: usize) -> Vec<f64> {
    let h = FILTER;
    let l = h.len();
    let n = l - 2;
    // Interior integers 1..=L−2; φ^{(d)} vanishes at 0 and L−1.
    let target = 0.5f64.powi(order as i32);
    let m = DMatrix::from_fn(n, n, |a, b| {
        let (i, j) = (a as isize + 1, b as isize + 1);
        let idx = 2 * i - j;
        let v = if (0..l as isize).contains(&idx) { std::f64::consts::SQRT_2 * h[idx as usize] } else { 0.0 };
        if a == b { v - target } else { v }
    });
    let svd = m.svd(false, true);
    let v_t = svd.v_t.expect("requested right singular vectors");
    let (k, _) = svd
        .singular_values
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |acc, (i, &s)| if s < acc.1 { (i, s) } else { acc });
    let v = DVector::from_iterator(n, v_t.row(k).iter().copied());
    // Σ_j (−j)^d φ^{(d)}(j) = d!
    let moment: f64 = (0..n).map(|a| (-((a + 1) as f64)).powi(order as i32) * v[a]).sum();
    let factorial = (1..=order).product::<usize>() as f64;
    let mut out = vec![0.0; l];
    for a in 0..n {
        out[a + 1] = v[a] * factorial / moment;
    }
    out
}

/// Dyadic refinement `φ^{(d)}(x) = 2^d √2 Σ h_l φ^{(d)}(2x − l)` down to depth `J`.
fn cascade(order: usize) -> Vec<f64> {
    let h = FILTER;
    let l = h.len();
    let factor = 2f64.powi(order as i32) * std::f64::consts::SQRT_2;
    let mut cur = integer_values(order);
    for level in 1..=CASCADE_DEPTH {
        let half = 1usize << (level - 1);
        let n = (l - 1) * (1 << level) + 1;
        let mut next = vec![0.0; n];
        for (i, v) in cur.iter().enumerate() {
            next[2 * i] = *v;
        }
        for k in (1..n).step_by(2) {
            let mut s = 0.0;
            for (tap, hl) in h.iter().enumerate() {
                let idx = k as isize - (tap * half) as isize;
                if idx >= 0 && (idx as usize) < cur.len() {
                    s += hl * cur[idx as usize];
                }
            }
            next[k] = factor * s;
        }
        cur = next;
    }
    cur
}

fn wavelet_from(phi: &[f64], order: usize) -> Vec<f64> {
    let g = high_pass();
    let factor = 2f64.powi(order as i32) * std::f64::consts::SQRT_2;
    let step = 1usize << CASCADE_DEPTH;
    (0..phi.len())
        .map(|i| {
            g.iter()
                .enumerate()
                .map(|(tap, gl)| {
                    let idx = 2 * i as isize - (tap * step) as isize;
                    if idx >= 0 && (idx as usize) < phi.len() {
                        gl * phi[idx as usize]
                    } else {
                        0.0
                    }
                })
                .sum::<f64>()
                * factor
        })
        .collect()
}

fn build() -> WaveletTables {
    let phi: [Vec<f64>; 3] = std::array::from_fn(cascade);
    let psi: [Vec<f64>; 3] = std::array::from_fn(|d| wavelet_from(&phi[d], d));
    WaveletTables {
        phi,
        psi,
        scale: (1u64 << CASCADE_DEPTH) as f64,
        support: (FILTER.len() - 1) as f64,
    }
}

/// Shared tables, built on first use.
pub fn tables() -> &'static WaveletTables {
    static TABLES: OnceLock<WaveletTables> = OnceLock::new();
    TABLES.get_or_init(build)
}
