//! Dense diagonalization and ergodicity diagnostics.

use std::collections::HashMap;
use std::fmt::Write as _;

use faer::{c64, Mat, Side};
use serde::{Deserialize, Serialize};

use crate::basis::SpinConfig;
use crate::error::{Error, Result};
use crate::model::HamiltonianMatrix;

/// Mean gap ratio of Poissonian levels, `2 ln 2 - 1`.
pub const R_POISSON: f64 = 0.386_294_361_119_890_6;
/// Mean gap ratio of the Gaussian orthogonal ensemble.
pub const R_GOE: f64 = 0.5307;

/// Levels closer than this (in Hamiltonian units) are treated as one.
pub const DEGENERACY_TOL: f64 = 1e-12;

/// Largest dimension handed to the dense solver.
pub const DENSE_CAP: usize = 30_000;

/// Default number of central eigenpairs for mid-spectrum diagnostics.
pub const MID_SPECTRUM_COUNT: usize = 50;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Window {
    Full,
    /// The given number of eigenpairs closest to `(E_min + E_max) / 2`.
    Mid(usize),
}

/// Eigenpairs in ascending energy order; `vectors` holds them as columns.
#[derive(Clone, Debug)]
pub struct EigenData {
    pub energies: Vec<f64>,
    pub vectors: Mat<f64>,
    /// `(E_n - E_min)/(E_max - E_min)` over the full spectrum; 0 for a single level.
    pub energy_density: Vec<f64>,
    pub e_min: f64,
    pub e_max: f64,
    /// Index of the first returned level within the full spectrum.
    pub offset: usize,
}

impl EigenData {
    pub fn len(&self) -> usize {
        self.energies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.energies.is_empty()
    }

    pub fn vector(&self, n: usize) -> Vec<f64> {
        self.vectors.col(n).iter().copied().collect()
    }
}

fn dense_checked(h: &HamiltonianMatrix) -> Result<Mat<f64>> {
    if h.dim() == 0 {
        return Err(Error::Solver("empty matrix".into()));
    }
    if h.dim() > DENSE_CAP {
        return Err(Error::DimensionTooLarge { dim: h.dim(), cap: DENSE_CAP });
    }
    Ok(h.to_dense())
}

/// All eigenvalues, ascending.
pub fn eigenvalues(h: &HamiltonianMatrix) -> Result<Vec<f64>> {
    let m = dense_checked(h)?;
    let mut ev = m.self_adjoint_eigenvalues(Side::Lower).map_err(|e| Error::Solver(format!("{e:?}")))?;
    ev.sort_by(|a, b| a.total_cmp(b));
    Ok(ev)
}

/// Index range of `count` consecutive levels centred on the spectral midpoint.
pub fn mid_window(energies: &[f64], count: usize) -> std::ops::Range<usize> {
    let n = energies.len();
    if count >= n || n == 0 {
        return 0..n;
    }
    let mid = 0.5 * (energies[0] + energies[n - 1]);
    let below = energies.partition_point(|&e| e < mid);
    let start = below.saturating_sub(count / 2).min(n - count);
    start..start + count
}

pub fn diagonalize(h: &HamiltonianMatrix, window: Window) -> Result<EigenData> {
    let m = dense_checked(h)?;
    let evd = m.self_adjoint_eigen(Side::Lower).map_err(|e| Error::Solver(format!("{e:?}")))?;
    let all: Vec<f64> = evd.S().column_vector().iter().copied().collect();
    let n = all.len();
    let range = match window {
        Window::Full => 0..n,
        Window::Mid(count) => mid_window(&all, count),
    };
    let u = evd.U();
    let vectors = Mat::<f64>::from_fn(n, range.len(), |r, c| u[(r, range.start + c)]);

    let scale = all.iter().fold(1.0f64, |s, e| s.max(e.abs()));
    let threshold = 1e-8 * scale;
    let mut hv = vec![0.0; n];
    for (k, idx) in range.clone().enumerate() {
        let v: Vec<f64> = vectors.col(k).iter().copied().collect();
        h.apply(&v, &mut hv);
        let residual = hv.iter().zip(&v).map(|(a, b)| (a - all[idx] * b).powi(2)).sum::<f64>().sqrt();
        if residual.is_nan() || residual > threshold {
            return Err(Error::Residual { residual, threshold });
        }
    }

    let (e_min, e_max) = (all[0], all[n - 1]);
    let span = e_max - e_min;
    let energies: Vec<f64> = all[range.clone()].to_vec();
    let energy_density = energies.iter().map(|e| if span > 0.0 { (e - e_min) / span } else { 0.0 }).collect();
    Ok(EigenData { energies, vectors, energy_density, e_min, e_max, offset: range.start })
}

/// Normalized histogram over fixed bins; `density` integrates to 1 over the bins
/// (mass outside the range is dropped from the count but not the normalization).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub density: Vec<f64>,
}

impl Histogram {
    pub fn new(values: &[f64], lo: f64, hi: f64, bins: usize) -> Self {
        let width = (hi - lo) / bins as f64;
        let mut counts = vec![0usize; bins];
        for &v in values {
            if v >= lo && v < hi {
                counts[((v - lo) / width) as usize] += 1;
            } else if v == hi {
                counts[bins - 1] += 1;
            }
        }
        let total = values.len().max(1) as f64;
        Self {
            edges: (0..=bins).map(|i| lo + i as f64 * width).collect(),
            density: counts.iter().map(|&c| c as f64 / (total * width)).collect(),
        }
    }

    pub fn centres(&self) -> Vec<f64> {
        self.edges.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
    }

    pub fn to_csv(&self, x_name: &str, y_name: &str) -> String {
        let mut out = format!("{x_name},{y_name}\n");
        for (x, y) in self.centres().iter().zip(&self.density) {
            let _ = writeln!(out, "{x:.6},{y:.8}");
        }
        out
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RStats {
    pub mean_r: f64,
    pub r_values: Vec<f64>,
    pub r_histogram: Histogram,
    /// Distribution of spacings divided by their mean within the window.
    pub spacing_histogram: Histogram,
    /// Number of levels dropped as exact degeneracies.
    pub merged_degeneracies: usize,
    pub levels: usize,
}

/// Gap-ratio statistics of an ascending spectrum.
pub fn r_statistics(energies: &[f64]) -> Result<RStats> {
    let mut levels: Vec<f64> = Vec::with_capacity(energies.len());
    let mut merged = 0;
    for &e in energies {
        match levels.last() {
            Some(&last) if e - last < DEGENERACY_TOL => merged += 1,
            _ => levels.push(e),
        }
    }
    if levels.len() < 3 {
        return Err(Error::TooFewLevels { needed: 3, got: levels.len() });
    }
    let spacings: Vec<f64> = levels.windows(2).map(|w| w[1] - w[0]).collect();
    let r_values: Vec<f64> = spacings.windows(2).map(|w| w[0].min(w[1]) / w[0].max(w[1])).collect();
    let mean_r = r_values.iter().sum::<f64>() / r_values.len() as f64;
    let mean_s = spacings.iter().sum::<f64>() / spacings.len() as f64;
    let normalized: Vec<f64> = spacings.iter().map(|s| s / mean_s).collect();
    Ok(RStats {
        mean_r,
        r_histogram: Histogram::new(&r_values, 0.0, 1.0, 20),
        spacing_histogram: Histogram::new(&normalized, 0.0, 4.0, 40),
        r_values,
        merged_degeneracies: merged,
        levels: levels.len(),
    })
}

/// Amplitude types accepted by the Schmidt decomposition.
pub trait Amplitude: Copy + Send + Sync + 'static {
    fn norm_sqr(self) -> f64;
    fn zero() -> Self;
    /// Squared singular values of a row-major `rows x cols` coefficient block.
    fn schmidt_weights(block: &[Self], rows: usize, cols: usize) -> Result<Vec<f64>>;
}

impl Amplitude for f64 {
    fn norm_sqr(self) -> f64 {
        self * self
    }
    fn zero() -> Self {
        0.0
    }
    fn schmidt_weights(block: &[Self], rows: usize, cols: usize) -> Result<Vec<f64>> {
        let m = Mat::<f64>::from_fn(rows, cols, |r, c| block[r * cols + c]);
        let sv = m.singular_values().map_err(|e| Error::Solver(format!("{e:?}")))?;
        Ok(sv.into_iter().map(|s| s * s).collect())
    }
}

impl Amplitude for c64 {
    fn norm_sqr(self) -> f64 {
        c64::norm_sqr(&self)
    }
    fn zero() -> Self {
        c64::new(0.0, 0.0)
    }
    fn schmidt_weights(block: &[Self], rows: usize, cols: usize) -> Result<Vec<f64>> {
        let m = Mat::<c64>::from_fn(rows, cols, |r, c| block[r * cols + c]);
        let sv = m.singular_values().map_err(|e| Error::Solver(format!("{e:?}")))?;
        Ok(sv.into_iter().map(|s| s * s).collect())
    }
}

/// Arranges amplitudes into the (left substring) x (right substring) block.
fn coefficient_block<T: Amplitude>(amplitudes: &[T], basis: &[SpinConfig], cut: usize) -> (Vec<T>, usize, usize) {
    let mask = (1u64 << cut) - 1;
    let mut rows: HashMap<u64, usize> = HashMap::new();
    let mut cols: HashMap<u64, usize> = HashMap::new();
    for c in basis {
        let n = rows.len();
        rows.entry(c.bits() & mask).or_insert(n);
        let n = cols.len();
        cols.entry(c.bits() >> cut).or_insert(n);
    }
    let (nr, nc) = (rows.len(), cols.len());
    let mut block = vec![T::zero(); nr * nc];
    for (c, &a) in basis.iter().zip(amplitudes) {
        block[rows[&(c.bits() & mask)] * nc + cols[&(c.bits() >> cut)]] = a;
    }
    (block, nr, nc)
}

fn von_neumann(weights: &[f64]) -> f64 {
    weights.iter().filter(|&&p| p > 1e-300).map(|&p| -p * p.ln()).sum::<f64>().max(0.0)
}

/// Entanglement entropy (nats) between sites `1..=cut` and the rest.
pub fn eigenstate_entropy<T: Amplitude>(amplitudes: &[T], basis: &[SpinConfig], cut: usize) -> Result<f64> {
    let weights = schmidt_spectrum(amplitudes, basis, cut)?;
    Ok(von_neumann(&weights))
}

/// Squared Schmidt coefficients across the cut after site `cut`.
pub fn schmidt_spectrum<T: Amplitude>(amplitudes: &[T], basis: &[SpinConfig], cut: usize) -> Result<Vec<f64>> {
    if amplitudes.len() != basis.len() || basis.is_empty() {
        return Err(Error::InvalidParams("amplitude and basis lengths differ".into()));
    }
    let len = basis[0].len();
    if cut == 0 || cut >= len {
        return Err(Error::InvalidParams(format!("cut {cut} outside 1..{len}")));
    }
    let norm: f64 = amplitudes.iter().map(|a| a.norm_sqr()).sum();
    if (norm - 1.0).abs() > 1e-8 {
        return Err(Error::Normalization((norm - 1.0).abs()));
    }
    let (block, rows, cols) = coefficient_block(amplitudes, basis, cut);
    T::schmidt_weights(&block, rows, cols)
}

/// `n,E_n,eps_n,S_n` table; `entropies` may be shorter than the spectrum.
pub fn eigen_csv(eig: &EigenData, entropies: &[f64]) -> String {
    let mut out = String::from("n,E_n,eps_n,S_n\n");
    for (k, (e, eps)) in eig.energies.iter().zip(&eig.energy_density).enumerate() {
        let s = entropies.get(k).map_or(String::new(), |s| format!("{s:.12}"));
        let _ = writeln!(out, "{},{e:.12},{eps:.12},{s}", eig.offset + k);
    }
    out
}
