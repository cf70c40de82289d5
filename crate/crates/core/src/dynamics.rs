//! Quench dynamics inside fragments and full product spaces.

use std::fmt::Write as _;

use faer::{c64, Mat, Side};
use serde::{Deserialize, Serialize};

use crate::basis::SpinConfig;
use crate::error::{Error, Result};
use crate::model::HamiltonianMatrix;
use crate::spectral::{self, EigenData, Window};

/// Largest dimension propagated through a full eigendecomposition.
pub const EIGEN_CAP: usize = 5000;
/// Per-step error bound of the Krylov propagator.
pub const KRYLOV_TOL: f64 = 1e-8;
/// Allowed drift of the norm and of the relative energy.
pub const DRIFT_TOL: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Propagator {
    /// Eigendecomposition up to [`EIGEN_CAP`], Krylov beyond.
    #[default]
    Auto,
    Eigen,
    Krylov,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EvolveOptions {
    /// Physical time per unit of the requested grid, e.g. `1/J_P`.
    pub time_unit: f64,
    pub propagator: Propagator,
    /// Entanglement cut after this many sites; `None` for the half chain.
    pub cut: Option<usize>,
    pub krylov_dim: usize,
}

impl Default for EvolveOptions {
    fn default() -> Self {
        Self { time_unit: 1.0, propagator: Propagator::Auto, cut: None, krylov_dim: 30 }
    }
}

impl EvolveOptions {
    pub fn in_units_of(time_unit: f64) -> Self {
        Self { time_unit, ..Self::default() }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct QuenchResult {
    pub initial: SpinConfig,
    /// Times in units of `time_unit`.
    pub times: Vec<f64>,
    pub time_unit: f64,
    /// `densities[t][i] = <n_i(t)>`.
    pub densities: Vec<Vec<f64>>,
    /// `None` when the initial state is fully polarized.
    pub imbalance: Option<Vec<f64>>,
    pub fisher: Option<Vec<f64>>,
    pub entropy: Vec<f64>,
    pub max_norm_drift: f64,
    pub max_energy_drift: f64,
}

impl QuenchResult {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Trapezoidal time average of the imbalance over `[t0, t1]` (grid units).
    pub fn imbalance_average(&self, t0: f64, t1: f64) -> Result<f64> {
        let series = self.imbalance.as_ref().ok_or(Error::UndefinedImbalance)?;
        let pts: Vec<(f64, f64)> =
            self.times.iter().zip(series).filter(|(t, _)| **t >= t0 && **t <= t1).map(|(&t, &v)| (t, v)).collect();
        match pts.len() {
            0 => Err(Error::InvalidParams(format!("no samples in [{t0}, {t1}]"))),
            1 => Ok(pts[0].1),
            _ => {
                let area: f64 = pts.windows(2).map(|w| 0.5 * (w[1].0 - w[0].0) * (w[0].1 + w[1].1)).sum();
                let span = pts[pts.len() - 1].0 - pts[0].0;
                Ok(if span > 0.0 { area / span } else { pts[0].1 })
            }
        }
    }

    /// `t,I,F_Q,S,n_1..n_L` table.
    pub fn to_csv(&self) -> String {
        let len = self.initial.len();
        let mut out = String::from("t,I,F_Q,S");
        for i in 1..=len {
            let _ = write!(out, ",n_{i}");
        }
        out.push('\n');
        for k in 0..self.times.len() {
            let opt = |v: &Option<Vec<f64>>| v.as_ref().map_or(String::new(), |v| format!("{:.10}", v[k]));
            let _ = write!(
                out,
                "{:.8},{},{},{:.10}",
                self.times[k],
                opt(&self.imbalance),
                opt(&self.fisher),
                self.entropy[k]
            );
            for n in &self.densities[k] {
                let _ = write!(out, ",{n:.10}");
            }
            out.push('\n');
        }
        out
    }
}

/// `points` log-spaced times over `[t_min, t_max]`.
pub fn log_time_grid(t_min: f64, t_max: f64, points: usize) -> Vec<f64> {
    if points < 2 {
        return vec![t_min];
    }
    let (a, b) = (t_min.ln(), t_max.ln());
    (0..points).map(|k| (a + (b - a) * k as f64 / (points - 1) as f64).exp()).collect()
}

pub fn linear_time_grid(t_min: f64, t_max: f64, points: usize) -> Vec<f64> {
    if points < 2 {
        return vec![t_min];
    }
    (0..points).map(|k| t_min + (t_max - t_min) * k as f64 / (points - 1) as f64).collect()
}

/// The default grid: 200 log-spaced points over `[0.1, 40]`.
pub fn default_time_grid() -> Vec<f64> {
    log_time_grid(0.1, 40.0, 200)
}

/// Imbalance of each basis configuration relative to `initial`.
pub fn imbalance_diagonal(basis: &[SpinConfig], initial: SpinConfig) -> Result<Vec<f64>> {
    let len = initial.len();
    let n_up = initial.n_r() as usize;
    let n_down = len - n_up;
    if n_up == 0 || n_down == 0 {
        return Err(Error::UndefinedImbalance);
    }
    Ok(basis
        .iter()
        .map(|c| {
            (0..len)
                .map(|i| {
                    if initial.is_up(i) {
                        c.sigma_z(i) / (2.0 * n_up as f64)
                    } else {
                        -c.sigma_z(i) / (2.0 * n_down as f64)
                    }
                })
                .sum()
        })
        .collect())
}

fn probabilities(state: &[c64]) -> Vec<f64> {
    state.iter().map(|a| a.norm_sqr()).collect()
}

/// `<I>` of a state over `basis`.
pub fn imbalance(state: &[c64], basis: &[SpinConfig], initial: SpinConfig) -> Result<f64> {
    let diag = imbalance_diagonal(basis, initial)?;
    Ok(probabilities(state).iter().zip(&diag).map(|(p, d)| p * d).sum())
}

/// Pure-state Fisher information `4(<I^2> - <I>^2)` of the imbalance.
pub fn quantum_fisher(state: &[c64], basis: &[SpinConfig], initial: SpinConfig) -> Result<f64> {
    let diag = imbalance_diagonal(basis, initial)?;
    Ok(fisher_from(&probabilities(state), &diag))
}

fn fisher_from(probs: &[f64], diag: &[f64]) -> f64 {
    let m1: f64 = probs.iter().zip(diag).map(|(p, d)| p * d).sum();
    let m2: f64 = probs.iter().zip(diag).map(|(p, d)| p * d * d).sum();
    (4.0 * (m2 - m1 * m1)).max(0.0)
}

pub fn densities(state: &[c64], basis: &[SpinConfig]) -> Vec<f64> {
    let len = basis.first().map_or(0, |c| c.len());
    let mut n = vec![0.0; len];
    for (a, c) in state.iter().zip(basis) {
        let p = a.norm_sqr();
        for s in c.up_sites() {
            n[s] += p;
        }
    }
    n
}

fn expectation(h: &HamiltonianMatrix, state: &[c64], scratch: &mut [c64]) -> f64 {
    h.apply(state, scratch);
    state.iter().zip(scratch.iter()).map(|(a, b)| (a.conj() * b).re).sum()
}

/// Mean of a diagonal observable over the `n` eigenstates closest in energy to `e_init`.
pub fn eth_prediction(eig: &EigenData, e_init: f64, observable: &[f64], n: usize) -> Result<f64> {
    if n == 0 || n > eig.len() {
        return Err(Error::InvalidParams(format!("N = {n} outside 1..={}", eig.len())));
    }
    let mut order: Vec<usize> = (0..eig.len()).collect();
    order.sort_by(|&a, &b| (eig.energies[a] - e_init).abs().total_cmp(&(eig.energies[b] - e_init).abs()));
    let total: f64 = order[..n]
        .iter()
        .map(|&k| eig.vectors.col(k).iter().zip(observable).map(|(u, o)| u * u * o).sum::<f64>())
        .sum();
    Ok(total / n as f64)
}

/// Restricted-ETH imbalance for a quench from `initial` inside `h`'s product basis.
pub fn eth_imbalance(h: &HamiltonianMatrix, eig: &EigenData, initial: SpinConfig, n: usize) -> Result<f64> {
    let basis = h.product_basis().ok_or_else(|| Error::InvalidParams("matrix has no product basis".into()))?;
    let idx = basis.iter().position(|&c| c == initial).ok_or_else(|| Error::NotInBasis(initial.to_string()))?;
    let diag = imbalance_diagonal(basis, initial)?;
    eth_prediction(eig, h.diagonal()[idx], &diag, n)
}

struct EigenPropagator {
    energies: Vec<f64>,
    vectors: Mat<f64>,
    weights: Vec<c64>,
}

impl EigenPropagator {
    fn new(eig: &EigenData, psi0: &[c64]) -> Result<Self> {
        if eig.offset != 0 || eig.len() != psi0.len() {
            return Err(Error::Propagation("eigendecomposition does not span the basis".into()));
        }
        let weights = (0..eig.len())
            .map(|n| eig.vectors.col(n).iter().zip(psi0).fold(c64::new(0.0, 0.0), |acc, (&u, &a)| acc + a * u))
            .collect();
        Ok(Self { energies: eig.energies.clone(), vectors: eig.vectors.clone(), weights })
    }

    fn state(&self, t: f64) -> Vec<c64> {
        let dim = self.vectors.nrows();
        let phased: Vec<c64> = self.energies.iter().zip(&self.weights).map(|(&e, &w)| w * c64::cis(-e * t)).collect();
        let mut out = vec![c64::new(0.0, 0.0); dim];
        for (n, &p) in phased.iter().enumerate() {
            if p.norm_sqr() < 1e-300 {
                continue;
            }
            for (o, &u) in out.iter_mut().zip(self.vectors.col(n).iter()) {
                *o += p * u;
            }
        }
        out
    }
}

fn dot(a: &[c64], b: &[c64]) -> c64 {
    a.iter().zip(b).fold(c64::new(0.0, 0.0), |acc, (x, y)| acc + x.conj() * y)
}

fn norm(a: &[c64]) -> f64 {
    a.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

/// Advances `psi` by `dt` with a Lanczos basis of at most `m_max` vectors,
/// taking as many sub-steps as the error bound requires.
fn krylov_advance(h: &HamiltonianMatrix, psi: &mut Vec<c64>, dt: f64, m_max: usize, tol: f64) -> Result<()> {
    let dim = psi.len();
    let mut remaining = dt;
    let mut step = dt;
    while remaining > 0.0 {
        let beta0 = norm(psi);
        let mut basis: Vec<Vec<c64>> = vec![psi.iter().map(|x| x / beta0).collect()];
        let mut alpha = Vec::new();
        let mut beta = Vec::new();
        let mut w = vec![c64::new(0.0, 0.0); dim];
        let mut residual_beta = 0.0;
        for j in 0..m_max.min(dim) {
            h.apply(&basis[j], &mut w);
            let a = dot(&basis[j], &w).re;
            alpha.push(a);
            for (wi, vi) in w.iter_mut().zip(&basis[j]) {
                *wi -= vi * a;
            }
            if j > 0 {
                let b: f64 = beta[j - 1];
                for (wi, vi) in w.iter_mut().zip(&basis[j - 1]) {
                    *wi -= vi * b;
                }
            }
            for v in &basis {
                let c = dot(v, &w);
                for (wi, vi) in w.iter_mut().zip(v) {
                    *wi -= vi * c;
                }
            }
            let b = norm(&w);
            if b < 1e-12 * (1.0 + a.abs()) || j + 1 == m_max.min(dim) {
                residual_beta = if b < 1e-12 * (1.0 + a.abs()) { 0.0 } else { b };
                break;
            }
            beta.push(b);
            basis.push(w.iter().map(|x| x / b).collect());
        }
        let m = alpha.len();
        let t = Mat::<f64>::from_fn(m, m, |r, c| {
            if r == c {
                alpha[r]
            } else if r.abs_diff(c) == 1 {
                beta[r.min(c)]
            } else {
                0.0
            }
        });
        let evd = t.self_adjoint_eigen(Side::Lower).map_err(|e| Error::Propagation(format!("{e:?}")))?;
        let lam: Vec<f64> = evd.S().column_vector().iter().copied().collect();
        let q = evd.U();
        let coeffs = |tau: f64| -> Vec<c64> {
            (0..m)
                .map(|k| {
                    (0..m).fold(c64::new(0.0, 0.0), |acc, j| acc + c64::cis(-lam[j] * tau) * (q[(k, j)] * q[(0, j)]))
                })
                .collect()
        };
        step = step.min(remaining);
        let mut y = coeffs(step);
        let mut halvings = 0;
        while residual_beta * y[m - 1].norm() * beta0 > tol {
            step *= 0.5;
            halvings += 1;
            if halvings > 60 {
                return Err(Error::Propagation(format!("step underflow at remaining time {remaining:e}")));
            }
            y = coeffs(step);
        }
        let mut next = vec![c64::new(0.0, 0.0); dim];
        for (v, &c) in basis.iter().zip(&y) {
            for (n, &x) in next.iter_mut().zip(v) {
                *n += x * c * beta0;
            }
        }
        *psi = next;
        remaining -= step;
        if halvings == 0 {
            step *= 2.0;
        }
        if remaining < 1e-14 * dt {
            break;
        }
    }
    Ok(())
}

/// Evolves the product state `initial` under `h` and records observables at `times`.
pub fn evolve(
    initial: SpinConfig,
    h: &HamiltonianMatrix,
    times: &[f64],
    options: &EvolveOptions,
) -> Result<QuenchResult> {
    evolve_impl(initial, h, None, times, options)
}

/// As [`evolve`], reusing a full eigendecomposition of `h`.
pub fn evolve_with_eigen(
    initial: SpinConfig,
    h: &HamiltonianMatrix,
    eig: &EigenData,
    times: &[f64],
    options: &EvolveOptions,
) -> Result<QuenchResult> {
    evolve_impl(initial, h, Some(eig), times, options)
}

fn evolve_impl(
    initial: SpinConfig,
    h: &HamiltonianMatrix,
    eig: Option<&EigenData>,
    times: &[f64],
    options: &EvolveOptions,
) -> Result<QuenchResult> {
    let basis = h.product_basis().ok_or_else(|| Error::InvalidParams("matrix has no product basis".into()))?;
    let start = basis.iter().position(|&c| c == initial).ok_or_else(|| Error::NotInBasis(initial.to_string()))?;
    if times.iter().any(|t| !t.is_finite() || *t < 0.0) || times.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::InvalidParams("times must be finite, non-negative and ascending".into()));
    }
    let dim = h.dim();
    let len = initial.len();
    let cut = options.cut.unwrap_or(len / 2);
    let mut psi0 = vec![c64::new(0.0, 0.0); dim];
    psi0[start] = c64::new(1.0, 0.0);

    let imbalance_diag = imbalance_diagonal(basis, initial).ok();
    let mut scratch = vec![c64::new(0.0, 0.0); dim];
    let e0 = h.diagonal()[start];
    let e_scale = h.diagonal().iter().fold(e0.abs(), |m, d| m.max(d.abs())).max(f64::MIN_POSITIVE);

    let use_eigen = match options.propagator {
        Propagator::Auto => eig.is_some() || dim <= EIGEN_CAP,
        Propagator::Eigen => true,
        Propagator::Krylov => false,
    };
    let eigen = match (use_eigen, eig) {
        (false, _) => None,
        (true, Some(e)) => Some(EigenPropagator::new(e, &psi0)?),
        (true, None) => Some(EigenPropagator::new(&spectral::diagonalize(h, Window::Full)?, &psi0)?),
    };

    let mut result = QuenchResult {
        initial,
        times: times.to_vec(),
        time_unit: options.time_unit,
        densities: Vec::with_capacity(times.len()),
        imbalance: imbalance_diag.as_ref().map(|_| Vec::with_capacity(times.len())),
        fisher: imbalance_diag.as_ref().map(|_| Vec::with_capacity(times.len())),
        entropy: Vec::with_capacity(times.len()),
        max_norm_drift: 0.0,
        max_energy_drift: 0.0,
    };

    let mut psi = psi0.clone();
    let mut t_prev = 0.0;
    for &t in times {
        let physical = t * options.time_unit;
        match &eigen {
            Some(p) => psi = p.state(physical),
            None => {
                if physical > t_prev {
                    krylov_advance(h, &mut psi, physical - t_prev, options.krylov_dim.max(2), KRYLOV_TOL)?;
                }
                t_prev = physical;
            }
        }
        let nrm = norm(&psi);
        let norm_drift = (nrm * nrm - 1.0).abs();
        let energy_drift = (expectation(h, &psi, &mut scratch) - e0).abs() / e_scale;
        result.max_norm_drift = result.max_norm_drift.max(norm_drift);
        result.max_energy_drift = result.max_energy_drift.max(energy_drift);
        if norm_drift > DRIFT_TOL || energy_drift > DRIFT_TOL {
            return Err(Error::Propagation(format!(
                "drift at t = {t}: norm {norm_drift:.2e}, energy {energy_drift:.2e}"
            )));
        }
        let probs = probabilities(&psi);
        result.densities.push(densities(&psi, basis));
        if let Some(diag) = &imbalance_diag {
            let m1: f64 = probs.iter().zip(diag).map(|(p, d)| p * d).sum();
            result.imbalance.as_mut().unwrap().push(m1);
            result.fisher.as_mut().unwrap().push(fisher_from(&probs, diag));
        }
        let s = if cut == 0 || cut >= len {
            0.0
        } else {
            let normalized: Vec<c64> = psi.iter().map(|a| a / nrm).collect();
            spectral::eigenstate_entropy(&normalized, basis, cut)?
        };
        result.entropy.push(s);
    }
    Ok(result)
}
