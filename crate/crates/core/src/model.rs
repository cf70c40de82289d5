//! Exact Ising-chain and second-order effective Hamiltonians.
//!
//! All energies are in units of the Rabi frequency unless a caller chooses
//! otherwise; `ModelParams::from_ratios` fixes `Omega = 1`.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::sync::Arc;

use faer::Mat;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::basis::{InversionBasis, SpinConfig};
use crate::constraints::{KrylovFragment, RegimeTag, Span};
use crate::error::{Error, Result};

/// Largest chain for which the full 2^L exact Hamiltonian is assembled.
pub const MAX_EXACT_LEN: usize = 16;

/// Relative floor on second-order energy denominators, in units of `Delta`.
pub const DENOMINATOR_FLOOR: f64 = 1e-6;

/// Dressing ratio `Omega / Delta` above which perturbation theory is refused.
pub const MAX_DRESSING_RATIO: f64 = 0.25;

/// Pairwise Rydberg interaction `V_ij`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InteractionProfile {
    /// Translation-invariant couplings; entry `r - 1` is `V_{i,i+r}`.
    Range(Vec<f64>),
    /// Site-resolved symmetric matrix, row-major `len x len`.
    Pairwise { len: usize, values: Vec<f64> },
}

impl InteractionProfile {
    pub fn nearest_neighbour(v: f64) -> Self {
        InteractionProfile::Range(vec![v])
    }

    /// `V / r^6` kept up to distance `cutoff`.
    pub fn van_der_waals(v: f64, cutoff: usize) -> Self {
        InteractionProfile::Range((1..=cutoff).map(|r| v / (r as f64).powi(6)).collect())
    }

    #[inline]
    pub fn coupling(&self, i: usize, j: usize) -> f64 {
        if i == j {
            return 0.0;
        }
        match self {
            InteractionProfile::Range(v) => {
                let r = i.abs_diff(j);
                v.get(r - 1).copied().unwrap_or(0.0)
            }
            InteractionProfile::Pairwise { len, values } => {
                if i < *len && j < *len {
                    values[i * len + j]
                } else {
                    0.0
                }
            }
        }
    }

    /// Representative coupling at distance `r`: exact for `Range`, the chain
    /// average for `Pairwise`.
    pub fn range(&self, r: usize) -> f64 {
        match self {
            InteractionProfile::Range(v) => v.get(r.wrapping_sub(1)).copied().unwrap_or(0.0),
            InteractionProfile::Pairwise { len, .. } => {
                if r == 0 || r >= *len {
                    return 0.0;
                }
                let n = len - r;
                (0..n).map(|i| self.coupling(i, i + r)).sum::<f64>() / n as f64
            }
        }
    }

    /// Longest distance with a nonzero coupling.
    pub fn max_range(&self) -> usize {
        match self {
            InteractionProfile::Range(v) => v.iter().rposition(|&x| x != 0.0).map_or(0, |p| p + 1),
            InteractionProfile::Pairwise { len, .. } => {
                (1..*len).rev().find(|&r| (0..len - r).any(|i| self.coupling(i, i + r) != 0.0)).unwrap_or(0)
            }
        }
    }

    /// Couplings with `|i - j| <= cutoff` only.
    pub fn truncated(&self, cutoff: usize) -> Self {
        match self {
            InteractionProfile::Range(v) => InteractionProfile::Range(v.iter().copied().take(cutoff).collect()),
            InteractionProfile::Pairwise { len, values } => {
                let mut out = values.clone();
                for i in 0..*len {
                    for j in 0..*len {
                        if i.abs_diff(j) > cutoff {
                            out[i * len + j] = 0.0;
                        }
                    }
                }
                InteractionProfile::Pairwise { len: *len, values: out }
            }
        }
    }

    fn validate(&self) -> Result<()> {
        let vals: &[f64] = match self {
            InteractionProfile::Range(v) => v,
            InteractionProfile::Pairwise { len, values } => {
                if values.len() != len * len {
                    return Err(Error::InvalidParams("pairwise matrix has wrong size".into()));
                }
                for i in 0..*len {
                    for j in 0..*len {
                        if values[i * len + j] != values[j * len + i] {
                            return Err(Error::InvalidParams("pairwise matrix not symmetric".into()));
                        }
                    }
                }
                values
            }
        };
        if vals.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidParams("interactions must be finite and non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub omega: f64,
    pub delta: f64,
    pub interaction: InteractionProfile,
    pub regime: RegimeTag,
}

impl ModelParams {
    pub fn new(omega: f64, delta: f64, interaction: InteractionProfile, regime: RegimeTag) -> Result<Self> {
        let p = Self { omega, delta, interaction, regime };
        p.validate()?;
        Ok(p)
    }

    /// Nearest-neighbour model in units `Omega = 1`.
    pub fn from_ratios(delta_over_omega: f64, v_over_delta: f64) -> Result<Self> {
        let delta = delta_over_omega;
        Self::new(1.0, delta, InteractionProfile::nearest_neighbour(v_over_delta * delta), RegimeTag::NnOnly)
    }

    pub fn with_interaction(mut self, interaction: InteractionProfile, regime: RegimeTag) -> Result<Self> {
        self.interaction = interaction;
        self.regime = regime;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.delta > 0.0 && self.delta.is_finite()) {
            return Err(Error::InvalidParams(format!("detuning must be positive, got {}", self.delta)));
        }
        if !(self.omega >= 0.0 && self.omega.is_finite()) {
            return Err(Error::InvalidParams(format!("Rabi frequency must be >= 0, got {}", self.omega)));
        }
        self.interaction.validate()
    }

    /// Nearest-neighbour interaction `V` (chain average when site resolved).
    pub fn v(&self) -> f64 {
        self.interaction.range(1)
    }

    pub fn is_perturbative(&self) -> bool {
        self.omega / self.delta <= MAX_DRESSING_RATIO
    }

    /// Magnon hopping `J_P`, which sets the natural time unit `1/J_P`.
    pub fn j_p(&self) -> f64 {
        hopping_amplitudes(self.omega, self.delta, self.v()).0
    }

    pub fn j_q(&self) -> f64 {
        hopping_amplitudes(self.omega, self.delta, self.v()).1
    }
}

/// `(J_P, J_Q)` for a uniform nearest-neighbour interaction `v`.
pub fn hopping_amplitudes(omega: f64, delta: f64, v: f64) -> (f64, f64) {
    let o2 = omega * omega;
    let jp = o2 * v / (4.0 * delta * (delta + v));
    let jq = o2 * v / (4.0 * (delta + v) * (delta + 2.0 * v));
    (jp, jq)
}

/// Closed-form couplings of the nearest-neighbour effective model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EffectiveCouplings {
    pub j_p: f64,
    pub j_q: f64,
    /// Potential on the two end sites.
    pub mu_edge: f64,
    /// Potential on interior sites.
    pub mu_bulk: f64,
    /// Nearest-neighbour density-density coupling.
    pub u: f64,
    /// Three-body `Q sigma^z Q` strength.
    pub three_body: f64,
    /// Couplings at distance >= 2, added classically.
    pub tail: InteractionProfile,
}

impl EffectiveCouplings {
    /// Hopping ratio `J_P / J_Q`.
    pub fn xi(&self) -> f64 {
        self.j_p / self.j_q
    }

    pub fn mu(&self, site: usize, len: usize) -> f64 {
        if site == 0 || site + 1 == len {
            self.mu_edge
        } else {
            self.mu_bulk
        }
    }
}

pub fn analytic_couplings(params: &ModelParams) -> Result<EffectiveCouplings> {
    params.validate()?;
    if !params.is_perturbative() {
        return Err(Error::InvalidParams(format!(
            "Omega/Delta = {:.3} exceeds the perturbative bound {MAX_DRESSING_RATIO}",
            params.omega / params.delta
        )));
    }
    if params.regime.has_nnn_moves() {
        return Err(Error::InvalidParams(format!(
            "closed-form couplings need a nearest-neighbour dominated regime, got {}",
            params.regime
        )));
    }
    let v = match &params.interaction {
        InteractionProfile::Range(r) => r.first().copied().unwrap_or(0.0),
        InteractionProfile::Pairwise { .. } => {
            return Err(Error::InvalidParams(
                "closed-form couplings need a uniform interaction; use the numeric mode".into(),
            ))
        }
    };
    let (j_p, j_q) = hopping_amplitudes(params.omega, params.delta, v);
    let mu_edge = params.delta + params.omega * params.omega / (2.0 * params.delta) + j_p;
    let tail = match &params.interaction {
        InteractionProfile::Range(r) => {
            let mut t = r.clone();
            if let Some(first) = t.first_mut() {
                *first = 0.0;
            }
            InteractionProfile::Range(t)
        }
        InteractionProfile::Pairwise { .. } => unreachable!(),
    };
    Ok(EffectiveCouplings { j_p, j_q, mu_edge, mu_bulk: mu_edge + j_p, u: v - 4.0 * j_p, three_body: j_p - j_q, tail })
}

/// Zeroth-order energy `Delta n_R + sum_{i<j} V_ij n_i n_j`.
pub fn classical_energy(config: SpinConfig, params: &ModelParams) -> f64 {
    profile_energy(config, &params.interaction) + params.delta * config.n_r() as f64
}

fn profile_energy(config: SpinConfig, profile: &InteractionProfile) -> f64 {
    let ups: Vec<usize> = config.up_sites().collect();
    let mut e = 0.0;
    for (k, &i) in ups.iter().enumerate() {
        for &j in &ups[k + 1..] {
            e += profile.coupling(i, j);
        }
    }
    e
}

fn profile_energy_from(config: SpinConfig, profile: &InteractionProfile, min_range: usize) -> f64 {
    let ups: Vec<usize> = config.up_sites().collect();
    let mut e = 0.0;
    for (k, &i) in ups.iter().enumerate() {
        for &j in &ups[k + 1..] {
            if j - i >= min_range {
                e += profile.coupling(i, j);
            }
        }
    }
    e
}

fn checked_inverse(gap: f64, delta: f64) -> Result<f64> {
    let floor = DENOMINATOR_FLOOR * delta;
    if gap.abs() < floor {
        return Err(Error::DegenerateDenominator { denominator: gap, floor });
    }
    Ok(1.0 / gap)
}

/// Second-order matrix element `<b|H_eff|a>` between configurations related by
/// one NN or NNN exchange, summed over the two single-flip intermediates.
pub fn numeric_sw_amplitude(a: SpinConfig, b: SpinConfig, params: &ModelParams) -> Result<f64> {
    let diff = a.bits() ^ b.bits();
    let not_exchange = || Error::NotAnExchange(a.to_string(), b.to_string());
    if a.len() != b.len() || diff.count_ones() != 2 || a.n_r() != b.n_r() {
        return Err(not_exchange());
    }
    let p = diff.trailing_zeros() as usize;
    let q = 63 - diff.leading_zeros() as usize;
    if q - p > 2 {
        return Err(not_exchange());
    }
    let ea = classical_energy(a, params);
    let eb = classical_energy(b, params);
    let mut sum = 0.0;
    for site in [p, q] {
        let em = classical_energy(a.with_flipped(site), params);
        sum += checked_inverse(ea - em, params.delta)? + checked_inverse(eb - em, params.delta)?;
    }
    Ok(params.omega * params.omega / 4.0 * 0.5 * sum)
}

/// Second-order diagonal dressing `sum_m |<m|Omega_D|a>|^2 / (E_a - E_m)`.
fn sw_diagonal_shift(a: SpinConfig, params: &ModelParams) -> Result<f64> {
    let ea = classical_energy(a, params);
    let w = params.omega * params.omega / 4.0;
    let mut shift = 0.0;
    for site in 0..a.len() {
        let em = classical_energy(a.with_flipped(site), params);
        shift += w * checked_inverse(ea - em, params.delta)?;
    }
    Ok(shift)
}

/// Nearest-neighbour part of a profile (site resolved where applicable).
fn nearest_neighbour_part(profile: &InteractionProfile) -> InteractionProfile {
    profile.truncated(1)
}

#[derive(Clone, Debug)]
pub enum MatrixBasis {
    Product(Arc<[SpinConfig]>),
    InversionEven(Arc<InversionBasis>),
    Unspecified,
}

/// Real symmetric sparse matrix; off-diagonal entries stored once with `row < col`.
#[derive(Clone, Debug)]
pub struct HamiltonianMatrix {
    dim: usize,
    diagonal: Vec<f64>,
    upper: Vec<(u32, u32, f64)>,
    basis: MatrixBasis,
}

impl HamiltonianMatrix {
    /// Sums duplicate entries; either triangle may be given; zeros are dropped.
    pub fn from_entries(
        dim: usize,
        entries: impl IntoIterator<Item = (usize, usize, f64)>,
        basis: MatrixBasis,
    ) -> Result<Self> {
        let mut diagonal = vec![0.0; dim];
        let mut off: HashMap<(u32, u32), f64> = HashMap::new();
        for (r, c, v) in entries {
            if r >= dim || c >= dim {
                return Err(Error::InvalidParams(format!("entry ({r},{c}) outside dimension {dim}")));
            }
            if r == c {
                diagonal[r] += v;
            } else {
                let key = (r.min(c) as u32, r.max(c) as u32);
                *off.entry(key).or_default() += v;
            }
        }
        let mut upper: Vec<(u32, u32, f64)> =
            off.into_iter().filter(|&(_, v)| v != 0.0).map(|((r, c), v)| (r, c, v)).collect();
        upper.sort_unstable_by_key(|&(r, c, _)| (r, c));
        Ok(Self { dim, diagonal, upper, basis })
    }

    fn from_parts(dim: usize, diagonal: Vec<f64>, mut upper: Vec<(u32, u32, f64)>, basis: MatrixBasis) -> Self {
        upper.retain(|e| e.2 != 0.0);
        upper.sort_unstable_by_key(|&(r, c, _)| (r, c));
        Self { dim, diagonal, upper, basis }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn diagonal(&self) -> &[f64] {
        &self.diagonal
    }

    /// Off-diagonal entries with `row < col`.
    pub fn upper(&self) -> &[(u32, u32, f64)] {
        &self.upper
    }

    pub fn basis(&self) -> &MatrixBasis {
        &self.basis
    }

    pub fn product_basis(&self) -> Option<&[SpinConfig]> {
        match &self.basis {
            MatrixBasis::Product(b) => Some(b),
            _ => None,
        }
    }

    pub fn nnz(&self) -> usize {
        self.diagonal.iter().filter(|&&d| d != 0.0).count() + 2 * self.upper.len()
    }

    /// Element `(r, c)`; linear scan for off-diagonals.
    pub fn get(&self, r: usize, c: usize) -> f64 {
        if r == c {
            return self.diagonal[r];
        }
        let key = (r.min(c) as u32, r.max(c) as u32);
        self.upper.binary_search_by_key(&key, |&(a, b, _)| (a, b)).map(|i| self.upper[i].2).unwrap_or(0.0)
    }

    /// `y = H x` for any scalar supporting real scaling.
    pub fn apply<T>(&self, x: &[T], y: &mut [T])
    where
        T: Copy + std::ops::Mul<f64, Output = T> + std::ops::AddAssign,
    {
        for ((yi, &xi), &d) in y.iter_mut().zip(x).zip(&self.diagonal) {
            *yi = xi * d;
        }
        for &(r, c, v) in &self.upper {
            let (r, c) = (r as usize, c as usize);
            y[r] += x[c] * v;
            y[c] += x[r] * v;
        }
    }

    pub fn to_dense(&self) -> Mat<f64> {
        let mut m = Mat::<f64>::zeros(self.dim, self.dim);
        for (i, &d) in self.diagonal.iter().enumerate() {
            m[(i, i)] = d;
        }
        for &(r, c, v) in &self.upper {
            m[(r as usize, c as usize)] = v;
            m[(c as usize, r as usize)] = v;
        }
        m
    }

    /// Max |H_rc - H_cr| over the dense form.
    pub fn asymmetry(&self) -> f64 {
        let m = self.to_dense();
        let mut worst = 0.0f64;
        for r in 0..self.dim {
            for c in 0..r {
                worst = worst.max((m[(r, c)] - m[(c, r)]).abs());
            }
        }
        worst
    }

    /// `<row|H|col>` listing of the upper triangle including the diagonal,
    /// 0-based, one entry per line, preceded by a `# dim=.. entries=..` header.
    pub fn to_coordinate_text(&self) -> String {
        let diag: Vec<(usize, f64)> = self.diagonal.iter().copied().enumerate().filter(|&(_, d)| d != 0.0).collect();
        let mut out = String::new();
        let _ = writeln!(out, "# dim={} entries={} symmetric=upper", self.dim, diag.len() + self.upper.len());
        let mut all: Vec<(usize, usize, f64)> = diag.into_iter().map(|(i, d)| (i, i, d)).collect();
        all.extend(self.upper.iter().map(|&(r, c, v)| (r as usize, c as usize, v)));
        all.sort_by_key(|&(r, c, _)| (r, c));
        for (r, c, v) in all {
            let _ = writeln!(out, "{r} {c} {v:.17e}");
        }
        out
    }

    pub fn from_coordinate_text(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| Error::InvalidParams("empty matrix text".into()))?;
        let dim = header
            .split_whitespace()
            .find_map(|t| t.strip_prefix("dim="))
            .and_then(|d| d.parse::<usize>().ok())
            .ok_or_else(|| Error::InvalidParams(format!("bad header {header:?}")))?;
        let mut entries = Vec::new();
        for line in lines.filter(|l| !l.trim().is_empty()) {
            let parts: Vec<&str> = line.split_whitespace().collect();
            let bad = || Error::InvalidParams(format!("bad entry line {line:?}"));
            if parts.len() != 3 {
                return Err(bad());
            }
            let r = parts[0].parse().map_err(|_| bad())?;
            let c = parts[1].parse().map_err(|_| bad())?;
            let v = parts[2].parse().map_err(|_| bad())?;
            entries.push((r, c, v));
        }
        Self::from_entries(dim, entries, MatrixBasis::Unspecified)
    }

    /// Restriction to the inversion-even combinations of the product basis.
    pub fn restrict_inversion_even(&self, inv: &Arc<InversionBasis>) -> Result<Self> {
        let basis = self
            .product_basis()
            .ok_or_else(|| Error::InvalidParams("inversion restriction needs a product basis".into()))?;
        let locate = |i: usize| inv.locate(basis[i]).ok_or_else(|| Error::NotInBasis(basis[i].to_string()));
        let mut entries = Vec::with_capacity(self.dim + self.upper.len());
        for (i, &d) in self.diagonal.iter().enumerate() {
            let (si, ai) = locate(i)?;
            entries.push((si, si, d * ai * ai));
        }
        // Each stored pair stands for H_rc and H_cr.
        for &(r, c, v) in &self.upper {
            let (sr, ar) = locate(r as usize)?;
            let (sc, ac) = locate(c as usize)?;
            let w = v * ar * ac;
            if sr == sc {
                entries.push((sr, sr, 2.0 * w));
            } else {
                entries.push((sr, sc, w));
            }
        }
        Self::from_entries(inv.dim(), entries, MatrixBasis::InversionEven(Arc::clone(inv)))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EffectiveMode {
    Analytic,
    NumericSw,
}

/// Effective Hamiltonian restricted to a Krylov fragment.
pub fn build_effective_hamiltonian(
    fragment: &KrylovFragment,
    params: &ModelParams,
    mode: EffectiveMode,
) -> Result<HamiltonianMatrix> {
    params.validate()?;
    if fragment.regime().move_set() != params.regime.move_set() {
        return Err(Error::RegimeMismatch {
            fragment: fragment.regime().to_string(),
            params: params.regime.to_string(),
        });
    }
    let basis = fragment.basis();
    let len = fragment.chain_len();
    let (diagonal, upper) = match mode {
        EffectiveMode::Analytic => {
            let k = analytic_couplings(params)?;
            let diagonal: Vec<f64> = basis.par_iter().map(|&c| analytic_diagonal(c, &k)).collect();
            let upper = fragment
                .edges()
                .iter()
                .map(|e| {
                    debug_assert_eq!(e.bond.span, Span::Nn);
                    let left = basis[e.a];
                    let i = e.bond.left as isize;
                    // allowed exchanges always have equal flanks
                    let amp = if left.occupation(i - 1) == 1 { k.j_q } else { k.j_p };
                    (e.a as u32, e.b as u32, amp)
                })
                .collect();
            (diagonal, upper)
        }
        EffectiveMode::NumericSw => {
            if !params.is_perturbative() {
                return Err(Error::InvalidParams("dressing ratio outside perturbative bound".into()));
            }
            let sw = sw_params(params);
            let constant = len as f64 * params.omega * params.omega / (4.0 * params.delta);
            let diagonal = basis
                .par_iter()
                .map(|&c| Ok(classical_energy(c, params) + sw_diagonal_shift(c, &sw)? + constant))
                .collect::<Result<Vec<f64>>>()?;
            let upper = fragment
                .edges()
                .par_iter()
                .map(|e| Ok((e.a as u32, e.b as u32, numeric_sw_amplitude(basis[e.a], basis[e.b], &sw)?)))
                .collect::<Result<Vec<_>>>()?;
            (diagonal, upper)
        }
    };
    Ok(HamiltonianMatrix::from_parts(basis.len(), diagonal, upper, MatrixBasis::Product(basis.to_vec().into())))
}

/// Profile entering the second-order dressing: nearest neighbours only for
/// the NN-dominated regimes (the tail is added classically), NNN range for
/// the strong-NNN regimes.
fn sw_params(params: &ModelParams) -> ModelParams {
    let interaction = if params.regime.has_nnn_moves() {
        params.interaction.truncated(2)
    } else {
        nearest_neighbour_part(&params.interaction)
    };
    ModelParams { interaction, ..params.clone() }
}

fn analytic_diagonal(c: SpinConfig, k: &EffectiveCouplings) -> f64 {
    let len = c.len();
    let mut e = 0.0;
    for s in c.up_sites() {
        e += k.mu(s, len);
    }
    e += k.u * c.n_nn() as f64;
    for s in 0..len {
        let s = s as isize;
        if c.occupation(s - 1) == 1 && c.occupation(s + 1) == 1 {
            e += k.three_body * c.sigma_z(s as usize);
        }
    }
    e + profile_energy_from(c, &k.tail, 2)
}

/// Full `2^L` Hamiltonian of the driven Ising chain with interactions up to `cutoff`.
pub fn build_exact_hamiltonian(len: usize, params: &ModelParams, cutoff: usize) -> Result<HamiltonianMatrix> {
    params.validate()?;
    if len == 0 || len > MAX_EXACT_LEN {
        return Err(Error::DimensionTooLarge { dim: 1usize << len.min(63), cap: 1 << MAX_EXACT_LEN });
    }
    let profile = params.interaction.truncated(cutoff);
    let dim = 1usize << len;
    let basis: Vec<SpinConfig> = (0..dim as u64).map(|b| SpinConfig::from_raw(b, len)).collect();
    let diagonal: Vec<f64> =
        basis.par_iter().map(|&c| params.delta * c.n_r() as f64 + profile_energy(c, &profile)).collect();
    let half = params.omega / 2.0;
    let mut upper = Vec::new();
    if half != 0.0 {
        for a in 0..dim as u32 {
            for s in 0..len {
                let b = a ^ (1 << s);
                if b > a {
                    upper.push((a, b, half));
                }
            }
        }
    }
    Ok(HamiltonianMatrix::from_parts(dim, diagonal, upper, MatrixBasis::Product(basis.into())))
}
