//! Atomic position disorder, ensemble sweeps and finite-size scaling.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::basis::SpinConfig;
use crate::constraints::{build_fragment, KrylovFragment, RegimeTag};
use crate::error::{Error, Result};
use crate::model::{build_effective_hamiltonian, EffectiveMode, HamiltonianMatrix, InteractionProfile, ModelParams};
use crate::spectral::{self, Window};

/// Interaction range kept in disordered models (`V`, `V'`, `V''`).
pub const DEFAULT_DISORDER_CUTOFF: usize = 3;

/// Positions `R_j = j + dR_j` in units of the lattice constant.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DisorderRealization {
    pub seed: u64,
    pub width: f64,
    pub offsets: Vec<f64>,
    pub positions: Vec<f64>,
}

impl DisorderRealization {
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    /// `V_ij = V (R_j - R_i)^-6` for `|i - j| <= cutoff`, with `v` the clean NN value.
    pub fn interaction(&self, v: f64, cutoff: usize) -> InteractionProfile {
        let len = self.len();
        let mut values = vec![0.0; len * len];
        for i in 0..len {
            for j in i + 1..len.min(i + cutoff + 1) {
                let vij = v / (self.positions[j] - self.positions[i]).powi(6);
                values[i * len + j] = vij;
                values[j * len + i] = vij;
            }
        }
        InteractionProfile::Pairwise { len, values }
    }

    /// `V_{i,i+1} - V` for each bond.
    pub fn nn_disorder(&self, v: f64) -> Vec<f64> {
        self.positions.windows(2).map(|w| v / (w[1] - w[0]).powi(6) - v).collect()
    }
}

/// Independent offsets uniform in `[-width/2, width/2]`.
pub fn sample_realization(len: usize, width: f64, seed: u64) -> Result<DisorderRealization> {
    if !(width >= 0.0 && width.is_finite()) {
        return Err(Error::InvalidParams(format!("disorder width must be >= 0, got {width}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let offsets: Vec<f64> =
        (0..len).map(|_| if width == 0.0 { 0.0 } else { rng.gen_range(-0.5 * width..=0.5 * width) }).collect();
    let positions: Vec<f64> = offsets.iter().enumerate().map(|(j, d)| (j + 1) as f64 + d).collect();
    if let Some(i) = positions.windows(2).position(|w| w[1] <= w[0]) {
        return Err(Error::OverlappingAtoms(i + 1, i + 2));
    }
    Ok(DisorderRealization { seed, width, offsets, positions })
}

/// Effective Hamiltonian of a fragment with position-dressed couplings.
///
/// `params` supplies `Omega`, `Delta` and the clean NN interaction `V`; the
/// returned matrix uses the second-order expansion with the realization's
/// site-resolved couplings up to `cutoff`.
pub fn disordered_hamiltonian(
    fragment: &KrylovFragment,
    realization: &DisorderRealization,
    params: &ModelParams,
    cutoff: usize,
) -> Result<HamiltonianMatrix> {
    if fragment.regime().move_set() != RegimeTag::NnOnly {
        return Err(Error::RegimeMismatch {
            fragment: fragment.regime().to_string(),
            params: RegimeTag::WeakNonlocal.to_string(),
        });
    }
    if realization.len() != fragment.chain_len() {
        return Err(Error::InvalidParams(format!(
            "realization has {} sites, fragment {}",
            realization.len(),
            fragment.chain_len()
        )));
    }
    let v = params.interaction.range(1);
    let worst = realization.nn_disorder(v).into_iter().fold(0.0f64, |m, d| m.max(d.abs()));
    if worst >= 0.5 * params.delta {
        return Err(Error::DisorderValidity(format!(
            "max |dV_(i,i+1)| = {worst:.4} not small against Delta = {}",
            params.delta
        )));
    }
    let dressed =
        ModelParams::new(params.omega, params.delta, realization.interaction(v, cutoff), RegimeTag::WeakNonlocal)?;
    build_effective_hamiltonian(fragment, &dressed, EffectiveMode::NumericSw)
}

/// Seed of realization `index` in the cell `(len, width)`.
pub fn cell_seed(base: u64, len: usize, width: f64, index: usize) -> u64 {
    let mut h = splitmix(base);
    for word in [len as u64, width.to_bits(), index as u64] {
        h = splitmix(h ^ word);
    }
    h
}

fn splitmix(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub r: bool,
    pub entropy: bool,
}

impl Default for Diagnostics {
    fn default() -> Self {
        Self { r: true, entropy: true }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SweepSpec {
    /// Builds the root state for a length.
    pub template: crate::basis::RootTemplate,
    pub lengths: Vec<usize>,
    pub widths: Vec<f64>,
    pub realizations: usize,
    pub seed: u64,
    pub window: usize,
    pub cutoff: usize,
    pub diagnostics: Diagnostics,
}

/// Mean with its standard error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub stderr: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SweepCell {
    pub len: usize,
    pub width: f64,
    pub dim: usize,
    pub realizations: usize,
    pub failures: usize,
    pub failure_messages: Vec<String>,
    pub seeds: Vec<u64>,
    pub mean_r: Option<Estimate>,
    pub entropy: Option<Estimate>,
    pub entropy_variance: Option<Estimate>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SweepResult {
    pub spec: SweepSpec,
    pub params: ModelParams,
    pub cells: Vec<SweepCell>,
}

impl SweepResult {
    pub fn cell(&self, len: usize, width: f64) -> Option<&SweepCell> {
        self.cells.iter().find(|c| c.len == len && c.width == width)
    }

    /// `L,dR,dim,n,r,r_err,S,S_err,dS2,dS2_err` table.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("L,dR,dim,realizations,r,r_err,S,S_err,dS2,dS2_err\n");
        let fmt = |e: &Option<Estimate>| e.map_or(",".to_string(), |e| format!("{:.8},{:.8}", e.mean, e.stderr));
        for c in &self.cells {
            out += &format!(
                "{},{},{},{},{},{},{}\n",
                c.len,
                c.width,
                c.dim,
                c.realizations,
                fmt(&c.mean_r),
                fmt(&c.entropy),
                fmt(&c.entropy_variance)
            );
        }
        out
    }
}

/// Per-realization window averages.
#[derive(Clone, Copy, Debug)]
struct Sample {
    r: Option<f64>,
    s: Option<(f64, f64)>,
}

fn realization_sample(
    fragment: &KrylovFragment,
    params: &ModelParams,
    width: f64,
    seed: u64,
    spec: &SweepSpec,
) -> Result<Sample> {
    let real = sample_realization(fragment.chain_len(), width, seed)?;
    let h = disordered_hamiltonian(fragment, &real, params, spec.cutoff)?;
    let mut sample = Sample { r: None, s: None };
    if spec.diagnostics.entropy {
        let eig = spectral::diagonalize(&h, Window::Mid(spec.window))?;
        if spec.diagnostics.r {
            sample.r = Some(spectral::r_statistics(&eig.energies)?.mean_r);
        }
        let cut = fragment.chain_len() / 2;
        let entropies: Vec<f64> = (0..eig.len())
            .into_par_iter()
            .map(|k| spectral::eigenstate_entropy(&eig.vector(k), fragment.basis(), cut))
            .collect::<Result<_>>()?;
        let n = entropies.len() as f64;
        let m1 = entropies.iter().sum::<f64>() / n;
        let m2 = entropies.iter().map(|s| s * s).sum::<f64>() / n;
        sample.s = Some((m1, m2));
    } else if spec.diagnostics.r {
        let all = spectral::eigenvalues(&h)?;
        let range = spectral::mid_window(&all, spec.window);
        sample.r = Some(spectral::r_statistics(&all[range])?.mean_r);
    }
    Ok(sample)
}

fn mean_estimate(values: &[f64]) -> Option<Estimate> {
    let n = values.len();
    if n == 0 {
        return None;
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let stderr = if n > 1 {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / ((n - 1) * n) as f64).sqrt()
    } else {
        f64::NAN
    };
    Some(Estimate { mean, stderr })
}

/// Pooled variance `<S^2> - <S>^2` with a leave-one-realization-out jackknife error.
fn variance_estimate(moments: &[(f64, f64)]) -> Option<Estimate> {
    let n = moments.len();
    if n == 0 {
        return None;
    }
    let (t1, t2) = moments.iter().fold((0.0, 0.0), |(a, b), (m1, m2)| (a + m1, b + m2));
    let var = |s1: f64, s2: f64, k: f64| s2 / k - (s1 / k).powi(2);
    let mean = var(t1, t2, n as f64);
    if n < 2 {
        return Some(Estimate { mean, stderr: f64::NAN });
    }
    let jack: Vec<f64> = moments.iter().map(|(m1, m2)| var(t1 - m1, t2 - m2, (n - 1) as f64)).collect();
    let jm = jack.iter().sum::<f64>() / n as f64;
    let stderr = ((n - 1) as f64 / n as f64 * jack.iter().map(|j| (j - jm).powi(2)).sum::<f64>()).sqrt();
    Some(Estimate { mean, stderr })
}

/// Disorder-averaged diagnostics over a grid of lengths and widths.
pub fn sweep(spec: &SweepSpec, params: &ModelParams) -> Result<SweepResult> {
    if spec.realizations < 2 {
        return Err(Error::InvalidParams("need at least 2 realizations per cell".into()));
    }
    if spec.window == 0 {
        return Err(Error::InvalidParams("window must be positive".into()));
    }
    let mut cells = Vec::new();
    for &len in &spec.lengths {
        let root: SpinConfig = spec.template.build(len)?;
        let fragment = build_fragment(root, RegimeTag::WeakNonlocal, None)?;
        for &width in &spec.widths {
            let seeds: Vec<u64> = (0..spec.realizations).map(|k| cell_seed(spec.seed, len, width, k)).collect();
            let samples: Vec<Result<Sample>> =
                seeds.par_iter().map(|&seed| realization_sample(&fragment, params, width, seed, spec)).collect();
            let mut rs = Vec::new();
            let mut moments = Vec::new();
            let mut failure_messages = Vec::new();
            for s in samples {
                match s {
                    Ok(s) => {
                        rs.extend(s.r);
                        moments.extend(s.s);
                    }
                    Err(e) => failure_messages.push(e.to_string()),
                }
            }
            let ms: Vec<f64> = moments.iter().map(|m| m.0).collect();
            cells.push(SweepCell {
                len,
                width,
                dim: fragment.dim(),
                realizations: spec.realizations - failure_messages.len(),
                failures: failure_messages.len(),
                failure_messages,
                seeds,
                mean_r: mean_estimate(&rs),
                entropy: mean_estimate(&ms),
                entropy_variance: variance_estimate(&moments),
            });
        }
    }
    Ok(SweepResult { spec: spec.clone(), params: params.clone(), cells })
}

/// Scaling variable of the collapse.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ScalingForm {
    /// `(dR - dR_c) L^{1/nu}`.
    #[default]
    Standard,
    /// `sign(dR - dR_c) |dR - dR_c|^{1/nu}` without a length factor.
    Bare,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FssPoint {
    pub len: usize,
    pub width: f64,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FssOptions {
    pub critical_range: (f64, f64),
    pub nu_range: (f64, f64),
    pub grid: usize,
    pub refinements: usize,
    pub form: ScalingForm,
    /// Divide each value by its length before collapsing.
    pub per_site: bool,
}

impl Default for FssOptions {
    fn default() -> Self {
        Self {
            critical_range: (0.001, 0.05),
            nu_range: (0.3, 3.0),
            grid: 41,
            refinements: 4,
            form: ScalingForm::Standard,
            per_site: true,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FssResult {
    pub critical: f64,
    pub nu: f64,
    pub cost: f64,
    pub form: ScalingForm,
    /// Coarse grid `(dR_c, nu, cost)` rows.
    pub surface: Vec<(f64, f64, f64)>,
}

fn scaled(points: &[FssPoint], critical: f64, nu: f64, opts: &FssOptions) -> BTreeMap<usize, Vec<(f64, f64)>> {
    let mut by_len: BTreeMap<usize, Vec<(f64, f64)>> = BTreeMap::new();
    for p in points {
        let d = p.width - critical;
        let x = match opts.form {
            ScalingForm::Standard => d * (p.len as f64).powf(1.0 / nu),
            ScalingForm::Bare => d.signum() * d.abs().powf(1.0 / nu),
        };
        let y = if opts.per_site { p.value / p.len as f64 } else { p.value };
        by_len.entry(p.len).or_default().push((x, y));
    }
    for v in by_len.values_mut() {
        v.sort_by(|a, b| a.0.total_cmp(&b.0));
    }
    by_len
}

/// Mean squared deviation of each point from the other sizes' curves,
/// interpolated linearly between the bracketing points; normalized by the
/// variance of the values. Infinite if fewer than half the points overlap.
pub fn collapse_cost(points: &[FssPoint], critical: f64, nu: f64, opts: &FssOptions) -> f64 {
    let curves = scaled(points, critical, nu, opts);
    let mut sum = 0.0;
    let mut count = 0usize;
    for (l, curve) in &curves {
        for &(x, y) in curve {
            for (m, other) in &curves {
                if m == l {
                    continue;
                }
                let k = other.partition_point(|p| p.0 < x);
                if k == 0 || k == other.len() {
                    continue;
                }
                let (a, b) = (other[k - 1], other[k]);
                let pred = if b.0 > a.0 { a.1 + (b.1 - a.1) * (x - a.0) / (b.0 - a.0) } else { 0.5 * (a.1 + b.1) };
                sum += (y - pred).powi(2);
                count += 1;
            }
        }
    }
    let ys: Vec<f64> = curves.values().flatten().map(|p| p.1).collect();
    let mean = ys.iter().sum::<f64>() / ys.len().max(1) as f64;
    let var = ys.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / ys.len().max(1) as f64;
    if count == 0 || count * 2 < ys.len() || var <= 0.0 {
        return f64::INFINITY;
    }
    sum / count as f64 / var
}

fn grid_axis(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64).collect()
}

/// Fits `(dR_c, nu)` by grid search with successive local refinement.
pub fn fss_collapse(points: &[FssPoint], opts: &FssOptions) -> Result<FssResult> {
    let sizes: std::collections::BTreeSet<usize> = points.iter().map(|p| p.len).collect();
    if sizes.len() < 3 {
        return Err(Error::Collapse(format!("need at least 3 system sizes, got {}", sizes.len())));
    }
    if opts.grid < 3 {
        return Err(Error::Collapse("grid needs at least 3 points per axis".into()));
    }
    let (c_lo, c_hi) = opts.critical_range;
    let (n_lo, n_hi) = opts.nu_range;
    if !(c_lo < c_hi && 0.0 < n_lo && n_lo < n_hi) {
        return Err(Error::Collapse("invalid search ranges".into()));
    }
    let cs = grid_axis(c_lo, c_hi, opts.grid);
    let ns = grid_axis(n_lo, n_hi, opts.grid);
    let surface: Vec<(f64, f64, f64)> = cs
        .par_iter()
        .flat_map_iter(|&c| ns.iter().map(move |&n| (c, n)))
        .map(|(c, n)| (c, n, collapse_cost(points, c, n, opts)))
        .collect();
    let (bi, best) = surface.iter().enumerate().min_by(|a, b| a.1 .2.total_cmp(&b.1 .2)).map(|(i, b)| (i, *b)).unwrap();
    if !best.2.is_finite() {
        return Err(Error::Collapse("no parameter pair gives overlapping curves".into()));
    }
    let (ci, ni) = (bi / opts.grid, bi % opts.grid);
    if ci == 0 || ci == opts.grid - 1 || ni == 0 || ni == opts.grid - 1 {
        return Err(Error::Collapse(format!(
            "optimum (dR_c = {:.5}, nu = {:.4}, cost = {:.3e}) on the boundary of [{c_lo}, {c_hi}] x [{n_lo}, {n_hi}]; surface: {}",
            best.0,
            best.1,
            best.2,
            render_surface(&surface, opts.grid)
        )));
    }
    let (mut c, mut n, mut cost) = best;
    let (mut dc, mut dn) = ((c_hi - c_lo) / (opts.grid - 1) as f64, (n_hi - n_lo) / (opts.grid - 1) as f64);
    for _ in 0..opts.refinements {
        let local: Vec<(f64, f64, f64)> = grid_axis(c - dc, c + dc, 11)
            .into_iter()
            .flat_map(|cc| grid_axis(n - dn, n + dn, 11).into_iter().map(move |nn| (cc, nn)))
            .filter(|&(_, nn)| nn > 0.0)
            .map(|(cc, nn)| (cc, nn, collapse_cost(points, cc, nn, opts)))
            .collect();
        if let Some(&b) = local.iter().min_by(|a, b| a.2.total_cmp(&b.2)) {
            if b.2 < cost {
                (c, n, cost) = b;
            }
        }
        dc /= 5.0;
        dn /= 5.0;
    }
    Ok(FssResult { critical: c, nu: n, cost, form: opts.form, surface })
}

fn render_surface(surface: &[(f64, f64, f64)], grid: usize) -> String {
    let stride = (grid / 5).max(1);
    surface
        .iter()
        .enumerate()
        .filter(|(i, _)| (i / grid).is_multiple_of(stride) && (i % grid).is_multiple_of(stride))
        .map(|(_, (c, n, v))| format!("({c:.4},{n:.3})={v:.3e}"))
        .collect::<Vec<_>>()
        .join(" ")
}

/// Leading-order NN disorder `6 V dR` in units of `J_Q`.
pub fn disorder_in_hole_hops(params: &ModelParams, width: f64) -> f64 {
    6.0 * params.v() * width / params.j_q()
}
