//! Emergent kinetic constraints, Krylov fragments and fragmentation statistics.
//!
//! Every allowed process is a flip-flop `sigma_i^+ sigma_j^- + h.c.` across a
//! nearest-neighbour (`j = i + 1`) or next-nearest-neighbour (`j = i + 2`)
//! bond. Whether it is allowed depends only on the four environment sites
//! `i-2, i-1, j+1, j+2` and on which diagonal energies must be conserved.

use std::collections::{HashMap, HashSet, VecDeque};
use std::fmt;

use petgraph::unionfind::UnionFind;
use serde::{Deserialize, Serialize};

use crate::basis::{self, SectorKey, SpinConfig};
use crate::error::{Error, Result};
use crate::model::{self, InteractionProfile, ModelParams};

/// Interaction regime, which fixes the move set and the conserved charges.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegimeTag {
    /// Nearest-neighbour interaction only.
    NnOnly,
    /// Strong NNN interaction with V' = V.
    NnnEqual,
    /// Strong NNN interaction with V' = V/2.
    NnnHalf,
    /// Strong NNN interaction away from both resonances.
    NnnGeneric,
    /// Nonlocal tail below the hopping scale; moves as in `NnOnly`.
    WeakNonlocal,
}

impl RegimeTag {
    pub const ALL: [RegimeTag; 5] =
        [RegimeTag::NnOnly, RegimeTag::NnnEqual, RegimeTag::NnnHalf, RegimeTag::NnnGeneric, RegimeTag::WeakNonlocal];

    /// Regimes sharing a move set are interchangeable for graph purposes.
    pub fn move_set(self) -> RegimeTag {
        match self {
            RegimeTag::WeakNonlocal => RegimeTag::NnOnly,
            other => other,
        }
    }

    pub fn has_nnn_moves(self) -> bool {
        matches!(self, RegimeTag::NnnEqual | RegimeTag::NnnHalf | RegimeTag::NnnGeneric)
    }

    pub fn name(self) -> &'static str {
        match self {
            RegimeTag::NnOnly => "nn",
            RegimeTag::NnnEqual => "nnn-equal",
            RegimeTag::NnnHalf => "nnn-half",
            RegimeTag::NnnGeneric => "nnn-generic",
            RegimeTag::WeakNonlocal => "weak-nonlocal",
        }
    }
}

impl fmt::Display for RegimeTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for RegimeTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "nn" | "nn-only" => Ok(RegimeTag::NnOnly),
            "nnn-equal" => Ok(RegimeTag::NnnEqual),
            "nnn-half" => Ok(RegimeTag::NnnHalf),
            "nnn-generic" => Ok(RegimeTag::NnnGeneric),
            "weak-nonlocal" => Ok(RegimeTag::WeakNonlocal),
            other => Err(Error::InvalidParams(format!("unknown regime {other:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Span {
    Nn,
    Nnn,
}

impl Span {
    pub fn distance(self) -> usize {
        match self {
            Span::Nn => 1,
            Span::Nnn => 2,
        }
    }
}

/// Exchange across sites `left` and `left + span.distance()` (0-based).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Bond {
    pub left: u8,
    pub span: Span,
}

impl Bond {
    pub fn right(self) -> usize {
        self.left as usize + self.span.distance()
    }
}

impl fmt::Display for Bond {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = match self.span {
            Span::Nn => "nn",
            Span::Nnn => "nnn",
        };
        write!(f, "{tag}@{}", self.left)
    }
}

/// Environment occupations `(a, b, c, d)` at sites `i-2, i-1, j+1, j+2`.
type Outer = [u8; 4];

fn nn_move_allowed(regime: RegimeTag, [a, b, c, d]: Outer) -> bool {
    match regime.move_set() {
        RegimeTag::NnnEqual => a == d,
        RegimeTag::NnnHalf => a + b == c + d,
        RegimeTag::NnnGeneric => a == d && b == c,
        _ => b == c,
    }
}

fn nnn_move_allowed(regime: RegimeTag, [a, b, c, d]: Outer) -> bool {
    match regime.move_set() {
        RegimeTag::NnnEqual => a + b == c + d,
        RegimeTag::NnnHalf => a + 2 * b == d + 2 * c,
        RegimeTag::NnnGeneric => a == d && b == c,
        _ => false,
    }
}

#[inline]
fn bit(bits: u64, len: usize, site: isize) -> u8 {
    if site < 0 || site >= len as isize {
        0
    } else {
        ((bits >> site) & 1) as u8
    }
}

#[inline]
fn outer(bits: u64, len: usize, i: usize, j: usize) -> Outer {
    let (i, j) = (i as isize, j as isize);
    [bit(bits, len, i - 2), bit(bits, len, i - 1), bit(bits, len, j + 1), bit(bits, len, j + 2)]
}

/// Calls `f(new_bits, bond)` for every allowed flip-flop out of `bits`.
#[inline]
pub(crate) fn for_each_move(bits: u64, len: usize, regime: RegimeTag, mut f: impl FnMut(u64, Bond)) {
    for i in 0..len.saturating_sub(1) {
        if ((bits >> i) ^ (bits >> (i + 1))) & 1 == 1 && nn_move_allowed(regime, outer(bits, len, i, i + 1)) {
            f(bits ^ (0b11 << i), Bond { left: i as u8, span: Span::Nn });
        }
    }
    if regime.has_nnn_moves() {
        for i in 0..len.saturating_sub(2) {
            if ((bits >> i) ^ (bits >> (i + 2))) & 1 == 1 && nnn_move_allowed(regime, outer(bits, len, i, i + 2)) {
                f(bits ^ (0b101 << i), Bond { left: i as u8, span: Span::Nnn });
            }
        }
    }
}

/// Every configuration reachable from `config` by one allowed flip-flop.
pub fn allowed_moves(config: SpinConfig, regime: RegimeTag) -> Vec<(SpinConfig, Bond)> {
    let len = config.len();
    let mut out = Vec::new();
    for_each_move(config.bits(), len, regime, |b, bond| out.push((SpinConfig::from_raw(b, len), bond)));
    out
}

/// Local environment of one chart entry. `middle` is site `i+1` of an NNN
/// exchange; it never changes the diagonal energy but does enter the
/// second-order amplitude.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Environment {
    pub outer: [u8; 4],
    pub middle: Option<u8>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MoveRule {
    pub span: Span,
    pub environment: Environment,
    pub allowed: bool,
}

/// Complete table of allowed flip-flops over all environments.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RuleChart {
    pub rules: Vec<MoveRule>,
}

fn all_environments(span: Span) -> Vec<Environment> {
    let mut envs = Vec::new();
    for code in 0u8..16 {
        let outer = [code & 1, (code >> 1) & 1, (code >> 2) & 1, (code >> 3) & 1];
        match span {
            Span::Nn => envs.push(Environment { outer, middle: None }),
            Span::Nnn => {
                envs.push(Environment { outer, middle: Some(0) });
                envs.push(Environment { outer, middle: Some(1) });
            }
        }
    }
    envs
}

impl RuleChart {
    /// The chart that `allowed_moves` applies for `regime`.
    pub fn from_regime(regime: RegimeTag) -> Self {
        let mut rules = Vec::new();
        for span in [Span::Nn, Span::Nnn] {
            for environment in all_environments(span) {
                let allowed = match span {
                    Span::Nn => nn_move_allowed(regime, environment.outer),
                    Span::Nnn => nnn_move_allowed(regime, environment.outer),
                };
                rules.push(MoveRule { span, environment, allowed });
            }
        }
        Self { rules }
    }

    pub fn allows(&self, span: Span, environment: Environment) -> Option<bool> {
        self.rules.iter().find(|r| r.span == span && r.environment == environment).map(|r| r.allowed)
    }

    /// Regime (up to shared move sets) whose move set equals this chart.
    pub fn infer_regime(&self) -> Option<RegimeTag> {
        [RegimeTag::NnOnly, RegimeTag::NnnEqual, RegimeTag::NnnHalf, RegimeTag::NnnGeneric]
            .into_iter()
            .find(|&r| RuleChart::from_regime(r) == *self)
    }

    /// Allowed entries modulo left-right reflection of the environment.
    pub fn irreducible(&self, span: Span) -> Vec<MoveRule> {
        let mut seen = HashSet::new();
        self.rules
            .iter()
            .filter(|r| r.span == span)
            .filter(|r| {
                let [a, b, c, d] = r.environment.outer;
                let mirrored = Environment { outer: [d, c, b, a], middle: r.environment.middle };
                let canon = r.environment.min(mirrored);
                seen.insert(canon)
            })
            .copied()
            .collect()
    }
}

/// Embeds an environment into a padded local chain and returns the
/// configurations before and after the exchange.
fn local_pair(span: Span, env: Environment) -> (SpinConfig, SpinConfig) {
    const PAD: usize = 3;
    let [a, b, c, d] = env.outer;
    let mut sites: Vec<u8> = vec![0; PAD];
    sites.extend([a, b, 1]);
    if let Some(m) = env.middle {
        sites.push(m);
    }
    sites.extend([0, c, d]);
    sites.extend(std::iter::repeat_n(0, PAD));
    let i = PAD + 2;
    let j = i + span.distance();
    let occ: Vec<bool> = sites.iter().map(|&s| s == 1).collect();
    let before = SpinConfig::from_occupations(&occ).expect("local chain fits");
    let after = SpinConfig::from_raw(before.bits() ^ (1 << i) ^ (1 << j), before.len());
    (before, after)
}

/// Default chart tolerance, in units of `max(J_P, J_Q)`.
pub const DEFAULT_CHART_TOLERANCE: f64 = 0.5;

/// Derives the kinetic constraint from energy conservation of
/// `H0 = Delta n_R + V n_NN + V' n_NNN`: an exchange is allowed iff its
/// zeroth-order energy change is within `tolerance * max(J_P, J_Q)` and its
/// second-order amplitude does not vanish identically. Interactions beyond
/// NNN range are ignored here.
pub fn derive_rule_chart(params: &ModelParams, tolerance: f64) -> Result<RuleChart> {
    let v = params.interaction.range(1);
    let v2 = params.interaction.range(2);
    let local = ModelParams { interaction: InteractionProfile::Range(vec![v, v2]), ..params.clone() };
    let (jp, jq) = model::hopping_amplitudes(params.omega, params.delta, v);
    let j_max = jp.max(jq);
    let threshold = tolerance * j_max;
    let scale = params.delta.max(v).max(v2);

    let mut entries = Vec::new();
    let mut min_gap = f64::INFINITY;
    for span in [Span::Nn, Span::Nnn] {
        for environment in all_environments(span) {
            let (before, after) = local_pair(span, environment);
            let de = model::classical_energy(after, &local) - model::classical_energy(before, &local);
            if de.abs() > 1e-12 * scale {
                min_gap = min_gap.min(de.abs());
            }
            let amp = model::numeric_sw_amplitude(before, after, &local)?;
            entries.push((span, environment, de, amp));
        }
    }
    if threshold >= min_gap {
        return Err(Error::AmbiguousTolerance { tolerance: threshold, gap: min_gap });
    }
    let rules = entries
        .into_iter()
        .map(|(span, environment, de, amp)| MoveRule {
            span,
            environment,
            allowed: de.abs() <= threshold && amp.abs() > 1e-9 * j_max,
        })
        .collect();
    Ok(RuleChart { rules })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Edge {
    pub a: usize,
    pub b: usize,
    pub bond: Bond,
}

/// Connected component of the constrained-hopping graph.
#[derive(Clone, Debug)]
pub struct KrylovFragment {
    root: SpinConfig,
    regime: RegimeTag,
    basis: Vec<SpinConfig>,
    index: HashMap<SpinConfig, usize>,
    edges: Vec<Edge>,
}

impl KrylovFragment {
    pub fn root(&self) -> SpinConfig {
        self.root
    }

    pub fn regime(&self) -> RegimeTag {
        self.regime
    }

    pub fn basis(&self) -> &[SpinConfig] {
        &self.basis
    }

    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    /// Number of sites in the chain.
    pub fn chain_len(&self) -> usize {
        self.root.len()
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn position(&self, config: SpinConfig) -> Option<usize> {
        self.index.get(&config).copied()
    }

    /// Canonical identity: the smallest configuration in the fragment.
    pub fn canonical_id(&self) -> SpinConfig {
        self.basis[0]
    }

    pub fn to_dump(&self) -> FragmentDump {
        FragmentDump {
            root: self.root.to_hex(),
            length: self.chain_len(),
            regime: self.regime,
            dimension: self.dim(),
            basis: self.basis.iter().map(|c| c.to_hex()).collect(),
            edges: self.edges.iter().map(|e| (e.a, e.b, e.bond.to_string())).collect(),
        }
    }
}

/// JSON-facing fragment dump; bit patterns are hex with bit 0 = site 1.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FragmentDump {
    pub root: String,
    pub length: usize,
    pub regime: RegimeTag,
    pub dimension: usize,
    pub basis: Vec<String>,
    pub edges: Vec<(usize, usize, String)>,
}

/// Breadth-first closure of `root` under the allowed moves of `regime`.
/// `cap` bounds the fragment dimension; exceeding it is an error.
pub fn build_fragment(root: SpinConfig, regime: RegimeTag, cap: Option<usize>) -> Result<KrylovFragment> {
    let len = root.len();
    let mut seen: HashSet<u64> = HashSet::new();
    let mut queue = VecDeque::new();
    seen.insert(root.bits());
    queue.push_back(root.bits());
    while let Some(cur) = queue.pop_front() {
        for_each_move(cur, len, regime, |next, _| {
            if seen.insert(next) {
                queue.push_back(next);
            }
        });
        if let Some(cap) = cap {
            if seen.len() > cap {
                return Err(Error::FragmentTooLarge { cap });
            }
        }
    }
    let mut bits: Vec<u64> = seen.into_iter().collect();
    bits.sort_unstable();
    let basis: Vec<SpinConfig> = bits.iter().map(|&b| SpinConfig::from_raw(b, len)).collect();
    let index: HashMap<SpinConfig, usize> = basis.iter().enumerate().map(|(i, &c)| (c, i)).collect();
    let mut edges = Vec::new();
    for (a, &cfg) in basis.iter().enumerate() {
        for_each_move(cfg.bits(), len, regime, |next, bond| {
            let b = index[&SpinConfig::from_raw(next, len)];
            if b > a {
                edges.push(Edge { a, b, bond });
            }
        });
    }
    Ok(KrylovFragment { root, regime, basis, index, edges })
}

/// Size and canonical label of one fragment of a sector.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FragmentSummary {
    pub id: SpinConfig,
    pub dim: usize,
}

/// Partitions a sector into fragments; output sorted by canonical id.
pub fn sector_fragments(len: usize, key: &SectorKey, regime: RegimeTag) -> Result<Vec<FragmentSummary>> {
    if !key.matches_regime(regime) {
        return Err(Error::RegimeMismatch { fragment: format!("key {key}"), params: regime.to_string() });
    }
    let sector: Vec<u64> = basis::enumerate_sector(len, key)?.into_iter().map(|c| c.bits()).collect();
    let n = sector.len();
    if n as u64 >= u32::MAX as u64 {
        return Err(Error::DimensionTooLarge { dim: n, cap: u32::MAX as usize });
    }
    let mut uf = UnionFind::<u32>::new(n);
    for (i, &b) in sector.iter().enumerate() {
        for_each_move(b, len, regime, |next, _| {
            if next > b {
                let j = sector.binary_search(&next).expect("moves conserve the sector charges");
                uf.union(i as u32, j as u32);
            }
        });
    }
    // Canonical id = smallest member, which is the first index seen per label.
    let mut dims: HashMap<u32, (usize, usize)> = HashMap::new();
    for i in 0..n {
        let label = uf.find_mut(i as u32);
        dims.entry(label).and_modify(|e| e.1 += 1).or_insert((i, 1));
    }
    let mut out: Vec<FragmentSummary> = dims
        .into_values()
        .map(|(first, dim)| FragmentSummary { id: SpinConfig::from_raw(sector[first], len), dim })
        .collect();
    out.sort_by_key(|f| f.id);
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FragmentStats {
    pub sector_dim: usize,
    pub max_dim: usize,
    pub fragment_count: usize,
    pub frozen_count: usize,
    /// Canonical id of the largest fragment (smallest id on ties).
    pub largest_id: SpinConfig,
}

impl FragmentStats {
    pub fn max_ratio(&self) -> f64 {
        self.max_dim as f64 / self.sector_dim as f64
    }
}

pub fn fragmentation_stats(len: usize, key: &SectorKey, regime: RegimeTag) -> Result<FragmentStats> {
    let frags = sector_fragments(len, key, regime)?;
    let largest = frags
        .iter()
        .max_by(|x, y| x.dim.cmp(&y.dim).then(y.id.cmp(&x.id)))
        .ok_or_else(|| Error::InvalidConfig(format!("sector {key} is empty for L={len}")))?;
    Ok(FragmentStats {
        sector_dim: frags.iter().map(|f| f.dim).sum(),
        max_dim: largest.dim,
        fragment_count: frags.len(),
        frozen_count: frags.iter().filter(|f| f.dim == 1).count(),
        largest_id: largest.id,
    })
}

/// `L^2/32 + 3L/8 + 1` frozen states of the largest NN sector, for `L/2` even.
pub fn frozen_count_closed_form(len: usize) -> Result<u64> {
    if len == 0 || !len.is_multiple_of(4) {
        return Err(Error::UnsupportedLength { len, reason: "closed form holds only for L/2 even".into() });
    }
    let l = len as u64;
    let num = l * l + 12 * l + 32;
    debug_assert_eq!(num % 32, 0);
    Ok(num / 32)
}
