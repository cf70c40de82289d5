//! Bit-pattern spin configurations, conserved charges and symmetry-resolved bases.
//!
//! Site `k` (1-based, leftmost) lives in bit `k - 1`. The chain has open
//! boundaries: any site index outside `1..=L` reads as a ground-state (down)
//! spin.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::constraints::RegimeTag;
use crate::error::{Error, Result};

/// Longest chain the exhaustive enumerators will walk (2^L configurations).
pub const MAX_ENUMERATION_LEN: usize = 30;

/// A classical configuration of `len` two-level atoms; bit set = Rydberg (up).
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SpinConfig {
    bits: u64,
    len: u8,
}

impl SpinConfig {
    pub fn new(bits: u64, len: usize) -> Result<Self> {
        if len == 0 || len > 64 {
            return Err(Error::InvalidConfig(format!("length {len} outside 1..=64")));
        }
        if len < 64 && bits >> len != 0 {
            return Err(Error::InvalidConfig(format!("bit pattern {bits:#x} has set bits beyond L={len}")));
        }
        Ok(Self { bits, len: len as u8 })
    }

    /// Unchecked constructor for hot loops; `bits` must fit in `len` sites.
    #[inline]
    pub(crate) fn from_raw(bits: u64, len: usize) -> Self {
        debug_assert!(len == 64 || bits >> len == 0);
        Self { bits, len: len as u8 }
    }

    pub fn all_down(len: usize) -> Result<Self> {
        Self::new(0, len)
    }

    pub fn from_occupations(occ: &[bool]) -> Result<Self> {
        let bits = occ.iter().enumerate().fold(0u64, |acc, (i, &up)| if up { acc | 1 << i } else { acc });
        Self::new(bits, occ.len())
    }

    #[inline]
    pub fn bits(self) -> u64 {
        self.bits
    }

    #[inline]
    pub fn len(self) -> usize {
        self.len as usize
    }

    pub fn is_empty(self) -> bool {
        self.bits == 0
    }

    /// Occupation of 0-based site `site`; sites outside the chain read as down.
    #[inline]
    pub fn occupation(self, site: isize) -> u8 {
        if site < 0 || site >= self.len as isize {
            0
        } else {
            ((self.bits >> site) & 1) as u8
        }
    }

    #[inline]
    pub fn is_up(self, site: usize) -> bool {
        (self.bits >> site) & 1 == 1
    }

    /// `sigma^z` eigenvalue (+1 up, -1 down) at a 0-based site.
    #[inline]
    pub fn sigma_z(self, site: usize) -> f64 {
        if self.is_up(site) {
            1.0
        } else {
            -1.0
        }
    }

    #[inline]
    pub fn n_r(self) -> u32 {
        self.bits.count_ones()
    }

    #[inline]
    pub fn n_nn(self) -> u32 {
        (self.bits & (self.bits >> 1)).count_ones()
    }

    #[inline]
    pub fn n_nnn(self) -> u32 {
        (self.bits & (self.bits >> 2)).count_ones()
    }

    #[inline]
    fn mask(self) -> u64 {
        if self.len == 64 {
            u64::MAX
        } else {
            (1u64 << self.len) - 1
        }
    }

    /// Site reversal `k -> L + 1 - k`.
    pub fn reversed(self) -> Self {
        Self::from_raw(self.bits.reverse_bits() >> (64 - self.len as u32), self.len())
    }

    /// Global spin flip.
    pub fn flipped(self) -> Self {
        Self::from_raw(!self.bits & self.mask(), self.len())
    }

    pub fn is_palindrome(self) -> bool {
        self.reversed() == self
    }

    pub fn with_flipped(self, site: usize) -> Self {
        Self::from_raw(self.bits ^ (1 << site), self.len())
    }

    pub fn to_hex(self) -> String {
        format!("{:#x}", self.bits)
    }

    pub fn from_hex(hex: &str, len: usize) -> Result<Self> {
        let digits = hex.trim_start_matches("0x").trim_start_matches("0X");
        let bits = u64::from_str_radix(digits, 16)
            .map_err(|e| Error::InvalidConfig(format!("bad hex pattern {hex:?}: {e}")))?;
        Self::new(bits, len)
    }

    /// Iterator over 0-based sites that are up.
    pub fn up_sites(self) -> impl Iterator<Item = usize> {
        let len = self.len();
        (0..len).filter(move |&s| self.is_up(s))
    }
}

impl fmt::Display for SpinConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for s in 0..self.len() {
            f.write_str(if self.is_up(s) { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl fmt::Debug for SpinConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "|{self}>")
    }
}

/// Parses `1`/`0` strings (also accepts `•`/`◦`, `u`/`d`), leftmost character = site 1.
impl FromStr for SpinConfig {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut occ = Vec::with_capacity(s.len());
        for ch in s.chars() {
            match ch {
                '1' | '•' | 'u' | 'U' => occ.push(true),
                '0' | '◦' | 'd' | 'D' => occ.push(false),
                '|' | '>' | '⟩' | ' ' | '_' => {}
                other => return Err(Error::InvalidConfig(format!("unexpected character {other:?} in {s:?}"))),
            }
        }
        Self::from_occupations(&occ)
    }
}

/// Dimer charges conserved by the kinetic constraint of each regime.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DimerCharges {
    /// `n_NN` (NN-only and weak nonlocal interactions).
    Nn(u32),
    /// `n_NN + n_NNN` (V' = V).
    NnPlusNnn(u32),
    /// `2 n_NN + n_NNN` (V' = V/2).
    TwoNnPlusNnn(u32),
    /// `n_NN`, `n_NNN` separately (generic strong V').
    Separate { nn: u32, nnn: u32 },
}

/// Conserved-charge tuple labelling a symmetry sector.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SectorKey {
    pub n_r: u32,
    pub dimers: DimerCharges,
}

impl SectorKey {
    pub fn nn(n_r: u32, n_nn: u32) -> Self {
        Self { n_r, dimers: DimerCharges::Nn(n_nn) }
    }

    /// Ordered charge list `(n_R, dimer charges...)`.
    pub fn charges(&self) -> Vec<u32> {
        match self.dimers {
            DimerCharges::Nn(c) | DimerCharges::NnPlusNnn(c) | DimerCharges::TwoNnPlusNnn(c) => {
                vec![self.n_r, c]
            }
            DimerCharges::Separate { nn, nnn } => vec![self.n_r, nn, nnn],
        }
    }

    /// Whether this key's charge variant is the one conserved under `regime`.
    pub fn matches_regime(&self, regime: RegimeTag) -> bool {
        matches!(
            (self.dimers, regime),
            (DimerCharges::Nn(_), RegimeTag::NnOnly | RegimeTag::WeakNonlocal)
                | (DimerCharges::NnPlusNnn(_), RegimeTag::NnnEqual)
                | (DimerCharges::TwoNnPlusNnn(_), RegimeTag::NnnHalf)
                | (DimerCharges::Separate { .. }, RegimeTag::NnnGeneric)
        )
    }

    /// The regime family whose charges this key carries.
    pub fn regime(&self) -> RegimeTag {
        match self.dimers {
            DimerCharges::Nn(_) => RegimeTag::NnOnly,
            DimerCharges::NnPlusNnn(_) => RegimeTag::NnnEqual,
            DimerCharges::TwoNnPlusNnn(_) => RegimeTag::NnnHalf,
            DimerCharges::Separate { .. } => RegimeTag::NnnGeneric,
        }
    }
}

impl fmt::Display for SectorKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.dimers {
            DimerCharges::Nn(c) => write!(f, "(n_R={}, n_NN={c})", self.n_r),
            DimerCharges::NnPlusNnn(c) => write!(f, "(n_R={}, n_NN+n_NNN={c})", self.n_r),
            DimerCharges::TwoNnPlusNnn(c) => write!(f, "(n_R={}, 2n_NN+n_NNN={c})", self.n_r),
            DimerCharges::Separate { nn, nnn } => {
                write!(f, "(n_R={}, n_NN={nn}, n_NNN={nnn})", self.n_r)
            }
        }
    }
}

#[inline]
fn key_of_bits(bits: u64, regime: RegimeTag) -> SectorKey {
    let n_r = bits.count_ones();
    let nn = (bits & (bits >> 1)).count_ones();
    let dimers = match regime {
        RegimeTag::NnOnly | RegimeTag::WeakNonlocal => DimerCharges::Nn(nn),
        RegimeTag::NnnEqual => DimerCharges::NnPlusNnn(nn + (bits & (bits >> 2)).count_ones()),
        RegimeTag::NnnHalf => DimerCharges::TwoNnPlusNnn(2 * nn + (bits & (bits >> 2)).count_ones()),
        RegimeTag::NnnGeneric => DimerCharges::Separate { nn, nnn: (bits & (bits >> 2)).count_ones() },
    };
    SectorKey { n_r, dimers }
}

/// Conserved charges of `config` under the constraint of `regime`.
pub fn charges(config: SpinConfig, regime: RegimeTag) -> SectorKey {
    key_of_bits(config.bits(), regime)
}

fn check_enumerable(len: usize) -> Result<()> {
    if len == 0 || len > MAX_ENUMERATION_LEN {
        return Err(Error::UnsupportedLength {
            len,
            reason: format!("exhaustive enumeration supports 1..={MAX_ENUMERATION_LEN} sites"),
        });
    }
    Ok(())
}

const CHUNK_BITS: u32 = 16;

/// All configurations of `len` sites carrying `key`, ascending by bit pattern.
pub fn enumerate_sector(len: usize, key: &SectorKey) -> Result<Vec<SpinConfig>> {
    check_enumerable(len)?;
    let regime = key.regime();
    let total = 1u64 << len;
    let chunk = 1u64 << CHUNK_BITS.min(len as u32);
    let n_chunks = total / chunk;
    let parts: Vec<Vec<SpinConfig>> = (0..n_chunks)
        .into_par_iter()
        .map(|c| {
            let start = c * chunk;
            (start..start + chunk)
                .filter(|&b| b.count_ones() == key.n_r && key_of_bits(b, regime) == *key)
                .map(|b| SpinConfig::from_raw(b, len))
                .collect()
        })
        .collect();
    Ok(parts.concat())
}

/// Dimension of every non-empty sector of `len` sites under `regime`.
pub fn sector_dimensions(len: usize, regime: RegimeTag) -> Result<BTreeMap<SectorKey, usize>> {
    check_enumerable(len)?;
    let total = 1u64 << len;
    let chunk = 1u64 << CHUNK_BITS.min(len as u32);
    let counts = (0..total / chunk)
        .into_par_iter()
        .fold(HashMap::<SectorKey, usize>::new, |mut acc, c| {
            let start = c * chunk;
            for b in start..start + chunk {
                *acc.entry(key_of_bits(b, regime)).or_default() += 1;
            }
            acc
        })
        .reduce(HashMap::new, |mut a, b| {
            for (k, v) in b {
                *a.entry(k).or_default() += v;
            }
            a
        });
    Ok(counts.into_iter().collect())
}

/// Sector of maximal dimension; ties go to the largest key, i.e. the most dimers.
pub fn largest_sector(len: usize, regime: RegimeTag) -> Result<(SectorKey, usize)> {
    let dims = sector_dimensions(len, regime)?;
    let mut best: Option<(SectorKey, usize)> = None;
    for (k, d) in dims {
        if best.is_none_or(|(_, bd)| d >= bd) {
            best = Some((k, d));
        }
    }
    best.ok_or_else(|| Error::InvalidConfig("no sectors".into()))
}

/// One inversion-even basis vector: a palindrome, or `(|rep> + |partner>)/sqrt(2)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct InversionState {
    pub rep: SpinConfig,
    pub partner: Option<SpinConfig>,
}

impl InversionState {
    /// Amplitude of each product-state component.
    pub fn component_amplitude(&self) -> f64 {
        if self.partner.is_some() {
            std::f64::consts::FRAC_1_SQRT_2
        } else {
            1.0
        }
    }

    pub fn components(&self) -> impl Iterator<Item = SpinConfig> {
        std::iter::once(self.rep).chain(self.partner)
    }
}

/// Orthonormal inversion-even basis built from a reversal-closed product basis.
#[derive(Clone, Debug)]
pub struct InversionBasis {
    states: Vec<InversionState>,
    /// product config -> (symmetric index, amplitude)
    lookup: HashMap<SpinConfig, (usize, f64)>,
}

impl InversionBasis {
    pub fn states(&self) -> &[InversionState] {
        &self.states
    }

    pub fn dim(&self) -> usize {
        self.states.len()
    }

    pub fn palindrome_count(&self) -> usize {
        self.states.iter().filter(|s| s.partner.is_none()).count()
    }

    pub fn pair_count(&self) -> usize {
        self.dim() - self.palindrome_count()
    }

    /// Symmetric-state index and amplitude of a product configuration.
    pub fn locate(&self, config: SpinConfig) -> Option<(usize, f64)> {
        self.lookup.get(&config).copied()
    }

    /// Expands coefficients on the even basis into product-state amplitudes.
    pub fn expand(&self, coeffs: &[f64]) -> (Vec<SpinConfig>, Vec<f64>) {
        let mut configs = Vec::with_capacity(2 * self.dim());
        let mut amps = Vec::with_capacity(2 * self.dim());
        for (st, &c) in self.states.iter().zip(coeffs) {
            let a = st.component_amplitude();
            for cfg in st.components() {
                configs.push(cfg);
                amps.push(c * a);
            }
        }
        (configs, amps)
    }
}

/// Builds the inversion-even combinations of a basis closed under site reversal.
pub fn symmetrize_inversion(basis: &[SpinConfig]) -> Result<InversionBasis> {
    let members: std::collections::HashSet<SpinConfig> = basis.iter().copied().collect();
    let mut states = Vec::new();
    for &cfg in basis {
        let rev = cfg.reversed();
        if !members.contains(&rev) {
            return Err(Error::NotClosedUnderReversal(cfg.to_string()));
        }
        if cfg < rev {
            states.push(InversionState { rep: cfg, partner: Some(rev) });
        } else if cfg == rev {
            states.push(InversionState { rep: cfg, partner: None });
        }
    }
    states.sort_by_key(|s| s.rep);
    let mut lookup = HashMap::with_capacity(basis.len());
    for (i, st) in states.iter().enumerate() {
        let a = st.component_amplitude();
        for cfg in st.components() {
            lookup.insert(cfg, (i, a));
        }
    }
    Ok(InversionBasis { states, lookup })
}

/// Named root states used to seed fragments.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RootTemplate {
    /// `(••◦)^m ◦^m`, needs `L = 4m`.
    ClusterBlock,
    /// `(••◦)^m •◦ ◦^m`, needs `L = 4m + 2`.
    ClusterBlockOdd,
    /// `(•◦◦)^{L/3}`, needs `L = 3k`.
    Neel3Magnon,
    /// `(••◦)^k ••`, needs `L = 3k + 2`.
    Z3Hole,
}

impl RootTemplate {
    pub const ALL: [RootTemplate; 4] = [Self::ClusterBlock, Self::ClusterBlockOdd, Self::Neel3Magnon, Self::Z3Hole];

    pub fn name(self) -> &'static str {
        match self {
            Self::ClusterBlock => "cluster-block",
            Self::ClusterBlockOdd => "cluster-block-odd",
            Self::Neel3Magnon => "neel3-magnon",
            Self::Z3Hole => "z3-hole",
        }
    }

    pub fn build(self, len: usize) -> Result<SpinConfig> {
        let bad = |reason: &str| Error::UnsupportedLength { len, reason: reason.into() };
        let pattern = match self {
            Self::ClusterBlock => {
                if len == 0 || !len.is_multiple_of(4) {
                    return Err(bad("needs L divisible by 4"));
                }
                let m = len / 4;
                "110".repeat(m) + &"0".repeat(m)
            }
            Self::ClusterBlockOdd => {
                if len < 6 || len % 4 != 2 {
                    return Err(bad("needs L = 4m + 2 with m >= 1"));
                }
                let m = (len - 2) / 4;
                "110".repeat(m) + "10" + &"0".repeat(m)
            }
            Self::Neel3Magnon => {
                if len == 0 || !len.is_multiple_of(3) {
                    return Err(bad("needs L divisible by 3"));
                }
                "100".repeat(len / 3)
            }
            Self::Z3Hole => {
                if len < 2 || len % 3 != 2 {
                    return Err(bad("needs L = 3k + 2"));
                }
                "110".repeat(len / 3) + "11"
            }
        };
        if len > 64 {
            return Err(bad("longer than 64 sites"));
        }
        pattern.parse()
    }
}

impl fmt::Display for RootTemplate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for RootTemplate {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cluster-block" => Ok(Self::ClusterBlock),
            "cluster-block-odd" => Ok(Self::ClusterBlockOdd),
            "neel3-magnon" => Ok(Self::Neel3Magnon),
            "z3-hole" => Ok(Self::Z3Hole),
            other => Err(Error::InvalidConfig(format!("unknown root template {other:?}"))),
        }
    }
}
