//! Level-indexed families of conformal contractions on a compact box,
//! with word composition, derivatives, cylinders, contraction bounds,
//! and tail projections.
//!
//! Composition order: for a word ω = (ω_m, …, ω_n) starting at level m,
//! the composed map applies the level-n map first and the level-m map
//! last. Reversing this order silently changes every cylinder, so all
//! call sites go through [`SystemDescriptor::eval_word`].

use crate::error::{NifsError, Result};
use crate::gamma::GammaFn;
use crate::geom::{BoxRegion, Point};
use crate::numeric::adaptive_simpson;
use serde::{Deserialize, Serialize};

/// Absolute quadrature tolerance for one perturbed map application.
pub const QUAD_TOL: f64 = 1e-12;

/// Enumeration caps; exceeding them is a hard error rather than a stall.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SystemLimits {
    pub alphabet_cap: usize,
    pub word_cap: u64,
}

impl Default for SystemLimits {
    fn default() -> Self {
        Self { alphabet_cap: 4096, word_cap: 10_000_000 }
    }
}

/// Signed axis permutation: y[i] = signs[i] · x[perm[i]]. The only
/// orthogonal parts supported; they keep images of boxes axis-aligned.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignedPerm {
    pub perm: Vec<usize>,
    pub signs: Vec<f64>,
}

impl SignedPerm {
    fn validate(&self, dim: usize) -> Result<()> {
        if self.perm.len() != dim || self.signs.len() != dim {
            return Err(NifsError::Invalid("orthogonal part has wrong dimension".into()));
        }
        let mut seen = vec![false; dim];
        for &p in &self.perm {
            if p >= dim || seen[p] {
                return Err(NifsError::Invalid("orthogonal part is not a permutation".into()));
            }
            seen[p] = true;
        }
        if self.signs.iter().any(|s| s.abs() != 1.0) {
            return Err(NifsError::Invalid("orthogonal signs must be ±1".into()));
        }
        Ok(())
    }
}

/// One contraction of the system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MapDescriptor {
    /// φ(x) = ratio·O·x + offset with O a signed axis permutation
    /// (identity when absent). Derivative norm is `ratio` everywhere.
    Linear {
        ratio: f64,
        offset: Vec<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        orth: Option<SignedPerm>,
    },
    /// One-dimensional φ̃(x) = φ(u) + φ'·∫_u^x (1 + γ(t)) dt built on a
    /// linear base map φ(x) = sign·ratio·x + offset.
    PerturbedLinear1D {
        ratio: f64,
        offset: f64,
        #[serde(default = "default_sign")]
        sign: f64,
        anchor: f64,
        gamma: GammaFn,
    },
}

fn default_sign() -> f64 {
    1.0
}

impl MapDescriptor {
    pub fn is_linear(&self) -> bool {
        matches!(self, MapDescriptor::Linear { .. })
    }

    pub fn apply(&self, x: &[f64]) -> Point {
        match self {
            MapDescriptor::Linear { ratio, offset, orth } => match orth {
                None => x.iter().zip(offset).map(|(xi, o)| ratio * xi + o).collect(),
                Some(sp) => (0..x.len())
                    .map(|i| ratio * sp.signs[i] * x[sp.perm[i]] + offset[i])
                    .collect(),
            },
            MapDescriptor::PerturbedLinear1D { ratio, offset, sign, anchor, gamma } => {
                let u = *anchor;
                let base_at_u = sign * ratio * u + offset;
                let integral = adaptive_simpson(&|t| 1.0 + gamma.eval(t), u, x[0], QUAD_TOL);
                vec![base_at_u + sign * ratio * integral]
            }
        }
    }

    /// Conformal derivative norm |Dφ(x)|. Exact for both variants; the
    /// perturbed variant needs no quadrature here.
    pub fn deriv_norm(&self, x: &[f64]) -> f64 {
        match self {
            MapDescriptor::Linear { ratio, .. } => *ratio,
            MapDescriptor::PerturbedLinear1D { ratio, gamma, .. } => {
                ratio * (1.0 + gamma.eval(x[0]))
            }
        }
    }

    /// Exact range of |Dφ| over the domain.
    pub fn deriv_range(&self) -> (f64, f64) {
        match self {
            MapDescriptor::Linear { ratio, .. } => (*ratio, *ratio),
            MapDescriptor::PerturbedLinear1D { ratio, gamma, .. } => {
                let (glo, ghi) = gamma.range();
                (ratio * (1.0 + glo), ratio * (1.0 + ghi))
            }
        }
    }

    /// Image of a box. Exact: linear maps act coordinate-wise through the
    /// signed permutation, perturbed maps are monotone on an interval.
    pub fn image_box(&self, b: &BoxRegion) -> BoxRegion {
        match self {
            MapDescriptor::Linear { ratio, offset, orth } => {
                let d = b.dim();
                let mut lo = vec![0.0; d];
                let mut hi = vec![0.0; d];
                for i in 0..d {
                    let (src, sgn) = match orth {
                        None => (i, 1.0),
                        Some(sp) => (sp.perm[i], sp.signs[i]),
                    };
                    let a = ratio * sgn * b.lo[src] + offset[i];
                    let c = ratio * sgn * b.hi[src] + offset[i];
                    lo[i] = a.min(c);
                    hi[i] = a.max(c);
                }
                BoxRegion::new(lo, hi)
            }
            MapDescriptor::PerturbedLinear1D { .. } => {
                let a = self.apply(&[b.lo[0]])[0];
                let c = self.apply(&[b.hi[0]])[0];
                BoxRegion::new(vec![a.min(c)], vec![a.max(c)])
            }
        }
    }

    fn validate(&self, dim: usize, domain: &BoxRegion) -> Result<()> {
        match self {
            MapDescriptor::Linear { ratio, offset, orth } => {
                if !(*ratio > 0.0 && *ratio < 1.0) {
                    return Err(NifsError::Invalid(format!(
                        "linear contraction ratio must lie in (0,1); got {ratio}"
                    )));
                }
                if offset.len() != dim {
                    return Err(NifsError::Invalid("offset dimension mismatch".into()));
                }
                if let Some(sp) = orth {
                    sp.validate(dim)?;
                }
            }
            MapDescriptor::PerturbedLinear1D { ratio, sign, anchor, gamma, .. } => {
                if dim != 1 {
                    return Err(NifsError::Invalid(
                        "perturbed maps are only defined in dimension 1".into(),
                    ));
                }
                if !(*ratio > 0.0 && *ratio < 1.0) {
                    return Err(NifsError::Invalid(format!(
                        "base contraction ratio must lie in (0,1); got {ratio}"
                    )));
                }
                if sign.abs() != 1.0 {
                    return Err(NifsError::Invalid("sign must be ±1".into()));
                }
                if !(0.0..=1.0).contains(anchor) {
                    return Err(NifsError::Invalid("anchor must lie in [0,1]".into()));
                }
                let gbar = gamma.sup_abs();
                if gbar >= 1.0 {
                    return Err(NifsError::Invalid(format!(
                        "perturbation sup |γ| = {gbar} must be < 1"
                    )));
                }
                let (_, dhi) = self.deriv_range();
                if dhi >= 1.0 {
                    return Err(NifsError::Invalid(format!(
                        "perturbed map is not a contraction: sup |Dφ̃| = {dhi}"
                    )));
                }
            }
        }
        // must map the domain into itself
        let img = self.image_box(domain);
        if !img.subset_of(domain, 1e-9) {
            return Err(NifsError::Invalid(format!(
                "map image {:?} leaves the domain {:?}",
                img, domain
            )));
        }
        Ok(())
    }
}

/// The maps available at one level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelFamily {
    pub maps: Vec<MapDescriptor>,
}

impl LevelFamily {
    pub fn alphabet_size(&self) -> usize {
        self.maps.len()
    }

    /// (min over symbols of inf |Dφ|, max over symbols of sup |Dφ|).
    pub fn kappa_level(&self) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = 0.0f64;
        for m in &self.maps {
            let (a, b) = m.deriv_range();
            lo = lo.min(a);
            hi = hi.max(b);
        }
        (lo, hi)
    }
}

/// How the level schedule continues past the explicit prefix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum Continuation {
    /// Repeat the last prefix level forever.
    Constant,
    /// Cycle through the last `period` prefix levels.
    Periodic { period: usize },
}

/// Resolve a 1-based level `n` against an explicit prefix of length
/// `prefix_len` continued by `continuation`.
pub fn schedule_index(prefix_len: usize, continuation: Continuation, n: usize) -> usize {
    debug_assert!(n >= 1 && prefix_len >= 1);
    if n <= prefix_len {
        n - 1
    } else {
        match continuation {
            Continuation::Constant => prefix_len - 1,
            Continuation::Periodic { period } => prefix_len - period + (n - prefix_len - 1) % period,
        }
    }
}

/// A non-autonomous IFS: an explicit finite prefix of level families plus
/// a continuation rule that determines every later level.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SystemDescriptor {
    pub dimension: usize,
    pub domain: BoxRegion,
    pub prefix: Vec<LevelFamily>,
    pub continuation: Continuation,
    #[serde(default)]
    pub limits: SystemLimits,
}

impl SystemDescriptor {
    pub fn new(
        dimension: usize,
        domain: BoxRegion,
        prefix: Vec<LevelFamily>,
        continuation: Continuation,
        limits: SystemLimits,
    ) -> Result<Self> {
        if dimension == 0 {
            return Err(NifsError::Invalid("dimension must be ≥ 1".into()));
        }
        if domain.dim() != dimension {
            return Err(NifsError::Invalid("domain dimension mismatch".into()));
        }
        if domain.lo.iter().zip(&domain.hi).any(|(a, b)| !(a < b)) {
            return Err(NifsError::Invalid("domain must have nonempty interior".into()));
        }
        if prefix.is_empty() {
            return Err(NifsError::Invalid("at least one level family is required".into()));
        }
        if let Continuation::Periodic { period } = continuation {
            if period == 0 || period > prefix.len() {
                return Err(NifsError::Invalid(format!(
                    "periodic continuation period {period} must lie in 1..={}",
                    prefix.len()
                )));
            }
        }
        for (i, fam) in prefix.iter().enumerate() {
            if fam.alphabet_size() < 2 {
                return Err(NifsError::Invalid(format!(
                    "level {} has fewer than 2 maps",
                    i + 1
                )));
            }
            if fam.alphabet_size() > limits.alphabet_cap {
                return Err(NifsError::Invalid(format!(
                    "level {} alphabet exceeds the cap of {}",
                    i + 1,
                    limits.alphabet_cap
                )));
            }
            for m in &fam.maps {
                m.validate(dimension, &domain)?;
                if dimension >= 2 && !m.is_linear() {
                    return Err(NifsError::Invalid(
                        "dimension ≥ 2 requires affine similarities at every level".into(),
                    ));
                }
            }
        }
        Ok(Self { dimension, domain, prefix, continuation, limits })
    }

    /// Index into `prefix` backing level `n` (1-based).
    pub fn prefix_index(&self, n: usize) -> usize {
        schedule_index(self.prefix.len(), self.continuation, n)
    }

    pub fn level(&self, n: usize) -> &LevelFamily {
        &self.prefix[self.prefix_index(n)]
    }

    pub fn alphabet_size(&self, n: usize) -> usize {
        self.level(n).alphabet_size()
    }

    /// All maps everywhere linear (similarities with constant derivative)?
    pub fn is_linear(&self) -> bool {
        self.prefix.iter().all(|f| f.maps.iter().all(|m| m.is_linear()))
    }

    /// Largest alphabet over all levels (prefix covers the continuation).
    pub fn alphabet_bound(&self) -> usize {
        self.prefix.iter().map(|f| f.alphabet_size()).max().unwrap_or(0)
    }

    /// Period of the level schedule past the prefix.
    pub fn structural_period(&self) -> usize {
        match self.continuation {
            Continuation::Constant => 1,
            Continuation::Periodic { period } => period,
        }
    }

    /// Uniform contraction exponent θ = −log sup_n κ̄_(n). Positive for
    /// every validated system.
    pub fn theta(&self) -> f64 {
        let sup = self
            .prefix
            .iter()
            .map(|f| f.kappa_level().1)
            .fold(0.0f64, f64::max);
        -sup.ln()
    }

    pub fn validate_word(&self, word: &Word) -> Result<()> {
        if word.start < 1 {
            return Err(NifsError::InvalidWord("start level must be ≥ 1".into()));
        }
        for (i, &s) in word.symbols.iter().enumerate() {
            let level = word.start + i;
            let size = self.alphabet_size(level);
            if s as usize >= size {
                return Err(NifsError::InvalidWord(format!(
                    "symbol {s} at level {level} exceeds alphabet size {size}"
                )));
            }
        }
        Ok(())
    }

    /// φ_ω(x). The empty word is the identity.
    pub fn eval_word(&self, word: &Word, x: &[f64]) -> Result<Point> {
        self.validate_word(word)?;
        if !self.domain.contains(x, 1e-12) {
            return Err(NifsError::Domain(format!("{x:?} is outside the domain")));
        }
        let mut p = x.to_vec();
        for (i, &s) in word.symbols.iter().enumerate().rev() {
            p = self.level(word.start + i).maps[s as usize].apply(&p);
        }
        Ok(p)
    }

    /// log |Dφ_ω(x)| via the chain rule. Stays finite for word lengths far
    /// beyond what the plain product can represent.
    pub fn log_deriv_word(&self, word: &Word, x: &[f64]) -> Result<f64> {
        self.validate_word(word)?;
        if !self.domain.contains(x, 1e-12) {
            return Err(NifsError::Domain(format!("{x:?} is outside the domain")));
        }
        let mut p = x.to_vec();
        let mut log_d = 0.0;
        for (i, &s) in word.symbols.iter().enumerate().rev() {
            let map = &self.level(word.start + i).maps[s as usize];
            log_d += map.deriv_norm(&p).ln();
            p = map.apply(&p);
        }
        Ok(log_d)
    }

    /// |Dφ_ω(x)| (conformal norm). May underflow to 0 for very long words;
    /// use [`Self::log_deriv_word`] in growth estimates.
    pub fn deriv_word(&self, word: &Word, x: &[f64]) -> Result<f64> {
        Ok(self.log_deriv_word(word, x)?.exp())
    }

    /// Cylinder φ_ω(X). Exact for linear maps; for perturbed maps the
    /// endpoints are quadrature evaluations of the monotone map.
    pub fn cylinder(&self, word: &Word) -> Result<BoxRegion> {
        self.validate_word(word)?;
        let mut b = self.domain.clone();
        for (i, &s) in word.symbols.iter().enumerate().rev() {
            b = self.level(word.start + i).maps[s as usize].image_box(&b);
        }
        Ok(b)
    }

    /// Number of words in I^(start..start+len−1) as f64 (may exceed u64).
    pub fn word_count(&self, start: usize, len: usize) -> f64 {
        (0..len).map(|i| self.alphabet_size(start + i) as f64).product()
    }

    pub fn check_word_cap(&self, start: usize, len: usize) -> Result<()> {
        let count = self.word_count(start, len);
        if count > self.limits.word_cap as f64 {
            return Err(NifsError::Capacity { needed: count, cap: self.limits.word_cap });
        }
        Ok(())
    }

    /// Iterate every word of the given length starting at `start`.
    pub fn words(&self, start: usize, len: usize) -> WordIter<'_> {
        WordIter::new(self, start, len)
    }

    /// Per-level and cumulative contraction bounds up to horizon `n`.
    ///
    /// Cumulative values are the products of per-level extremes; for
    /// all-linear levels the product is attained by a word, so the
    /// cumulative value is exact and flagged as such. When `exact_up_to`
    /// asks for enumeration at a horizon whose word count exceeds the cap,
    /// a capacity error is raised instead of silently falling back.
    pub fn kappa_bounds(&self, n: usize, exact_up_to: usize) -> Result<KappaBounds> {
        if n < 1 {
            return Err(NifsError::Precondition("kappa horizon must be ≥ 1".into()));
        }
        if exact_up_to > 0 {
            let m = exact_up_to.min(n);
            self.check_word_cap(1, m)?;
        }
        let mut per_level_lo = Vec::with_capacity(n);
        let mut per_level_hi = Vec::with_capacity(n);
        let mut log_cum_lo = Vec::with_capacity(n);
        let mut log_cum_hi = Vec::with_capacity(n);
        let mut cum_exact = Vec::with_capacity(n);
        let mut acc_lo = 0.0;
        let mut acc_hi = 0.0;
        let mut linear_so_far = true;
        for k in 1..=n {
            let fam = self.level(k);
            let (lo, hi) = fam.kappa_level();
            linear_so_far &= fam.maps.iter().all(|m| m.is_linear());
            acc_lo += lo.ln();
            acc_hi += hi.ln();
            per_level_lo.push(lo);
            per_level_hi.push(hi);
            log_cum_lo.push(acc_lo);
            log_cum_hi.push(acc_hi);
            cum_exact.push(linear_so_far);
        }
        Ok(KappaBounds { per_level_lo, per_level_hi, log_cum_lo, log_cum_hi, cum_exact })
    }

    /// Point within `tol` of the tail projection π_{start−1}(tail): the
    /// truncated composition evaluated at the domain center, truncation
    /// depth chosen so that e^{−θk}·diam(X) < tol.
    pub fn project_tail(&self, start: usize, tail: &TailSpec, tol: f64) -> Result<Point> {
        if tol <= 0.0 {
            return Err(NifsError::Precondition("tolerance must be positive".into()));
        }
        let theta = self.theta();
        if !(theta > 0.0) {
            return Err(NifsError::Precondition(
                "uniform contraction does not hold; tail projection diverges".into(),
            ));
        }
        let diam = self.domain.diameter();
        let k = ((diam / tol).ln() / theta).ceil().max(1.0) as usize;
        let symbols: Vec<u32> = (0..k).map(|i| tail.symbol_at(i)).collect();
        let word = Word { start, symbols };
        self.eval_word(&word, &self.domain.center())
    }
}

/// Per-level and cumulative derivative-norm bounds
/// ∏κ_(k) ≤ κ_n ≤ κ̄_n ≤ ∏κ̄_(k), in log domain for the cumulative part.
#[derive(Debug, Clone, Serialize)]
pub struct KappaBounds {
    pub per_level_lo: Vec<f64>,
    pub per_level_hi: Vec<f64>,
    pub log_cum_lo: Vec<f64>,
    pub log_cum_hi: Vec<f64>,
    /// Whether the cumulative bounds at each horizon are attained exactly
    /// (true when every level so far is linear) rather than product bounds.
    pub cum_exact: Vec<bool>,
}

impl KappaBounds {
    pub fn horizon(&self) -> usize {
        self.per_level_lo.len()
    }

    /// log κ̄_n at 1-based horizon n.
    pub fn log_hi(&self, n: usize) -> f64 {
        self.log_cum_hi[n - 1]
    }

    /// log κ_n at 1-based horizon n.
    pub fn log_lo(&self, n: usize) -> f64 {
        self.log_cum_lo[n - 1]
    }
}

/// A word (ω_m, …, ω_n): symbols for consecutive levels starting at `start`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Word {
    pub start: usize,
    pub symbols: Vec<u32>,
}

impl Word {
    pub fn empty(start: usize) -> Self {
        Word { start, symbols: Vec::new() }
    }

    pub fn from_symbols(start: usize, symbols: Vec<u32>) -> Self {
        Word { start, symbols }
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    /// Level of the final symbol; `start − 1` for the empty word.
    pub fn end_level(&self) -> usize {
        self.start + self.symbols.len() - 1
    }

    /// ω·τ where τ must start at the level after this word ends.
    pub fn concat(&self, tail: &Word) -> Result<Word> {
        let expected = self.start + self.symbols.len();
        if tail.start != expected {
            return Err(NifsError::InvalidWord(format!(
                "cannot concatenate: tail starts at level {}, expected {}",
                tail.start, expected
            )));
        }
        let mut symbols = self.symbols.clone();
        symbols.extend_from_slice(&tail.symbols);
        Ok(Word { start: self.start, symbols })
    }
}

/// Eventually periodic symbol stream: `head` symbols, then `cycle`
/// repeating forever.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TailSpec {
    pub head: Vec<u32>,
    pub cycle: Vec<u32>,
}

impl TailSpec {
    pub fn constant(symbol: u32) -> Self {
        TailSpec { head: Vec::new(), cycle: vec![symbol] }
    }

    pub fn periodic(cycle: Vec<u32>) -> Self {
        assert!(!cycle.is_empty());
        TailSpec { head: Vec::new(), cycle }
    }

    pub fn symbol_at(&self, i: usize) -> u32 {
        if i < self.head.len() {
            self.head[i]
        } else {
            self.cycle[(i - self.head.len()) % self.cycle.len()]
        }
    }

    /// Clamp each symbol into the valid alphabet of its level. The head is
    /// stretched over the pre-periodic part of the schedule and the cycle
    /// over a common period, so the result is valid at every depth.
    pub fn clamped(&self, system: &SystemDescriptor, start: usize) -> TailSpec {
        let clamp = |i: usize, s: u32| -> u32 {
            let size = system.alphabet_size(start + i) as u32;
            s.min(size - 1)
        };
        let pre = (system.prefix.len() + 1).saturating_sub(start);
        let head_len = self.head.len().max(pre);
        let cycle_len = lcm(self.cycle.len(), system.structural_period());
        TailSpec {
            head: (0..head_len).map(|i| clamp(i, self.symbol_at(i))).collect(),
            cycle: (0..cycle_len)
                .map(|i| clamp(head_len + i, self.symbol_at(head_len + i)))
                .collect(),
        }
    }
}

fn lcm(a: usize, b: usize) -> usize {
    fn gcd(a: usize, b: usize) -> usize {
        if b == 0 {
            a
        } else {
            gcd(b, a % b)
        }
    }
    a / gcd(a, b) * b
}

/// Mixed-radix iterator over all words of a fixed length.
pub struct WordIter<'a> {
    sizes: Vec<u32>,
    start: usize,
    current: Option<Vec<u32>>,
    _system: &'a SystemDescriptor,
}

impl<'a> WordIter<'a> {
    fn new(system: &'a SystemDescriptor, start: usize, len: usize) -> Self {
        let sizes: Vec<u32> =
            (0..len).map(|i| system.alphabet_size(start + i) as u32).collect();
        WordIter { sizes, start, current: Some(vec![0; len]), _system: system }
    }
}

impl<'a> Iterator for WordIter<'a> {
    type Item = Word;

    fn next(&mut self) -> Option<Word> {
        let current = self.current.as_mut()?;
        let word = Word { start: self.start, symbols: current.clone() };
        // increment from the last position; wrap-around everywhere means done
        let mut exhausted = true;
        for i in (0..current.len()).rev() {
            current[i] += 1;
            if current[i] < self.sizes[i] {
                exhausted = false;
                break;
            }
            current[i] = 0;
        }
        if exhausted {
            self.current = None;
        }
        Some(word)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gamma::GammaShape;

    pub(crate) fn base3_full() -> SystemDescriptor {
        let maps = (0..3)
            .map(|a| MapDescriptor::Linear {
                ratio: 1.0 / 3.0,
                offset: vec![a as f64 / 3.0],
                orth: None,
            })
            .collect();
        SystemDescriptor::new(
            1,
            BoxRegion::unit(1),
            vec![LevelFamily { maps }],
            Continuation::Constant,
            SystemLimits::default(),
        )
        .unwrap()
    }

    pub(crate) fn cantor() -> SystemDescriptor {
        let maps = [0.0, 2.0]
            .iter()
            .map(|a| MapDescriptor::Linear {
                ratio: 1.0 / 3.0,
                offset: vec![a / 3.0],
                orth: None,
            })
            .collect();
        SystemDescriptor::new(
            1,
            BoxRegion::unit(1),
            vec![LevelFamily { maps }],
            Continuation::Constant,
            SystemLimits::default(),
        )
        .unwrap()
    }

    fn alternating23() -> SystemDescriptor {
        let level = |q: usize| LevelFamily {
            maps: (0..q)
                .map(|a| MapDescriptor::Linear {
                    ratio: 1.0 / q as f64,
                    offset: vec![a as f64 / q as f64],
                    orth: None,
                })
                .collect(),
        };
        SystemDescriptor::new(
            1,
            BoxRegion::unit(1),
            vec![level(2), level(3)],
            Continuation::Periodic { period: 2 },
            SystemLimits::default(),
        )
        .unwrap()
    }

    fn perturbed_base3(slope: f64) -> SystemDescriptor {
        // γ(t) = slope·(2t − 1)
        let maps = (0..3)
            .map(|a| MapDescriptor::PerturbedLinear1D {
                ratio: 1.0 / 3.0,
                offset: a as f64 / 3.0,
                sign: 1.0,
                anchor: 0.0,
                gamma: GammaFn {
                    shape: GammaShape::Affine { a: -slope, b: 2.0 * slope },
                    scale: 1.0,
                },
            })
            .collect();
        SystemDescriptor::new(
            1,
            BoxRegion::unit(1),
            vec![LevelFamily { maps }],
            Continuation::Constant,
            SystemLimits::default(),
        )
        .unwrap()
    }

    #[test]
    fn eval_single_map() {
        let sys = base3_full();
        let w = Word::from_symbols(1, vec![1]);
        let y = sys.eval_word(&w, &[0.0]).unwrap();
        assert!((y[0] - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn eval_composition_order() {
        // word (0,2): φ_0(φ_2(0)) = ((0+2)/3)/3 = 2/9
        let sys = base3_full();
        let w = Word::from_symbols(1, vec![0, 2]);
        let y = sys.eval_word(&w, &[0.0]).unwrap();
        assert!((y[0] - 2.0 / 9.0).abs() < 1e-15);
    }

    #[test]
    fn eval_empty_word_is_identity() {
        let sys = base3_full();
        let y = sys.eval_word(&Word::empty(1), &[0.7]).unwrap();
        assert!((y[0] - 0.7).abs() < 1e-15);
    }

    #[test]
    fn eval_rejects_bad_symbol_and_outside_point() {
        let sys = base3_full();
        let w = Word::from_symbols(1, vec![3]);
        assert!(matches!(sys.eval_word(&w, &[0.0]), Err(NifsError::InvalidWord(_))));
        let w = Word::from_symbols(1, vec![0]);
        assert!(matches!(sys.eval_word(&w, &[1.5]), Err(NifsError::Domain(_))));
    }

    #[test]
    fn deriv_constant_ratios() {
        let sys = base3_full();
        let w = Word::from_symbols(1, vec![2, 0, 1, 1]);
        let d = sys.deriv_word(&w, &[0.3]).unwrap();
        assert!((d - 3.0f64.powi(-4)).abs() < 1e-15);
        assert!((sys.deriv_word(&Word::empty(1), &[0.3]).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn deriv_perturbed_respects_envelope() {
        let sys = perturbed_base3(0.1);
        for n in 1..=6usize {
            let w = Word::from_symbols(1, (0..n).map(|i| (i % 3) as u32).collect());
            let d = sys.deriv_word(&w, &[0.37]).unwrap();
            let lo = 3.0f64.powi(-(n as i32)) * 0.9f64.powi(n as i32);
            let hi = 3.0f64.powi(-(n as i32)) * 1.1f64.powi(n as i32);
            assert!(d >= lo - 1e-15 && d <= hi + 1e-15, "n={n} d={d}");
        }
    }

    #[test]
    fn cylinder_examples() {
        let sys = base3_full();
        let c = sys.cylinder(&Word::from_symbols(1, vec![2])).unwrap();
        assert!((c.lo[0] - 2.0 / 3.0).abs() < 1e-15 && (c.hi[0] - 1.0).abs() < 1e-15);

        let cantor = cantor();
        let c = cantor.cylinder(&Word::from_symbols(1, vec![0, 1])).unwrap();
        assert!((c.lo[0] - 2.0 / 9.0).abs() < 1e-15 && (c.hi[0] - 3.0 / 9.0).abs() < 1e-15);
    }

    #[test]
    fn cylinder_perturbed_displacement_bound() {
        // |φ̃ − φ| ≤ ε·κ̄ per level; here ε = 0.1, κ̄ = 1/3·1.1
        let lin = base3_full();
        let per = perturbed_base3(0.1);
        let w = Word::from_symbols(1, vec![0]);
        let cl = lin.cylinder(&w).unwrap();
        let cp = per.cylinder(&w).unwrap();
        let eps_kbar = 0.1 * (1.1 / 3.0);
        assert!((cp.lo[0] - cl.lo[0]).abs() <= eps_kbar + 1e-12);
        assert!((cp.hi[0] - cl.hi[0]).abs() <= eps_kbar + 1e-12);
    }

    #[test]
    fn kappa_base3() {
        let sys = base3_full();
        let kb = sys.kappa_bounds(4, 4).unwrap();
        let expect = 4.0 * (1.0f64 / 3.0).ln();
        assert!((kb.log_lo(4) - expect).abs() < 1e-12);
        assert!((kb.log_hi(4) - expect).abs() < 1e-12);
        assert!(kb.cum_exact[3]);
    }

    #[test]
    fn kappa_alternating() {
        let sys = alternating23();
        let kb = sys.kappa_bounds(2, 2).unwrap();
        let expect = (1.0f64 / 6.0).ln();
        assert!((kb.log_lo(2) - expect).abs() < 1e-12);
        assert!((kb.log_hi(2) - expect).abs() < 1e-12);
        // oracle: enumerate all 6 words
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for w in sys.words(1, 2) {
            let d = sys.deriv_word(&w, &[0.5]).unwrap();
            lo = lo.min(d);
            hi = hi.max(d);
        }
        assert!((lo - 1.0 / 6.0).abs() < 1e-15 && (hi - 1.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn kappa_perturbed_envelope() {
        let sys = perturbed_base3(0.1);
        let kb = sys.kappa_bounds(2, 2).unwrap();
        assert!(kb.log_hi(2) <= 2.0 * (1.1f64 / 3.0).ln() + 1e-12);
        assert!(kb.log_lo(2) >= 2.0 * (0.9f64 / 3.0).ln() - 1e-12);
        assert!(!kb.cum_exact[1]);
        // enumeration stays inside the envelope
        for w in sys.words(1, 2) {
            for x in [0.0, 0.25, 0.5, 0.75, 1.0] {
                let d = sys.log_deriv_word(&w, &[x]).unwrap();
                assert!(d >= kb.log_lo(2) - 1e-12 && d <= kb.log_hi(2) + 1e-12);
            }
        }
    }

    #[test]
    fn kappa_capacity_error() {
        let mut sys = base3_full();
        sys.limits.word_cap = 10;
        assert!(matches!(sys.kappa_bounds(3, 3), Err(NifsError::Capacity { .. })));
        // fallback allowed when enumeration is not requested
        assert!(sys.kappa_bounds(3, 0).is_ok());
    }

    #[test]
    fn project_tail_fixed_points() {
        let sys = base3_full();
        let p = sys.project_tail(1, &TailSpec::constant(1), 1e-10).unwrap();
        assert!((p[0] - 0.5).abs() < 1e-10);
        let p = sys.project_tail(1, &TailSpec::constant(0), 1e-10).unwrap();
        assert!(p[0].abs() < 1e-10);

        // Cantor tail (0,2,0,2,…): fixed point of φ_0∘φ_2 is x = (x+2)/9 → 1/4
        let cantor = cantor();
        let p = cantor.project_tail(1, &TailSpec::periodic(vec![0, 1]), 1e-10).unwrap();
        assert!((p[0] - 0.25).abs() < 1e-10);
    }

    #[test]
    fn project_tail_truncation_gap() {
        let sys = alternating23();
        let theta = sys.theta();
        let tol = 1e-6;
        let diam = sys.domain.diameter();
        let k = ((diam / tol).ln() / theta).ceil() as usize;
        let tail = TailSpec::periodic(vec![1, 0]);
        let eval_depth = |depth: usize| {
            let symbols: Vec<u32> = (0..depth).map(|i| tail.symbol_at(i)).collect();
            sys.eval_word(&Word { start: 1, symbols }, &sys.domain.center()).unwrap()[0]
        };
        let gap = (eval_depth(k) - eval_depth(k + 5)).abs();
        assert!(gap <= (-theta * k as f64).exp() * diam + 1e-15);
    }

    #[test]
    fn word_iter_counts() {
        let sys = alternating23();
        assert_eq!(sys.words(1, 3).count(), 2 * 3 * 2);
        assert_eq!(sys.words(2, 2).count(), 3 * 2);
        assert_eq!(sys.words(1, 0).count(), 1); // the empty word
    }

    #[test]
    fn concat_levels_must_chain() {
        let a = Word::from_symbols(1, vec![0, 1]);
        let b = Word::from_symbols(3, vec![2]);
        assert_eq!(a.concat(&b).unwrap().symbols, vec![0, 1, 2]);
        let bad = Word::from_symbols(2, vec![2]);
        assert!(a.concat(&bad).is_err());
    }

    #[test]
    fn rejects_non_contraction_and_small_alphabet() {
        let bad = SystemDescriptor::new(
            1,
            BoxRegion::unit(1),
            vec![LevelFamily {
                maps: vec![
                    MapDescriptor::Linear { ratio: 1.2, offset: vec![0.0], orth: None },
                    MapDescriptor::Linear { ratio: 0.3, offset: vec![0.0], orth: None },
                ],
            }],
            Continuation::Constant,
            SystemLimits::default(),
        );
        assert!(bad.is_err());

        let small = SystemDescriptor::new(
            1,
            BoxRegion::unit(1),
            vec![LevelFamily {
                maps: vec![MapDescriptor::Linear { ratio: 0.3, offset: vec![0.0], orth: None }],
            }],
            Continuation::Constant,
            SystemLimits::default(),
        );
        assert!(small.is_err());
    }

    #[test]
    fn rejects_escaping_map() {
        let bad = SystemDescriptor::new(
            1,
            BoxRegion::unit(1),
            vec![LevelFamily {
                maps: vec![
                    MapDescriptor::Linear { ratio: 0.5, offset: vec![0.8], orth: None },
                    MapDescriptor::Linear { ratio: 0.5, offset: vec![0.0], orth: None },
                ],
            }],
            Continuation::Constant,
            SystemLimits::default(),
        );
        assert!(bad.is_err());
    }

    #[test]
    fn two_dimensional_similarity_with_reflection() {
        let maps = vec![
            MapDescriptor::Linear { ratio: 0.5, offset: vec![0.0, 0.0], orth: None },
            MapDescriptor::Linear {
                ratio: 0.5,
                offset: vec![1.0, 0.5],
                orth: Some(SignedPerm { perm: vec![1, 0], signs: vec![-1.0, 1.0] }),
            },
        ];
        let sys = SystemDescriptor::new(
            2,
            BoxRegion::unit(2),
            vec![LevelFamily { maps }],
            Continuation::Constant,
            SystemLimits::default(),
        )
        .unwrap();
        let w = Word::from_symbols(1, vec![1]);
        let y = sys.eval_word(&w, &[0.4, 0.6]).unwrap();
        // y0 = 1.0 − 0.5·x1, y1 = 0.5 + 0.5·x0
        assert!((y[0] - 0.7).abs() < 1e-15 && (y[1] - 0.7).abs() < 1e-15);
        let c = sys.cylinder(&w).unwrap();
        assert!(c.subset_of(&sys.domain, 0.0));
    }

    #[test]
    fn periodic_continuation_schedule() {
        let sys = alternating23();
        assert_eq!(sys.alphabet_size(1), 2);
        assert_eq!(sys.alphabet_size(2), 3);
        assert_eq!(sys.alphabet_size(3), 2);
        assert_eq!(sys.alphabet_size(4), 3);
        assert_eq!(sys.alphabet_size(17), 2);
    }
}
