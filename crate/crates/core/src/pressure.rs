//! Finite-horizon pressure sums, their extrapolation across horizons, and
//! the Bowen parameter (the sign change of the pressure in t).
//!
//! All sums run in the log domain: the summands e^{−t·S_nβ} underflow a
//! plain f64 accumulator well before n = 50 on the systems of interest.

use crate::error::{NifsError, Result};
use crate::ifs::{schedule_index, Continuation, SystemDescriptor, TailSpec, Word};
use crate::numeric::{bisect_decreasing, fit_line, Bracketing, LineFit, LogSumAcc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Floating tolerance below which a pressure value counts as exactly zero
/// (tie-broken as the root).
pub const PRESSURE_ZERO_TOL: f64 = 1e-12;

/// Default bisection tolerance in t.
pub const DEFAULT_BOWEN_TOL: f64 = 1e-6;

/// Per-level target-rate function. `first` and `second` are the first two
/// symbols of the shifted stream the rate sees, normalized by their
/// alphabet sizes into [0, 1].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "snake_case")]
pub enum BetaFn {
    /// β_k(ξ) = base + scale·ξ̂_1
    FirstSymbol { base: f64, scale: f64 },
    /// β_k(ξ) = base + scale·(ξ̂_1 + ξ̂_2)/2
    PairAverage { base: f64, scale: f64 },
}

impl BetaFn {
    fn eval(&self, first: f64, second: f64) -> f64 {
        match self {
            BetaFn::FirstSymbol { base, scale } => base + scale * first,
            BetaFn::PairAverage { base, scale } => base + scale * 0.5 * (first + second),
        }
    }

    /// Declared (inf, sup) over all symbol streams.
    fn bounds(&self) -> (f64, f64) {
        let (base, scale) = match self {
            BetaFn::FirstSymbol { base, scale } | BetaFn::PairAverage { base, scale } => {
                (*base, *scale)
            }
        };
        if scale >= 0.0 {
            (base, base + scale)
        } else {
            (base + scale, base)
        }
    }
}

/// The schedule of target-radius exponents β_n.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case")]
pub enum BetaSpec {
    /// β_n is constant on each level: Birkhoff sums are word-independent.
    ConstantPerLevel { values: Vec<f64>, continuation: Continuation },
    /// β_n reads the leading symbols of the shifted stream.
    TailDependent { levels: Vec<BetaFn>, continuation: Continuation },
}

/// β schedule plus the fixed reference tails ξ^{(n)} appended after words.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BetaSchedule {
    pub spec: BetaSpec,
    /// Reference tail ξ^{(n)} (one stream reused at every n); defaults to
    /// the all-zeros tail.
    pub reference_tail: TailSpec,
}

impl BetaSchedule {
    pub fn constant_per_level(values: Vec<f64>, continuation: Continuation) -> Result<Self> {
        Self::new(BetaSpec::ConstantPerLevel { values, continuation }, TailSpec::constant(0))
    }

    pub fn uniform(value: f64) -> Result<Self> {
        Self::constant_per_level(vec![value], Continuation::Constant)
    }

    pub fn new(spec: BetaSpec, reference_tail: TailSpec) -> Result<Self> {
        let (len, continuation) = match &spec {
            BetaSpec::ConstantPerLevel { values, continuation } => {
                if values.iter().any(|v| !(*v > 0.0)) {
                    return Err(NifsError::Invalid("β values must be positive".into()));
                }
                (values.len(), *continuation)
            }
            BetaSpec::TailDependent { levels, continuation } => {
                for f in levels {
                    let (inf, _) = f.bounds();
                    if !(inf > 0.0) {
                        return Err(NifsError::Invalid(format!(
                            "β level has non-positive declared infimum {inf}"
                        )));
                    }
                }
                (levels.len(), *continuation)
            }
        };
        if len == 0 {
            return Err(NifsError::Invalid("β schedule needs at least one level".into()));
        }
        if let Continuation::Periodic { period } = continuation {
            if period == 0 || period > len {
                return Err(NifsError::Invalid("β continuation period out of range".into()));
            }
        }
        Ok(BetaSchedule { spec, reference_tail })
    }

    fn index(&self, k: usize) -> usize {
        match &self.spec {
            BetaSpec::ConstantPerLevel { values, continuation } => {
                schedule_index(values.len(), *continuation, k)
            }
            BetaSpec::TailDependent { levels, continuation } => {
                schedule_index(levels.len(), *continuation, k)
            }
        }
    }

    pub fn is_constant_per_level(&self) -> bool {
        matches!(self.spec, BetaSpec::ConstantPerLevel { .. })
    }

    /// Declared (inf, sup) of β_k over all streams.
    pub fn level_bounds(&self, k: usize) -> (f64, f64) {
        match &self.spec {
            BetaSpec::ConstantPerLevel { values, .. } => {
                let v = values[self.index(k)];
                (v, v)
            }
            BetaSpec::TailDependent { levels, .. } => levels[self.index(k)].bounds(),
        }
    }

    /// Symbol value normalized into [0, 1] by its level alphabet.
    fn norm_symbol(system: &SystemDescriptor, level: usize, symbol: u32) -> f64 {
        let size = system.alphabet_size(level);
        if size <= 1 {
            0.0
        } else {
            symbol as f64 / (size - 1) as f64
        }
    }

    /// β_k evaluated on the stream (ω ξ) shifted to start at level k. The
    /// word must start at level 1; positions past its end come from the
    /// reference tail.
    fn level_value(&self, system: &SystemDescriptor, word: &Word, k: usize) -> f64 {
        match &self.spec {
            BetaSpec::ConstantPerLevel { values, .. } => values[self.index(k)],
            BetaSpec::TailDependent { levels, .. } => {
                let n = word.len();
                let sym = |level: usize| -> f64 {
                    if level <= n {
                        Self::norm_symbol(system, level, word.symbols[level - 1])
                    } else {
                        let tail = self.reference_tail.clamped(system, n + 1);
                        Self::norm_symbol(system, level, tail.symbol_at(level - n - 1))
                    }
                };
                levels[self.index(k)].eval(sym(k), sym(k + 1))
            }
        }
    }

    /// Birkhoff sum S_nβ(ωξ) = β_1(ωξ) + β_2(σωξ) + ⋯ + β_n(σ^{n−1}ωξ)
    /// for a word of length n starting at level 1.
    pub fn birkhoff(&self, system: &SystemDescriptor, word: &Word) -> Result<f64> {
        if word.start != 1 {
            return Err(NifsError::Precondition(
                "Birkhoff sums are taken over words starting at level 1".into(),
            ));
        }
        system.validate_word(word)?;
        Ok((1..=word.len()).map(|k| self.level_value(system, word, k)).sum())
    }

    /// Word-independent Birkhoff sum for constant-per-level schedules.
    pub fn birkhoff_constant(&self, n: usize) -> Option<f64> {
        match &self.spec {
            BetaSpec::ConstantPerLevel { values, .. } => {
                Some((1..=n).map(|k| values[self.index(k)]).sum())
            }
            BetaSpec::TailDependent { .. } => None,
        }
    }
}

/// How a target sum is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum SumMode {
    /// Closed form for constant-per-level β, full enumeration otherwise.
    Exact,
    /// Force full enumeration (subject to the word cap).
    Enumerate,
    /// Uniform word sampling reweighted by the exact word count.
    MonteCarlo { samples: u32, seed: u64 },
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct TargetSum {
    /// log Σ_{ω ∈ I^n} e^{−t·S_nβ(ωξ)}
    pub log_sum: f64,
    /// Standard error of log_sum (Monte Carlo only).
    pub std_err_log: Option<f64>,
    pub word_count: f64,
}

/// log Σ_{ω∈I^n} e^{−t·S_nβ(ωξ^{(n)})} at horizon n.
pub fn target_sum(
    system: &SystemDescriptor,
    beta: &BetaSchedule,
    t: f64,
    n: usize,
    mode: SumMode,
) -> Result<TargetSum> {
    if t < 0.0 {
        return Err(NifsError::Precondition(format!("t must be ≥ 0; got {t}")));
    }
    let count = system.word_count(1, n);
    match mode {
        SumMode::Exact => {
            if let Some(s) = beta.birkhoff_constant(n) {
                // every summand equals e^{−t·S}; the sum is count·e^{−t·S}
                let log_sum = count.ln() - t * s;
                return Ok(TargetSum { log_sum, std_err_log: None, word_count: count });
            }
            enumerate_sum(system, beta, t, n)
        }
        SumMode::Enumerate => enumerate_sum(system, beta, t, n),
        SumMode::MonteCarlo { samples, seed } => monte_carlo_sum(system, beta, t, n, samples, seed),
    }
}

fn enumerate_sum(
    system: &SystemDescriptor,
    beta: &BetaSchedule,
    t: f64,
    n: usize,
) -> Result<TargetSum> {
    system.check_word_cap(1, n)?;
    let mut acc = LogSumAcc::new();
    for word in system.words(1, n) {
        let s = beta.birkhoff(system, &word)?;
        acc.push(-t * s);
    }
    Ok(TargetSum {
        log_sum: acc.log_sum(),
        std_err_log: None,
        word_count: system.word_count(1, n),
    })
}

/// Sample `samples` words uniformly; each sample j draws its symbols from
/// an independent counter-seeded stream, so the estimate is reproducible
/// regardless of evaluation order.
fn monte_carlo_sum(
    system: &SystemDescriptor,
    beta: &BetaSchedule,
    t: f64,
    n: usize,
    samples: u32,
    seed: u64,
) -> Result<TargetSum> {
    if samples == 0 {
        return Err(NifsError::Precondition("Monte Carlo needs ≥ 1 sample".into()));
    }
    let mut exps = Vec::with_capacity(samples as usize);
    for j in 0..samples {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (0x9e37_79b9_7f4a_7c15u64.wrapping_mul(j as u64 + 1)));
        let symbols: Vec<u32> = (1..=n)
            .map(|k| rng.gen_range(0..system.alphabet_size(k) as u32))
            .collect();
        let word = Word { start: 1, symbols };
        let s = beta.birkhoff(system, &word)?;
        exps.push(-t * s);
    }
    let m = samples as f64;
    let max = exps.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let ys: Vec<f64> = exps.iter().map(|x| (x - max).exp()).collect();
    let mean = ys.iter().sum::<f64>() / m;
    let var = ys.iter().map(|y| (y - mean) * (y - mean)).sum::<f64>() / (m - 1.0).max(1.0);
    let count = system.word_count(1, n);
    let log_sum = count.ln() + max + mean.ln();
    let std_err_log = (var.sqrt() / (mean * m.sqrt())).abs();
    Ok(TargetSum { log_sum, std_err_log: Some(std_err_log), word_count: count })
}

#[derive(Debug, Clone, Serialize)]
pub struct PressureEntry {
    pub n: usize,
    pub log_sum: f64,
    /// (1/n)·log_sum — the finite-horizon pressure at this n.
    pub over_n: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct PressureCurve {
    pub t: f64,
    pub entries: Vec<PressureEntry>,
    /// Trailing-half window over which the upper/lower estimates are taken.
    pub window_lo: usize,
    pub window_hi: usize,
    /// max of over_n across the window (upper-pressure estimate).
    pub upper: f64,
    /// min of over_n across the window (lower-pressure estimate).
    pub lower: f64,
    /// Regression of log_sum against n over the window; the slope is the
    /// preferred point estimate when r² is near 1.
    pub fit: Option<LineFit>,
}

/// Finite-horizon pressure estimates (1/n)·log Σ for n in [n_min, n_max].
pub fn pressure_curve(
    system: &SystemDescriptor,
    beta: &BetaSchedule,
    t: f64,
    n_min: usize,
    n_max: usize,
    mode: SumMode,
) -> Result<PressureCurve> {
    if n_min < 1 || n_max < n_min + 4 {
        return Err(NifsError::Precondition(
            "pressure curve needs n_min ≥ 1 and n_max ≥ n_min + 4".into(),
        ));
    }
    let mut entries = Vec::with_capacity(n_max - n_min + 1);
    for n in n_min..=n_max {
        let ts = target_sum(system, beta, t, n, mode)?;
        entries.push(PressureEntry { n, log_sum: ts.log_sum, over_n: ts.log_sum / n as f64 });
    }
    let window_lo = n_max - (n_max - n_min) / 2;
    let window: Vec<&PressureEntry> =
        entries.iter().filter(|e| e.n >= window_lo).collect();
    let upper = window.iter().map(|e| e.over_n).fold(f64::NEG_INFINITY, f64::max);
    let lower = window.iter().map(|e| e.over_n).fold(f64::INFINITY, f64::min);
    let xs: Vec<f64> = window.iter().map(|e| e.n as f64).collect();
    let ys: Vec<f64> = window.iter().map(|e| e.log_sum).collect();
    let fit = fit_line(&xs, &ys);
    Ok(PressureCurve { t, entries, window_lo, window_hi: n_max, upper, lower, fit })
}

/// Per-n pressure sequence of the base-Q closed form:
/// (1/n)[(1−t)·Σ_{k≤n} log q_k − t·(a_1 + ⋯ + a_n)].
///
/// For the linear system with alphabets of size q_k, ratios 1/q_k, and
/// β_k = a_k + log q_k, this equals the finite-horizon pressure entry for
/// entry, which makes it a consistency oracle for [`pressure_curve`].
pub fn closed_form_pressure_linear(qs: &[u64], a: &[f64], t: f64, n_max: usize) -> Result<Vec<f64>> {
    if qs.iter().any(|&q| q < 2) {
        return Err(NifsError::Precondition("every q_n must be ≥ 2".into()));
    }
    if a.iter().any(|&x| !(x > 0.0)) {
        return Err(NifsError::Precondition("every a_k must be > 0".into()));
    }
    if qs.len() < n_max || a.len() < n_max {
        return Err(NifsError::Precondition("sequences shorter than the horizon".into()));
    }
    let mut out = Vec::with_capacity(n_max);
    let mut log_q_sum = 0.0;
    let mut alpha = 0.0;
    for n in 1..=n_max {
        log_q_sum += (qs[n - 1] as f64).ln();
        alpha += a[n - 1];
        out.push(((1.0 - t) * log_q_sum - t * alpha) / n as f64);
    }
    Ok(out)
}

/// How the Bowen bracket resolved.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BowenBracketing {
    /// Sign change localized inside [0, t_max].
    Bracketed,
    /// Pressure hit zero within tolerance at the reported t.
    ExactRoot,
    /// Pressure ≥ 0 on the whole bracket: b may exceed t_max.
    UnbracketedAbove,
}

#[derive(Debug, Clone, Serialize)]
pub struct BowenResult {
    pub b: f64,
    pub t_lo: f64,
    pub t_hi: f64,
    /// Pressure witnesses at the bracket ends: p_lo ≥ 0 ≥ p_hi.
    pub p_lo: f64,
    pub p_hi: f64,
    pub tol: f64,
    pub horizon: usize,
    pub bracketing: BowenBracketing,
}

/// Bowen parameter of a fixed-horizon pressure evaluator: the sign change
/// of t ↦ P_n(t) on [0, t_max], found by bisection to width ≤ tol.
pub fn bowen_parameter<F>(
    mut pressure_at: F,
    t_max: f64,
    tol: f64,
    horizon: usize,
) -> Result<BowenResult>
where
    F: FnMut(f64) -> Result<f64>,
{
    let root = bisect_decreasing(&mut pressure_at, 0.0, t_max, tol, PRESSURE_ZERO_TOL)?;
    let bracketing = match root.bracketing {
        Bracketing::Interior => BowenBracketing::Bracketed,
        Bracketing::ExactRoot => BowenBracketing::ExactRoot,
        Bracketing::UnbracketedAbove => BowenBracketing::UnbracketedAbove,
        Bracketing::NegativeAtLo => {
            // pressure at 0 is log of the word-growth rate, ≥ log 2 for
            // alphabets of size ≥ 2 — a negative value means a broken β
            return Err(NifsError::Inconsistent(
                "pressure is negative at t = 0; no Bowen parameter in [0, t_max]".into(),
            ));
        }
    };
    Ok(BowenResult {
        b: root.root,
        t_lo: root.lo,
        t_hi: root.hi,
        p_lo: root.f_lo,
        p_hi: root.f_hi,
        tol,
        horizon,
        bracketing,
    })
}

/// Bowen parameter of the system at a fixed horizon: the evaluator is
/// t ↦ (1/horizon)·log Σ_{ω∈I^horizon} e^{−t·S_horizon β}.
pub fn bowen_for_system(
    system: &SystemDescriptor,
    beta: &BetaSchedule,
    horizon: usize,
    t_max: f64,
    tol: f64,
    mode: SumMode,
) -> Result<BowenResult> {
    if horizon < 1 {
        return Err(NifsError::Precondition("horizon must be ≥ 1".into()));
    }
    bowen_parameter(
        |t| Ok(target_sum(system, beta, t, horizon, mode)?.log_sum / horizon as f64),
        t_max,
        tol,
        horizon,
    )
}
