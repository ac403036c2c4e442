//! Shrinking-target balls, cover-sum diagnostics, the nested Moran tree
//! of target balls with its equal-split mass distribution, and point
//! sampling from the tree support.

use crate::conditions::{resolve_anchors, NeqResult};
use crate::error::{NifsError, Result};
use crate::geom::{dist, Point};
use crate::ifs::{MapDescriptor, SystemDescriptor, Word};
use crate::numeric::fit_line;
use crate::pressure::{target_sum, BetaSchedule, SumMode};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

/// Everything the ball construction needs besides the word: resolved
/// anchors x^{(n)} and the constants entering the containment threshold.
pub struct TargetSetup<'a> {
    pub system: &'a SystemDescriptor,
    pub beta: &'a BetaSchedule,
    pub anchors: NeqResult,
    pub alpha_lo: f64,
    pub alpha_hi: f64,
    pub theta: f64,
    pub bdp_k: f64,
}

impl<'a> TargetSetup<'a> {
    /// Resolve anchors and ESC constants up to word length `n_max`.
    pub fn prepare(
        system: &'a SystemDescriptor,
        beta: &'a BetaSchedule,
        n_max: usize,
    ) -> Result<Self> {
        let anchors = resolve_anchors(system, n_max)?;
        let closure = system.prefix.len() + system.structural_period();
        let mut alpha_lo = f64::INFINITY;
        let mut alpha_hi = f64::NEG_INFINITY;
        for k in 1..=closure.max(2) {
            let (blo, bhi) = beta.level_bounds(k);
            let (klo, khi) = system.level(k).kappa_level();
            alpha_lo = alpha_lo.min(blo + klo.ln());
            alpha_hi = alpha_hi.max(bhi + khi.ln());
        }
        let theta = system.theta();
        let bdp_k = crate::conditions::bdp_constant(system).1;
        Ok(TargetSetup { system, beta, anchors, alpha_lo, alpha_hi, theta, bdp_k })
    }

    pub fn anchor(&self, n: usize) -> Result<&Point> {
        self.anchors.anchors.get(n).ok_or_else(|| {
            NifsError::Precondition(format!("anchor x^({n}) was not resolved up front"))
        })
    }

    /// The target ball B_ω = B(φ_ω(x^{(n)}), e^{−S_nβ(ωξ^{(n)})}).
    pub fn target_ball(&self, word: &Word) -> Result<TargetBall> {
        let n = word.len();
        if word.start != 1 || n == 0 {
            return Err(NifsError::Precondition(
                "target balls are indexed by non-empty words starting at level 1".into(),
            ));
        }
        let anchor = self.anchor(n)?;
        let center = self.system.eval_word(word, anchor)?;
        let log_radius = -self.beta.birkhoff(self.system, word)?;
        // B_ω ⊂ φ_ω(X) once n ≥ K/(ε·α̲)
        let eps = self.anchors.epsilon;
        let threshold = self.bdp_k / (eps * self.alpha_lo);
        let containment = self.alpha_lo > 0.0 && (n as f64) >= threshold;
        Ok(TargetBall { word: word.clone(), center, log_radius, containment })
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct TargetBall {
    pub word: Word,
    pub center: Point,
    pub log_radius: f64,
    /// Whether the length threshold guaranteeing B_ω ⊂ φ_ω(X) is met.
    pub containment: bool,
}

impl TargetBall {
    pub fn radius(&self) -> f64 {
        self.log_radius.exp()
    }
}

// ---------------------------------------------------------------------------
// cover sums
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct CoverTailSum {
    pub t: f64,
    pub from_n: usize,
    pub horizon: usize,
    /// log of the per-n term 2^t·Σ_{ω∈I^n} e^{−t·S_nβ}.
    pub log_terms: Vec<(usize, f64)>,
    /// Σ of the terms (linear domain; may overflow to inf when diverging).
    pub value: f64,
    /// Fitted per-step ratio of consecutive terms.
    pub ratio: f64,
    /// Finite-horizon pressure (1/horizon)·log Σ at t.
    pub pressure_at_t: f64,
    pub converges: bool,
    pub diverges: bool,
    /// 2^t·Σ_{n≥N} e^{(n/2)·P}: the geometric tail bound that the cover
    /// argument compares against, present when the pressure is negative.
    pub tail_bound_half_pressure: Option<f64>,
}

/// Σ_{n=N}^{horizon} 2^t Σ_{ω∈I^n} e^{−t·S_nβ(ωξ^{(n)})} with per-n terms
/// and a fitted geometric ratio.
pub fn cover_tail_sum(
    system: &SystemDescriptor,
    beta: &BetaSchedule,
    t: f64,
    from_n: usize,
    horizon: usize,
) -> Result<CoverTailSum> {
    if !(t > 0.0) {
        return Err(NifsError::Precondition("cover sums need t > 0".into()));
    }
    if horizon < from_n {
        return Err(NifsError::Precondition("horizon must be ≥ N".into()));
    }
    let log2t = t * 2.0f64.ln();
    let mut log_terms = Vec::with_capacity(horizon - from_n + 1);
    let mut value = 0.0f64;
    for n in from_n..=horizon {
        let ts = target_sum(system, beta, t, n, SumMode::Exact)?;
        let lt = log2t + ts.log_sum;
        log_terms.push((n, lt));
        value += lt.exp();
    }
    let xs: Vec<f64> = log_terms.iter().map(|(n, _)| *n as f64).collect();
    let ys: Vec<f64> = log_terms.iter().map(|(_, v)| *v).collect();
    let ratio = fit_line(&xs, &ys).map(|f| f.slope.exp()).unwrap_or(f64::NAN);
    let pressure_at_t =
        target_sum(system, beta, t, horizon, SumMode::Exact)?.log_sum / horizon as f64;
    let converges = pressure_at_t < -1e-12;
    let diverges = pressure_at_t > 1e-12;
    let tail_bound_half_pressure = if converges {
        let half = 0.5 * pressure_at_t;
        Some((log2t + (from_n as f64) * half).exp() / (1.0 - half.exp()))
    } else {
        None
    };
    Ok(CoverTailSum {
        t,
        from_n,
        horizon,
        log_terms,
        value,
        ratio,
        pressure_at_t,
        converges,
        diverges,
        tail_bound_half_pressure,
    })
}

// ---------------------------------------------------------------------------
// Moran schedule
// ---------------------------------------------------------------------------

/// Constants feeding the schedule inequalities.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct MoranConstants {
    pub theta: f64,
    pub alpha_lo: f64,
    pub alpha_hi: f64,
    pub ahlfors_c: f64,
    pub h: f64,
    /// P(t) at the Frostman exponent; required by the pressure-linked rules.
    pub pressure_at_t: Option<f64>,
    /// The additive constant in the 4h/P rule (any positive value works).
    pub growth_const: f64,
}

impl MoranConstants {
    pub fn validate(&self, need_pressure: bool) -> Result<()> {
        if !(self.theta > 0.0 && self.alpha_lo > 0.0 && self.alpha_hi > 0.0) {
            return Err(NifsError::Precondition(format!(
                "schedule constants must be positive: θ = {}, α̲ = {}, ᾱ = {}",
                self.theta, self.alpha_lo, self.alpha_hi
            )));
        }
        if self.alpha_hi < self.alpha_lo {
            return Err(NifsError::Precondition("ᾱ must dominate α̲".into()));
        }
        if self.ahlfors_c < 1.0 {
            return Err(NifsError::Precondition("Ahlfors constant must be ≥ 1".into()));
        }
        if !(self.h > 0.0) {
            return Err(NifsError::Precondition("h must be positive".into()));
        }
        if need_pressure {
            match self.pressure_at_t {
                Some(p) if p > 0.0 => {}
                other => {
                    return Err(NifsError::Precondition(format!(
                        "pressure-linked schedule rules need P(t) > 0; got {other:?}"
                    )))
                }
            }
        }
        Ok(())
    }
}

/// Which lower-bound rules constrain each n_{l+1}.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct GrowthRules {
    /// n_{l+1} ≥ θ^{−1}[log 2 + n_l(ᾱ+θ)] — the half-ball dichotomy.
    pub dichotomy: bool,
    /// n_{l+1} ≥ θ^{−1}[h^{−1}·log C + n_l(θ+ᾱ)] — non-empty child sets.
    pub nonempty: bool,
    /// n_{l+1} ≥ (4h/P)(const + ᾱ·Σ_{k≤l} n_k).
    pub pressure4h: bool,
    /// n_{l+1} ≥ (6h/P)[(l+1)·log C + ᾱ·Σ_{k≤l} n_k].
    pub pressure6h: bool,
    /// n_{l+1} ≥ (4h·log C/P)·(l+1) — keeps n_l ≫ l.
    pub supra_linear: bool,
}

impl GrowthRules {
    pub fn dichotomy_and_nonempty() -> Self {
        GrowthRules {
            dichotomy: true,
            nonempty: true,
            pressure4h: false,
            pressure6h: false,
            supra_linear: false,
        }
    }

    fn needs_pressure(&self) -> bool {
        self.pressure4h || self.pressure6h || self.supra_linear
    }
}

#[derive(Debug, Clone, Serialize)]
pub enum MoranVariant {
    /// n_{l+1} is the least integer satisfying every enabled rule (or a
    /// supplied schedule re-checked against them).
    GrowthChecked { n1: usize, rules: GrowthRules, supplied: Option<Vec<usize>> },
    /// n_{l+1} = min{ n | n·A ≥ α̲·(n_1 + ⋯ + n_l) }.
    ARatio { n1: usize, a: f64 },
}

#[derive(Debug, Clone, Serialize)]
pub struct ScheduleCert {
    pub l: usize,
    pub n: usize,
    /// (rule name, required lower bound, satisfied).
    pub bounds: Vec<(String, f64, bool)>,
}

#[derive(Debug, Clone, Serialize)]
pub struct MoranSchedule {
    pub levels: Vec<usize>,
    pub constants: MoranConstants,
    pub certificates: Vec<ScheduleCert>,
    /// For ARatio: the admissibility ceiling (P/(6h))·α̲/(log C + ᾱ).
    pub a_bound: Option<f64>,
    pub a: Option<f64>,
}

/// Generate (or check) the increasing horizon subsequence (n_l).
pub fn moran_schedule(
    constants: MoranConstants,
    variant: MoranVariant,
    l_max: usize,
) -> Result<MoranSchedule> {
    if l_max < 1 {
        return Err(NifsError::Precondition("need at least one level".into()));
    }
    match variant {
        MoranVariant::GrowthChecked { n1, rules, supplied } => {
            constants.validate(rules.needs_pressure())?;
            if n1 < 1 {
                return Err(NifsError::Precondition("n_1 must be ≥ 1".into()));
            }
            let mut levels = vec![n1];
            let mut certificates = Vec::new();
            let mut sum: f64 = n1 as f64;
            for l in 1..l_max {
                let n_prev = levels[l - 1];
                let bounds = rule_bounds(&constants, &rules, n_prev, sum, l);
                let required =
                    bounds.iter().map(|(_, b, _)| *b).fold(0.0f64, f64::max);
                let next = match &supplied {
                    Some(ns) => {
                        let n = *ns.get(l).ok_or_else(|| {
                            NifsError::Precondition("supplied schedule too short".into())
                        })?;
                        if (n as f64) < required || n <= n_prev {
                            return Err(NifsError::Precondition(format!(
                                "supplied n_{} = {n} violates a schedule rule (need ≥ {})",
                                l + 1,
                                required.max((n_prev + 1) as f64)
                            )));
                        }
                        n
                    }
                    None => (required.max((n_prev + 1) as f64)).ceil() as usize,
                };
                let checked = rule_bounds(&constants, &rules, n_prev, sum, l)
                    .into_iter()
                    .map(|(name, b, _)| (name, b, next as f64 >= b))
                    .collect();
                certificates.push(ScheduleCert { l: l + 1, n: next, bounds: checked });
                levels.push(next);
                sum += next as f64;
            }
            if let Some(ns) = supplied {
                if ns.first() != levels.first() {
                    return Err(NifsError::Precondition(
                        "supplied schedule must start at n1".into(),
                    ));
                }
            }
            Ok(MoranSchedule { levels, constants, certificates, a_bound: None, a: None })
        }
        MoranVariant::ARatio { n1, a } => {
            constants.validate(false)?;
            if !(a > 0.0) {
                return Err(NifsError::Precondition("A must be positive".into()));
            }
            if a >= constants.alpha_lo {
                return Err(NifsError::Precondition(format!(
                    "A = {a} must be < α̲ = {} for the schedule to increase",
                    constants.alpha_lo
                )));
            }
            let a_bound = constants.pressure_at_t.map(|p| {
                (p / (6.0 * constants.h)) * constants.alpha_lo
                    / (constants.ahlfors_c.ln() + constants.alpha_hi)
            });
            let mut levels = vec![n1.max(1)];
            let mut certificates = Vec::new();
            let mut sum = levels[0] as f64;
            for l in 1..l_max {
                // least integer n with n·A ≥ α̲·Σ_{k≤l} n_k
                let target = constants.alpha_lo * sum / a;
                let mut n = target.ceil();
                while (n - 1.0) * a >= constants.alpha_lo * sum {
                    n -= 1.0;
                }
                while n * a < constants.alpha_lo * sum {
                    n += 1.0;
                }
                let n = n as usize;
                certificates.push(ScheduleCert {
                    l: l + 1,
                    n,
                    bounds: vec![("aratio".into(), target, true)],
                });
                levels.push(n);
                sum += n as f64;
            }
            Ok(MoranSchedule { levels, constants, certificates, a_bound, a: Some(a) })
        }
    }
}

fn rule_bounds(
    c: &MoranConstants,
    rules: &GrowthRules,
    n_prev: usize,
    sum: f64,
    l: usize,
) -> Vec<(String, f64, bool)> {
    let mut out = Vec::new();
    let np = n_prev as f64;
    if rules.dichotomy {
        let b = (2.0f64.ln() + np * (c.alpha_hi + c.theta)) / c.theta;
        out.push(("dichotomy".to_string(), b, true));
    }
    if rules.nonempty {
        let b = (c.ahlfors_c.ln() / c.h + np * (c.theta + c.alpha_hi)) / c.theta;
        out.push(("nonempty".to_string(), b, true));
    }
    if let Some(p) = c.pressure_at_t {
        if rules.pressure4h {
            let b = 4.0 * c.h / p * (c.growth_const + c.alpha_hi * sum);
            out.push(("pressure4h".to_string(), b, true));
        }
        if rules.pressure6h {
            let b = 6.0 * c.h / p * ((l as f64 + 1.0) * c.ahlfors_c.ln() + c.alpha_hi * sum);
            out.push(("pressure6h".to_string(), b, true));
        }
        if rules.supra_linear {
            let b = 4.0 * c.h * c.ahlfors_c.ln() / p * (l as f64 + 1.0);
            out.push(("supra_linear".to_string(), b, true));
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Moran tree
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct MoranNode {
    pub word: Word,
    pub center: Point,
    pub log_radius: f64,
    /// Mass per the equal-split rule, computed from true child counts.
    pub mass: f64,
    /// Index of the parent in the previous level (root level: none).
    pub parent: Option<usize>,
    /// True number of children found for this node (filled at the next
    /// level; may exceed the number materialized when sampling kicked in).
    pub true_child_count: u64,
    pub kept_child_count: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct MoranLevel {
    /// Word length n_l at this level.
    pub n: usize,
    pub nodes: Vec<MoranNode>,
    /// Whether any parent's child list was down-sampled to the cap.
    pub sampled: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct MoranTree {
    pub schedule: MoranSchedule,
    pub levels: Vec<MoranLevel>,
}

impl MoranTree {
    pub fn leaves(&self) -> &[MoranNode] {
        &self.levels.last().expect("tree has levels").nodes
    }

    /// Sum of materialized masses at each level (1 when nothing was
    /// down-sampled).
    pub fn level_mass(&self, l: usize) -> f64 {
        self.levels[l].nodes.iter().map(|n| n.mass).sum()
    }

    /// ℓ(r): the smallest l with max_τ e^{−S_{n_{l+1}}β(τξ)} ≤ r.
    /// Diagnostic from the mass-scaling proof; None when no level
    /// qualifies at this depth.
    pub fn ell_of_r(&self, r: f64) -> Option<usize> {
        for l in 0..self.levels.len() - 1 {
            let max_r = self.levels[l + 1]
                .nodes
                .iter()
                .map(|n| n.log_radius)
                .fold(f64::NEG_INFINITY, f64::max);
            if max_r.exp() <= r {
                return Some(l + 1);
            }
        }
        None
    }
}

/// 1-D affine composition state: φ(x) = a·x + b.
#[derive(Clone, Copy)]
struct Affine1D {
    a: f64,
    b: f64,
}

impl Affine1D {
    fn identity() -> Self {
        Affine1D { a: 1.0, b: 0.0 }
    }
    fn then(&self, map: &MapDescriptor) -> Option<Affine1D> {
        match map {
            MapDescriptor::Linear { ratio, offset, orth } => {
                let sign = match orth {
                    None => 1.0,
                    Some(sp) => sp.signs[0],
                };
                let (ma, mb) = (ratio * sign, offset[0]);
                // self ∘ map
                Some(Affine1D { a: self.a * ma, b: self.a * mb + self.b })
            }
            MapDescriptor::PerturbedLinear1D { .. } => None,
        }
    }
    fn image(&self, b0: f64, b1: f64) -> (f64, f64) {
        let x = self.a * b0 + self.b;
        let y = self.a * b1 + self.b;
        (x.min(y), x.max(y))
    }
}

/// Children search for one parent ball: every word τ of length `depth`
/// whose ball B_τ lies inside B(center, radius). The descent prunes a
/// prefix only when its cylinder cannot contain any child center (its
/// distance to the parent center exceeds the parent radius), which loses
/// no child of the inclusion test.
fn children_of(
    setup: &TargetSetup,
    depth: usize,
    center: &[f64],
    radius: f64,
) -> Result<Vec<(Word, Point, f64)>> {
    let system = setup.system;
    let mut out = Vec::new();
    let anchor = setup.anchor(depth)?.clone();
    if system.is_linear() && system.dimension == 1 {
        let (d0, d1) = (system.domain.lo[0], system.domain.hi[0]);
        let mut stack: Vec<(Word, Affine1D)> = vec![(Word::empty(1), Affine1D::identity())];
        while let Some((word, aff)) = stack.pop() {
            let k = word.len();
            if k == depth {
                let c = aff.a * anchor[0] + aff.b;
                let log_r = -setup.beta.birkhoff(system, &word)?;
                let r_child = log_r.exp();
                if (c - center[0]).abs() + r_child <= radius {
                    out.push((word, vec![c], log_r));
                }
                continue;
            }
            let fam = system.level(k + 1);
            // iterate symbols in reverse so the stack pops in order
            for s in (0..fam.maps.len() as u32).rev() {
                let next = aff.then(&fam.maps[s as usize]).expect("linear 1-D map");
                let (lo, hi) = next.image(d0, d1);
                let dist_to_center =
                    if center[0] < lo { lo - center[0] } else if center[0] > hi { center[0] - hi } else { 0.0 };
                if dist_to_center <= radius {
                    let mut w = word.clone();
                    w.symbols.push(s);
                    stack.push((w, next));
                }
            }
        }
        // depth-first with reversed push keeps lexicographic order
        out.sort_by(|a, b| a.0.symbols.cmp(&b.0.symbols));
    } else {
        let mut stack: Vec<Word> = vec![Word::empty(1)];
        while let Some(word) = stack.pop() {
            let k = word.len();
            if k == depth {
                let c = system.eval_word(&word, &anchor)?;
                let log_r = -setup.beta.birkhoff(system, &word)?;
                if dist(&c, center) + log_r.exp() <= radius {
                    out.push((word, c, log_r));
                }
                continue;
            }
            let fam = system.level(k + 1);
            for s in (0..fam.maps.len() as u32).rev() {
                let mut w = word.clone();
                w.symbols.push(s);
                let cyl = system.cylinder(&w)?;
                if cyl.distance_to_point(center) <= radius {
                    stack.push(w);
                }
            }
        }
        out.sort_by(|a, b| a.0.symbols.cmp(&b.0.symbols));
    }
    Ok(out)
}

/// Build the nested tree R_1 = I^{n_1}, R_{l+1}(ω) = {τ ∈ I^{n_{l+1}} |
/// B_τ ⊆ B_ω}, with the equal-split mass m_{l+1}(B_τ) =
/// m_l(B_ω)/#R_{l+1}(ω). When a parent has more children than
/// `per_parent_cap`, a uniform sample of exactly the cap is kept and the
/// true count still drives the masses.
pub fn build_moran_tree(
    setup: &TargetSetup,
    schedule: MoranSchedule,
    per_parent_cap: usize,
    seed: u64,
) -> Result<MoranTree> {
    if per_parent_cap == 0 {
        return Err(NifsError::Precondition("per-parent cap must be ≥ 1".into()));
    }
    let system = setup.system;
    let n1 = schedule.levels[0];
    system.check_word_cap(1, n1)?;

    // root level: all words of length n_1
    let mut root_nodes = Vec::new();
    for word in system.words(1, n1) {
        let ball = setup.target_ball(&word)?;
        root_nodes.push(MoranNode {
            word,
            center: ball.center,
            log_radius: ball.log_radius,
            mass: 0.0,
            parent: None,
            true_child_count: 0,
            kept_child_count: 0,
        });
    }
    let root_count = root_nodes.len();
    for node in &mut root_nodes {
        node.mass = 1.0 / root_count as f64;
    }
    let mut levels = vec![MoranLevel { n: n1, nodes: root_nodes, sampled: false }];

    for l in 1..schedule.levels.len() {
        let depth = schedule.levels[l];
        let parents: Vec<(usize, Point, f64, f64)> = levels[l - 1]
            .nodes
            .iter()
            .enumerate()
            .map(|(i, p)| (i, p.center.clone(), p.log_radius.exp(), p.mass))
            .collect();
        let found: Vec<Result<Vec<(Word, Point, f64)>>> = parents
            .par_iter()
            .map(|(_, c, r, _)| children_of(setup, depth, c, *r))
            .collect();

        let mut nodes = Vec::new();
        let mut sampled = false;
        for ((pi, _, _, pmass), children) in parents.iter().zip(found) {
            let children = children?;
            let true_count = children.len() as u64;
            if true_count == 0 {
                let parent = &levels[l - 1].nodes[*pi];
                return Err(NifsError::Construction(format!(
                    "R_{}(ω) is empty for parent word {:?} at n_{} = {}: schedule \
                     constants are too weak for a child at n_{} = {}",
                    l + 1,
                    parent.word.symbols,
                    l,
                    schedule.levels[l - 1],
                    l + 1,
                    depth
                )));
            }
            let kept: Vec<(Word, Point, f64)> = if children.len() > per_parent_cap {
                sampled = true;
                let mut rng = ChaCha8Rng::seed_from_u64(
                    seed ^ ((l as u64) << 32) ^ (*pi as u64).wrapping_mul(0x9e37_79b9),
                );
                let mut idx: Vec<usize> = (0..children.len()).collect();
                // partial Fisher-Yates: uniform sample of exactly the cap
                for i in 0..per_parent_cap {
                    let j = rng.gen_range(i..idx.len());
                    idx.swap(i, j);
                }
                let mut picked: Vec<usize> = idx[..per_parent_cap].to_vec();
                picked.sort_unstable();
                let mut children = children;
                let mut out = Vec::with_capacity(per_parent_cap);
                for &i in picked.iter().rev() {
                    out.push(children.swap_remove(i));
                }
                out.reverse();
                out.sort_by(|a, b| a.0.symbols.cmp(&b.0.symbols));
                out
            } else {
                children
            };
            let child_mass = pmass / true_count as f64;
            let kept_count = kept.len() as u64;
            {
                let parent = &mut levels[l - 1].nodes[*pi];
                parent.true_child_count = true_count;
                parent.kept_child_count = kept_count;
            }
            for (word, center, log_radius) in kept {
                nodes.push(MoranNode {
                    word,
                    center,
                    log_radius,
                    mass: child_mass,
                    parent: Some(*pi),
                    true_child_count: 0,
                    kept_child_count: 0,
                });
            }
        }
        levels.push(MoranLevel { n: depth, nodes, sampled });
    }

    let tree = MoranTree { schedule, levels };
    // nesting invariant: every node ball inside its parent ball
    for l in 1..tree.levels.len() {
        for node in &tree.levels[l].nodes {
            let p = &tree.levels[l - 1].nodes[node.parent.unwrap()];
            let gap = dist(&node.center, &p.center) + node.log_radius.exp();
            if gap > p.log_radius.exp() + 1e-12 {
                return Err(NifsError::Construction(format!(
                    "nesting violated at level {} word {:?}",
                    l + 1,
                    node.word.symbols
                )));
            }
        }
    }
    Ok(tree)
}

/// Exhaustively count counterexamples to the half-ball dichotomy between
/// consecutive tree levels: words τ at the child depth whose cylinder
/// meets ½B_ω but escapes B_ω.
pub fn dichotomy_counterexamples(
    setup: &TargetSetup,
    tree: &MoranTree,
    level: usize,
) -> Result<u64> {
    let system = setup.system;
    let depth = tree.levels[level + 1].n;
    system.check_word_cap(1, depth)?;
    let mut bad = 0u64;
    for parent in &tree.levels[level].nodes {
        let r = parent.log_radius.exp();
        for tau in system.words(1, depth) {
            let cyl = system.cylinder(&tau)?;
            let meets_half = cyl.distance_to_point(&parent.center) <= 0.5 * r;
            if !meets_half {
                continue;
            }
            let inside = cyl
                .lo
                .iter()
                .zip(&cyl.hi)
                .zip(&parent.center)
                .all(|((lo, hi), c)| (lo - c).abs() <= r && (hi - c).abs() <= r);
            // inside for a box means every corner within r of the center;
            // in 1-D both endpoints suffice
            if !inside {
                bad += 1;
            }
        }
    }
    Ok(bad)
}

/// Draw `count` leaf centers with probability proportional to mass. When
/// nothing was down-sampled and `count` equals the number of leaves, the
/// exact list of leaf centers is returned instead.
pub fn sample_target_points(tree: &MoranTree, count: usize, seed: u64) -> Vec<Point> {
    let leaves = tree.leaves();
    let no_caps = tree.levels.iter().all(|l| !l.sampled);
    if no_caps && count == leaves.len() {
        return leaves.iter().map(|n| n.center.clone()).collect();
    }
    let total: f64 = leaves.iter().map(|n| n.mass).sum();
    let mut cdf = Vec::with_capacity(leaves.len());
    let mut acc = 0.0;
    for n in leaves {
        acc += n.mass;
        cdf.push(acc);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let u = rng.gen_range(0.0..total);
            let i = cdf.partition_point(|&c| c < u).min(leaves.len() - 1);
            leaves[i].center.clone()
        })
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct FrostmanFit {
    /// Fitted slope of log max-mass against log r.
    pub exponent: f64,
    pub per_radius: Vec<(f64, f64)>,
    pub centers_used: usize,
}

/// Empirical Frostman exponent of the tree mass: for each radius, the max
/// over leaf centers of m(B(x, r)) from the materialized leaf masses,
/// then the fitted slope of log m against log r.
pub fn frostman_scaling(tree: &MoranTree, radii: &[f64]) -> Result<FrostmanFit> {
    if tree.levels.len() < 3 {
        return Err(NifsError::Precondition("Frostman scaling needs ≥ 3 tree levels".into()));
    }
    if radii.len() < 2 || radii.iter().any(|r| !(*r > 0.0)) {
        return Err(NifsError::Precondition("need ≥ 2 positive radii".into()));
    }
    let leaves = tree.leaves();
    // cap the center set deterministically
    let max_centers = 256.min(leaves.len());
    let stride = (leaves.len() / max_centers).max(1);
    let centers: Vec<&MoranNode> = leaves.iter().step_by(stride).take(max_centers).collect();
    let mut per_radius = Vec::with_capacity(radii.len());
    for &r in radii {
        let mut best = 0.0f64;
        for c in &centers {
            let mut m = 0.0;
            for leaf in leaves {
                if dist(&leaf.center, &c.center) <= r + leaf.log_radius.exp() {
                    m += leaf.mass;
                }
            }
            best = best.max(m);
        }
        per_radius.push((r, best));
    }
    let xs: Vec<f64> = per_radius.iter().map(|(r, _)| r.ln()).collect();
    let ys: Vec<f64> = per_radius.iter().map(|(_, m)| if *m > 0.0 { m.ln() } else { f64::NEG_INFINITY }).collect();
    if ys.iter().any(|y| !y.is_finite()) {
        return Err(NifsError::Precondition("degenerate radii grid: empty balls".into()));
    }
    let fit = fit_line(&xs, &ys)
        .ok_or_else(|| NifsError::Precondition("degenerate radii grid".into()))?;
    Ok(FrostmanFit { exponent: fit.slope, per_radius, centers_used: centers.len() })
}
